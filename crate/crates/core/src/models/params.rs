/// Flat, row-major parameter tables. Tables a model kind does not use are empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
    /// One angle per 2x2 block, `N_r x d/2`.
    pub rotation: Vec<f64>,
    /// Unconstrained curvature parameters (`c = softplus(raw)`).
    pub curvature: Vec<f64>,
    pub bias_head: Vec<f64>,
    pub bias_tail: Vec<f64>,
}

pub const TABLE_NAMES: [&str; 6] = ["entity", "relation", "rotation", "curvature", "bias_head", "bias_tail"];

impl ModelParams {
    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.entity,
            &self.relation,
            &self.rotation,
            &self.curvature,
            &self.bias_head,
            &self.bias_tail,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.entity,
            &mut self.relation,
            &mut self.rotation,
            &mut self.curvature,
            &mut self.bias_head,
            &mut self.bias_tail,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entity: vec![0.0; self.entity.len()],
            relation: vec![0.0; self.relation.len()],
            rotation: vec![0.0; self.rotation.len()],
            curvature: vec![0.0; self.curvature.len()],
            bias_head: vec![0.0; self.bias_head.len()],
            bias_tail: vec![0.0; self.bias_tail.len()],
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenation of all tables in [`TABLE_NAMES`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Inverse of [`Self::flatten`]; `flat` must have length [`Self::len`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len());
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}

/// Sparse gradient contributions produced by one or more backward passes.
#[derive(Debug, Clone, Default)]
pub struct ModelGrad {
    pub entity: Vec<(u32, Vec<f64>)>,
    pub relation: Vec<(u32, Vec<f64>)>,
    pub rotation: Vec<(u32, Vec<f64>)>,
    pub curvature: Vec<(u32, f64)>,
    pub bias_head: Vec<(u32, f64)>,
    pub bias_tail: Vec<(u32, f64)>,
}

impl ModelGrad {
    pub fn clear(&mut self) {
        self.entity.clear();
        self.relation.clear();
        self.rotation.clear();
        self.curvature.clear();
        self.bias_head.clear();
        self.bias_tail.clear();
    }

    /// Adds `scale` times every contribution into the dense tables, in the
    /// order they were recorded.
    pub fn add_into(&self, dense: &mut ModelParams, scale: f64) {
        fn rows(dst: &mut [f64], src: &[(u32, Vec<f64>)], scale: f64) {
            for (id, row) in src {
                let w = row.len();
                let start = *id as usize * w;
                for (d, s) in dst[start..start + w].iter_mut().zip(row) {
                    *d += scale * s;
                }
            }
        }
        fn scalars(dst: &mut [f64], src: &[(u32, f64)], scale: f64) {
            for (id, v) in src {
                dst[*id as usize] += scale * v;
            }
        }
        rows(&mut dense.entity, &self.entity, scale);
        rows(&mut dense.relation, &self.relation, scale);
        rows(&mut dense.rotation, &self.rotation, scale);
        scalars(&mut dense.curvature, &self.curvature, scale);
        scalars(&mut dense.bias_head, &self.bias_head, scale);
        scalars(&mut dense.bias_tail, &self.bias_tail, scale);
    }

    /// Dense copy shaped like `like`.
    pub fn to_dense(&self, like: &ModelParams) -> ModelParams {
        let mut out = like.zeros_like();
        self.add_into(&mut out, 1.0);
        out
    }
}
