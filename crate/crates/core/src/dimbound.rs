//! Minimum embedding dimension from the minimum-entropy argument.
//!
//! Embeddings are modelled as points on a sphere of radius `sqrt(d)`, so the
//! squared distance between two of them is `2d(1 - η)` with `η` the cosine of
//! their angle. The model entropy then reduces to one-dimensional
//! expectations over the angle density, evaluated here with composite
//! Gauss-Legendre quadrature in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slope constant reported for the entropy line `h_d ≈ ε d`.
pub const PUBLISHED_EPSILON: f64 = -0.471;
/// Default quadrature resolution.
pub const DEFAULT_NODES: usize = 200_000;
/// Smallest accepted quadrature resolution.
pub const MIN_NODES: usize = 10_000;
/// Maximum change of `H_M` allowed when the node count is doubled.
pub const ENTROPY_TOLERANCE: f64 = 1e-6;
/// Dimensions used for the default slope fit.
pub const FIT_DIMS: [usize; 5] = [8, 16, 32, 64, 128];

const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub epsilon: f64,
    pub alpha_dim: f64,
    pub nodes: usize,
}

impl BoundParams {
    /// Parameters with `alpha_dim = -1/epsilon`.
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon < 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("slope constant must be negative, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            alpha_dim: -1.0 / epsilon,
            nodes: DEFAULT_NODES,
        })
    }

    /// The published constant `ε = -0.471` (so `α ≈ 2.123`).
    pub fn published() -> Self {
        Self::from_epsilon(PUBLISHED_EPSILON).expect("negative constant")
    }
}

/// Sign of the exponent in the pair plausibility `exp(±D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltSign {
    /// `exp(+D)`, the form the derivation writes down.
    AsWritten,
    /// `exp(-D)`, closer points more plausible.
    Negated,
}

impl TiltSign {
    fn factor(self) -> f64 {
        match self {
            TiltSign::AsWritten => 1.0,
            TiltSign::Negated => -1.0,
        }
    }
}

fn log_density_norm(d: usize) -> f64 {
    let d = d as f64;
    libm::lgamma(d / 2.0) - libm::lgamma((d - 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()
}

/// Log of the angle-cosine density; `-inf` at `η = ±1` for `d > 3`.
fn log_angle_density(eta: f64, d: usize, log_norm: f64) -> f64 {
    if d == 3 {
        return log_norm;
    }
    let one_minus = (1.0 - eta) * (1.0 + eta);
    log_norm + (d as f64 - 3.0) / 2.0 * one_minus.ln()
}

/// Density of the cosine of the angle between two uniform directions in `R^d`:
/// `Γ(d/2) / (Γ((d-1)/2) √π) · (1 - η²)^((d-3)/2)`.
pub fn angle_density(eta: f64, d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::Config(format!("angle density needs d >= 3, got {d}")));
    }
    if !(-1.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("cosine {eta} outside [-1, 1]")));
    }
    Ok(log_angle_density(eta, d, log_density_norm(d)).exp())
}

/// Gauss-Legendre nodes and weights of order `n` on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn_1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn_1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[-1, 1]` with about `total` nodes.
/// Panel edges sit at `-cos(π j / P)`, so panels shrink towards the endpoints
/// where the density has its algebraic singularities.
pub fn composite_rule(total: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = total.div_ceil(PANEL_ORDER).max(1);
    let (base_x, base_w) = gauss_legendre(PANEL_ORDER);
    let mut xs = Vec::with_capacity(panels * PANEL_ORDER);
    let mut ws = Vec::with_capacity(panels * PANEL_ORDER);
    let edge = |j: usize| -(std::f64::consts::PI * j as f64 / panels as f64).cos();
    for j in 0..panels {
        let (a, b) = (edge(j), edge(j + 1));
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in base_x.iter().zip(&base_w) {
            xs.push(mid + half * x);
            ws.push(half * w);
        }
    }
    (xs, ws)
}

/// Integral of the angle density over `[-1, 1]` with the composite rule.
pub fn density_mass(d: usize, nodes: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::Config(format!("angle density needs d >= 3, got {d}")));
    }
    let (xs, ws) = composite_rule(nodes);
    let norm = log_density_norm(d);
    Ok(xs
        .iter()
        .zip(&ws)
        .map(|(&x, &w)| w * log_angle_density(x, d, norm).exp())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub d: usize,
    /// `ln N` with `N = N_e² N_r`.
    pub log_n: f64,
    pub h_m: f64,
    /// `H_M - ln N`; does not depend on `N`.
    pub h_d: f64,
    /// `|h_d(2n) - h_d(n)|` from the doubling check.
    pub residual: f64,
}

/// `ln E[e^{sD}] - E[e^{sD} D] / E[e^{sD}]` with `D = 2d(1-η)`.
fn entropy_offset(d: usize, nodes: usize, sign: TiltSign) -> f64 {
    let (xs, ws) = composite_rule(nodes);
    let norm = log_density_norm(d);
    let s = sign.factor();
    let two_d = 2.0 * d as f64;
    let mut logs = Vec::with_capacity(xs.len());
    let mut dists = Vec::with_capacity(xs.len());
    for (&x, &w) in xs.iter().zip(&ws) {
        let dist = two_d * (1.0 - x);
        let lp = log_angle_density(x, d, norm);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        logs.push(w.ln() + lp + s * dist);
        dists.push(dist);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (l, dist) in logs.iter().zip(&dists) {
        let e = (l - max).exp();
        sum += e;
        weighted += e * dist;
    }
    let log_a = max + sum.ln();
    log_a - weighted / sum
}

pub fn log_pair_count(num_entities: f64, num_relations: f64) -> f64 {
    2.0 * num_entities.ln() + num_relations.ln()
}

/// Model entropy `H_M ≈ ln N + ln A - B/A` at dimension `d`, with a
/// node-doubling convergence check.
pub fn model_entropy(d: usize, num_entities: f64, num_relations: f64, nodes: usize, sign: TiltSign) -> Result<EntropyEstimate> {
    if d < 3 {
        return Err(Error::Config(format!("entropy estimate needs d >= 3, got {d}")));
    }
    if nodes < MIN_NODES {
        return Err(Error::Config(format!("need at least {MIN_NODES} quadrature nodes, got {nodes}")));
    }
    let coarse = entropy_offset(d, nodes, sign);
    let fine = entropy_offset(d, 2 * nodes, sign);
    let residual = (fine - coarse).abs();
    if !(residual <= ENTROPY_TOLERANCE) {
        return Err(Error::Quadrature {
            residual,
            tolerance: ENTROPY_TOLERANCE,
        });
    }
    let log_n = log_pair_count(num_entities, num_relations);
    Ok(EntropyEstimate {
        d,
        log_n,
        h_m: log_n + fine,
        h_d: fine,
        residual,
    })
}

/// `α_dim · ln(N_e² N_r)`.
pub fn min_dimension(num_entities: f64, num_relations: f64, params: &BoundParams) -> f64 {
    params.alpha_dim * log_pair_count(num_entities, num_relations)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Config("line fit needs at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("line fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonFit {
    pub sign: TiltSign,
    pub epsilon: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<EntropyEstimate>,
}

impl EpsilonFit {
    /// Relative deviation from the published constant.
    pub fn deviation_from_published(&self) -> f64 {
        (self.epsilon - PUBLISHED_EPSILON).abs() / PUBLISHED_EPSILON.abs()
    }
}

/// Least-squares slope of `h_d` against `d`.
pub fn fit_epsilon(
    d_values: &[usize],
    num_entities: f64,
    num_relations: f64,
    nodes: usize,
    sign: TiltSign,
) -> Result<EpsilonFit> {
    let mut distinct = d_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Config(format!(
            "slope fit needs at least 3 distinct dimensions, got {}",
            distinct.len()
        )));
    }
    let points = distinct
        .iter()
        .map(|&d| model_entropy(d, num_entities, num_relations, nodes, sign))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.d as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.h_d).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(EpsilonFit {
        sign,
        epsilon: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        points,
    })
}

/// One row of the bound table printed by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub num_entities: f64,
    pub num_relations: f64,
    pub log_n: f64,
    pub bound_published: f64,
    pub bound_fitted: f64,
    pub epsilon_hat: f64,
    pub r_squared: f64,
    pub sign: TiltSign,
}

pub fn bound_report(num_entities: f64, num_relations: f64, nodes: usize, sign: TiltSign) -> Result<BoundReport> {
    let fit = fit_epsilon(&FIT_DIMS, num_entities, num_relations, nodes, sign)?;
    let fitted = BoundParams::from_epsilon(fit.epsilon)?;
    Ok(BoundReport {
        num_entities,
        num_relations,
        log_n: log_pair_count(num_entities, num_relations),
        bound_published: min_dimension(num_entities, num_relations, &BoundParams::published()),
        bound_fitted: min_dimension(num_entities, num_relations, &fitted),
        epsilon_hat: fit.epsilon,
        r_squared: fit.r_squared,
        sign,
    })
}
