//! Poincaré-ball primitives with curvature `-c`.
//!
//! Every forward map has a matching `*_backward` that returns the
//! vector-Jacobian product for a given upstream gradient, including the
//! partial derivative with respect to `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interior margin: points satisfy `sqrt(c) * |x| < 1 - BALL_EPS`.
pub const BALL_EPS: f64 = 1e-5;
/// Upper clamp applied to the `artanh` argument of the distance.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-10;
const MIN_DENOM: f64 = 1e-15;

/// Positive curvature magnitude `c`, stored through a softplus of an
/// unconstrained parameter during training.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::Config(format!("curvature must be positive and finite, got {c}")))
        }
    }

    /// Curvature obtained from an unconstrained parameter via softplus.
    pub fn from_raw(raw: f64) -> Self {
        Self(softplus(raw).max(f64::MIN_POSITIVE))
    }

    /// Unconstrained parameter whose softplus equals `c`.
    pub fn raw_for(c: f64) -> f64 {
        // inverse softplus: ln(e^c - 1)
        if c > 30.0 {
            c
        } else {
            c.exp_m1().ln()
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Möbius addition `x ⊕ y`, projected back into the ball.
pub fn mobius_add(x: &[f64], y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    let c = c.value();
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    if den.abs() < MIN_DENOM || !den.is_finite() {
        return Err(Error::Numerical(format!(
            "Möbius addition denominator degenerate ({den:e})"
        )));
    }
    let mut z = mobius_add_raw(x, y, c);
    project_in_place(&mut z, c);
    Ok(z)
}

/// Unprojected Möbius addition; callers guarantee both inputs are in the ball.
pub(crate) fn mobius_add_raw(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = (1.0 + 2.0 * c * xy + c * c * x2 * y2).max(MIN_DENOM);
    x.iter()
        .zip(y)
        .map(|(xi, yi)| (a * xi + b * yi) / den)
        .collect()
}

/// Vector-Jacobian product of [`mobius_add_raw`]: returns `(gx, gy, gc)`.
pub fn mobius_add_backward(x: &[f64], y: &[f64], c: f64, gz: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = (1.0 + 2.0 * c * xy + c * c * x2 * y2).max(MIN_DENOM);

    // z = u / den with u = a x + b y
    let gu: Vec<f64> = gz.iter().map(|g| g / den).collect();
    let gz_dot_u: f64 = gz
        .iter()
        .zip(x.iter().zip(y))
        .map(|(g, (xi, yi))| g * (a * xi + b * yi))
        .sum();
    let g_den = -gz_dot_u / (den * den);
    let g_a = dot(&gu, x);
    let g_b = dot(&gu, y);

    let gx = x
        .iter()
        .zip(y)
        .zip(&gu)
        .map(|((xi, yi), gui)| {
            a * gui + g_a * 2.0 * c * yi - g_b * 2.0 * c * xi
                + g_den * (2.0 * c * yi + 2.0 * c * c * y2 * xi)
        })
        .collect();
    let gy = x
        .iter()
        .zip(y)
        .zip(&gu)
        .map(|((xi, yi), gui)| {
            b * gui + g_a * (2.0 * c * xi + 2.0 * c * yi) + g_den * (2.0 * c * xi + 2.0 * c * c * x2 * yi)
        })
        .collect();
    let gc = g_a * (2.0 * xy + y2) - g_b * x2 + g_den * (2.0 * xy + 2.0 * c * x2 * y2);
    (gx, gy, gc)
}

/// Hyperbolic distance `2/sqrt(c) * artanh(sqrt(c) * |(-x) ⊕ y|)`.
pub fn hyp_distance(x: &[f64], y: &[f64], c: Curvature) -> f64 {
    if x == y {
        return 0.0;
    }
    let c = c.value();
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let w = mobius_add_raw(&neg_x, y, c);
    let sc = c.sqrt();
    let s = (sc * norm_sq(&w).sqrt()).min(ATANH_CLAMP);
    2.0 / sc * s.atanh()
}

/// `atanh(s) / s`, continuous at zero.
fn atanh_ratio(s: f64) -> f64 {
    if s < 1e-4 {
        1.0 + s * s / 3.0
    } else {
        s.atanh() / s
    }
}

/// Squared hyperbolic distance together with its gradients `(d2, gx, gy, gc)`.
pub fn hyp_distance_sq_grad(x: &[f64], y: &[f64], c: f64) -> (f64, Vec<f64>, Vec<f64>, f64) {
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let w = mobius_add_raw(&neg_x, y, c);
    let n = norm_sq(&w).sqrt();
    let sc = c.sqrt();
    let s = sc * n;
    if s >= ATANH_CLAMP {
        let at = ATANH_CLAMP.atanh();
        let dist = 2.0 / sc * at;
        let d_dist_dc = -at / (c * sc);
        let zeros = vec![0.0; x.len()];
        return (dist * dist, zeros.clone(), zeros, 2.0 * dist * d_dist_dc);
    }
    let ratio = atanh_ratio(s);
    let one_minus = 1.0 - s * s;
    // D = 2 n * ratio; D^2 = 4 n^2 ratio^2
    let dist = 2.0 * n * ratio;
    let gw_coef = 8.0 * ratio / one_minus;
    let gw: Vec<f64> = w.iter().map(|wi| gw_coef * wi).collect();
    // direct c-dependence at fixed w
    let d_dist_dc = -s.atanh() / (c * sc) + n / (c * one_minus);
    let gc_direct = 2.0 * dist * d_dist_dc;
    let (g_negx, gy, gc_m) = mobius_add_backward(&neg_x, y, c, &gw);
    let gx = g_negx.into_iter().map(|v| -v).collect();
    (dist * dist, gx, gy, gc_direct + gc_m)
}

/// Origin exponential map `tanh(sqrt(c)|v|) v / (sqrt(c)|v|)`, projected.
pub fn expmap0(v: &[f64], c: Curvature) -> Vec<f64> {
    let mut y = expmap0_raw(v, c.value());
    project_in_place(&mut y, c.value());
    y
}

/// `tanh(s)/s` and `(d/ds (tanh(s)/s)) / s`, both continuous at zero.
fn tanh_ratio_terms(s: f64) -> (f64, f64) {
    if s < 1e-3 {
        let s2 = s * s;
        (1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0, -2.0 / 3.0 + 8.0 * s2 / 15.0)
    } else {
        let t = s.tanh();
        let sech2 = 1.0 - t * t;
        (t / s, (s * sech2 - t) / (s * s * s))
    }
}

pub(crate) fn expmap0_raw(v: &[f64], c: f64) -> Vec<f64> {
    let s = c.sqrt() * norm_sq(v).sqrt();
    let (f, _) = tanh_ratio_terms(s);
    v.iter().map(|vi| f * vi).collect()
}

/// Backward of [`expmap0_raw`]: returns `(gv, gc)`.
pub fn expmap0_backward(v: &[f64], c: f64, gy: &[f64]) -> (Vec<f64>, f64) {
    let n2 = norm_sq(v);
    let s = c.sqrt() * n2.sqrt();
    let (f, fp_over_s) = tanh_ratio_terms(s);
    let gy_dot_v = dot(gy, v);
    let k = gy_dot_v * fp_over_s * c;
    let gv = gy.iter().zip(v).map(|(g, vi)| f * g + k * vi).collect();
    let gc = gy_dot_v * fp_over_s * n2 / 2.0;
    (gv, gc)
}

/// Rescales `x` onto radius `(1 - BALL_EPS)/sqrt(c)` if it lies on or beyond it.
pub fn project_to_ball(x: &[f64], c: Curvature) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite coordinate passed to ball projection".into()));
    }
    let mut out = x.to_vec();
    project_in_place(&mut out, c.value());
    Ok(out)
}

fn max_norm(c: f64) -> f64 {
    (1.0 - BALL_EPS) / c.sqrt()
}

/// In-place projection; returns true when the point was rescaled.
pub(crate) fn project_in_place(x: &mut [f64], c: f64) -> bool {
    let n = norm_sq(x).sqrt();
    let m = max_norm(c);
    if n >= m && n > 0.0 {
        let scale = m / n;
        x.iter_mut().for_each(|v| *v *= scale);
        true
    } else {
        false
    }
}

/// Backward of the projection evaluated at the pre-projection point `x`:
/// returns `(gx, gc)`.
pub fn project_backward(x: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let n = norm_sq(x).sqrt();
    let m = max_norm(c);
    if n >= m && n > 0.0 {
        let g_dot_x = dot(g, x);
        let gx = g
            .iter()
            .zip(x)
            .map(|(gi, xi)| m / n * (gi - g_dot_x * xi / (n * n)))
            .collect();
        // dm/dc = -m / (2c)
        let gc = g_dot_x / n * (-m / (2.0 * c));
        (gx, gc)
    } else {
        (g.to_vec(), 0.0)
    }
}
