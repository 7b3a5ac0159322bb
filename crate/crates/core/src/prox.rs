//! Proximal operators for the row-wise X-update.
//!
//! Every operator acts on one *group*: the length-`N` vector holding the
//! coefficients of one filter at one site across all `N` signals. The
//! `*_in_place` variants are used inside the solver loop and avoid
//! allocation; the plain variants return a fresh vector.

/// Weights of the combined `tau*||.||_1 + kappa*||.||_2` penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxWeights {
    pub tau: f64,
    pub kappa: f64,
}

impl ProxWeights {
    pub fn new(tau: f64, kappa: f64) -> Self {
        debug_assert!(tau >= 0.0 && kappa >= 0.0);
        Self { tau, kappa }
    }
}

/// Soft thresholding `sign(a) * max(0, |a| - tau)`.
#[inline]
pub fn shrink(a: f64, tau: f64) -> f64 {
    let m = a.abs() - tau;
    if m > 0.0 {
        m.copysign(a)
    } else {
        0.0
    }
}

pub fn shrink_in_place(a: &mut [f64], tau: f64) {
    for v in a.iter_mut() {
        *v = shrink(*v, tau);
    }
}

fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Group shrinkage `(1 - tau / max(||a||_2, tau)) * a`.
pub fn prox_l2(a: &[f64], tau: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    prox_l2_in_place(&mut out, tau);
    out
}

pub fn prox_l2_in_place(a: &mut [f64], tau: f64) {
    let norm = l2_norm(a);
    let denom = norm.max(tau);
    // a = 0 and tau = 0: leave the zero vector as is
    if denom == 0.0 {
        return;
    }
    let scale = 1.0 - tau / denom;
    for v in a.iter_mut() {
        *v *= scale;
    }
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}`.
///
/// Sort-and-threshold method: sort magnitudes in decreasing order, find the
/// largest prefix whose shifted mean stays below the next magnitude, then
/// soft-threshold every entry by that shift.
pub fn project_l1_ball(a: &[f64], radius: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    let mut scratch = Vec::with_capacity(a.len());
    project_l1_ball_in_place(&mut out, radius, &mut scratch);
    out
}

pub fn project_l1_ball_in_place(a: &mut [f64], radius: f64, scratch: &mut Vec<f64>) {
    debug_assert!(radius > 0.0);
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return;
    }
    let theta = l1_threshold(a, radius, scratch);
    shrink_in_place(a, theta);
}

// Shift theta such that sum(max(|a_i| - theta, 0)) = radius, assuming ||a||_1 > radius.
fn l1_threshold(a: &[f64], radius: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(a.iter().map(|v| v.abs()));
    // stable, descending
    scratch.sort_by(|x, y| y.total_cmp(x));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Proximal operator of `tau*||.||_inf` via the Moreau decomposition
/// `a - tau * P(a / tau)`, with `P` the projection onto the unit l1 ball.
pub fn prox_linf(a: &[f64], tau: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    let mut scratch = Vec::with_capacity(a.len());
    prox_linf_in_place(&mut out, tau, &mut scratch);
    out
}

pub fn prox_linf_in_place(a: &mut [f64], tau: f64, scratch: &mut Vec<f64>) {
    if tau <= 0.0 {
        return;
    }
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    if l1 <= tau {
        a.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // P(a/tau) = shrink(a/tau, theta') with theta' the unit-ball threshold of a/tau,
    // so tau * P(a/tau) = shrink(a, tau*theta') and theta = tau*theta' is the
    // threshold of a for radius tau.
    let theta = l1_threshold(a, tau, scratch);
    for v in a.iter_mut() {
        *v -= shrink(*v, theta);
    }
}

/// Proximal operator of `tau*||.||_1 + kappa*||.||_2`: elementwise shrink followed
/// by group shrink.
pub fn prox_l1_l2(a: &[f64], w: ProxWeights) -> Vec<f64> {
    let mut out = a.to_vec();
    prox_l1_l2_in_place(&mut out, w);
    out
}

pub fn prox_l1_l2_in_place(a: &mut [f64], w: ProxWeights) {
    shrink_in_place(a, w.tau);
    prox_l2_in_place(a, w.kappa);
}
