//! Step-size selection for hard-thresholding steps.
//!
//! Along the ray `w - tau * grad` the support of `P_k` stays fixed for small
//! `tau`: every in-support magnitude `|w_i - tau*g_i|` starts at `|w_i| > 0`
//! while off-support magnitudes grow from zero as `tau*|g_j|`. The first
//! support change happens where the fastest-growing off-support magnitude
//! `tau * M`, `M = max_{j not in S} |g_j|`, catches the first in-support
//! magnitude, whose initial rate of change is `-g_i * sign(w_i)`:
//!
//! ```text
//! tau_c = min_{i in S} |w_i| / max{ M + g_i * sign(w_i), 0+ }
//! ```
//!
//! (a non-positive denominator means that coordinate grows at least as fast
//! as any off-support one and never triggers a change). Inside `[0, tau_c)`
//! the objective restricted to the ray is an explicit quadratic in `tau`,
//! whose minimizer has a closed form; past `tau_c` the search expands
//! geometrically while the thresholded objective keeps improving.

use ndarray::{Array1, ArrayView1};

use crate::error::{ChitaError, Result};
use crate::kernels::{hard_threshold, topk_indices};
use crate::problem::ProblemInstance;

/// Default geometric expansion factor for steps past the first breakpoint.
pub const DEFAULT_GAMMA: f64 = 2.0;
/// Cap on the number of geometric expansions.
pub const DEFAULT_MAX_EXPANSIONS: usize = 30;

/// Outcome of one step-size search.
#[derive(Debug, Clone, Copy)]
pub struct StepsizeResult {
    /// The selected step.
    pub step: f64,
    /// First breakpoint of the support along the ray (may be infinite).
    pub tau_c: f64,
    /// Minimizer of the first-piece quadratic, clipped to `[0, tau_c]`.
    pub tau_m: f64,
    /// Number of accepted geometric expansions past `tau_c`.
    pub expansions: usize,
}

fn check_pair(w: ArrayView1<f64>, grad: ArrayView1<f64>, k: usize) -> Result<()> {
    if grad.len() != w.len() {
        return Err(ChitaError::DimensionMismatch {
            what: "gradient",
            expected: w.len(),
            got: grad.len(),
        });
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(ChitaError::NonFinite("weights"));
    }
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(ChitaError::NonFinite("gradient"));
    }
    if k == 0 || k > w.len() {
        return Err(ChitaError::KOutOfRange { k, p: w.len() });
    }
    Ok(())
}

/// Largest `tau'` such that `topk_indices(w - tau*grad, k)` equals
/// `topk_indices(w, k)` for every `tau in [0, tau')`. Returns `+inf` when the
/// support can never change (`k = p`, or all off-support gradients vanish, or
/// every in-support coordinate outruns them).
pub fn first_breakpoint(w: ArrayView1<f64>, grad: ArrayView1<f64>, k: usize) -> Result<f64> {
    check_pair(w, grad, k)?;
    let p = w.len();
    if k == p {
        return Ok(f64::INFINITY);
    }
    let support = topk_indices(w, k)?;
    let mut in_support = vec![false; p];
    for &i in &support {
        in_support[i] = true;
    }
    let mut m = 0.0f64;
    for j in 0..p {
        if !in_support[j] {
            m = m.max(grad[j].abs());
        }
    }
    if m == 0.0 {
        // No off-support magnitude ever grows.
        return Ok(f64::INFINITY);
    }
    let mut tau_c = f64::INFINITY;
    for &i in &support {
        let denom = if w[i] == 0.0 {
            // Zero-padded support coordinate: it races the off-support pack
            // from zero and is overtaken immediately iff some off-support
            // gradient strictly exceeds its own.
            m - grad[i].abs()
        } else {
            m + grad[i] * w[i].signum()
        };
        if denom > 0.0 {
            tau_c = tau_c.min(w[i].abs() / denom);
        }
    }
    Ok(tau_c)
}

/// Minimizer of the first-piece quadratic `tau -> Q(w - tau * d)`, where `d`
/// is the gradient masked to the current support, clipped to `[0, tau_c]`.
/// A zero gradient on the support (or a degenerate curvature) returns 0.
pub fn first_piece_minimizer(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    grad: &Array1<f64>,
    k: usize,
    tau_c: f64,
) -> Result<f64> {
    check_pair(w.view(), grad.view(), k)?;
    if tau_c < 0.0 || tau_c.is_nan() {
        return Err(ChitaError::InvalidParameter {
            name: "tau_c",
            reason: format!("must be >= 0, got {tau_c}"),
        });
    }
    let support = topk_indices(w.view(), k)?;
    let num: f64 = support.iter().map(|&i| grad[i] * grad[i]).sum();
    if num == 0.0 {
        return Ok(0.0);
    }
    let ad = inst.a().matvec_masked(grad, &support);
    let denom = ad.dot(&ad) + inst.ridge_weight() * num;
    if denom == 0.0 {
        // Only reachable through underflow: a flat direction implies a zero
        // slope, which the `num == 0` branch already caught.
        return Ok(0.0);
    }
    Ok((num / denom).min(tau_c).max(0.0))
}

/// Full step-size search: closed-form first-piece minimizer when it is
/// interior, otherwise geometric expansion past the breakpoint while the
/// thresholded objective keeps strictly decreasing.
pub fn search_stepsize(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    k: usize,
    gamma: f64,
) -> Result<StepsizeResult> {
    let grad = inst.gradient(w)?;
    search_stepsize_from(inst, w, &grad, k, gamma, DEFAULT_MAX_EXPANSIONS)
}

/// [`search_stepsize`] with a precomputed gradient and explicit expansion
/// cap; the solver loops reuse the gradient for the subsequent HT step.
pub fn search_stepsize_from(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    grad: &Array1<f64>,
    k: usize,
    gamma: f64,
    max_expansions: usize,
) -> Result<StepsizeResult> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(ChitaError::InvalidParameter {
            name: "gamma",
            reason: format!("expansion factor must be > 1, got {gamma}"),
        });
    }
    let tau_c = first_breakpoint(w.view(), grad.view(), k)?;
    let tau_m = first_piece_minimizer(inst, w, grad, k, tau_c)?;
    if tau_m < tau_c {
        return Ok(StepsizeResult {
            step: tau_m,
            tau_c,
            tau_m,
            expansions: 0,
        });
    }
    // tau_m hit the breakpoint: the thresholded objective may keep dropping
    // past tau_c, so probe geometrically growing steps through it.
    let q0 = inst.objective(w)?;
    let eval = |tau: f64| -> Result<f64> {
        let moved = w - &(tau * grad);
        let thresholded = hard_threshold(moved.view(), k)?;
        inst.objective(&thresholded)
    };
    let mut best_tau = tau_c;
    let mut best_q = eval(tau_c)?;
    let mut expansions = 0;
    for _ in 0..max_expansions {
        let cand = best_tau * gamma;
        let q = eval(cand)?;
        if q < best_q {
            best_q = q;
            best_tau = cand;
            expansions += 1;
        } else {
            break;
        }
    }
    if best_q <= q0 {
        return Ok(StepsizeResult {
            step: best_tau,
            tau_c,
            tau_m,
            expansions,
        });
    }
    // Exactly at tau_c two magnitudes tie and the thresholding tie-break can
    // swap a support coordinate against us; if the ladder found nothing
    // better either, retreat just inside the first piece, where the support
    // is intact and the quadratic guarantees descent.
    let safe = tau_c * (1.0 - 1e-9);
    let step = if safe > 0.0 && eval(safe)? <= q0 {
        safe
    } else {
        0.0
    };
    Ok(StepsizeResult {
        step,
        tau_c,
        tau_m,
        expansions: 0,
    })
}
