//! Reference pruners the main solvers are compared against: magnitude
//! pruning, diagonal-curvature (OBD-style) saliency, and plain IHT with a
//! constant 1/L step.

use ndarray::Array1;

use crate::error::Result;
use crate::kernels::{hard_threshold, lipschitz_upper, topk_indices};
use crate::problem::{ProblemInstance, SparseSolution};

/// Keep the k largest-magnitude anchor weights, zero the rest.
pub fn magnitude_prune(inst: &ProblemInstance, k: usize) -> Result<SparseSolution> {
    let w = hard_threshold(inst.wbar().view(), k)?;
    let q = inst.objective(&w)?;
    Ok(SparseSolution::from_weights(w, q))
}

/// Per-weight saliency: estimated loss increase when coordinate i is zeroed,
/// wbar_i^2 / (2 H_ii), with the diagonal curvature H_ii = ||a_i||^2 / n and
/// a tiny guard against zero-curvature coordinates. Kept weights are the k
/// highest scores.
pub fn obd_scores(inst: &ProblemInstance) -> Array1<f64> {
    let n = inst.n() as f64;
    Array1::from_iter((0..inst.p()).map(|i| {
        let h_ii = inst.a().col_norm_sq(i) / n;
        let w = inst.wbar()[i];
        w * w / (2.0 * h_ii + 1e-12)
    }))
}

/// Prune by OBD saliency: keep the k highest-scoring anchor weights.
pub fn obd_prune(inst: &ProblemInstance, k: usize) -> Result<SparseSolution> {
    let scores = obd_scores(inst);
    let keep = topk_indices(scores.view(), k)?;
    let mut w = Array1::zeros(inst.p());
    for &i in &keep {
        w[i] = inst.wbar()[i];
    }
    let q = inst.objective(&w)?;
    Ok(SparseSolution::from_weights(w, q))
}

/// IHT with the conservative constant step 1/L, L an upper bound on the
/// smooth part's curvature. Comparison arm only.
pub fn iht_constant_step(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    iters: usize,
) -> Result<SparseSolution> {
    let (w, _) = constant_step_run(inst, w0, k, iters, false)?;
    let q = inst.objective(&w)?;
    Ok(SparseSolution::from_weights(w, q))
}

/// [`iht_constant_step`] plus the objective after the projection and after
/// every step.
pub fn iht_constant_step_traced(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    iters: usize,
) -> Result<(SparseSolution, Vec<f64>)> {
    let (w, trace) = constant_step_run(inst, w0, k, iters, true)?;
    let q = *trace.last().expect("trace holds the projection objective");
    Ok((SparseSolution::from_weights(w, q), trace))
}

fn constant_step_run(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    iters: usize,
    with_trace: bool,
) -> Result<(Array1<f64>, Vec<f64>)> {
    let est = lipschitz_upper(inst, 1e-6)?;
    let step = 1.0 / est.value;
    let mut w = hard_threshold(w0.view(), k)?;
    let mut trace = Vec::new();
    if with_trace {
        trace.push(inst.objective(&w)?);
    }
    for _ in 0..iters {
        let grad = inst.gradient(&w)?;
        let moved = &w - &(step * &grad);
        w = hard_threshold(moved.view(), k)?;
        if with_trace {
            trace.push(inst.objective(&w)?);
        }
    }
    if !with_trace {
        trace.push(inst.objective(&w)?);
    }
    Ok((w, trace))
}
