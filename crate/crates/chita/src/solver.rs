//! Iterative hard thresholding with periodic coordinate descent.
//!
//! Each outer iteration runs `t_ht` line-searched HT steps (the support may
//! move) followed by `t_cd` cyclic coordinate-descent sweeps over the support
//! found by the last HT step (the support never grows during CD). The
//! residual `b - A w` is maintained incrementally across one sweep block and
//! recomputed from scratch each outer iteration to keep drift bounded.

use ndarray::Array1;

use crate::error::{ChitaError, Result};
use crate::kernels::hard_threshold;
use crate::linesearch::{first_breakpoint, search_stepsize_from, DEFAULT_MAX_EXPANSIONS};
use crate::problem::{ProblemInstance, SparseSolution};

/// Ladder length for the convergence-time escape probe: step sizes
/// tau_c * gamma^j for j in 0..=ESCAPE_LADDER.
const ESCAPE_LADDER: usize = 16;

/// Half-width of the entry-step ladder: step sizes tau_d * gamma^j for
/// j in -ENTRY_LADDER..=ENTRY_LADDER around the dense-ray minimizer.
const ENTRY_LADDER: i32 = 8;

/// The first hard-thresholding step from a denser-than-k start. The gradient
/// at the dense point carries curvature information that a bare projection
/// discards, so the entry step thresholds points along that ray and keeps
/// the best, with the plain projection as the tau = 0 member of the ladder.
/// The ladder centers on the exact minimizer of Q along the unthresholded
/// ray, the natural step scale.
fn entry_step(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    gamma: f64,
) -> Result<Array1<f64>> {
    let grad = inst.gradient(w0)?;
    let mut best = hard_threshold(w0.view(), k)?;
    let mut best_q = inst.objective(&best)?;
    let gg = grad.dot(&grad);
    let ag = inst.a().matvec(grad.view());
    let curv = ag.dot(&ag) + inst.ridge_weight() * gg;
    if gg > 0.0 && curv > 0.0 {
        let tau_d = gg / curv;
        for j in -ENTRY_LADDER..=ENTRY_LADDER {
            let tau = tau_d * gamma.powi(j);
            let moved = w0 - &(tau * &grad);
            let cand = hard_threshold(moved.view(), k)?;
            let q = inst.objective(&cand)?;
            if q < best_q {
                best_q = q;
                best = cand;
            }
        }
    }
    Ok(best)
}

/// Knobs for [`iht_cd`] and the solvers built on top of it.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Line-searched HT steps per outer iteration (>= 1).
    pub t_ht: usize,
    /// CD sweeps per outer iteration (0 disables CD).
    pub t_cd: usize,
    /// Geometric expansion factor for the step-size search (> 1).
    pub gamma: f64,
    /// Outer-iteration cap (>= 1).
    pub max_outer: usize,
    /// Stop once the relative objective decrease over an outer iteration
    /// falls below this (> 0).
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_ht: 10,
            t_cd: 3,
            gamma: 2.0,
            max_outer: 100,
            rel_tol: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_ht == 0 {
            return Err(ChitaError::InvalidParameter {
                name: "t_ht",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(ChitaError::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and > 1, got {}", self.gamma),
            });
        }
        if self.max_outer == 0 {
            return Err(ChitaError::InvalidParameter {
                name: "max_outer",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(ChitaError::InvalidParameter {
                name: "rel_tol",
                reason: format!("must be finite and > 0, got {}", self.rel_tol),
            });
        }
        Ok(())
    }
}

/// Exact minimization of `Q` in the single coordinate `i`, given the
/// maintained residual `r = b - A w`. Returns the new value of `w[i]` and
/// updates `w` and `r` in place. Errors if `i` is not in the support of `w`
/// (activating a new coordinate would violate the l0 constraint).
pub fn cd_update(
    inst: &ProblemInstance,
    w: &mut Array1<f64>,
    residual: &mut Array1<f64>,
    i: usize,
) -> Result<f64> {
    if i >= inst.p() {
        return Err(ChitaError::IndexOutOfBounds {
            index: i,
            len: inst.p(),
        });
    }
    if w[i] == 0.0 {
        return Err(ChitaError::NotInSupport(i));
    }
    Ok(cd_apply(inst, w, residual, i, inst.a().col_norm_sq(i)))
}

/// The unchecked CD kernel. Callers guarantee that `i` belongs to the
/// bookkept support (a coordinate may sit at exactly zero mid-sweep and is
/// still legitimately swept).
pub(crate) fn cd_apply(
    inst: &ProblemInstance,
    w: &mut Array1<f64>,
    residual: &mut Array1<f64>,
    i: usize,
    col_norm_sq: f64,
) -> f64 {
    let nl = inst.ridge_weight();
    let denom = col_norm_sq + nl;
    if denom == 0.0 {
        // Zero column with lambda = 0: the coordinate does not appear in Q;
        // leave it where it is.
        return w[i];
    }
    let col = inst.a().column(i);
    let old = w[i];

    #[cfg(debug_assertions)]
    let fit_old = 0.5 * residual.dot(residual);

    // <a_i, r + a_i w_i> = <a_i, r> + w_i ||a_i||^2 without forming r_partial.
    let numer = col.dot(residual) + old * col_norm_sq + nl * inst.wbar()[i];
    let new = numer / denom;
    let delta = new - old;
    if delta != 0.0 {
        residual.scaled_add(-delta, &col);
        w[i] = new;
    }

    #[cfg(debug_assertions)]
    {
        // One-coordinate moves never increase Q (up to roundoff).
        let fit_new = 0.5 * residual.dot(residual);
        let wb = inst.wbar()[i];
        let ridge_delta = 0.5 * nl * ((new - wb) * (new - wb) - (old - wb) * (old - wb));
        let dq = (fit_new - fit_old) + ridge_delta;
        debug_assert!(
            dq <= 1e-9 * (1.0 + fit_old.abs()),
            "cd_update increased Q by {dq}"
        );
    }

    new
}

/// Candidate drops (smallest surviving magnitudes) and entrants (largest
/// off-support gradients) considered by the swap stage of the escape probe.
pub(crate) const SWAP_DROPS: usize = 6;
pub(crate) const SWAP_ENTRANTS: usize = 8;

/// Largest support size on which single-swap candidates are still priced.
/// Swaps repair selection errors at small budgets; on large supports their
/// relative payoff shrinks while each pricing costs O(n s).
pub(crate) const SWAP_SUPPORT_CAP: usize = 512;

/// Cyclic CD sweeps used to refine a priced candidate support.
const PRICE_CD_SWEEPS: usize = 3;

/// Price a candidate support: starting from `w` masked to `support`, take
/// the exact minimizer of Q along the gradient ray masked to the same
/// support, then a few cyclic CD sweeps over the support.
///
/// A raw thresholded point prices entering coordinates at `-tau * g_j`,
/// which easily overshoots their useful range and masks genuinely better
/// supports. The masked-ray minimizer fixes the entrant scale, and the CD
/// sweeps let the surviving coordinates adjust to the newcomer — a swap is
/// often only profitable after that joint adjustment. Returns the priced
/// point and its objective.
pub(crate) fn price_support(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    grad: &Array1<f64>,
    support: &[usize],
) -> Result<(Array1<f64>, f64)> {
    let p = w.len();
    let nl = inst.ridge_weight();
    let mut cand = Array1::zeros(p);
    let mut d = Array1::zeros(p);
    for &i in support {
        cand[i] = w[i];
        d[i] = grad[i];
    }
    // Everything below runs through masked matvecs and an incrementally
    // maintained residual, so one pricing call costs O(n |support|) rather
    // than O(n p) — the probes can afford dozens of candidates per stall
    // even when the ambient dimension is large.
    let mut residual = inst.a().matvec_masked(&cand, support);
    residual.zip_mut_with(inst.b(), |aw, bi| *aw = bi - *aw);

    let ad = inst.a().matvec_masked(&d, support);
    let dd: f64 = support.iter().map(|&i| d[i] * d[i]).sum();
    let curv = ad.dot(&ad) + nl * dd;
    if curv > 0.0 {
        let mut num = 0.0;
        for &i in support {
            let gi = -inst.a().column(i).dot(&residual) + nl * (cand[i] - inst.wbar()[i]);
            num += gi * d[i];
        }
        let t_star = num / curv;
        if t_star != 0.0 {
            for &i in support {
                cand[i] -= t_star * d[i];
            }
            // b - A(x - t d) = (b - A x) + t (A d).
            residual.scaled_add(t_star, &ad);
        }
    }
    let col_norms: Vec<f64> = support
        .iter()
        .map(|&i| inst.a().col_norm_sq(i))
        .collect();
    for _ in 0..PRICE_CD_SWEEPS {
        for (&i, &cn) in support.iter().zip(&col_norms) {
            cd_apply(inst, &mut cand, &mut residual, i, cn);
        }
    }
    let fit = 0.5 * residual.dot(&residual);
    let mut dist_sq = 0.0;
    for (ci, wb) in cand.iter().zip(inst.wbar().iter()) {
        let v = ci - wb;
        dist_sq += v * v;
    }
    Ok((cand, fit + 0.5 * nl * dist_sq))
}

/// Support-changing moves evaluated when the outer loop is about to stop:
/// interior line-search steps never change the support, so a converged
/// iterate may sit on a support a single swap away from a strictly better
/// one. Two candidate families are priced through [`price_support`]:
///
/// * hard-thresholding steps past the first breakpoint on a geometric
///   ladder, which walk through nested families of multi-coordinate swaps;
/// * explicit single swaps (drop one of the smallest surviving magnitudes,
///   enter one of the largest off-support gradients), which cover the
///   one-coordinate exchanges the ladder geometry can step over.
///
/// Returns the best strictly improving candidate, if any.
fn escape_probe(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    k: usize,
    gamma: f64,
    q_cur: f64,
) -> Result<Option<(Array1<f64>, f64)>> {
    let grad = inst.gradient(w)?;
    let current: Vec<usize> = w
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut seen: Vec<Vec<usize>> = vec![current.clone()];
    let mut best: Option<(Array1<f64>, f64)> = None;
    let consider = |support: Vec<usize>,
                        seen: &mut Vec<Vec<usize>>,
                        best: &mut Option<(Array1<f64>, f64)>|
     -> Result<()> {
        if seen.contains(&support) {
            return Ok(());
        }
        let (cand, q_cand) = price_support(inst, w, &grad, &support)?;
        seen.push(support);
        if q_cand < q_cur && best.as_ref().is_none_or(|(_, q)| q_cand < *q) {
            *best = Some((cand, q_cand));
        }
        Ok(())
    };

    let tau_c = first_breakpoint(w.view(), grad.view(), k)?;
    if tau_c.is_finite() && tau_c > 0.0 {
        let mut tau = tau_c;
        for _ in 0..=ESCAPE_LADDER {
            let moved = w - &(tau * &grad);
            tau *= gamma;
            let thresholded = hard_threshold(moved.view(), k)?;
            let support: Vec<usize> = thresholded
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect();
            consider(support, &mut seen, &mut best)?;
        }
    }

    // Single swaps. Drops are ordered by |w_i| and entrants by |g_j|; both
    // orderings are imperfect proxies for the true savings, so a handful of
    // each side is crossed rather than only the extremes. Skipped on large
    // supports: a one-coordinate exchange moves the objective by O(1/s)
    // while its pricing costs O(n s), so past the cap the ladder carries
    // the probe alone.
    if current.len() > SWAP_SUPPORT_CAP {
        return Ok(best);
    }
    let mut drops = current.clone();
    drops.sort_by(|&a, &b| w[a].abs().partial_cmp(&w[b].abs()).expect("finite weights"));
    drops.truncate(SWAP_DROPS);
    let mut entrants: Vec<usize> = (0..w.len()).filter(|&j| w[j] == 0.0).collect();
    entrants.sort_by(|&a, &b| {
        grad[b]
            .abs()
            .partial_cmp(&grad[a].abs())
            .expect("finite gradient")
    });
    entrants.truncate(SWAP_ENTRANTS);
    for &i in &drops {
        for &j in &entrants {
            if grad[j] == 0.0 {
                continue; // the entrant would be priced at zero anyway
            }
            let mut support: Vec<usize> =
                current.iter().copied().filter(|&s| s != i).collect();
            support.push(j);
            support.sort_unstable();
            consider(support, &mut seen, &mut best)?;
        }
    }
    Ok(best)
}

/// IHT with periodic CD. `w0` need not be feasible; an infeasible start is
/// reduced to k nonzeros by the first hard-thresholding step (see
/// [`entry_step`] — the dense gradient picks the landing support, not the
/// raw magnitudes alone). Returns the solution; see [`iht_cd_traced`] for
/// the per-outer-iteration objective sequence.
pub fn iht_cd(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<SparseSolution> {
    iht_cd_traced(inst, w0, k, cfg).map(|(s, _)| s)
}

/// [`iht_cd`] plus the objective value after the initial projection and
/// after each completed outer iteration (a non-increasing sequence).
pub fn iht_cd_traced(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<(SparseSolution, Vec<f64>)> {
    cfg.validate()?;
    if k == 0 || k > inst.p() {
        return Err(ChitaError::KOutOfRange { k, p: inst.p() });
    }
    let nnz0 = w0.iter().filter(|v| **v != 0.0).count();
    let mut w = if nnz0 > k {
        entry_step(inst, w0, k, cfg.gamma)?
    } else {
        // Also validates length / finiteness via the objective call below.
        w0.clone()
    };

    let mut q_prev = inst.objective(&w)?;
    let mut trace = vec![q_prev];

    for _outer in 0..cfg.max_outer {
        // HT phase: line-searched hard-thresholding steps.
        for _ in 0..cfg.t_ht {
            let grad = inst.gradient(&w)?;
            let sr = search_stepsize_from(inst, &w, &grad, k, cfg.gamma, DEFAULT_MAX_EXPANSIONS)?;
            if sr.step == 0.0 {
                break; // stationary for the HT map; further steps are no-ops
            }
            let moved = &w - &(sr.step * &grad);
            w = hard_threshold(moved.view(), k)?;
        }

        // CD phase: cyclic sweeps over the support left by the HT phase.
        // The sweep list is fixed for the whole block; a coordinate driven
        // to exactly zero stays on the list until the next HT step.
        if cfg.t_cd > 0 {
            let support: Vec<usize> = w
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect();
            if !support.is_empty() {
                let mut residual = inst.residual(&w)?;
                let col_norms: Vec<f64> = support
                    .iter()
                    .map(|&i| inst.a().col_norm_sq(i))
                    .collect();
                for _ in 0..cfg.t_cd {
                    for (&i, &cn) in support.iter().zip(col_norms.iter()) {
                        cd_apply(inst, &mut w, &mut residual, i, cn);
                    }
                }
            }
        }

        let q = inst.objective(&w)?;
        trace.push(q);
        let decrease = q_prev - q;
        q_prev = q;
        if decrease < cfg.rel_tol * q_prev.abs().max(f64::MIN_POSITIVE) {
            // Converged within the current support: interior line-search
            // steps cannot move it any further. Probe thresholding steps
            // past the breakpoint before stopping; a strictly better
            // neighbouring support restarts the descent there.
            match escape_probe(inst, &w, k, cfg.gamma, q_prev)? {
                Some((w_esc, q_esc)) => {
                    w = w_esc;
                    q_prev = q_esc;
                    trace.push(q_esc);
                }
                None => break,
            }
        }
    }

    Ok((SparseSolution::from_weights(w, q_prev), trace))
}
