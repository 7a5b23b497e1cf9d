//! Active-set outer loop.
//!
//! Solve the problem restricted to a working set of columns (cheap when the
//! set is a small multiple of k), then probe the full space with one
//! hard-thresholding step: if some step size finds a strictly better point
//! whose support leaves the working set, merge the new support in and
//! re-solve. Stop when no probe escapes, or after a fixed number of
//! augmentations.

use ndarray::Array1;

use crate::error::{ChitaError, Result};
use crate::kernels::{hard_threshold, topk_indices};
use crate::linesearch::{search_stepsize_from, DEFAULT_MAX_EXPANSIONS};
use crate::problem::{ProblemInstance, SparseSolution};
use crate::solver::{
    iht_cd, price_support, SolverConfig, SWAP_DROPS, SWAP_ENTRANTS, SWAP_SUPPORT_CAP,
};

/// Default working-set size as a multiple of k.
pub const DEFAULT_ACTIVE_MULT: f64 = 2.0;
/// Upper bound on working-set augmentations before giving up on escapes.
const MAX_AUGMENTATIONS: usize = 20;
/// Probe step sizes beyond the line-search step: tau_c * gamma^j for
/// j in 0..=PROBE_LADDER.
const PROBE_LADDER: usize = 16;

/// The initial working set: indices of the `min(ceil(mult * k), p)` largest
/// magnitudes of `w0`, ascending.
pub fn init_active_set(w0: &Array1<f64>, k: usize, mult: f64) -> Result<Vec<usize>> {
    let p = w0.len();
    if k == 0 || k > p {
        return Err(ChitaError::KOutOfRange { k, p });
    }
    if !(mult.is_finite() && mult >= 1.0) {
        return Err(ChitaError::InvalidParameter {
            name: "active_mult",
            reason: format!("must be finite and >= 1, got {mult}"),
        });
    }
    let size = ((mult * k as f64).ceil() as usize).min(p).max(k);
    topk_indices(w0.view(), size)
}

fn support_of(w: &Array1<f64>) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn is_subset(sub: &[usize], sorted_super: &[usize]) -> bool {
    sub.iter().all(|i| sorted_super.binary_search(i).is_ok())
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Working-set history of one active-set run.
#[derive(Debug, Clone)]
pub struct ActiveSetTrace {
    /// Working-set size at the start of each round.
    pub sizes: Vec<usize>,
    /// Full-space objective after each round's restricted solve
    /// (non-increasing).
    pub objectives: Vec<f64>,
}

/// Active-set solve. `active_mult` controls the initial working-set size;
/// see [`chita_cd_traced`] for the working-set growth history.
pub fn chita_cd(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    cfg: &SolverConfig,
    active_mult: f64,
) -> Result<SparseSolution> {
    chita_cd_traced(inst, w0, k, cfg, active_mult).map(|(s, _)| s)
}

/// [`chita_cd`] plus the per-round working-set sizes and objectives.
pub fn chita_cd_traced(
    inst: &ProblemInstance,
    w0: &Array1<f64>,
    k: usize,
    cfg: &SolverConfig,
    active_mult: f64,
) -> Result<(SparseSolution, ActiveSetTrace)> {
    cfg.validate()?;
    let p = inst.p();
    if w0.len() != p {
        return Err(ChitaError::DimensionMismatch {
            what: "initial weights",
            expected: p,
            got: w0.len(),
        });
    }
    let mut active = init_active_set(w0, k, active_mult)?;

    // Keep the raw start: the first restricted solve receives w0 narrowed to
    // the working set (denser than k is fine — its entry step handles the
    // projection), and `w` is fully overwritten right after that solve.
    let mut w = w0.clone();

    let mut trace = ActiveSetTrace {
        sizes: vec![active.len()],
        objectives: Vec::new(),
    };
    let mut q_cur;
    loop {
        // Solve restricted to the working set (same rows, same rhs).
        let restricted = inst.restrict(&active, k)?;
        let w0_res = Array1::from_iter(active.iter().map(|&i| w[i]));
        let sol_res = iht_cd(&restricted, &w0_res, k, cfg)?;
        w.fill(0.0);
        for (j, &i) in active.iter().enumerate() {
            w[i] = sol_res.weights[j];
        }
        // Restricted and full objectives differ by the ridge mass of the
        // anchor outside the working set, so re-evaluate in full space.
        q_cur = inst.objective(&w)?;
        trace.objectives.push(q_cur);

        if trace.sizes.len() > MAX_AUGMENTATIONS {
            break;
        }

        // Full-space probe: the line-search step first, then a geometric
        // ladder from the first breakpoint, then explicit single swaps into
        // the strongest off-set gradients. Every candidate support is priced
        // by the masked-ray minimizer (see `price_support`): the raw
        // thresholded point values entrants at -tau * g_j, which overshoots
        // and hides genuinely better working-set extensions.
        let grad = inst.gradient(&w)?;
        let sr = search_stepsize_from(inst, &w, &grad, k, cfg.gamma, DEFAULT_MAX_EXPANSIONS)?;
        let mut taus = Vec::with_capacity(2 + PROBE_LADDER);
        if sr.step > 0.0 {
            taus.push(sr.step);
        }
        if sr.tau_c.is_finite() && sr.tau_c > 0.0 {
            let mut t = sr.tau_c;
            for _ in 0..=PROBE_LADDER {
                taus.push(t);
                t *= cfg.gamma;
            }
        }
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        for &tau in &taus {
            let moved = &w - &(tau * &grad);
            let supp_try = support_of(&hard_threshold(moved.view(), k)?);
            if !is_subset(&supp_try, &active) && !candidates.contains(&supp_try) {
                candidates.push(supp_try);
            }
        }
        let support = support_of(&w);
        // Single swaps only pay off on small supports: each exchange moves the
        // objective by O(1/s) while its pricing costs O(n s).
        if support.len() <= SWAP_SUPPORT_CAP {
            let mut drops = support.clone();
            drops.sort_by(|&a, &b| w[a].abs().partial_cmp(&w[b].abs()).expect("finite weights"));
            drops.truncate(SWAP_DROPS);
            let mut entrants: Vec<usize> = (0..p)
                .filter(|j| active.binary_search(j).is_err() && grad[*j] != 0.0)
                .collect();
            entrants.sort_by(|&a, &b| {
                grad[b]
                    .abs()
                    .partial_cmp(&grad[a].abs())
                    .expect("finite gradient")
            });
            entrants.truncate(SWAP_ENTRANTS);
            for &i in &drops {
                for &j in &entrants {
                    let mut supp_try: Vec<usize> =
                        support.iter().copied().filter(|&s| s != i).collect();
                    supp_try.push(j);
                    supp_try.sort_unstable();
                    if !candidates.contains(&supp_try) {
                        candidates.push(supp_try);
                    }
                }
            }
        }

        let mut escaped = false;
        for supp_try in candidates {
            let (w_try, q_try) = price_support(inst, &w, &grad, &supp_try)?;
            if q_try < q_cur {
                active = merge_sorted(&active, &supp_try);
                w = w_try;
                trace.sizes.push(active.len());
                escaped = true;
                break;
            }
        }
        if !escaped {
            break;
        }
    }

    Ok((SparseSolution::from_weights(w, q_cur), trace))
}
