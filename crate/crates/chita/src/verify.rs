//! Runtime oracle suites: independent re-derivations of the quantities the
//! fast paths compute, runnable on demand. Each suite returns pass/fail
//! reports with measured errors; nothing here is used by the solvers
//! themselves.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use crate::backsolve::{chita_bso, restricted_exact_solve};
use crate::error::{ChitaError, Result};
use crate::kernels::topk_indices;
use crate::linesearch::{first_breakpoint, search_stepsize_from};
use crate::problem::{build_problem, GradientMatrix, ProblemInstance};
use crate::synthetic::{
    mix_seed, near_stationary_problem, random_feasible_w, random_problem, standard_normal_vector,
};

/// Outcome of one verified property.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

/// Gradient of Q by central finite differences of the objective.
pub fn fd_gradient(inst: &ProblemInstance, w: &Array1<f64>, h: f64) -> Result<Array1<f64>> {
    let mut g = Array1::zeros(inst.p());
    for i in 0..inst.p() {
        let mut wp = w.clone();
        wp[i] += h;
        let mut wm = w.clone();
        wm[i] -= h;
        g[i] = (inst.objective(&wp)? - inst.objective(&wm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Support-restricted exact solve by the textbook route: the |S| x |S|
/// normal equations, factored by LU. Deliberately a different code path
/// from the production solve (which factors an n x n system instead).
pub fn dense_restricted_solve(inst: &ProblemInstance, support: &[usize]) -> Result<Array1<f64>> {
    let s = support.len();
    let a_s = inst.a().select_columns(support)?;
    let a_mat = DMatrix::from_row_slice(
        inst.n(),
        s,
        a_s.as_array().as_slice().expect("row-major"),
    );
    let nl = inst.ridge_weight();
    let mut lhs = a_mat.transpose() * &a_mat;
    for i in 0..s {
        lhs[(i, i)] += nl;
    }
    let b_vec = DVector::from_iterator(inst.n(), inst.b().iter().copied());
    let mut rhs = a_mat.transpose() * b_vec;
    for (j, &i) in support.iter().enumerate() {
        rhs[j] += nl * inst.wbar()[i];
    }
    let sol = lhs.lu().solve(&rhs).ok_or_else(|| {
        ChitaError::SingularSystem(format!("{s} x {s} restricted system is singular"))
    })?;
    let mut w = Array1::zeros(inst.p());
    for (j, &i) in support.iter().enumerate() {
        w[i] = sol[j];
    }
    Ok(w)
}

/// Exhaustive search over all k-subsets of columns, each solved exactly.
/// Returns the best support and its objective. Exponential in k; meant for
/// p around a dozen. Supports whose restricted system is singular (possible
/// only at lambda = 0) are skipped.
pub fn enumerate_best_support(inst: &ProblemInstance, k: usize) -> Result<(Vec<usize>, f64)> {
    let p = inst.p();
    if k == 0 || k > p {
        return Err(ChitaError::KOutOfRange { k, p });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = idx.clone();
    let mut best_q = f64::INFINITY;
    loop {
        if let Ok(w) = dense_restricted_solve(inst, &idx) {
            let q = inst.objective(&w)?;
            if q < best_q {
                best_q = q;
                best = idx.clone();
            }
        }
        // Next combination in lexicographic order.
        let mut i = k;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if idx[i] != i + p - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    if best_q.is_infinite() {
        return Err(ChitaError::SingularSystem(
            "every candidate support was singular".into(),
        ));
    }
    Ok((best, best_q))
}

/// Analytic gradients against central finite differences, and the objective
/// anchor identity Q(wbar) = alpha^2 n / 2.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut max_rel: f64 = 0.0;
    let mut probes = 0usize;
    for t in 0..10u64 {
        let n = 4 + (t as usize % 7);
        let p = 10 + 4 * t as usize;
        let lambda = [0.0, 0.1, 1.0][t as usize % 3];
        let inst = random_problem(n, p, 3, lambda, mix_seed(seed, t))?;
        for j in 0..20u64 {
            let w = standard_normal_vector(p, mix_seed(seed, 100 + 20 * t + j));
            let g = inst.gradient(&w)?;
            let fd = fd_gradient(&inst, &w, 1e-6)?;
            for i in 0..p {
                let rel = (g[i] - fd[i]).abs() / (1.0 + fd[i].abs());
                max_rel = max_rel.max(rel);
            }
            probes += 1;
        }
    }
    let grad_report = CheckReport {
        name: "gradient-vs-central-differences",
        passed: max_rel < 1e-6,
        detail: format!("max relative error {max_rel:.3e} over {probes} probe points"),
    };

    let mut max_anchor: f64 = 0.0;
    for t in 0..10u64 {
        let n = 3 + (t as usize % 8);
        let inst = random_problem(n, 12, 3, 0.2, mix_seed(seed, 500 + t))?;
        let q = inst.objective(inst.wbar())?;
        let expect = n as f64 / 2.0;
        max_anchor = max_anchor.max((q - expect).abs() / expect);
    }
    let anchor_report = CheckReport {
        name: "objective-anchor-identity",
        passed: max_anchor <= 1e-10,
        detail: format!("max relative error {max_anchor:.3e} against n/2"),
    };
    Ok(vec![grad_report, anchor_report])
}

/// Support stability below the first breakpoint, and descent of the chosen
/// step.
pub fn linesearch_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut stable = 0usize;
    let mut total = 0usize;
    let mut descents = 0usize;
    for t in 0..100u64 {
        let n = 5 + (t as usize % 6);
        let p = 20 + (t as usize % 21);
        let k = 3 + (t as usize % 5);
        let lambda = [0.0, 0.05, 0.5][t as usize % 3];
        let inst = random_problem(n, p, k, lambda, mix_seed(seed, 7000 + t))?;
        let w = random_feasible_w(p, k, mix_seed(seed, 7500 + t));
        let grad = inst.gradient(&w)?;
        let tau_c = first_breakpoint(w.view(), grad.view(), k)?;

        total += 1;
        if tau_c.is_finite() {
            let reference = topk_indices(w.view(), k)?;
            let mut ok = true;
            for j in 0..64 {
                let tau = 0.999 * tau_c * j as f64 / 63.0;
                let moved = &w - &(tau * &grad);
                if topk_indices(moved.view(), k)? != reference {
                    ok = false;
                    break;
                }
            }
            if ok {
                stable += 1;
            }
        } else {
            stable += 1; // no finite breakpoint: no support change anywhere
        }

        let sr = search_stepsize_from(&inst, &w, &grad, k, 2.0, 30)?;
        let moved = &w - &(sr.step * &grad);
        let w_next = crate::kernels::hard_threshold(moved.view(), k)?;
        if inst.objective(&w_next)? <= inst.objective(&w)? {
            descents += 1;
        }
    }
    Ok(vec![
        CheckReport {
            name: "support-stable-below-breakpoint",
            passed: stable == total,
            detail: format!("{stable}/{total} instances kept their support on [0, 0.999 tau_c]"),
        },
        CheckReport {
            name: "line-search-step-descends",
            passed: descents == total,
            detail: format!("{descents}/{total} chosen steps did not increase Q"),
        },
    ])
}

/// Production restricted solve against the dense normal-equations route.
pub fn woodbury_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut max_rel: f64 = 0.0;
    for t in 0..50u64 {
        let n = 5 + (t as usize % 26);
        let p = 45 + (t as usize % 16);
        let s_len = 1 + (t as usize % 40);
        let lambda = [1e-3, 0.1, 1.0, 10.0][t as usize % 4];
        let inst = random_problem(n, p, 3, lambda, mix_seed(seed, 9000 + t))?;
        let w_mask = random_feasible_w(p, s_len.min(p), mix_seed(seed, 9500 + t));
        let support: Vec<usize> = w_mask
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let fast = restricted_exact_solve(&inst, &support)?;
        let slow = dense_restricted_solve(&inst, &support)?;
        for i in 0..p {
            let rel = (fast[i] - slow[i]).abs() / (1.0 + slow[i].abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(vec![CheckReport {
        name: "woodbury-vs-dense-restricted-solve",
        passed: max_rel <= 1e-8,
        detail: format!("max relative coordinate error {max_rel:.3e} over 50 instances"),
    }])
}

/// chita_bso against exhaustive support enumeration at small scale.
///
/// The random trials use the near-stationary instance family (gradients
/// damped relative to the anchor weights, the trained-network regime the
/// objective models). Iterative thresholding is a local method: on fully
/// unstructured instances — anchor independent of unit-variance gradients —
/// it lands within 5% of the enumerated optimum only about a third of the
/// time, and no amount of probing recovers the remaining swaps.
pub fn bruteforce_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let trials = 20;
    let mut within = 0usize;
    let mut nontrivial = 0usize;
    let mut max_gap: f64 = 0.0;
    for t in 0..trials as u64 {
        let inst = near_stationary_problem(6, 12, 4, 0.1, mix_seed(seed, 11_000 + t))?;
        let sol = chita_bso(&inst, inst.wbar(), 4, 20)?;
        let (s_star, q_star) = enumerate_best_support(&inst, 4)?;
        let gap = (sol.objective - q_star) / q_star;
        max_gap = max_gap.max(gap);
        if gap <= 0.05 {
            within += 1;
        }
        let mut mag_support = topk_indices(inst.wbar().view(), 4)?;
        mag_support.sort_unstable();
        if s_star != mag_support {
            nontrivial += 1;
        }
    }
    let random_report = CheckReport {
        name: "bso-near-exhaustive-optimum",
        passed: within * 5 >= trials * 4,
        detail: format!(
            "{within}/{trials} instances within 5% of the enumerated optimum (max gap {max_gap:.3e})"
        ),
    };
    // Guard that the family keeps the search non-trivial: if the optimum
    // were simply the top-k anchor coordinates, the check above would test
    // magnitude ranking rather than the solver.
    let family_report = CheckReport {
        name: "optimum-is-not-plain-magnitude",
        passed: nontrivial * 2 >= trials,
        detail: format!(
            "{nontrivial}/{trials} instances place the enumerated optimum off the top-k anchor support"
        ),
    };

    // Separable instances: curvature and anchor spread kept mild so the
    // magnitude-driven support search can always identify the best subset,
    // which the exact polish then solves to optimality.
    let mut exact = 0usize;
    let diag_trials = 5;
    let mut max_diag_gap: f64 = 0.0;
    for t in 0..diag_trials as u64 {
        let inst = diagonal_instance(mix_seed(seed, 12_000 + t));
        let sol = chita_bso(&inst, inst.wbar(), 4, 20)?;
        let (_, q_star) = enumerate_best_support(&inst, 4)?;
        let gap = (sol.objective - q_star) / q_star.abs().max(1e-12);
        max_diag_gap = max_diag_gap.max(gap);
        if gap <= 1e-10 {
            exact += 1;
        }
    }
    let diag_report = CheckReport {
        name: "bso-exact-on-separable-instances",
        passed: exact == diag_trials,
        detail: format!("{exact}/{diag_trials} exact (max gap {max_diag_gap:.3e})"),
    };
    Ok(vec![random_report, family_report, diag_report])
}

/// A 12 x 12 diagonal instance with mildly spread curvatures: the problem
/// separates per coordinate, so the enumerated optimum is unambiguous.
pub fn diagonal_instance(seed: u64) -> ProblemInstance {
    let p = 12;
    let mut a = ndarray::Array2::zeros((p, p));
    let d = standard_normal_vector(p, mix_seed(seed, 1));
    let w = standard_normal_vector(p, mix_seed(seed, 2));
    for i in 0..p {
        // Curvatures in [0.7, 1.5], anchors in +/- [0.5, 2.5].
        a[[i, i]] = 0.7 + 0.8 / (1.0 + (-d[i]).exp());
    }
    let wbar = w.mapv(|v| v.signum() * (0.5 + 2.0 / (1.0 + (-v).exp())));
    build_problem(GradientMatrix::new(a).expect("finite"), wbar, 0.1, 4, 1.0)
        .expect("valid instance")
}
