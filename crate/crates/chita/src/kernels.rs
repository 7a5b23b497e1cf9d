//! Sparsity kernels: deterministic top-k selection, hard thresholding, the
//! basic iterative-hard-thresholding step, and a spectral upper bound on the
//! objective's Lipschitz constant.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ChitaError, Result};
use crate::problem::ProblemInstance;

/// Iteration cap for the power method in [`lipschitz_upper`].
pub const POWER_ITERATION_CAP: usize = 500;

fn check_k(k: usize, p: usize) -> Result<()> {
    if k == 0 || k > p {
        return Err(ChitaError::KOutOfRange { k, p });
    }
    Ok(())
}

/// Indices of the `k` largest entries of `|x|`, returned in ascending index
/// order. Ties in magnitude break toward the smaller index, which makes the
/// selection a total order and the result fully deterministic.
pub fn topk_indices(x: ArrayView1<f64>, k: usize) -> Result<Vec<usize>> {
    check_k(k, x.len())?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(ChitaError::NonFinite("topk input"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let by_magnitude = |&i: &usize, &j: &usize| {
        x[j].abs()
            .partial_cmp(&x[i].abs())
            .expect("entries checked finite")
            .then(i.cmp(&j))
    };
    if k < x.len() {
        idx.select_nth_unstable_by(k - 1, by_magnitude);
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// `P_k(x)`: keeps the `k` largest-magnitude entries (ties toward smaller
/// index) and zeroes the rest.
pub fn hard_threshold(x: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
    let keep = topk_indices(x, k)?;
    let mut out = Array1::zeros(x.len());
    for j in keep {
        out[j] = x[j];
    }
    Ok(out)
}

/// One hard-thresholding step: `P_k(w - step * grad Q(w))`.
pub fn ht_step(
    inst: &ProblemInstance,
    w: &Array1<f64>,
    k: usize,
    step: f64,
) -> Result<Array1<f64>> {
    if !step.is_finite() {
        return Err(ChitaError::NonFinite("step size"));
    }
    let grad = inst.gradient(w)?;
    let moved = w - &(step * &grad);
    hard_threshold(moved.view(), k)
}

/// Result of the power-method bound on the step-size constant.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzEstimate {
    /// `n*lambda + sigma_max(A)^2`, inflated by `(1 + tol)` on the spectral
    /// part so the value upper-bounds the true constant with high confidence.
    pub value: f64,
    /// False when the iteration cap was hit before the relative change of
    /// the Rayleigh quotient fell below `tol`.
    pub converged: bool,
    pub iterations: usize,
}

/// Upper bound `L = n*lambda + sigma_max(A)^2` via power iteration on
/// `A^T A`, applied only through matvecs (no p x p product is formed).
pub fn lipschitz_upper(inst: &ProblemInstance, tol: f64) -> Result<LipschitzEstimate> {
    lipschitz_upper_capped(inst, tol, POWER_ITERATION_CAP)
}

/// Same as [`lipschitz_upper`] with an explicit iteration cap.
pub fn lipschitz_upper_capped(
    inst: &ProblemInstance,
    tol: f64,
    max_iters: usize,
) -> Result<LipschitzEstimate> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(ChitaError::InvalidParameter {
            name: "tol",
            reason: format!("must be finite and > 0, got {tol}"),
        });
    }
    let p = inst.p();
    // Fixed-seed start vector keeps the estimate reproducible across runs.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut v: Array1<f64> = Array1::from_iter((0..p).map(|_| StandardNormal.sample(&mut rng)));
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        // p >= 1 Gaussian draws are never all zero in practice; defensive.
        v[0] = 1.0;
    } else {
        v /= norm;
    }

    let mut sigma_sq = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let u = inst.a().matvec(v.view());
        let z = inst.a().tmatvec(u.view());
        let est = v.dot(&z); // Rayleigh quotient of A^T A at unit v
        let znorm = z.dot(&z).sqrt();
        if znorm == 0.0 {
            // v is (numerically) in the null space; for A = 0 this is exact.
            sigma_sq = 0.0;
            converged = true;
            break;
        }
        let change = (est - sigma_sq).abs();
        sigma_sq = est;
        v = z / znorm;
        if it > 1 && change <= tol * sigma_sq.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(LipschitzEstimate {
        value: inst.ridge_weight() + sigma_sq * (1.0 + tol),
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_problem, GradientMatrix};
    use crate::synthetic::{standard_normal_matrix, standard_normal_vector};
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Oracle: full stable sort by (|x| desc, index asc).
    fn sorted_topk(x: &Array1<f64>, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| {
            x[j].abs()
                .partial_cmp(&x[i].abs())
                .unwrap()
                .then(i.cmp(&j))
        });
        let mut keep: Vec<usize> = idx.into_iter().take(k).collect();
        keep.sort_unstable();
        keep
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let x = standard_normal_vector(50, 3);
        assert_eq!(topk_indices(x.view(), 7).unwrap(), sorted_topk(&x, 7));
        for k in [1usize, 2, 25, 49, 50] {
            assert_eq!(topk_indices(x.view(), k).unwrap(), sorted_topk(&x, k));
        }
    }

    #[test]
    fn topk_ties_break_toward_smaller_index() {
        let x = Array1::from(vec![1.0, -1.0, 1.0]);
        assert_eq!(topk_indices(x.view(), 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn topk_rejects_bad_k() {
        let x = Array1::from(vec![1.0, 2.0]);
        assert!(matches!(
            topk_indices(x.view(), 0),
            Err(ChitaError::KOutOfRange { .. })
        ));
        assert!(matches!(
            topk_indices(x.view(), 3),
            Err(ChitaError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn hard_threshold_keeps_largest_magnitudes() {
        let x = Array1::from(vec![3.0, -1.0, 2.0, 0.0]);
        let t = hard_threshold(x.view(), 2).unwrap();
        assert_eq!(t, Array1::from(vec![3.0, 0.0, 2.0, 0.0]));
    }

    #[test]
    fn threshold_error_is_sum_of_smallest_squares() {
        // Oracle: sort the squared entries; the projection error must equal
        // the sum of the p - k smallest.
        let x = standard_normal_vector(100, 4);
        let t = hard_threshold(x.view(), 10).unwrap();
        let err: f64 = x
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mut sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: f64 = sq.iter().take(90).sum();
        assert!((err - expect).abs() <= 1e-12 * (1.0 + expect));
    }

    #[test]
    fn best_k_sparse_approximation() {
        // P_k(x) minimizes ||x - z|| over all k-sparse z: compare against
        // 200 random k-sparse candidates.
        let x = standard_normal_vector(40, 5);
        let t = hard_threshold(x.view(), 6).unwrap();
        let base: f64 = x.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        for seed in 0..200u64 {
            let z = crate::synthetic::random_feasible_w(40, 6, seed);
            let d: f64 = x.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(base <= d + 1e-12);
        }
    }

    #[test]
    fn ht_step_composes_gradient_and_projection() {
        let a = GradientMatrix::new(standard_normal_matrix(5, 12, 5)).unwrap();
        let wbar = standard_normal_vector(12, 55);
        let inst = build_problem(a, wbar, 0.3, 4, 1.0).unwrap();
        let w = standard_normal_vector(12, 56);
        let got = ht_step(&inst, &w, 4, 0.1).unwrap();

        let grad = inst.gradient(&w).unwrap();
        let moved = &w - &(0.1 * &grad);
        let keep = sorted_topk(&moved, 4);
        let mut expect = Array1::zeros(12);
        for j in keep {
            expect[j] = moved[j];
        }
        for j in 0..12 {
            assert!((got[j] - expect[j]).abs() <= 1e-12 * (1.0 + expect[j].abs()));
        }
    }

    #[test]
    fn ht_step_with_zero_step_is_projection() {
        let inst = crate::synthetic::random_problem(4, 9, 3, 0.2, 6).unwrap();
        let w = standard_normal_vector(9, 60);
        let got = ht_step(&inst, &w, 3, 0.0).unwrap();
        let expect = hard_threshold(w.view(), 3).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn lipschitz_matches_svd_oracle() {
        // Oracle: dense SVD via nalgebra, a completely separate code path
        // from the power iteration under test.
        let tol = 1e-4;
        let a = standard_normal_matrix(8, 20, 6);
        let wbar = standard_normal_vector(20, 61);
        let inst = build_problem(GradientMatrix::new(a.clone()).unwrap(), wbar, 0.1, 5, 1.0)
            .unwrap();
        let est = lipschitz_upper(&inst, tol).unwrap();
        assert!(est.converged);

        let m = nalgebra::DMatrix::from_row_iterator(8, 20, a.iter().cloned());
        let smax = m.singular_values().max();
        let expect = 8.0 * 0.1 + smax * smax;
        assert!(
            (est.value - expect).abs() <= 2.0 * tol * expect,
            "power {} vs svd {}",
            est.value,
            expect
        );
    }

    #[test]
    fn lipschitz_zero_matrix_is_exact_ridge_weight() {
        let a = GradientMatrix::new(Array2::zeros((4, 6))).unwrap();
        let wbar = standard_normal_vector(6, 62);
        let inst = build_problem(a, wbar, 2.0, 2, 1.0).unwrap();
        let est = lipschitz_upper(&inst, 1e-4).unwrap();
        assert_eq!(est.value, 8.0);
        assert!(est.converged);
    }

    #[test]
    fn lipschitz_diagonal_two_by_two() {
        let mut d = Array2::zeros((2, 2));
        d[[0, 0]] = 3.0;
        d[[1, 1]] = 1.0;
        let inst = build_problem(
            GradientMatrix::new(d).unwrap(),
            Array1::zeros(2),
            0.0,
            1,
            1.0,
        )
        .unwrap();
        let tol = 1e-6;
        let est = lipschitz_upper(&inst, tol).unwrap();
        assert!(est.converged);
        assert!((est.value - 9.0).abs() <= 2.0 * tol * 9.0);
    }

    #[test]
    fn lipschitz_reports_non_convergence_at_tiny_cap() {
        let inst = crate::synthetic::random_problem(6, 15, 3, 0.0, 7).unwrap();
        let est = lipschitz_upper_capped(&inst, 1e-15, 2).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
    }

    proptest! {
        #[test]
        fn hard_threshold_is_idempotent(seed in 0u64..500, p in 1usize..40, k in 1usize..40) {
            let k = k.min(p);
            let x = standard_normal_vector(p, seed);
            let once = hard_threshold(x.view(), k).unwrap();
            let twice = hard_threshold(once.view(), k).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn topk_returns_k_ascending_unique(seed in 0u64..500, p in 1usize..40, k in 1usize..40) {
            let k = k.min(p);
            let x = standard_normal_vector(p, seed);
            let idx = topk_indices(x.view(), k).unwrap();
            prop_assert_eq!(idx.len(), k);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&j| j < p));
        }
    }
}
