//! Core problem types: the low-rank gradient matrix, the l0-constrained
//! ridge instance, and sparse solutions.
//!
//! The objective throughout the crate is
//!
//! ```text
//! Q(w) = 1/2 * ||b - A w||^2 + (n*lambda/2) * ||w - wbar||^2,   ||w||_0 <= k
//! ```
//!
//! where `A` is n x p (row i is the average loss gradient of mini-batch i
//! evaluated at `wbar`) and `b = A wbar - alpha * e`. The quadratic curvature
//! `A^T A` is only ever applied through matrix-vector products; no p x p
//! matrix is formed anywhere.

use ndarray::{Array1, Array2, ArrayView1};
use std::ops::Range;

use crate::error::{ChitaError, Result};

/// Dense n x p matrix whose rows are per-mini-batch loss gradients.
#[derive(Debug, Clone)]
pub struct GradientMatrix {
    data: Array2<f64>,
}

impl GradientMatrix {
    /// Wraps a dense matrix, validating shape and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, p) = data.dim();
        if n == 0 || p == 0 {
            return Err(ChitaError::InvalidParameter {
                name: "gradient matrix shape",
                reason: format!("need n >= 1 and p >= 1, got {n} x {p}"),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(ChitaError::NonFinite("gradient matrix"));
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    /// `A v`, computed row-by-row so the access pattern stays contiguous.
    pub fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            out[i] = row.dot(&v);
        }
        out
    }

    /// `A^T u`, accumulated as a sum of scaled rows (row-major friendly).
    pub fn tmatvec(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.p());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            out.scaled_add(u[i], &row);
        }
        out
    }

    /// `A d` where `d` is `w` masked to `support`; O(n * |support|).
    pub fn matvec_masked(&self, w: &Array1<f64>, support: &[usize]) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let mut acc = 0.0;
            for &j in support {
                acc += row[j] * w[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    pub fn col_norm_sq(&self, j: usize) -> f64 {
        let c = self.data.column(j);
        c.dot(&c)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Copies the given columns (ascending, unique, in-bounds) into a new
    /// dense matrix.
    pub fn select_columns(&self, cols: &[usize]) -> Result<GradientMatrix> {
        validate_index_set(cols, self.p())?;
        let mut sub = Array2::zeros((self.n(), cols.len()));
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let mut out_row = sub.row_mut(i);
            for (t, &j) in cols.iter().enumerate() {
                out_row[t] = row[j];
            }
        }
        Ok(GradientMatrix { data: sub })
    }

    /// Copies a contiguous column range into a new dense matrix.
    pub fn slice_columns(&self, r: Range<usize>) -> Result<GradientMatrix> {
        if r.start >= r.end || r.end > self.p() {
            return Err(ChitaError::InvalidParameter {
                name: "column range",
                reason: format!("range {r:?} invalid for p = {}", self.p()),
            });
        }
        let data = self.data.slice(ndarray::s![.., r.start..r.end]).to_owned();
        Ok(GradientMatrix { data })
    }
}

/// Checks that an index list is strictly ascending and in-bounds.
pub(crate) fn validate_index_set(idx: &[usize], p: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(ChitaError::InvalidParameter {
            name: "index set",
            reason: "empty".to_string(),
        });
    }
    for (t, &j) in idx.iter().enumerate() {
        if j >= p {
            return Err(ChitaError::IndexOutOfBounds { index: j, len: p });
        }
        if t > 0 && idx[t - 1] >= j {
            return Err(ChitaError::InvalidParameter {
                name: "index set",
                reason: format!("not strictly ascending at position {t}"),
            });
        }
    }
    Ok(())
}

/// One l0-constrained ridge instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: GradientMatrix,
    wbar: Array1<f64>,
    b: Array1<f64>,
    lambda: f64,
    k: usize,
    alpha: f64,
}

/// Builds an instance with `b = A wbar - alpha * e`.
pub fn build_problem(
    a: GradientMatrix,
    wbar: Array1<f64>,
    lambda: f64,
    k: usize,
    alpha: f64,
) -> Result<ProblemInstance> {
    ProblemInstance::new(a, wbar, lambda, k, alpha)
}

impl ProblemInstance {
    /// Canonical constructor: computes `b = A wbar - alpha * e` itself, so
    /// the right-hand-side identity holds by construction.
    pub fn new(
        a: GradientMatrix,
        wbar: Array1<f64>,
        lambda: f64,
        k: usize,
        alpha: f64,
    ) -> Result<Self> {
        validate_common(&a, &wbar, lambda, k, alpha)?;
        let mut b = a.matvec(wbar.view());
        b -= alpha;
        Ok(Self {
            a,
            wbar,
            b,
            lambda,
            k,
            alpha,
        })
    }

    /// Constructor with an explicit right-hand side. Needed for restricted
    /// subproblems (active-set solves keep the parent's `b` while dropping
    /// columns), where `b != A_sub wbar_sub - alpha e` by design.
    pub fn with_rhs(
        a: GradientMatrix,
        wbar: Array1<f64>,
        b: Array1<f64>,
        lambda: f64,
        k: usize,
        alpha: f64,
    ) -> Result<Self> {
        validate_common(&a, &wbar, lambda, k, alpha)?;
        if b.len() != a.n() {
            return Err(ChitaError::DimensionMismatch {
                what: "right-hand side b",
                expected: a.n(),
                got: b.len(),
            });
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(ChitaError::NonFinite("right-hand side b"));
        }
        Ok(Self {
            a,
            wbar,
            b,
            lambda,
            k,
            alpha,
        })
    }

    pub fn a(&self) -> &GradientMatrix {
        &self.a
    }

    pub fn wbar(&self) -> &Array1<f64> {
        &self.wbar
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn p(&self) -> usize {
        self.a.p()
    }

    /// The ridge coefficient `n * lambda` that multiplies `||w - wbar||^2 / 2`.
    pub fn ridge_weight(&self) -> f64 {
        self.n() as f64 * self.lambda
    }

    /// `b - A w`.
    pub fn residual(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_weights(w)?;
        let mut r = self.a.matvec(w.view());
        r.zip_mut_with(&self.b, |aw, bi| *aw = bi - *aw);
        Ok(r)
    }

    /// `Q(w)`; O(np) time, O(n + p) auxiliary space.
    pub fn objective(&self, w: &Array1<f64>) -> Result<f64> {
        let r = self.residual(w)?;
        let fit = 0.5 * r.dot(&r);
        let mut dist_sq = 0.0;
        for (wi, wb) in w.iter().zip(self.wbar.iter()) {
            let d = wi - wb;
            dist_sq += d * d;
        }
        Ok(fit + 0.5 * self.ridge_weight() * dist_sq)
    }

    /// `grad Q(w) = A^T (A w - b) + n*lambda*(w - wbar)`; two matvecs, O(np).
    pub fn gradient(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_weights(w)?;
        let mut t = self.a.matvec(w.view());
        t -= &self.b;
        let mut g = self.a.tmatvec(t.view());
        let nl = self.ridge_weight();
        if nl != 0.0 {
            for ((gi, wi), wb) in g.iter_mut().zip(w.iter()).zip(self.wbar.iter()) {
                *gi += nl * (wi - wb);
            }
        }
        Ok(g)
    }

    /// Restriction to a column subset, keeping this instance's `b`. The
    /// restricted objective differs from the full one only by the constant
    /// ridge contribution of the dropped coordinates.
    pub fn restrict(&self, cols: &[usize], k: usize) -> Result<ProblemInstance> {
        let a = self.a.select_columns(cols)?;
        let wbar = Array1::from_iter(cols.iter().map(|&j| self.wbar[j]));
        ProblemInstance::with_rhs(a, wbar, self.b.clone(), self.lambda, k, self.alpha)
    }

    fn check_weights(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.p() {
            return Err(ChitaError::DimensionMismatch {
                what: "weight vector",
                expected: self.p(),
                got: w.len(),
            });
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(ChitaError::NonFinite("weight vector"));
        }
        Ok(())
    }
}

fn validate_common(
    a: &GradientMatrix,
    wbar: &Array1<f64>,
    lambda: f64,
    k: usize,
    alpha: f64,
) -> Result<()> {
    if wbar.len() != a.p() {
        return Err(ChitaError::DimensionMismatch {
            what: "wbar",
            expected: a.p(),
            got: wbar.len(),
        });
    }
    if !wbar.iter().all(|v| v.is_finite()) {
        return Err(ChitaError::NonFinite("wbar"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ChitaError::InvalidParameter {
            name: "lambda",
            reason: format!("must be finite and >= 0, got {lambda}"),
        });
    }
    if k == 0 || k > a.p() {
        return Err(ChitaError::KOutOfRange { k, p: a.p() });
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ChitaError::InvalidParameter {
            name: "alpha",
            reason: format!("must be finite and > 0, got {alpha}"),
        });
    }
    Ok(())
}

/// A feasible point together with its support and cached objective value.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub weights: Array1<f64>,
    /// Ascending indices of the exact nonzeros of `weights`.
    pub support: Vec<usize>,
    pub objective: f64,
}

impl SparseSolution {
    /// Derives the support from the exact nonzeros of `weights`.
    pub fn from_weights(weights: Array1<f64>, objective: f64) -> Self {
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            weights,
            support,
            objective,
        }
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }
}
