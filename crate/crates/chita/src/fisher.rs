//! Gradient sources: a pluggable mini-batch gradient oracle, a small
//! bias-free MLP with manual backprop, low-rank gradient-matrix assembly,
//! and the first-order scale estimators.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ChitaError, Result};
use crate::problem::GradientMatrix;
use crate::synthetic::mix_seed;

/// A loss whose per-batch mean gradient can be evaluated at arbitrary
/// weights. Implementations must be safe for concurrent read-only
/// evaluation.
pub trait GradientOracle: Sync {
    /// Number of samples available.
    fn dataset_size(&self) -> usize;
    /// Length of the weight vector.
    fn num_params(&self) -> usize;
    /// Mean loss and mean gradient over the samples in `batch`.
    fn batch_eval(&self, w: &Array1<f64>, batch: &[usize]) -> Result<(f64, Array1<f64>)>;
}

/// Bias-free two-layer perceptron: input -> ReLU hidden -> softmax
/// cross-entropy. Weights live in one flat vector, first layer first, each
/// matrix row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyMlp {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
}

impl ToyMlp {
    pub fn new(d_in: usize, d_hidden: usize, d_out: usize) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || d_out < 2 {
            return Err(ChitaError::InvalidParameter {
                name: "mlp_widths",
                reason: format!("need d_in, d_hidden >= 1 and d_out >= 2, got ({d_in}, {d_hidden}, {d_out})"),
            });
        }
        Ok(Self { d_in, d_hidden, d_out })
    }

    pub fn num_params(&self) -> usize {
        self.d_in * self.d_hidden + self.d_hidden * self.d_out
    }

    /// Flattened lengths of the two weight matrices, in storage order.
    /// Feed this straight into the blockwise layer partitioner.
    pub fn layer_sizes(&self) -> Vec<usize> {
        vec![self.d_in * self.d_hidden, self.d_hidden * self.d_out]
    }

    fn check_w(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.num_params() {
            return Err(ChitaError::DimensionMismatch {
                what: "mlp weights",
                expected: self.num_params(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Class logits for one input row.
    pub fn logits(&self, w: &Array1<f64>, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_w(w)?;
        if x.len() != self.d_in {
            return Err(ChitaError::DimensionMismatch {
                what: "mlp input",
                expected: self.d_in,
                got: x.len(),
            });
        }
        let (act, z) = self.forward(w, x);
        let _ = act;
        Ok(z)
    }

    /// Hidden activations (post-ReLU) and logits.
    fn forward(&self, w: &Array1<f64>, x: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let ws = w.as_slice().expect("weights are contiguous");
        let (d_in, d_h, d_out) = (self.d_in, self.d_hidden, self.d_out);
        let off2 = d_in * d_h;
        let mut act = Array1::zeros(d_h);
        for h in 0..d_h {
            let row = &ws[h * d_in..(h + 1) * d_in];
            let mut s = 0.0;
            for (wi, xi) in row.iter().zip(x.iter()) {
                s += wi * xi;
            }
            // ReLU with derivative 0 at exactly 0.
            act[h] = if s > 0.0 { s } else { 0.0 };
        }
        let mut z = Array1::zeros(d_out);
        for o in 0..d_out {
            let row = &ws[off2 + o * d_h..off2 + (o + 1) * d_h];
            let mut s = 0.0;
            for (wi, ai) in row.iter().zip(act.iter()) {
                s += wi * ai;
            }
            z[o] = s;
        }
        (act, z)
    }

    /// Loss of one sample and its gradient *added* into `acc`.
    /// Returns the sample loss.
    fn accumulate_sample(
        &self,
        w: &Array1<f64>,
        x: ArrayView1<f64>,
        y: usize,
        acc: &mut Array1<f64>,
    ) -> f64 {
        let (act, z) = self.forward(w, x);
        let (d_in, d_h, d_out) = (self.d_in, self.d_hidden, self.d_out);
        let off2 = d_in * d_h;

        // Stable softmax cross-entropy.
        let zmax = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let sum_exp: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
        let lse = zmax + sum_exp.ln();
        let loss = lse - z[y];

        // dz = softmax(z) - onehot(y)
        let mut dz = Array1::zeros(d_out);
        for o in 0..d_out {
            dz[o] = (z[o] - lse).exp();
        }
        dz[y] -= 1.0;

        let ws = w.as_slice().expect("weights are contiguous");
        let accs = acc.as_slice_mut().expect("accumulator is contiguous");

        // Output layer: dW2[o, h] = dz[o] * act[h].
        for o in 0..d_out {
            let dzo = dz[o];
            if dzo == 0.0 {
                continue;
            }
            let dst = &mut accs[off2 + o * d_h..off2 + (o + 1) * d_h];
            for (d, a) in dst.iter_mut().zip(act.iter()) {
                *d += dzo * a;
            }
        }

        // Hidden layer: da[h] = sum_o W2[o, h] dz[o], gated by act > 0.
        for h in 0..d_h {
            if act[h] <= 0.0 {
                continue; // ReLU gate closed; no gradient flows to row h of W1
            }
            let mut da = 0.0;
            for o in 0..d_out {
                da += ws[off2 + o * d_h + h] * dz[o];
            }
            if da == 0.0 {
                continue;
            }
            let dst = &mut accs[h * d_in..(h + 1) * d_in];
            for (d, xi) in dst.iter_mut().zip(x.iter()) {
                *d += da * xi;
            }
        }
        loss
    }
}

/// Exact single-sample loss gradient via backprop.
pub fn per_sample_gradient(
    mlp: &ToyMlp,
    w: &Array1<f64>,
    x: ArrayView1<f64>,
    y: usize,
) -> Result<(f64, Array1<f64>)> {
    mlp.check_w(w)?;
    if x.len() != mlp.d_in {
        return Err(ChitaError::DimensionMismatch {
            what: "mlp input",
            expected: mlp.d_in,
            got: x.len(),
        });
    }
    if y >= mlp.d_out {
        return Err(ChitaError::IndexOutOfBounds {
            index: y,
            len: mlp.d_out,
        });
    }
    let mut g = Array1::zeros(mlp.num_params());
    let loss = mlp.accumulate_sample(w, x, y, &mut g);
    Ok((loss, g))
}

/// The MLP plus a fixed labeled dataset, exposed as a gradient oracle.
pub struct MlpOracle {
    pub mlp: ToyMlp,
    x: Array2<f64>,
    y: Vec<usize>,
}

impl MlpOracle {
    pub fn new(mlp: ToyMlp, x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(ChitaError::DimensionMismatch {
                what: "dataset labels",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() != mlp.d_in {
            return Err(ChitaError::DimensionMismatch {
                what: "dataset features",
                expected: mlp.d_in,
                got: x.ncols(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= mlp.d_out) {
            return Err(ChitaError::IndexOutOfBounds {
                index: bad,
                len: mlp.d_out,
            });
        }
        Ok(Self { mlp, x, y })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }
}

impl GradientOracle for MlpOracle {
    fn dataset_size(&self) -> usize {
        self.y.len()
    }

    fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn batch_eval(&self, w: &Array1<f64>, batch: &[usize]) -> Result<(f64, Array1<f64>)> {
        self.mlp.check_w(w)?;
        if batch.is_empty() {
            return Err(ChitaError::InvalidParameter {
                name: "batch",
                reason: "must be nonempty".into(),
            });
        }
        let m = batch.len() as f64;
        let mut g = Array1::zeros(self.num_params());
        let mut loss = 0.0;
        for &i in batch {
            if i >= self.y.len() {
                return Err(ChitaError::IndexOutOfBounds {
                    index: i,
                    len: self.y.len(),
                });
            }
            loss += self.mlp.accumulate_sample(w, self.x.row(i), self.y[i], &mut g);
        }
        g.mapv_inplace(|v| v / m);
        Ok((loss / m, g))
    }
}

/// Seeded Gaussian-blobs classification set: class means on a sphere of
/// radius 3, unit isotropic noise, labels round-robin so classes are
/// balanced.
pub fn gaussian_blobs(
    n_samples: usize,
    d: usize,
    classes: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if n_samples == 0 || d == 0 || classes < 2 {
        return Err(ChitaError::InvalidParameter {
            name: "blobs",
            reason: format!("need samples, d >= 1 and classes >= 2, got ({n_samples}, {d}, {classes})"),
        });
    }
    let mut means = Array2::zeros((classes, d));
    for c in 0..classes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xB10B_0000 + c as u64));
        let mut norm_sq = 0.0;
        for j in 0..d {
            let v: f64 = StandardNormal.sample(&mut rng);
            means[[c, j]] = v;
            norm_sq += v * v;
        }
        let scale = 3.0 / norm_sq.sqrt().max(1e-12);
        for j in 0..d {
            means[[c, j]] *= scale;
        }
    }
    let mut x = Array2::zeros((n_samples, d));
    let mut y = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let c = i % classes;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1 + i as u64));
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = means[[c, j]] + noise;
        }
        y.push(c);
    }
    Ok((x, y))
}

/// He-style seeded initialization for the flat weight vector.
pub fn init_mlp_params(mlp: &ToyMlp, seed: u64) -> Array1<f64> {
    let p = mlp.num_params();
    let mut w = crate::synthetic::standard_normal_vector(p, mix_seed(seed, 0x1417));
    let off2 = mlp.d_in * mlp.d_hidden;
    let s1 = (2.0 / mlp.d_in as f64).sqrt();
    let s2 = (2.0 / mlp.d_hidden as f64).sqrt();
    for (i, v) in w.iter_mut().enumerate() {
        *v *= if i < off2 { s1 } else { s2 };
    }
    w
}

/// Plain seeded mini-batch gradient descent. Deliberately few epochs: the
/// returned weights are near, not at, a stationary point, so the first-order
/// term of the pruning objective stays meaningful.
pub fn train_toy_mlp(
    oracle: &MlpOracle,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    if batch_size == 0 || !(lr.is_finite() && lr > 0.0) {
        return Err(ChitaError::InvalidParameter {
            name: "training",
            reason: format!("batch_size {batch_size}, lr {lr}"),
        });
    }
    let n = oracle.dataset_size();
    let mut w = init_mlp_params(&oracle.mlp, seed);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xE70C + epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let (_, g) = oracle.batch_eval(&w, chunk)?;
            w.scaled_add(-lr, &g);
        }
    }
    Ok(w)
}

/// Assemble the low-rank gradient matrix: `n` disjoint mini-batches of size
/// `m`, sampled without replacement (seeded), each row the batch-mean
/// gradient at `wbar`. Returns the matrix and the heuristic first-order
/// scale 1/m.
pub fn build_fisher_matrix<O: GradientOracle + ?Sized>(
    oracle: &O,
    wbar: &Array1<f64>,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(GradientMatrix, f64)> {
    if n == 0 || m == 0 {
        return Err(ChitaError::InvalidParameter {
            name: "fisher_shape",
            reason: format!("need n, m >= 1, got ({n}, {m})"),
        });
    }
    let total = oracle.dataset_size();
    if n * m > total {
        return Err(ChitaError::InsufficientData {
            needed: n * m,
            available: total,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xF15E));
    order.shuffle(&mut rng);

    let p = oracle.num_params();
    let mut a = Array2::zeros((n, p));
    for (row, chunk) in order[..n * m].chunks(m).enumerate() {
        let (_, g) = oracle.batch_eval(wbar, chunk)?;
        a.row_mut(row).assign(&g);
    }
    Ok((GradientMatrix::new(a)?, 1.0 / m as f64))
}

/// Mean loss over the whole dataset.
pub fn true_loss<O: GradientOracle + ?Sized>(oracle: &O, w: &Array1<f64>) -> Result<f64> {
    let all: Vec<usize> = (0..oracle.dataset_size()).collect();
    Ok(oracle.batch_eval(w, &all)?.0)
}

/// First-order scale as a curvature ratio: exact trace of the low-rank
/// surrogate (1/n)A^T A over a Hutchinson estimate of the true Hessian
/// trace, with Hessian-vector products taken by central finite differences
/// of the oracle gradient.
pub fn estimate_alpha_trace<O: GradientOracle + ?Sized>(
    oracle: &O,
    a: &GradientMatrix,
    wbar: &Array1<f64>,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(ChitaError::InvalidParameter {
            name: "probes",
            reason: "must be >= 1".into(),
        });
    }
    let p = oracle.num_params();
    if wbar.len() != p || a.p() != p {
        return Err(ChitaError::DimensionMismatch {
            what: "trace-estimator weights",
            expected: p,
            got: wbar.len(),
        });
    }
    let numerator = a.frobenius_norm_sq() / a.n() as f64;

    let winf = wbar.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    let eps = 1e-4 * (1.0 + winf);
    let all: Vec<usize> = (0..oracle.dataset_size()).collect();

    let mut acc = 0.0;
    for j in 0..probes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xA1FA + j as u64));
        let v = Array1::from_iter((0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
        let plus = &*wbar + &(eps * &v);
        let minus = &*wbar - &(eps * &v);
        let (_, gp) = oracle.batch_eval(&plus, &all)?;
        let (_, gm) = oracle.batch_eval(&minus, &all)?;
        let hv = (&gp - &gm) / (2.0 * eps);
        acc += v.dot(&hv);
    }
    let denominator = acc / probes as f64;
    if denominator <= 0.0 {
        return Err(ChitaError::IndeterminateCurvature);
    }
    Ok(numerator / denominator)
}
