//! Multi-stage pruning: a rising sparsity schedule drives repeated
//! re-linearization. Each stage rebuilds the gradient matrix at the current
//! iterate (fresh seeded mini-batches), re-anchors the ridge there, tightens
//! the budget, and re-solves. No retraining happens between stages.

use ndarray::Array1;

use crate::activeset::chita_cd_traced;
use crate::blockwise::{partition_layers, solve_blockwise};
use crate::error::{ChitaError, Result};
use crate::fisher::{build_fisher_matrix, GradientOracle};
use crate::problem::{build_problem, SparseSolution};
use crate::solver::SolverConfig;
use crate::synthetic::mix_seed;

/// How stage sparsities interpolate from the first to the final value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Equal sparsity steps.
    Linear,
    /// Every stage already at the final sparsity.
    Constant,
    /// Geometric interpolation of density 1 - tau: sparsity steps shrink as
    /// sparsity rises.
    Exponential,
}

/// A validated, fully materialized stage-sparsity sequence.
#[derive(Debug, Clone)]
pub struct SparsitySchedule {
    pub kind: ScheduleKind,
    pub tau_first: f64,
    pub tau_final: f64,
    pub values: Vec<f64>,
}

impl SparsitySchedule {
    pub fn stages(&self) -> usize {
        self.values.len()
    }
}

/// Build a schedule of `f` stages from `tau_first` to `tau_final`
/// (0 < tau_first <= tau_final < 1). With f = 1, every kind degenerates to
/// the single final sparsity.
pub fn make_schedule(
    kind: ScheduleKind,
    tau_first: f64,
    tau_final: f64,
    f: usize,
) -> Result<SparsitySchedule> {
    if f == 0 {
        return Err(ChitaError::InvalidParameter {
            name: "stages",
            reason: "must be >= 1".into(),
        });
    }
    if !(tau_first.is_finite() && tau_final.is_finite())
        || tau_first <= 0.0
        || tau_first > tau_final
        || tau_final >= 1.0
    {
        return Err(ChitaError::InvalidParameter {
            name: "sparsity_range",
            reason: format!("need 0 < tau_first <= tau_final < 1, got ({tau_first}, {tau_final})"),
        });
    }
    let values = if f == 1 {
        vec![tau_final]
    } else {
        (1..=f)
            .map(|t| {
                let frac = (t - 1) as f64 / (f - 1) as f64;
                match kind {
                    ScheduleKind::Constant => tau_final,
                    ScheduleKind::Linear => tau_first + frac * (tau_final - tau_first),
                    ScheduleKind::Exponential => {
                        let d1 = 1.0 - tau_first;
                        let df = 1.0 - tau_final;
                        1.0 - d1 * (df / d1).powf(frac)
                    }
                }
            })
            .collect()
    };
    Ok(SparsitySchedule {
        kind,
        tau_first,
        tau_final,
        values,
    })
}

/// Which single-stage solver each stage runs.
#[derive(Debug, Clone)]
pub enum StageSolver {
    /// Active-set iterations (good default at moderate dimensions).
    ActiveSet { cfg: SolverConfig, active_mult: f64 },
    /// Blockwise decomposition with an exact per-block backsolve (for wide
    /// problems). `layer_sizes` must sum to the number of parameters.
    BlockwiseBacksolve {
        cfg: SolverConfig,
        block_cap: usize,
        layer_sizes: Vec<usize>,
    },
}

/// One stage's bookkeeping.
#[derive(Debug, Clone)]
pub struct StageReport {
    /// 1-based stage number.
    pub stage: usize,
    pub sparsity: f64,
    /// Nonzero budget of this stage.
    pub k: usize,
    /// Objective values of the stage's solver run (non-increasing).
    pub objective_trace: Vec<f64>,
    /// Nonzeros actually used by the stage output.
    pub nnz: usize,
}

/// Multi-stage solve. Stage t rebuilds the gradient matrix from `n` fresh
/// disjoint mini-batches of size `m` at the previous iterate (stage-salted
/// seed), anchors the ridge there, and solves under k = floor((1 - tau_t) p).
pub fn chita_pp<O: GradientOracle + ?Sized>(
    oracle: &O,
    wbar: &Array1<f64>,
    schedule: &SparsitySchedule,
    n: usize,
    m: usize,
    lambda: f64,
    solver: &StageSolver,
    seed: u64,
) -> Result<SparseSolution> {
    chita_pp_traced(oracle, wbar, schedule, n, m, lambda, solver, seed).map(|(s, _)| s)
}

/// [`chita_pp`] plus per-stage reports.
#[allow(clippy::too_many_arguments)]
pub fn chita_pp_traced<O: GradientOracle + ?Sized>(
    oracle: &O,
    wbar: &Array1<f64>,
    schedule: &SparsitySchedule,
    n: usize,
    m: usize,
    lambda: f64,
    solver: &StageSolver,
    seed: u64,
) -> Result<(SparseSolution, Vec<StageReport>)> {
    let p = oracle.num_params();
    if wbar.len() != p {
        return Err(ChitaError::DimensionMismatch {
            what: "multistage weights",
            expected: p,
            got: wbar.len(),
        });
    }

    let mut w = wbar.clone();
    let mut reports = Vec::with_capacity(schedule.stages());
    let mut last: Option<SparseSolution> = None;

    for (idx, &tau) in schedule.values.iter().enumerate() {
        let stage = idx + 1;
        let k = ((1.0 - tau) * p as f64).floor() as usize;
        if k == 0 {
            return Err(ChitaError::InfeasibleStage { stage, sparsity: tau });
        }
        let (a, alpha) = build_fisher_matrix(oracle, &w, n, m, mix_seed(seed, stage as u64))?;
        let inst = build_problem(a, w.clone(), lambda, k, alpha)?;

        let (sol, trace) = match solver {
            StageSolver::ActiveSet { cfg, active_mult } => {
                let (sol, tr) = chita_cd_traced(&inst, &w, k, cfg, *active_mult)?;
                (sol, tr.objectives)
            }
            StageSolver::BlockwiseBacksolve {
                cfg,
                block_cap,
                layer_sizes,
            } => {
                let blocks = partition_layers(layer_sizes, *block_cap)?;
                let sol = solve_blockwise(&inst, &blocks, cfg)?;
                let q = sol.objective;
                (sol, vec![q])
            }
        };

        reports.push(StageReport {
            stage,
            sparsity: tau,
            k,
            objective_trace: trace,
            nnz: sol.nnz(),
        });
        w = sol.weights.clone();
        last = Some(sol);
    }

    Ok((last.expect("schedule has >= 1 stage"), reports))
}
