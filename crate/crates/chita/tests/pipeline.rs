//! Cross-module pipelines: the pieces the inline unit tests cover one at a
//! time, wired together the way a caller would actually use them.

use chita::activeset::{chita_cd_traced, DEFAULT_ACTIVE_MULT};
use chita::backsolve::{chita_bso_traced, chita_bso_with};
use chita::baselines::magnitude_prune;
use chita::blockwise::solve_blockwise;
use chita::fisher::{
    build_fisher_matrix, gaussian_blobs, train_toy_mlp, true_loss, MlpOracle, ToyMlp,
};
use chita::kernels::hard_threshold;
use chita::multistage::{chita_pp_traced, make_schedule, ScheduleKind, StageSolver};
use chita::solver::{iht_cd_traced, SolverConfig};
use chita::synthetic::{mix_seed, random_problem};

const SEED: u64 = 0x0F1B_E11E;

fn assert_non_increasing(label: &str, trace: &[f64]) {
    for (t, pair) in trace.windows(2).enumerate() {
        let slack = 1e-9 * (1.0 + pair[0].abs());
        assert!(
            pair[1] <= pair[0] + slack,
            "{label}: objective rose at step {t}: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

/// Every solver entered at the anchor must end at or below the magnitude
/// baseline: they all start by projecting onto k nonzeros and descend from
/// there.
#[test]
fn solvers_descend_from_the_magnitude_baseline() {
    let cfg = SolverConfig::default();
    for t in 0..6u64 {
        let inst = random_problem(12, 90, 15, 0.1, mix_seed(SEED, t)).unwrap();
        let k = inst.k();
        let baseline = magnitude_prune(&inst, k).unwrap().objective;

        let (iht, iht_trace) = iht_cd_traced(&inst, inst.wbar(), k, &cfg).unwrap();
        let (act, act_trace) =
            chita_cd_traced(&inst, inst.wbar(), k, &cfg, DEFAULT_ACTIVE_MULT).unwrap();
        let (bso, bso_trace) = chita_bso_traced(&inst, inst.wbar(), k, cfg.t_ht).unwrap();

        assert_non_increasing("iht_cd", &iht_trace);
        assert_non_increasing("chita_cd", &act_trace.objectives);
        assert_non_increasing("chita_bso", &bso_trace);
        let slack = 1e-9 * (1.0 + baseline.abs());
        for (label, sol) in [("iht_cd", &iht), ("chita_cd", &act), ("chita_bso", &bso)] {
            assert!(
                sol.objective <= baseline + slack,
                "{label} lost to magnitude pruning on seed {t}: {} vs {baseline}",
                sol.objective,
            );
            assert!(sol.nnz() <= k, "{label} is infeasible on seed {t}");
        }
    }
}

/// A single block spanning all coordinates rebuilds the parent instance
/// exactly, so the decomposition must reproduce the direct backsolve.
#[test]
fn single_block_decomposition_matches_direct_backsolve() {
    let inst = random_problem(20, 60, 12, 0.1, mix_seed(SEED, 100)).unwrap();
    let cfg = SolverConfig::default();

    let whole = solve_blockwise(&inst, &[0..60], &cfg).unwrap();
    let w0 = hard_threshold(inst.wbar().view(), 12).unwrap();
    let direct = chita_bso_with(&inst, &w0, 12, &cfg).unwrap();

    let gap = (&whole.weights - &direct.weights).mapv(f64::abs).sum();
    assert!(gap <= 1e-10, "weights diverged: L1 gap {gap}");
    let rel = (whole.objective - direct.objective).abs() / (1.0 + direct.objective.abs());
    assert!(rel <= 1e-12, "objectives diverged: {rel}");
}

/// Oracle -> gradient-matrix assembly -> gradual blockwise sparsification.
/// The staged result must respect every stage budget, descend within each
/// stage, and land far below naive one-shot magnitude truncation on the
/// true (dataset) loss.
#[test]
fn multistage_blockwise_pipeline_beats_one_shot_truncation() {
    let mlp = ToyMlp::new(8, 40, 3).unwrap();
    let layer_sizes = mlp.layer_sizes();
    let p = mlp.num_params();
    let (x, y) = gaussian_blobs(200, 8, 3, mix_seed(SEED, 200)).unwrap();
    let oracle = MlpOracle::new(mlp, x, y).unwrap();
    let wbar = train_toy_mlp(&oracle, 3, 16, 0.05, mix_seed(SEED, 201)).unwrap();

    let schedule = make_schedule(ScheduleKind::Exponential, 0.5, 0.9, 3).unwrap();
    let solver = StageSolver::BlockwiseBacksolve {
        cfg: SolverConfig::default(),
        block_cap: 110,
        layer_sizes,
    };
    let (sol, reports) = chita_pp_traced(
        &oracle,
        &wbar,
        &schedule,
        25,
        6,
        1e-3,
        &solver,
        mix_seed(SEED, 202),
    )
    .unwrap();

    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert_non_increasing(&format!("stage {}", r.stage), &r.objective_trace);
        assert!(r.nnz <= r.k, "stage {} used {} of {}", r.stage, r.nnz, r.k);
    }
    let k_final = ((1.0 - 0.9) * p as f64).floor() as usize;
    assert!(sol.nnz() <= k_final);

    let truncated = hard_threshold(wbar.view(), k_final).unwrap();
    let loss_trunc = true_loss(&oracle, &truncated).unwrap();
    let loss_staged = true_loss(&oracle, &sol.weights).unwrap();
    assert!(
        loss_staged < loss_trunc,
        "staged {loss_staged} did not beat one-shot truncation {loss_trunc}"
    );
}

/// The matrix assembly feeding the stages must agree with the problem core:
/// with alpha from the assembly scale, the anchor's objective is the
/// documented closed form n * alpha^2 / 2.
#[test]
fn fisher_assembly_matches_objective_anchor_identity() {
    let mlp = ToyMlp::new(6, 20, 3).unwrap();
    let (x, y) = gaussian_blobs(120, 6, 3, mix_seed(SEED, 300)).unwrap();
    let oracle = MlpOracle::new(mlp, x, y).unwrap();
    let wbar = train_toy_mlp(&oracle, 2, 12, 0.05, mix_seed(SEED, 301)).unwrap();

    let n = 18usize;
    let (a, alpha) = build_fisher_matrix(&oracle, &wbar, n, 5, mix_seed(SEED, 302)).unwrap();
    let inst = chita::build_problem(a, wbar.clone(), 0.1, 10, alpha).unwrap();
    let want = n as f64 * alpha * alpha / 2.0;
    let got = inst.objective(&wbar).unwrap();
    assert!(
        (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
        "anchor objective {got}, closed form {want}"
    );
}
