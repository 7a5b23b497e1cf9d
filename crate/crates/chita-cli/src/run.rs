//! The three commands. `gen` writes seeded inputs, `prune` runs one solver
//! over files and appends a benchmark CSV row, `verify` executes an oracle
//! suite and reports per-property pass/fail.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::Serialize;

use chita::activeset::chita_cd_traced;
use chita::backsolve::chita_bso_traced;
use chita::baselines::magnitude_prune;
use chita::blockwise::{partition_layers, solve_blockwise};
use chita::fisher::{build_fisher_matrix, gaussian_blobs, train_toy_mlp, MlpOracle, ToyMlp};
use chita::multistage::make_schedule;
use chita::problem::{build_problem, GradientMatrix, ProblemInstance, SparseSolution};
use chita::solver::iht_cd_traced;
use chita::synthetic::{mix_seed, standard_normal_vector, synthetic_gradient_matrix};
use chita::verify;

use crate::config::{RunConfig, SolverName};
use crate::io::{
    read_layers, read_matrix, read_vector, write_layers, write_matrix, write_solution,
    write_vector, LayerEntry, SolutionFile,
};
use crate::CliError;

/// File names `gen` writes and `prune` expects by default.
pub const MATRIX_FILE: &str = "a.mtx";
pub const WBAR_FILE: &str = "wbar.vec";
pub const LAYERS_FILE: &str = "layers.json";
pub const FEATURES_FILE: &str = "features.mtx";
pub const LABELS_FILE: &str = "labels.vec";
pub const SOLUTION_FILE: &str = "solution.json";
pub const RESULTS_FILE: &str = "results.csv";

pub struct GenSynthetic {
    pub n: usize,
    pub p: usize,
    pub scale_spread: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub struct GenToyMlp {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Gradient-matrix rows.
    pub n: usize,
    /// Mini-batch size per row.
    pub m: usize,
    pub seed: u64,
    pub out: PathBuf,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Seeded synthetic instance: a gradient matrix with log-uniform column
/// scalings and a standard-normal anchor. Byte-reproducible per seed.
pub fn cmd_gen_synthetic(args: &GenSynthetic) -> Result<(), CliError> {
    ensure_dir(&args.out)?;
    let a = synthetic_gradient_matrix(args.n, args.p, args.seed, args.scale_spread)?;
    let wbar = standard_normal_vector(args.p, mix_seed(args.seed, 3));
    write_matrix(&args.out.join(MATRIX_FILE), a.as_array())?;
    write_vector(&args.out.join(WBAR_FILE), &wbar)?;
    Ok(())
}

/// Train the toy MLP on seeded Gaussian blobs, then write the gradient
/// matrix at the trained weights, the weights, the layer map, and the
/// dataset snapshot (features + labels). Byte-reproducible per seed.
pub fn cmd_gen_toy_mlp(args: &GenToyMlp) -> Result<(), CliError> {
    ensure_dir(&args.out)?;
    let mlp = ToyMlp::new(args.d_in, args.d_hidden, args.d_out)?;
    let (x, y) = gaussian_blobs(args.samples, args.d_in, args.d_out, mix_seed(args.seed, 1))?;
    let oracle = MlpOracle::new(mlp, x, y)?;
    let wbar = train_toy_mlp(&oracle, args.epochs, args.batch_size, args.lr, mix_seed(args.seed, 2))?;
    let (a, _) = build_fisher_matrix(&oracle, &wbar, args.n, args.m, mix_seed(args.seed, 3))?;

    write_matrix(&args.out.join(MATRIX_FILE), a.as_array())?;
    write_vector(&args.out.join(WBAR_FILE), &wbar)?;
    let layers = vec![
        LayerEntry {
            name: "w1".into(),
            length: (mlp.d_in * mlp.d_hidden) as u64,
        },
        LayerEntry {
            name: "w2".into(),
            length: (mlp.d_hidden * mlp.d_out) as u64,
        },
    ];
    write_layers(&args.out.join(LAYERS_FILE), &layers)?;
    write_matrix(&args.out.join(FEATURES_FILE), oracle.features())?;
    let labels = Array1::from_iter(oracle.labels().iter().map(|&c| c as f64));
    write_vector(&args.out.join(LABELS_FILE), &labels)?;
    Ok(())
}

/// One benchmark result row. Column order is part of the CSV contract.
#[derive(Debug, Serialize, PartialEq)]
pub struct CsvRow {
    pub solver: String,
    pub p: u64,
    pub n: u64,
    pub k: u64,
    pub lambda: f64,
    pub seed: u64,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub nnz: u64,
    pub wall_ms: u64,
    pub iterations: u64,
}

fn append_csv(path: &Path, row: &CsvRow) -> Result<(), CliError> {
    let new_file = !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(new_file)
        .from_writer(file);
    w.serialize(row)
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))
}

/// Multi-stage solve over a fixed gradient matrix: each stage re-anchors
/// the ridge at the previous iterate and tightens the budget along the
/// schedule. (Re-sampling fresh gradients per stage needs a live model
/// oracle; a file input only supports re-anchoring.)
fn multistage_from_file(
    a: &Array2<f64>,
    wbar: &Array1<f64>,
    cfg: &RunConfig,
    k_final: usize,
) -> Result<(SparseSolution, u64), CliError> {
    let p = wbar.len();
    let tau_final = 1.0 - k_final as f64 / p as f64;
    if tau_final <= 0.0 {
        return Err(CliError::Config(
            "multistage needs a budget below p (final sparsity must be positive)".into(),
        ));
    }
    let tau_first = cfg.tau_first.unwrap_or(tau_final / 2.0);
    let schedule = make_schedule(cfg.schedule.into(), tau_first, tau_final, cfg.stages)?;
    let scfg = cfg.solver_config();

    let mut w = wbar.clone();
    let mut last: Option<SparseSolution> = None;
    for &tau in &schedule.values {
        let k_t = ((1.0 - tau) * p as f64).floor() as usize;
        if k_t == 0 {
            return Err(CliError::Infeasible(format!(
                "stage sparsity {tau} leaves a zero budget"
            )));
        }
        let inst = build_problem(
            GradientMatrix::new(a.clone())?,
            w.clone(),
            cfg.lambda,
            k_t,
            cfg.alpha(),
        )?;
        let (sol, _) = chita_cd_traced(&inst, &w, k_t, &scfg, cfg.active_mult)?;
        w = sol.weights.clone();
        last = Some(sol);
    }
    Ok((last.expect("stages >= 1"), cfg.stages as u64))
}

fn dispatch_solver(
    cfg: &RunConfig,
    inst: &ProblemInstance,
    a: &Array2<f64>,
    wbar: &Array1<f64>,
    k: usize,
    layer_sizes: &[usize],
) -> Result<(SparseSolution, u64), CliError> {
    let scfg = cfg.solver_config();
    match cfg.solver {
        SolverName::IhtCd => {
            let (sol, trace) = iht_cd_traced(inst, wbar, k, &scfg)?;
            Ok((sol, trace.len().saturating_sub(1) as u64))
        }
        SolverName::ChitaCd => {
            let (sol, trace) = chita_cd_traced(inst, wbar, k, &scfg, cfg.active_mult)?;
            Ok((sol, trace.objectives.len() as u64))
        }
        SolverName::ChitaBso => {
            let (sol, trace) = chita_bso_traced(inst, wbar, k, cfg.t_ht)?;
            Ok((sol, trace.len() as u64))
        }
        SolverName::Blockwise => {
            let blocks = partition_layers(layer_sizes, cfg.block_size)?;
            let sol = solve_blockwise(inst, &blocks, &scfg)?;
            Ok((sol, 1))
        }
        SolverName::Multistage => {
            let (sol, stages) = multistage_from_file(a, wbar, cfg, k)?;
            // The staged path re-anchors per stage; report its result
            // against the original instance like every other solver.
            let q = inst.objective(&sol.weights)?;
            Ok((SparseSolution::from_weights(sol.weights, q), stages))
        }
        SolverName::Magnitude => {
            let sol = magnitude_prune(inst, k)?;
            Ok((sol, 0))
        }
    }
}

/// Run one pruning job: read inputs, solve, write `solution.json`, append a
/// row to `results.csv`. Returns the row.
pub fn cmd_prune(
    config_path: &Path,
    matrix_path: &Path,
    wbar_path: &Path,
    layers_path: Option<&Path>,
    out_dir: &Path,
) -> Result<CsvRow, CliError> {
    let (cfg, digest) = RunConfig::load(config_path)?;
    let a = read_matrix(matrix_path)?;
    let wbar = read_vector(wbar_path)?;
    if wbar.len() != a.ncols() {
        return Err(CliError::Format {
            path: wbar_path.display().to_string(),
            offset: 16,
            detail: format!(
                "weight vector has {} entries but the matrix has {} columns",
                wbar.len(),
                a.ncols()
            ),
        });
    }
    let layer_sizes: Vec<usize> = match layers_path {
        Some(lp) => {
            let layers = read_layers(lp)?;
            let sizes: Vec<usize> = layers.iter().map(|l| l.length as usize).collect();
            let total: usize = sizes.iter().sum();
            if total != wbar.len() {
                return Err(CliError::Format {
                    path: lp.display().to_string(),
                    offset: 0,
                    detail: format!("layer lengths sum to {total}, expected {}", wbar.len()),
                });
            }
            sizes
        }
        None => vec![wbar.len()],
    };

    let k = cfg.resolve_k(wbar.len())?;
    let inst = build_problem(
        GradientMatrix::new(a.clone())?,
        wbar.clone(),
        cfg.lambda,
        k,
        cfg.alpha(),
    )?;
    // The magnitude projection of the anchor is the natural "before"
    // reading: it is what pruning without any optimization would score.
    let objective_initial = magnitude_prune(&inst, k)?.objective;

    let start = Instant::now();
    let (sol, iterations) = dispatch_solver(&cfg, &inst, &a, &wbar, k, &layer_sizes)?;
    let wall_ms = start.elapsed().as_millis() as u64;

    ensure_dir(out_dir)?;
    let solution = SolutionFile {
        p: wbar.len() as u64,
        k: k as u64,
        indices: sol.support.iter().map(|&i| i as u64).collect(),
        values: sol.support.iter().map(|&i| sol.weights[i]).collect(),
        objective: sol.objective,
        config_digest: digest,
    };
    write_solution(&out_dir.join(SOLUTION_FILE), &solution)?;

    let row = CsvRow {
        solver: cfg.solver.as_str().to_string(),
        p: wbar.len() as u64,
        n: a.nrows() as u64,
        k: k as u64,
        lambda: cfg.lambda,
        seed: cfg.seed,
        objective_initial,
        objective_final: sol.objective,
        nnz: sol.nnz() as u64,
        wall_ms,
        iterations,
    };
    append_csv(&out_dir.join(RESULTS_FILE), &row)?;
    Ok(row)
}

/// Run one oracle suite, print a line per property, and return whether all
/// passed (the caller maps `false` to exit code 5).
pub fn cmd_verify(suite: &str, seed: u64) -> Result<bool, CliError> {
    let reports = match suite {
        "gradients" => verify::gradient_suite(seed)?,
        "linesearch" => verify::linesearch_suite(seed)?,
        "woodbury" => verify::woodbury_suite(seed)?,
        "bruteforce" => verify::bruteforce_suite(seed)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown suite `{other}`; expected gradients, linesearch, woodbury, or bruteforce"
            )))
        }
    };
    for r in &reports {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(verify::all_passed(&reports))
}
