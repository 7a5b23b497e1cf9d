//! Block decomposition for very wide problems.
//!
//! Columns are partitioned into contiguous blocks that never span a layer
//! boundary. The global budget k is split across blocks by where the
//! magnitude projection of the anchor lands, and each block is solved as its
//! own small instance (fresh right-hand side from its own columns), in
//! parallel. Blocks are independent, so results are written back in block
//! order and the outcome is deterministic regardless of scheduling.

use std::ops::Range;

use ndarray::Array1;
use rayon::prelude::*;

use crate::backsolve::{chita_bso_with, restricted_exact_solve};
use crate::error::{ChitaError, Result};
use crate::kernels::{hard_threshold, topk_indices};
use crate::problem::{build_problem, ProblemInstance, SparseSolution};
use crate::solver::SolverConfig;

/// Split layers into contiguous blocks of at most `cap` columns. A layer of
/// size s becomes ceil(s / cap) chunks whose sizes differ by at most one;
/// chunks never cross layer boundaries.
pub fn partition_layers(layer_sizes: &[usize], cap: usize) -> Result<Vec<Range<usize>>> {
    if cap == 0 {
        return Err(ChitaError::InvalidParameter {
            name: "block_cap",
            reason: "must be >= 1".into(),
        });
    }
    if layer_sizes.is_empty() {
        return Err(ChitaError::InvalidParameter {
            name: "layer_sizes",
            reason: "must be nonempty".into(),
        });
    }
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    for (li, &s) in layer_sizes.iter().enumerate() {
        if s == 0 {
            return Err(ChitaError::InvalidParameter {
                name: "layer_sizes",
                reason: format!("layer {li} has zero size"),
            });
        }
        let m = s.div_ceil(cap);
        let base = s / m;
        let rem = s % m;
        let mut start = offset;
        for c in 0..m {
            let len = if c < rem { base + 1 } else { base };
            blocks.push(start..start + len);
            start += len;
        }
        debug_assert_eq!(start, offset + s);
        offset += s;
    }
    Ok(blocks)
}

/// Per-block budgets: project `w0` to its k largest magnitudes and count how
/// many surviving (nonzero) coordinates fall in each block.
pub fn allocate_sparsity(
    w0: &Array1<f64>,
    blocks: &[Range<usize>],
    k: usize,
) -> Result<Vec<usize>> {
    validate_blocks(blocks, w0.len())?;
    if k == 0 || k > w0.len() {
        return Err(ChitaError::KOutOfRange { k, p: w0.len() });
    }
    let kept = topk_indices(w0.view(), k)?;
    let mut budgets = vec![0usize; blocks.len()];
    for &i in &kept {
        if w0[i] != 0.0 {
            let bi = blocks
                .iter()
                .position(|b| b.contains(&i))
                .expect("blocks cover every index");
            budgets[bi] += 1;
        }
    }
    Ok(budgets)
}

fn validate_blocks(blocks: &[Range<usize>], p: usize) -> Result<()> {
    if blocks.is_empty() {
        return Err(ChitaError::InvalidParameter {
            name: "blocks",
            reason: "must be nonempty".into(),
        });
    }
    let mut expect = 0usize;
    for (i, b) in blocks.iter().enumerate() {
        if b.start != expect || b.end <= b.start {
            return Err(ChitaError::InvalidParameter {
                name: "blocks",
                reason: format!(
                    "block {i} is {}..{}; blocks must be nonempty and contiguous from 0",
                    b.start, b.end
                ),
            });
        }
        expect = b.end;
    }
    if expect != p {
        return Err(ChitaError::InvalidParameter {
            name: "blocks",
            reason: format!("blocks end at {expect}, expected {p}"),
        });
    }
    Ok(())
}

/// Solve one block's own instance: columns sliced from the parent matrix,
/// right-hand side rebuilt from those columns, anchor restricted to the
/// block, budget `k_b`.
fn solve_block(
    inst: &ProblemInstance,
    block: Range<usize>,
    k_b: usize,
    cfg: &SolverConfig,
) -> Result<Array1<f64>> {
    let len = block.len();
    if k_b == 0 {
        return Ok(Array1::zeros(len));
    }
    let a_b = inst.a().slice_columns(block.clone())?;
    let wbar_b = Array1::from_iter(block.clone().map(|i| inst.wbar()[i]));
    let sub = build_problem(a_b, wbar_b.clone(), inst.lambda(), k_b, inst.alpha())?;
    if k_b == len {
        // Budget covers the whole block: one exact solve, no iteration.
        let all: Vec<usize> = (0..len).collect();
        return restricted_exact_solve(&sub, &all);
    }
    let w0 = hard_threshold(wbar_b.view(), k_b)?;
    let sol = chita_bso_with(&sub, &w0, k_b, cfg)?;
    Ok(sol.weights)
}

/// Blockwise solve of `inst` with the block layout given by `blocks`. The
/// overall budget `inst.k()` is allocated by [`allocate_sparsity`] on the
/// anchor. The reported objective is evaluated on the *parent* instance.
pub fn solve_blockwise(
    inst: &ProblemInstance,
    blocks: &[Range<usize>],
    cfg: &SolverConfig,
) -> Result<SparseSolution> {
    cfg.validate()?;
    validate_blocks(blocks, inst.p())?;
    let budgets = allocate_sparsity(inst.wbar(), blocks, inst.k())?;

    let pieces: Vec<Array1<f64>> = blocks
        .par_iter()
        .zip(budgets.par_iter())
        .map(|(b, &k_b)| solve_block(inst, b.clone(), k_b, cfg))
        .collect::<Result<_>>()?;

    let mut w = Array1::zeros(inst.p());
    for (b, piece) in blocks.iter().zip(pieces.iter()) {
        w.slice_mut(ndarray::s![b.clone()]).assign(piece);
    }
    let q = inst.objective(&w)?;
    Ok(SparseSolution::from_weights(w, q))
}
