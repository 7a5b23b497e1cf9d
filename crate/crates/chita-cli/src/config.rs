//! Run configuration: strict JSON with every tunable named. Unknown keys
//! are rejected (a typo must not silently fall back to a default), and
//! exactly one of `sparsity`/`k` selects the budget.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use chita::multistage::ScheduleKind;
use chita::solver::SolverConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverName {
    IhtCd,
    ChitaCd,
    ChitaBso,
    Blockwise,
    Multistage,
    /// Pure magnitude pruning; comparison arm, no optimization.
    Magnitude,
}

impl SolverName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverName::IhtCd => "iht-cd",
            SolverName::ChitaCd => "chita-cd",
            SolverName::ChitaBso => "chita-bso",
            SolverName::Blockwise => "blockwise",
            SolverName::Multistage => "multistage",
            SolverName::Magnitude => "magnitude",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    Constant,
    Linear,
    Exponential,
}

impl From<ScheduleName> for ScheduleKind {
    fn from(s: ScheduleName) -> ScheduleKind {
        match s {
            ScheduleName::Constant => ScheduleKind::Constant,
            ScheduleName::Linear => ScheduleKind::Linear,
            ScheduleName::Exponential => ScheduleKind::Exponential,
        }
    }
}

fn d_t_ht() -> usize {
    10
}
fn d_t_cd() -> usize {
    3
}
fn d_gamma() -> f64 {
    2.0
}
fn d_active_mult() -> f64 {
    2.0
}
fn d_block_size() -> usize {
    10_000
}
fn d_stages() -> usize {
    1
}
fn d_schedule() -> ScheduleName {
    ScheduleName::Exponential
}
fn d_n() -> usize {
    100
}
fn d_m() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Ridge strength; the objective carries n * lambda / 2.
    pub lambda: f64,
    /// Fraction of weights to remove, in (0, 1). Exactly one of
    /// `sparsity` / `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    /// Nonzero budget. Exactly one of `sparsity` / `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default = "d_t_ht")]
    pub t_ht: usize,
    #[serde(default = "d_t_cd")]
    pub t_cd: usize,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_active_mult")]
    pub active_mult: f64,
    #[serde(default = "d_block_size")]
    pub block_size: usize,
    /// Multi-stage stage count f (1 = single stage).
    #[serde(default = "d_stages")]
    pub stages: usize,
    #[serde(default = "d_schedule")]
    pub schedule: ScheduleName,
    /// First-stage sparsity for multi-stage runs; defaults to half the
    /// final sparsity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_first: Option<f64>,
    /// Gradient-matrix rows to sample when (re)building the matrix from a
    /// model oracle. Unused when the matrix comes from a file.
    #[serde(default = "d_n")]
    pub n: usize,
    /// Mini-batch size per gradient row; the first-order scale is 1/m.
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    pub solver: SolverName,
}

impl RunConfig {
    /// Load and validate. Any violation is a config error (exit code 2) and
    /// the message names the offending key.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Config(format!("{}: not valid UTF-8", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        let digest = hex_digest(&bytes);
        Ok((cfg, digest))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (self.sparsity, self.k) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "`sparsity` and `k` are both set; exactly one selects the budget".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "one of `sparsity` or `k` must be set".into(),
                ))
            }
            (Some(s), None) if !(s.is_finite() && s > 0.0 && s < 1.0) => {
                return Err(CliError::Config(format!(
                    "`sparsity` must lie in (0, 1), got {s}"
                )))
            }
            (None, Some(0)) => {
                return Err(CliError::Config("`k` must be >= 1".into()));
            }
            _ => {}
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CliError::Config(format!(
                "`lambda` must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if let Some(t) = self.tau_first {
            if !(t.is_finite() && t > 0.0 && t < 1.0) {
                return Err(CliError::Config(format!(
                    "`tau_first` must lie in (0, 1), got {t}"
                )));
            }
        }
        if self.block_size == 0 {
            return Err(CliError::Config("`block_size` must be >= 1".into()));
        }
        if self.stages == 0 {
            return Err(CliError::Config("`stages` must be >= 1".into()));
        }
        if self.n == 0 || self.m == 0 {
            return Err(CliError::Config("`n` and `m` must be >= 1".into()));
        }
        // Solver iteration knobs share the library's validation rules.
        self.solver_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Resolve the nonzero budget against the instance width. `k` given as
    /// a sparsity uses k = floor((1 - sparsity) * p).
    pub fn resolve_k(&self, p: usize) -> Result<usize, CliError> {
        let k = match (self.sparsity, self.k) {
            (Some(s), None) => ((1.0 - s) * p as f64).floor() as usize,
            (None, Some(k)) => usize::try_from(k)
                .map_err(|_| CliError::Config(format!("`k` = {k} does not fit this platform")))?,
            _ => unreachable!("validate() enforces exactly one"),
        };
        if k == 0 || k > p {
            return Err(CliError::Infeasible(format!(
                "budget k = {k} is outside [1, {p}]"
            )));
        }
        Ok(k)
    }

    /// The sparsity the budget corresponds to (used by multi-stage
    /// schedules).
    pub fn final_sparsity(&self, p: usize) -> Result<f64, CliError> {
        let k = self.resolve_k(p)?;
        Ok(1.0 - k as f64 / p as f64)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            t_ht: self.t_ht,
            t_cd: self.t_cd,
            gamma: self.gamma,
            ..SolverConfig::default()
        }
    }

    /// First-order scale: gradient rows average m per-sample gradients, so
    /// the linear term enters at 1/m.
    pub fn alpha(&self) -> f64 {
        1.0 / self.m as f64
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("writing to String cannot fail");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("run.json");
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let dir = tempdir().unwrap();
        let path = write_cfg(dir.path(), r#"{"lambda": 0.1, "k": 4, "solver": "iht-cd"}"#);
        let (cfg, digest) = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.t_ht, 10);
        assert_eq!(cfg.t_cd, 3);
        assert_eq!(cfg.gamma, 2.0);
        assert_eq!(cfg.active_mult, 2.0);
        assert_eq!(cfg.block_size, 10_000);
        assert_eq!(cfg.stages, 1);
        assert_eq!(cfg.m, 1);
        assert_eq!(cfg.alpha(), 1.0);
        assert_eq!(digest.len(), 64);
        assert_eq!(cfg.resolve_k(10).unwrap(), 4);
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempdir().unwrap();
        let path = write_cfg(
            dir.path(),
            r#"{"lambda": 0.1, "k": 4, "solver": "iht-cd", "lamda": 3}"#,
        );
        match RunConfig::load(&path) {
            Err(CliError::Config(msg)) => assert!(msg.contains("lamda"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn sparsity_and_k_are_mutually_exclusive() {
        let dir = tempdir().unwrap();
        for body in [
            r#"{"lambda": 0.1, "sparsity": 0.9, "k": 4, "solver": "iht-cd"}"#,
            r#"{"lambda": 0.1, "solver": "iht-cd"}"#,
        ] {
            let path = write_cfg(dir.path(), body);
            assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
        }
    }

    #[test]
    fn sparsity_resolves_by_floor() {
        let dir = tempdir().unwrap();
        let path = write_cfg(
            dir.path(),
            r#"{"lambda": 0.1, "sparsity": 0.95, "solver": "chita-bso"}"#,
        );
        let (cfg, _) = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.resolve_k(3000).unwrap(), 150);
        assert_eq!(cfg.resolve_k(39).unwrap(), 1);
        // All weights pruned: infeasible, not a config error.
        assert!(matches!(cfg.resolve_k(10), Err(CliError::Infeasible(_))));
    }

    #[test]
    fn config_file_round_trips_bitwise() {
        let dir = tempdir().unwrap();
        let path = write_cfg(dir.path(), r#"{"lambda": 0.1, "k": 4, "solver": "iht-cd"}"#);
        let (cfg, _) = RunConfig::load(&path).unwrap();
        let out = dir.path().join("echo.json");
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        fs::write(&out, &text).unwrap();
        let (cfg2, _) = RunConfig::load(&out).unwrap();
        assert_eq!(serde_json::to_string_pretty(&cfg2).unwrap(), text);
    }

    #[test]
    fn bad_ranges_are_config_errors() {
        let dir = tempdir().unwrap();
        for body in [
            r#"{"lambda": -1.0, "k": 4, "solver": "iht-cd"}"#,
            r#"{"lambda": 0.1, "sparsity": 1.5, "solver": "iht-cd"}"#,
            r#"{"lambda": 0.1, "k": 4, "solver": "iht-cd", "gamma": 0.5}"#,
            r#"{"lambda": 0.1, "k": 4, "solver": "iht-cd", "t_ht": 0}"#,
            r#"{"lambda": 0.1, "k": 0, "solver": "iht-cd"}"#,
            r#"{"lambda": 0.1, "k": 4, "solver": "warp"}"#,
        ] {
            let path = write_cfg(dir.path(), body);
            assert!(
                matches!(RunConfig::load(&path), Err(CliError::Config(_))),
                "accepted: {body}"
            );
        }
    }
}
