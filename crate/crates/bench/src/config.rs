use std::path::{Path, PathBuf};

use ccg_core::{Algo, Mode};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Parameters of a sweep, read from a flat `key = value` file.
///
/// ```text
/// dims = [200, 400, 800, 1600]
/// cond = 1e4
/// tols = [1e-3]
/// trials = 10
/// p = 3
/// seed = 2024
/// algos = ["cg", "ccg"]
/// out_dir = "bench-out"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Problem sizes, ascending.
    pub dims: Vec<usize>,
    pub cond: f64,
    pub tols: Vec<f64>,
    pub trials: usize,
    /// Agents of the cooperative algorithms.
    pub p: usize,
    pub seed: u64,
    pub algos: Vec<Algo>,
    pub out_dir: PathBuf,
    pub mode: Mode,
    /// Trials solved concurrently, further capped by `CCG_MAX_THREADS`.
    pub jobs: usize,
    pub max_iters: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: vec![200, 400, 800, 1600],
            cond: 1e4,
            tols: vec![1e-3],
            trials: 10,
            p: 3,
            seed: 2024,
            algos: vec![Algo::Cg, Algo::Ccg],
            out_dir: PathBuf::from("bench-out"),
            mode: Mode::Float,
            jobs: 1,
            max_iters: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.dims.is_empty() {
            return fail("dims must not be empty".into());
        }
        if self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("dims must be strictly ascending, got {:?}", self.dims));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.p == 0 || self.p >= self.dims[0] {
            return fail(format!("p = {} must satisfy 1 <= p < min(dims) = {}", self.p, self.dims[0]));
        }
        if !(self.cond >= 1.0) {
            return fail(format!("cond = {} must be >= 1", self.cond));
        }
        if self.tols.is_empty() || self.tols.iter().any(|t| !(*t > 0.0)) {
            return fail("tols must be a nonempty list of positive values".into());
        }
        if self.algos.is_empty() {
            return fail("algos must not be empty".into());
        }
        if self.mode != Mode::Float {
            return fail("sweeps run in float mode only".into());
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        Ok(())
    }
}
