use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dense::DenseBlock;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "cg")]
    Cg,
    #[serde(rename = "ccg")]
    Ccg,
    #[serde(rename = "mccg")]
    Mccg,
    #[serde(rename = "sd")]
    SteepestDescent,
    #[serde(rename = "ccg-par")]
    CcgParallel,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Cg => "cg",
            Algo::Ccg => "ccg",
            Algo::Mccg => "mccg",
            Algo::SteepestDescent => "sd",
            Algo::CcgParallel => "ccg-par",
        }
    }

    /// Whether the algorithm runs all `p` agents (as opposed to one trajectory).
    pub fn is_cooperative(self) -> bool {
        matches!(self, Algo::Ccg | Algo::Mccg | Algo::CcgParallel)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "cg" => Ok(Algo::Cg),
            "ccg" => Ok(Algo::Ccg),
            "mccg" => Ok(Algo::Mccg),
            "sd" => Ok(Algo::SteepestDescent),
            "ccg-par" => Ok(Algo::CcgParallel),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    /// `agent` is the first (original) agent index whose residual met the tolerance.
    Converged { agent: usize },
    /// The direction block lost rank; `rank` is the detected rank.
    RankCollapse { rank: usize },
    MaxIterations,
}

impl Termination {
    pub fn is_converged(&self) -> bool {
        matches!(self, Termination::Converged { .. })
    }
}

/// One entry per iteration; entry 0 describes the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Active agent count `p_k`.
    pub p_k: usize,
    /// Original indices of the active agents, aligned with `residual_norms`.
    pub agents: Vec<usize>,
    pub residual_norms: Vec<f64>,
    pub minres: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_norm_errors: Option<Vec<f64>>,
    /// Scalar multiplications spent in this iteration, all agents together.
    pub mults: u64,
    pub elapsed_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_wait_ns: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mults_per_worker: Option<Vec<u64>>,
}

/// Blocks retained in verification mode, one per iteration.
#[derive(Debug, Clone)]
pub struct History<T> {
    pub x: Vec<DenseBlock<T>>,
    pub r: Vec<DenseBlock<T>>,
    pub d: Vec<DenseBlock<T>>,
}

impl<T> Default for History<T> {
    fn default() -> Self {
        History {
            x: Vec::new(),
            r: Vec::new(),
            d: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace<T> {
    pub algo: Algo,
    pub status: Termination,
    pub records: Vec<IterationRecord>,
    /// Final estimates of all `p` agents; dropped agents keep their last value.
    pub final_x: DenseBlock<T>,
    /// Agents still active at termination.
    pub active_agents: Vec<usize>,
    /// `‖A x_j − b‖` recomputed from the final estimates (all agents).
    pub true_residual_norms: Vec<f64>,
    pub history: Option<History<T>>,
    /// Main loop wall time, excluding setup.
    pub elapsed: Duration,
}

impl<T> SolveTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_minres(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.minres)
    }

    pub fn p_sequence(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.p_k).collect()
    }
}
