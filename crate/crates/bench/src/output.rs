//! Persistent outputs of a sweep.
//!
//! `records.csv` columns, in order:
//! `n, cond, tol, algo, p, trial, seed, problem_id, iterations, time_s,
//! converged, final_minres, critical_mults, status`.
//! `time_s` is written with exactly nine decimals (whole nanoseconds), so a
//! read-back reproduces the record. `final_minres` is empty for failed solves.
//!
//! `aggregates.csv` holds one [`CellSummary`] per row in field order, and
//! `summary.json` the versioned [`Summary`].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ccg_core::Algo;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Aggregate, CellSummary, ToleranceTable};
use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::fit::{FitResult, ParabolaFit};
use crate::sweep::ExperimentRecord;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    n: usize,
    cond: f64,
    tol: f64,
    algo: Algo,
    p: usize,
    trial: usize,
    seed: u64,
    problem_id: String,
    iterations: usize,
    time_s: String,
    converged: bool,
    final_minres: Option<f64>,
    critical_mults: u64,
    status: String,
}

pub fn format_seconds(ns: u64) -> String {
    format!("{}.{:09}", ns / 1_000_000_000, ns % 1_000_000_000)
}

pub fn parse_seconds(text: &str) -> Result<u64> {
    let bad = || BenchError::Record(format!("time {text:?} is not a decimal with at most 9 places"));
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let whole: u64 = whole.parse().map_err(|_| bad())?;
    let frac_ns: u64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<9}").parse().map_err(|_| bad())?
    };
    whole
        .checked_mul(1_000_000_000)
        .and_then(|w| w.checked_add(frac_ns))
        .ok_or_else(bad)
}

pub fn write_records<W: Write>(w: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(CsvRecord {
            n: r.n,
            cond: r.cond,
            tol: r.tol,
            algo: r.algo,
            p: r.p,
            trial: r.trial,
            seed: r.seed,
            problem_id: r.problem_id.clone(),
            iterations: r.iterations,
            time_s: format_seconds(r.time_ns),
            converged: r.converged,
            final_minres: r.final_minres,
            critical_mults: r.critical_mults,
            status: r.status.clone(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<ExperimentRecord>> {
    let mut input = csv::Reader::from_reader(r);
    input
        .deserialize::<CsvRecord>()
        .map(|row| {
            let row = row?;
            Ok(ExperimentRecord {
                time_ns: parse_seconds(&row.time_s)?,
                n: row.n,
                cond: row.cond,
                tol: row.tol,
                algo: row.algo,
                p: row.p,
                trial: row.trial,
                seed: row.seed,
                problem_id: row.problem_id,
                iterations: row.iterations,
                converged: row.converged,
                final_minres: row.final_minres,
                critical_mults: row.critical_mults,
                status: row.status,
            })
        })
        .collect()
}

pub fn write_aggregates<W: Write>(w: W, cells: &[CellSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(c)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parabola: Option<ParabolaFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub aggregate: Aggregate,
    /// Fits keyed by algorithm name.
    pub fits: std::collections::BTreeMap<String, Fits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceTable>,
}

impl Summary {
    pub fn new(config: Option<ExperimentConfig>, aggregate: Aggregate) -> Self {
        Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            config,
            aggregate,
            fits: Default::default(),
            tolerances: None,
        }
    }
}

/// Writes `records.csv`, `aggregates.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, records: &[ExperimentRecord], summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records(File::create(dir.join("records.csv"))?, records)?;
    write_aggregates(File::create(dir.join("aggregates.csv"))?, &summary.aggregate.cells)?;
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ExperimentRecord> {
        vec![
            ExperimentRecord {
                n: 200,
                cond: 1e4,
                tol: 1e-3,
                algo: Algo::Cg,
                p: 1,
                trial: 0,
                seed: u64::MAX,
                problem_id: "00ff:0a0b".into(),
                iterations: 187,
                time_ns: 12_345_678_901,
                converged: true,
                final_minres: Some(0.000_912_345_678_901_234_5),
                critical_mults: 7_654_321,
                status: "converged:0".into(),
            },
            ExperimentRecord {
                n: 200,
                cond: 1e4,
                tol: 1e-3,
                algo: Algo::CcgParallel,
                p: 3,
                trial: 1,
                seed: 3,
                problem_id: "00ff:0a0c".into(),
                iterations: 0,
                time_ns: 7,
                converged: false,
                final_minres: None,
                critical_mults: 0,
                status: "error: worker 1 failed, with a comma".into(),
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_records(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "n,cond,tol,algo,p,trial,seed,problem_id,iterations,time_s,converged,final_minres,critical_mults,status\n"
        ));
        assert!(text.contains(",12.345678901,"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn seconds_parse_and_format() {
        assert_eq!(format_seconds(7), "0.000000007");
        assert_eq!(parse_seconds("0.000000007").unwrap(), 7);
        assert_eq!(parse_seconds("2.5").unwrap(), 2_500_000_000);
        assert_eq!(parse_seconds("3").unwrap(), 3_000_000_000);
        assert!(parse_seconds("1.0000000001").is_err());
        assert!(parse_seconds("-1.0").is_err());
    }

    #[test]
    fn summary_carries_schema_version() {
        let s = Summary::new(None, Aggregate::default());
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["schema_version"], SUMMARY_SCHEMA_VERSION);
    }
}
