//! Monte Carlo estimate of the IAC DoF upper bound, the gap ratio against the
//! closed-form 2M, and grid sweeps with CSV export.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::feasibility::{check_theorem3, screen_infeasible, subset_universe};
use crate::model::{compute_k_iac, sample_dof_tuple_with, total_dof, SystemConfig};
use crate::rng::{substream, Purpose};

/// One run in this many accepted runs is re-checked against the full-set
/// variables/equations count.
pub const AUDIT_STRIDE: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub dof: usize,
    pub cdf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub macs: usize,
    pub antennas: usize,
    pub seed: u64,
    pub runs: usize,
    pub accepted: usize,
    /// Accepted total DoF values, ascending.
    pub values: Vec<usize>,
    pub cdf: Vec<CdfPoint>,
    /// Largest accepted total DoF; `None` when no run was accepted.
    pub upper_star: Option<usize>,
    pub audited: usize,
    pub audit_failures: usize,
}

impl MonteCarloResult {
    pub fn is_empty(&self) -> bool {
        self.accepted == 0
    }
}

/// Outcome of one sampled tuple: `Some(total DoF)` when it survives the screen.
fn run_once(macs: usize, antennas: usize, seed: u64, index: u64) -> (Option<usize>, Option<bool>) {
    let mut rng = substream(seed, Purpose::MonteCarloRun, index);
    let config = sample_dof_tuple_with(&mut rng, macs, antennas);
    if compute_k_iac(&config).is_err() || screen_infeasible(&config) {
        return (None, None);
    }
    let audit = index.is_multiple_of(AUDIT_STRIDE).then(|| audit_consistent(&config));
    (Some(total_dof(&config)), audit)
}

/// The screen and the full-set count must agree on an accepted tuple.
fn audit_consistent(config: &SystemConfig) -> bool {
    let Ok(k) = compute_k_iac(config) else {
        return false;
    };
    let full = subset_universe(config, k);
    match check_theorem3(config, Some(std::slice::from_ref(&full))) {
        Ok(report) => report.eq21.iter().all(|i| i.holds),
        Err(_) => false,
    }
}

/// Samples `runs` DoF tuples, discards those proven infeasible and records the
/// total DoF of the rest.
pub fn run_upper_bound_mc(macs: usize, antennas: usize, runs: usize, seed: u64) -> Result<MonteCarloResult> {
    if macs < 3 {
        return Err(IacError::OutOfRange(format!("Monte Carlo needs K >= 3, got {macs}")));
    }
    if antennas < 1 {
        return Err(IacError::OutOfRange("Monte Carlo needs M >= 1".into()));
    }
    let outcomes: Vec<(Option<usize>, Option<bool>)> = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_once(macs, antennas, seed, i))
        .collect();
    let mut values: Vec<usize> = outcomes.iter().filter_map(|o| o.0).collect();
    values.sort_unstable();
    let audits: Vec<bool> = outcomes.iter().filter_map(|o| o.1).collect();
    let accepted = values.len();
    let mut cdf = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if values.get(i + 1) != Some(&v) {
            cdf.push(CdfPoint {
                dof: v,
                cdf: (i + 1) as f64 / accepted as f64,
            });
        }
    }
    Ok(MonteCarloResult {
        macs,
        antennas,
        seed,
        runs,
        accepted,
        upper_star: values.last().copied(),
        values,
        cdf,
        audited: audits.len(),
        audit_failures: audits.iter().filter(|ok| !**ok).count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub macs: usize,
    pub antennas: usize,
    /// Closed-form achievable DoF, 2M.
    pub dof_cs: usize,
    pub upper_star: usize,
    /// (upper_star - 2M) / upper_star
    pub gap: f64,
    pub accepted: usize,
    pub runs: usize,
}

pub fn gap_ratio(mc: &MonteCarloResult) -> Result<GapPoint> {
    let upper_star = mc.upper_star.ok_or(IacError::EmptyResult)?;
    let dof_cs = 2 * mc.antennas;
    Ok(GapPoint {
        macs: mc.macs,
        antennas: mc.antennas,
        dof_cs,
        upper_star,
        gap: (upper_star as f64 - dof_cs as f64) / upper_star as f64,
        accepted: mc.accepted,
        runs: mc.runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub mc: MonteCarloResult,
    /// `None` marks a cell without accepted runs.
    pub gap: Option<GapPoint>,
}

/// Every (K, M) cell of the grid, K-major, each with the same seed.
pub fn sweep(macs: RangeInclusive<usize>, antennas: &[usize], runs: usize, seed: u64) -> Result<Vec<SweepCell>> {
    if macs.is_empty() || antennas.is_empty() {
        return Err(IacError::OutOfRange("sweep ranges must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for k in macs {
        for &m in antennas {
            let mc = run_upper_bound_mc(k, m, runs, seed)?;
            let gap = gap_ratio(&mc).ok();
            cells.push(SweepCell { mc, gap });
        }
    }
    Ok(cells)
}

/// CSV with columns `K,M,dof,cdf`, one row per distinct accepted value.
pub fn cdf_csv<'a>(results: impl IntoIterator<Item = &'a MonteCarloResult>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K", "M", "dof", "cdf"]).map_err(csv_err)?;
    for r in results {
        for p in &r.cdf {
            w.write_record([
                r.macs.to_string(),
                r.antennas.to_string(),
                p.dof.to_string(),
                p.cdf.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// CSV with columns `K,M,upper_star,dof_cs,gap,accepted,runs`; empty cells
/// carry `NA` in `upper_star` and `gap`.
pub fn gap_csv<'a>(cells: impl IntoIterator<Item = &'a SweepCell>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K", "M", "upper_star", "dof_cs", "gap", "accepted", "runs"])
        .map_err(csv_err)?;
    for c in cells {
        let (upper, gap) = match &c.gap {
            Some(g) => (g.upper_star.to_string(), g.gap.to_string()),
            None => ("NA".to_string(), "NA".to_string()),
        };
        w.write_record([
            c.mc.macs.to_string(),
            c.mc.antennas.to_string(),
            upper,
            (2 * c.mc.antennas).to_string(),
            gap,
            c.mc.accepted.to_string(),
            c.mc.runs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn csv_err(e: csv::Error) -> IacError {
    IacError::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| IacError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| IacError::Parse(e.to_string()))
}
