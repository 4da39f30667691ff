//! Numerical certification of a transceiver set: zero-forcing of later MACs,
//! desired-signal rank, the per-receiver dimension budget, and the DoF
//! decodable under successive cancellation in receiver order 1..K.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::{min_singular_value, normalize_columns, rank, CMatrix};
use crate::model::{compute_k_iac, total_dof, ChannelSet, SystemConfig};
use crate::planner::AlignmentPlan;
use crate::solver::TransceiverSet;
use crate::tolerance::Tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVerdict {
    pub receiver: usize,
    pub rank: usize,
    pub required: usize,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub receiver: usize,
    pub signal_dims: usize,
    pub basis_dims: usize,
    pub antennas: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverReport {
    pub receiver: usize,
    pub signal_rank: usize,
    pub required_rank: usize,
    /// Largest normalized leakage from MACs after this receiver.
    pub leakage: f64,
    /// Smallest singular value of [normalized signal columns | interference basis].
    pub independence_margin: f64,
    pub decodable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub k_iac: usize,
    pub max_zf_residual: f64,
    pub receivers: Vec<ReceiverReport>,
    /// Present when the alignment plan was supplied.
    pub dimension_budget: Option<Vec<BudgetVerdict>>,
    pub achieved_total_dof: usize,
    pub total_dof: usize,
}

impl VerificationReport {
    pub fn passed(&self, tol: &Tolerances) -> bool {
        self.max_zf_residual < tol.zero_forcing
            && self.receivers.iter().all(|r| r.signal_rank == r.required_rank)
            && self.dimension_budget.as_ref().is_none_or(|b| b.iter().all(|v| v.holds))
            && self.achieved_total_dof == self.total_dof
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>8} {:>12} {:>12} {:>9}",
            "receiver", "rank", "required", "leakage", "margin", "decodable"
        );
        for r in &self.receivers {
            let _ = writeln!(
                out,
                "{:>8} {:>6} {:>8} {:>12.3e} {:>12.3e} {:>9}",
                r.receiver, r.signal_rank, r.required_rank, r.leakage, r.independence_margin, r.decodable
            );
        }
        if let Some(budget) = &self.dimension_budget {
            for b in budget {
                let _ = writeln!(
                    out,
                    "budget   receiver {}: {} + {} <= {} {}",
                    b.receiver,
                    b.signal_dims,
                    b.basis_dims,
                    b.antennas,
                    if b.holds { "ok" } else { "VIOLATED" }
                );
            }
        }
        let _ = writeln!(out, "k_IAC              {}", self.k_iac);
        let _ = writeln!(out, "max zf residual    {:.3e}", self.max_zf_residual);
        let _ = writeln!(
            out,
            "achieved DoF       {} / {}",
            self.achieved_total_dof, self.total_dof
        );
        out
    }
}

fn k_iac_or_last(config: &SystemConfig) -> usize {
    compute_k_iac(config).map_or(config.num_macs().saturating_sub(1), |k| k.value())
}

/// S_k = [H_k^{[1,k]} V^{[1,k]} ... H_k^{[N_k,k]} V^{[N_k,k]}]
fn signal_matrix(tx: &TransceiverSet, channels: &ChannelSet, config: &SystemConfig, k: usize) -> CMatrix {
    let blocks: Vec<CMatrix> = (1..=config.group_size(k))
        .map(|j| channels.get(k, k, j) * tx.precoder(k, j))
        .collect();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut s = CMatrix::zeros(config.antennas(), cols);
    let mut at = 0;
    for b in blocks {
        s.columns_mut(at, b.ncols()).copy_from(&b);
        at += b.ncols();
    }
    s
}

/// Largest |u^H H v| / (|u| |H v|) at receiver `k` over streams of MACs after `k`.
fn leakage(tx: &TransceiverSet, channels: &ChannelSet, config: &SystemConfig, k: usize) -> f64 {
    let u = tx.receiver(k);
    let mut worst: f64 = 0.0;
    for (mac, user, _) in config.users().filter(|&(mac, _, _)| mac > k) {
        let hv = channels.get(k, mac, user) * tx.precoder(mac, user);
        for a in 0..u.ncols() {
            let ua = u.column(a);
            let nu = ua.norm();
            for b in 0..hv.ncols() {
                let col = hv.column(b);
                let denom = nu * col.norm();
                if denom > 0.0 {
                    worst = worst.max(ua.dotc(&col).norm() / denom);
                }
            }
        }
    }
    worst
}

/// Normalized zero-forcing residual over receivers 1..=k_IAC; 0 when there
/// are no constraints.
pub fn zf_residual(tx: &TransceiverSet, channels: &ChannelSet, config: &SystemConfig) -> f64 {
    (1..=k_iac_or_last(config))
        .map(|k| leakage(tx, channels, config, k))
        .fold(0.0, f64::max)
}

pub fn signal_rank_check(
    tx: &TransceiverSet,
    channels: &ChannelSet,
    config: &SystemConfig,
    tol: &Tolerances,
) -> Vec<RankVerdict> {
    (1..=config.num_macs())
        .map(|k| {
            let projected = tx.receiver(k).adjoint() * signal_matrix(tx, channels, config, k);
            let r = rank(&projected, tol.rank_rel);
            let required = config.mac_streams(k);
            RankVerdict {
                receiver: k,
                rank: r,
                required,
                pass: r == required,
            }
        })
        .collect()
}

/// D_k + Z_k <= M for each planned receiver.
pub fn dimension_budget(config: &SystemConfig, plan: &AlignmentPlan) -> Vec<BudgetVerdict> {
    plan.receivers
        .iter()
        .map(|rx| {
            let signal_dims = config.mac_streams(rx.receiver);
            let basis_dims = rx.basis.len();
            BudgetVerdict {
                receiver: rx.receiver,
                signal_dims,
                basis_dims,
                antennas: config.antennas(),
                holds: signal_dims + basis_dims <= config.antennas(),
            }
        })
        .collect()
}

/// Streams decodable when receivers decode in order 1..K and every earlier
/// MAC's signal is cancelled exactly: receiver k counts when its leakage from
/// later MACs is below the zero-forcing tolerance and its signal rank is full.
pub fn achieved_dof(tx: &TransceiverSet, channels: &ChannelSet, config: &SystemConfig, tol: &Tolerances) -> usize {
    let ranks = signal_rank_check(tx, channels, config, tol);
    (1..=config.num_macs())
        .filter(|&k| ranks[k - 1].pass && leakage(tx, channels, config, k) < tol.zero_forcing)
        .map(|k| config.mac_streams(k))
        .sum()
}

/// Smallest singular value of [normalized signal columns | interference basis] at receiver k.
pub fn independence_margin(tx: &TransceiverSet, channels: &ChannelSet, config: &SystemConfig, k: usize) -> f64 {
    let s = normalize_columns(&signal_matrix(tx, channels, config, k));
    let basis = tx.interference_basis(k);
    let mut stacked = CMatrix::zeros(config.antennas(), s.ncols() + basis.ncols());
    stacked.columns_mut(0, s.ncols()).copy_from(&s);
    stacked.columns_mut(s.ncols(), basis.ncols()).copy_from(basis);
    min_singular_value(&stacked)
}

pub fn verify(
    config: &SystemConfig,
    channels: &ChannelSet,
    tx: &TransceiverSet,
    plan: Option<&AlignmentPlan>,
    tol: &Tolerances,
) -> VerificationReport {
    let ranks = signal_rank_check(tx, channels, config, tol);
    let receivers: Vec<ReceiverReport> = ranks
        .iter()
        .map(|r| {
            let leak = leakage(tx, channels, config, r.receiver);
            ReceiverReport {
                receiver: r.receiver,
                signal_rank: r.rank,
                required_rank: r.required,
                leakage: leak,
                independence_margin: independence_margin(tx, channels, config, r.receiver),
                decodable: r.pass && leak < tol.zero_forcing,
            }
        })
        .collect();
    let achieved_total_dof = receivers.iter().filter(|r| r.decodable).map(|r| r.required_rank).sum();
    VerificationReport {
        k_iac: k_iac_or_last(config),
        max_zf_residual: zf_residual(tx, channels, config),
        receivers,
        dimension_budget: plan.map(|p| dimension_budget(config, p)),
        achieved_total_dof,
        total_dof: total_dof(config),
    }
}
