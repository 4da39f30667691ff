//! System configurations, random channels and the k_IAC index.
//!
//! MAC, receiver and user indices are 1-based everywhere in the public API,
//! matching the `[k, j, l]` triples used in serialized output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::linalg::{gaussian_matrix, CMatrix};
use crate::rng::{substream, Purpose};

/// A (K, M, J) interference MAC instance: K receivers with M antennas, each
/// serving a group of users, every user sending `d` streams.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile", into = "ConfigFile")]
pub struct SystemConfig {
    antennas: usize,
    dof: Vec<Vec<usize>>,
}

/// On-disk layout: `{"K": .., "M": .., "groups": [..], "dof": [[..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "K")]
    pub macs: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    pub groups: Vec<usize>,
    pub dof: Vec<Vec<usize>>,
}

impl TryFrom<ConfigFile> for SystemConfig {
    type Error = IacError;

    fn try_from(f: ConfigFile) -> Result<Self> {
        make_config(f.macs, f.antennas, &f.groups, f.dof)
    }
}

impl From<SystemConfig> for ConfigFile {
    fn from(c: SystemConfig) -> Self {
        ConfigFile {
            macs: c.num_macs(),
            antennas: c.antennas,
            groups: c.group_sizes(),
            dof: c.dof,
        }
    }
}

/// Validates and builds a configuration.
pub fn make_config(macs: usize, antennas: usize, group_sizes: &[usize], dof: Vec<Vec<usize>>) -> Result<SystemConfig> {
    if macs == 0 {
        return Err(IacError::OutOfRange("K must be at least 1".into()));
    }
    if antennas == 0 {
        return Err(IacError::OutOfRange("M must be at least 1".into()));
    }
    if group_sizes.len() != macs {
        return Err(IacError::DimensionMismatch(format!(
            "{} group sizes given for K={macs}",
            group_sizes.len()
        )));
    }
    if dof.len() != macs {
        return Err(IacError::DimensionMismatch(format!(
            "{} DoF groups given for K={macs}",
            dof.len()
        )));
    }
    for (k, (&n, users)) in group_sizes.iter().zip(&dof).enumerate() {
        if n == 0 {
            return Err(IacError::OutOfRange(format!("N_{} must be at least 1", k + 1)));
        }
        if users.len() != n {
            return Err(IacError::DimensionMismatch(format!(
                "MAC {} declares N={n} users but lists {} DoF entries",
                k + 1,
                users.len()
            )));
        }
        for (j, &d) in users.iter().enumerate() {
            if d == 0 || d > antennas {
                return Err(IacError::OutOfRange(format!(
                    "d[{},{}] = {d} outside [1, {antennas}]",
                    j + 1,
                    k + 1
                )));
            }
        }
    }
    Ok(SystemConfig { antennas, dof })
}

impl SystemConfig {
    /// K
    pub fn num_macs(&self) -> usize {
        self.dof.len()
    }

    /// M
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// N_k for every MAC, in order.
    pub fn group_sizes(&self) -> Vec<usize> {
        self.dof.iter().map(Vec::len).collect()
    }

    /// N_k for 1-based `mac`.
    pub fn group_size(&self, mac: usize) -> usize {
        self.dof[mac - 1].len()
    }

    /// J
    pub fn num_users(&self) -> usize {
        self.dof.iter().map(Vec::len).sum()
    }

    /// Raw ragged DoF table; `dof()[k][j]` is d^{[j+1,k+1]}.
    pub fn dof(&self) -> &[Vec<usize>] {
        &self.dof
    }

    /// d^{[user,mac]} with 1-based indices.
    pub fn user_dof(&self, mac: usize, user: usize) -> usize {
        self.dof[mac - 1][user - 1]
    }

    /// Streams of one MAC: sum_j d^{[j,mac]}.
    pub fn mac_streams(&self, mac: usize) -> usize {
        self.dof[mac - 1].iter().sum()
    }

    /// Streams of MACs `from..=K` (zero when `from > K`).
    pub fn tail_streams(&self, from: usize) -> usize {
        (from.max(1)..=self.num_macs()).map(|k| self.mac_streams(k)).sum()
    }

    /// Largest single-user DoF among MACs `from..=K` (zero when none).
    pub fn max_user_dof_from(&self, from: usize) -> usize {
        (from.max(1)..=self.num_macs())
            .flat_map(|k| self.dof[k - 1].iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Iterates `(mac, user, d)` over every user.
    pub fn users(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.dof
            .iter()
            .enumerate()
            .flat_map(|(k, users)| users.iter().enumerate().map(move |(j, &d)| (k + 1, j + 1, d)))
    }
}

pub fn total_dof(config: &SystemConfig) -> usize {
    config.tail_streams(1)
}

/// Index of the last MAC whose receiver must align interference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KIacIndex(pub usize);

impl KIacIndex {
    pub fn value(self) -> usize {
        self.0
    }

    /// No receiver needs alignment: everything fits in M dimensions.
    pub fn is_trivial(self) -> bool {
        self.0 == 0
    }
}

/// (first k with sum_{k'>=k} D_{k'} <= M) - 1.
pub fn compute_k_iac(config: &SystemConfig) -> Result<KIacIndex> {
    let m = config.antennas();
    let k_max = config.num_macs();
    let last = config.mac_streams(k_max);
    if last > m {
        return Err(IacError::UnseparableTail {
            streams: last,
            antennas: m,
        });
    }
    let first = (1..=k_max)
        .find(|&k| config.tail_streams(k) <= m)
        .expect("tail at K already fits");
    Ok(KIacIndex(first - 1))
}

/// Generic channel realisation: H[receiver][mac][user] is M x M.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    seed: u64,
    matrices: Vec<Vec<Vec<CMatrix>>>,
}

impl ChannelSet {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// H_receiver^{[user,mac]}, 1-based.
    pub fn get(&self, receiver: usize, mac: usize, user: usize) -> &CMatrix {
        &self.matrices[receiver - 1][mac - 1][user - 1]
    }

    pub fn num_receivers(&self) -> usize {
        self.matrices.len()
    }

    /// Antenna count M (0 for an empty set).
    pub fn antennas(&self) -> usize {
        self.iter().next().map_or(0, |h| h.nrows())
    }

    pub fn iter(&self) -> impl Iterator<Item = &CMatrix> {
        self.matrices.iter().flatten().flatten()
    }

    /// Builds a channel set from explicit matrices (indexed `[receiver][mac][user]`).
    pub fn from_matrices(config: &SystemConfig, seed: u64, matrices: Vec<Vec<Vec<CMatrix>>>) -> Result<Self> {
        let m = config.antennas();
        let shape_ok = matrices.len() == config.num_macs()
            && matrices.iter().all(|per_rx| {
                per_rx.len() == config.num_macs()
                    && per_rx.iter().enumerate().all(|(k, users)| {
                        users.len() == config.group_size(k + 1)
                            && users.iter().all(|h| h.nrows() == m && h.ncols() == m)
                    })
            });
        if !shape_ok {
            return Err(IacError::DimensionMismatch(
                "channel matrices do not match the configuration".into(),
            ));
        }
        Ok(Self { seed, matrices })
    }

    /// Multiplies every channel by `factor`.
    pub fn scaled(&self, factor: crate::linalg::C64) -> Self {
        let mut out = self.clone();
        for h in out.matrices.iter_mut().flatten().flatten() {
            *h *= factor;
        }
        out
    }
}

/// I.i.d. CN(0,1) entries, one substream per (receiver, mac, user).
pub fn sample_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    let m = config.antennas();
    let k_max = config.num_macs();
    let mut index = 0u64;
    let mut matrices = Vec::with_capacity(k_max);
    for _receiver in 1..=k_max {
        let mut per_rx = Vec::with_capacity(k_max);
        for mac in 1..=k_max {
            let mut users = Vec::with_capacity(config.group_size(mac));
            for _user in 1..=config.group_size(mac) {
                let mut rng = substream(seed, Purpose::Channels, index);
                users.push(gaussian_matrix(&mut rng, m, m));
                index += 1;
            }
            per_rx.push(users);
        }
        matrices.push(per_rx);
    }
    ChannelSet { seed, matrices }
}

/// Random tuple: N_k ~ U{1..M}, d^{[j,k]} ~ U{1..floor(M/N_k)}.
pub fn sample_dof_tuple(macs: usize, antennas: usize, seed: u64) -> SystemConfig {
    let mut rng = substream(seed, Purpose::DofTuple, 0);
    sample_dof_tuple_with(&mut rng, macs, antennas)
}

pub fn sample_dof_tuple_with<R: Rng + ?Sized>(rng: &mut R, macs: usize, antennas: usize) -> SystemConfig {
    assert!(macs >= 1 && antennas >= 1);
    let dof = (0..macs)
        .map(|_| {
            let n = rng.random_range(1..=antennas);
            let cap = antennas / n;
            (0..n).map(|_| rng.random_range(1..=cap)).collect()
        })
        .collect();
    SystemConfig { antennas, dof }
}
