//! Closed-form transceivers: loop seeds from chain-matrix eigenvectors, tree
//! propagation for the other precoders of MACs 2..K, MAC-1 precoders as
//! preimages of the interference-free space at receiver 1, and zero-forcing
//! receivers from orthogonal complements.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::feasibility::check_theorem1;
use crate::graph::{build_graph, check_proposition1, components, traversal_order, IacGraph, Traversal, TraversalStep};
use crate::linalg::{
    eigenpairs, left_singular_vectors, normalize_columns, normalized, orthogonal_complement, orthonormal_basis,
    random_unit_vector, singular_values, CMatrix, CVector, C64,
};
use crate::model::{ChannelSet, SystemConfig};
use crate::planner::{build_alignment_plan, AlignmentPlan, StreamId, TieBreak};
use crate::rng::{substream, Purpose};
use crate::tolerance::Tolerances;

/// Precoders, receivers and post-alignment interference bases of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransceiverFile", try_from = "TransceiverFile")]
pub struct TransceiverSet {
    precoders: Vec<Vec<CMatrix>>,
    receivers: Vec<CMatrix>,
    interference_bases: Vec<CMatrix>,
}

impl TransceiverSet {
    /// `precoders[k-1][j-1]` is V^{[j,k]}; `receivers[k-1]` is U_k.
    pub fn new(precoders: Vec<Vec<CMatrix>>, receivers: Vec<CMatrix>, interference_bases: Vec<CMatrix>) -> Self {
        Self {
            precoders,
            receivers,
            interference_bases,
        }
    }

    pub fn precoder(&self, mac: usize, user: usize) -> &CMatrix {
        &self.precoders[mac - 1][user - 1]
    }

    pub fn receiver(&self, k: usize) -> &CMatrix {
        &self.receivers[k - 1]
    }

    pub fn interference_basis(&self, k: usize) -> &CMatrix {
        &self.interference_bases[k - 1]
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Copy with V^{[user,mac]} replaced.
    pub fn with_precoder(&self, mac: usize, user: usize, v: CMatrix) -> Self {
        let mut out = self.clone();
        out.precoders[mac - 1][user - 1] = v;
        out
    }

    /// Copy with U_k replaced.
    pub fn with_receiver(&self, k: usize, u: CMatrix) -> Self {
        let mut out = self.clone();
        out.receivers[k - 1] = u;
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Matrix as row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = IacError;

    fn try_from(m: MatrixJson) -> Result<Self> {
        if m.data.len() != m.rows * m.cols {
            return Err(IacError::Parse(format!(
                "matrix declares {}x{} but holds {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(CMatrix::from_row_iterator(
            m.rows,
            m.cols,
            m.data.into_iter().map(|[re, im]| C64::new(re, im)),
        ))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransceiverFile {
    precoders: Vec<Vec<MatrixJson>>,
    receivers: Vec<MatrixJson>,
    interference_bases: Vec<MatrixJson>,
}

impl From<TransceiverSet> for TransceiverFile {
    fn from(t: TransceiverSet) -> Self {
        Self {
            precoders: t
                .precoders
                .iter()
                .map(|mac| mac.iter().map(MatrixJson::from).collect())
                .collect(),
            receivers: t.receivers.iter().map(MatrixJson::from).collect(),
            interference_bases: t.interference_bases.iter().map(MatrixJson::from).collect(),
        }
    }
}

impl TryFrom<TransceiverFile> for TransceiverSet {
    type Error = IacError;

    fn try_from(f: TransceiverFile) -> Result<Self> {
        let conv = |v: Vec<MatrixJson>| v.into_iter().map(CMatrix::try_from).collect::<Result<Vec<_>>>();
        let precoders = f.precoders.into_iter().map(conv).collect::<Result<Vec<_>>>()?;
        let receivers = conv(f.receivers)?;
        let interference_bases = conv(f.interference_bases)?;
        if receivers.len() != interference_bases.len() || receivers.len() != precoders.len() {
            return Err(IacError::Parse(
                "precoder, receiver and interference-basis lists differ in length".into(),
            ));
        }
        Ok(Self {
            precoders,
            receivers,
            interference_bases,
        })
    }
}

/// Lazily LU-factored channel matrices with a singularity check on first use.
struct FactoredChannels<'a> {
    channels: &'a ChannelSet,
    tol: f64,
    cache: HashMap<(usize, usize, usize), LU<C64, Dyn, Dyn>>,
}

impl<'a> FactoredChannels<'a> {
    fn new(channels: &'a ChannelSet, tol: &Tolerances) -> Self {
        Self {
            channels,
            tol: tol.singular_channel,
            cache: HashMap::new(),
        }
    }

    fn h(&self, receiver: usize, s: StreamId) -> &'a CMatrix {
        self.channels.get(receiver, s.mac, s.user)
    }

    /// (H_receiver^{[user,mac]})^{-1} rhs
    fn solve(&mut self, receiver: usize, mac: usize, user: usize, rhs: &CMatrix) -> Result<CMatrix> {
        let key = (receiver, mac, user);
        if !self.cache.contains_key(&key) {
            let h = self.channels.get(receiver, mac, user);
            let sv = singular_values(h);
            let top = sv.first().copied().unwrap_or(0.0);
            let bottom = sv.last().copied().unwrap_or(0.0);
            if top == 0.0 || bottom < self.tol * top {
                return Err(IacError::SingularChannel { receiver, mac, user });
            }
            self.cache.insert(key, h.clone().lu());
        }
        self.cache[&key]
            .solve(rhs)
            .ok_or(IacError::SingularChannel { receiver, mac, user })
    }

    /// (H_k^{to})^{-1} H_k^{from} x for one traversal step.
    fn transfer(&mut self, step: &TraversalStep, x: &CMatrix) -> Result<CMatrix> {
        let hx = self.h(step.receiver, step.from) * x;
        self.solve(step.receiver, step.to.mac, step.to.user, &hx)
    }
}

/// T = F_L ... F_1 with F_i = (H_{k_i}^{to_i})^{-1} H_{k_i}^{from_i}, so the loop
/// seed must satisfy T v = λ v.
pub fn chain_matrix(cycle: &[TraversalStep], channels: &ChannelSet, tol: &Tolerances) -> Result<CMatrix> {
    chain_matrix_in(cycle, &mut FactoredChannels::new(channels, tol))
}

fn chain_matrix_in(cycle: &[TraversalStep], fc: &mut FactoredChannels<'_>) -> Result<CMatrix> {
    let m = fc.channels.antennas();
    let mut t = CMatrix::identity(m, m);
    for step in cycle {
        t = fc.transfer(step, &t)?;
    }
    Ok(t)
}

/// Unit precoding vectors for every vertex of the graph.
pub fn solve_graph_precoders(
    graph: &IacGraph,
    channels: &ChannelSet,
    seed: u64,
    tol: &Tolerances,
) -> Result<BTreeMap<StreamId, CVector>> {
    let mut fc = FactoredChannels::new(channels, tol);
    let m = channels.antennas();
    let mut out: BTreeMap<StreamId, CVector> = BTreeMap::new();
    for comp in components(graph) {
        let order = traversal_order(&comp, graph)?;
        if order.cycle.is_empty() {
            let index = graph.vertex_index(order.seed).expect("seed is a vertex") as u64;
            let v = random_unit_vector(&mut substream(seed, Purpose::FreeDirection, index), m);
            propagate(&order, v, &mut fc, &mut out)?;
            continue;
        }
        let t = chain_matrix_in(&order.cycle, &mut fc)?;
        let candidates = eigenpairs(&t).ok_or(IacError::EigenFailure)?;
        // loops sharing a chain matrix would otherwise repeat one eigenvector
        // across the streams of a single user
        let mut chosen = None;
        for (lambda, v) in candidates {
            if (&t * &v - &v * lambda).norm() > tol.eigen_residual * t.norm() {
                continue;
            }
            let mut trial = out.clone();
            propagate(&order, v, &mut fc, &mut trial)?;
            if check_user_columns(&trial, tol).is_ok() {
                chosen = Some(trial);
                break;
            }
            chosen.get_or_insert(trial);
        }
        out = chosen.ok_or(IacError::EigenFailure)?;
    }
    check_user_columns(&out, tol)?;
    Ok(out)
}

/// Places `seed_vec` on the seed and transports it along the loop and tree.
fn propagate(
    order: &Traversal,
    seed_vec: CVector,
    fc: &mut FactoredChannels<'_>,
    out: &mut BTreeMap<StreamId, CVector>,
) -> Result<()> {
    let m = seed_vec.len();
    out.insert(order.seed, seed_vec);
    // the closing step of the loop lands back on the seed
    let open = order.cycle.len().saturating_sub(1);
    for step in order.cycle[..open].iter().chain(order.tree.iter()) {
        let from = CMatrix::from_column_slice(m, 1, out[&step.from].as_slice());
        let next = fc.transfer(step, &from)?;
        out.insert(step.to, normalized(&next.column(0).into_owned()));
    }
    Ok(())
}

fn check_user_columns(vectors: &BTreeMap<StreamId, CVector>, tol: &Tolerances) -> Result<()> {
    let mut by_user: BTreeMap<(usize, usize), Vec<&CVector>> = BTreeMap::new();
    for (s, v) in vectors {
        by_user.entry((s.mac, s.user)).or_default().push(v);
    }
    for ((mac, user), cols) in by_user {
        if cols.len() < 2 {
            continue;
        }
        let v = CMatrix::from_columns(&cols.iter().map(|c| (*c).clone()).collect::<Vec<_>>());
        let min_sv = singular_values(&v).last().copied().unwrap_or(0.0);
        if min_sv < tol.dependent_columns {
            return Err(IacError::DependentColumns { mac, user, min_sv });
        }
    }
    Ok(())
}

/// Orthonormal basis of the span of `H_k V` over all streams of MACs after `k`.
pub fn interference_basis(
    config: &SystemConfig,
    channels: &ChannelSet,
    precoders: &[Vec<CMatrix>],
    k: usize,
    tol: &Tolerances,
) -> CMatrix {
    let cols: Vec<CVector> = config
        .users()
        .filter(|&(mac, _, _)| mac > k)
        .flat_map(|(mac, user, _)| {
            let hv = channels.get(k, mac, user) * &precoders[mac - 1][user - 1];
            hv.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()
        })
        .collect();
    if cols.is_empty() {
        return CMatrix::zeros(config.antennas(), 0);
    }
    orthonormal_basis(&normalize_columns(&CMatrix::from_columns(&cols)), tol.rank_rel)
}

/// MAC-1 precoders: disjoint slices of the complement of Ĩ_1, pulled back
/// through each user's direct channel.
pub fn solve_mac1_precoders(
    config: &SystemConfig,
    channels: &ChannelSet,
    interference_basis_1: &CMatrix,
    tol: &Tolerances,
) -> Result<Vec<CMatrix>> {
    let complement = orthogonal_complement(interference_basis_1, tol.rank_rel);
    let required = config.mac_streams(1);
    if complement.ncols() < required {
        return Err(IacError::InsufficientSpace {
            receiver: 1,
            available: complement.ncols(),
            required,
        });
    }
    let mut fc = FactoredChannels::new(channels, tol);
    let mut offset = 0;
    let mut out = Vec::with_capacity(config.group_size(1));
    for user in 1..=config.group_size(1) {
        let d = config.user_dof(1, user);
        let slice = complement.columns(offset, d).into_owned();
        offset += d;
        out.push(normalize_columns(&fc.solve(1, 1, user, &slice)?));
    }
    Ok(out)
}

/// Zero-forcing receivers and the interference bases they are orthogonal to.
pub fn solve_receivers(
    config: &SystemConfig,
    channels: &ChannelSet,
    precoders: &[Vec<CMatrix>],
    tol: &Tolerances,
) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    let m = config.antennas();
    let mut receivers = Vec::with_capacity(config.num_macs());
    let mut bases = Vec::with_capacity(config.num_macs());
    for k in 1..=config.num_macs() {
        let d = config.mac_streams(k);
        let basis = interference_basis(config, channels, precoders, k, tol);
        if basis.ncols() + d > m {
            return Err(IacError::ComplementTooSmall {
                receiver: k,
                interference: basis.ncols(),
                required: d,
            });
        }
        let q = orthogonal_complement(&basis, tol.rank_rel);
        let signal = CMatrix::from_columns(
            &(1..=config.group_size(k))
                .flat_map(|j| {
                    let hv = channels.get(k, k, j) * &precoders[k - 1][j - 1];
                    hv.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );
        let projected = q.adjoint() * signal;
        let w = left_singular_vectors(&projected);
        receivers.push(&q * w.columns(0, d));
        bases.push(basis);
    }
    Ok((receivers, bases))
}

/// Plans, builds the graph and solves every transceiver.
pub fn solve_all(config: &SystemConfig, channels: &ChannelSet, seed: u64) -> Result<TransceiverSet> {
    solve_all_with(config, channels, seed, &Tolerances::default())
}

pub fn solve_all_with(
    config: &SystemConfig,
    channels: &ChannelSet,
    seed: u64,
    tol: &Tolerances,
) -> Result<TransceiverSet> {
    plan_and_solve(config, channels, seed, tol).map(|(_, tx)| tx)
}

/// Plans with the lexicographic tie-break and solves; returns both.
pub fn plan_and_solve(
    config: &SystemConfig,
    channels: &ChannelSet,
    seed: u64,
    tol: &Tolerances,
) -> Result<(AlignmentPlan, TransceiverSet)> {
    let report = check_theorem1(config)?;
    if !report.closed_form_feasible {
        return Err(IacError::Infeasible {
            failing: report.failing(),
        });
    }
    let plan = build_alignment_plan(config, TieBreak::Lexicographic)?;
    let tx = solve_with_plan(config, channels, &plan, seed, tol)?;
    Ok((plan, tx))
}

/// Solves for a given plan, which must be valid for `config`.
pub fn solve_with_plan(
    config: &SystemConfig,
    channels: &ChannelSet,
    plan: &AlignmentPlan,
    seed: u64,
    tol: &Tolerances,
) -> Result<TransceiverSet> {
    if channels.antennas() != config.antennas() || channels.num_receivers() != config.num_macs() {
        return Err(IacError::DimensionMismatch(
            "channel set does not match the configuration".into(),
        ));
    }
    let graph = build_graph(config, plan);
    if !check_proposition1(&graph) {
        return Err(IacError::InvalidPlan("alignment graph is not a pseudoforest".into()));
    }
    let vectors = solve_graph_precoders(&graph, channels, seed, tol)?;
    let m = config.antennas();
    let mut precoders: Vec<Vec<CMatrix>> = (1..=config.num_macs())
        .map(|k| {
            (1..=config.group_size(k))
                .map(|j| CMatrix::zeros(m, config.user_dof(k, j)))
                .collect()
        })
        .collect();
    for (s, v) in &vectors {
        precoders[s.mac - 1][s.user - 1].set_column(s.stream - 1, v);
    }
    let basis_1 = interference_basis(config, channels, &precoders, 1, tol);
    precoders[0] = solve_mac1_precoders(config, channels, &basis_1, tol)?;
    let (receivers, bases) = solve_receivers(config, channels, &precoders, tol)?;
    Ok(TransceiverSet::new(precoders, receivers, bases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::line_distance;
    use crate::model::{make_config, sample_channels};
    use crate::planner::plan_to_equations;

    fn c8() -> SystemConfig {
        make_config(3, 4, &[1, 1, 2], vec![vec![2], vec![2], vec![2, 2]]).unwrap()
    }

    fn c4() -> SystemConfig {
        make_config(3, 2, &[1, 1, 2], vec![vec![1], vec![1], vec![1, 1]]).unwrap()
    }

    fn identity_channels(config: &SystemConfig) -> ChannelSet {
        let m = config.antennas();
        let mats = (1..=config.num_macs())
            .map(|_| {
                (1..=config.num_macs())
                    .map(|k| vec![CMatrix::identity(m, m); config.group_size(k)])
                    .collect()
            })
            .collect();
        ChannelSet::from_matrices(config, 0, mats).unwrap()
    }

    fn step(from: StreamId, to: StreamId, receiver: usize) -> TraversalStep {
        TraversalStep {
            from,
            to,
            receiver,
            edge: 0,
        }
    }

    #[test]
    fn chain_matrix_two_cycle_composition() {
        let c = c8();
        let ch = sample_channels(&c, 5);
        let p = StreamId::new(2, 1, 1);
        let q = StreamId::new(3, 1, 1);
        let cycle = [step(p, q, 2), step(q, p, 1)];
        let t = chain_matrix(&cycle, &ch, &Tolerances::default()).unwrap();
        let inv = |k: usize, s: StreamId| ch.get(k, s.mac, s.user).clone().try_inverse().unwrap();
        let h = |k: usize, s: StreamId| ch.get(k, s.mac, s.user).clone();
        let expected = inv(1, p) * h(1, q) * inv(2, q) * h(2, p);
        assert!((t - &expected).norm() < 1e-9 * expected.norm());
    }

    #[test]
    fn chain_matrix_identity_channels() {
        let c = c8();
        let ch = identity_channels(&c);
        let p = StreamId::new(2, 1, 1);
        let q = StreamId::new(3, 1, 1);
        let t = chain_matrix(&[step(p, q, 1), step(q, p, 2)], &ch, &Tolerances::default()).unwrap();
        assert!((t - CMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn singular_channel_is_reported() {
        let c = c8();
        let mut ch = identity_channels(&c);
        ch = ch.scaled(C64::new(0.0, 0.0));
        let p = StreamId::new(2, 1, 1);
        let q = StreamId::new(3, 1, 1);
        assert!(matches!(
            chain_matrix(&[step(p, q, 1)], &ch, &Tolerances::default()),
            Err(IacError::SingularChannel { .. })
        ));
    }

    #[test]
    fn c8_alignment_equations_hold() {
        let c = c8();
        let ch = sample_channels(&c, 1);
        let plan = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        let tx = solve_with_plan(&c, &ch, &plan, 1, &Tolerances::default()).unwrap();
        for eq in plan_to_equations(&plan) {
            let k = eq.aligned.receiver;
            let col =
                |s: StreamId| (ch.get(k, s.mac, s.user) * tx.precoder(s.mac, s.user).column(s.stream - 1)).into_owned();
            let a = col(eq.aligned.source);
            let b = col(eq.onto.source);
            assert!(line_distance(&a, &b) < 1e-8, "{eq:?}");
        }
        for k in 1..=3 {
            let u = tx.receiver(k);
            let gram = u.adjoint() * u;
            assert!((gram - CMatrix::identity(u.ncols(), u.ncols())).norm() < 1e-10);
        }
        assert_eq!(
            (1..=3).map(|k| tx.receiver(k).ncols()).collect::<Vec<_>>(),
            vec![2, 2, 4]
        );
        assert_eq!(tx.precoder(1, 1).ncols(), 2);
    }

    #[test]
    fn c4_receiver_shapes() {
        let c = c4();
        let tx = solve_all(&c, &sample_channels(&c, 1), 1).unwrap();
        assert_eq!(
            (1..=3).map(|k| tx.receiver(k).ncols()).collect::<Vec<_>>(),
            vec![1, 1, 2]
        );
    }

    #[test]
    fn infeasible_config_refused() {
        let c = make_config(3, 4, &[1, 1, 1], vec![vec![2], vec![2], vec![4]]).unwrap();
        assert!(matches!(
            solve_all(&c, &sample_channels(&c, 1), 1),
            Err(IacError::Infeasible { .. })
        ));
    }

    #[test]
    fn single_mac_system() {
        let c = make_config(1, 3, &[2], vec![vec![1, 2]]).unwrap();
        let tx = solve_all(&c, &sample_channels(&c, 2), 2).unwrap();
        assert_eq!(tx.receiver(1).ncols(), 3);
        assert_eq!(tx.precoder(1, 2).ncols(), 2);
    }

    #[test]
    fn isolated_vertex_direction_is_reproducible() {
        let c = c8();
        let graph = IacGraph::from_parts(StreamId::all(&c).filter(|s| s.mac >= 2).collect(), vec![]).unwrap();
        let ch = sample_channels(&c, 3);
        let a = solve_graph_precoders(&graph, &ch, 9, &Tolerances::default()).unwrap();
        let b = solve_graph_precoders(&graph, &ch, 9, &Tolerances::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.values().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let c = c8();
        let tx = solve_all(&c, &sample_channels(&c, 4), 4).unwrap();
        let back = TransceiverSet::from_json(&tx.to_json().unwrap()).unwrap();
        assert_eq!(back, tx);
    }

    #[test]
    fn malformed_matrix_json_rejected() {
        let bad = r#"{"rows":2,"cols":2,"data":[[1.0,0.0]]}"#;
        let m: MatrixJson = serde_json::from_str(bad).unwrap();
        assert!(CMatrix::try_from(m).is_err());
    }

    #[test]
    fn loops_with_equal_chains_get_distinct_seeds() {
        // MAC 2 carries three streams of one user whose loops repeat the
        // same channel sequence
        let c = crate::feasibility::make_max_dof_config(3, 6).unwrap();
        for seed in 0..5 {
            let ch = sample_channels(&c, seed);
            let tx = solve_all(&c, &ch, seed).unwrap();
            let v = tx.precoder(2, 1);
            assert_eq!(singular_values(v).iter().filter(|&&x| x > 1e-6).count(), v.ncols());
        }
    }
}
