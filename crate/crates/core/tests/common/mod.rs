//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use iac_core::feasibility::check_theorem1;
use iac_core::model::{compute_k_iac, make_config, sample_dof_tuple_with, SystemConfig};
use iac_core::rng::{substream, Purpose};
use rand::Rng;

pub fn config(antennas: usize, dof: Vec<Vec<usize>>) -> SystemConfig {
    let groups: Vec<usize> = dof.iter().map(Vec::len).collect();
    make_config(dof.len(), antennas, &groups, dof).unwrap()
}

pub fn c8() -> SystemConfig {
    config(4, vec![vec![2], vec![2], vec![2, 2]])
}

pub fn c4() -> SystemConfig {
    config(2, vec![vec![1], vec![1], vec![1, 1]])
}

/// `count` tuples drawn with K in 2..=max_macs and M in 1..=max_antennas.
pub fn random_configs(count: usize, max_macs: usize, max_antennas: usize, seed: u64) -> Vec<SystemConfig> {
    (0..count as u64)
        .map(|i| {
            let mut rng = substream(seed, Purpose::DofTuple, i);
            let k = rng.random_range(2..=max_macs);
            let m = rng.random_range(1..=max_antennas);
            sample_dof_tuple_with(&mut rng, k, m)
        })
        .collect()
}

/// The first `count` sampled tuples that satisfy the closed-form conditions
/// and need alignment at some receiver.
pub fn random_feasible_configs(count: usize, max_macs: usize, max_antennas: usize, seed: u64) -> Vec<SystemConfig> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let mut rng = substream(seed, Purpose::DofTuple, i);
        i += 1;
        let k = rng.random_range(2..=max_macs);
        let m = rng.random_range(2..=max_antennas);
        let c = sample_dof_tuple_with(&mut rng, k, m);
        if let Ok(r) = check_theorem1(&c) {
            if r.closed_form_feasible && !r.k_iac.is_trivial() {
                out.push(c);
            }
        }
    }
    out
}

/// Interference vectors that must be aligned: sum over receivers 1..=k_IAC of
/// the stream count of all later MACs.
pub fn interference_vector_count(c: &SystemConfig) -> usize {
    match compute_k_iac(c) {
        Ok(k) => (1..=k.value()).map(|r| c.tail_streams(r + 1)).sum(),
        Err(_) => usize::MAX,
    }
}

/// Every tuple with 2 <= K <= max_macs, 1 <= M <= max_antennas, users listed
/// in non-increasing DoF order, per-MAC total at most M.
pub fn all_small_configs(max_macs: usize, max_antennas: usize) -> Vec<SystemConfig> {
    let mut out = Vec::new();
    for m in 1..=max_antennas {
        let groups = partitions_up_to(m);
        for k in 2..=max_macs {
            let mut idx = vec![0usize; k];
            loop {
                out.push(config(m, idx.iter().map(|&i| groups[i].clone()).collect()));
                let mut pos = 0;
                loop {
                    if pos == k {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < groups.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
        }
    }
    out
}

/// Non-increasing sequences of positive integers with sum in 1..=m.
fn partitions_up_to(m: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for d in (1..=cap.min(left)).rev() {
            cur.push(d);
            rec(left - d, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, m, &mut Vec::new(), &mut out);
    out
}

type Owner = (usize, usize);

/// Exhaustive search over every basis choice and every assignment of the
/// remaining interference vectors at receivers 1..=k_IAC. Returns whether any
/// assignment obeys the pairing rules (partners from different users, a user
/// at most once per aligned line) and yields a graph whose components each
/// have at most as many edges as vertices.
pub fn brute_force_plan_exists(c: &SystemConfig) -> bool {
    let Ok(k_iac) = compute_k_iac(c) else {
        return false;
    };
    let t = k_iac.value();
    let streams: Vec<(usize, usize, usize)> = c
        .users()
        .flat_map(|(mac, user, d)| (1..=d).map(move |s| (mac, user, s)))
        .filter(|s| s.0 >= 2)
        .collect();
    let receivers: Vec<(Vec<usize>, usize)> = (1..=t)
        .map(|k| {
            let a: Vec<usize> = (0..streams.len()).filter(|&i| streams[i].0 > k).collect();
            let z = a.len().min(c.antennas() - c.mac_streams(k));
            (a, z)
        })
        .collect();
    let mut edges = Vec::new();
    search_receiver(&streams, &receivers, 0, &mut edges)
}

fn search_receiver(
    streams: &[(usize, usize, usize)],
    receivers: &[(Vec<usize>, usize)],
    r: usize,
    edges: &mut Vec<(usize, usize)>,
) -> bool {
    if r == receivers.len() {
        return true;
    }
    let (a, z) = &receivers[r];
    for mask in 0u32..(1 << a.len()) {
        if mask.count_ones() as usize != *z {
            continue;
        }
        let basis: Vec<usize> = (0..a.len()).filter(|b| mask >> b & 1 == 1).map(|b| a[b]).collect();
        let rest: Vec<usize> = (0..a.len()).filter(|b| mask >> b & 1 == 0).map(|b| a[b]).collect();
        let mut lines: Vec<Vec<Owner>> = basis.iter().map(|&b| vec![owner(streams[b])]).collect();
        if assign(streams, receivers, r, &basis, &rest, 0, &mut lines, edges) {
            return true;
        }
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn assign(
    streams: &[(usize, usize, usize)],
    receivers: &[(Vec<usize>, usize)],
    r: usize,
    basis: &[usize],
    rest: &[usize],
    i: usize,
    lines: &mut Vec<Vec<Owner>>,
    edges: &mut Vec<(usize, usize)>,
) -> bool {
    if i == rest.len() {
        return search_receiver(streams, receivers, r + 1, edges);
    }
    let s = rest[i];
    let o = owner(streams[s]);
    for slot in 0..basis.len() {
        if lines[slot].contains(&o) {
            continue;
        }
        edges.push((s, basis[slot]));
        // a graph that already has a component with two loops stays that way
        if is_pseudoforest(streams.len(), edges) {
            lines[slot].push(o);
            if assign(streams, receivers, r, basis, rest, i + 1, lines, edges) {
                return true;
            }
            lines[slot].pop();
        }
        edges.pop();
    }
    false
}

fn owner(s: (usize, usize, usize)) -> Owner {
    (s.0, s.1)
}

/// Flood fill; every component must satisfy |E| <= |V|.
pub fn is_pseudoforest(vertices: usize, edges: &[(usize, usize)]) -> bool {
    let (labels, count) = flood_fill(vertices, edges);
    let mut v = vec![0usize; count];
    let mut e = vec![0usize; count];
    for &l in &labels {
        v[l] += 1;
    }
    for &(a, _) in edges {
        e[labels[a]] += 1;
    }
    (0..count).all(|q| e[q] <= v[q])
}

/// Component label per vertex, numbered in order of smallest vertex.
pub fn flood_fill(vertices: usize, edges: &[(usize, usize)]) -> (Vec<usize>, usize) {
    let mut adj = vec![Vec::new(); vertices];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; vertices];
    let mut count = 0;
    for start in 0..vertices {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = count;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if label[w] == usize::MAX {
                    label[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// Every tuple (users in non-increasing DoF order, per-MAC total at most M)
/// that needs alignment somewhere and has at most `limit` interference
/// vectors. Alignment needs T_2 > M, and T_2 alone is at most the count, so
/// M < limit and MACs 2..K carry at most `limit` streams; everything else is
/// trivially feasible with the empty plan.
pub fn configs_with_interference_at_most(limit: usize) -> Vec<SystemConfig> {
    fn tails(
        budget: usize,
        m: usize,
        groups: &[Vec<usize>],
        cur: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for g in groups {
            let s: usize = g.iter().sum();
            if s <= budget && s <= m {
                cur.push(g.clone());
                tails(budget - s, m, groups, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    for m in 1..limit {
        let groups = partitions_up_to(m);
        let mut rest = Vec::new();
        tails(limit, m, &groups, &mut Vec::new(), &mut rest);
        for first in &groups {
            for tail in &rest {
                let tail_streams: usize = tail.iter().flatten().sum();
                if tail_streams <= m {
                    continue;
                }
                let mut dof = vec![first.clone()];
                dof.extend(tail.iter().cloned());
                let c = config(m, dof);
                if interference_vector_count(&c) <= limit {
                    out.push(c);
                }
            }
        }
    }
    out
}
