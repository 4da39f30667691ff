//! Integer feasibility tests for IAC degree-of-freedom tuples.
//!
//! Notation used in comments: `D_k` is the stream total of MAC k and
//! `T_k = D_k + ... + D_K` the tail total from MAC k onwards.
//!
//! Relations per inequality family:
//! - `eq9`, `eq10`, `eq11`, `eq19`, `eq20`: holds iff `lhs <= rhs`
//! - `eq21`: holds iff `lhs >= rhs` (variables vs. equations)
//! - `eq22`: holds iff `lhs < rhs`, in which case the tuple is proven infeasible

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::model::{compute_k_iac, make_config, KIacIndex, SystemConfig};

/// Largest subset universe whose subsets are all enumerated.
pub const EXHAUSTIVE_SUBSET_CAP: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

impl Inequality {
    fn at_most(name: impl Into<String>, lhs: i64, rhs: i64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }

    fn at_least(name: impl Into<String>, lhs: i64, rhs: i64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs >= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub k_iac: KIacIndex,
    pub eq9: Vec<Inequality>,
    pub eq10: Inequality,
    /// Absent when k_IAC = 0.
    pub eq11: Option<Inequality>,
    pub closed_form_feasible: bool,
}

impl Theorem1Report {
    pub fn inequalities(&self) -> impl Iterator<Item = &Inequality> {
        self.eq9
            .iter()
            .chain(std::iter::once(&self.eq10))
            .chain(self.eq11.iter())
    }

    pub fn failing(&self) -> Vec<String> {
        self.inequalities()
            .filter(|i| !i.holds)
            .map(|i| i.name.clone())
            .collect()
    }
}

/// Evaluates the closed-form existence conditions.
pub fn check_theorem1(config: &SystemConfig) -> Result<Theorem1Report> {
    let k_iac = compute_k_iac(config)?;
    let t = k_iac.value();
    let m = config.antennas() as i64;
    let d = |k: usize| config.mac_streams(k) as i64;

    let eq9: Vec<Inequality> = (1..=t)
        .map(|k| {
            let lhs = d(k) + config.max_user_dof_from(k + 1) as i64;
            Inequality::at_most(format!("eq9[k={k}]"), lhs, m)
        })
        .collect();
    let eq10 = Inequality::at_most("eq10", config.tail_streams(t + 1) as i64, m);
    let eq11 = (t >= 1).then(|| {
        let weighted: i64 = (1..=t).map(|k| (k as i64 - 1) * d(k)).sum();
        let lhs = d(1) + weighted + (t as i64 - 1) * config.tail_streams(t + 1) as i64;
        Inequality::at_most("eq11", lhs, t as i64 * m)
    });

    let closed_form_feasible = eq9.iter().all(|i| i.holds) && eq10.holds && eq11.as_ref().is_none_or(|i| i.holds);
    Ok(Theorem1Report {
        k_iac,
        eq9,
        eq10,
        eq11,
        closed_form_feasible,
    })
}

/// One element `{k, [j', k']}` of the subset universe: receiver k facing user j' of MAC k'.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetPair {
    pub receiver: usize,
    pub mac: usize,
    pub user: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetIndex(pub Vec<SubsetPair>);

impl SubsetIndex {
    fn validate(&self, config: &SystemConfig, k_iac: KIacIndex) -> Result<()> {
        for p in &self.0 {
            let ok = (1..=k_iac.value()).contains(&p.receiver)
                && p.mac > p.receiver
                && p.mac <= config.num_macs()
                && (1..=config.group_size(p.mac)).contains(&p.user);
            if !ok {
                return Err(IacError::OutOfRange(format!(
                    "subset element {{{}, [{},{}]}} outside the index universe",
                    p.receiver, p.user, p.mac
                )));
            }
        }
        Ok(())
    }
}

/// The full universe: k in [1, k_IAC], k' in [k+1, K], j' in [1, N_k'].
pub fn subset_universe(config: &SystemConfig, k_iac: KIacIndex) -> SubsetIndex {
    let mut pairs = Vec::new();
    for receiver in 1..=k_iac.value() {
        for mac in receiver + 1..=config.num_macs() {
            for user in 1..=config.group_size(mac) {
                pairs.push(SubsetPair { receiver, mac, user });
            }
        }
    }
    SubsetIndex(pairs)
}

/// Variables against equations for one subset of interference terms.
pub fn eq21_inequality(config: &SystemConfig, subset: &SubsetIndex, name: String) -> Inequality {
    let m = config.antennas() as i64;
    let mut receivers: Vec<usize> = subset.0.iter().map(|p| p.receiver).collect();
    receivers.sort_unstable();
    receivers.dedup();
    let mut users: Vec<(usize, usize)> = subset.0.iter().map(|p| (p.mac, p.user)).collect();
    users.sort_unstable();
    users.dedup();

    let rx_vars: i64 = receivers
        .iter()
        .map(|&k| {
            let dk = config.mac_streams(k) as i64;
            dk * (m - dk)
        })
        .sum();
    let tx_vars: i64 = users
        .iter()
        .map(|&(mac, user)| {
            let du = config.user_dof(mac, user) as i64;
            du * (m - du)
        })
        .sum();
    let equations: i64 = subset
        .0
        .iter()
        .map(|p| config.mac_streams(p.receiver) as i64 * config.user_dof(p.mac, p.user) as i64)
        .sum();
    Inequality::at_least(name, rx_vars + tx_vars, equations)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem3Report {
    pub k_iac: KIacIndex,
    pub eq19: Vec<Inequality>,
    pub eq20: Inequality,
    pub eq21: Vec<Inequality>,
}

impl Theorem3Report {
    pub fn inequalities(&self) -> impl Iterator<Item = &Inequality> {
        self.eq19
            .iter()
            .chain(std::iter::once(&self.eq20))
            .chain(self.eq21.iter())
    }

    pub fn all_hold(&self) -> bool {
        self.inequalities().all(|i| i.holds)
    }
}

/// Evaluates the IAC necessary conditions. `subsets = None` (or an empty
/// slice) checks the variable/equation count on every nonempty subset of the universe, which is
/// only allowed up to [`EXHAUSTIVE_SUBSET_CAP`] elements.
pub fn check_theorem3(config: &SystemConfig, subsets: Option<&[SubsetIndex]>) -> Result<Theorem3Report> {
    let k_iac = compute_k_iac(config)?;
    let m = config.antennas() as i64;
    let k_max = config.num_macs();

    let mut eq19 = Vec::new();
    for k in 1..=k_max {
        let dk = config.mac_streams(k) as i64;
        for kp in k + 1..=k_max {
            for (j, &d) in config.dof()[kp - 1].iter().enumerate() {
                eq19.push(Inequality::at_most(
                    format!("eq19[k={k},j'={},k'={kp}]", j + 1),
                    dk + d as i64,
                    m,
                ));
            }
        }
    }
    let eq20 = Inequality::at_most("eq20", config.tail_streams(k_iac.value() + 1) as i64, m);

    let universe = subset_universe(config, k_iac);
    let eq21 = match subsets {
        Some(list) if !list.is_empty() => {
            let mut out = Vec::with_capacity(list.len());
            for (i, s) in list.iter().enumerate() {
                s.validate(config, k_iac)?;
                let name = if *s == universe {
                    "eq21[full]".to_string()
                } else {
                    format!("eq21[given={i}]")
                };
                out.push(eq21_inequality(config, s, name));
            }
            out
        }
        _ => {
            let n = universe.0.len();
            if n > EXHAUSTIVE_SUBSET_CAP {
                return Err(IacError::SubsetUniverseTooLarge {
                    size: n,
                    cap: EXHAUSTIVE_SUBSET_CAP,
                });
            }
            (1u32..(1u32 << n))
                .map(|mask| {
                    let subset = SubsetIndex((0..n).filter(|b| mask >> b & 1 == 1).map(|b| universe.0[b]).collect());
                    eq21_inequality(config, &subset, format!("eq21[mask={mask:#x}]"))
                })
                .collect()
        }
    };

    Ok(Theorem3Report {
        k_iac,
        eq19,
        eq20,
        eq21,
    })
}

/// The full-universe count in closed form. Holds (lhs < rhs) when the tuple is proven
/// not achievable.
pub fn eq22_inequality(config: &SystemConfig, k_iac: KIacIndex) -> Inequality {
    let m = config.antennas() as i64;
    let t = k_iac.value();
    let rx: i64 = (1..=t)
        .map(|k| {
            let dk = config.mac_streams(k) as i64;
            dk * (m - dk)
        })
        .sum();
    let tx: i64 = (2..=config.num_macs())
        .flat_map(|k| config.dof()[k - 1].iter())
        .map(|&d| d as i64 * (m - d as i64))
        .sum();
    let rhs: i64 = (1..=t)
        .map(|k| config.mac_streams(k) as i64 * config.tail_streams(k + 1) as i64)
        .sum();
    let lhs = rx + tx;
    Inequality {
        name: "eq22".into(),
        lhs,
        rhs,
        holds: lhs < rhs,
    }
}

/// True iff the closed-form count proves the tuple not achievable. Tuples whose last
/// MAC alone exceeds M are also reported infeasible.
pub fn screen_infeasible(config: &SystemConfig) -> bool {
    match compute_k_iac(config) {
        Ok(k) => eq22_inequality(config, k).holds,
        Err(_) => true,
    }
}

/// |Phi_k|: alignment equations formed at receiver k (1 <= k <= k_IAC).
pub fn phi_count(config: &SystemConfig, k: usize) -> Result<usize> {
    let t = compute_k_iac(config)?.value();
    if !(1..=t).contains(&k) || t == 0 {
        return Err(IacError::IndexOutOfRange { index: k, lo: 1, hi: t });
    }
    let interferers = config.tail_streams(k + 1) as i64;
    let basis = config.antennas() as i64 - config.mac_streams(k) as i64;
    Ok((interferers - basis).max(0) as usize)
}

/// Combined report used by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub k_iac: usize,
    pub closed_form_feasible: bool,
    pub not_proven_infeasible: bool,
    pub inequalities: Vec<Inequality>,
}

impl FeasibilityReport {
    pub fn failing(&self) -> impl Iterator<Item = &Inequality> {
        // eq22 "holding" is the bad outcome
        self.inequalities
            .iter()
            .filter(|i| if i.name == "eq22" { i.holds } else { !i.holds })
    }
}

/// Closed-form existence conditions, the variable/equation counts (full set
/// plus exhaustive subsets when the universe is small) and the screen.
pub fn feasibility_report(config: &SystemConfig) -> Result<FeasibilityReport> {
    let t1 = check_theorem1(config)?;
    let universe = subset_universe(config, t1.k_iac);
    let t3 = if universe.0.len() <= EXHAUSTIVE_SUBSET_CAP {
        check_theorem3(config, None)?
    } else {
        check_theorem3(config, Some(std::slice::from_ref(&universe)))?
    };
    let eq22 = eq22_inequality(config, t1.k_iac);
    let mut inequalities: Vec<Inequality> = t1.inequalities().cloned().collect();
    inequalities.extend(t3.eq19.iter().cloned());
    inequalities.push(t3.eq20.clone());
    // exhaustive eq21 lists can be long; keep the failing ones and the full set
    let full_name_mask = if universe.0.is_empty() {
        None
    } else {
        Some(format!("eq21[mask={:#x}]", (1u32 << universe.0.len()) - 1))
    };
    for i in &t3.eq21 {
        if !i.holds || i.name == "eq21[full]" || Some(&i.name) == full_name_mask.as_ref() {
            inequalities.push(i.clone());
        }
    }
    inequalities.push(eq22.clone());
    Ok(FeasibilityReport {
        k_iac: t1.k_iac.value(),
        closed_form_feasible: t1.closed_form_feasible,
        not_proven_infeasible: t3.all_hold() && !eq22.holds,
        inequalities,
    })
}

/// A tuple reaching total DoF 2M with k_IAC = 2: MAC 1 and MAC 2 carry
/// floor(M/2) and ceil(M/2) streams; M unit streams are dealt round-robin to
/// MACs 3..K and grouped into users of at most floor(M/2) streams.
pub fn make_max_dof_config(macs: usize, antennas: usize) -> Result<SystemConfig> {
    let impossible = |reason: &str| IacError::ConstructionImpossible {
        macs,
        antennas,
        reason: reason.into(),
    };
    if macs < 3 {
        return Err(impossible("needs at least three MACs"));
    }
    if antennas < 2 {
        return Err(impossible("needs at least two antennas"));
    }
    if macs - 2 > antennas {
        return Err(impossible("more tail MACs than streams to share"));
    }
    let half = antennas / 2;
    let mut dof = vec![vec![half], vec![antennas - half]];
    let tail = macs - 2;
    let mut counts = vec![0usize; tail];
    for i in 0..antennas {
        counts[i % tail] += 1;
    }
    for mut c in counts {
        let mut users = Vec::new();
        while c > 0 {
            let take = c.min(half);
            users.push(take);
            c -= take;
        }
        dof.push(users);
    }
    let groups: Vec<usize> = dof.iter().map(Vec::len).collect();
    make_config(macs, antennas, &groups, dof)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IaBaselines {
    /// 2MK/(K+1): symmetric-DoF interference alignment.
    pub symmetric: Ratio<u64>,
    /// 2M - 1: general-tuple IA upper bound.
    pub general: Ratio<u64>,
}

pub fn ia_baselines(macs: usize, antennas: usize) -> IaBaselines {
    let (k, m) = (macs as u64, antennas as u64);
    IaBaselines {
        symmetric: Ratio::new(2 * m * k, k + 1),
        general: Ratio::from_integer(2 * m - 1),
    }
}
