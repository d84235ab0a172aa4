//! Explicit games: welfare, utilities, the class potentials, pure Nash
//! equilibria, empirical PoA and the tight worst-case instance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PoaError, Result};
use crate::index_sets::tuple_stats;
use crate::lp::FEAS_TOL;
use crate::mechanisms::{validate_mechanism, BasisFunction, Mechanism};
use crate::network::ClassPartition;
use crate::poa::{verify_primal_certificate, ThetaEntry};

/// Gains at or below this are not improvements.
pub const NASH_TOL: f64 = 1e-9;
pub const DEFAULT_PROFILE_CAP: u128 = 1_000_000;
/// Support entries below this are dropped when building the tight instance.
pub const THETA_THRESHOLD: f64 = 1e-10;
pub const DEFAULT_RESOURCE_CAP: usize = 200_000;
pub const MAX_AGENTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub v: f64,
}

/// Game JSON: resources with values and per-agent action lists of resource ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub resources: Vec<Resource>,
    pub action_sets: Vec<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    resources: Vec<Resource>,
    actions: Vec<Vec<Vec<usize>>>,
    partition: ClassPartition,
    w: BasisFunction,
    f: Mechanism,
    /// Agents whose selections agent `i` counts.
    agent_obs: Vec<u64>,
    /// Agents counted by the potential of class `j`.
    class_obs: Vec<u64>,
    /// Prefix sums `F_j(c) = f_j(1) + .. + f_j(c)`.
    prefix: Vec<Vec<f64>>,
}

/// One action index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Profile(pub Vec<usize>);

impl GameInstance {
    /// `actions[i]` lists agent `i`'s actions as resource indices.
    pub fn new(
        resources: Vec<Resource>,
        actions: Vec<Vec<Vec<usize>>>,
        partition: ClassPartition,
        w: BasisFunction,
        f: Mechanism,
    ) -> Result<Self> {
        let n = partition.n();
        if n > MAX_AGENTS {
            return Err(PoaError::validation(format!(
                "games support at most {MAX_AGENTS} agents, got {n}"
            )));
        }
        if actions.len() != n {
            return Err(PoaError::validation(format!(
                "{} action sets for {n} agents",
                actions.len()
            )));
        }
        validate_mechanism(&f, &partition, &w)?;
        if let Some(r) = resources.iter().find(|r| !(r.v.is_finite() && r.v >= 0.0)) {
            return Err(PoaError::validation(format!(
                "resource {} has invalid value {}",
                r.id, r.v
            )));
        }
        let mut actions = actions;
        for (i, set) in actions.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(PoaError::validation(format!("agent {} has no actions", i + 1)));
            }
            for a in set.iter_mut() {
                a.sort_unstable();
                a.dedup();
                if let Some(&r) = a.iter().find(|&&r| r >= resources.len()) {
                    return Err(PoaError::validation(format!(
                        "agent {} references resource index {r} out of range",
                        i + 1
                    )));
                }
            }
        }
        let positive = actions
            .iter()
            .flatten()
            .flatten()
            .any(|&r| resources[r].v > 0.0);
        if !positive {
            return Err(PoaError::validation(
                "every profile has zero welfare; some action must hold a positive resource",
            ));
        }
        let bit = |a: usize| 1u64 << a;
        let agent_obs = (0..n)
            .map(|i| partition.induced_obs(i).iter().fold(0u64, |m, &a| m | bit(a)))
            .collect();
        let class_obs = (0..partition.k())
            .map(|j| {
                let members: Vec<usize> = if partition.is_self_only(j) {
                    partition.class(j).to_vec()
                } else {
                    partition
                        .obs_classes(j)
                        .iter()
                        .flat_map(|&l| partition.class(l).iter().copied())
                        .collect()
                };
                members.iter().fold(0u64, |m, &a| m | bit(a))
            })
            .collect();
        let prefix = f
            .per_class
            .iter()
            .map(|fj| {
                let mut acc = 0.0;
                let mut p = vec![0.0];
                for v in &fj[1..] {
                    acc += v;
                    p.push(acc);
                }
                p
            })
            .collect();
        Ok(GameInstance {
            resources,
            actions,
            partition,
            w,
            f,
            agent_obs,
            class_obs,
            prefix,
        })
    }

    pub fn from_file(file: GameFile, partition: ClassPartition, w: BasisFunction, f: Mechanism) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = file
            .resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        if index.len() != file.resources.len() {
            return Err(PoaError::validation("duplicate resource ids"));
        }
        let actions = file
            .action_sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                set.iter()
                    .map(|a| {
                        a.iter()
                            .map(|id| {
                                index.get(id.as_str()).copied().ok_or_else(|| {
                                    PoaError::validation(format!(
                                        "agent {} references unknown resource {id:?}",
                                        i + 1
                                    ))
                                })
                            })
                            .collect::<Result<Vec<usize>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        GameInstance::new(file.resources.clone(), actions, partition, w, f)
    }

    pub fn to_file(&self) -> GameFile {
        GameFile {
            resources: self.resources.clone(),
            action_sets: self
                .actions
                .iter()
                .map(|set| {
                    set.iter()
                        .map(|a| a.iter().map(|&r| self.resources[r].id.clone()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.actions.len()
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn actions(&self, agent: usize) -> &[Vec<usize>] {
        &self.actions[agent]
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    pub fn profile_count(&self) -> u128 {
        self.actions.iter().map(|a| a.len() as u128).product()
    }

    pub fn check_profile(&self, p: &Profile) -> Result<()> {
        if p.0.len() != self.n() {
            return Err(PoaError::validation("profile length differs from agent count"));
        }
        if let Some(i) = (0..self.n()).find(|&i| p.0[i] >= self.actions[i].len()) {
            return Err(PoaError::validation(format!("agent {} action index out of range", i + 1)));
        }
        Ok(())
    }

    /// Per-resource bitmask of selecting agents.
    fn selections(&self, p: &Profile) -> Vec<u64> {
        let mut sel = vec![0u64; self.resources.len()];
        for (i, &c) in p.0.iter().enumerate() {
            for &r in &self.actions[i][c] {
                sel[r] |= 1 << i;
            }
        }
        sel
    }

    pub fn welfare(&self, p: &Profile) -> f64 {
        self.welfare_of(&self.selections(p))
    }

    fn welfare_of(&self, sel: &[u64]) -> f64 {
        sel.iter()
            .zip(&self.resources)
            .filter(|(s, _)| **s != 0)
            .map(|(s, r)| r.v * self.w.at(s.count_ones() as usize))
            .sum()
    }

    pub fn utility(&self, i: usize, p: &Profile) -> f64 {
        self.utility_of(i, p.0[i], &self.selections(p))
    }

    fn utility_of(&self, i: usize, action: usize, sel: &[u64]) -> f64 {
        let fj = self.f.class(self.partition.class_of(i));
        self.actions[i][action]
            .iter()
            .map(|&r| self.resources[r].v * fj[(sel[r] & self.agent_obs[i]).count_ones() as usize])
            .sum()
    }

    /// Potential of class `j`. Self-only classes count each member's own selections at `f_j(1)`.
    pub fn potential_g(&self, j: usize, p: &Profile) -> f64 {
        let sel = self.selections(p);
        sel.iter()
            .zip(&self.resources)
            .map(|(&s, r)| r.v * self.class_potential(j, (s & self.class_obs[j]).count_ones() as usize))
            .sum()
    }

    #[inline]
    fn class_potential(&self, j: usize, count: usize) -> f64 {
        if self.partition.is_self_only(j) {
            self.f.class(j)[1] * count as f64
        } else {
            self.prefix[j][count]
        }
    }

    /// Change of agent `i`'s class potential when it switches to `action`.
    pub fn potential_delta(&self, i: usize, action: usize, p: &Profile) -> f64 {
        self.potential_delta_of(i, action, p.0[i], &self.selections(p))
    }

    fn potential_delta_of(&self, i: usize, to: usize, from: usize, sel: &[u64]) -> f64 {
        let j = self.partition.class_of(i);
        let mask = self.class_obs[j];
        let bit = 1u64 << i;
        let old = &self.actions[i][from];
        let new = &self.actions[i][to];
        let mut delta = 0.0;
        // Walk the symmetric difference of two sorted lists.
        let (mut x, mut y) = (0, 0);
        while x < old.len() || y < new.len() {
            let (r, s_new) = match (old.get(x), new.get(y)) {
                (Some(&a), Some(&b)) if a == b => {
                    x += 1;
                    y += 1;
                    continue;
                }
                (Some(&a), Some(&b)) if a < b => {
                    x += 1;
                    (a, sel[a] & !bit)
                }
                (Some(&a), None) => {
                    x += 1;
                    (a, sel[a] & !bit)
                }
                (_, Some(&b)) => {
                    y += 1;
                    (b, sel[b] | bit)
                }
                (None, None) => unreachable!(),
            };
            let before = self.class_potential(j, (sel[r] & mask).count_ones() as usize);
            let after = self.class_potential(j, (s_new & mask).count_ones() as usize);
            delta += self.resources[r].v * (after - before);
        }
        delta
    }

    /// No agent gains more than [`NASH_TOL`] by deviating, measured through the class potentials.
    pub fn is_nash(&self, p: &Profile) -> bool {
        let sel = self.selections(p);
        (0..self.n()).all(|i| {
            (0..self.actions[i].len())
                .filter(|&b| b != p.0[i])
                .all(|b| self.potential_delta_of(i, b, p.0[i], &sel) <= NASH_TOL)
        })
    }

    /// Same test by recomputing utilities directly.
    pub fn is_nash_direct(&self, p: &Profile) -> bool {
        let sel = self.selections(p);
        (0..self.n()).all(|i| {
            let current = self.utility_of(i, p.0[i], &sel);
            (0..self.actions[i].len()).filter(|&b| b != p.0[i]).all(|b| {
                let dev = self.deviate(&sel, i, p.0[i], b);
                self.utility_of(i, b, &dev) - current <= NASH_TOL
            })
        })
    }

    fn deviate(&self, sel: &[u64], i: usize, from: usize, to: usize) -> Vec<u64> {
        let mut s = sel.to_vec();
        for &r in &self.actions[i][from] {
            s[r] &= !(1 << i);
        }
        for &r in &self.actions[i][to] {
            s[r] |= 1 << i;
        }
        s
    }

    /// Profile at mixed-radix position `idx`, agent 0 most significant.
    pub fn profile_at(&self, mut idx: u128) -> Profile {
        let mut choice = vec![0; self.n()];
        for i in (0..self.n()).rev() {
            let len = self.actions[i].len() as u128;
            choice[i] = (idx % len) as usize;
            idx /= len;
        }
        Profile(choice)
    }

    fn check_cap(&self, cap: u128) -> Result<u64> {
        let total = self.profile_count();
        if total > cap {
            return Err(PoaError::Capacity {
                what: "action profiles",
                count: total,
                cap,
            });
        }
        Ok(total as u64)
    }

    /// Every pure Nash equilibrium in enumeration order.
    pub fn enumerate_pure_ne(&self, cap: u128) -> Result<Vec<Profile>> {
        let total = self.check_cap(cap)?;
        Ok((0..total)
            .into_par_iter()
            .filter_map(|idx| {
                let p = self.profile_at(idx as u128);
                self.is_nash(&p).then_some(p)
            })
            .collect())
    }

    pub fn optimal_welfare(&self, cap: u128) -> Result<f64> {
        let total = self.check_cap(cap)?;
        Ok((0..total)
            .into_par_iter()
            .map(|idx| self.welfare(&self.profile_at(idx as u128)))
            .reduce(|| 0.0, f64::max))
    }

    /// Worst equilibrium welfare over optimal welfare; `None` without a pure equilibrium.
    pub fn empirical_poa(&self, cap: u128) -> Result<Option<EmpiricalPoa>> {
        let total = self.check_cap(cap)?;
        let (opt, worst, count) = (0..total)
            .into_par_iter()
            .map(|idx| {
                let p = self.profile_at(idx as u128);
                let wv = self.welfare(&p);
                let ne = self.is_nash(&p);
                (wv, if ne { wv } else { f64::INFINITY }, ne as usize)
            })
            .reduce(
                || (0.0, f64::INFINITY, 0),
                |a, b| (a.0.max(b.0), a.1.min(b.1), a.2 + b.2),
            );
        if opt <= 0.0 {
            return Err(PoaError::validation("optimal welfare is zero"));
        }
        Ok((count > 0).then(|| EmpiricalPoa {
            ratio: worst / opt,
            worst_ne_welfare: worst,
            optimal_welfare: opt,
            ne_count: count,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalPoa {
    pub ratio: f64,
    pub worst_ne_welfare: f64,
    pub optimal_welfare: f64,
    pub ne_count: usize,
}

/// Parameters of the random game family used for soundness checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomGameParams {
    pub resources: usize,
    pub max_actions: usize,
    pub min_value: f64,
    pub max_value: f64,
}

impl Default for RandomGameParams {
    fn default() -> Self {
        RandomGameParams {
            resources: 4,
            max_actions: 3,
            min_value: 0.1,
            max_value: 1.0,
        }
    }
}

/// Values uniform on `[min_value, max_value]`; each agent gets 1 to
/// `max_actions` actions, each a uniformly random nonempty resource subset.
pub fn random_game(
    rng: &mut impl Rng,
    params: &RandomGameParams,
    partition: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
) -> Result<GameInstance> {
    let m = params.resources;
    if m == 0 || m > 30 || params.max_actions == 0 {
        return Err(PoaError::validation("random games need 1..=30 resources and at least one action"));
    }
    let resources = (0..m)
        .map(|r| Resource {
            id: format!("r{}", r + 1),
            v: rng.gen_range(params.min_value..=params.max_value),
        })
        .collect();
    let actions = (0..partition.n())
        .map(|_| {
            let count = rng.gen_range(1..=params.max_actions);
            (0..count)
                .map(|_| {
                    let mask: u32 = rng.gen_range(1..(1u32 << m));
                    (0..m).filter(|r| mask >> r & 1 == 1).collect()
                })
                .collect()
        })
        .collect();
    GameInstance::new(resources, actions, partition.clone(), w.clone(), f.clone())
}

/// Resources `[start, start + len)` forming `K_j(t, l)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceGroup {
    pub tuple: usize,
    pub class: usize,
    pub l: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightChecks {
    pub uniform_values: bool,
    pub selection_counts: bool,
    pub agent_resource_counts: bool,
    pub welfare_ne: f64,
    pub welfare_opt: f64,
    pub expected_welfare_opt: f64,
    pub a_ne_is_nash: bool,
}

impl TightChecks {
    pub fn structural_ok(&self) -> bool {
        self.uniform_values && self.selection_counts && self.agent_resource_counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightInstance {
    pub game: GameInstance,
    pub a_ne: Profile,
    pub a_opt: Profile,
    /// Least common multiple of the class sizes.
    pub n_tilde: usize,
    pub support: Vec<ThetaEntry>,
    pub groups: Vec<ResourceGroup>,
    /// Total `theta` of the dropped near-zero entries.
    pub dropped_mass: f64,
    pub checks: TightChecks,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Worst-case game for a primal certificate. Every agent chooses between its
/// equilibrium and its optimal action; agent 0 of each pair is index 0.
/// Fails when a postcondition does not hold.
pub fn build_tight_instance(
    part: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
    theta: &[ThetaEntry],
    resource_cap: usize,
) -> Result<TightInstance> {
    let expected_opt = verify_primal_certificate(part, w, f, theta)?;
    let k = part.k();
    let n_tilde = part.kappas().iter().fold(1, |l, &kp| l / gcd(l, kp) * kp);
    let (support, dropped): (Vec<&ThetaEntry>, Vec<&ThetaEntry>) =
        theta.iter().partition(|e| e.value >= THETA_THRESHOLD);
    let dropped_mass = dropped.iter().fold(0.0, |acc, e| acc + e.value);
    let total = n_tilde as u128 * support.len() as u128;
    if total > resource_cap as u128 {
        return Err(PoaError::Capacity {
            what: "tight instance resources",
            count: total,
            cap: resource_cap as u128,
        });
    }
    let n = part.n();
    let mut resources = Vec::with_capacity(total as usize);
    let mut ne_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut opt_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut groups = Vec::new();
    for (s, e) in support.iter().enumerate() {
        let base = resources.len();
        for q in 0..n_tilde {
            resources.push(Resource {
                id: format!("t{}_q{}", s + 1, q + 1),
                v: e.value / n_tilde as f64,
            });
        }
        for j in 0..k {
            let kappa = part.kappa(j);
            let width = n_tilde / kappa;
            let (a, x, b) = (e.tuple.a(j), e.tuple.x(j), e.tuple.b(j));
            for l in 0..kappa {
                groups.push(ResourceGroup {
                    tuple: s,
                    class: j,
                    l,
                    start: base + l * width,
                    len: width,
                });
                for (p, &agent) in part.class(j).iter().enumerate() {
                    let block = base + l * width..base + (l + 1) * width;
                    if (l + kappa - p % kappa) % kappa < a + x {
                        ne_sets[agent].extend(block.clone());
                    }
                    if (l + b + kappa - p % kappa) % kappa < b + x {
                        opt_sets[agent].extend(block);
                    }
                }
            }
        }
    }
    let actions: Vec<Vec<Vec<usize>>> = ne_sets.into_iter().zip(opt_sets).map(|(a, b)| vec![a, b]).collect();
    let game = GameInstance::new(resources, actions, part.clone(), w.clone(), f.clone())?;
    let a_ne = Profile(vec![0; n]);
    let a_opt = Profile(vec![1; n]);

    let support: Vec<ThetaEntry> = support.into_iter().cloned().collect();
    let sel_ne = game.selections(&a_ne);
    let sel_opt = game.selections(&a_opt);
    let mut uniform_values = true;
    let mut selection_counts = true;
    let mut agent_resource_counts = true;
    for (s, e) in support.iter().enumerate() {
        let range = s * n_tilde..(s + 1) * n_tilde;
        let v = e.value / n_tilde as f64;
        uniform_values &= game.resources[range.clone()].iter().all(|r| r.v == v);
        for j in 0..k {
            let class_mask = part.class(j).iter().fold(0u64, |m, &a| m | 1 << a);
            let (a, x, b) = (e.tuple.a(j), e.tuple.x(j), e.tuple.b(j));
            selection_counts &= range.clone().all(|r| {
                (sel_ne[r] & class_mask).count_ones() as usize == a + x
                    && (sel_opt[r] & class_mask).count_ones() as usize == b + x
            });
            let width = n_tilde / part.kappa(j);
            agent_resource_counts &= part.class(j).iter().all(|&i| {
                let in_range = |act: &Vec<usize>| act.iter().filter(|r| range.contains(r)).count();
                in_range(&game.actions[i][0]) == width * (a + x) && in_range(&game.actions[i][1]) == width * (b + x)
            });
        }
    }
    let welfare_ne = game.welfare_of(&sel_ne);
    let welfare_opt = game.welfare_of(&sel_opt);
    // Dropped support lowers both welfares by at most its own mass times w(n).
    let slack = FEAS_TOL + dropped_mass * w.at(n).max(1.0);
    let expected_norm: f64 = support.iter().map(|e| e.value * w.at(tuple_stats(e.tuple.as_slice(), part).a_total)).sum();
    let checks = TightChecks {
        uniform_values,
        selection_counts,
        agent_resource_counts,
        welfare_ne,
        welfare_opt,
        expected_welfare_opt: expected_opt,
        a_ne_is_nash: game.is_nash(&a_ne),
    };
    if !checks.structural_ok() {
        return Err(PoaError::invariant(format!("tight instance structure failed: {checks:?}")));
    }
    if (welfare_ne - 1.0).abs() > slack || (welfare_ne - expected_norm).abs() > FEAS_TOL {
        return Err(PoaError::invariant(format!("tight instance W(a_ne) = {welfare_ne}, expected 1")));
    }
    if (welfare_opt - expected_opt).abs() > slack {
        return Err(PoaError::invariant(format!(
            "tight instance W(a_opt) = {welfare_opt}, expected {expected_opt}"
        )));
    }
    if !checks.a_ne_is_nash {
        return Err(PoaError::invariant("tight instance a_ne is not a Nash equilibrium"));
    }
    Ok(TightInstance {
        game,
        a_ne,
        a_opt,
        n_tilde,
        support,
        groups,
        dropped_mass,
        checks,
    })
}

/// JSON dump of a tight instance including its resource grouping.
#[derive(Debug, Clone, Serialize)]
pub struct TightInstanceFile {
    pub game: GameFile,
    pub n_tilde: usize,
    pub groups: Vec<ResourceGroup>,
    pub a_ne: Profile,
    pub a_opt: Profile,
    pub dropped_mass: f64,
    pub checks: TightChecks,
}

impl TightInstance {
    pub fn to_file(&self) -> TightInstanceFile {
        TightInstanceFile {
            game: self.game.to_file(),
            n_tilde: self.n_tilde,
            groups: self.groups.clone(),
            a_ne: self.a_ne.clone(),
            a_opt: self.a_opt.clone(),
            dropped_mass: self.dropped_mass,
            checks: self.checks.clone(),
        }
    }
}
