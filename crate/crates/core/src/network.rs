//! Information networks and their similarity-class partitions.
//!
//! Agents are indexed from 0 internally. Every file format and human-facing
//! report uses 1-based agent and class labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{PoaError, Result};

/// Per-agent observation sets. `obs[i]` holds the agents whose actions agent
/// `i` observes; it always contains `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InformationNetwork {
    obs: Vec<BTreeSet<usize>>,
    repaired: Vec<usize>,
}

impl InformationNetwork {
    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn obs(&self, agent: usize) -> &BTreeSet<usize> {
        &self.obs[agent]
    }

    /// Agents whose observation set lacked themselves and had it inserted.
    pub fn repaired_agents(&self) -> &[usize] {
        &self.repaired
    }

    pub fn has_repairs(&self) -> bool {
        !self.repaired.is_empty()
    }

    /// Agents that observe `agent`.
    pub fn observed_by(&self, agent: usize) -> BTreeSet<usize> {
        (0..self.n()).filter(|&l| self.obs[l].contains(&agent)).collect()
    }

    /// Every agent observes every other agent.
    pub fn complete(n: usize) -> Result<Self> {
        validate_network((0..n).map(|_| (0..n).collect()).collect())
    }

    /// Agents `0..kappa` observe only themselves; the rest observe everyone.
    pub fn blind(n: usize, kappa: usize) -> Result<Self> {
        check_kappa(n, kappa)?;
        validate_network(
            (0..n)
                .map(|i| if i < kappa { vec![i] } else { (0..n).collect() })
                .collect(),
        )
    }

    /// Agents `0..kappa` observe only themselves and nobody observes them;
    /// the rest observe each other.
    pub fn isolated(n: usize, kappa: usize) -> Result<Self> {
        check_kappa(n, kappa)?;
        validate_network(
            (0..n)
                .map(|i| if i < kappa { vec![i] } else { (kappa..n).collect() })
                .collect(),
        )
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            n: self.n(),
            obs: self
                .obs
                .iter()
                .map(|s| s.iter().map(|&a| a + 1).collect())
                .collect(),
        }
    }
}

fn check_kappa(n: usize, kappa: usize) -> Result<()> {
    if n == 0 {
        return Err(PoaError::validation("network needs at least one agent"));
    }
    if kappa > n {
        return Err(PoaError::validation(format!(
            "kappa = {kappa} exceeds the number of agents n = {n}"
        )));
    }
    Ok(())
}

/// Builds a network from 0-based observation lists.
///
/// A missing self-observation is repaired rather than rejected; the repaired
/// agents are recorded on the result.
pub fn validate_network(obs: Vec<Vec<usize>>) -> Result<InformationNetwork> {
    let n = obs.len();
    if n == 0 {
        return Err(PoaError::validation("network needs at least one agent"));
    }
    if n > 64 {
        return Err(PoaError::validation(format!(
            "networks are limited to 64 agents, got {n}"
        )));
    }
    let mut sets = Vec::with_capacity(n);
    let mut repaired = Vec::new();
    for (i, list) in obs.into_iter().enumerate() {
        let mut set = BTreeSet::new();
        for a in list {
            if a >= n {
                return Err(PoaError::validation(format!(
                    "agent {} observes agent {} which is out of range 1..={n}",
                    i + 1,
                    a + 1
                )));
            }
            set.insert(a);
        }
        if set.insert(i) {
            repaired.push(i);
        }
        sets.push(set);
    }
    Ok(InformationNetwork {
        obs: sets,
        repaired,
    })
}

/// Network JSON with 1-based agent labels: `{"n": 3, "obs": [[1,2],[2],[3]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub n: usize,
    pub obs: Vec<Vec<usize>>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<InformationNetwork> {
        if self.obs.len() != self.n {
            return Err(PoaError::validation(format!(
                "n = {} but {} observation lists given",
                self.n,
                self.obs.len()
            )));
        }
        let mut zero_based = Vec::with_capacity(self.n);
        for (i, list) in self.obs.into_iter().enumerate() {
            let mut out = Vec::with_capacity(list.len());
            for a in list {
                if a == 0 || a > self.n {
                    return Err(PoaError::validation(format!(
                        "agent {} observes agent {a} which is out of range 1..={}",
                        i + 1,
                        self.n
                    )));
                }
                out.push(a - 1);
            }
            zero_based.push(out);
        }
        validate_network(zero_based)
    }
}

/// A division of the agents into classes `C_1..C_k`, with `O_j` the classes
/// observed by class `j`.
///
/// Classes flagged `self_only` hold agents that each observe only
/// themselves (the blind and isolated groups of the two-class refinements).
/// Such a class is not required to satisfy C.2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    n: usize,
    classes: Vec<Vec<usize>>,
    obs_classes: Vec<Vec<usize>>,
    self_only: Vec<bool>,
    class_of: Vec<usize>,
}

impl ClassPartition {
    /// Checks the structural invariants: the classes partition `0..n`, every
    /// `O_j` is in range and contains `j`.
    pub fn new(
        n: usize,
        classes: Vec<Vec<usize>>,
        obs_classes: Vec<Vec<usize>>,
        self_only: Vec<bool>,
    ) -> Result<Self> {
        let k = classes.len();
        if n == 0 || k == 0 {
            return Err(PoaError::validation("partition needs at least one agent"));
        }
        if obs_classes.len() != k || self_only.len() != k {
            return Err(PoaError::validation(format!(
                "{k} classes but {} observation lists and {} self-only flags",
                obs_classes.len(),
                self_only.len()
            )));
        }
        let mut class_of = vec![usize::MAX; n];
        let mut classes = classes;
        for (j, class) in classes.iter_mut().enumerate() {
            class.sort_unstable();
            if class.is_empty() {
                return Err(PoaError::validation(format!("class {} is empty", j + 1)));
            }
            for &a in class.iter() {
                if a >= n {
                    return Err(PoaError::validation(format!(
                        "class {} contains agent {} out of range 1..={n}",
                        j + 1,
                        a + 1
                    )));
                }
                if class_of[a] != usize::MAX {
                    return Err(PoaError::validation(format!(
                        "agent {} assigned to more than one class",
                        a + 1
                    )));
                }
                class_of[a] = j;
            }
        }
        if let Some(a) = class_of.iter().position(|&c| c == usize::MAX) {
            return Err(PoaError::validation(format!(
                "agent {} is not assigned to any class",
                a + 1
            )));
        }
        let mut obs_classes = obs_classes;
        for (j, o) in obs_classes.iter_mut().enumerate() {
            o.sort_unstable();
            o.dedup();
            if let Some(&bad) = o.iter().find(|&&l| l >= k) {
                return Err(PoaError::validation(format!(
                    "class {} observes class {} out of range 1..={k}",
                    j + 1,
                    bad + 1
                )));
            }
            if !o.contains(&j) {
                return Err(PoaError::validation(format!(
                    "class {} does not observe itself",
                    j + 1
                )));
            }
        }
        Ok(ClassPartition {
            n,
            classes,
            obs_classes,
            self_only,
            class_of,
        })
    }

    /// Every agent in one class observing everyone.
    pub fn single_class(n: usize) -> Result<Self> {
        Self::new(n, vec![(0..n).collect()], vec![vec![0]], vec![false])
    }

    /// Two-class model of a network with `kappa` blind agents: class 1 holds
    /// the blind agents, class 2 the rest with `O_2 = {1, 2}`. An empty class
    /// is dropped.
    pub fn blind_two_class(n: usize, kappa: usize) -> Result<Self> {
        Self::two_class(n, kappa, true)
    }

    /// Two-class model of a network with `kappa` isolated agents; the
    /// non-isolated class observes only itself.
    pub fn isolated_two_class(n: usize, kappa: usize) -> Result<Self> {
        Self::two_class(n, kappa, false)
    }

    fn two_class(n: usize, kappa: usize, others_observe_blind: bool) -> Result<Self> {
        check_kappa(n, kappa)?;
        if kappa == 0 {
            return Self::single_class(n);
        }
        if kappa == n {
            return Self::new(n, vec![(0..n).collect()], vec![vec![0]], vec![true]);
        }
        let observed = if others_observe_blind {
            vec![0, 1]
        } else {
            vec![1]
        };
        Self::new(
            n,
            vec![(0..kappa).collect(), (kappa..n).collect()],
            vec![vec![0], observed],
            vec![true, false],
        )
    }

    /// Each agent its own class, with `O_i` read off the network.
    pub fn singletons(net: &InformationNetwork) -> Result<Self> {
        let n = net.n();
        Self::new(
            n,
            (0..n).map(|i| vec![i]).collect(),
            (0..n).map(|i| net.obs(i).iter().copied().collect()).collect(),
            vec![false; n],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class(&self, j: usize) -> &[usize] {
        &self.classes[j]
    }

    pub fn kappa(&self, j: usize) -> usize {
        self.classes[j].len()
    }

    pub fn kappas(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    pub fn obs_classes(&self, j: usize) -> &[usize] {
        &self.obs_classes[j]
    }

    pub fn is_self_only(&self, j: usize) -> bool {
        self.self_only[j]
    }

    pub fn class_of(&self, agent: usize) -> usize {
        self.class_of[agent]
    }

    /// `|N_j|`: the number of agents a member of class `j` observes.
    pub fn observed_count(&self, j: usize) -> usize {
        if self.self_only[j] {
            1
        } else {
            self.obs_classes[j].iter().map(|&l| self.kappa(l)).sum()
        }
    }

    /// The observation set the partition implies for `agent`.
    pub fn induced_obs(&self, agent: usize) -> BTreeSet<usize> {
        let j = self.class_of[agent];
        if self.self_only[j] {
            return BTreeSet::from([agent]);
        }
        self.obs_classes[j]
            .iter()
            .flat_map(|&l| self.classes[l].iter().copied())
            .collect()
    }

    pub fn induced_network(&self) -> InformationNetwork {
        InformationNetwork {
            obs: (0..self.n).map(|i| self.induced_obs(i)).collect(),
            repaired: Vec::new(),
        }
    }

    pub fn to_file(&self) -> PartitionFile {
        PartitionFile {
            classes: self
                .classes
                .iter()
                .map(|c| c.iter().map(|&a| a + 1).collect())
                .collect(),
            obs_classes: self
                .obs_classes
                .iter()
                .map(|o| o.iter().map(|&l| l + 1).collect())
                .collect(),
        }
    }
}

/// Partition JSON with 1-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub classes: Vec<Vec<usize>>,
    pub obs_classes: Vec<Vec<usize>>,
}

impl PartitionFile {
    pub fn into_partition(self, n: usize) -> Result<ClassPartition> {
        let shift = |v: Vec<usize>, what: &str| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|x| {
                    x.checked_sub(1)
                        .ok_or_else(|| PoaError::validation(format!("{what} labels start at 1")))
                })
                .collect()
        };
        let k = self.classes.len();
        let classes = self
            .classes
            .into_iter()
            .map(|c| shift(c, "agent"))
            .collect::<Result<Vec<_>>>()?;
        let obs = self
            .obs_classes
            .into_iter()
            .map(|o| shift(o, "class"))
            .collect::<Result<Vec<_>>>()?;
        ClassPartition::new(n, classes, obs, vec![false; k])
    }
}

/// Groups agents that observe the same agents and are observed by the same
/// agents. Classes are ordered by their smallest member.
pub fn partition_into_classes(net: &InformationNetwork) -> ClassPartition {
    let n = net.n();
    let mut groups: BTreeMap<(Vec<usize>, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = (
            net.obs(i).iter().copied().collect(),
            net.observed_by(i).into_iter().collect(),
        );
        groups.entry(key).or_default().push(i);
    }
    let mut classes: Vec<Vec<usize>> = groups.into_values().collect();
    classes.sort_by_key(|c| c[0]);

    let mut class_of = vec![0; n];
    for (j, c) in classes.iter().enumerate() {
        for &a in c {
            class_of[a] = j;
        }
    }
    let obs_classes = classes
        .iter()
        .map(|c| {
            let set: BTreeSet<usize> = net.obs(c[0]).iter().map(|&a| class_of[a]).collect();
            set.into_iter().collect()
        })
        .collect();
    let k = classes.len();
    ClassPartition::new(n, classes, obs_classes, vec![false; k])
        .expect("similarity classes always form a valid partition")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub witnesses: Vec<String>,
}

impl ConditionCheck {
    fn from_witnesses(witnesses: Vec<String>) -> Self {
        ConditionCheck {
            passed: witnesses.is_empty(),
            witnesses,
        }
    }
}

/// Outcome of checking C.1 (exact cover), C.2 (classes observe themselves)
/// and C.3 (observation sets are unions of whole classes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub c1: ConditionCheck,
    pub c2: ConditionCheck,
    pub c3: ConditionCheck,
}

impl PartitionReport {
    pub fn all_passed(&self) -> bool {
        self.c1.passed && self.c2.passed && self.c3.passed
    }
}

/// Checks a partition against a network. Never fails; violations are
/// listed as witnesses with 1-based labels.
pub fn validate_partition(net: &InformationNetwork, part: &ClassPartition) -> PartitionReport {
    let n = net.n();
    let mut c1 = Vec::new();
    if part.n() != n {
        c1.push(format!("partition covers {} agents, network has {n}", part.n()));
    }
    let mut seen = vec![0usize; n.max(part.n())];
    for c in part.classes() {
        for &a in c {
            seen[a] += 1;
        }
    }
    for (a, &times) in seen.iter().enumerate() {
        if times != 1 {
            c1.push(format!("agent {} appears in {times} classes", a + 1));
        }
    }
    if !c1.is_empty() {
        // C.2 and C.3 are meaningless without a proper cover.
        let skipped = ConditionCheck::from_witnesses(vec!["not checked: C.1 failed".into()]);
        return PartitionReport {
            c1: ConditionCheck::from_witnesses(c1),
            c2: skipped.clone(),
            c3: skipped,
        };
    }

    let mut c2 = Vec::new();
    let mut c3 = Vec::new();
    for (j, class) in part.classes().iter().enumerate() {
        for &i in class {
            for &other in class {
                if !net.obs(i).contains(&other) {
                    c2.push(format!(
                        "agent {} in class {} does not observe agent {}",
                        i + 1,
                        j + 1,
                        other + 1
                    ));
                }
            }
            let expected: BTreeSet<usize> = part
                .obs_classes(j)
                .iter()
                .flat_map(|&l| part.class(l).iter().copied())
                .collect();
            if net.obs(i) != &expected {
                c3.push(format!(
                    "agent {} in class {} observes {:?}, classes O_{} cover {:?}",
                    i + 1,
                    j + 1,
                    one_based(net.obs(i)),
                    j + 1,
                    one_based(&expected)
                ));
            }
        }
    }
    PartitionReport {
        c1: ConditionCheck::from_witnesses(c1),
        c2: ConditionCheck::from_witnesses(c2),
        c3: ConditionCheck::from_witnesses(c3),
    }
}

fn one_based(set: &BTreeSet<usize>) -> Vec<usize> {
    set.iter().map(|&a| a + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> InformationNetwork {
        NetworkFile {
            n: 5,
            obs: vec![
                vec![1, 2, 3, 4, 5],
                vec![1, 2, 3, 5],
                vec![1, 2, 3, 5],
                vec![1, 4],
                vec![1, 2, 3, 4, 5],
            ],
        }
        .into_network()
        .unwrap()
    }

    #[test]
    fn single_agent_network() {
        let net = validate_network(vec![vec![0]]).unwrap();
        assert_eq!(net.n(), 1);
        assert!(!net.has_repairs());
    }

    #[test]
    fn complete_two_agent_network() {
        let net = validate_network(vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(net.n(), 2);
        assert_eq!(partition_into_classes(&net).k(), 1);
    }

    #[test]
    fn out_of_range_index_names_agent() {
        let err = validate_network(vec![vec![0, 2], vec![1]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("agent 1"), "{msg}");
    }

    #[test]
    fn empty_network_rejected() {
        assert!(validate_network(vec![]).is_err());
    }

    #[test]
    fn reflexivity_is_repaired() {
        let net = validate_network(vec![vec![1], vec![0, 1]]).unwrap();
        assert_eq!(net.repaired_agents(), &[0]);
        assert!(net.obs(0).contains(&0));
    }

    #[test]
    fn fig1_partition() {
        let part = partition_into_classes(&fig1());
        assert_eq!(part.classes(), &[vec![0], vec![1, 2], vec![3], vec![4]]);
        assert_eq!(part.obs_classes(0), &[0, 1, 2, 3]);
        assert_eq!(part.obs_classes(1), &[0, 1, 3]);
        assert_eq!(part.obs_classes(2), &[0, 2]);
        assert_eq!(part.obs_classes(3), &[0, 1, 2, 3]);
        assert_eq!(part.observed_count(1), 4);
        assert!(validate_partition(&fig1(), &part).all_passed());
    }

    #[test]
    fn complete_graph_is_one_class() {
        let part = partition_into_classes(&InformationNetwork::complete(6).unwrap());
        assert_eq!(part.k(), 1);
        assert_eq!(part.obs_classes(0), &[0]);
    }

    #[test]
    fn self_observers_are_singletons() {
        let net = validate_network((0..4).map(|i| vec![i]).collect()).unwrap();
        let part = partition_into_classes(&net);
        assert_eq!(part.k(), 4);
        assert!(part.classes().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn singleton_partition_passes() {
        let net = fig1();
        let part = ClassPartition::singletons(&net).unwrap();
        assert!(validate_partition(&net, &part).all_passed());
    }

    #[test]
    fn blind_two_class_flags_c2() {
        let net = InformationNetwork::blind(5, 3).unwrap();
        let part = ClassPartition::blind_two_class(5, 3).unwrap();
        let report = validate_partition(&net, &part);
        assert!(report.c1.passed);
        assert!(!report.c2.passed);
        assert!(!report.c2.witnesses.is_empty());
    }

    #[test]
    fn blind_network_similarity_classes() {
        let part = partition_into_classes(&InformationNetwork::blind(6, 2).unwrap());
        assert_eq!(part.k(), 3);
        assert_eq!(part.kappas(), vec![1, 1, 4]);
        assert_eq!(part.observed_count(2), 6);
        assert_eq!(part.observed_count(0), 1);
    }

    #[test]
    fn isolated_network_similarity_classes() {
        let part = partition_into_classes(&InformationNetwork::isolated(6, 2).unwrap());
        assert_eq!(part.kappas(), vec![1, 1, 4]);
        assert_eq!(part.obs_classes(2), &[2]);
        assert_eq!(part.observed_count(2), 4);
    }

    #[test]
    fn induced_network_matches_similarity_source() {
        let net = fig1();
        let part = partition_into_classes(&net);
        assert_eq!(part.induced_network().obs, net.obs);
    }

    #[test]
    fn partition_file_round_trip() {
        let part = partition_into_classes(&fig1());
        let text = serde_json::to_string(&part.to_file()).unwrap();
        let back: PartitionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_partition(5).unwrap(), part);
    }

    #[test]
    fn bad_partition_fails_c1() {
        let net = fig1();
        let err = ClassPartition::new(5, vec![vec![0, 1], vec![1, 2, 3, 4]], vec![vec![0], vec![1]], vec![false; 2]);
        assert!(err.is_err());
        // A structurally valid partition that mismatches the network fails C.3.
        let part = ClassPartition::new(
            5,
            vec![vec![0, 1, 2, 3, 4]],
            vec![vec![0]],
            vec![false],
        )
        .unwrap();
        let report = validate_partition(&net, &part);
        assert!(report.c1.passed);
        assert!(!report.c3.passed);
    }
}
