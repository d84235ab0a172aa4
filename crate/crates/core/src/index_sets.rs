//! Index tuples `t = ((a_j, x_j, b_j))_j` over the classes of a partition.
//!
//! For a resource, `a_j` counts class-`j` agents selecting it only at the
//! equilibrium, `x_j` at both profiles and `b_j` only at the optimum. The full
//! set keeps every tuple with `a_j + x_j + b_j <= kappa_j` and a positive total;
//! the reduced set additionally requires, per class, `a_j * x_j * b_j = 0` or
//! `a_j + x_j + b_j = kappa_j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PoaError, Result};
use crate::network::ClassPartition;

pub const DEFAULT_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexSetKind {
    Full,
    Reduced,
}

/// Tuples stored back to back as `3k` integers each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    k: usize,
    kind: IndexSetKind,
    data: Vec<u16>,
}

impl IndexSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> IndexSetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.data.len() / (3 * self.k)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u16] {
        let w = 3 * self.k;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u16]> + '_ {
        self.data.chunks_exact(3 * self.k)
    }

    pub fn contains(&self, t: &[u16]) -> bool {
        // Enumeration order is lexicographic, so binary search works.
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.get(mid).cmp(t) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// An owned tuple with named accessors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTuple(Vec<u16>);

impl IndexTuple {
    pub fn from_triples(triples: &[(u16, u16, u16)]) -> Self {
        IndexTuple(triples.iter().flat_map(|&(a, x, b)| [a, x, b]).collect())
    }

    pub fn from_slice(raw: &[u16]) -> Self {
        assert!(raw.len().is_multiple_of(3), "tuple length must be a multiple of 3");
        IndexTuple(raw.to_vec())
    }

    pub fn k(&self) -> usize {
        self.0.len() / 3
    }

    pub fn a(&self, j: usize) -> usize {
        self.0[3 * j] as usize
    }

    pub fn x(&self, j: usize) -> usize {
        self.0[3 * j + 1] as usize
    }

    pub fn b(&self, j: usize) -> usize {
        self.0[3 * j + 2] as usize
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn triples(&self) -> Vec<[u16; 3]> {
        self.0.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }
}

impl Serialize for IndexTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.triples().serialize(s)
    }
}

impl<'de> Deserialize<'de> for IndexTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let triples = Vec::<[u16; 3]>::deserialize(d)?;
        Ok(IndexTuple(triples.into_iter().flatten().collect()))
    }
}

/// Derived counts of a tuple: `A_t`, `B_t` and `A_{t,j}` per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TupleStats {
    pub a_total: usize,
    pub b_total: usize,
    pub a_class: Vec<usize>,
}

pub fn tuple_stats(t: &[u16], part: &ClassPartition) -> TupleStats {
    let k = part.k();
    debug_assert_eq!(t.len(), 3 * k);
    let mut a_total = 0;
    let mut b_total = 0;
    let mut ne = vec![0usize; k];
    for j in 0..k {
        let (a, x, b) = (t[3 * j] as usize, t[3 * j + 1] as usize, t[3 * j + 2] as usize);
        ne[j] = a + x;
        a_total += a + x;
        b_total += b + x;
    }
    let a_class = (0..k)
        .map(|j| part.obs_classes(j).iter().map(|&l| ne[l]).sum())
        .collect();
    TupleStats {
        a_total,
        b_total,
        a_class,
    }
}

/// Triples with `a + x + b <= kappa` in lexicographic order.
pub fn class_triples(kappa: usize, kind: IndexSetKind) -> Vec<[u16; 3]> {
    let mut out = Vec::new();
    for a in 0..=kappa {
        for x in 0..=kappa - a {
            for b in 0..=kappa - a - x {
                let keep = match kind {
                    IndexSetKind::Full => true,
                    IndexSetKind::Reduced => a * x * b == 0 || a + x + b == kappa,
                };
                if keep {
                    out.push([a as u16, x as u16, b as u16]);
                }
            }
        }
    }
    out
}

/// Number of tuples the enumeration will produce.
pub fn count(part: &ClassPartition, kind: IndexSetKind) -> u128 {
    let n = part.n();
    if part.kappas().iter().sum::<usize>() <= n {
        // The total bound never binds: product of per-class counts minus the zero tuple.
        part.kappas()
            .iter()
            .map(|&kappa| class_triples(kappa, kind).len() as u128)
            .product::<u128>()
            - 1
    } else {
        let mut total = 0u128;
        for_each_tuple(part, kind, |_| total += 1);
        total
    }
}

/// `C(kappa + 3, 3)`, the number of nonnegative triples with sum at most `kappa`.
pub fn triples_up_to(kappa: usize) -> u128 {
    let k = kappa as u128;
    (k + 3) * (k + 2) * (k + 1) / 6
}

fn for_each_tuple(part: &ClassPartition, kind: IndexSetKind, mut visit: impl FnMut(&[u16])) {
    let k = part.k();
    let n = part.n();
    let lists: Vec<Vec<[u16; 3]>> = part
        .kappas()
        .iter()
        .map(|&kappa| class_triples(kappa, kind))
        .collect();
    let mut pos = vec![0usize; k];
    let mut buf = vec![0u16; 3 * k];
    loop {
        let mut total = 0usize;
        for j in 0..k {
            let tr = lists[j][pos[j]];
            buf[3 * j..3 * j + 3].copy_from_slice(&tr);
            total += (tr[0] + tr[1] + tr[2]) as usize;
        }
        if total >= 1 && total <= n {
            visit(&buf);
        }
        // Odometer with class 1 most significant keeps the flat order lexicographic.
        let mut j = k;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            pos[j] += 1;
            if pos[j] < lists[j].len() {
                break;
            }
            pos[j] = 0;
        }
    }
}

pub fn enumerate(part: &ClassPartition, kind: IndexSetKind, cap: usize) -> Result<IndexSet> {
    let total = count(part, kind);
    if total > cap as u128 {
        return Err(PoaError::Capacity {
            what: match kind {
                IndexSetKind::Full => "index set I",
                IndexSetKind::Reduced => "index set I_R",
            },
            count: total,
            cap: cap as u128,
        });
    }
    let k = part.k();
    let mut data = Vec::with_capacity(total as usize * 3 * k);
    for_each_tuple(part, kind, |t| data.extend_from_slice(t));
    Ok(IndexSet { k, kind, data })
}

pub fn enumerate_full(part: &ClassPartition, cap: usize) -> Result<IndexSet> {
    enumerate(part, IndexSetKind::Full, cap)
}

pub fn enumerate_reduced(part: &ClassPartition, cap: usize) -> Result<IndexSet> {
    enumerate(part, IndexSetKind::Reduced, cap)
}

/// Non-decreasing index sequences of length `g` over `0..len`.
fn multisets(len: usize, g: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; g];
    if len == 0 {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..g).rev().find(|&i| cur[i] + 1 < len) else {
            return out;
        };
        let v = cur[i] + 1;
        cur[i..].iter_mut().for_each(|c| *c = v);
    }
}

fn check_groups(part: &ClassPartition, groups: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; part.k()];
    for g in groups {
        let Some(&first) = g.first() else {
            return Err(PoaError::validation("empty class group"));
        };
        for &j in g {
            if j >= part.k() || std::mem::replace(&mut seen[j], true) {
                return Err(PoaError::validation("class groups must partition the classes"));
            }
            if part.kappa(j) != part.kappa(first) {
                return Err(PoaError::validation("grouped classes must have equal size"));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(PoaError::validation("class groups must partition the classes"));
    }
    Ok(())
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of orbit representatives [`enumerate_orbits`] produces.
pub fn count_orbits(part: &ClassPartition, groups: &[Vec<usize>], kind: IndexSetKind) -> Result<u128> {
    check_groups(part, groups)?;
    Ok(groups
        .iter()
        .map(|g| {
            let t = class_triples(part.kappa(g[0]), kind).len() as u128;
            binomial(g.len() as u128 + t - 1, g.len() as u128)
        })
        .product::<u128>()
        - 1)
}

/// One representative tuple per orbit of the index set under permutations
/// of the classes within each group. Groups must partition the classes and
/// share a class size. Output is sorted lexicographically.
pub fn enumerate_orbits(
    part: &ClassPartition,
    groups: &[Vec<usize>],
    kind: IndexSetKind,
    cap: usize,
) -> Result<IndexSet> {
    let total = count_orbits(part, groups, kind)?;
    if total > cap as u128 {
        return Err(PoaError::Capacity {
            what: "index set orbits",
            count: total,
            cap: cap as u128,
        });
    }
    let k = part.k();
    let lists: Vec<Vec<[u16; 3]>> = groups
        .iter()
        .map(|g| class_triples(part.kappa(g[0]), kind))
        .collect();
    let choices: Vec<Vec<Vec<usize>>> = groups
        .iter()
        .zip(&lists)
        .map(|(g, l)| multisets(l.len(), g.len()))
        .collect();
    let mut tuples: Vec<Vec<u16>> = Vec::with_capacity(total as usize);
    let mut pos = vec![0usize; groups.len()];
    let mut buf = vec![0u16; 3 * k];
    loop {
        for (gi, g) in groups.iter().enumerate() {
            for (&j, &ti) in g.iter().zip(&choices[gi][pos[gi]]) {
                buf[3 * j..3 * j + 3].copy_from_slice(&lists[gi][ti]);
            }
        }
        if buf.iter().any(|&v| v != 0) {
            tuples.push(buf.clone());
        }
        let mut gi = groups.len();
        loop {
            if gi == 0 {
                tuples.sort_unstable();
                let data = tuples.concat();
                return Ok(IndexSet { k, kind, data });
            }
            gi -= 1;
            pos[gi] += 1;
            if pos[gi] < choices[gi].len() {
                break;
            }
            pos[gi] = 0;
        }
    }
}

/// CSV dump: `a_1,x_1,b_1,...,a_k,x_k,b_k,A_t,B_t,A_t1,...,A_tk`.
pub fn write_csv(set: &IndexSet, part: &ClassPartition, out: &mut impl Write) -> std::io::Result<()> {
    let k = set.k();
    let mut header: Vec<String> = (1..=k)
        .flat_map(|j| [format!("a_{j}"), format!("x_{j}"), format!("b_{j}")])
        .collect();
    header.push("A_t".into());
    header.push("B_t".into());
    header.extend((1..=k).map(|j| format!("A_t{j}")));
    writeln!(out, "{}", header.join(","))?;
    for t in set.iter() {
        let stats = tuple_stats(t, part);
        let mut fields: Vec<String> = t.iter().map(u16::to_string).collect();
        fields.push(stats.a_total.to_string());
        fields.push(stats.b_total.to_string());
        fields.extend(stats.a_class.iter().map(usize::to_string));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
