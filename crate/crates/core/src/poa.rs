//! Price-of-anarchy linear programs.
//!
//! Every builder works on a [`ClassPartition`]. For each tuple `t` the
//! equilibrium term of class `j` is `a_j f_j(A_{t,j}) - b_j f_j(A_{t,j} + 1)`.
//! Classes flagged self-only use `a_j - b_j` instead: their agents always see
//! a count of one, so `f_j(1)` is a positive scale the multiplier absorbs.
//! Reported multipliers for such classes are therefore per unit of `f_j(1)`.

use serde::{Serialize, Serializer};

use crate::error::{PoaError, Result};
use crate::index_sets::{self, enumerate_orbits, tuple_stats, IndexSet, IndexSetKind, IndexTuple, DEFAULT_CAP};
use crate::lp::{solve, LpProblem, LpSolution, OptSense, RowSense, VarBound, FEAS_TOL};
use crate::mechanisms::{validate_mechanism, BasisFunction, Mechanism};
use crate::network::{partition_into_classes, ClassPartition, InformationNetwork};

/// Agreement tolerance on LP values between mathematically equal programs.
pub const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoaOptions {
    /// Index set for the dual and design programs; the primal always uses the full set.
    pub index_kind: IndexSetKind,
    pub cap: usize,
    /// Let interchangeable classes share one multiplier in the dual and keep
    /// one constraint per orbit of tuples. Exact; the dual then omits `theta`.
    pub symmetry: bool,
}

impl Default for PoaOptions {
    fn default() -> Self {
        PoaOptions {
            index_kind: IndexSetKind::Reduced,
            cap: DEFAULT_CAP,
            symmetry: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaEntry {
    pub tuple: IndexTuple,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaResult {
    pub poa: f64,
    /// `W*` for the primal, `V*` for the dual; absent when the gate fired.
    pub lp_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<ThetaEntry>>,
    pub lambda: Option<Vec<f64>>,
    pub mu: Option<f64>,
    /// 0-based class whose `f_j(1) <= 0`; serialized 1-based.
    #[serde(serialize_with = "one_based")]
    pub gate_failed: Option<usize>,
}

fn one_based<S: Serializer>(v: &Option<usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(j) => s.serialize_some(&(j + 1)),
        None => s.serialize_none(),
    }
}

impl PoaResult {
    fn gated(j: usize) -> Self {
        PoaResult {
            poa: 0.0,
            lp_value: None,
            theta: None,
            lambda: None,
            mu: None,
            gate_failed: Some(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalDesign {
    /// As solved, with the multipliers absorbed. Self-only classes get `f(1) = 1`.
    pub mechanism: Mechanism,
    /// Each class scaled so that `f_j(1) = w(1)`.
    pub normalized: Mechanism,
    pub mu_opt: f64,
    pub poa_opt: f64,
}

fn check_inputs(part: &ClassPartition, w: &BasisFunction, f: &Mechanism) -> Result<Option<usize>> {
    let report = validate_mechanism(f, part, w)?;
    Ok(report.gate_failure())
}

fn lp_error(context: &'static str, sol: &LpSolution) -> PoaError {
    PoaError::LpStatus {
        context,
        status: sol.status,
    }
}

/// Equilibrium coefficient of class `j` for tuple `t`.
#[inline]
fn class_term(part: &ClassPartition, f: &Mechanism, j: usize, t: &[u16], a_class: &[usize]) -> f64 {
    let a = t[3 * j] as f64;
    let b = t[3 * j + 2] as f64;
    if part.is_self_only(j) {
        a - b
    } else {
        let fj = f.class(j);
        let m = a_class[j];
        a * fj[m] - b * fj[m + 1]
    }
}

/// Primal program over the full index set: `max sum w(B_t) theta(t)`.
pub fn poa_primal(part: &ClassPartition, w: &BasisFunction, f: &Mechanism, opts: &PoaOptions) -> Result<PoaResult> {
    if let Some(j) = check_inputs(part, w, f)? {
        return Ok(PoaResult::gated(j));
    }
    let set = index_sets::enumerate(part, IndexSetKind::Full, opts.cap)?;
    let k = part.k();
    let cols = set.len();
    let mut objective = Vec::with_capacity(cols);
    let mut rows = vec![vec![0.0; cols]; k + 1];
    for (c, t) in set.iter().enumerate() {
        let s = tuple_stats(t, part);
        objective.push(w.at(s.b_total));
        for (j, row) in rows.iter_mut().take(k).enumerate() {
            row[c] = class_term(part, f, j, t, &s.a_class);
        }
        rows[k][c] = w.at(s.a_total);
    }
    let mut lp = LpProblem::with_capacity(OptSense::Maximize, objective, k + 1);
    for row in rows.iter().take(k) {
        lp.add_row(row, RowSense::Ge, 0.0)?;
    }
    lp.add_row(&rows[k], RowSense::Eq, 1.0)?;
    let sol = solve(&lp)?;
    if !sol.is_optimal() {
        return Err(lp_error("primal PoA LP", &sol));
    }
    let theta: Vec<ThetaEntry> = sol
        .primal
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(c, &v)| ThetaEntry {
            tuple: IndexTuple::from_slice(set.get(c)),
            value: v,
        })
        .collect();
    verify_primal_certificate(part, w, f, &theta)?;
    let value = sol.objective_value;
    Ok(PoaResult {
        poa: 1.0 / value,
        lp_value: Some(value),
        theta: Some(theta),
        lambda: Some(sol.duals[..k].iter().map(|y| (-y).max(0.0)).collect()),
        mu: Some(sol.duals[k]),
        gate_failed: None,
    })
}

/// Dual program over `opts.index_kind`: `min mu` over `lambda >= 0`, `mu` free.
/// The row duals give a primal certificate supported on the same index set.
pub fn poa_dual(part: &ClassPartition, w: &BasisFunction, f: &Mechanism, opts: &PoaOptions) -> Result<PoaResult> {
    if let Some(j) = check_inputs(part, w, f)? {
        return Ok(PoaResult::gated(j));
    }
    let k = part.k();
    let (groups, set) = if opts.symmetry {
        let groups = twin_groups(part, f);
        let set = enumerate_orbits(part, &groups, opts.index_kind, opts.cap)?;
        (groups, set)
    } else {
        let groups = (0..k).map(|j| vec![j]).collect();
        (groups, index_sets::enumerate(part, opts.index_kind, opts.cap)?)
    };
    let g = groups.len();
    let mut objective = vec![0.0; g + 1];
    objective[g] = 1.0;
    let mut lp = LpProblem::with_capacity(OptSense::Minimize, objective, set.len());
    lp.set_bound(g, VarBound::Free);
    let mut row = vec![0.0; g + 1];
    for t in set.iter() {
        let s = tuple_stats(t, part);
        for (r, members) in row.iter_mut().zip(&groups) {
            *r = members.iter().map(|&j| class_term(part, f, j, t, &s.a_class)).sum();
        }
        row[g] = -w.at(s.a_total);
        lp.add_row(&row, RowSense::Le, -w.at(s.b_total))?;
    }
    let sol = solve(&lp)?;
    if !sol.is_optimal() {
        return Err(lp_error("dual PoA LP", &sol));
    }
    let mut lambda = vec![0.0; k];
    for (members, v) in groups.iter().zip(&sol.primal) {
        for &j in members {
            lambda[j] = v.max(0.0);
        }
    }
    let mu = sol.primal[g];
    verify_dual_certificate(part, w, f, &set, &lambda, mu)?;
    let theta = (!opts.symmetry).then(|| theta_from_duals(&set, &sol.duals));
    Ok(PoaResult {
        poa: 1.0 / sol.objective_value,
        lp_value: Some(sol.objective_value),
        theta,
        lambda: Some(lambda),
        mu: Some(mu),
        gate_failed: None,
    })
}

/// Groups classes that a swap leaves indistinguishable: equal size, flag and
/// mechanism, no observation between them, the same other observed classes,
/// and observed by the same other classes.
pub fn twin_groups(part: &ClassPartition, f: &Mechanism) -> Vec<Vec<usize>> {
    let k = part.k();
    let observes = |l: usize, j: usize| part.obs_classes(l).contains(&j);
    let twins = |i: usize, j: usize| {
        if part.kappa(i) != part.kappa(j)
            || part.is_self_only(i) != part.is_self_only(j)
            || f.class(i) != f.class(j)
            || observes(i, j)
            || observes(j, i)
        {
            return false;
        }
        let others = |c: usize| -> Vec<usize> {
            part.obs_classes(c).iter().copied().filter(|&l| l != c).collect()
        };
        others(i) == others(j) && (0..k).filter(|&l| l != i && l != j).all(|l| observes(l, i) == observes(l, j))
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..k {
        match groups.iter_mut().find(|g| g.iter().all(|&i| twins(i, j))) {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    groups
}

fn theta_from_duals(set: &IndexSet, duals: &[f64]) -> Vec<ThetaEntry> {
    set.iter()
        .zip(duals)
        .filter(|(_, &y)| y < 0.0)
        .map(|(t, &y)| ThetaEntry {
            tuple: IndexTuple::from_slice(t),
            value: -y,
        })
        .collect()
}

/// Checks `theta >= 0`, every equilibrium row and the normalization. Returns
/// the objective `sum w(B_t) theta(t)`.
pub fn verify_primal_certificate(
    part: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
    theta: &[ThetaEntry],
) -> Result<f64> {
    let k = part.k();
    let mut eq = vec![0.0; k];
    let mut norm = 0.0;
    let mut obj = 0.0;
    let mut scale = 1.0f64;
    for e in theta {
        if e.tuple.k() != k {
            return Err(PoaError::validation("certificate tuple has wrong class count"));
        }
        if e.value.is_nan() || e.value < -FEAS_TOL {
            return Err(PoaError::invariant(format!("negative theta {} on {:?}", e.value, e.tuple)));
        }
        let t = e.tuple.as_slice();
        let s = tuple_stats(t, part);
        for (j, v) in eq.iter_mut().enumerate() {
            let c = class_term(part, f, j, t, &s.a_class);
            scale = scale.max(c.abs());
            *v += c * e.value;
        }
        norm += w.at(s.a_total) * e.value;
        obj += w.at(s.b_total) * e.value;
    }
    let tol = FEAS_TOL * scale;
    if let Some(j) = eq.iter().position(|&v| v < -tol) {
        return Err(PoaError::invariant(format!(
            "theta violates the equilibrium row of class {} by {}",
            j + 1,
            -eq[j]
        )));
    }
    if (norm - 1.0).abs() > FEAS_TOL {
        return Err(PoaError::invariant(format!("theta normalization is {norm}, expected 1")));
    }
    Ok(obj)
}

/// Checks `lambda >= 0` and every dual row over `set`.
pub fn verify_dual_certificate(
    part: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
    set: &IndexSet,
    lambda: &[f64],
    mu: f64,
) -> Result<()> {
    if lambda.iter().any(|&l| l < 0.0) {
        return Err(PoaError::invariant("negative multiplier"));
    }
    let scale = 1.0 + lambda.iter().fold(mu.abs(), |m, v| m.max(v.abs()));
    for t in set.iter() {
        let s = tuple_stats(t, part);
        let mut lhs = w.at(s.b_total);
        for (j, l) in lambda.iter().enumerate() {
            lhs += l * class_term(part, f, j, t, &s.a_class);
        }
        let slack = mu * w.at(s.a_total) - lhs;
        if slack < -FEAS_TOL * scale {
            return Err(PoaError::invariant(format!(
                "dual certificate violated by {} at {:?}",
                -slack,
                IndexTuple::from_slice(t)
            )));
        }
    }
    Ok(())
}

/// Design program: the mechanism values replace `lambda_j f_j`. Self-only
/// classes keep a single nonnegative multiplier; `f_j(1)` of observing classes
/// is held nonnegative so the result never trips the gate.
pub fn optimize_mechanism(part: &ClassPartition, w: &BasisFunction, opts: &PoaOptions) -> Result<OptimalDesign> {
    w.require(part.n())?;
    let k = part.k();
    let mut offset = Vec::with_capacity(k);
    let mut width = Vec::with_capacity(k);
    let mut nvars = 0;
    for j in 0..k {
        let m = if part.is_self_only(j) { 1 } else { part.observed_count(j) };
        offset.push(nvars);
        width.push(m);
        nvars += m;
    }
    let mu_var = nvars;
    nvars += 1;
    let mut objective = vec![0.0; nvars];
    objective[mu_var] = 1.0;
    let set = index_sets::enumerate(part, opts.index_kind, opts.cap)?;
    let mut lp = LpProblem::with_capacity(OptSense::Minimize, objective, set.len());
    for j in 0..k {
        for v in 1..width[j] {
            lp.set_bound(offset[j] + v, VarBound::Free);
        }
    }
    lp.set_bound(mu_var, VarBound::Free);
    let mut row = vec![0.0; nvars];
    for t in set.iter() {
        row.iter_mut().for_each(|v| *v = 0.0);
        let s = tuple_stats(t, part);
        for j in 0..k {
            let (a, b) = (t[3 * j] as f64, t[3 * j + 2] as f64);
            if part.is_self_only(j) {
                row[offset[j]] = a - b;
                continue;
            }
            let m = s.a_class[j];
            // f_j(l) lives at offset + l - 1 for l in 1..=width.
            if m >= 1 {
                row[offset[j] + m - 1] += a;
            }
            if m < width[j] {
                row[offset[j] + m] -= b;
            }
        }
        row[mu_var] = -w.at(s.a_total);
        lp.add_row(&row, RowSense::Le, -w.at(s.b_total))?;
    }
    let sol = solve(&lp)?;
    if !sol.is_optimal() {
        return Err(lp_error("optimal design LP", &sol));
    }
    let mu_opt = sol.primal[mu_var];
    let mut raw = Vec::with_capacity(k);
    let mut normalized = Vec::with_capacity(k);
    for j in 0..k {
        if part.is_self_only(j) {
            raw.push(vec![0.0, 1.0, 0.0]);
            normalized.push(vec![0.0, w.at(1), 0.0]);
            continue;
        }
        let f = Mechanism::from_interior(&sol.primal[offset[j]..offset[j] + width[j]]);
        let scale = if f[1] > 0.0 { w.at(1) / f[1] } else { 1.0 };
        normalized.push(f.iter().map(|v| v * scale).collect());
        raw.push(f);
    }
    Ok(OptimalDesign {
        mechanism: Mechanism::new(raw),
        normalized: Mechanism::new(normalized),
        mu_opt,
        poa_opt: 1.0 / mu_opt,
    })
}

/// Which two-class network family a refinement describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TwoClassModel {
    /// `kappa` agents observe only themselves; everyone else observes all agents.
    Blind,
    /// `kappa` agents observe only themselves and nobody observes them; the
    /// rest observe each other.
    Isolated,
}

impl TwoClassModel {
    pub fn partition(self, n: usize, kappa: usize) -> Result<ClassPartition> {
        match self {
            TwoClassModel::Blind => ClassPartition::blind_two_class(n, kappa),
            TwoClassModel::Isolated => ClassPartition::isolated_two_class(n, kappa),
        }
    }

    pub fn network(self, n: usize, kappa: usize) -> Result<InformationNetwork> {
        match self {
            TwoClassModel::Blind => InformationNetwork::blind(n, kappa),
            TwoClassModel::Isolated => InformationNetwork::isolated(n, kappa),
        }
    }

    /// Length of the interior of the non-failed class mechanism.
    pub fn observer_domain(self, n: usize, kappa: usize) -> usize {
        match self {
            TwoClassModel::Blind => n,
            TwoClassModel::Isolated => n - kappa,
        }
    }
}

/// Mechanism on the two-class partition. `f_obs` is ignored when every agent
/// has failed.
fn two_class_mechanism(
    model: TwoClassModel,
    n: usize,
    kappa: usize,
    f_self: f64,
    f_obs: &[f64],
) -> Result<Mechanism> {
    if !f_self.is_finite() {
        return Err(PoaError::validation("f(1) of the failed class must be finite"));
    }
    let mut per_class = Vec::with_capacity(2);
    if kappa > 0 {
        per_class.push(vec![0.0, f_self, 0.0]);
    }
    if kappa < n {
        let m = model.observer_domain(n, kappa);
        if f_obs.len() != m + 2 {
            return Err(PoaError::validation(format!(
                "observer mechanism needs {} entries (indices 0..={}), got {}",
                m + 2,
                m + 1,
                f_obs.len()
            )));
        }
        per_class.push(f_obs.to_vec());
    }
    Ok(Mechanism::new(per_class))
}

/// Maps a partition class index to the model label: 0 for failed agents, 1 for observers.
fn model_class(kappa: usize, j: usize) -> usize {
    if kappa == 0 {
        1
    } else {
        j
    }
}

/// PoA on the two-class refinement. Only the sign of `f_self` matters.
/// A fired gate reports class 0 for the failed agents and 1 for the observers.
pub fn poa_two_class(
    model: TwoClassModel,
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_self: f64,
    f_obs: &[f64],
    opts: &PoaOptions,
) -> Result<PoaResult> {
    let part = model.partition(n, kappa)?;
    let f = two_class_mechanism(model, n, kappa, f_self, f_obs)?;
    let mut r = poa_dual(&part, w, &f, opts)?;
    r.gate_failed = r.gate_failed.map(|j| model_class(kappa, j));
    Ok(r)
}

pub fn poa_blind(
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_bl_1: f64,
    f_nbl: &[f64],
    opts: &PoaOptions,
) -> Result<PoaResult> {
    poa_two_class(TwoClassModel::Blind, n, kappa, w, f_bl_1, f_nbl, opts)
}

pub fn poa_isolated(
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_iso_1: f64,
    f_niso: &[f64],
    opts: &PoaOptions,
) -> Result<PoaResult> {
    poa_two_class(TwoClassModel::Isolated, n, kappa, w, f_iso_1, f_niso, opts)
}

/// Optimal design on the two-class refinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoClassDesign {
    pub model: TwoClassModel,
    pub n: usize,
    pub kappa: usize,
    /// `f(1)` of the failed agents; any positive value is optimal.
    pub f_self: f64,
    /// Observer mechanism, absent when every agent has failed.
    pub f_obs: Option<Vec<f64>>,
    pub f_obs_normalized: Option<Vec<f64>>,
    pub mu_opt: f64,
    pub poa_opt: f64,
}

pub fn optimize_two_class(
    model: TwoClassModel,
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    opts: &PoaOptions,
) -> Result<TwoClassDesign> {
    let part = model.partition(n, kappa)?;
    let d = optimize_mechanism(&part, w, opts)?;
    let obs = (kappa < n).then(|| part.k() - 1);
    Ok(TwoClassDesign {
        model,
        n,
        kappa,
        f_self: 1.0,
        f_obs: obs.map(|j| d.mechanism.class(j).to_vec()),
        f_obs_normalized: obs.map(|j| d.normalized.class(j).to_vec()),
        mu_opt: d.mu_opt,
        poa_opt: d.poa_opt,
    })
}

pub fn optimize_blind(n: usize, kappa: usize, w: &BasisFunction, opts: &PoaOptions) -> Result<TwoClassDesign> {
    optimize_two_class(TwoClassModel::Blind, n, kappa, w, opts)
}

pub fn optimize_isolated(n: usize, kappa: usize, w: &BasisFunction, opts: &PoaOptions) -> Result<TwoClassDesign> {
    optimize_two_class(TwoClassModel::Isolated, n, kappa, w, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub two_class: PoaResult,
    pub general: PoaResult,
    /// Absolute difference of the LP values (or of the PoA values when a gate fired).
    pub delta: f64,
    pub agree: bool,
}

/// Tolerance for [`cross_check`].
pub const CROSS_CHECK_TOL: f64 = 2e-6;

/// Computes the PoA of a failure network twice: on the two-class refinement
/// and on the similarity partition of the explicit network, where every
/// failed agent is its own class.
pub fn cross_check(
    model: TwoClassModel,
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_self: f64,
    f_obs: &[f64],
    opts: &PoaOptions,
) -> Result<CrossCheck> {
    let two_class = poa_two_class(model, n, kappa, w, f_self, f_obs, opts)?;
    let net = model.network(n, kappa)?;
    let part = partition_into_classes(&net);
    let per_class = part
        .classes()
        .iter()
        .map(|c| {
            if c[0] < kappa {
                vec![0.0, f_self, 0.0]
            } else {
                f_obs.to_vec()
            }
        })
        .collect();
    let general = poa_dual(&part, w, &Mechanism::new(per_class), opts)?;
    let delta = match (two_class.lp_value, general.lp_value) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => (two_class.poa - general.poa).abs(),
    };
    Ok(CrossCheck {
        two_class,
        general,
        delta,
        agree: delta <= CROSS_CHECK_TOL,
    })
}

pub fn cross_check_blind_vs_general(
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_bl_1: f64,
    f_nbl: &[f64],
    opts: &PoaOptions,
) -> Result<CrossCheck> {
    cross_check(TwoClassModel::Blind, n, kappa, w, f_bl_1, f_nbl, opts)
}

pub fn cross_check_isolated_vs_general(
    n: usize,
    kappa: usize,
    w: &BasisFunction,
    f_iso_1: f64,
    f_niso: &[f64],
    opts: &PoaOptions,
) -> Result<CrossCheck> {
    cross_check(TwoClassModel::Isolated, n, kappa, w, f_iso_1, f_niso, opts)
}
