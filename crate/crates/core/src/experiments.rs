//! Parameter sweeps and oracle checks built from the library operations.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::mechanisms::{marginal_contribution_vector, BasisFunction, Mechanism};
use crate::network::ClassPartition;
use crate::oracle::{build_tight_instance, random_game, RandomGameParams, DEFAULT_RESOURCE_CAP};
use crate::poa::{optimize_mechanism, optimize_two_class, poa_dual, poa_primal, poa_two_class, PoaOptions, TwoClassModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa: usize,
    pub poa_mc: f64,
    pub poa_opt: f64,
    pub poa_fstar: Option<f64>,
    pub gap: Option<f64>,
}

/// Marginal contribution for the observers of a two-class network.
fn observer_mc(model: TwoClassModel, n: usize, kappa: usize, w: &BasisFunction) -> Result<Vec<f64>> {
    if kappa == n {
        return Ok(vec![0.0, 0.0]);
    }
    marginal_contribution_vector(w, model.observer_domain(n, kappa))
}

/// Marginal contribution and optimal PoA for `kappa = 0..=n` blind agents.
pub fn sweep_blind(n: usize, w: &BasisFunction, opts: &PoaOptions) -> Result<Vec<SweepRow>> {
    w.require(n)?;
    (0..=n)
        .into_par_iter()
        .map(|kappa| {
            let f = observer_mc(TwoClassModel::Blind, n, kappa, w)?;
            let mc = poa_two_class(TwoClassModel::Blind, n, kappa, w, w.at(1), &f, opts)?;
            let opt = optimize_two_class(TwoClassModel::Blind, n, kappa, w, opts)?;
            Ok(SweepRow {
                kappa,
                poa_mc: mc.poa,
                poa_opt: opt.poa_opt,
                poa_fstar: None,
                gap: None,
            })
        })
        .collect()
}

/// Full-information optimal mechanism, normalized so `f(1) = w(1)`.
pub fn full_information_optimum(n: usize, w: &BasisFunction, opts: &PoaOptions) -> Result<Vec<f64>> {
    let part = ClassPartition::single_class(n)?;
    Ok(optimize_mechanism(&part, w, opts)?.normalized.class(0).to_vec())
}

/// `f*` cut to observers that see `m` agents: `(f*(0), .., f*(m), 0)`.
fn truncate_mechanism(f: &[f64], m: usize) -> Vec<f64> {
    let mut g = f[..=m].to_vec();
    g.push(0.0);
    g
}

/// For each `kappa`, the PoA when every agent keeps the full-information
/// optimum `f*`, next to the optimum for that network.
pub fn robustness(n: usize, w: &BasisFunction, model: TwoClassModel, opts: &PoaOptions) -> Result<Vec<SweepRow>> {
    w.require(n)?;
    let fstar = full_information_optimum(n, w, opts)?;
    (0..=n)
        .into_par_iter()
        .map(|kappa| {
            let f = observer_mc(model, n, kappa, w)?;
            let mc = poa_two_class(model, n, kappa, w, w.at(1), &f, opts)?;
            let f_obs = truncate_mechanism(&fstar, model.observer_domain(n, kappa));
            let fs = poa_two_class(model, n, kappa, w, fstar[1], &f_obs, opts)?;
            let opt = optimize_two_class(model, n, kappa, w, opts)?;
            Ok(SweepRow {
                kappa,
                poa_mc: mc.poa,
                poa_opt: opt.poa_opt,
                poa_fstar: Some(fs.poa),
                gap: Some(opt.poa_opt - fs.poa),
            })
        })
        .collect()
}

/// CSV with columns `kappa,poa_mc,poa_opt` plus `poa_fstar,gap` when present.
pub fn write_sweep_csv(rows: &[SweepRow], out: &mut impl Write) -> std::io::Result<()> {
    let extended = rows.iter().any(|r| r.poa_fstar.is_some());
    if extended {
        writeln!(out, "kappa,poa_mc,poa_opt,poa_fstar,gap")?;
    } else {
        writeln!(out, "kappa,poa_mc,poa_opt")?;
    }
    for r in rows {
        write!(out, "{},{:.12},{:.12}", r.kappa, r.poa_mc, r.poa_opt)?;
        if extended {
            write!(
                out,
                ",{:.12},{:.12}",
                r.poa_fstar.unwrap_or(f64::NAN),
                r.gap.unwrap_or(f64::NAN)
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub lp_poa: f64,
    pub empirical_ratio: Option<f64>,
    pub welfare_ne: f64,
    pub welfare_opt: f64,
    pub support: usize,
    pub resources: usize,
    pub dropped_mass: f64,
    pub structural_ok: bool,
    pub a_ne_is_nash: bool,
    pub tight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessViolation {
    pub trial: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub lp_poa: f64,
    pub trials: usize,
    /// Trials whose game had no pure equilibrium; not counted.
    pub no_pure_ne: usize,
    pub min_ratio: Option<f64>,
    pub violations: Vec<SoundnessViolation>,
    pub tightness: Option<TightnessReport>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.tightness.as_ref().is_none_or(|t| t.tight)
    }
}

/// Tolerance for comparing empirical ratios with the LP PoA.
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub seed: u64,
    pub trials: usize,
    pub params: RandomGameParams,
    pub profile_cap: u128,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            seed: 0,
            trials: 200,
            params: RandomGameParams::default(),
            profile_cap: crate::oracle::DEFAULT_PROFILE_CAP,
        }
    }
}

/// Random-game soundness trials followed by the tight-instance check.
/// Trial `i` uses a generator seeded with `seed + i`.
pub fn oracle_check(
    part: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
    cfg: &OracleConfig,
    opts: &PoaOptions,
) -> Result<OracleReport> {
    let OracleConfig {
        seed,
        trials,
        params,
        profile_cap,
    } = *cfg;
    let primal = poa_primal(part, w, f, opts)?;
    let dual = poa_dual(part, w, f, opts)?;
    let lp_poa = dual.poa;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let g = random_game(&mut rng, &params, part, w, f)?;
            g.empirical_poa(profile_cap)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut no_pure_ne = 0;
    let mut min_ratio: Option<f64> = None;
    let mut violations = Vec::new();
    for (trial, e) in outcomes.into_iter().enumerate() {
        match e {
            None => no_pure_ne += 1,
            Some(e) => {
                min_ratio = Some(min_ratio.map_or(e.ratio, |m| m.min(e.ratio)));
                if e.ratio < lp_poa - ORACLE_TOL {
                    violations.push(SoundnessViolation { trial, ratio: e.ratio });
                }
            }
        }
    }
    let tightness = match primal.theta {
        Some(theta) => Some(tightness(part, w, f, &theta, primal.poa, profile_cap)?),
        None => None,
    };
    Ok(OracleReport {
        lp_poa,
        trials,
        no_pure_ne,
        min_ratio,
        violations,
        tightness,
    })
}

/// Builds the tight instance and compares its empirical ratio with `lp_poa`.
pub fn tightness(
    part: &ClassPartition,
    w: &BasisFunction,
    f: &Mechanism,
    theta: &[crate::poa::ThetaEntry],
    lp_poa: f64,
    profile_cap: u128,
) -> Result<TightnessReport> {
    let t = build_tight_instance(part, w, f, theta, DEFAULT_RESOURCE_CAP)?;
    let empirical = t.game.empirical_poa(profile_cap)?;
    let ratio = empirical.map(|e| e.ratio);
    let ok = t.checks.structural_ok()
        && t.checks.a_ne_is_nash
        && (t.checks.welfare_ne - 1.0).abs() <= ORACLE_TOL
        && ratio.is_some_and(|r| (r - lp_poa).abs() <= ORACLE_TOL);
    Ok(TightnessReport {
        lp_poa,
        empirical_ratio: ratio,
        welfare_ne: t.checks.welfare_ne,
        welfare_opt: t.checks.welfare_opt,
        support: t.support.len(),
        resources: t.game.resources().len(),
        dropped_mass: t.dropped_mass,
        structural_ok: t.checks.structural_ok(),
        a_ne_is_nash: t.checks.a_ne_is_nash,
        tight: ok,
    })
}
