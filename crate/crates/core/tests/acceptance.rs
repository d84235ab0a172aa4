//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use poa_core::experiments::{oracle_check, robustness, tightness, OracleConfig, ORACLE_TOL};
use poa_core::index_sets::IndexSetKind;
use poa_core::mechanisms::{basis_power, basis_set_covering, marginal_contribution, BasisFunction, Mechanism};
use poa_core::network::{partition_into_classes, validate_network, ClassPartition, NetworkFile};
use poa_core::oracle::{random_game, GameInstance, Profile, RandomGameParams, DEFAULT_PROFILE_CAP};
use poa_core::poa::{
    cross_check_blind_vs_general, optimize_blind, poa_blind, poa_dual, poa_primal, PoaOptions, TwoClassModel,
    CROSS_CHECK_TOL,
};
use poa_core::PoaError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn fig1_partition() -> ClassPartition {
    let file = NetworkFile {
        n: 5,
        obs: vec![
            vec![1, 2, 3, 4, 5],
            vec![1, 2, 3, 5],
            vec![1, 2, 3, 5],
            vec![1, 4],
            vec![1, 2, 3, 4, 5],
        ],
    };
    partition_into_classes(&file.into_network().unwrap())
}

fn random_mechanism(part: &ClassPartition, rng: &mut impl Rng) -> Mechanism {
    let per_class = (0..part.k())
        .map(|j| {
            let m = part.observed_count(j);
            let interior: Vec<f64> = (1..=m)
                .map(|l| if l == 1 { rng.gen_range(0.5..1.5) } else { rng.gen_range(0.0..1.2) })
                .collect();
            Mechanism::from_interior(&interior)
        })
        .collect();
    Mechanism::new(per_class)
}

fn networks() -> Vec<(String, ClassPartition)> {
    let mut v = Vec::new();
    for n in [2, 3, 4] {
        v.push((format!("complete n={n}"), ClassPartition::single_class(n).unwrap()));
    }
    for (n, k) in [(3, 1), (4, 2), (5, 2)] {
        v.push((format!("blind n={n} k={k}"), ClassPartition::blind_two_class(n, k).unwrap()));
    }
    for (n, k) in [(3, 1), (4, 2), (5, 3)] {
        v.push((format!("isolated n={n} k={k}"), ClassPartition::isolated_two_class(n, k).unwrap()));
    }
    v.push(("fig1".to_string(), fig1_partition()));
    v
}

fn bases(n: usize) -> Vec<(&'static str, BasisFunction)> {
    vec![
        ("setcover", basis_set_covering(n).unwrap()),
        ("power0.5", basis_power(n, 0.5).unwrap()),
    ]
}

struct Case {
    label: String,
    part: ClassPartition,
    w: BasisFunction,
    f: Mechanism,
}

fn battery() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = Vec::new();
    for (name, part) in networks() {
        for (bname, w) in bases(part.n()) {
            let mc = marginal_contribution(&w, &part).unwrap();
            let rand = random_mechanism(&part, &mut rng);
            for (mname, f) in [("mc", mc), ("random", rand)] {
                cases.push(Case {
                    label: format!("{name} {bname} {mname}"),
                    part: part.clone(),
                    w: w.clone(),
                    f,
                });
            }
        }
    }
    cases
}

fn blind_formula(n: usize, kappa: usize) -> f64 {
    (1.0 / (1.0 + kappa as f64)).max(1.0 / n as f64)
}

fn criterion_1() -> Outcome {
    let opts = PoaOptions::default();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for n in [3, 8, 15] {
        let w = basis_set_covering(n).unwrap();
        for kappa in 1..=n {
            let f = if kappa == n {
                vec![0.0, 0.0]
            } else {
                poa_core::mechanisms::marginal_contribution_vector(&w, n).unwrap()
            };
            let r = poa_blind(n, kappa, &w, 1.0, &f, &opts).map_err(|e| e.to_string())?;
            let err = (r.poa - blind_formula(n, kappa)).abs();
            worst = worst.max(err);
            if err > TOL {
                return Err(format!("n={n} k={kappa}: {} vs {}", r.poa, blind_formula(n, kappa)));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (n, k) pairs, max error {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let n = 15;
    let opts = PoaOptions::default();
    let w = basis_set_covering(n).unwrap();
    for kappa in 1..=n {
        let d = optimize_blind(n, kappa, &w, &opts).map_err(|e| e.to_string())?;
        let expect = blind_formula(n, kappa);
        if (d.poa_opt - expect).abs() > TOL {
            return Err(format!("k={kappa}: poa_opt {} vs {expect}", d.poa_opt));
        }
    }
    let mc = poa_core::mechanisms::marginal_contribution_vector(&w, n).unwrap();
    let mc_poa = poa_blind(n, 0, &w, 1.0, &mc, &opts).map_err(|e| e.to_string())?.poa;
    let opt = optimize_blind(n, 0, &w, &opts).map_err(|e| e.to_string())?.poa_opt;
    if opt > mc_poa + 0.05 {
        Ok(format!("k>=1 optimum equals formula; k=0 optimum {opt:.6} vs mc {mc_poa:.6}"))
    } else {
        Err(format!("k=0: optimum {opt} not above mc {mc_poa} + 0.05"))
    }
}

fn criterion_3(cases: &[Case]) -> Outcome {
    let opts = PoaOptions::default();
    let mut worst: f64 = 0.0;
    for c in cases {
        let p = poa_primal(&c.part, &c.w, &c.f, &opts).map_err(|e| format!("{}: {e}", c.label))?;
        let d = poa_dual(&c.part, &c.w, &c.f, &opts).map_err(|e| format!("{}: {e}", c.label))?;
        let (Some(wp), Some(vd)) = (p.lp_value, d.lp_value) else {
            return Err(format!("{}: gate fired on a positive-gate mechanism", c.label));
        };
        let rel = (wp - vd).abs() / vd.abs().max(1.0);
        worst = worst.max(rel);
        if rel > TOL {
            return Err(format!("{}: primal {wp} dual {vd}", c.label));
        }
    }
    Ok(format!("{} cases, max scaled gap {worst:.2e}", cases.len()))
}

fn criterion_4(cases: &[Case]) -> Outcome {
    let full = PoaOptions {
        index_kind: IndexSetKind::Full,
        ..PoaOptions::default()
    };
    let reduced = PoaOptions::default();
    let mut worst: f64 = 0.0;
    for c in cases {
        let a = poa_dual(&c.part, &c.w, &c.f, &full).map_err(|e| format!("{}: {e}", c.label))?;
        let b = poa_dual(&c.part, &c.w, &c.f, &reduced).map_err(|e| format!("{}: {e}", c.label))?;
        let (Some(x), Some(y)) = (a.lp_value, b.lp_value) else {
            return Err(format!("{}: missing LP value", c.label));
        };
        worst = worst.max((x - y).abs());
        if (x - y).abs() > TOL {
            return Err(format!("{}: full {x} reduced {y}", c.label));
        }
    }
    Ok(format!("{} cases, max difference {worst:.2e}", cases.len()))
}

fn small_networks() -> Vec<(String, ClassPartition)> {
    let mut v = Vec::new();
    for n in [2, 3, 4] {
        v.push((format!("complete n={n}"), ClassPartition::single_class(n).unwrap()));
    }
    v.push(("blind n=3 k=1".into(), ClassPartition::blind_two_class(3, 1).unwrap()));
    v.push(("blind n=4 k=2".into(), ClassPartition::blind_two_class(4, 2).unwrap()));
    v.push(("isolated n=4 k=1".into(), ClassPartition::isolated_two_class(4, 1).unwrap()));
    let chain = validate_network(vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3]]).unwrap();
    v.push(("chain n=4".into(), partition_into_classes(&chain)));
    v
}

fn criterion_5() -> Outcome {
    let opts = PoaOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut configs = 0;
    let mut games = 0;
    let mut skipped = 0;
    for (name, part) in small_networks() {
        for (bname, w) in bases(part.n()) {
            let mc = marginal_contribution(&w, &part).unwrap();
            let rand = random_mechanism(&part, &mut rng);
            for (mname, f) in [("mc", mc), ("random", rand)] {
                let cfg = OracleConfig {
                    seed: 1000 * configs as u64,
                    trials: 200,
                    params: RandomGameParams::default(),
                    profile_cap: DEFAULT_PROFILE_CAP,
                };
                let r = oracle_check(&part, &w, &f, &cfg, &opts).map_err(|e| format!("{name} {bname} {mname}: {e}"))?;
                if let Some(v) = r.violations.first() {
                    return Err(format!(
                        "{name} {bname} {mname}: trial {} ratio {} below {}",
                        v.trial, v.ratio, r.lp_poa
                    ));
                }
                configs += 1;
                games += r.trials;
                skipped += r.no_pure_ne;
            }
        }
    }
    Ok(format!("{configs} configurations, {games} games, {skipped} without pure NE (not counted)"))
}

fn criterion_6() -> Outcome {
    let opts = PoaOptions::default();
    let mut configs: Vec<(String, ClassPartition, BasisFunction, Mechanism)> = Vec::new();
    let mut push = |label: String, part: ClassPartition, w: BasisFunction, f: Option<Mechanism>| {
        let f = f.unwrap_or_else(|| marginal_contribution(&w, &part).unwrap());
        configs.push((label, part, w, f));
    };
    for n in [2, 3, 4] {
        push(
            format!("complete n={n} setcover"),
            ClassPartition::single_class(n).unwrap(),
            basis_set_covering(n).unwrap(),
            None,
        );
    }
    for (n, k) in [(6, 2), (8, 3), (15, 3)] {
        push(
            format!("blind n={n} k={k} setcover"),
            ClassPartition::blind_two_class(n, k).unwrap(),
            basis_set_covering(n).unwrap(),
            None,
        );
    }
    for (n, k) in [(6, 2), (8, 3)] {
        push(
            format!("isolated n={n} k={k} power0.5"),
            ClassPartition::isolated_two_class(n, k).unwrap(),
            basis_power(n, 0.5).unwrap(),
            None,
        );
    }
    push(
        "complete n=3 power0.5".into(),
        ClassPartition::single_class(3).unwrap(),
        basis_power(3, 0.5).unwrap(),
        None,
    );
    push("fig1 setcover".into(), fig1_partition(), basis_set_covering(5).unwrap(), None);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let part = ClassPartition::blind_two_class(4, 1).unwrap();
    let f = random_mechanism(&part, &mut rng);
    push("blind n=4 k=1 setcover random".into(), part, basis_set_covering(4).unwrap(), Some(f));

    let mut passed = 0;
    let mut failures = Vec::new();
    for (label, part, w, f) in &configs {
        let p = poa_primal(part, w, f, &opts).map_err(|e| format!("{label}: {e}"))?;
        let Some(theta) = p.theta else {
            failures.push(format!("{label}: no certificate"));
            continue;
        };
        match tightness(part, w, f, &theta, p.poa, DEFAULT_PROFILE_CAP) {
            Ok(t) if t.tight => passed += 1,
            Ok(t) => failures.push(format!(
                "{label}: ratio {:?} vs {}, W(ne) {}, structural {}, nash {}",
                t.empirical_ratio, t.lp_poa, t.welfare_ne, t.structural_ok, t.a_ne_is_nash
            )),
            Err(e) => failures.push(format!("{label}: {e}")),
        }
    }
    if failures.is_empty() && passed >= 10 {
        Ok(format!("{passed} configurations tight to {ORACLE_TOL:.0e}"))
    } else {
        Err(format!("{passed}/{} tight; {}", configs.len(), failures.join("; ")))
    }
}

fn lemma1_violation(g: &GameInstance) -> Option<String> {
    let part = g.partition();
    for idx in 0..g.profile_count() {
        let p = g.profile_at(idx);
        for i in 0..g.n() {
            let j = part.class_of(i);
            let g0 = g.potential_g(j, &p);
            let u0 = g.utility(i, &p);
            for a in 0..g.actions(i).len() {
                if a == p.0[i] {
                    continue;
                }
                let mut q: Profile = p.clone();
                q.0[i] = a;
                let dg = g.potential_g(j, &q) - g0;
                let du = g.utility(i, &q) - u0;
                if (dg - du).abs() > 1e-12 * du.abs().max(dg.abs()).max(1.0) {
                    return Some(format!("agent {i} profile {:?} action {a}: dG {dg} dU {du}", p.0));
                }
            }
        }
    }
    None
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nets: Vec<ClassPartition> = small_networks()
        .into_iter()
        .map(|(_, p)| p)
        .chain(std::iter::once(fig1_partition()))
        .collect();
    let mut deviations = 0usize;
    for trial in 0..100 {
        let part = &nets[trial % nets.len()];
        let w = if trial % 2 == 0 {
            basis_set_covering(part.n()).unwrap()
        } else {
            basis_power(part.n(), 0.5).unwrap()
        };
        let f = random_mechanism(part, &mut rng);
        let g = random_game(&mut rng, &RandomGameParams::default(), part, &w, &f).map_err(|e| e.to_string())?;
        if let Some(msg) = lemma1_violation(&g) {
            return Err(format!("game {trial}: {msg}"));
        }
        deviations += (0..g.n()).map(|i| g.actions(i).len() - 1).sum::<usize>() * g.profile_count() as usize;
    }
    Ok(format!("100 games, {deviations} unilateral deviations"))
}

fn criterion_8() -> Outcome {
    let plain = PoaOptions::default();
    let sym = PoaOptions {
        symmetry: true,
        ..PoaOptions::default()
    };
    let mut checked = 0;
    let mut via_symmetry = 0;
    let mut worst: f64 = 0.0;
    for n in 2..=15 {
        let w = basis_set_covering(n).unwrap();
        let mut kappas = vec![0, 1, 5, n];
        kappas.retain(|&k| k <= n);
        kappas.dedup();
        for kappa in kappas {
            let f = if kappa == n {
                vec![0.0, 0.0]
            } else {
                poa_core::mechanisms::marginal_contribution_vector(&w, n).unwrap()
            };
            let c = match cross_check_blind_vs_general(n, kappa, &w, 1.0, &f, &plain) {
                Err(PoaError::Capacity { .. }) => {
                    via_symmetry += 1;
                    cross_check_blind_vs_general(n, kappa, &w, 1.0, &f, &sym)
                }
                other => other,
            }
            .map_err(|e| format!("n={n} k={kappa}: {e}"))?;
            worst = worst.max(c.delta);
            if !c.agree {
                return Err(format!("n={n} k={kappa}: delta {} > {CROSS_CHECK_TOL}", c.delta));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} (n, k) pairs, {via_symmetry} via symmetry reduction, max delta {worst:.2e}"
    ))
}

fn criterion_9() -> Outcome {
    let n = 15;
    let w = basis_power(n, 0.5).unwrap();
    let opts = PoaOptions::default();
    let mut summary = Vec::new();
    for model in [TwoClassModel::Blind, TwoClassModel::Isolated] {
        let rows = robustness(n, &w, model, &opts).map_err(|e| e.to_string())?;
        for r in &rows {
            let fs = r.poa_fstar.unwrap();
            if fs > r.poa_opt + TOL {
                return Err(format!("{model:?} k={}: f* {fs} above optimum {}", r.kappa, r.poa_opt));
            }
        }
        let g0 = rows[0].gap.unwrap();
        if g0.abs() > TOL {
            return Err(format!("{model:?} k=0: gap {g0}"));
        }
        let max_gap = rows.iter().filter_map(|r| r.gap).fold(0.0, f64::max);
        summary.push(format!("{model:?} max gap {max_gap:.4}"));
    }
    Ok(summary.join(", "))
}

fn criterion_10(cases: &[Case]) -> Outcome {
    let opts = PoaOptions::default();
    for c in cases {
        let base = poa_dual(&c.part, &c.w, &c.f, &opts).map_err(|e| e.to_string())?.poa;
        for alpha in [0.5, 2.0, 10.0] {
            let r = poa_dual(&c.part, &c.w, &c.f.scaled(alpha), &opts).map_err(|e| e.to_string())?;
            if (r.poa - base).abs() > TOL {
                return Err(format!("{} alpha={alpha}: {} vs {base}", c.label, r.poa));
            }
        }
    }
    let n = 8;
    let w = basis_set_covering(n).unwrap();
    let f = poa_core::mechanisms::marginal_contribution_vector(&w, n).unwrap();
    for kappa in 1..n {
        let reference = poa_blind(n, kappa, &w, 1.0, &f, &opts).map_err(|e| e.to_string())?;
        for f1 in [1e-3, 0.5, 7.25, 1e3] {
            let r = poa_blind(n, kappa, &w, f1, &f, &opts).map_err(|e| e.to_string())?;
            if r.poa != reference.poa || r.lp_value != reference.lp_value {
                return Err(format!("k={kappa} f_bl(1)={f1}: {} vs {}", r.poa, reference.poa));
            }
        }
    }
    Ok(format!("{} cases x 3 scalings; blind f(1) exactly irrelevant for n=8", cases.len()))
}

fn main() -> ExitCode {
    let cases = battery();
    let criteria: Vec<Criterion> = vec![
        ("1 blind-agent formula", Box::new(criterion_1)),
        ("2 optimality of marginal contribution", Box::new(criterion_2)),
        ("3 strong duality", Box::new(|| criterion_3(&cases))),
        ("4 reduced index set", Box::new(|| criterion_4(&cases))),
        ("5 oracle soundness", Box::new(criterion_5)),
        ("6 tightness", Box::new(criterion_6)),
        ("7 potential identity", Box::new(criterion_7)),
        ("8 two-path agreement", Box::new(criterion_8)),
        ("9 robustness", Box::new(criterion_9)),
        ("10 scale invariance", Box::new(|| criterion_10(&cases))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({secs:.2}s)"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
