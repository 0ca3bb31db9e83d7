//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use hybridsos::certificate::{extract_atoms, numeric_rank, recover_certificate, Multiplier, DEFAULT_RANK_TOL};
use hybridsos::moments::{dirac_moments, moment_matrix, MomentVector};
use hybridsos::pareto::{run_sweep, solve_hybrid, SweepConfig, ZSource};
use hybridsos::relax::{build, build_p, build_p_with_level, min_order};
use hybridsos::sdp::{certify_weak_duality, solve, SdpSolution, SolveStatus, SolverOptions};
use hybridsos::{Family, HybridProblem, MooProblem, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 20;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn golden() -> Check {
    let start = Instant::now();
    let prob = example_problem();
    let hp = HybridProblem::new(&prob, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let relax = build_p(&hp, prob.lambda(), 1).map_err(|e| e.to_string())?;
    let sol = solve(&relax.instance, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let y = relax.moment_vector(&sol.y).map_err(|e| e.to_string())?;
    let r0 = numeric_rank(&moment_matrix(&y, 0).unwrap(), DEFAULT_RANK_TOL);
    let r1 = numeric_rank(&moment_matrix(&y, 1).unwrap(), DEFAULT_RANK_TOL);
    let atoms = extract_atoms(&y, 1, 1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    ensure(sol.status == SolveStatus::Optimal, || format!("status {:?}", sol.status))?;
    ensure((sol.objective - 8.875).abs() <= 1e-4, || format!("value {}", sol.objective))?;
    let printed = [1.0, 1.75, 0.25, 3.0625, 0.4375, 0.0625];
    ensure(close(&sol.y, &printed, 1e-3), || format!("moments {:?}", sol.y))?;
    ensure(r0 == 1 && r1 == 1, || format!("ranks M0 = {r0}, M1 = {r1}"))?;
    ensure(atoms.len() == 1 && close(&atoms[0], &[1.75, 0.25], 1e-3), || format!("atoms {atoms:?}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "value {:.9}, x = ({:.6}, {:.6}), ranks (1, 1), {:.1} ms",
        sol.objective,
        atoms[0][0],
        atoms[0][1],
        elapsed.as_secs_f64() * 1e3
    ))
}

fn level_variants() -> Check {
    let prob = example_problem();
    let hp = HybridProblem::new(&prob, &[1.0, 1.0]).unwrap();
    let mut out = Vec::new();
    for level in [9.0, 10.0] {
        let relax = build_p_with_level(&hp, prob.lambda(), 1, level).unwrap();
        let sol = solve(&relax.instance, &SolverOptions::default()).unwrap();
        ensure(sol.status == SolveStatus::Optimal, || format!("level {level}: {:?}", sol.status))?;
        let y = relax.moment_vector(&sol.y).unwrap();
        let x = extract_atoms(&y, 1, 1).map_err(|e| e.to_string())?.remove(0);
        ensure((sol.objective - 8.875).abs() <= 1e-4, || format!("level {level}: value {}", sol.objective))?;
        out.push((sol.objective, x));
    }
    ensure(close(&out[0].1, &out[1].1, 1e-3), || format!("x differ: {:?} vs {:?}", out[0].1, out[1].1))?;
    ensure(close(&out[0].1, &[1.75, 0.25], 1e-3), || format!("x = {:?}", out[0].1))?;
    Ok(format!("level 9 → {:.9}, level 10 → {:.9}", out[0].0, out[1].0))
}

fn sweep() -> Check {
    let prob = example_problem();
    let cfg = SweepConfig {
        z_source: ZSource::UniformBox {
            bounds: vec![(0.0, 4.0), (0.0, 4.0)],
            samples: 1000,
            seed: 7,
        },
        ..SweepConfig::default()
    };
    let start = Instant::now();
    let res = run_sweep(&prob, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = res
        .verified
        .iter()
        .map(|p| efficient_set_distance([p.x[0], p.x[1]]))
        .fold(0.0, f64::max);
    let frac = res.verified_fraction();
    let reverified = res.verified.iter().filter(|p| p.reverify_ok).count();
    ensure(res.zs.len() == 1000, || format!("{} z sampled", res.zs.len()))?;
    ensure(frac >= 0.99, || format!("verified fraction {frac}"))?;
    ensure(worst <= 1e-3, || format!("worst distance {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{:.1}% of z verified, worst distance {worst:.1e}, {reverified}/{} reverified, {:.1} s",
        100.0 * frac,
        res.verified.len(),
        elapsed.as_secs_f64()
    ))
}

fn singleton() -> Check {
    let prob = example_problem();
    let out = solve_hybrid(&prob, prob.lambda(), &[3.0, 2.0], &SweepConfig::default()).map_err(|e| e.to_string())?;
    let p = out.points.first().ok_or("no point returned")?;
    ensure(close(&p.x, &[3.0, 2.0], 1e-5), || format!("x = {:?}", p.x))?;
    Ok(format!("x = {:?}, verified = {}, k = {}", p.x, p.verified, p.k_used))
}

fn oracle_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    let mut quartics = 0;
    for i in 0..INSTANCES {
        let inst = random_instance(i);
        quartics += inst.has_quartic as usize;
        let oracle = grid_oracle(&inst.problem, &inst.z, -2.0, 2.0, 200);
        for family in [Family::P, Family::Q] {
            let cfg = SweepConfig {
                family,
                ..SweepConfig::default()
            };
            let out = solve_hybrid(&inst.problem, inst.problem.lambda(), &inst.z, &cfg).map_err(|e| e.to_string())?;
            let p = out.points.iter().find(|p| p.verified).ok_or_else(|| {
                format!("instance {i} {family}: nothing verified ({:?})", out.diagnostic.notes)
            })?;
            let v = weighted(&inst.problem, &p.x);
            let diff = (v - oracle.value).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-3, || {
                format!("instance {i} {family}: relaxation {v} vs oracle {} at {:?}", oracle.value, oracle.x)
            })?;
        }
    }
    Ok(format!("{INSTANCES} instances ({quartics} with quartics), both families, worst |Δ| {worst:.1e}"))
}

/// Every solve of the hierarchy runs, for reuse by the duality criterion.
struct HierarchySolve {
    instance: u64,
    family: Family,
    k: usize,
    sol: SdpSolution,
    relax: hybridsos::Relaxation,
}

fn hierarchy_solves() -> Vec<HierarchySolve> {
    let mut out = Vec::new();
    for i in 0..INSTANCES {
        let inst = random_instance(i);
        let hp = HybridProblem::new(&inst.problem, &inst.z).unwrap();
        let k0 = min_order(&inst.problem);
        for family in [Family::Q, Family::P] {
            for k in k0..=k0 + 2 {
                let relax = build(&hp, inst.problem.lambda(), family, k).unwrap();
                let sol = solve(&relax.instance, &SolverOptions::default()).unwrap();
                out.push(HierarchySolve {
                    instance: i,
                    family,
                    k,
                    sol,
                    relax,
                });
            }
        }
    }
    out
}

fn monotonicity(solves: &[HierarchySolve]) -> Check {
    let mut checked = 0;
    for i in 0..INSTANCES {
        let inst = random_instance(i);
        let oracle = grid_oracle(&inst.problem, &inst.z, -2.0, 2.0, 100);
        let sampled_min = oracle.samples.iter().copied().fold(weighted(&inst.problem, &inst.z), f64::min);
        for family in [Family::Q, Family::P] {
            // only solves accurate enough to be trusted as values
            let vals: Vec<(usize, f64)> = solves
                .iter()
                .filter(|s| s.instance == i && s.family == family)
                .filter(|s| s.sol.accuracy() <= 1e-5)
                .map(|s| (s.k, s.sol.objective))
                .collect();
            ensure(!vals.is_empty(), || format!("instance {i} {family}: no accurate solve"))?;
            for (k, v) in &vals {
                ensure(*v <= sampled_min + 1e-6 * (1.0 + sampled_min.abs()), || {
                    format!("instance {i} {family} k={k}: value {v} exceeds sampled minimum {sampled_min}")
                })?;
            }
            for w in vals.windows(2) {
                ensure(w[0].1 <= w[1].1 + 1e-6 * (1.0 + w[1].1.abs()), || {
                    format!("instance {i} {family}: ρ_{} = {} > ρ_{} = {}", w[0].0, w[0].1, w[1].0, w[1].1)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} consecutive pairs non-decreasing, all values below sampled feasible values"))
}

fn weak_duality(solves: &[HierarchySolve]) -> Check {
    let mut extra = Vec::new();
    let prob = example_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let z = [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)];
        let hp = HybridProblem::new(&prob, &z).unwrap();
        for family in [Family::Q, Family::P] {
            for k in 1..=3 {
                let relax = build(&hp, prob.lambda(), family, k).unwrap();
                let sol = solve(&relax.instance, &SolverOptions::default()).unwrap();
                extra.push((relax, sol));
            }
        }
    }
    let all = solves.iter().map(|s| (&s.relax, &s.sol)).chain(extra.iter().map(|(r, s)| (r, s)));
    let (mut optimal, mut worst) = (0, f64::NEG_INFINITY);
    for (relax, sol) in all {
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        optimal += 1;
        let rep = certify_weak_duality(sol, &relax.instance, 1e-6).map_err(|e| e.to_string())?;
        let bound = sol.objective + 1e-6 * (1.0 + sol.objective.abs());
        worst = worst.max((sol.dual_objective - sol.objective) / (1.0 + sol.objective.abs()));
        ensure(sol.dual_objective <= bound && rep.dual <= bound && rep.holds, || {
            format!("dual {} / recomputed {} vs primal {}", sol.dual_objective, rep.dual, sol.objective)
        })?;
    }
    ensure(optimal > 0, || "no optimal solves".into())?;
    Ok(format!("{optimal} optimal solves, max (dual − primal)/(1+|primal|) = {worst:.1e}"))
}

/// Expands σ₀ + Σ multiplier · localizer directly from the Gram entries.
fn expand_rhs(cert: &hybridsos::certificate::SosCertificate, n: usize) -> Polynomial {
    let gram_poly = |g: &hybridsos::certificate::GramPolynomial| {
        let mut terms = Vec::new();
        for a in 0..g.dim {
            for b in 0..g.dim {
                terms.push((g.basis[a].add(&g.basis[b]), g.gram[a * g.dim + b]));
            }
        }
        Polynomial::from_terms(n, terms)
    };
    let mut rhs = gram_poly(&cert.sigma0);
    for t in &cert.terms {
        let m = match &t.multiplier {
            Multiplier::Sos(g) => gram_poly(g),
            Multiplier::Scalar(s) => Polynomial::constant(n, *s),
        };
        rhs = &rhs + &(&m * &t.localizer);
    }
    rhs
}

fn certificates() -> Check {
    let mut worst_res: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    let mut count = 0;
    for i in 0..INSTANCES {
        let inst = random_instance(i);
        for family in [Family::P, Family::Q] {
            let cfg = SweepConfig {
                family,
                ..SweepConfig::default()
            };
            let hp = HybridProblem::new(&inst.problem, &inst.z).unwrap();
            let out = solve_hybrid(&inst.problem, inst.problem.lambda(), &inst.z, &cfg).map_err(|e| e.to_string())?;
            let k = out.points.iter().find(|p| p.verified).map(|p| p.k_used).ok_or("nothing verified")?;
            let relax = build(&hp, inst.problem.lambda(), family, k).unwrap();
            let sol = solve(&relax.instance, &cfg.solver_options()).unwrap();
            let cert = recover_certificate(&relax, &sol, 1e-5)
                .map_err(|e| format!("instance {i} {family} k={k}: {e}"))?;
            let obj = &relax.objective;
            let lhs = obj - &Polynomial::constant(2, cert.gamma);
            let residual = (&lhs - &expand_rhs(&cert, 2)).max_abs_coeff();
            let tol = 1e-5 * (1.0 + obj.max_abs_coeff());
            ensure(residual <= tol, || format!("instance {i} {family}: residual {residual:e} > {tol:e}"))?;
            worst_res = worst_res.max(residual / (1.0 + obj.max_abs_coeff()));
            for t in std::iter::once(&cert.sigma0).chain(cert.terms.iter().filter_map(|t| match &t.multiplier {
                Multiplier::Sos(g) => Some(g),
                Multiplier::Scalar(_) => None,
            })) {
                let eig = t.min_eigenvalue();
                ensure(eig >= -1e-7 * (1.0 + t.trace()), || format!("instance {i} {family}: Gram eigenvalue {eig:e}"))?;
                worst_eig = worst_eig.min(eig / (1.0 + t.trace()));
            }
            for s in cert.scalar_multipliers() {
                ensure(s >= -1e-7, || format!("instance {i} {family}: scalar multiplier {s:e}"))?;
            }
            count += 1;
        }
    }
    Ok(format!(
        "{count} certificates, max relative residual {worst_res:.1e}, min relative Gram eigenvalue {worst_eig:.1e}"
    ))
}

fn extraction_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k = rng.gen_range(1..=2);
        let atoms = extract_atoms(&dirac_moments(&x, 2 * k), k, 1).map_err(|e| e.to_string())?;
        ensure(atoms.len() == 1, || format!("{} atoms for {x:?}", atoms.len()))?;
        let err = atoms[0].iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("{x:?} → {:?}", atoms[0]))?;
    }
    let mut worst_two: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w = rng.gen_range(0.2..0.8);
        let y = MomentVector::mixture(&[(w, dirac_moments(&a, 4)), (1.0 - w, dirac_moments(&b, 4))]).unwrap();
        let atoms = extract_atoms(&y, 2, 1).map_err(|e| e.to_string())?;
        ensure(atoms.len() == 2, || format!("{} atoms for {a:?}, {b:?}", atoms.len()))?;
        for want in [&a, &b] {
            let err = atoms
                .iter()
                .map(|got| got.iter().zip(want.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            worst_two = worst_two.max(err);
            ensure(err <= 1e-6, || format!("atom {want:?} missed by {err:e}"))?;
        }
    }
    Ok(format!("100 Dirac cases max error {worst:.1e}; 20 two-atom cases max error {worst_two:.1e}"))
}

fn negative_control() -> Check {
    let prob: MooProblem = nonconvex_problem();
    let k0 = min_order(&prob);
    let mut unverified = 0;
    for family in [Family::P, Family::Q] {
        let cfg = SweepConfig {
            z_source: ZSource::UniformBox {
                bounds: vec![(-2.0, 2.0), (-2.0, 2.0)],
                samples: 10,
                seed: 3,
            },
            family,
            k_max: Some(k0 + 3),
            ..SweepConfig::default()
        };
        let res = run_sweep(&prob, &cfg).map_err(|e| e.to_string())?;
        ensure(res.verified.is_empty() && res.efficient.is_empty(), || {
            format!("{family}: verified claims {:?}", res.verified.iter().map(|p| &p.x).collect::<Vec<_>>())
        })?;
        ensure(res.unverified.iter().all(|p| !p.verified), || "unverified flag lost".into())?;
        unverified += res.unverified.len();
    }
    Ok(format!("no verified point for k ≤ {}; {unverified} points flagged unverified", k0 + 3))
}

fn main() {
    let mut failures = 0;
    let mut run = |name: &str, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} [{secs:.2}s]"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg} [{secs:.2}s]");
            }
        }
    };
    run("golden_point_value_moments_rank_extraction", &mut golden);
    run("level_constant_nine_vs_ten", &mut level_variants);
    run("sweep_1000_points_in_efficient_set", &mut sweep);
    run("singleton_feasible_set", &mut singleton);
    run("oracle_equivalence_random_instances", &mut oracle_equivalence);
    let solves = hierarchy_solves();
    run("hierarchy_monotonicity_both_families", &mut || monotonicity(&solves));
    run("weak_duality_on_optimal_solves", &mut || weak_duality(&solves));
    run("certificates_random_instances", &mut certificates);
    run("extraction_round_trip", &mut extraction_round_trip);
    run("negative_control_never_verified", &mut negative_control);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
