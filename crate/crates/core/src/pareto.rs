//! The sweep over parameter points `z`: sampling, per-`z` order escalation with
//! flat-truncation checks, re-verification, dominance filtering and an existence probe.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{extract_atoms_with, rank_profile, recover_certificate, ExtractionOptions, SosCertificate};
use crate::error::{Error, Result};
use crate::poly::{is_positive_definite, weighted_sum_with, MooProblem};
use crate::relax::{build, min_order, Family, HybridProblem};
use crate::sdp::{certify_weak_duality, solve, SdpSolution, SolveStatus, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative duality gap requested from the solver.
    pub gap: f64,
    /// Relative primal/dual residual requested from the solver.
    pub feas: f64,
    /// Relative eigenvalue cutoff for numerical ranks.
    pub rank: f64,
    /// Distance in x below which two points are merged; also the dominance margin.
    pub dedup: f64,
    /// Constraint slack allowed for an extracted atom.
    pub feasibility: f64,
    /// Allowed `|λᵀf(x̄) − objective| / (1 + |objective|)` for an extracted atom.
    pub value: f64,
    /// Allowed relative value mismatch when re-solving at `z = x̄`.
    pub reverify: f64,
    /// Certificate identity residual, relative to `1 + max |coeff(λᵀf)|`.
    pub certificate: f64,
    /// Accuracy under which a `MaxIter`/`NumericalTrouble` iterate is still used.
    pub accept: f64,
    /// Distance (relative to `1 + ‖z‖∞`) under which an atom is replaced by `z` itself.
    pub snap: f64,
    /// Tolerance of the weak duality check on `Optimal` solves.
    pub duality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 1e-8,
            feas: 1e-8,
            rank: 1e-4,
            dedup: 1e-4,
            feasibility: 1e-5,
            value: 1e-4,
            reverify: 1e-5,
            certificate: 1e-5,
            accept: 1e-5,
            snap: 1e-4,
            duality: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSource {
    Explicit(Vec<Vec<f64>>),
    UniformBox {
        bounds: Vec<(f64, f64)>,
        samples: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub z_source: ZSource,
    pub family: Family,
    /// Highest relaxation order tried; `None` means `k0 + 3`.
    pub k_max: Option<usize>,
    pub tolerances: Tolerances,
    pub reverify: bool,
    pub certificates: bool,
    /// Worker threads for the sweep; 0 lets the pool decide.
    pub workers: usize,
    pub max_iter: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            z_source: ZSource::Explicit(Vec::new()),
            family: Family::P,
            k_max: None,
            tolerances: Tolerances::default(),
            reverify: true,
            certificates: false,
            workers: 0,
            max_iter: 200,
        }
    }
}

impl SweepConfig {
    pub fn with_z(z: Vec<Vec<f64>>) -> Self {
        SweepConfig {
            z_source: ZSource::Explicit(z),
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self, nvars: usize) -> Result<()> {
        match &self.z_source {
            ZSource::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::NoZSources);
                }
                if let Some(z) = list.iter().find(|z| z.len() != nvars) {
                    return Err(Error::DimensionMismatch {
                        expected: nvars,
                        got: z.len(),
                    });
                }
            }
            ZSource::UniformBox { bounds, samples, .. } => {
                if *samples == 0 {
                    return Err(Error::NoZSources);
                }
                if bounds.len() != nvars {
                    return Err(Error::DimensionMismatch {
                        expected: nvars,
                        got: bounds.len(),
                    });
                }
                if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
                    return Err(Error::InvalidProblem(
                        "box bounds must be finite with lower <= upper".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            eps_gap: self.tolerances.gap,
            eps_feas: self.tolerances.feas,
            max_iter: self.max_iter,
        }
    }

    fn resolve_k_max(&self, problem: &MooProblem) -> Result<(usize, usize)> {
        let k0 = min_order(problem);
        let k_max = self.k_max.unwrap_or(k0 + 3);
        if k_max < k0 {
            return Err(Error::OrderBelowMinimum { k: k_max, k0 });
        }
        Ok((k0, k_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientPoint {
    pub x: Vec<f64>,
    /// `f(x)`.
    pub values: Vec<f64>,
    pub z: Vec<f64>,
    pub k_used: usize,
    pub family: Family,
    /// Flat truncation fired and the atom passed the soundness checks.
    pub verified: bool,
    /// Re-solving at `z = x` reproduced `λᵀf(x)`.
    pub reverify_ok: bool,
    pub certificate: Option<SosCertificate>,
}

/// What happened at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZDiagnostic {
    pub z: Vec<f64>,
    /// Order of the last relaxation solved.
    pub k_used: usize,
    pub status: SolveStatus,
    pub objective: f64,
    pub gap: f64,
    pub accuracy: f64,
    pub iterations: usize,
    /// `rank M_t(y)` for `t = 0..=k_used` (empty when the solve was unusable).
    pub ranks: Vec<usize>,
    pub flat_at: Option<usize>,
    pub verified_points: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridOutcome {
    pub points: Vec<EfficientPoint>,
    pub diagnostic: ZDiagnostic,
}

impl HybridOutcome {
    pub fn verified(&self) -> bool {
        self.points.iter().any(|p| p.verified)
    }
}

/// Optimal, or a stalled iterate whose accuracy is within `accept`.
fn usable(sol: &SdpSolution, accept: f64) -> bool {
    match sol.status {
        SolveStatus::Optimal => true,
        SolveStatus::MaxIter | SolveStatus::NumericalTrouble => sol.accuracy() <= accept,
        SolveStatus::Infeasible | SolveStatus::Unbounded => false,
    }
}

fn weighted_value(problem: &MooProblem, lambda: &[f64], x: &[f64]) -> Result<f64> {
    Ok(problem.objective_values(x)?.iter().zip(lambda).map(|(f, l)| f * l).sum())
}

/// Solves the hybrid problem at `z`, raising the relaxation order until flat truncation fires.
///
/// On exhaustion the first-order moments of the last usable solve are returned
/// with `verified = false`.
pub fn solve_hybrid(problem: &MooProblem, lambda: &[f64], z: &[f64], cfg: &SweepConfig) -> Result<HybridOutcome> {
    let tol = &cfg.tolerances;
    let hp = HybridProblem::new(problem, z)?;
    if !problem.is_feasible(z, tol.feasibility)? {
        return Err(Error::InvalidProblem(format!("z = {z:?} violates the constraints")));
    }
    let (k0, k_max) = cfg.resolve_k_max(problem)?;
    let opts = cfg.solver_options();
    let extract = ExtractionOptions {
        rank_tol: tol.rank,
        ..ExtractionOptions::default()
    };
    let z_value = weighted_value(problem, lambda, z)?;
    let z_norm = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut diag = ZDiagnostic {
        z: z.to_vec(),
        k_used: k0,
        status: SolveStatus::MaxIter,
        objective: f64::NAN,
        gap: f64::NAN,
        accuracy: f64::NAN,
        iterations: 0,
        ranks: Vec::new(),
        flat_at: None,
        verified_points: 0,
        notes: Vec::new(),
    };
    let mut fallback: Option<(Vec<f64>, usize)> = None;

    for k in k0..=k_max {
        let relax = build(&hp, lambda, cfg.family, k)?;
        let sol = solve(&relax.instance, &opts)?;
        diag.k_used = k;
        diag.status = sol.status;
        diag.objective = sol.objective;
        diag.gap = sol.gap;
        diag.accuracy = sol.accuracy();
        diag.iterations = sol.iterations;
        diag.ranks.clear();
        diag.flat_at = None;

        if matches!(sol.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            diag.notes.push(format!("k={k}: solver reported {:?}", sol.status));
            break;
        }
        if !usable(&sol, tol.accept) {
            diag.notes.push(format!("k={k}: {:?} with accuracy {:.3e}", sol.status, sol.accuracy()));
            continue;
        }
        if sol.status == SolveStatus::Optimal {
            let report = certify_weak_duality(&sol, &relax.instance, tol.duality)?;
            if !report.holds {
                diag.notes.push(format!(
                    "k={k}: weak duality violated (dual {} > primal {})",
                    report.dual, report.primal
                ));
                continue;
            }
        }

        let y = relax.moment_vector(&sol.y)?;
        let first = y.first_moments();
        if first.iter().all(|v| v.is_finite()) {
            fallback = Some((first, k));
        }
        let profile = rank_profile(&y, k, k0, tol.rank)?;
        diag.ranks = profile.ranks.iter().map(|r| r.1).collect();
        diag.flat_at = profile.flat_at;
        let Some(t) = profile.flat_at else {
            continue;
        };
        let atoms = match extract_atoms_with(&y, t, k0, &extract) {
            Ok(a) => a,
            Err(e) => {
                diag.notes.push(format!("k={k}: {e}"));
                continue;
            }
        };

        let mut sound = Vec::with_capacity(atoms.len());
        for mut x in atoms {
            if near_z(&x, z, z_norm, tol.snap) {
                let xv = weighted_value(problem, lambda, &x)?;
                if z_value <= xv + tol.value * (1.0 + xv.abs()) {
                    x = z.to_vec();
                }
            }
            let value = weighted_value(problem, lambda, &x)?;
            let feasible = hp.feasibility_check(&x, tol.feasibility)?;
            let close = (value - sol.objective).abs() <= tol.value * (1.0 + sol.objective.abs());
            if feasible && close {
                sound.push(x);
            } else {
                diag.notes.push(format!(
                    "k={k}: atom {x:?} rejected (feasible: {feasible}, value {value} vs objective {})",
                    sol.objective
                ));
            }
        }
        if sound.is_empty() {
            continue;
        }

        let certificate = if cfg.certificates && sol.status == SolveStatus::Optimal {
            match recover_certificate(&relax, &sol, tol.certificate) {
                Ok(c) => Some(c),
                Err(e) => {
                    diag.notes.push(format!("k={k}: {e}"));
                    None
                }
            }
        } else {
            None
        };
        let points = sound
            .into_iter()
            .map(|x| {
                Ok(EfficientPoint {
                    values: problem.objective_values(&x)?,
                    x,
                    z: z.to_vec(),
                    k_used: k,
                    family: cfg.family,
                    verified: true,
                    reverify_ok: false,
                    certificate: certificate.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        diag.verified_points = points.len();
        return Ok(HybridOutcome { points, diagnostic: diag });
    }

    let points = match fallback {
        Some((x, k)) => vec![EfficientPoint {
            values: problem.objective_values(&x)?,
            x,
            z: z.to_vec(),
            k_used: k,
            family: cfg.family,
            verified: false,
            reverify_ok: false,
            certificate: None,
        }],
        None => Vec::new(),
    };
    Ok(HybridOutcome { points, diagnostic: diag })
}

/// `‖x − z‖∞ ≤ snap · (1 + ‖z‖∞)`.
fn near_z(x: &[f64], z: &[f64], z_norm: f64, snap: f64) -> bool {
    x.iter().zip(z).all(|(a, b)| (a - b).abs() <= snap * (1.0 + z_norm))
}

/// Re-solves at `z = x̄` with the order that verified the point and compares the
/// optimal value with `λᵀf(x̄)`.
pub fn reverify_efficiency(problem: &MooProblem, lambda: &[f64], point: &EfficientPoint, cfg: &SweepConfig) -> bool {
    if !point.verified {
        return false;
    }
    let run = || -> Result<bool> {
        let hp = HybridProblem::new(problem, &point.x)?;
        let relax = build(&hp, lambda, point.family, point.k_used)?;
        let sol = solve(&relax.instance, &cfg.solver_options())?;
        if !usable(&sol, cfg.tolerances.accept) {
            return Ok(false);
        }
        let value = weighted_value(problem, lambda, &point.x)?;
        Ok((sol.objective - value).abs() <= cfg.tolerances.reverify * (1.0 + value.abs()))
    };
    run().unwrap_or(false)
}

/// `a` dominates `b`: `a ≤ b` componentwise with some coordinate smaller by more than `tol`.
pub fn dominates(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| *x < y - tol)
}

/// Drops points within Euclidean distance `tol` of an earlier point, then every
/// point whose value vector is dominated by another survivor.
pub fn pareto_filter(points: &[EfficientPoint], tol: f64) -> Vec<EfficientPoint> {
    let mut kept: Vec<&EfficientPoint> = Vec::with_capacity(points.len());
    for p in points {
        let dup = kept.iter().any(|q| {
            q.x.iter().zip(&p.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= tol
        });
        if !dup {
            kept.push(p);
        }
    }
    kept.iter()
        .filter(|p| !kept.iter().any(|q| dominates(&q.values, &p.values, tol)))
        .map(|p| (*p).clone())
        .collect()
}

/// Parameter points for a sweep: the explicit list filtered to `K`, or rejection
/// samples from the box, sorted lexicographically.
pub fn sample_feasible_z(cfg: &SweepConfig, problem: &MooProblem) -> Result<Vec<Vec<f64>>> {
    cfg.validate(problem.nvars())?;
    let mut zs = match &cfg.z_source {
        ZSource::Explicit(list) => {
            let mut out = Vec::with_capacity(list.len());
            for z in list {
                if problem.is_feasible(z, 0.0)? {
                    out.push(z.clone());
                } else {
                    log::warn!("dropping z = {z:?}: outside the feasible set");
                }
            }
            out
        }
        ZSource::UniformBox { bounds, samples, seed } => {
            const STALL_DRAWS: usize = 1_000_000;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out = Vec::with_capacity(*samples);
            let mut draws = 0usize;
            while out.len() < *samples {
                let z: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
                draws += 1;
                if problem.is_feasible(&z, 0.0)? {
                    out.push(z);
                }
                if draws >= STALL_DRAWS && out.len() * 1000 < draws {
                    return Err(Error::SamplingStalled {
                        accepted: out.len(),
                        draws,
                    });
                }
            }
            out
        }
    };
    if zs.is_empty() {
        return Err(Error::NoZSources);
    }
    zs.sort_by(|a, b| lex_cmp(a, b));
    Ok(zs)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Parameter points in processing order (lexicographic).
    pub zs: Vec<Vec<f64>>,
    /// Every verified point before filtering, in `z` order.
    pub verified: Vec<EfficientPoint>,
    /// Verified points after deduplication and dominance filtering.
    pub efficient: Vec<EfficientPoint>,
    /// Points without a flat-truncation guarantee; never merged into `efficient`.
    pub unverified: Vec<EfficientPoint>,
    pub diagnostics: Vec<ZDiagnostic>,
}

impl SweepResult {
    pub fn verified_fraction(&self) -> f64 {
        let hits = self.diagnostics.iter().filter(|d| d.verified_points > 0).count();
        hits as f64 / self.diagnostics.len().max(1) as f64
    }
}

/// Runs the whole sweep with the problem's own weights.
pub fn run_sweep(problem: &MooProblem, cfg: &SweepConfig) -> Result<SweepResult> {
    let zs = sample_feasible_z(cfg, problem)?;
    cfg.resolve_k_max(problem)?;
    let lambda = problem.lambda();
    let task = |z: &Vec<f64>| -> Result<HybridOutcome> {
        let mut out = solve_hybrid(problem, lambda, z, cfg)?;
        if cfg.reverify {
            for p in out.points.iter_mut().filter(|p| p.verified) {
                p.reverify_ok = reverify_efficiency(problem, lambda, p, cfg);
            }
        }
        Ok(out)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidProblem(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<HybridOutcome> = pool.install(|| zs.par_iter().map(task).collect::<Result<Vec<_>>>())?;

    let mut verified = Vec::new();
    let mut unverified = Vec::new();
    let mut diagnostics = Vec::with_capacity(outcomes.len());
    for out in outcomes {
        for p in out.points {
            if p.verified {
                verified.push(p);
            } else {
                unverified.push(p);
            }
        }
        diagnostics.push(out.diagnostic);
    }
    let efficient = pareto_filter(&verified, cfg.tolerances.dedup);
    Ok(SweepResult {
        zs,
        verified,
        efficient,
        unverified,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ExistenceVerdict {
    /// `∇²(λᵀf)` is positive definite here and the data looked convex at every sample.
    PositiveDefinite { point: Vec<f64> },
    /// A Hessian of an objective or constraint is indefinite here, so the sufficient
    /// condition does not apply.
    NotConvex { point: Vec<f64>, function: String },
    /// No sample had a positive definite weighted Hessian.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub verdict: ExistenceVerdict,
    /// A sample with every `g_i < 0` (best-effort Slater check).
    pub slater_point: Option<Vec<f64>>,
}

impl ExistenceReport {
    pub fn is_positive_definite(&self) -> bool {
        matches!(self.verdict, ExistenceVerdict::PositiveDefinite { .. })
    }
}

/// Evaluates `∇²(λᵀf)` at the samples and reports the first positive definite one.
///
/// The sufficient condition presumes convex data, so the samples are first scanned
/// for an indefinite Hessian of any `f_j` or `g_i`.
pub fn existence_probe(problem: &MooProblem, lambda: &[f64], samples: &[Vec<f64>]) -> Result<ExistenceReport> {
    let weighted = weighted_sum_with(problem.objectives(), lambda);
    let named = problem
        .objectives()
        .iter()
        .enumerate()
        .map(|(j, f)| (format!("f{}", j + 1), f))
        .chain(problem.constraints().iter().enumerate().map(|(i, g)| (format!("g{}", i + 1), g)));
    let named: Vec<(String, &crate::poly::Polynomial)> = named.collect();

    let slater_point = samples
        .iter()
        .find(|x| problem.constraints().iter().all(|g| g.evaluate(x).is_ok_and(|v| v < 0.0)))
        .cloned();

    for x in samples {
        for (name, p) in &named {
            let h = p.hessian(x)?;
            let scale = h.amax().max(1.0);
            if SymmetricEigen::new(h).eigenvalues.min() < -1e-9 * scale {
                return Ok(ExistenceReport {
                    verdict: ExistenceVerdict::NotConvex {
                        point: x.clone(),
                        function: name.clone(),
                    },
                    slater_point,
                });
            }
        }
    }
    for x in samples {
        if is_positive_definite(&weighted.hessian(x)?, 1e-9)? {
            return Ok(ExistenceReport {
                verdict: ExistenceVerdict::PositiveDefinite { point: x.clone() },
                slater_point,
            });
        }
    }
    Ok(ExistenceReport {
        verdict: ExistenceVerdict::Inconclusive,
        slater_point,
    })
}
