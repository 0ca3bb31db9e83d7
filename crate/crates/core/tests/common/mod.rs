#![allow(dead_code)]

use hybridsos::{MooProblem, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn x(n: usize, i: usize) -> Polynomial {
    Polynomial::var(n, i)
}

pub fn c(n: usize, v: f64) -> Polynomial {
    Polynomial::constant(n, v)
}

/// f1 = (x1−3)² + (x2−2)², f2 = x1 + x2, f3 = x1 + 2x2 on x ≥ 0.
pub fn example_problem() -> MooProblem {
    let (x1, x2) = (x(2, 0), x(2, 1));
    let f1 = &(&x1 - &c(2, 3.0)).pow(2) + &(&x2 - &c(2, 2.0)).pow(2);
    MooProblem::with_unit_weights(2, vec![f1, &x1 + &x2, &x1 + &x2.scale(2.0)], vec![-&x1, -&x2]).unwrap()
}

/// (x1 x2 − 1)² + x2², twice, with no constraints.
pub fn nonconvex_problem() -> MooProblem {
    let (x1, x2) = (x(2, 0), x(2, 1));
    let f = &(&(&x1 * &x2) - &c(2, 1.0)).pow(2) + &x2.pow(2);
    MooProblem::with_unit_weights(2, vec![f.clone(), f], vec![]).unwrap()
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * d[0]).powi(2) + (p[1] - a[1] - t * d[1]).powi(2)).sqrt()
}

/// Distance to {x2 = 0, 0 ≤ x1 ≤ 2} ∪ conv{(1,0), (2,0), (3,2)}.
pub fn efficient_set_distance(p: [f64; 2]) -> f64 {
    let (a, b, c) = ([1.0, 0.0], [2.0, 0.0], [3.0, 2.0]);
    let side = |u: [f64; 2], v: [f64; 2]| (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0]);
    let s = [side(a, b), side(b, c), side(c, a)];
    let inside = s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0);
    let tri = if inside {
        0.0
    } else {
        dist_to_segment(p, a, b).min(dist_to_segment(p, b, c)).min(dist_to_segment(p, c, a))
    };
    tri.min(dist_to_segment(p, [0.0, 0.0], [2.0, 0.0]))
}

pub struct Instance {
    pub problem: MooProblem,
    pub z: Vec<f64>,
    pub has_quartic: bool,
}

fn quadratic(rng: &mut ChaCha8Rng) -> Polynomial {
    // (x − a)ᵀ Q (x − a) + bᵀx with Q = L Lᵀ + 0.2 I
    let l: [[f64; 2]; 2] = [[rng.gen_range(-1.0..1.0), 0.0], [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]];
    let q = [
        [l[0][0] * l[0][0] + 0.2, l[0][0] * l[1][0]],
        [l[0][0] * l[1][0], l[1][0] * l[1][0] + l[1][1] * l[1][1] + 0.2],
    ];
    let a = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
    let d = [&x(2, 0) - &c(2, a[0]), &x(2, 1) - &c(2, a[1])];
    let mut f = Polynomial::zero(2);
    for i in 0..2 {
        for j in 0..2 {
            f = &f + &(&d[i] * &d[j]).scale(q[i][j]);
        }
    }
    let b = x(2, 0).scale(rng.gen_range(-1.0..1.0));
    &(&f + &b) + &x(2, 1).scale(rng.gen_range(-1.0..1.0))
}

fn quartic(rng: &mut ChaCha8Rng) -> Polynomial {
    // w ‖x − a‖⁴ + ‖x − b‖²
    let sq = |rng: &mut ChaCha8Rng| {
        let a = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        &(&x(2, 0) - &c(2, a[0])).pow(2) + &(&x(2, 1) - &c(2, a[1])).pow(2)
    };
    let w = rng.gen_range(0.2..1.0);
    let outer = sq(rng).pow(2).scale(w);
    &outer + &sq(rng)
}

/// Convex instance `i`: 2–3 objectives (quadratics, plus a quartic for even `i`),
/// the box |x_j| ≤ 2 and one random half-plane, with a feasible `z`.
pub fn random_instance(i: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
    let p = rng.gen_range(2..=3);
    let has_quartic = i.is_multiple_of(2);
    let mut objectives: Vec<Polynomial> = (0..p).map(|_| quadratic(&mut rng)).collect();
    if has_quartic {
        objectives[0] = quartic(&mut rng);
    }
    let mut constraints = Vec::new();
    for j in 0..2 {
        constraints.push(&x(2, j) - &c(2, 2.0));
        constraints.push(&(-&x(2, j)) - &c(2, 2.0));
    }
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let normal = [angle.cos(), angle.sin()];
    let u = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let offset = normal[0] * u[0] + normal[1] * u[1] + 0.5;
    constraints.push(&(&x(2, 0).scale(normal[0]) + &x(2, 1).scale(normal[1])) - &c(2, offset));
    let problem = MooProblem::with_unit_weights(2, objectives, constraints).unwrap();
    let z = loop {
        let z = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if problem.is_feasible(&z, 0.0).unwrap() {
            break z;
        }
    };
    Instance { problem, z, has_quartic }
}

pub fn weighted(problem: &MooProblem, x: &[f64]) -> f64 {
    problem
        .objective_values(x)
        .unwrap()
        .iter()
        .zip(problem.lambda())
        .map(|(f, l)| f * l)
        .sum()
}

fn in_kz(problem: &MooProblem, fz: &[f64], x: &[f64]) -> bool {
    problem.constraints().iter().all(|g| g.evaluate(x).unwrap() <= 0.0)
        && problem.objectives().iter().zip(fz).all(|(f, b)| f.evaluate(x).unwrap() <= *b)
}

pub struct OracleResult {
    pub value: f64,
    pub x: Vec<f64>,
    /// Weighted values at every feasible grid point of the coarse pass.
    pub samples: Vec<f64>,
}

/// Brute-force minimum of λᵀf over K_z ∩ [lo, hi]²: a dense grid, then a pattern
/// search that shrinks its step once no neighbour improves.
pub fn grid_oracle(problem: &MooProblem, z: &[f64], lo: f64, hi: f64, cells: usize) -> OracleResult {
    let fz = problem.objective_values(z).unwrap();
    let mut best = (weighted(problem, z), z.to_vec());
    let mut samples = Vec::new();
    let h = (hi - lo) / cells as f64;
    for i in 0..=cells {
        for j in 0..=cells {
            let p = [lo + i as f64 * h, lo + j as f64 * h];
            if in_kz(problem, &fz, &p) {
                let v = weighted(problem, &p);
                samples.push(v);
                if v < best.0 {
                    best = (v, p.to_vec());
                }
            }
        }
    }
    let mut step = h;
    let half = 10i32;
    while step > 1e-10 {
        let mut improved = false;
        for _ in 0..100 {
            let center = best.1.clone();
            let mut moved = false;
            for a in -half..=half {
                for b in -half..=half {
                    let p = [center[0] + a as f64 * step / half as f64, center[1] + b as f64 * step / half as f64];
                    if in_kz(problem, &fz, &p) {
                        let v = weighted(problem, &p);
                        if v < best.0 {
                            best = (v, p.to_vec());
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
            improved = true;
        }
        if !improved {
            step /= 4.0;
        }
    }
    OracleResult {
        value: best.0,
        x: best.1,
        samples,
    }
}
