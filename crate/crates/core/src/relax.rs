//! The hybrid scalar problem at a parameter point `z` and its two moment relaxations.
//!
//! For `z` in the feasible set `K = {g_i ≤ 0}` the hybrid problem is
//!
//! ```text
//!   min λᵀf(x)   s.t.  g_i(x) ≤ 0,  f_j(x) ≤ f_j(z)
//! ```
//!
//! [`build_q`] localizes every constraint with a moment block, [`build_p`] keeps the
//! constraints as scalar inequalities on the moments and adds a single localization
//! block for the level set `λᵀf ≤ λᵀf(z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{half_degree, MomentVector, MonomialBasis};
use crate::poly::{weighted_sum_with, MooProblem, Polynomial};
use crate::sdp::{AffineForm, PsdBlock, SdpInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Every constraint localized by a moment block.
    Q,
    /// Linear moment constraints plus a localized weighted level set.
    P,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q" | "q" => Ok(Family::Q),
            "P" | "p" => Ok(Family::P),
            other => Err(Error::Parse(format!("unknown relaxation family `{other}`, expected Q or P"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Q => "Q",
            Family::P => "P",
        })
    }
}

/// The scalar problem at a fixed `z`, with `f_j(z)` cached.
#[derive(Debug, Clone)]
pub struct HybridProblem {
    problem: MooProblem,
    z: Vec<f64>,
    fz: Vec<f64>,
}

impl HybridProblem {
    pub fn new(problem: &MooProblem, z: &[f64]) -> Result<Self> {
        if z.len() != problem.nvars() {
            return Err(Error::DimensionMismatch {
                expected: problem.nvars(),
                got: z.len(),
            });
        }
        let fz = problem.objective_values(z)?;
        Ok(HybridProblem {
            problem: problem.clone(),
            z: z.to_vec(),
            fz,
        })
    }

    pub fn problem(&self) -> &MooProblem {
        &self.problem
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn objective_bounds(&self) -> &[f64] {
        &self.fz
    }

    /// `λᵀf(z)`.
    pub fn weighted_level(&self, lambda: &[f64]) -> f64 {
        self.fz.iter().zip(lambda).map(|(f, l)| f * l).sum()
    }

    /// Membership in `K_z` up to `tol`.
    pub fn feasibility_check(&self, x: &[f64], tol: f64) -> Result<bool> {
        if !self.problem.is_feasible(x, tol)? {
            return Ok(false);
        }
        for (f, bound) in self.problem.objectives().iter().zip(&self.fz) {
            if f.evaluate(x)? > bound + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Orders attached to a relaxation: `r_i = ⌈deg g_i/2⌉`, `d_j = ⌈deg f_j/2⌉`,
/// `k0 = max(max r_i, max d_j)` (at least 1), `d_f = max d_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxationSpec {
    pub family: Family,
    pub order: usize,
    pub constraint_orders: Vec<usize>,
    pub objective_orders: Vec<usize>,
    pub k0: usize,
    pub d_f: usize,
}

impl RelaxationSpec {
    pub fn new(problem: &MooProblem, family: Family, order: usize) -> Result<Self> {
        let constraint_orders: Vec<usize> = problem.constraints().iter().map(half_degree).collect();
        let objective_orders: Vec<usize> = problem.objectives().iter().map(half_degree).collect();
        let d_f = objective_orders.iter().copied().max().unwrap_or(0);
        let k0 = min_order(problem);
        if order < k0 {
            return Err(Error::OrderBelowMinimum { k: order, k0 });
        }
        Ok(RelaxationSpec {
            family,
            order,
            constraint_orders,
            objective_orders,
            k0,
            d_f,
        })
    }
}

/// Smallest admissible relaxation order for `problem`.
pub fn min_order(problem: &MooProblem) -> usize {
    problem
        .constraints()
        .iter()
        .chain(problem.objectives())
        .map(half_degree)
        .max()
        .unwrap_or(0)
        .max(1)
}

/// What a block or scalar inequality of a relaxation encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRole {
    /// `M_k(y) ⪰ 0`.
    Moment,
    /// `g_i ≤ 0`.
    Constraint(usize),
    /// `f_j ≤ f_j(z)`.
    ObjectiveBound(usize),
    /// `λᵀf ≤ level`.
    WeightedLevel,
}

/// A constraint `h ≥ 0` imposed as `M_order(h y) ⪰ 0` (blocks) or `L_y(h) ≥ 0` (scalars).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localizer {
    pub role: ConstraintRole,
    pub poly: Polynomial,
    pub order: usize,
}

/// An assembled relaxation: the SDP plus the meaning of each of its blocks.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub spec: RelaxationSpec,
    pub instance: SdpInstance,
    /// Basis of `R[x]_{2k}` indexing the SDP variables.
    pub basis: MonomialBasis,
    /// `λᵀf`.
    pub objective: Polynomial,
    /// One entry per `instance.psd_blocks` element.
    pub blocks: Vec<Localizer>,
    /// One entry per `instance.scalar_ineqs` element (order 0).
    pub scalars: Vec<Localizer>,
}

impl Relaxation {
    pub fn moment_vector(&self, y: &[f64]) -> Result<MomentVector> {
        MomentVector::new(self.basis.nvars(), self.basis.degree(), y.to_vec())
    }
}

fn check_lambda(hp: &HybridProblem, lambda: &[f64]) -> Result<()> {
    let p = hp.problem.objectives().len();
    if lambda.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: lambda.len(),
        });
    }
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidProblem("lambda must be strictly positive".into()));
    }
    Ok(())
}

struct Builder {
    basis: MonomialBasis,
    instance: SdpInstance,
    blocks: Vec<Localizer>,
    scalars: Vec<Localizer>,
}

impl Builder {
    fn new(nvars: usize, k: usize, objective: &Polynomial) -> Builder {
        let basis = MonomialBasis::new(nvars, 2 * k);
        let mut instance = SdpInstance::new(basis.len());
        instance.fixed.push((0, 1.0));
        for (e, c) in objective.terms() {
            if e.is_zero() {
                instance.objective_constant += c;
            } else {
                instance.objective[basis.index_of(e).expect("objective degree within 2k")] += c;
            }
        }
        Builder {
            basis,
            instance,
            blocks: Vec::new(),
            scalars: Vec::new(),
        }
    }

    fn localize(&mut self, role: ConstraintRole, poly: Polynomial, order: usize) {
        let rows = &self.basis.monomials()[..self.basis.prefix_len(order)];
        let mut block = PsdBlock::new(rows.len());
        for a in 0..rows.len() {
            for b in a..rows.len() {
                let ab = rows[a].add(&rows[b]);
                for (g, c) in poly.terms() {
                    let idx = self.basis.index_of(&g.add(&ab)).expect("localizer degree within 2k");
                    block.push(a, b, Some(idx), c);
                }
            }
        }
        self.instance.psd_blocks.push(block);
        self.blocks.push(Localizer { role, poly, order });
    }

    /// Imposes `L_y(q) ≤ 0`, recorded as the localizer `−q ≥ 0`.
    fn linear(&mut self, role: ConstraintRole, q: &Polynomial) {
        let mut form = AffineForm::default();
        for (e, c) in q.terms() {
            let idx = self.basis.index_of(e).expect("constraint degree within 2k");
            if idx == 0 {
                form.constant += c;
            } else {
                form.coeffs.push((idx, c));
            }
        }
        self.instance.scalar_ineqs.push(form);
        self.scalars.push(Localizer {
            role,
            poly: -q,
            order: 0,
        });
    }

    fn finish(self, spec: RelaxationSpec, objective: Polynomial) -> Relaxation {
        Relaxation {
            spec,
            instance: self.instance,
            basis: self.basis,
            objective,
            blocks: self.blocks,
            scalars: self.scalars,
        }
    }
}

/// Relaxation with blocks `M_k(y)`, `M_{k−r_i}(−g_i y)` and `M_{k−d_j}((f_j(z) − f_j) y)`.
pub fn build_q(hp: &HybridProblem, lambda: &[f64], k: usize) -> Result<Relaxation> {
    check_lambda(hp, lambda)?;
    let problem = &hp.problem;
    let n = problem.nvars();
    let spec = RelaxationSpec::new(problem, Family::Q, k)?;
    let objective = weighted_sum_with(problem.objectives(), lambda);
    let mut b = Builder::new(n, k, &objective);
    b.localize(ConstraintRole::Moment, Polynomial::constant(n, 1.0), k);
    for (i, g) in problem.constraints().iter().enumerate() {
        b.localize(ConstraintRole::Constraint(i), -g, k - spec.constraint_orders[i]);
    }
    for (j, f) in problem.objectives().iter().enumerate() {
        let h = &Polynomial::constant(n, hp.fz[j]) - f;
        b.localize(ConstraintRole::ObjectiveBound(j), h, k - spec.objective_orders[j]);
    }
    Ok(b.finish(spec, objective))
}

/// Relaxation with `M_k(y) ⪰ 0`, `L_y(g_i) ≤ 0`, `L_y(f_j) ≤ f_j(z)` and
/// `M_{k−d_f}((λᵀf(z) − λᵀf) y) ⪰ 0`.
pub fn build_p(hp: &HybridProblem, lambda: &[f64], k: usize) -> Result<Relaxation> {
    let level = hp.weighted_level(lambda);
    build_p_with_level(hp, lambda, k, level)
}

/// [`build_p`] with an explicit constant in the localized level set `level − λᵀf ≥ 0`.
pub fn build_p_with_level(
    hp: &HybridProblem,
    lambda: &[f64],
    k: usize,
    level: f64,
) -> Result<Relaxation> {
    check_lambda(hp, lambda)?;
    let problem = &hp.problem;
    let n = problem.nvars();
    let spec = RelaxationSpec::new(problem, Family::P, k)?;
    let objective = weighted_sum_with(problem.objectives(), lambda);
    let mut b = Builder::new(n, k, &objective);
    b.localize(ConstraintRole::Moment, Polynomial::constant(n, 1.0), k);
    for (i, g) in problem.constraints().iter().enumerate() {
        b.linear(ConstraintRole::Constraint(i), g);
    }
    for (j, f) in problem.objectives().iter().enumerate() {
        let q = f - &Polynomial::constant(n, hp.fz[j]);
        b.linear(ConstraintRole::ObjectiveBound(j), &q);
    }
    let h = &Polynomial::constant(n, level) - &objective;
    b.localize(ConstraintRole::WeightedLevel, h, k - spec.d_f);
    Ok(b.finish(spec, objective))
}

pub fn build(hp: &HybridProblem, lambda: &[f64], family: Family, k: usize) -> Result<Relaxation> {
    match family {
        Family::Q => build_q(hp, lambda, k),
        Family::P => build_p(hp, lambda, k),
    }
}
