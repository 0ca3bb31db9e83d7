//! Sparse multivariate polynomials over `f64`.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Exponent`], whose ordering is the
//! graded order used by every monomial basis in this crate:
//! `1, x1, ..., xn, x1^2, x1 x2, ..., xn^d`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-index `α = (α_1, ..., α_n)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        Exponent(entries)
    }

    pub fn zero(nvars: usize) -> Self {
        Exponent(vec![0; nvars])
    }

    /// The exponent of the single variable `x_i`.
    pub fn unit(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Exponent(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|α|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `α + β`. Panics on overflow or mismatched lengths.
    pub fn add(&self, other: &Exponent) -> Exponent {
        assert_eq!(self.0.len(), other.0.len(), "exponent length mismatch");
        Exponent(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.checked_add(*b).expect("exponent overflow"))
                .collect(),
        )
    }

    /// Evaluates the monomial `x^α`.
    pub fn monomial_value(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        // graded, then reverse lexicographic on the entries so that x1 precedes x2
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// One `(exponents, coeff)` term in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    nvars: usize,
    terms: Vec<Term>,
}

impl From<Polynomial> for PolynomialRepr {
    fn from(p: Polynomial) -> Self {
        PolynomialRepr {
            nvars: p.nvars,
            terms: p.to_terms(),
        }
    }
}

impl TryFrom<PolynomialRepr> for Polynomial {
    type Error = Error;
    fn try_from(r: PolynomialRepr) -> Result<Self> {
        Polynomial::try_from_terms(
            r.nvars,
            r.terms.into_iter().map(|t| (Exponent::new(t.exponents), t.coeff)),
        )
    }
}

/// Sparse real polynomial in `nvars` variables with no stored zero coefficients.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolynomialRepr", try_from = "PolynomialRepr")]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_terms(nvars, [(Exponent::zero(nvars), c)])
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        Self::from_terms(nvars, [(Exponent::unit(nvars, i), 1.0)])
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs; duplicates are summed.
    ///
    /// Panics if an exponent does not have `nvars` entries.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Exponent, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.nvars(), nvars, "exponent length does not match nvars");
            p.add_term(e, c);
        }
        p
    }

    /// Fallible variant of [`Polynomial::from_terms`] for untrusted input.
    pub fn try_from_terms<I>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponent, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in terms {
            if e.nvars() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    got: e.nvars(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "non-finite coefficient {c} for exponent {e:?}"
                )));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum `|α|` over the stored terms, 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> + '_ {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    /// Terms in graded order, for serialization.
    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(e, &c)| Term {
                exponents: e.0.clone(),
                coeff: c,
            })
            .collect()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| c * e.monomial_value(point))
            .sum())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_terms(self.nvars, self.terms.iter().map(|(e, c)| (e.clone(), c * s)))
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        assert!(i < self.nvars, "variable index out of range");
        Polynomial::from_terms(
            self.nvars,
            self.terms.iter().filter(|(e, _)| e.0[i] > 0).map(|(e, c)| {
                let mut d = e.0.clone();
                let a = d[i];
                d[i] -= 1;
                (Exponent(d), c * a as f64)
            }),
        )
    }

    pub fn gradient(&self, point: &[f64]) -> Result<DVector<f64>> {
        self.check_point(point)?;
        let mut g = DVector::zeros(self.nvars);
        for i in 0..self.nvars {
            g[i] = self.derivative(i).evaluate(point)?;
        }
        Ok(g)
    }

    /// Hessian at `point`; symmetric by construction since only `i <= j` is differentiated.
    pub fn hessian(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(point)?;
        let n = self.nvars;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let di = self.derivative(i);
            for j in i..n {
                let v = di.derivative(j).evaluate(point)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            write!(f, "{}", c.abs())?;
            for (i, &a) in e.0.iter().enumerate() {
                match a {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, a)?,
                }
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "polynomial nvars mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "polynomial nvars mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -*c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "polynomial nvars mismatch");
        let mut out = Polynomial::zero(self.nvars);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);

/// Multi-objective problem `min_{R^p_+} (f_1, ..., f_p)` subject to `g_i(x) <= 0`,
/// together with the strictly positive weight vector used by the hybrid scalarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooProblem {
    nvars: usize,
    objectives: Vec<Polynomial>,
    constraints: Vec<Polynomial>,
    lambda: Vec<f64>,
}

impl MooProblem {
    pub fn new(
        nvars: usize,
        objectives: Vec<Polynomial>,
        constraints: Vec<Polynomial>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        if nvars == 0 {
            return Err(Error::InvalidProblem("at least one variable is required".into()));
        }
        if objectives.is_empty() {
            return Err(Error::InvalidProblem("at least one objective is required".into()));
        }
        for p in objectives.iter().chain(&constraints) {
            if p.nvars() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    got: p.nvars(),
                });
            }
        }
        if lambda.len() != objectives.len() {
            return Err(Error::InvalidProblem(format!(
                "lambda has {} entries but there are {} objectives",
                lambda.len(),
                objectives.len()
            )));
        }
        if lambda.iter().any(|&l| l.is_nan() || l <= 0.0 || l.is_infinite()) {
            return Err(Error::InvalidProblem("lambda must be strictly positive".into()));
        }
        Ok(MooProblem {
            nvars,
            objectives,
            constraints,
            lambda,
        })
    }

    /// Same problem with all-ones weights.
    pub fn with_unit_weights(
        nvars: usize,
        objectives: Vec<Polynomial>,
        constraints: Vec<Polynomial>,
    ) -> Result<Self> {
        let p = objectives.len();
        Self::new(nvars, objectives, constraints, vec![1.0; p])
    }

    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        Self::new(
            self.nvars,
            self.objectives.clone(),
            self.constraints.clone(),
            lambda,
        )
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn objectives(&self) -> &[Polynomial] {
        &self.objectives
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn objective_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.objectives.iter().map(|f| f.evaluate(x)).collect()
    }

    /// `g_i(x) <= tol` for every constraint.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<bool> {
        for g in &self.constraints {
            if g.evaluate(x)? > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `λᵀf = Σ_j λ_j f_j` using the problem's weights.
pub fn weighted_sum(problem: &MooProblem) -> Polynomial {
    weighted_sum_with(problem.objectives(), problem.lambda())
}

pub fn weighted_sum_with(objectives: &[Polynomial], lambda: &[f64]) -> Polynomial {
    assert_eq!(objectives.len(), lambda.len(), "one weight per objective");
    let nvars = objectives.first().map_or(0, Polynomial::nvars);
    objectives
        .iter()
        .zip(lambda)
        .fold(Polynomial::zero(nvars), |acc, (f, &l)| &acc + &f.scale(l))
}

/// True iff the smallest eigenvalue of the symmetric `matrix` exceeds `tol`.
pub fn is_positive_definite(matrix: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let asym = symmetry_defect(matrix)?;
    let scale = tol.max(f64::EPSILON) * (1.0 + matrix.amax());
    if asym > scale {
        return Err(Error::NotSymmetric(asym));
    }
    if matrix.nrows() == 0 {
        return Ok(false);
    }
    let eig = SymmetricEigen::new(matrix.clone());
    Ok(eig.eigenvalues.min() > tol)
}

pub(crate) fn symmetry_defect(matrix: &DMatrix<f64>) -> Result<f64> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.nrows(),
            got: matrix.ncols(),
        });
    }
    Ok((matrix - matrix.transpose()).amax())
}
