//! Monomial bases, moment vectors, moment and localization matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::{Exponent, Polynomial};

/// `s(d) = C(n + d, d)`, the number of monomials of degree at most `d` in `n` variables.
pub fn basis_size(nvars: usize, degree: usize) -> usize {
    // C(n+d, d) computed incrementally to stay exact for the small sizes used here
    (1..=degree).fold(1usize, |acc, i| acc * (nvars + i) / i)
}

/// `⌈deg / 2⌉`.
pub fn half_degree(p: &Polynomial) -> usize {
    (p.degree() as usize).div_ceil(2)
}

/// The canonical basis of `R[x]_d` in graded order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    nvars: usize,
    degree: usize,
    monomials: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, degree: usize) -> Self {
        assert!(nvars >= 1, "a monomial basis needs at least one variable");
        let mut monomials = Vec::with_capacity(basis_size(nvars, degree));
        for d in 0..=degree as u32 {
            let mut buf = vec![0u32; nvars];
            push_degree(&mut monomials, &mut buf, 0, d);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        MonomialBasis {
            nvars,
            degree,
            monomials,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Exponent] {
        &self.monomials
    }

    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Number of leading monomials of degree at most `d`; the prefix is itself a basis.
    pub fn prefix_len(&self, d: usize) -> usize {
        basis_size(self.nvars, d.min(self.degree))
    }

    /// `v_d(x)`, the vector of monomial values.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|e| e.monomial_value(x)).collect()
    }
}

// Exponents of total degree `remaining` for variables `pos..`, in descending lex order.
fn push_degree(out: &mut Vec<Exponent>, buf: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(Exponent::new(buf.to_vec()));
        buf[pos] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a;
        push_degree(out, buf, pos + 1, remaining - a);
    }
    buf[pos] = 0;
}

/// Pseudo-moments `y_α` indexed by the basis of `R[x]_{order}` with `y_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    basis: MonomialBasis,
    values: Vec<f64>,
}

impl MomentVector {
    /// Wraps `values` (graded order). Fails unless the length is `s(order)` and `y_0 = 1`.
    pub fn new(nvars: usize, order: usize, values: Vec<f64>) -> Result<Self> {
        let basis = MonomialBasis::new(nvars, order);
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        if (values[0] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInstance(format!(
                "moment vector must have y_0 = 1, got {}",
                values[0]
            )));
        }
        Ok(MomentVector { basis, values })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars
    }

    /// The order `2k` of the vector.
    pub fn order(&self) -> usize {
        self.basis.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: &Exponent) -> Option<f64> {
        self.basis.index_of(e).map(|i| self.values[i])
    }

    /// `(y_α)_{|α|=1}`.
    pub fn first_moments(&self) -> Vec<f64> {
        (0..self.nvars())
            .map(|i| self.values.get(i + 1).copied().unwrap_or(0.0))
            .collect()
    }

    /// The Riesz functional `L_y(p) = Σ p_α y_α`.
    pub fn riesz(&self, p: &Polynomial) -> Result<f64> {
        let mut acc = 0.0;
        for (e, c) in p.terms() {
            let v = self.get(e).ok_or(Error::OrderTooSmall {
                need: e.degree() as usize,
                have: self.order(),
            })?;
            acc += c * v;
        }
        Ok(acc)
    }

    /// Convex combination of moment vectors with equal order and weights summing to 1.
    pub fn mixture(parts: &[(f64, MomentVector)]) -> Result<MomentVector> {
        let first = &parts
            .first()
            .ok_or_else(|| Error::InvalidInstance("empty mixture".into()))?
            .1;
        let mut values = vec![0.0; first.values.len()];
        for (w, m) in parts {
            if m.basis != first.basis {
                return Err(Error::InvalidInstance("mixture of different bases".into()));
            }
            for (v, x) in values.iter_mut().zip(&m.values) {
                *v += w * x;
            }
        }
        MomentVector::new(first.nvars(), first.order(), values)
    }
}

/// Moments up to `order` of the Dirac measure at `x`: `y_α = x^α`.
pub fn dirac_moments(x: &[f64], order: usize) -> MomentVector {
    let basis = MonomialBasis::new(x.len(), order);
    let values = basis.evaluate(x);
    MomentVector { basis, values }
}

/// `M_d(y)`, entry `(α, β)` equal to `y_{α+β}`.
pub fn moment_matrix(y: &MomentVector, d: usize) -> Result<DMatrix<f64>> {
    localization_matrix(&Polynomial::constant(y.nvars(), 1.0), y, d)
}

/// `M_d(p y)`, entry `(α, β)` equal to `Σ_γ p_γ y_{γ+α+β}`.
pub fn localization_matrix(p: &Polynomial, y: &MomentVector, d: usize) -> Result<DMatrix<f64>> {
    if p.nvars() != y.nvars() {
        return Err(Error::DimensionMismatch {
            expected: y.nvars(),
            got: p.nvars(),
        });
    }
    let need = 2 * d + p.degree() as usize;
    if need > y.order() {
        return Err(Error::OrderTooSmall {
            need,
            have: y.order(),
        });
    }
    let rows = &y.basis.monomials()[..y.basis.prefix_len(d)];
    let s = rows.len();
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let ab = rows[a].add(&rows[b]);
            let v: f64 = p
                .terms()
                .map(|(g, c)| c * y.values[y.basis.index_of(&g.add(&ab)).unwrap()])
                .sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(m)
}
