use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coefficient of an affine symmetric matrix map.
///
/// `var = None` is the constant part. Only `row <= col` is stored; an
/// off-diagonal entry stands for both symmetric positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub var: Option<usize>,
    pub coeff: f64,
}

/// Affine map `y ↦ A₀ + Σ yᵢ Aᵢ` constrained to be PSD.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<BlockEntry>,
}

impl PsdBlock {
    pub fn new(dim: usize) -> Self {
        PsdBlock {
            dim,
            entries: Vec::new(),
        }
    }

    /// Adds `coeff · y_var` (or a constant) at `(row, col)` and its mirror.
    pub fn push(&mut self, row: usize, col: usize, var: Option<usize>, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(BlockEntry {
            row,
            col,
            var,
            coeff,
        });
    }

    /// Dense value of the block at `y`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let v = e.coeff * e.var.map_or(1.0, |i| y[i]);
            m[(e.row, e.col)] += v;
            if e.row != e.col {
                m[(e.col, e.row)] += v;
            }
        }
        m
    }
}

/// Affine functional `constant + Σ coeff·y_i`, constrained `<= 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl AffineForm {
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpInstance {
    pub var_count: usize,
    /// Linear part `c` of the objective, length `var_count`.
    pub objective: Vec<f64>,
    /// Constant `c₀` added to the objective.
    pub objective_constant: f64,
    pub psd_blocks: Vec<PsdBlock>,
    pub scalar_ineqs: Vec<AffineForm>,
    pub fixed: Vec<(usize, f64)>,
}

impl SdpInstance {
    pub fn new(var_count: usize) -> Self {
        SdpInstance {
            var_count,
            objective: vec![0.0; var_count],
            objective_constant: 0.0,
            psd_blocks: Vec::new(),
            scalar_ineqs: Vec::new(),
            fixed: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.objective.len() != self.var_count {
            return bad(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.var_count
            ));
        }
        if !self.objective_constant.is_finite() || self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for (b, block) in self.psd_blocks.iter().enumerate() {
            if block.dim == 0 {
                return bad(format!("block {b} has dimension 0"));
            }
            for e in &block.entries {
                if e.row > e.col || e.col >= block.dim {
                    return bad(format!("block {b} entry ({}, {}) out of range", e.row, e.col));
                }
                if e.var.is_some_and(|v| v >= self.var_count) || !e.coeff.is_finite() {
                    return bad(format!("block {b} has an invalid coefficient"));
                }
            }
        }
        for (s, f) in self.scalar_ineqs.iter().enumerate() {
            if !f.constant.is_finite()
                || f.coeffs.iter().any(|&(i, c)| i >= self.var_count || !c.is_finite())
            {
                return bad(format!("scalar inequality {s} is invalid"));
            }
        }
        for (k, &(i, v)) in self.fixed.iter().enumerate() {
            if i >= self.var_count || !v.is_finite() {
                return bad(format!("fixed entry {k} is invalid"));
            }
            if self.fixed[..k].iter().any(|&(j, _)| j == i) {
                return bad(format!("variable {i} pinned twice"));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>()
    }
}
