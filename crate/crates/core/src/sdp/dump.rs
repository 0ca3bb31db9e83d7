//! Plain-text sparse dump of an [`SdpInstance`].
//!
//! One record per line, `#` starts a comment:
//!
//! ```text
//! vars <var_count>
//! objective_constant <c0>
//! objective <var> <coeff>
//! fixed <var> <value>
//! block <block> <dim>
//! entry <block> <i> <j> <var> <coeff>      # var = -1 for the constant part
//! scalar <index> <constant>
//! scalar_coeff <index> <var> <coeff>
//! ```
//!
//! Indices are zero-based and entries store the upper triangle (`i <= j`).

use std::fmt::Write as _;

use super::instance::{AffineForm, BlockEntry, PsdBlock, SdpInstance};
use crate::error::{Error, Result};

pub fn write_dump(inst: &SdpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# moment SDP: minimize c0 + c'y, blocks PSD, scalars <= 0");
    let _ = writeln!(out, "vars {}", inst.var_count);
    let _ = writeln!(out, "objective_constant {:e}", inst.objective_constant);
    for (i, c) in inst.objective.iter().enumerate() {
        if *c != 0.0 {
            let _ = writeln!(out, "objective {i} {c:e}");
        }
    }
    for (i, v) in &inst.fixed {
        let _ = writeln!(out, "fixed {i} {v:e}");
    }
    for (b, block) in inst.psd_blocks.iter().enumerate() {
        let _ = writeln!(out, "block {b} {}", block.dim);
    }
    for (b, block) in inst.psd_blocks.iter().enumerate() {
        for e in &block.entries {
            let var = e.var.map_or(-1, |v| v as i64);
            let _ = writeln!(out, "entry {b} {} {} {var} {:e}", e.row, e.col, e.coeff);
        }
    }
    for (s, f) in inst.scalar_ineqs.iter().enumerate() {
        let _ = writeln!(out, "scalar {s} {:e}", f.constant);
        for (i, c) in &f.coeffs {
            let _ = writeln!(out, "scalar_coeff {s} {i} {c:e}");
        }
    }
    out
}

pub fn read_dump(text: &str) -> Result<SdpInstance> {
    let mut inst: Option<SdpInstance> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse(format!("line {}: {m}: `{raw}`", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |k: usize| -> Result<f64> {
            fields
                .get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| err("expected a number"))
        };
        let idx = |k: usize| -> Result<usize> {
            fields
                .get(k)
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| err("expected an index"))
        };
        if fields[0] == "vars" {
            inst = Some(SdpInstance::new(idx(1)?));
            continue;
        }
        let inst = inst.as_mut().ok_or_else(|| err("`vars` must come first"))?;
        match fields[0] {
            "objective_constant" => inst.objective_constant = num(1)?,
            "objective" => {
                let i = idx(1)?;
                *inst.objective.get_mut(i).ok_or_else(|| err("variable out of range"))? = num(2)?;
            }
            "fixed" => inst.fixed.push((idx(1)?, num(2)?)),
            "block" => {
                let b = idx(1)?;
                if b != inst.psd_blocks.len() {
                    return Err(err("blocks must be declared in order"));
                }
                inst.psd_blocks.push(PsdBlock::new(idx(2)?));
            }
            "entry" => {
                let b = idx(1)?;
                let var = fields
                    .get(4)
                    .and_then(|s| s.parse::<i64>().ok())
                    .ok_or_else(|| err("expected a variable index"))?;
                let entry = BlockEntry {
                    row: idx(2)?,
                    col: idx(3)?,
                    var: usize::try_from(var).ok(),
                    coeff: num(5)?,
                };
                inst.psd_blocks
                    .get_mut(b)
                    .ok_or_else(|| err("undeclared block"))?
                    .entries
                    .push(entry);
            }
            "scalar" => {
                let s = idx(1)?;
                if s != inst.scalar_ineqs.len() {
                    return Err(err("scalars must be declared in order"));
                }
                inst.scalar_ineqs.push(AffineForm {
                    constant: num(2)?,
                    coeffs: Vec::new(),
                });
            }
            "scalar_coeff" => {
                let s = idx(1)?;
                let pair = (idx(2)?, num(3)?);
                inst.scalar_ineqs
                    .get_mut(s)
                    .ok_or_else(|| err("undeclared scalar"))?
                    .coeffs
                    .push(pair);
            }
            _ => return Err(err("unknown record")),
        }
    }
    let inst = inst.ok_or_else(|| Error::Parse("missing `vars` record".into()))?;
    inst.validate()?;
    Ok(inst)
}
