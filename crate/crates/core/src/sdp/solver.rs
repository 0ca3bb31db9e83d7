//! Infeasible primal-dual path-following method (HKM direction, Mehrotra
//! predictor-corrector) on dense blocks.
//!
//! Internally the moment problem is put in the form
//!
//! ```text
//!   min  cᵀy + c₀     s.t.  S_b = A0_b + Σ yᵢ A_bi ⪰ 0
//!   max  c₀ − Σ⟨A0_b, X_b⟩  s.t.  Σ_b ⟨A_bi, X_b⟩ = cᵢ,  X_b ⪰ 0
//! ```
//!
//! after eliminating pinned variables and turning each scalar inequality
//! `a₀ + aᵀy ≤ 0` into a 1×1 block `−a₀ − aᵀy ⪰ 0`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::instance::SdpInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalTrouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub eps_gap: f64,
    pub eps_feas: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_gap: 1e-8,
            eps_feas: 1e-8,
            max_iter: 200,
        }
    }
}

/// Certificate attached to `Infeasible` / `Unbounded` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InfeasibilityRay {
    /// Multipliers with `Σ⟨A_i, X⟩ ≈ 0` and `−⟨A₀, X⟩ = 1`: the moment problem has no feasible point.
    Dual {
        psd: Vec<DMatrix<f64>>,
        scalar: Vec<f64>,
    },
    /// Direction `d` (pinned entries zero) with `Σ dᵢ Aᵢ ⪰ 0` and `cᵀd = −1`.
    Primal { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Moment vector including pinned entries.
    pub y: Vec<f64>,
    /// `cᵀy + c₀`.
    pub objective: f64,
    /// `c₀ − Σ⟨A0_b, X_b⟩`, a lower bound on `objective` up to the dual residual.
    pub dual_objective: f64,
    /// PSD multiplier of each `psd_blocks` entry.
    pub dual_psd: Vec<DMatrix<f64>>,
    /// Nonnegative multiplier of each scalar inequality.
    pub dual_scalar: Vec<f64>,
    /// `|objective − dual_objective|`.
    pub gap: f64,
    /// Relative residual of the block equations `S = A₀ + Σ yᵢAᵢ`.
    pub primal_residual: f64,
    /// Relative residual of `Σ⟨Aᵢ, X⟩ = cᵢ`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub ray: Option<InfeasibilityRay>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Largest of the relative gap and the two relative residuals.
    pub fn accuracy(&self) -> f64 {
        (self.gap / (1.0 + self.objective.abs()))
            .max(self.primal_residual)
            .max(self.dual_residual)
    }
}

type Triplets = Vec<(usize, usize, f64)>;

struct StdBlock {
    dim: usize,
    a0: DMatrix<f64>,
    /// (free variable, full symmetric triplets of A_i)
    vars: Vec<(usize, Triplets)>,
}

struct StdForm {
    c: DVector<f64>,
    c0: f64,
    blocks: Vec<StdBlock>,
    free: Vec<usize>,
    fixed_values: Vec<Option<f64>>,
    psd_count: usize,
}

impl StdForm {
    fn new(inst: &SdpInstance) -> StdForm {
        let mut fixed_values = vec![None; inst.var_count];
        for &(i, v) in &inst.fixed {
            fixed_values[i] = Some(v);
        }
        let free: Vec<usize> = (0..inst.var_count).filter(|&i| fixed_values[i].is_none()).collect();
        let mut free_pos = vec![usize::MAX; inst.var_count];
        for (k, &i) in free.iter().enumerate() {
            free_pos[i] = k;
        }

        let mut c0 = inst.objective_constant;
        for &(i, v) in &inst.fixed {
            c0 += inst.objective[i] * v;
        }
        let c = DVector::from_iterator(free.len(), free.iter().map(|&i| inst.objective[i]));

        let mut blocks = Vec::new();
        // (row, col, var, coeff) iterator per block; scalar forms are negated 1x1 blocks
        let mut push_block = |dim: usize, entries: &mut dyn Iterator<Item = (usize, usize, Option<usize>, f64)>| {
            let mut a0 = DMatrix::zeros(dim, dim);
            let mut per_var: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
            for (r, cidx, var, coeff) in entries {
                let constant = match var {
                    None => Some(coeff),
                    Some(v) => fixed_values[v].map(|fv| fv * coeff),
                };
                match constant {
                    Some(val) => {
                        a0[(r, cidx)] += val;
                        if r != cidx {
                            a0[(cidx, r)] += val;
                        }
                    }
                    None => {
                        let v = var.unwrap();
                        *per_var.entry(free_pos[v]).or_default().entry((r, cidx)).or_insert(0.0) += coeff;
                    }
                }
            }
            let vars = per_var
                .into_iter()
                .filter_map(|(k, m)| {
                    let mut t = Vec::new();
                    for ((r, cidx), v) in m {
                        if v == 0.0 {
                            continue;
                        }
                        t.push((r, cidx, v));
                        if r != cidx {
                            t.push((cidx, r, v));
                        }
                    }
                    (!t.is_empty()).then_some((k, t))
                })
                .collect();
            blocks.push(StdBlock { dim, a0, vars });
        };
        for b in &inst.psd_blocks {
            push_block(
                b.dim,
                &mut b.entries.iter().map(|e| (e.row, e.col, e.var, e.coeff)),
            );
        }
        for f in &inst.scalar_ineqs {
            push_block(
                1,
                &mut std::iter::once((0, 0, None, -f.constant))
                    .chain(f.coeffs.iter().map(|&(i, a)| (0, 0, Some(i), -a))),
            );
        }
        StdForm {
            c,
            c0,
            blocks,
            free,
            fixed_values,
            psd_count: inst.psd_blocks.len(),
        }
    }

    fn m(&self) -> usize {
        self.free.len()
    }

    fn barrier_dim(&self) -> f64 {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() as f64
    }

    /// Σ yᵢ A_bi (without the constant part).
    fn apply_linear(&self, b: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let blk = &self.blocks[b];
        let mut m = DMatrix::zeros(blk.dim, blk.dim);
        for (i, t) in &blk.vars {
            let yi = y[*i];
            if yi == 0.0 {
                continue;
            }
            for &(r, c, v) in t {
                m[(r, c)] += v * yi;
            }
        }
        m
    }

    /// (⟨A_i, M_b⟩)_i summed over blocks.
    fn adjoint(&self, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (blk, mat) in self.blocks.iter().zip(mats) {
            for (i, t) in &blk.vars {
                out[*i] += t.iter().map(|&(r, c, v)| v * mat[(r, c)]).sum::<f64>();
            }
        }
        out
    }

    /// H_ij = Σ_b tr(A_bi X_b A_bj S_b⁻¹).
    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut h = DMatrix::zeros(m, m);
        for ((blk, xb), sb) in self.blocks.iter().zip(x).zip(sinv) {
            for (p, (i, ti)) in blk.vars.iter().enumerate() {
                for (j, tj) in blk.vars[p..].iter() {
                    let mut acc = 0.0;
                    for &(a, bb, v) in ti {
                        for &(c, d, w) in tj {
                            acc += v * w * xb[(bb, c)] * sb[(d, a)];
                        }
                    }
                    h[(*i, *j)] += acc;
                    if i != j {
                        h[(*j, *i)] += acc;
                    }
                }
            }
        }
        h
    }

    /// G_ij = Σ_b ⟨A_bi, A_bj⟩, used to project steps back onto `Σ⟨Aᵢ, X⟩ = cᵢ`.
    fn gram(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut g = DMatrix::zeros(m, m);
        for blk in &self.blocks {
            let dense: Vec<(usize, DMatrix<f64>)> = blk
                .vars
                .iter()
                .map(|(i, t)| {
                    let mut a = DMatrix::zeros(blk.dim, blk.dim);
                    for &(r, c, v) in t {
                        a[(r, c)] += v;
                    }
                    (*i, a)
                })
                .collect();
            for (p, (i, ai)) in dense.iter().enumerate() {
                for (j, aj) in &dense[p..] {
                    let v = inner(ai, aj);
                    g[(*i, *j)] += v;
                    if i != j {
                        g[(*j, *i)] += v;
                    }
                }
            }
        }
        g
    }

    fn assemble_y(&self, yfree: &DVector<f64>) -> Vec<f64> {
        let mut y: Vec<f64> = self.fixed_values.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &i) in self.free.iter().enumerate() {
            y[i] = yfree[k];
        }
        y
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Largest α with `x + α·dx ⪰ 0` (infinite if `dx` never leaves the cone).
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let mut m = &linv * dx * linv.transpose();
    symmetrize(&mut m);
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Iterate {
    y: DVector<f64>,
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        (self.gap / (1.0 + self.pobj.abs())).max(self.pinf).max(self.dinf)
    }
}

/// Solves `inst`; see the module docs for the internal form and the returned status contract.
pub fn solve(inst: &SdpInstance, opts: &SolverOptions) -> Result<SdpSolution> {
    inst.validate()?;
    let sf = StdForm::new(inst);
    let m = sf.m();
    let nb = sf.blocks.len();

    // a free variable that touches no block is either irrelevant or unbounded
    let mut touched = vec![false; m];
    for blk in &sf.blocks {
        for (i, _) in &blk.vars {
            touched[*i] = true;
        }
    }
    if let Some(i) = (0..m).find(|&i| !touched[i] && sf.c[i] != 0.0) {
        let mut dir = vec![0.0; inst.var_count];
        dir[sf.free[i]] = -sf.c[i].signum() / sf.c[i].abs();
        return Ok(trivial_unbounded(inst, &sf, dir));
    }

    let a0_norm = sf.blocks.iter().map(|b| frob(&b.a0)).fold(0.0, f64::max);
    let c_norm = sf.c.norm();
    let a_norm_max = sf
        .blocks
        .iter()
        .flat_map(|b| b.vars.iter().map(|(_, t)| t.iter().map(|x| x.2 * x.2).sum::<f64>().sqrt()))
        .fold(0.0, f64::max);

    let mut it = {
        let mut x = Vec::with_capacity(nb);
        let mut s = Vec::with_capacity(nb);
        for blk in &sf.blocks {
            let sq = (blk.dim as f64).sqrt();
            let xi = 10f64.max(sq).max(sq * (1.0 + c_norm) / (1.0 + a_norm_max));
            let eta = 10f64.max(sq).max(a0_norm).max(a_norm_max);
            x.push(DMatrix::identity(blk.dim, blk.dim) * xi);
            s.push(DMatrix::identity(blk.dim, blk.dim) * eta);
        }
        Iterate {
            y: DVector::zeros(m),
            x,
            s,
        }
    };

    let nbar = sf.barrier_dim();
    let gram = {
        let mut g = sf.gram();
        for i in 0..m {
            g[(i, i)] += 1e-14 * (1.0 + g[(i, i)]);
        }
        Cholesky::new(g).ok_or_else(|| Error::InvalidInstance("constraint matrices are degenerate".into()))?
    };
    let mut best: Option<(f64, Iterate, Metrics)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut ray = None;
    let mut iterations = 0;
    let mut small_steps = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let lin: Vec<DMatrix<f64>> = (0..nb).map(|b| sf.apply_linear(b, &it.y)).collect();
        let rd: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| &sf.blocks[b].a0 + &lin[b] - &it.s[b])
            .collect();
        let ax = sf.adjoint(&it.x);
        let rp = &sf.c - &ax;
        let pobj = sf.c0 + sf.c.dot(&it.y);
        let a0x: f64 = sf.blocks.iter().zip(&it.x).map(|(b, x)| inner(&b.a0, x)).sum();
        let dobj = sf.c0 - a0x;
        let rd_norm = rd.iter().map(|r| frob(r).powi(2)).sum::<f64>().sqrt();
        let met = Metrics {
            pobj,
            dobj,
            gap: (pobj - dobj).abs(),
            pinf: rd_norm / (1.0 + a0_norm),
            dinf: rp.norm() / (1.0 + c_norm),
        };
        if !met.merit().is_finite() {
            status = SolveStatus::NumericalTrouble;
            break;
        }
        let merit = met.merit();
        let snapshot = || Iterate {
            y: it.y.clone(),
            x: it.x.clone(),
            s: it.s.clone(),
        };
        if best.as_ref().is_none_or(|(b, _, _)| merit < *b) {
            best = Some((merit, snapshot(), Metrics { ..met }));
        }
        if met.gap <= opts.eps_gap * (1.0 + pobj.abs())
            && met.pinf <= opts.eps_feas
            && met.dinf <= opts.eps_feas
        {
            status = SolveStatus::Optimal;
            best = Some((merit, snapshot(), met));
            break;
        }

        // infeasibility rays
        if -a0x > 0.0 && met.pinf > opts.eps_feas {
            let t = -a0x;
            if ax.norm() / t < 1e-9 && t > 1e6 * (1.0 + c_norm) {
                status = SolveStatus::Infeasible;
                ray = Some(InfeasibilityRay::Dual {
                    psd: it.x[..sf.psd_count].iter().map(|x| x / t).collect(),
                    scalar: it.x[sf.psd_count..].iter().map(|x| x[(0, 0)] / t).collect(),
                });
                break;
            }
        }
        let cy = sf.c.dot(&it.y);
        if cy < 0.0 && met.dinf > opts.eps_feas {
            let t = -cy;
            let off = rd
                .iter()
                .zip(&sf.blocks)
                .map(|(r, b)| frob(&(&b.a0 - r)).powi(2))
                .sum::<f64>()
                .sqrt();
            if off / t < 1e-9 && t > 1e6 * (1.0 + a0_norm) {
                status = SolveStatus::Unbounded;
                let mut dir = vec![0.0; inst.var_count];
                for (k, &i) in sf.free.iter().enumerate() {
                    dir[i] = it.y[k] / t;
                }
                ray = Some(InfeasibilityRay::Primal { direction: dir });
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(step) = newton_step(&sf, &gram, &it, &rd, &rp, nbar) else {
            status = SolveStatus::NumericalTrouble;
            break;
        };
        let (ap, ad) = step.lengths;
        for b in 0..nb {
            it.x[b] += &step.dx[b] * ap;
            it.s[b] += &step.ds[b] * ad;
        }
        it.y += &step.dy * ad;
        if ap.max(ad) < 1e-10 {
            small_steps += 1;
            if small_steps >= 3 {
                status = SolveStatus::NumericalTrouble;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    let (_, fin, met) = best.expect("at least one iterate is evaluated");
    let y = sf.assemble_y(&fin.y);
    let objective = inst.objective_value(&y);
    Ok(SdpSolution {
        status,
        objective,
        dual_objective: met.dobj,
        dual_psd: fin.x[..sf.psd_count].to_vec(),
        dual_scalar: fin.x[sf.psd_count..].iter().map(|x| x[(0, 0)]).collect(),
        gap: (objective - met.dobj).abs(),
        primal_residual: met.pinf,
        dual_residual: met.dinf,
        iterations,
        ray,
        y,
    })
}

fn trivial_unbounded(inst: &SdpInstance, sf: &StdForm, direction: Vec<f64>) -> SdpSolution {
    let y = sf.assemble_y(&DVector::zeros(sf.m()));
    SdpSolution {
        status: SolveStatus::Unbounded,
        objective: inst.objective_value(&y),
        dual_objective: f64::NEG_INFINITY,
        dual_psd: inst.psd_blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        dual_scalar: vec![0.0; inst.scalar_ineqs.len()],
        gap: f64::INFINITY,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        iterations: 0,
        ray: Some(InfeasibilityRay::Primal { direction }),
        y,
    }
}

struct Step {
    dy: DVector<f64>,
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    lengths: (f64, f64),
}

fn newton_step(
    sf: &StdForm,
    gram: &Cholesky<f64, Dyn>,
    it: &Iterate,
    rd: &[DMatrix<f64>],
    rp: &DVector<f64>,
    nbar: f64,
) -> Option<Step> {
    let nb = sf.blocks.len();
    let mut xchol = Vec::with_capacity(nb);
    let mut schol = Vec::with_capacity(nb);
    let mut sinv = Vec::with_capacity(nb);
    for b in 0..nb {
        let xc = Cholesky::new(it.x[b].clone())?;
        let sc = Cholesky::new(it.s[b].clone())?;
        let mut si = sc.inverse();
        symmetrize(&mut si);
        xchol.push(xc);
        schol.push(sc);
        sinv.push(si);
    }
    let mu: f64 = it.x.iter().zip(&it.s).map(|(x, s)| inner(x, s)).sum::<f64>() / nbar;

    let h = sf.schur(&it.x, &sinv);
    let hscale = h.diagonal().amax().max(1.0);
    let hfac = match Cholesky::new(h.clone()) {
        Some(c) => c,
        None => {
            let mut hr = h.clone();
            for i in 0..hr.nrows() {
                hr[(i, i)] += 1e-13 * hscale;
            }
            Cholesky::new(hr)?
        }
    };

    // x_rd[b] = X Rd S⁻¹ is shared by predictor and corrector
    let x_rd: Vec<DMatrix<f64>> = (0..nb).map(|b| &it.x[b] * &rd[b] * &sinv[b]).collect();

    let direction = |r: Vec<DMatrix<f64>>| -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let rhs = sf.adjoint(&r) - rp;
        let mut dy = hfac.solve(&rhs);
        // iterative refinement keeps Σ⟨Aᵢ, dX⟩ accurate when H is ill-conditioned
        for _ in 0..2 {
            let res = &rhs - &h * &dy;
            dy += hfac.solve(&res);
        }
        let mut dx = Vec::with_capacity(nb);
        let mut ds = Vec::with_capacity(nb);
        for (b, rb) in r.into_iter().enumerate() {
            let lin = sf.apply_linear(b, &dy);
            let mut d = rb - &it.x[b] * &lin * &sinv[b];
            symmetrize(&mut d);
            dx.push(d);
            ds.push(&rd[b] + lin);
        }
        let defect = rp - sf.adjoint(&dx);
        let w = gram.solve(&defect);
        for (b, d) in dx.iter_mut().enumerate() {
            *d += sf.apply_linear(b, &w);
        }
        (dy, dx, ds)
    };
    let lengths = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| -> (f64, f64) {
        let ap = (0..nb).map(|b| max_step(&xchol[b], &dx[b])).fold(f64::INFINITY, f64::min);
        let ad = (0..nb).map(|b| max_step(&schol[b], &ds[b])).fold(f64::INFINITY, f64::min);
        (ap, ad)
    };

    // predictor
    let r_aff: Vec<DMatrix<f64>> = (0..nb).map(|b| -&it.x[b] - &x_rd[b]).collect();
    let (_, dxa, dsa) = direction(r_aff);
    let (apa, ada) = lengths(&dxa, &dsa);
    let (apa, ada) = (apa.min(1.0), ada.min(1.0));
    let mu_aff: f64 = (0..nb)
        .map(|b| inner(&(&it.x[b] + &dxa[b] * apa), &(&it.s[b] + &dsa[b] * ada)))
        .sum::<f64>()
        / nbar;
    let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(1e-12);

    // corrector
    let r_cor: Vec<DMatrix<f64>> = (0..nb)
        .map(|b| {
            &sinv[b] * (sigma * mu) - &it.x[b] - &x_rd[b] - &dxa[b] * &dsa[b] * &sinv[b]
        })
        .collect();
    let (dy, dx, ds) = direction(r_cor);
    let (ap, ad) = lengths(&dx, &ds);
    let gamma = 0.9 + 0.09 * apa.min(ada);
    let lengths = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
    if !dy.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(Step {
        dy,
        dx,
        ds,
        lengths,
    })
}

/// Outcome of recomputing the dual bound from the returned multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    /// `primal − dual`.
    pub gap: f64,
    /// Max-norm of `c − A*(X)` over the free variables.
    pub stationarity_residual: f64,
    pub holds: bool,
    /// `Optimal` when weak duality holds, `NumericalTrouble` otherwise.
    pub status: SolveStatus,
}

/// Recomputes the dual objective from `sol`'s multipliers and checks
/// `dual ≤ primal + eps_gap·(1 + |primal|)`.
pub fn certify_weak_duality(
    sol: &SdpSolution,
    inst: &SdpInstance,
    eps_gap: f64,
) -> Result<DualityReport> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(sol.status));
    }
    if sol.dual_psd.len() != inst.psd_blocks.len() || sol.dual_scalar.len() != inst.scalar_ineqs.len() {
        return Err(Error::InvalidInstance("multipliers do not match the instance".into()));
    }
    let mut fixed = vec![None; inst.var_count];
    for &(i, v) in &inst.fixed {
        fixed[i] = Some(v);
    }
    // Lagrangian L(y) = cᵀy + c₀ − Σ⟨X_b, B_b(y)⟩ + Σ w_s a_s(y); its value at the pinned
    // point is the dual bound, its gradient in the free variables must vanish.
    let mut dual = inst.objective_constant;
    let mut grad = inst.objective.clone();
    let mut add = |var: Option<usize>, coeff: f64| match var {
        None => dual += coeff,
        Some(v) => match fixed[v] {
            Some(f) => dual += coeff * f,
            None => grad[v] += coeff,
        },
    };
    for &(i, v) in &inst.fixed {
        add(None, inst.objective[i] * v);
    }
    for (block, x) in inst.psd_blocks.iter().zip(&sol.dual_psd) {
        for e in &block.entries {
            let w = if e.row == e.col { x[(e.row, e.col)] } else { 2.0 * x[(e.row, e.col)] };
            add(e.var, -e.coeff * w);
        }
    }
    for (f, w) in inst.scalar_ineqs.iter().zip(&sol.dual_scalar) {
        add(None, w * f.constant);
        for &(i, a) in &f.coeffs {
            add(Some(i), w * a);
        }
    }
    let stationarity_residual = (0..inst.var_count)
        .filter(|&i| fixed[i].is_none())
        .map(|i| grad[i].abs())
        .fold(0.0, f64::max);
    let primal = sol.objective;
    let holds = dual <= primal + eps_gap * (1.0 + primal.abs());
    Ok(DualityReport {
        primal,
        dual,
        gap: primal - dual,
        stationarity_residual,
        holds,
        status: if holds {
            SolveStatus::Optimal
        } else {
            SolveStatus::NumericalTrouble
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{AffineForm, PsdBlock};
    use approx::assert_abs_diff_eq;

    fn two_by_two() -> SdpInstance {
        // minimize y subject to [[1, y], [y, 1]] ⪰ 0
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 1.0;
        let mut b = PsdBlock::new(2);
        b.push(0, 0, None, 1.0);
        b.push(1, 1, None, 1.0);
        b.push(0, 1, Some(0), 1.0);
        inst.psd_blocks.push(b);
        inst
    }

    #[test]
    fn two_by_two_psd() {
        let inst = two_by_two();
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.y[0], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.objective, -1.0, epsilon = 1e-7);
        let rep = certify_weak_duality(&sol, &inst, 1e-8).unwrap();
        assert!(rep.holds);
        assert!(rep.stationarity_residual < 1e-7);
    }

    #[test]
    fn single_scalar_inequality() {
        // minimize y subject to 3 - y <= 0
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 1.0;
        inst.scalar_ineqs.push(AffineForm {
            constant: 3.0,
            coeffs: vec![(0, -1.0)],
        });
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.y[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.dual_scalar[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn slack_only_zero_objective() {
        let mut inst = SdpInstance::new(2);
        inst.fixed.push((0, 1.0));
        let mut b = PsdBlock::new(2);
        b.push(0, 0, Some(0), 1.0);
        b.push(1, 1, None, 1.0);
        b.push(0, 1, Some(1), 0.5);
        inst.psd_blocks.push(b);
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.dual_objective, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn pinned_entries_are_exact() {
        let mut inst = two_by_two();
        inst.var_count = 2;
        inst.objective.push(0.0);
        inst.fixed.push((1, 0.3));
        inst.psd_blocks[0].push(0, 0, Some(1), 1.0);
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.y[1], 0.3);
        // [[1.3, y], [y, 1]] ⪰ 0 ⇒ y ≥ -sqrt(1.3)
        assert_abs_diff_eq!(sol.objective, -(1.3f64).sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // y - 1 >= 0 and -y >= 0
        let mut inst = SdpInstance::new(1);
        inst.scalar_ineqs.push(AffineForm { constant: 1.0, coeffs: vec![(0, -1.0)] });
        inst.scalar_ineqs.push(AffineForm { constant: 0.0, coeffs: vec![(0, 1.0)] });
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        match sol.ray {
            Some(InfeasibilityRay::Dual { scalar, .. }) => {
                // multipliers w with w1 = w2 and w1·1 = 1
                assert_abs_diff_eq!(scalar[0], 1.0, epsilon = 1e-4);
                assert_abs_diff_eq!(scalar[1], 1.0, epsilon = 1e-4);
            }
            other => panic!("unexpected ray {other:?}"),
        }
    }

    #[test]
    fn detects_unboundedness() {
        // minimize y subject to y <= 0
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 1.0;
        inst.scalar_ineqs.push(AffineForm { constant: 0.0, coeffs: vec![(0, 1.0)] });
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
        match sol.ray {
            Some(InfeasibilityRay::Primal { direction }) => {
                assert_abs_diff_eq!(direction[0], -1.0, epsilon = 1e-6)
            }
            other => panic!("unexpected ray {other:?}"),
        }
    }

    #[test]
    fn untouched_variable_with_cost_is_unbounded() {
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 2.0;
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn weak_duality_requires_optimal() {
        let inst = two_by_two();
        let mut sol = solve(&inst, &SolverOptions::default()).unwrap();
        sol.status = SolveStatus::MaxIter;
        assert!(matches!(
            certify_weak_duality(&sol, &inst, 1e-8),
            Err(Error::NotOptimal(SolveStatus::MaxIter))
        ));
    }

    #[test]
    fn corrupted_multiplier_breaks_duality_report() {
        let inst = two_by_two();
        let mut sol = solve(&inst, &SolverOptions::default()).unwrap();
        // inflate the multiplier so the recomputed bound overshoots
        sol.dual_psd[0] *= -3.0;
        let rep = certify_weak_duality(&sol, &inst, 1e-8).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.status, SolveStatus::NumericalTrouble);
    }
}
