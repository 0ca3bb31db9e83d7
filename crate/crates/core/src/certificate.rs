//! Rank tests, atom extraction and SOS certificates for solved relaxations.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{moment_matrix, MomentVector};
use crate::poly::{Exponent, Polynomial};
use crate::relax::{ConstraintRole, Family, Relaxation};
use crate::sdp::{SdpSolution, SolveStatus};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-4;

/// Number of eigenvalues above `tol_rel · max(λ_max, 1)`.
pub fn numeric_rank(matrix: &DMatrix<f64>, tol_rel: f64) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let cutoff = tol_rel * eig.eigenvalues.max().max(1.0);
    eig.eigenvalues.iter().filter(|&&l| l > cutoff).count()
}

/// Ranks of `M_t(y)` for `t = 0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub ranks: Vec<(usize, usize)>,
    /// Smallest `t ∈ [k0, k]` with `rank M_t = rank M_{t−k0}`, if any.
    pub flat_at: Option<usize>,
}

pub fn rank_profile(y: &MomentVector, k: usize, k0: usize, tol_rel: f64) -> Result<RankProfile> {
    if 2 * k > y.order() {
        return Err(Error::OrderTooSmall {
            need: 2 * k,
            have: y.order(),
        });
    }
    let mut ranks = Vec::with_capacity(k + 1);
    for t in 0..=k {
        ranks.push((t, numeric_rank(&moment_matrix(y, t)?, tol_rel)));
    }
    let flat_at = (k0.max(1)..=k).find(|&t| ranks[t].1 == ranks[t - k0.max(1)].1);
    Ok(RankProfile { ranks, flat_at })
}

/// Smallest `t ∈ [k0, k]` with `rank M_t(y) = rank M_{t−k0}(y)`.
pub fn check_flat_truncation(y: &MomentVector, k: usize, k0: usize, tol_rel: f64) -> Option<usize> {
    rank_profile(y, k, k0, tol_rel).ok()?.flat_at
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    pub rank_tol: f64,
    /// Pivot threshold for the column echelon form, relative to `max |V_ij|`.
    pub pivot_tol: f64,
    pub seed: u64,
    /// Fresh random combinations tried after the first one fails.
    pub retries: usize,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            rank_tol: DEFAULT_RANK_TOL,
            pivot_tol: 1e-6,
            seed: 0x5eed,
            retries: 3,
        }
    }
}

/// Atoms of the measure represented by `y` at a flat order `t`.
pub fn extract_atoms(y: &MomentVector, t: usize, k0: usize) -> Result<Vec<Vec<f64>>> {
    extract_atoms_with(y, t, k0, &ExtractionOptions::default())
}

pub fn extract_atoms_with(
    y: &MomentVector,
    t: usize,
    k0: usize,
    opts: &ExtractionOptions,
) -> Result<Vec<Vec<f64>>> {
    if t < k0.max(1) {
        return Err(Error::ExtractionFailed(format!("order t = {t} is below k0 = {k0}")));
    }
    let mt = moment_matrix(y, t)?;
    let eig = SymmetricEigen::new(mt.clone());
    let cutoff = opts.rank_tol * eig.eigenvalues.max().max(1.0);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > cutoff).count();
    if rank == 0 {
        return Err(Error::ExtractionFailed("moment matrix has rank 0".into()));
    }
    if rank == 1 {
        return Ok(vec![y.first_moments()]);
    }

    // M_t = V Vᵀ with V of width `rank`
    let s = mt.nrows();
    let mut v = DMatrix::zeros(s, rank);
    for (c, &i) in order[..rank].iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        v.set_column(c, &(eig.eigenvectors.column(i) * scale));
    }

    let (u, pivots) = column_echelon(v, opts.pivot_tol)?;
    let basis = y.basis();
    let monos = &basis.monomials()[..s];
    let n = y.nvars();

    // multiplication matrices: row j of N_i is the row of U at monomial x_i · w_j
    let mut mult = Vec::with_capacity(n);
    for i in 0..n {
        let mut ni = DMatrix::zeros(rank, rank);
        for (j, &p) in pivots.iter().enumerate() {
            let shifted = monos[p].add(&Exponent::unit(n, i));
            let row = monos.iter().position(|m| *m == shifted).ok_or_else(|| {
                Error::ExtractionFailed(format!(
                    "shifted monomial {shifted:?} lies outside the order-{t} basis"
                ))
            })?;
            ni.set_row(j, &u.row(row));
        }
        mult.push(ni);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last_err = None;
    for _ in 0..=opts.retries {
        let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        match joint_eigenvalues(&mult, &weights) {
            Ok(mut atoms) => {
                atoms.sort_by(|a, b| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                return Ok(atoms);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

/// Reduces `v` to column echelon form with unit rows at the returned pivot rows.
fn column_echelon(mut v: DMatrix<f64>, pivot_tol: f64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let (s, r) = v.shape();
    let tol = pivot_tol * v.amax();
    let mut pivots = Vec::with_capacity(r);
    let mut col = 0;
    for row in 0..s {
        if col == r {
            break;
        }
        let (jmax, vmax) = (col..r)
            .map(|j| (j, v[(row, j)].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if vmax <= tol {
            for j in col..r {
                v[(row, j)] = 0.0;
            }
            continue;
        }
        v.swap_columns(col, jmax);
        let p = v[(row, col)];
        let pc = v.column(col) / p;
        v.set_column(col, &pc);
        for j in 0..r {
            if j != col {
                let f = v[(row, j)];
                if f != 0.0 {
                    let updated = v.column(j) - &pc * f;
                    v.set_column(j, &updated);
                }
            }
        }
        pivots.push(row);
        col += 1;
    }
    if col < r {
        return Err(Error::ExtractionFailed(format!(
            "column echelon form found {col} pivots for rank {r}"
        )));
    }
    Ok((v, pivots))
}

/// Common eigenvectors via the real Schur form of a random combination.
fn joint_eigenvalues(mult: &[DMatrix<f64>], weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    let r = mult[0].nrows();
    let mut combo = DMatrix::zeros(r, r);
    for (m, w) in mult.iter().zip(weights) {
        combo += m * *w;
    }
    let scale = combo.amax().max(1.0);
    let (q, tri) = Schur::try_new(combo, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::ExtractionFailed("Schur decomposition did not converge".into()))?
        .unpack();
    for j in 0..r.saturating_sub(1) {
        if tri[(j + 1, j)].abs() > 1e-8 * scale {
            return Err(Error::ExtractionFailed("complex eigenvalues in the shift combination".into()));
        }
    }
    let diag: Vec<f64> = (0..r).map(|j| tri[(j, j)]).collect();
    for a in 0..r {
        for b in a + 1..r {
            if (diag[a] - diag[b]).abs() < 1e-6 * scale {
                return Err(Error::ExtractionFailed("repeated eigenvalues in the shift combination".into()));
            }
        }
    }
    Ok((0..r)
        .map(|j| {
            let qj = q.column(j);
            mult.iter().map(|m| qj.dot(&(m * qj))).collect()
        })
        .collect())
}

/// An SOS polynomial `wᵀ G w` over the monomial vector `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramPolynomial {
    pub basis: Vec<Exponent>,
    pub dim: usize,
    /// `G` in row-major order.
    pub gram: Vec<f64>,
}

impl GramPolynomial {
    pub fn new(basis: Vec<Exponent>, gram: &DMatrix<f64>) -> Self {
        let dim = basis.len();
        assert_eq!(gram.shape(), (dim, dim), "Gram matrix must match the basis");
        GramPolynomial {
            basis,
            dim,
            gram: gram.transpose().as_slice().to_vec(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.gram)
    }

    pub fn to_polynomial(&self, nvars: usize) -> Polynomial {
        let g = self.matrix();
        let mut terms = Vec::with_capacity(self.dim * self.dim);
        for a in 0..self.dim {
            for b in 0..self.dim {
                terms.push((self.basis[a].add(&self.basis[b]), g[(a, b)]));
            }
        }
        Polynomial::from_terms(nvars, terms)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix()).eigenvalues.min()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.gram[i * self.dim + i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Multiplier {
    Sos(GramPolynomial),
    Scalar(f64),
}

/// One term `multiplier · localizer` of the certificate's right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateTerm {
    pub role: ConstraintRole,
    /// The nonnegative-on-`K_z` polynomial (`−g_i`, `f_j(z) − f_j`, `λᵀf(z) − λᵀf`).
    pub localizer: Polynomial,
    pub multiplier: Multiplier,
}

/// `λᵀf − γ = σ₀ + Σ multiplier · localizer`, with the achieved coefficient residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCertificate {
    pub family: Family,
    pub order: usize,
    pub gamma: f64,
    pub sigma0: GramPolynomial,
    pub terms: Vec<CertificateTerm>,
    /// Max-norm of the coefficients of `λᵀf − γ − RHS`.
    pub residual: f64,
    pub tolerance: f64,
    pub min_gram_eigenvalue: f64,
}

impl SosCertificate {
    pub fn right_hand_side(&self, nvars: usize) -> Polynomial {
        let mut rhs = self.sigma0.to_polynomial(nvars);
        for t in &self.terms {
            let m = match &t.multiplier {
                Multiplier::Sos(g) => g.to_polynomial(nvars),
                Multiplier::Scalar(s) => Polynomial::constant(nvars, *s),
            };
            rhs = &rhs + &(&m * &t.localizer);
        }
        rhs
    }

    /// Recomputes the identity residual against `objective = λᵀf`.
    pub fn identity_residual(&self, objective: &Polynomial) -> f64 {
        let n = objective.nvars();
        let lhs = objective - &Polynomial::constant(n, self.gamma);
        (&lhs - &self.right_hand_side(n)).max_abs_coeff()
    }

    pub fn grams(&self) -> impl Iterator<Item = &GramPolynomial> {
        std::iter::once(&self.sigma0).chain(self.terms.iter().filter_map(|t| match &t.multiplier {
            Multiplier::Sos(g) => Some(g),
            Multiplier::Scalar(_) => None,
        }))
    }

    pub fn scalar_multipliers(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().filter_map(|t| match t.multiplier {
            Multiplier::Scalar(s) => Some(s),
            Multiplier::Sos(_) => None,
        })
    }
}

/// Default certificate tolerance, relative to `1 + max |coeff(λᵀf)|`.
pub const DEFAULT_CERT_TOL: f64 = 1e-5;

/// Maps the solver's multipliers onto Gram matrices and checks the SOS identity.
///
/// Fails with [`Error::CertificateRejected`] when the coefficient residual exceeds
/// `tol_rel · (1 + max |coeff(λᵀf)|)` or a multiplier leaves its cone by more than
/// `1e−7 · (1 + trace)`.
pub fn recover_certificate(relax: &Relaxation, sol: &SdpSolution, tol_rel: f64) -> Result<SosCertificate> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(sol.status));
    }
    if sol.dual_psd.len() != relax.blocks.len() || sol.dual_scalar.len() != relax.scalars.len() {
        return Err(Error::InvalidInstance("multipliers do not match the relaxation".into()));
    }
    let monos = relax.basis.monomials();
    let gram_of = |order: usize, x: &DMatrix<f64>| {
        let len = relax.basis.prefix_len(order);
        let mut g = x.clone();
        g += x.transpose();
        g *= 0.5;
        GramPolynomial::new(monos[..len].to_vec(), &g)
    };

    let mut sigma0 = None;
    let mut terms = Vec::new();
    for (loc, x) in relax.blocks.iter().zip(&sol.dual_psd) {
        let g = gram_of(loc.order, x);
        if loc.role == ConstraintRole::Moment {
            sigma0 = Some(g);
        } else {
            terms.push(CertificateTerm {
                role: loc.role,
                localizer: loc.poly.clone(),
                multiplier: Multiplier::Sos(g),
            });
        }
    }
    for (loc, w) in relax.scalars.iter().zip(&sol.dual_scalar) {
        terms.push(CertificateTerm {
            role: loc.role,
            localizer: loc.poly.clone(),
            multiplier: Multiplier::Scalar(*w),
        });
    }
    let sigma0 = sigma0.ok_or_else(|| Error::InvalidInstance("relaxation has no moment block".into()))?;

    let tolerance = tol_rel * (1.0 + relax.objective.max_abs_coeff());
    let mut cert = SosCertificate {
        family: relax.spec.family,
        order: relax.spec.order,
        gamma: sol.dual_objective,
        sigma0,
        terms,
        residual: 0.0,
        tolerance,
        min_gram_eigenvalue: 0.0,
    };
    cert.residual = cert.identity_residual(&relax.objective);
    cert.min_gram_eigenvalue = cert.grams().map(GramPolynomial::min_eigenvalue).fold(f64::INFINITY, f64::min);

    if cert.residual.is_nan() || cert.residual > tolerance {
        return Err(Error::CertificateRejected {
            residual: cert.residual,
            tolerance,
        });
    }
    for g in cert.grams() {
        let floor = -1e-7 * (1.0 + g.trace());
        if g.min_eigenvalue() < floor {
            return Err(Error::CertificateRejected {
                residual: -g.min_eigenvalue(),
                tolerance: -floor,
            });
        }
    }
    if let Some(s) = cert.scalar_multipliers().find(|&s| s < -1e-7) {
        return Err(Error::CertificateRejected {
            residual: -s,
            tolerance: 1e-7,
        });
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::dirac_moments;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rank_examples() {
        assert_eq!(numeric_rank(&DMatrix::identity(3, 3), 1e-4), 3);
        let y = MomentVector::new(2, 2, vec![1.0, 1.75, 0.25, 3.0625, 0.4375, 0.0625]).unwrap();
        assert_eq!(numeric_rank(&moment_matrix(&y, 1).unwrap(), 1e-4), 1);

        // ½(v(a)v(a)ᵀ + v(b)v(b)ᵀ) with a = (0,0), b = (1,1)
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let eig = SymmetricEigen::new(m.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-12);
        assert!(ev[1] > 0.1);
        assert_eq!(numeric_rank(&m, 1e-4), 2);
    }

    #[test]
    fn flat_truncation_examples() {
        let y = MomentVector::new(2, 2, vec![1.0, 1.75, 0.25, 3.0625, 0.4375, 0.0625]).unwrap();
        assert_eq!(check_flat_truncation(&y, 1, 1, 1e-4), Some(1));
        let d = dirac_moments(&[0.3, -0.7], 6);
        assert_eq!(check_flat_truncation(&d, 3, 2, 1e-4), Some(2));

        let two = MomentVector::mixture(&[
            (0.5, dirac_moments(&[0.0, 0.0], 4)),
            (0.5, dirac_moments(&[2.0, 1.0], 4)),
        ])
        .unwrap();
        let prof = rank_profile(&two, 2, 1, 1e-4).unwrap();
        assert_eq!(prof.ranks, vec![(0, 1), (1, 2), (2, 2)]);
        assert_eq!(prof.flat_at, Some(2));
    }

    #[test]
    fn extraction_examples() {
        let y = MomentVector::new(2, 2, vec![1.0, 1.75, 0.25, 3.0625, 0.4375, 0.0625]).unwrap();
        assert_eq!(extract_atoms(&y, 1, 1).unwrap(), vec![vec![1.75, 0.25]]);

        let two = MomentVector::mixture(&[
            (0.5, dirac_moments(&[0.0, 0.0], 4)),
            (0.5, dirac_moments(&[2.0, 1.0], 4)),
        ])
        .unwrap();
        let atoms = extract_atoms(&two, 2, 1).unwrap();
        assert_eq!(atoms.len(), 2);
        for (got, want) in atoms.iter().zip([[0.0, 0.0], [2.0, 1.0]]) {
            for (g, w) in got.iter().zip(want) {
                assert_abs_diff_eq!(*g, w, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn extraction_of_three_atoms_in_three_variables() {
        let pts = [[1.0, -0.5, 0.2], [-0.3, 0.8, 1.1], [0.6, 0.4, -0.9]];
        let parts: Vec<(f64, MomentVector)> = pts
            .iter()
            .zip([0.2, 0.3, 0.5])
            .map(|(p, w)| (w, dirac_moments(p, 6)))
            .collect();
        let y = MomentVector::mixture(&parts).unwrap();
        let t = check_flat_truncation(&y, 3, 1, 1e-6).unwrap();
        let atoms = extract_atoms(&y, t, 1).unwrap();
        assert_eq!(atoms.len(), 3);
        for p in pts {
            assert!(atoms
                .iter()
                .any(|a| a.iter().zip(p).all(|(x, y)| (x - y).abs() < 1e-6)));
        }
    }

    #[test]
    fn extraction_rejects_bad_order() {
        let y = dirac_moments(&[1.0], 2);
        assert!(matches!(extract_atoms(&y, 0, 1), Err(Error::ExtractionFailed(_))));
    }
}
