//! Dense complex linear algebra used by every solver.
//!
//! Factorizations are backed by nalgebra. This module adds the conventions
//! the solvers rely on: descending order, dropped null directions and a
//! deterministic column phase.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

const HERMITIAN_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-8;

/// `M = Q diag(sqrt(lambda)) U^H` with only the nonzero singular values kept.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub q: CMatrix,
    /// Squared singular values, nonincreasing and strictly positive.
    pub lambda: Vec<f64>,
    pub u: CMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let mut qs = self.q.clone();
        for (j, l) in self.lambda.iter().enumerate() {
            let s = l.sqrt();
            qs.column_mut(j).scale_mut(s);
        }
        qs * self.u.adjoint()
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn real_diag(d: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|&x| c(x, 0.0))))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Scale every column so its first non-negligible entry is real and positive.
/// The same phases are returned so paired factors can be rotated consistently.
fn fix_phases(m: &mut CMatrix) -> Vec<Complex64> {
    let mut phases = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let norm = m.column(j).norm();
        let lead = m
            .column(j)
            .iter()
            .copied()
            .find(|z| z.norm() > 1e-10 * norm.max(f64::MIN_POSITIVE));
        let ph = match lead {
            Some(z) => z.conj() / z.norm(),
            None => c(1.0, 0.0),
        };
        for i in 0..m.nrows() {
            m[(i, j)] *= ph;
        }
        phases.push(ph);
    }
    phases
}

/// Thin SVD of a nonzero matrix with the rank cutoff applied.
pub fn svd(m: &CMatrix) -> Result<SvdFactors> {
    let scale = max_abs(m);
    if scale == 0.0 || m.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    let dec = m.clone().svd(true, true);
    let u_full = dec.u.expect("left vectors requested");
    let vt = dec.v_t.expect("right vectors requested");
    let sv = dec.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let smax = sv[order[0]];
    let keep: Vec<usize> = order.into_iter().filter(|&i| sv[i] > RANK_TOL * smax).collect();

    let mut q = CMatrix::zeros(m.nrows(), keep.len());
    let mut u = CMatrix::zeros(m.ncols(), keep.len());
    let mut lambda = Vec::with_capacity(keep.len());
    for (j, &i) in keep.iter().enumerate() {
        q.set_column(j, &u_full.column(i));
        u.set_column(j, &vt.row(i).adjoint());
        lambda.push(sv[i] * sv[i]);
    }
    let phases = fix_phases(&mut u);
    for (j, ph) in phases.iter().enumerate() {
        for i in 0..q.nrows() {
            q[(i, j)] *= ph;
        }
    }
    Ok(SvdFactors { q, lambda, u })
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues nonincreasing.
pub fn herm_eig(a: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = max_abs(&(a - a.adjoint()));
    if asym > HERMITIAN_TOL * max_abs(a).max(1.0) {
        return Err(Error::NotHermitian(asym));
    }
    Ok(herm_eig_unchecked(&hermitian_part(a)))
}

pub(crate) fn herm_eig_unchecked(a: &CMatrix) -> (CMatrix, Vec<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (CMatrix::zeros(0, 0), Vec::new());
    }
    let dec = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| dec.eigenvalues[y].total_cmp(&dec.eigenvalues[x]));
    let mut v = CMatrix::zeros(n, n);
    let mut d = Vec::with_capacity(n);
    for (j, &i) in order.iter().enumerate() {
        v.set_column(j, &dec.eigenvectors.column(i));
        d.push(dec.eigenvalues[i]);
    }
    fix_phases(&mut v);
    (v, d)
}

/// `I - U U^H` for a matrix with orthonormal columns.
pub fn null_projector(u_sel: &CMatrix) -> Result<CMatrix> {
    let n = u_sel.nrows();
    let k = u_sel.ncols();
    let gram = u_sel.adjoint() * u_sel;
    let dev = max_abs(&(gram - identity(k)));
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(hermitian_part(&(identity(n) - u_sel * u_sel.adjoint())))
}

/// `A^{-1/2}` for a Hermitian positive definite `A`.
pub fn inv_sqrt_psd(a: &CMatrix) -> Result<CMatrix> {
    let (v, d) = herm_eig(a)?;
    let dmin = d.last().copied().unwrap_or(0.0);
    if dmin <= 0.0 || dmin <= 1e-15 * d[0].abs() {
        return Err(Error::NotPositiveDefinite(dmin));
    }
    let w: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    Ok(hermitian_part(&(&v * real_diag(&w) * v.adjoint())))
}

/// Orthonormal basis (as columns) of the vectors annihilated by every row of `m`.
pub fn kernel_basis(m: &CMatrix) -> CMatrix {
    let n = m.ncols();
    let rank = svd(m).map(|f| f.rank()).unwrap_or(0);
    if rank == 0 {
        return identity(n);
    }
    let (v, _) = herm_eig_unchecked(&hermitian_part(&(m.adjoint() * m)));
    v.columns(rank, n - rank).into_owned()
}

/// Natural log of the determinant of a Hermitian positive definite matrix.
pub fn ln_det_hpd(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    match Cholesky::new(hermitian_part(a)) {
        Some(ch) => {
            let l = ch.l_dirty();
            2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
        }
        None => {
            let (_, d) = herm_eig_unchecked(&hermitian_part(a));
            d.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).sum()
        }
    }
}

/// `log2 det(I + H S H^H)`.
pub fn log2_det_i_plus(h: &CMatrix, s: &CMatrix) -> f64 {
    let m = identity(h.nrows()) + h * s * h.adjoint();
    (ln_det_hpd(&m) / std::f64::consts::LN_2).max(0.0)
}
