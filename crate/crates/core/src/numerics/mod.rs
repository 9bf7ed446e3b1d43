//! Dense complex linear algebra used throughout the crate.
//!
//! Factorizations are delegated to `nalgebra`; this module adds the
//! conventions the rest of the library relies on (rank truncation, phase
//! normalization, PSD thresholds).

mod perron;
mod qp;
mod rng;

pub use perron::dominant_eig_nonneg;
pub use qp::{solve_qp_nonneg, solve_qp_nonneg_enumerate};
pub use rng::{cscg_matrix, SplitMix64};

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Relative rank tolerance for truncated SVDs.
pub const RANK_TOL: f64 = 1e-12;
/// Relative PSD floor (scaled by trace/dim).
pub const PSD_FLOOR: f64 = 1e-10;
/// Condition estimate above which a linear system is reported singular.
pub const COND_LIMIT: f64 = 1e12;

/// Build a matrix from row-major entries, rejecting empty shapes and
/// non-finite values.
pub fn complex_matrix(rows: usize, cols: usize, entries: &[C64]) -> Result<CMat> {
    if rows == 0 || cols == 0 {
        return Err(Error::Empty(format!("{rows}x{cols} matrix")));
    }
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = CMat::from_row_slice(rows, cols, entries);
    check_finite(&m, "matrix")?;
    Ok(m)
}

pub fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// (M + M†)/2.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Validate near-hermitian input and return its symmetrized copy.
pub fn hermitian(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, "hermitian matrix")?;
    let asym = max_abs(&(m - m.adjoint()));
    if asym > 1e-10 * (1.0 + max_abs(m)) {
        return Err(Error::NotHermitian(asym));
    }
    Ok(hermitian_part(m))
}

/// Validate a PSD matrix (hermitian, min eigenvalue above the trace floor).
pub fn psd(m: &CMat) -> Result<CMat> {
    let h = hermitian(m)?;
    hermitian_sqrt(&h, PSD_FLOOR)?;
    Ok(h)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::identity(n, n) * C64::new(s, 0.0)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Real part of the trace.
pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// Re Tr(A B) without forming the product.
pub fn trace_prod_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

/// Real inner product Re Tr(A† B) = Σ Re(conj(a) b).
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// M^{1/2} and the pseudo-inverse square root of a hermitian PSD matrix.
///
/// Eigenvalues below `-floor·trace/dim` raise `NotPsd`; only eigenvalues
/// above that threshold are inverted.
pub fn hermitian_sqrt(m: &CMat, psd_floor: f64) -> Result<(CMat, CMat)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("square root of non-square matrix".into()));
    }
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let vals = &eig.eigenvalues;
    let trace: f64 = vals.iter().sum();
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = (psd_floor * trace.abs() / n as f64 + 64.0 * f64::EPSILON * scale).max(f64::MIN_POSITIVE);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -threshold {
        return Err(Error::NotPsd { min, threshold });
    }
    let u = &eig.eigenvectors;
    let root_diag: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let inv_diag: Vec<f64> = vals
        .iter()
        .map(|&v| if v > threshold { 1.0 / v.sqrt() } else { 0.0 })
        .collect();
    Ok((reassemble(u, &root_diag), reassemble(u, &inv_diag)))
}

/// U diag(d) U†.
pub fn reassemble(u: &CMat, d: &[f64]) -> CMat {
    let mut scaled = u.clone();
    for (j, &dj) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(dj);
    }
    hermitian_part(&(scaled * u.adjoint()))
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues descending.
pub fn eigh_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Largest eigenvalue of a hermitian matrix.
pub fn lambda_max(m: &CMat) -> f64 {
    hermitian_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Inverse of a hermitian positive definite matrix.
pub fn inv_pd(m: &CMat) -> Result<CMat> {
    let h = hermitian_part(m);
    match h.clone().cholesky() {
        Some(c) => Ok(hermitian_part(&c.inverse())),
        None => Err(Error::NotPd),
    }
}

/// log det of a hermitian positive definite matrix.
pub fn logdet_pd(m: &CMat) -> Result<f64> {
    let h = hermitian_part(m);
    let c = h.cholesky().ok_or(Error::NotPd)?;
    let l = c.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Truncated SVD `M = U diag(s) V†` with descending singular values.
///
/// Singular values at or below `rank_tol·s₁` are dropped. Each column of `U`
/// is rotated so its largest-magnitude entry is real positive, with the same
/// rotation applied to `V`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn thin_svd(m: &CMat, rank_tol: f64) -> ThinSvd {
    let (r, c) = m.shape();
    let svd = m.clone().svd(true, true);
    let u_full = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = idx.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let keep: Vec<usize> = idx
        .into_iter()
        .filter(|&i| top > 0.0 && svd.singular_values[i] > rank_tol * top)
        .collect();
    let k = keep.len();
    let mut u = CMat::zeros(r, k);
    let mut v = CMat::zeros(c, k);
    let mut s = Vec::with_capacity(k);
    for (j, &i) in keep.iter().enumerate() {
        s.push(svd.singular_values[i]);
        let mut best = 0;
        for row in 0..r {
            if u_full[(row, i)].norm() > u_full[(best, i)].norm() {
                best = row;
            }
        }
        let p = u_full[(best, i)];
        let rot = if p.norm() > 0.0 { (p / p.norm()).conj() } else { real(1.0) };
        for row in 0..r {
            u[(row, j)] = u_full[(row, i)] * rot;
        }
        for row in 0..c {
            v[(row, j)] = vt[(i, row)].conj() * rot;
        }
    }
    ThinSvd { u, s, v }
}

/// Solve `A x = b` (real, square) with an SVD-based condition check.
pub fn solve_checked(a: &RMat, b: &RVec) -> Result<RVec> {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= COND_LIMIT) {
        return Err(Error::SingularSystem(cond));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularSystem(f64::INFINITY))
}

/// Block-diagonal matrix with the given block sizes and entries from `m`
/// kept only inside the blocks.
pub fn block_mask(m: &CMat, partition: &[usize]) -> CMat {
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    let mut start = 0;
    for &size in partition {
        for i in start..start + size {
            for j in start..start + size {
                out[(i, j)] = m[(i, j)];
            }
        }
        start += size;
    }
    out
}

/// `M` restricted to block `j`: zero except the diagonal block.
pub fn block_selector(partition: &[usize], j: usize) -> CMat {
    let n: usize = partition.iter().sum();
    let start: usize = partition[..j].iter().sum();
    let mut out = CMat::zeros(n, n);
    for i in start..start + partition[j] {
        out[(i, i)] = real(1.0);
    }
    out
}
