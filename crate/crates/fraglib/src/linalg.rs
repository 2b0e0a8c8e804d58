//! Dense real-matrix primitives: pseudoinverse, generalized Schur complement,
//! PSD square roots, Schur-stability and definiteness tests, and quadratic
//! matrix inequality (QMI) membership.

use crate::error::Error;
use crate::Result;
use nalgebra::DMatrix;

/// Default relative singular-value cutoff for pseudoinverse / rank decisions.
pub const PINV_TOL: f64 = 1e-10;

/// Block partition of a symmetric `(q+r) x (q+r)` matrix into a leading
/// `q x q` block and a trailing `r x r` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymPartition {
    pub q: usize,
    pub r: usize,
}

impl SymPartition {
    pub fn new(q: usize, r: usize) -> Self {
        assert!(q >= 1 && r >= 1, "partition blocks must be non-empty");
        SymPartition { q, r }
    }

    pub fn dim(&self) -> usize {
        self.q + self.r
    }
}

/// `(M + M^T)/2`. Solver outputs and accumulated products carry asymmetric
/// round-off; every symmetry-required input goes through this first.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
    (m + m.transpose()) * 0.5
}

/// Moore–Penrose pseudoinverse with a relative rank cutoff.
///
/// Computed from a complete orthogonal decomposition (column-pivoted QR of
/// `M`, then QR of the leading rows of `R` transposed) rather than an SVD —
/// the Householder-only route keeps the Penrose identities at machine
/// precision even on exactly rank-deficient input.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (nr, nc) = m.shape();
    if nr == 0 || nc == 0 {
        return DMatrix::zeros(nc, nr);
    }
    // M Pi = Q R with |R_11| >= |R_22| >= ... by pivoting
    let (q, r, p) = m.clone().col_piv_qr().unpack();
    let kmax = nr.min(nc);
    let dmax = (0..kmax).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if dmax == 0.0 {
        return DMatrix::zeros(nc, nr);
    }
    let cutoff = tol * dmax;
    let rank = (0..kmax)
        .take_while(|&i| r[(i, i)].abs() > cutoff)
        .count()
        .max(1);
    // R1 = R[:rank, :] has full row rank; R1^T = Q2 R2 gives
    // M Pi = Q1 R2^T Q2^T, so (M Pi)^+ = Q2 R2^{-T} Q1^T
    let q1 = q.columns(0, rank).into_owned();
    let qr2 = r.rows(0, rank).transpose().qr();
    let (q2, r2) = (qr2.q(), qr2.r());
    let back = r2
        .transpose()
        .solve_lower_triangular(&q1.transpose())
        .expect("triangular factor is invertible at the chosen rank");
    // M^+ = Pi (M Pi)^+ : the row permutation matching the column pivoting
    let mut res = q2 * back;
    p.inv_permute_rows(&mut res);
    res
}

/// Generalized Schur complement with respect to the trailing block:
/// `Pi_11 - Pi_12 pinv(Pi_22) Pi_21`.
pub fn gen_schur_complement(pi: &DMatrix<f64>, part: SymPartition) -> DMatrix<f64> {
    assert_eq!(pi.nrows(), part.dim(), "partition does not match matrix");
    let pi = symmetrize(pi);
    let (q, r) = (part.q, part.r);
    let p11 = pi.view((0, 0), (q, q)).into_owned();
    let p12 = pi.view((0, q), (q, r)).into_owned();
    let p22 = pi.view((q, q), (r, r)).into_owned();
    let comp = &p11 - &p12 * pinv(&p22, PINV_TOL) * p12.transpose();
    symmetrize(&comp)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Smallest eigenvalue of a symmetric matrix. Rejects inputs that are not
/// symmetric to working precision.
pub fn min_eig(m: &DMatrix<f64>) -> Result<f64> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::NonSymmetric(asym));
    }
    Ok(sym_eigenvalues(m)[0])
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Count of singular values above `tol * sigma_max`.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// True iff every eigenvalue of `A` has modulus `< 1 - tol`.
pub fn is_schur(a: &DMatrix<f64>, tol: f64) -> bool {
    assert_eq!(a.nrows(), a.ncols(), "is_schur needs a square matrix");
    let eig = a.clone().complex_eigenvalues();
    eig.iter().all(|z| z.norm() < 1.0 - tol)
}

/// Spectral radius `max |eig(A)|`.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// `[-tol*scale, 0)` are clamped to zero; anything more negative is an error.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    psd_eig_pow(m, tol, 0.5)
}

/// Inverse PSD square root `M^{-1/2}` of a positive definite matrix (kernel
/// directions are dropped, matching the pseudoinverse convention).
pub fn psd_inv_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    psd_eig_pow(m, tol, -0.5)
}

fn psd_eig_pow(m: &DMatrix<f64>, tol: f64, pow: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let se = sym.symmetric_eigen();
    let scale = se.eigenvalues.amax().max(1.0);
    let mut vals = se.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol * scale {
            return Err(Error::NotPsd(format!(
                "eigenvalue {v:.3e} below -{:.1e}",
                tol * scale
            )));
        }
        let clamped = v.max(0.0);
        *v = if clamped == 0.0 {
            0.0
        } else {
            clamped.powf(pow)
        };
    }
    let d = DMatrix::from_diagonal(&vals);
    Ok(symmetrize(&(&se.eigenvectors * d * se.eigenvectors.transpose())))
}

/// Membership of the matrix class used for noise bounds and gain sets:
/// `Pi_22 <= 0`, `Pi | Pi_22 >= 0`, and `ker Pi_22 ⊆ ker Pi_12`.
pub fn in_pi_class(pi: &DMatrix<f64>, part: SymPartition, tol: f64) -> bool {
    let pi = symmetrize(pi);
    let (q, r) = (part.q, part.r);
    if pi.nrows() != part.dim() {
        return false;
    }
    let scale = pi.amax().max(1.0);
    let p22 = pi.view((q, q), (r, r)).into_owned();
    let p12 = pi.view((0, q), (q, r)).into_owned();
    // Pi_22 negative semidefinite
    if sym_eigenvalues(&p22).last().copied().unwrap_or(0.0) > tol * scale {
        return false;
    }
    // generalized Schur complement PSD
    let comp = gen_schur_complement(&pi, part);
    if sym_eigenvalues(&comp)[0] < -tol * scale {
        return false;
    }
    // kernel inclusion via an orthonormal null-space basis of Pi_22
    let svd = p22.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.as_ref().expect("svd computed with u");
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if smax == 0.0 || s <= PINV_TOL * smax {
            let v = u.column(i);
            if (&p12 * v).amax() > tol * scale {
                return false;
            }
        }
    }
    // square Pi_22 with fewer singular values than rows cannot happen with
    // full SVD, so the loop above covers the whole kernel
    true
}

/// QMI membership: `[I; Z]^T Pi [I; Z] >= 0` (or `> 0` when `strict`).
///
/// `Z` is `r x q` for a `(q, r)`-partitioned `Pi`; the value matrix is `q x q`.
pub fn qmi_member(
    pi: &DMatrix<f64>,
    part: SymPartition,
    z: &DMatrix<f64>,
    strict: bool,
    tol: f64,
) -> bool {
    let val = qmi_value(pi, part, z);
    let scale = pi.amax().max(1.0);
    let me = sym_eigenvalues(&val)[0];
    if strict {
        me > tol * scale
    } else {
        me >= -tol * scale
    }
}

/// The QMI value matrix `[I; Z]^T Pi [I; Z]`.
pub fn qmi_value(pi: &DMatrix<f64>, part: SymPartition, z: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(pi.nrows(), part.dim(), "partition does not match matrix");
    assert_eq!(
        (z.nrows(), z.ncols()),
        (part.r, part.q),
        "Z must be r x q for the (q,r) partition"
    );
    let (q, r) = (part.q, part.r);
    let mut stack = DMatrix::zeros(q + r, q);
    stack.view_mut((0, 0), (q, q)).copy_from(&DMatrix::identity(q, q));
    stack.view_mut((q, 0), (r, q)).copy_from(z);
    symmetrize(&(stack.transpose() * symmetrize(pi) * stack))
}

/// Frobenius inner-product free block write: copies `src` into `dst` at
/// `(r0, c0)`, panicking on out-of-range writes.
pub fn set_block(dst: &mut DMatrix<f64>, r0: usize, c0: usize, src: &DMatrix<f64>) {
    dst.view_mut((r0, c0), (src.nrows(), src.ncols())).copy_from(src);
}
