//! Matrix views of tensors and the factorizations built on them.
//!
//! The heavy lifting (SVD, QR, Hessenberg/Schur eigensolvers) is delegated to
//! `faer`; this module fixes conventions on top: row-major vectorization,
//! deterministic eigenvalue ordering, polar factors from the thin SVD.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{mismatch, Error, Result};
use crate::tensor::{Tensor, C64, ONE, ZERO};

pub type CMat = Mat<C64>;

pub fn mat_from_rm(rows: usize, cols: usize, data: &[C64]) -> CMat {
    debug_assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub fn mat_to_rm(m: &CMat) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Matricizes `t` with `row_axes` (in the given order) as rows and the
/// remaining axes, in ascending order, as columns.
pub fn tensor_to_mat(t: &Tensor, row_axes: &[usize]) -> Result<CMat> {
    let rank = t.rank();
    if let Some(&bad) = row_axes.iter().find(|&&a| a >= rank) {
        return Err(Error::AxisOutOfRange { axis: bad, rank });
    }
    let mut order = row_axes.to_vec();
    order.extend((0..rank).filter(|k| !row_axes.contains(k)));
    let p = t.permute(&order)?;
    let rows: usize = row_axes.iter().map(|&a| t.shape()[a]).product();
    let cols = t.len() / rows.max(1);
    Ok(mat_from_rm(rows, cols, p.data()))
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `Tr[a b]` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut x: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            x = x.max(m[(i, j)].norm());
        }
    }
    x
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return f64::INFINITY;
    }
    let mut x: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            x = x.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    x
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Row-major vectorization: `vec(X)[i * cols + j] = X[i, j]`.
pub fn vec_rm(m: &CMat) -> Vec<C64> {
    mat_to_rm(m)
}

pub fn unvec_rm(v: &[C64], rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(mismatch(format!(
            "vector of length {} cannot form a {rows}x{cols} matrix",
            v.len()
        )));
    }
    Ok(mat_from_rm(rows, cols, v))
}

pub fn matvec(m: &CMat, v: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == ZERO {
            continue;
        }
        let col = m.col(j);
        for (o, x) in out.iter_mut().zip(col.iter()) {
            *o += x * vj;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// Thin SVD, singular values nonnegative and descending.
pub fn svd(m: &CMat) -> Result<Svd> {
    let f = m
        .thin_svd()
        .map_err(|e| Error::ConvergenceFailure(format!("svd: {e:?}")))?;
    let s = f.S().column_vector().iter().map(|x| x.re).collect();
    Ok(Svd {
        u: f.U().to_owned(),
        s,
        v: f.V().to_owned(),
    })
}

pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::ConvergenceFailure(format!("singular values: {e:?}")))
}

/// `m = u p` with `u` an isometry on the smaller side and `p` positive
/// semidefinite (acting on the column space).
pub fn polar(m: &CMat) -> Result<(CMat, CMat)> {
    let f = svd(m)?;
    let u = &f.u * f.v.adjoint();
    let k = f.s.len();
    let sv = Mat::from_fn(k, f.v.nrows(), |i, j| f.v[(j, i)].conj() * f.s[i]);
    let p = &f.v * &sv;
    Ok((u, p))
}

/// The isometric polar factor alone.
pub fn polar_isometry(m: &CMat) -> Result<CMat> {
    let f = svd(m)?;
    Ok(&f.u * f.v.adjoint())
}

pub fn qr(m: &CMat) -> (CMat, CMat) {
    let f = m.qr();
    (f.compute_thin_Q(), f.thin_R().to_owned())
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(mismatch("inverse of a non-square matrix"));
    }
    Ok(m.partial_piv_lu().inverse())
}

pub fn solve(m: &CMat, rhs: &CMat) -> CMat {
    m.partial_piv_lu().solve(rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Svd,
    Polar,
    Qr,
}

#[derive(Clone, Debug)]
pub enum Factors {
    Svd(Svd),
    Polar { u: CMat, p: CMat },
    Qr { q: CMat, r: CMat },
}

impl Factors {
    pub fn reconstruct(&self) -> CMat {
        match self {
            Factors::Svd(f) => {
                let k = f.s.len();
                let sv = Mat::from_fn(k, f.v.nrows(), |i, j| f.v[(j, i)].conj() * f.s[i]);
                &f.u * &sv
            }
            Factors::Polar { u, p } => u * p,
            Factors::Qr { q, r } => q * r,
        }
    }
}

/// Factorizes the matricization of `t` with `row_axes` as the row group.
pub fn factorize(t: &Tensor, row_axes: &[usize], kind: FactorKind) -> Result<Factors> {
    let m = tensor_to_mat(t, row_axes)?;
    Ok(match kind {
        FactorKind::Svd => Factors::Svd(svd(&m)?),
        FactorKind::Polar => {
            let (u, p) = polar(&m)?;
            Factors::Polar { u, p }
        }
        FactorKind::Qr => {
            let (q, r) = qr(&m);
            Factors::Qr { q, r }
        }
    })
}

/// Ordering used for every reported spectrum: descending modulus, then
/// descending real part, then descending imaginary part. Moduli that agree to
/// 1e-12 (relative, chained between neighbours) count as equal.
pub fn eigen_order(values: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let modulus = |i: usize| values[i].norm();
    let re = |i: usize| values[i].re;
    let im = |i: usize| values[i].im;
    idx.sort_by(|&a, &b| modulus(b).total_cmp(&modulus(a)));
    for (s, e) in runs(&idx, modulus) {
        idx[s..e].sort_by(|&a, &b| re(b).total_cmp(&re(a)));
        for (s2, e2) in runs(&idx[s..e], re) {
            idx[s + s2..s + e2].sort_by(|&a, &b| im(b).total_cmp(&im(a)));
        }
    }
    idx
}

/// Maximal runs of a descending-sorted index list whose neighbouring keys
/// differ by at most 1e-12 relative to the group's scale.
fn runs(idx: &[usize], key: impl Fn(usize) -> f64) -> Vec<(usize, usize)> {
    let scale = idx.iter().map(|&i| key(i).abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut out = Vec::new();
    let mut start = 0;
    for end in 1..=idx.len() {
        if end == idx.len() || key(idx[end - 1]) - key(idx[end]) > 1e-12 * scale {
            out.push((start, end));
            start = end;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    /// Column `i` is the unit-norm right eigenvector of `values[i]`.
    pub right: CMat,
    /// Column `i` is the left eigenvector `w_i` with `w_i^† v_j = δ_ij`.
    pub left: Option<CMat>,
}

impl EigenDecomposition {
    /// Condition number of the right eigenvector matrix; large values flag
    /// defective (Jordan-block) structure.
    pub fn condition(&self) -> Result<f64> {
        let s = singular_values(&self.right)?;
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(0.0, f64::max);
        Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
    }
}

pub fn eig(m: &CMat, want_left: bool) -> Result<EigenDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(mismatch("eig of a non-square matrix"));
    }
    let n = m.nrows();
    let f = m
        .eigen()
        .map_err(|e| Error::ConvergenceFailure(format!("eig: {e:?}")))?;
    let raw: Vec<C64> = f.S().column_vector().iter().copied().collect();
    let order = eigen_order(&raw);
    let values: Vec<C64> = order.iter().map(|&i| raw[i]).collect();
    let u = f.U();
    let mut right = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    for j in 0..n {
        let nrm = right.col(j).norm_l2();
        if nrm > 0.0 {
            for i in 0..n {
                right[(i, j)] /= nrm;
            }
        }
    }
    let left = if want_left {
        let inv = inverse(&right)?;
        Some(dagger(&inv))
    } else {
        None
    };
    Ok(EigenDecomposition {
        values,
        right,
        left,
    })
}

pub fn eigvals(m: &CMat) -> Result<Vec<C64>> {
    if m.nrows() != m.ncols() {
        return Err(mismatch("eig of a non-square matrix"));
    }
    let raw = m
        .eigenvalues()
        .map_err(|e| Error::ConvergenceFailure(format!("eigenvalues: {e:?}")))?;
    Ok(eigen_order(&raw).into_iter().map(|i| raw[i]).collect())
}

pub fn eigvals_real(m: &Mat<f64>) -> Result<Vec<C64>> {
    if m.nrows() != m.ncols() {
        return Err(mismatch("eig of a non-square matrix"));
    }
    let raw = m
        .eigenvalues()
        .map_err(|e| Error::ConvergenceFailure(format!("eigenvalues: {e:?}")))?;
    Ok(eigen_order(&raw).into_iter().map(|i| raw[i]).collect())
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let f = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::ConvergenceFailure(format!("hermitian eig: {e:?}")))?;
    let s = f.S().column_vector().iter().map(|x| x.re).collect();
    Ok((s, f.U().to_owned()))
}

pub fn eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::ConvergenceFailure(format!("hermitian eig: {e:?}")))
}

/// Sum of singular values.
pub fn trace_norm(m: &CMat) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mat(r: usize, c: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::random_gaussian(&[r, c], &mut rng);
        mat_from_rm(r, c, t.data())
    }

    fn rel_err(a: &CMat, b: &CMat) -> f64 {
        frobenius(&(a - b)) / frobenius(a)
    }

    #[test]
    fn svd_of_identity() {
        let f = svd(&identity(4)).unwrap();
        for s in f.s {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn svd_reconstructs_tall_matrix() {
        let m = random_mat(4, 2, 11);
        let t = Tensor::from_vec(&[4, 2], mat_to_rm(&m)).unwrap();
        let f = factorize(&t, &[0], FactorKind::Svd).unwrap();
        assert!(rel_err(&m, &f.reconstruct()) < 1e-12);
        if let Factors::Svd(s) = f {
            assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.s.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn polar_factor_is_unitary() {
        let m = random_mat(5, 5, 4);
        let (u, p) = polar(&m).unwrap();
        assert!(max_abs_diff(&(u.adjoint() * &u), &identity(5)) < 1e-12);
        assert!(rel_err(&m, &(&u * &p)) < 1e-12);
        assert!(max_abs_diff(&p, &dagger(&p)) < 1e-12);
    }

    #[test]
    fn polar_of_wide_matrix_is_coisometry() {
        let m = random_mat(2, 6, 8);
        let (u, p) = polar(&m).unwrap();
        assert!(max_abs_diff(&(&u * u.adjoint()), &identity(2)) < 1e-12);
        assert!(rel_err(&m, &(&u * &p)) < 1e-12);
    }

    #[test]
    fn qr_reconstructs_through_tensor_matricization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tensor::random_gaussian(&[2, 3, 2], &mut rng);
        let f = factorize(&t, &[2, 0], FactorKind::Qr).unwrap();
        let m = tensor_to_mat(&t, &[2, 0]).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (4, 3));
        assert!(rel_err(&m, &f.reconstruct()) < 1e-12);
    }

    #[test]
    fn eig_of_diagonal() {
        let m = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new([0.25, 1.0, 0.5][i], 0.0)
            } else {
                ZERO
            }
        });
        let e = eig(&m, true).unwrap();
        let want = [1.0, 0.5, 0.25];
        for (v, w) in e.values.iter().zip(want) {
            assert!((v - C64::new(w, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn eig_of_rotation_is_plus_minus_i() {
        let m = mat_from_rm(
            2,
            2,
            &[ZERO, C64::new(-1.0, 0.0), ONE, ZERO],
        );
        let e = eigvals(&m).unwrap();
        // Equal moduli and real parts: ordering falls to the imaginary part.
        assert!((e[0] - C64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((e[1] - C64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn eig_residuals_of_random_matrix() {
        let m = random_mat(8, 8, 99);
        let e = eig(&m, true).unwrap();
        let mnorm = frobenius(&m);
        let left = e.left.as_ref().unwrap();
        for k in 0..8 {
            let v: Vec<C64> = e.right.col(k).iter().copied().collect();
            let mv = matvec(&m, &v);
            let res: f64 = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - e.values[k] * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10 * mnorm, "residual {res}");
            // w^† M = κ w^†
            let w = left.col(k);
            for j in 0..8 {
                let mut s = ZERO;
                for i in 0..8 {
                    s += w[i].conj() * m[(i, j)];
                }
                assert!((s - e.values[k] * w[j].conj()).norm() < 1e-9);
            }
        }
        for w in e.values.windows(2) {
            assert!(w[0].norm() >= w[1].norm());
        }
    }

    #[test]
    fn real_and_complex_eigvals_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tensor::random_gaussian(&[6, 6], &mut rng);
        let r = Mat::from_fn(6, 6, |i, j| t.data()[i * 6 + j].re);
        let c = Mat::from_fn(6, 6, |i, j| C64::new(r[(i, j)], 0.0));
        let a = eigvals_real(&r).unwrap();
        let b = eigvals(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn trace_norm_of_hermitian_is_sum_of_abs_eigs() {
        let m = random_mat(5, 5, 21);
        let h = hermitian_part(&m);
        let ev = eigvalsh(&h).unwrap();
        let tn = trace_norm(&h).unwrap();
        assert!((tn - ev.iter().map(|x| x.abs()).sum::<f64>()).abs() < 1e-12);
    }
}
