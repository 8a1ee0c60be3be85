//! Fixed points, spectra and scaling operators of channels.

use serde::Serialize;

use crate::channels::{DensityMatrix, MapLabel, Site, Superoperator};
use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, CMat};
use crate::tensor::C64;

/// Second-modulus threshold for mixing.
pub const MIXING_TOL: f64 = 1e-9;
/// Eigenvector condition number above which a spectrum is flagged defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;
/// Above this operator-space dimension only eigenvalues are computed, from
/// the real form.
pub const DENSE_VECTOR_LIMIT: usize = 1024;
/// Power iterations without improvement before giving up.
const STAGNATION: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointMethod {
    Eig,
    Power,
}

/// Default site labels for a channel's input block.
pub fn default_sites(s: &Superoperator) -> Vec<Site> {
    let dims = &s.in_dims;
    match s.label {
        MapLabel::StableL | MapLabel::AbsorbL => {
            let mut v = vec![Site::anc_l(dims[0])];
            v.extend(dims[1..].iter().enumerate().map(|(k, &d)| Site::site(k as i64 + 1, d)));
            v
        }
        MapLabel::StableR | MapLabel::AbsorbR => {
            let k = dims.len() - 1;
            let mut v: Vec<Site> = dims[..k]
                .iter()
                .enumerate()
                .map(|(i, &d)| Site::site(i as i64 + 1, d))
                .collect();
            v.push(Site::anc_r(dims[k]));
            v
        }
        _ => dims
            .iter()
            .enumerate()
            .map(|(k, &d)| Site::site(k as i64 + 1, d))
            .collect(),
    }
}

fn require_endo(s: &Superoperator) -> Result<()> {
    if s.is_endomorphism() {
        Ok(())
    } else {
        Err(mismatch(format!("{} is not an endomorphism", s.label.name())))
    }
}

fn normalize_dm(m: &CMat) -> Result<CMat> {
    let h = linalg::hermitian_part(m);
    let tr = linalg::trace(&h);
    if tr.norm() < 1e-300 {
        return Err(Error::ConvergenceFailure("fixed point has zero trace".into()));
    }
    Ok(CMat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] / tr))
}

fn residual(s: &Superoperator, rho: &CMat) -> Result<f64> {
    let next = s.apply(rho)?;
    linalg::trace_norm(&(&next - rho))
}

/// Second-largest eigenvalue modulus, from the full spectrum.
pub fn second_modulus(s: &Superoperator) -> Result<f64> {
    let ev = eigenvalues(s)?;
    Ok(ev.get(1).map(|z| z.norm()).unwrap_or(0.0))
}

fn not_mixing(s: &Superoperator, second: f64) -> Error {
    Error::NotMixing {
        label: s.label.name().into(),
        second_modulus: second,
    }
}

pub fn fixed_point(s: &Superoperator, method: FixedPointMethod, tol: f64, max_iter: usize) -> Result<DensityMatrix> {
    fixed_point_on(s, method, tol, max_iter, default_sites(s))
}

pub fn fixed_point_on(
    s: &Superoperator,
    method: FixedPointMethod,
    tol: f64,
    max_iter: usize,
    sites: Vec<Site>,
) -> Result<DensityMatrix> {
    require_endo(s)?;
    let n = s.din();
    let rho = match method {
        FixedPointMethod::Eig => {
            let e = linalg::eig(&s.matrix, false)?;
            let second = e.values.get(1).map(|z| z.norm()).unwrap_or(0.0);
            if second >= 1.0 - MIXING_TOL {
                return Err(not_mixing(s, second));
            }
            let v: Vec<C64> = e.right.col(0).iter().copied().collect();
            normalize_dm(&linalg::unvec_rm(&v, n, n)?)?
        }
        FixedPointMethod::Power => {
            let second = second_modulus(s)?;
            if second >= 1.0 - MIXING_TOL {
                return Err(not_mixing(s, second));
            }
            DensityMatrix::maximally_mixed(sites.clone()).matrix
        }
    };
    iterate_to_fixed(s, rho, tol, max_iter, sites)
}

/// Power iteration from `rho` until the trace-norm residual is below `tol`.
fn iterate_to_fixed(
    s: &Superoperator,
    mut rho: CMat,
    tol: f64,
    max_iter: usize,
    sites: Vec<Site>,
) -> Result<DensityMatrix> {
    let mut it = 0;
    let mut r = residual(s, &rho)?;
    let (mut best, mut flat) = (r, 0);
    while r > tol {
        if it >= max_iter || flat >= STAGNATION {
            return Err(Error::ConvergenceFailure(format!(
                "{} fixed point: residual {r:.3e} after {it} iterations",
                s.label.name()
            )));
        }
        rho = normalize_dm(&s.apply(&rho)?)?;
        r = residual(s, &rho)?;
        it += 1;
        if r < best {
            (best, flat) = (r, 0);
        } else {
            flat += 1;
        }
    }
    DensityMatrix::new(rho, sites)
}

/// Eigenvalues in the canonical order, through the real form when the map
/// preserves Hermiticity and the space is large.
pub fn eigenvalues(s: &Superoperator) -> Result<Vec<C64>> {
    let n = s.matrix.nrows();
    if n > DENSE_VECTOR_LIMIT && s.is_endomorphism() {
        linalg::eigvals_real(&s.real_form())
    } else {
        linalg::eigvals(&s.matrix)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub label: String,
    pub eigenvalues: Vec<C64>,
    /// `-log2|κ|` for `|κ| < 1 - 1e-12`, `None` otherwise.
    pub exponents: Vec<Option<f64>>,
    pub mixing: bool,
    /// `1 - |κ_2|`.
    pub gap: f64,
    /// Eigenvector condition number above [`DEFECTIVE_CONDITION`].
    pub defective: Option<bool>,
    #[serde(skip)]
    pub fixed_point: Option<DensityMatrix>,
}

impl SpectrumReport {
    pub fn from_eigenvalues(label: &str, eigenvalues: Vec<C64>) -> Self {
        let exponents = eigenvalues
            .iter()
            .map(|z| {
                let r = z.norm();
                (r < 1.0 - 1e-12 && r > 0.0).then(|| -r.log2())
            })
            .collect();
        let second = eigenvalues.get(1).map(|z| z.norm()).unwrap_or(0.0);
        let first = eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0);
        Self {
            label: label.to_string(),
            mixing: first >= 1.0 - MIXING_TOL && second < 1.0 - MIXING_TOL,
            gap: 1.0 - second,
            exponents,
            eigenvalues,
            defective: None,
            fixed_point: None,
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0)
    }

    /// Rows `index,re,im,modulus,phase,exponent`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("index,re,im,modulus,phase,exponent\n");
        for (i, (z, e)) in self.eigenvalues.iter().zip(&self.exponents).enumerate() {
            let e = e.map(|x| format!("{x:.15e}")).unwrap_or_else(|| "inf".into());
            let e = if z.norm() >= 1.0 - 1e-12 { "0".to_string() } else { e };
            s.push_str(&format!(
                "{i},{:.15e},{:.15e},{:.15e},{:.15e},{e}\n",
                z.re,
                z.im,
                z.norm(),
                z.arg()
            ));
        }
        s
    }
}

pub fn spectrum(s: &Superoperator) -> Result<SpectrumReport> {
    require_endo(s)?;
    let n = s.matrix.nrows();
    if n > DENSE_VECTOR_LIMIT {
        let mut r = SpectrumReport::from_eigenvalues(s.label.name(), eigenvalues(s)?);
        if r.mixing {
            let sites = default_sites(s);
            let start = DensityMatrix::maximally_mixed(sites.clone()).matrix;
            r.fixed_point = Some(iterate_to_fixed(s, start, 1e-12, 100_000, sites)?);
        }
        return Ok(r);
    }
    let e = linalg::eig(&s.matrix, false)?;
    let mut r = SpectrumReport::from_eigenvalues(s.label.name(), e.values.clone());
    r.defective = Some(e.condition()? > DEFECTIVE_CONDITION);
    if r.mixing {
        let d = s.din();
        let v: Vec<C64> = e.right.col(0).iter().copied().collect();
        let rho = normalize_dm(&linalg::unvec_rm(&v, d, d)?)?;
        r.fixed_point = Some(DensityMatrix::new(rho, default_sites(s))?);
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct ScalingOperator {
    pub operator: CMat,
    pub eigenvalue: C64,
    pub exponent: f64,
    /// Set when another returned eigenvalue lies within 1e-8.
    pub degenerate: bool,
}

/// Heisenberg eigenoperators of the `k` largest `|κ| < 1`, unit
/// Hilbert-Schmidt norm. Real eigenvalues get Hermitian representatives.
pub fn scaling_operators(s: &Superoperator, k: usize) -> Result<Vec<ScalingOperator>> {
    require_endo(s)?;
    let n = s.din();
    // Φ† acts on vec(O^T) as S^T; eigenvectors of S^T give O^T.
    let st = s.matrix.transpose().to_owned();
    let e = linalg::eig(&st, false)?;
    let second = e.values.get(1).map(|z| z.norm()).unwrap_or(0.0);
    if e.values[0].norm() < 1.0 - MIXING_TOL || second >= 1.0 - MIXING_TOL {
        return Err(not_mixing(s, second));
    }
    let mut out = Vec::new();
    for (i, &kappa) in e.values.iter().enumerate().skip(1) {
        if out.len() == k {
            break;
        }
        if kappa.norm() < 1e-14 {
            break;
        }
        let v: Vec<C64> = e.right.col(i).iter().copied().collect();
        let mut o = linalg::unvec_rm(&v, n, n)?.transpose().to_owned();
        if kappa.im.abs() < 1e-12 {
            let herm = linalg::hermitian_part(&o);
            let anti = CMat::from_fn(n, n, |a, b| (o[(a, b)] - o[(b, a)].conj()) * C64::new(0.0, -0.5));
            o = if linalg::frobenius(&herm) >= linalg::frobenius(&anti) {
                herm
            } else {
                anti
            };
        }
        let nrm = linalg::frobenius(&o);
        let o = CMat::from_fn(n, n, |a, b| o[(a, b)] / nrm);
        let degenerate = e
            .values
            .iter()
            .enumerate()
            .any(|(j, z)| j != i && (z - kappa).norm() < 1e-8);
        out.push(ScalingOperator {
            operator: o,
            eigenvalue: kappa,
            exponent: -kappa.norm().log2(),
            degenerate,
        });
    }
    Ok(out)
}

/// `‖Φ†(Θ) - κΘ‖_F`.
pub fn scaling_residual(s: &Superoperator, op: &ScalingOperator) -> Result<f64> {
    let back = s.adjoint_apply(&op.operator)?;
    let n = back.nrows();
    let diff = CMat::from_fn(n, n, |i, j| back[(i, j)] - op.eigenvalue * op.operator[(i, j)]);
    Ok(linalg::frobenius(&diff))
}

/// Trace distance between `Φ^k(ρ0)` and the fixed point, for `k = 0..=steps`.
pub fn convergence_trace(s: &Superoperator, rho0: &CMat, fixed: &CMat, steps: usize) -> Result<Vec<f64>> {
    let mut rho = rho0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            rho = s.apply(&rho)?;
        }
        out.push(0.5 * linalg::trace_norm(&(&rho - fixed))?);
    }
    Ok(out)
}

/// Completely depolarizing channel on `dims`.
pub fn depolarizing(dims: Vec<usize>, p: f64) -> Result<Superoperator> {
    let n: usize = dims.iter().product();
    let nn = n * n;
    let mut m = CMat::zeros(nn, nn);
    // ρ -> (1-p) ρ + p Tr[ρ] 1/n
    for i in 0..nn {
        m[(i, i)] += C64::new(1.0 - p, 0.0);
    }
    for a in 0..n {
        for i in 0..n {
            m[(i * n + i, a * n + a)] += C64::new(p / n as f64, 0.0);
        }
    }
    Superoperator::new(MapLabel::Other, dims.clone(), dims, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_boundary_stable, ChannelSet};
    use crate::network::{MeraConfig, MeraTensors, Side};

    #[test]
    fn depolarizing_spectrum_and_fixed_point() {
        let s = depolarizing(vec![2], 0.3).unwrap();
        let r = spectrum(&s).unwrap();
        assert!((r.eigenvalues[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        for z in &r.eigenvalues[1..] {
            assert!((z - C64::new(0.7, 0.0)).norm() < 1e-12);
        }
        let full = depolarizing(vec![2, 2], 1.0).unwrap();
        let fp = fixed_point(&full, FixedPointMethod::Eig, 1e-12, 100).unwrap();
        assert!(linalg::max_abs_diff(&fp.matrix, &DensityMatrix::maximally_mixed(default_sites(&full)).matrix) < 1e-14);
    }

    #[test]
    fn identity_is_not_mixing() {
        let s = Superoperator::identity(vec![2]);
        assert!(matches!(
            fixed_point(&s, FixedPointMethod::Power, 1e-12, 10),
            Err(Error::NotMixing { .. })
        ));
    }

    #[test]
    fn fixed_point_methods_agree() {
        let t = MeraTensors::random_isometric(&MeraConfig::new(2, 2, 2, 7).unwrap()).unwrap();
        let b = build_boundary_stable(&t, Side::L).unwrap();
        let a = fixed_point(&b, FixedPointMethod::Eig, 1e-12, 10_000).unwrap();
        let p = fixed_point(&b, FixedPointMethod::Power, 1e-12, 10_000).unwrap();
        assert!(linalg::max_abs_diff(&a.matrix, &p.matrix) < 1e-10);
        assert!(a.is_valid(1e-10).unwrap());
    }

    #[test]
    fn scaling_operators_are_eigenoperators() {
        let t = MeraTensors::random_isometric(&MeraConfig::new(2, 2, 2, 11).unwrap()).unwrap();
        let c = ChannelSet::build(&t).unwrap();
        let fp = fixed_point(&c.average, FixedPointMethod::Eig, 1e-12, 10_000).unwrap();
        for op in scaling_operators(&c.average, 6).unwrap() {
            assert!(scaling_residual(&c.average, &op).unwrap() < 1e-8);
            assert!(fp.expectation(&op.operator).unwrap().norm() < 1e-8);
        }
    }

    #[test]
    fn depolarizing_scaling_operators_are_traceless() {
        let s = depolarizing(vec![2], 0.25).unwrap();
        let ops = scaling_operators(&s, 3).unwrap();
        assert_eq!(ops.len(), 3);
        for op in ops {
            assert!(op.degenerate);
            assert!(linalg::trace(&op.operator).norm() < 1e-12);
            assert!((op.eigenvalue - C64::new(0.75, 0.0)).norm() < 1e-12);
        }
    }
}
