//! Channels of the boundary network as dense superoperators.
//!
//! Vectorization is row-major: `vec(X)[i * n + j] = X[i, j]`, so a Kraus
//! operator `K` acts as `K ⊗ conj(K)` and a channel with Kraus set `{K_e}`
//! has matrix `S = Σ_e K_e ⊗ conj(K_e)`.
//!
//! Choi convention (input first): `J[(a, i), (b, j)] = Φ(|a><b|)[i, j]`,
//! i.e. `J[(a, i), (b, j)] = S[(i, j), (a, b)]`.
//!
//! Every channel here is built from a network fragment (see
//! [`crate::diagram::fragments`]): the fragment is contracted into an
//! isometry `V` from the input block to `kept ⊗ traced`, and the Kraus
//! operators are the slices `K_e = V[:, e, :]` over the traced wires. The
//! contraction order is therefore: renormalizers on every input site, then
//! couplers, then disentanglers, then the kept/traced split.

use serde::{Deserialize, Serialize};

use crate::diagram::{fragments, Diagram, GateTensors};
use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, mat_from_rm, CMat};
use crate::network::{MeraTensors, Side};
use crate::tensor::{Tensor, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteLabel {
    AncL,
    Pos(i64),
    AncR,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub label: SiteLabel,
    pub dim: usize,
}

impl Site {
    pub fn site(pos: i64, d: usize) -> Self {
        Self {
            label: SiteLabel::Pos(pos),
            dim: d,
        }
    }

    pub fn anc_l(m: usize) -> Self {
        Self {
            label: SiteLabel::AncL,
            dim: m,
        }
    }

    pub fn anc_r(m: usize) -> Self {
        Self {
            label: SiteLabel::AncR,
            dim: m,
        }
    }

    /// `(l, l+1, l+2)`.
    pub fn triple(l: i64, d: usize) -> Vec<Site> {
        (0..3).map(|k| Site::site(l + k, d)).collect()
    }

    pub fn run(start: i64, len: usize, d: usize) -> Vec<Site> {
        (0..len as i64).map(|k| Site::site(start + k, d)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub matrix: CMat,
    pub sites: Vec<Site>,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking its size against `sites`. No positivity
    /// check; see [`DensityMatrix::defects`].
    pub fn new(matrix: CMat, sites: Vec<Site>) -> Result<Self> {
        let n: usize = sites.iter().map(|s| s.dim).product();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(mismatch(format!(
                "{}x{} matrix for sites of total dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, sites })
    }

    pub fn maximally_mixed(sites: Vec<Site>) -> Self {
        let n: usize = sites.iter().map(|s| s.dim).product();
        let mut m = linalg::identity(n);
        let s = C64::new(1.0 / n as f64, 0.0);
        for i in 0..n {
            m[(i, i)] = s;
        }
        Self { matrix: m, sites }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = linalg::hermitian_part(&self.matrix);
        Ok(linalg::eigvalsh(&h)?.first().copied().unwrap_or(0.0))
    }

    /// `(hermiticity, |trace - 1|, -min eigenvalue)`.
    pub fn defects(&self) -> Result<(f64, f64, f64)> {
        let herm = linalg::max_abs_diff(&self.matrix, &linalg::dagger(&self.matrix));
        let tr = (self.trace() - ONE).norm();
        Ok((herm, tr, -self.min_eigenvalue()?))
    }

    pub fn is_valid(&self, tol: f64) -> Result<bool> {
        let (h, t, e) = self.defects()?;
        Ok(h <= tol && t <= tol && e <= tol)
    }

    /// `Tr[O ρ]`.
    pub fn expectation(&self, op: &CMat) -> Result<C64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(mismatch("operator and density matrix dimensions differ"));
        }
        Ok(linalg::trace_of_product(op, &self.matrix))
    }

    /// Partial trace keeping the listed positions (in ascending order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let dims = self.dims();
        let sites = keep
            .iter()
            .map(|&k| {
                self.sites.get(k).copied().ok_or(Error::AxisOutOfRange {
                    axis: k,
                    rank: dims.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DensityMatrix {
            matrix: partial_trace(&self.matrix, &dims, keep)?,
            sites,
        })
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut sites = self.sites.clone();
        sites.extend_from_slice(&other.sites);
        DensityMatrix {
            matrix: linalg::kron(&self.matrix, &other.matrix),
            sites,
        }
    }
}

/// Partial trace of an operator on `dims`, keeping `keep` in the given order.
pub fn partial_trace(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let n: usize = dims.iter().product();
    if m.nrows() != n || m.ncols() != n {
        return Err(mismatch("operator does not match dims"));
    }
    let r = dims.len();
    let mut shape = dims.to_vec();
    shape.extend_from_slice(dims);
    let t = Tensor::from_vec(&shape, linalg::mat_to_rm(m))?;
    let traced: Vec<usize> = (0..r).filter(|k| !keep.contains(k)).collect();
    let mut order: Vec<usize> = keep.to_vec();
    order.extend(keep.iter().map(|&k| k + r));
    order.extend(traced.iter().copied());
    order.extend(traced.iter().map(|&k| k + r));
    let p = t.permute(&order)?;
    let dk: usize = keep.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();
    let data = p.data();
    Ok(CMat::from_fn(dk, dk, |i, j| {
        let base = (i * dk + j) * dt * dt;
        (0..dt).map(|e| data[base + e * dt + e]).sum()
    }))
}

/// Which channel a superoperator realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapLabel {
    DescendL,
    DescendR,
    AbsorbL,
    AbsorbR,
    StableL,
    StableR,
    Average,
    TwoPoint,
    FourSite,
    FourToSix,
    Other,
}

impl MapLabel {
    pub fn name(&self) -> &'static str {
        match self {
            MapLabel::DescendL => "D_L",
            MapLabel::DescendR => "D_R",
            MapLabel::AbsorbL => "K_L",
            MapLabel::AbsorbR => "K_R",
            MapLabel::StableL => "B_L",
            MapLabel::StableR => "B_R",
            MapLabel::Average => "D",
            MapLabel::TwoPoint => "D2",
            MapLabel::FourSite => "F4",
            MapLabel::FourToSix => "G6",
            MapLabel::Other => "map",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Superoperator {
    pub label: MapLabel,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    /// `(dout^2) x (din^2)` in row-major vectorization.
    pub matrix: CMat,
}

impl Superoperator {
    pub fn new(label: MapLabel, in_dims: Vec<usize>, out_dims: Vec<usize>, matrix: CMat) -> Result<Self> {
        let din: usize = in_dims.iter().product();
        let dout: usize = out_dims.iter().product();
        if matrix.nrows() != dout * dout || matrix.ncols() != din * din {
            return Err(mismatch(format!(
                "superoperator matrix {}x{} for in {in_dims:?}, out {out_dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            label,
            in_dims,
            out_dims,
            matrix,
        })
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let n: usize = dims.iter().product();
        Self {
            label: MapLabel::Other,
            in_dims: dims.clone(),
            out_dims: dims,
            matrix: linalg::identity(n * n),
        }
    }

    pub fn din(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn dout(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn is_endomorphism(&self) -> bool {
        self.in_dims == self.out_dims
    }

    pub fn from_kraus(label: MapLabel, in_dims: Vec<usize>, out_dims: Vec<usize>, kraus: &[CMat]) -> Result<Self> {
        let din: usize = in_dims.iter().product();
        let dout: usize = out_dims.iter().product();
        let mut s = CMat::zeros(dout * dout, din * din);
        for k in kraus {
            if k.nrows() != dout || k.ncols() != din {
                return Err(mismatch("Kraus operator has the wrong shape"));
            }
            accumulate_kraus(&mut s, k);
        }
        Self::new(label, in_dims, out_dims, s)
    }

    /// Channel from an isometry tensor with axes `(kept..., traced..., in...)`.
    pub fn from_isometry(
        label: MapLabel,
        v: &Tensor,
        in_dims: Vec<usize>,
        kept_dims: Vec<usize>,
        traced_dims: Vec<usize>,
    ) -> Result<Self> {
        let din: usize = in_dims.iter().product();
        let dk: usize = kept_dims.iter().product();
        let dt: usize = traced_dims.iter().product();
        if v.len() != dk * dt * din {
            return Err(mismatch("isometry size does not match dims"));
        }
        let data = v.data();
        let mut s = CMat::zeros(dk * dk, din * din);
        for e in 0..dt {
            let k = CMat::from_fn(dk, din, |i, a| data[(i * dt + e) * din + a]);
            accumulate_kraus(&mut s, &k);
        }
        Self::new(label, in_dims, kept_dims, s)
    }

    pub fn from_diagram(label: MapLabel, dia: &Diagram, g: &GateTensors, d: usize, m: usize) -> Result<Self> {
        let v = dia.isometry(g, d, m)?;
        Self::from_isometry(label, &v, dia.input_dims(d, m), dia.kept_dims(d, m), dia.traced_dims(d, m))
    }

    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        let din = self.din();
        if x.nrows() != din || x.ncols() != din {
            return Err(mismatch(format!(
                "{}x{} input to a map on dimension {din}",
                x.nrows(),
                x.ncols()
            )));
        }
        let dout = self.dout();
        let y = linalg::matvec(&self.matrix, &linalg::vec_rm(x));
        linalg::unvec_rm(&y, dout, dout)
    }

    /// Applies to a density matrix and relabels the output sites.
    pub fn apply_dm(&self, rho: &DensityMatrix, sites: Vec<Site>) -> Result<DensityMatrix> {
        if rho.dims() != self.in_dims {
            return Err(mismatch(format!(
                "density matrix on {:?} fed to a map on {:?}",
                rho.dims(),
                self.in_dims
            )));
        }
        DensityMatrix::new(self.apply(&rho.matrix)?, sites)
    }

    /// Heisenberg picture: `Tr[O Φ(ρ)] = Tr[Φ†(O) ρ]`.
    pub fn adjoint_apply(&self, o: &CMat) -> Result<CMat> {
        let dout = self.dout();
        if o.nrows() != dout || o.ncols() != dout {
            return Err(mismatch("observable does not match output dimension"));
        }
        let din = self.din();
        // vec(Φ†(O)^T) = S^T vec(O^T)
        let ot = o.transpose().to_owned();
        let v = linalg::vec_rm(&ot);
        let mut out = vec![ZERO; din * din];
        for j in 0..self.matrix.ncols() {
            let col = self.matrix.col(j);
            let mut acc = ZERO;
            for (a, b) in col.iter().zip(v.iter()) {
                acc += a * b;
            }
            out[j] = acc;
        }
        Ok(linalg::unvec_rm(&out, din, din)?.transpose().to_owned())
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &Superoperator) -> Result<Superoperator> {
        if first.out_dims != self.in_dims {
            return Err(mismatch("composition of maps with mismatched dims"));
        }
        Superoperator::new(
            MapLabel::Other,
            first.in_dims.clone(),
            self.out_dims.clone(),
            &self.matrix * &first.matrix,
        )
    }

    pub fn choi(&self) -> CMat {
        let (din, dout) = (self.din(), self.dout());
        let s = &self.matrix;
        CMat::from_fn(din * dout, din * dout, |r, c| {
            let (a, i) = (r / dout, r % dout);
            let (b, j) = (c / dout, c % dout);
            s[(i * dout + j, a * din + b)]
        })
    }

    pub fn from_choi(label: MapLabel, in_dims: Vec<usize>, out_dims: Vec<usize>, j: &CMat) -> Result<Self> {
        let din: usize = in_dims.iter().product();
        let dout: usize = out_dims.iter().product();
        if j.nrows() != din * dout || j.ncols() != din * dout {
            return Err(mismatch("Choi matrix has the wrong size"));
        }
        let s = CMat::from_fn(dout * dout, din * din, |r, c| {
            let (i, jj) = (r / dout, r % dout);
            let (a, b) = (c / din, c % din);
            j[(a * dout + i, b * dout + jj)]
        });
        Self::new(label, in_dims, out_dims, s)
    }

    /// Kraus operators from the eigendecomposition of the Choi matrix,
    /// dropping eigenvalues below `tol`.
    pub fn kraus(&self, tol: f64) -> Result<Vec<CMat>> {
        let (din, dout) = (self.din(), self.dout());
        let j = linalg::hermitian_part(&self.choi());
        let (w, u) = linalg::eigh(&j)?;
        let mut out = Vec::new();
        for (e, &lam) in w.iter().enumerate().rev() {
            if lam <= tol {
                continue;
            }
            let s = lam.sqrt();
            out.push(CMat::from_fn(dout, din, |i, a| u[(a * dout + i, e)] * s));
        }
        Ok(out)
    }

    /// Smallest eigenvalue of the Hermitian part of the Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        let j = linalg::hermitian_part(&self.choi());
        Ok(linalg::eigvalsh(&j)?.first().copied().unwrap_or(0.0))
    }

    /// `max |Φ†(1) - 1|`.
    pub fn unitality_defect(&self) -> Result<f64> {
        let one = linalg::identity(self.dout());
        let back = self.adjoint_apply(&one)?;
        Ok(linalg::max_abs_diff(&back, &linalg::identity(self.din())))
    }

    /// `(choi min eigenvalue, adjoint unitality defect)`.
    pub fn cpt_defects(&self) -> Result<(f64, f64)> {
        Ok((self.choi_min_eigenvalue()?, self.unitality_defect()?))
    }

    /// Errors unless completely positive and trace preserving within `tol`.
    pub fn require_cpt(&self, tol: f64) -> Result<()> {
        let (e, u) = self.cpt_defects()?;
        if e < -tol || u > tol {
            return Err(Error::ConstraintViolation {
                tensor: self.label.name().into(),
                defect: u.max(-e),
                tolerance: tol,
            });
        }
        Ok(())
    }

    /// Real matrix of a Hermiticity-preserving map in the orthonormal
    /// Hermitian basis of [`hermitian_basis_entry`]: `R[a, b] = Tr[B_a Φ(B_b)]`.
    pub fn real_form(&self) -> faer::Mat<f64> {
        let (din, dout) = (self.din(), self.dout());
        let bin: Vec<BasisEntry> = (0..din * din).map(|b| hermitian_basis_entry(din, b)).collect();
        let bout: Vec<BasisEntry> = (0..dout * dout).map(|a| hermitian_basis_entry(dout, a)).collect();
        let s = &self.matrix;
        faer::Mat::from_fn(dout * dout, din * din, |a, b| {
            let mut acc = ZERO;
            for &(i, j, x) in bout[a].terms() {
                // Tr[B_a Y] picks Y[j, i]
                for &(k, l, y) in bin[b].terms() {
                    acc += x * y * s[(j * dout + i, k * din + l)];
                }
            }
            acc.re
        })
    }

    /// Average of two maps with identical dims.
    pub fn average(a: &Superoperator, b: &Superoperator) -> Result<Superoperator> {
        if a.in_dims != b.in_dims || a.out_dims != b.out_dims {
            return Err(mismatch("averaging maps with different dims"));
        }
        let m = CMat::from_fn(a.matrix.nrows(), a.matrix.ncols(), |i, j| {
            (a.matrix[(i, j)] + b.matrix[(i, j)]) * 0.5
        });
        Superoperator::new(MapLabel::Average, a.in_dims.clone(), a.out_dims.clone(), m)
    }

    /// `Φ ⊗ Ψ` on the doubled operator space (`in_dims` concatenated).
    pub fn tensor_product(&self, other: &Superoperator) -> Result<Superoperator> {
        let (ai, ao, bi, bo) = (self.din(), self.dout(), other.din(), other.dout());
        let sa = Tensor::from_vec(&[ao, ao, ai, ai], linalg::mat_to_rm(&self.matrix))?;
        let sb = Tensor::from_vec(&[bo, bo, bi, bi], linalg::mat_to_rm(&other.matrix))?;
        let outer = sa.contract(&sb, &[])?;
        let p = outer.permute(&[0, 4, 1, 5, 2, 6, 3, 7])?;
        let (no, ni) = (ao * bo, ai * bi);
        let mut in_dims = self.in_dims.clone();
        in_dims.extend_from_slice(&other.in_dims);
        let mut out_dims = self.out_dims.clone();
        out_dims.extend_from_slice(&other.out_dims);
        Superoperator::new(MapLabel::Other, in_dims, out_dims, mat_from_rm(no * no, ni * ni, p.data()))
    }

    /// Structured-text dump: label, dims, then `row,col,re,im` per nonzero.
    pub fn dump(&self) -> String {
        let mut s = format!(
            "# label={}\n# in_dims={:?}\n# out_dims={:?}\n# rows={} cols={}\nrow,col,re,im\n",
            self.label.name(),
            self.in_dims,
            self.out_dims,
            self.matrix.nrows(),
            self.matrix.ncols()
        );
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                let z = self.matrix[(i, j)];
                if z != ZERO {
                    s.push_str(&format!("{i},{j},{:.17e},{:.17e}\n", z.re, z.im));
                }
            }
        }
        s
    }
}

fn accumulate_kraus(s: &mut CMat, k: &CMat) {
    let (dout, din) = (k.nrows(), k.ncols());
    for i in 0..dout {
        for a in 0..din {
            let kia = k[(i, a)];
            if kia == ZERO {
                continue;
            }
            for j in 0..dout {
                let row = i * dout + j;
                for b in 0..din {
                    s[(row, a * din + b)] += kia * k[(j, b)].conj();
                }
            }
        }
    }
}

/// One Hermitian basis element: at most two entries `(row, col, value)`.
#[derive(Clone, Copy, Debug)]
pub struct BasisEntry {
    n: usize,
    t: [(usize, usize, C64); 2],
}

impl BasisEntry {
    pub fn terms(&self) -> &[(usize, usize, C64)] {
        &self.t[..self.n]
    }

    pub fn to_matrix(&self, dim: usize) -> CMat {
        let mut m = CMat::zeros(dim, dim);
        for &(i, j, x) in self.terms() {
            m[(i, j)] += x;
        }
        m
    }
}

/// Element `k` of an orthonormal Hermitian basis of `dim x dim` matrices,
/// indexed like row-major vectorization: `k = i*dim + j` gives `E_ii` when
/// `i == j`, `(E_ij + E_ji)/√2` when `i < j` and `i(E_ij - E_ji)/√2` when
/// `i > j` (with the pair ordered as `(j, i)`).
pub fn hermitian_basis_entry(dim: usize, k: usize) -> BasisEntry {
    let (i, j) = (k / dim, k % dim);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if i == j {
        BasisEntry {
            n: 1,
            t: [(i, i, ONE), (0, 0, ZERO)],
        }
    } else if i < j {
        BasisEntry {
            n: 2,
            t: [(i, j, C64::new(r, 0.0)), (j, i, C64::new(r, 0.0))],
        }
    } else {
        let (p, q) = (j, i);
        BasisEntry {
            n: 2,
            t: [(p, q, C64::new(0.0, r)), (q, p, C64::new(0.0, -r))],
        }
    }
}

/// Coefficients of a Hermitian operator in the basis above.
pub fn to_hermitian_coords(x: &CMat) -> Vec<f64> {
    let n = x.nrows();
    (0..n * n)
        .map(|k| {
            let b = hermitian_basis_entry(n, k);
            // Tr[B X]
            b.terms().iter().map(|&(i, j, v)| v * x[(j, i)]).sum::<C64>().re
        })
        .collect()
}

pub fn from_hermitian_coords(c: &[C64], dim: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for (k, &ck) in c.iter().enumerate() {
        if ck == ZERO {
            continue;
        }
        for &(i, j, v) in hermitian_basis_entry(dim, k).terms() {
            m[(i, j)] += ck * v;
        }
    }
    m
}

/// The six maps of one uniform network plus the fragments used for
/// two-point seeds.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub descend_l: Superoperator,
    pub descend_r: Superoperator,
    pub absorb_l: Superoperator,
    pub absorb_r: Superoperator,
    pub stable_l: Superoperator,
    pub stable_r: Superoperator,
    pub average: Superoperator,
}

impl ChannelSet {
    pub fn build(t: &MeraTensors) -> Result<Self> {
        require_constraints(t)?;
        Self::build_unchecked(t)
    }

    /// Same maps without the constraint check; the cost functional is a
    /// polynomial in the tensors and is probed off the isometric manifold.
    pub(crate) fn build_unchecked(t: &MeraTensors) -> Result<Self> {
        let g = GateTensors::new(t)?;
        let descend_l = build_descend_with(&g, t, Side::L)?;
        let descend_r = build_descend_with(&g, t, Side::R)?;
        let average = average_descend(&descend_l, &descend_r)?;
        Ok(Self {
            descend_l,
            descend_r,
            absorb_l: build_boundary_with(&g, t, Side::L, true)?,
            absorb_r: build_boundary_with(&g, t, Side::R, true)?,
            stable_l: build_boundary_with(&g, t, Side::L, false)?,
            stable_r: build_boundary_with(&g, t, Side::R, false)?,
            average,
        })
    }

    pub fn six(&self) -> [&Superoperator; 6] {
        [
            &self.descend_l,
            &self.descend_r,
            &self.absorb_l,
            &self.absorb_r,
            &self.stable_l,
            &self.stable_r,
        ]
    }
}

fn require_constraints(t: &MeraTensors) -> Result<()> {
    crate::network::check_constraints(t).require(crate::network::HARD_FAIL_TOL)
}

fn build_descend_with(g: &GateTensors, t: &MeraTensors, side: Side) -> Result<Superoperator> {
    let (label, dia) = match side {
        Side::L => (MapLabel::DescendL, fragments::descend(true)),
        Side::R => (MapLabel::DescendR, fragments::descend(false)),
    };
    Superoperator::from_diagram(label, &dia, g, t.d, t.m)
}

fn build_boundary_with(g: &GateTensors, t: &MeraTensors, side: Side, absorb: bool) -> Result<Superoperator> {
    let (label, dia) = match (side, absorb) {
        (Side::L, true) => (MapLabel::AbsorbL, fragments::left_edge(true)),
        (Side::L, false) => (MapLabel::StableL, fragments::left_edge(false)),
        (Side::R, true) => (MapLabel::AbsorbR, fragments::right_edge(true)),
        (Side::R, false) => (MapLabel::StableR, fragments::right_edge(false)),
    };
    Superoperator::from_diagram(label, &dia, g, t.d, t.m)
}

/// Bulk descending map. `L` produces the triple at even fine offset `2l`
/// from the coarse triple at `l`, `R` the one at `2l+1`.
pub fn build_descend(t: &MeraTensors, side: Side) -> Result<Superoperator> {
    require_constraints(t)?;
    build_descend_with(&GateTensors::new(t)?, t, side)
}

/// `(A,1,2)` at one level to `(1,2,3)` at the next (mirror on the right:
/// `(M-1,M,A')` to `(2M-2,2M-1,2M)`).
pub fn build_boundary_absorb(t: &MeraTensors, side: Side) -> Result<Superoperator> {
    require_constraints(t)?;
    build_boundary_with(&GateTensors::new(t)?, t, side, true)
}

/// Endomorphism of the edge block `(A,1,2)` (or `(M-1,M,A')`).
pub fn build_boundary_stable(t: &MeraTensors, side: Side) -> Result<Superoperator> {
    require_constraints(t)?;
    build_boundary_with(&GateTensors::new(t)?, t, side, false)
}

pub fn average_descend(dl: &Superoperator, dr: &Superoperator) -> Result<Superoperator> {
    Superoperator::average(dl, dr)
}

/// `½(D_L ⊗ D_L + D_R ⊗ D_R)`.
pub fn build_twopoint(dl: &Superoperator, dr: &Superoperator) -> Result<Superoperator> {
    if dl.in_dims != dr.in_dims || dl.out_dims != dr.out_dims {
        return Err(mismatch("two-point map from maps with different dims"));
    }
    let a = dl.tensor_product(dl)?;
    let b = dr.tensor_product(dr)?;
    let mut s = Superoperator::average(&a, &b)?;
    s.label = MapLabel::TwoPoint;
    Ok(s)
}

/// Real form of the two-point map, built directly as
/// `½(R_L ⊗ R_L + R_R ⊗ R_R)` in the product Hermitian basis.
pub fn twopoint_real_form(dl: &Superoperator, dr: &Superoperator) -> Result<faer::Mat<f64>> {
    if dl.in_dims != dr.in_dims || !dl.is_endomorphism() {
        return Err(mismatch("two-point map needs matching endomorphisms"));
    }
    let rl = dl.real_form();
    let rr = dr.real_form();
    let n = rl.nrows();
    Ok(faer::Mat::from_fn(n * n, n * n, |i, j| {
        let (i1, i2, j1, j2) = (i / n, i % n, j / n, j % n);
        0.5 * (rl[(i1, j1)] * rl[(i2, j2)] + rr[(i1, j1)] * rr[(i2, j2)])
    }))
}

/// Maps used for two-point seeds: the odd-start four-site endomorphism and
/// the four-to-six-site descent.
pub fn build_four_site(t: &MeraTensors) -> Result<(Superoperator, Superoperator)> {
    let g = GateTensors::new(t)?;
    Ok((
        Superoperator::from_diagram(MapLabel::FourSite, &fragments::four_site(), &g, t.d, t.m)?,
        Superoperator::from_diagram(MapLabel::FourToSix, &fragments::four_to_six(), &g, t.d, t.m)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MeraConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dm(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = Tensor::random_gaussian(&[n, n], rng);
        let a = mat_from_rm(n, n, g.data());
        let r = &a * a.adjoint();
        let tr = linalg::trace(&r);
        CMat::from_fn(n, n, |i, j| r[(i, j)] / tr)
    }

    fn tensors(d: usize, m: usize, seed: u64) -> MeraTensors {
        MeraTensors::random_isometric(&MeraConfig::new(d, m, 2, seed).unwrap()).unwrap()
    }

    #[test]
    fn identity_map_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_dm(4, &mut rng);
        let s = Superoperator::identity(vec![2, 2]);
        assert!(linalg::max_abs_diff(&s.apply(&rho).unwrap(), &rho) < 1e-15);
    }

    #[test]
    fn kraus_matrix_matches_direct_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = mat_from_rm(3, 2, Tensor::random_gaussian(&[3, 2], &mut rng).data());
        let s = Superoperator::from_kraus(MapLabel::Other, vec![2], vec![3], &[k.clone()]).unwrap();
        let x = mat_from_rm(2, 2, Tensor::random_gaussian(&[2, 2], &mut rng).data());
        let direct = &k * &x * k.adjoint();
        assert!(linalg::max_abs_diff(&s.apply(&x).unwrap(), &direct) < 1e-13);
    }

    #[test]
    fn choi_round_trip_and_kraus_recovery() {
        let t = tensors(2, 2, 42);
        let s = build_boundary_absorb(&t, Side::L).unwrap();
        let j = s.choi();
        let back = Superoperator::from_choi(s.label, s.in_dims.clone(), s.out_dims.clone(), &j).unwrap();
        assert!(linalg::max_abs_diff(&back.matrix, &s.matrix) < 1e-15);
        let ks = s.kraus(1e-13).unwrap();
        let rebuilt = Superoperator::from_kraus(s.label, s.in_dims.clone(), s.out_dims.clone(), &ks).unwrap();
        assert!(linalg::max_abs_diff(&rebuilt.matrix, &s.matrix) < 1e-12);
    }

    #[test]
    fn all_six_maps_are_cpt() {
        for seed in [1, 2, 3] {
            let c = ChannelSet::build(&tensors(2, 2, seed)).unwrap();
            for s in c.six() {
                let (e, u) = s.cpt_defects().unwrap();
                assert!(e >= -1e-10 && u <= 1e-12, "{:?}: {e} {u}", s.label);
            }
        }
    }

    #[test]
    fn duality_holds() {
        let t = tensors(2, 2, 5);
        let s = build_boundary_stable(&t, Side::L).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let rho = random_dm(8, &mut rng);
            let o = mat_from_rm(8, 8, Tensor::random_gaussian(&[8, 8], &mut rng).data());
            let lhs = linalg::trace_of_product(&o, &s.apply(&rho).unwrap());
            let rhs = linalg::trace_of_product(&s.adjoint_apply(&o).unwrap(), &rho);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn real_form_has_same_spectrum() {
        let t = tensors(2, 1, 8);
        let s = build_descend(&t, Side::L).unwrap();
        let r = s.real_form();
        let a = linalg::eigvals(&s.matrix).unwrap();
        let b = linalg::eigvals_real(&r).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn hermitian_coords_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_dm(4, &mut rng);
        let c: Vec<C64> = to_hermitian_coords(&x).into_iter().map(|v| C64::new(v, 0.0)).collect();
        assert!(linalg::max_abs_diff(&from_hermitian_coords(&c, 4), &x) < 1e-14);
    }

    #[test]
    fn tensor_product_acts_factorwise() {
        let t = tensors(2, 2, 6);
        let a = build_boundary_stable(&t, Side::L).unwrap();
        let b = build_boundary_absorb(&t, Side::L).unwrap();
        let ab = a.tensor_product(&b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_dm(8, &mut rng);
        let y = random_dm(8, &mut rng);
        let lhs = ab.apply(&linalg::kron(&x, &y)).unwrap();
        let rhs = linalg::kron(&a.apply(&x).unwrap(), &b.apply(&y).unwrap());
        assert!(linalg::max_abs_diff(&lhs, &rhs) < 1e-13);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_dm(2, &mut rng);
        let y = random_dm(3, &mut rng);
        let xy = linalg::kron(&x, &y);
        assert!(linalg::max_abs_diff(&partial_trace(&xy, &[2, 3], &[0]).unwrap(), &x) < 1e-15);
        assert!(linalg::max_abs_diff(&partial_trace(&xy, &[2, 3], &[1]).unwrap(), &y) < 1e-15);
    }
}
