//! The uniform boundary network: one disentangler, one renormalizer, a
//! boundary coupler per edge and the top (hat) tensor.
//!
//! Index conventions (upper = coarse side, lower = fine side):
//!
//! ```text
//! lambda  [u, l1, l2]              |u>      -> sum lambda[u,l1,l2] |l1 l2>
//! chi     [u1, u2, l1, l2]         |u1 u2>  -> sum chi[u1,u2,l1,l2] |l1 l2>
//! alpha   [ua, us, la, ls]         ancilla leg first, site leg second
//! hat     [a, s1, s2, s3, s4, a']  left ancilla, four sites, right ancilla
//! ```
//!
//! One layer maps a chain of `M` sites to `2M` sites: every site `s` is split
//! by `lambda` into `(2s-1, 2s)`, then `alpha_L` couples the left ancilla to
//! fine site `1`, `alpha_R` couples fine site `2M` to the right ancilla, and
//! `chi` acts on every pair `(2s, 2s+1)` for `s = 1..M-1`. Sites are 1-based
//! throughout, matching the left-edge counting used for observables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{DensityMatrix, Site};
use crate::error::{Error, Result};
use crate::linalg::{self, mat_from_rm, mat_to_rm, CMat};
use crate::tensor::{Tensor, C64};

/// Defects above this are treated as corruption.
pub const HARD_FAIL_TOL: f64 = 1e-8;
/// Defects above this are reported as drift.
pub const WARN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeraConfig {
    /// Local site dimension.
    pub d: usize,
    /// Ancilla dimension.
    pub m: usize,
    /// Depth: finite systems have `2^(n+2)` sites.
    pub n: u32,
    pub seed: u64,
    /// Use the mirror image of the left coupler on the right edge.
    #[serde(default = "default_true")]
    pub mirror_boundary: bool,
}

fn default_true() -> bool {
    true
}

impl MeraConfig {
    pub fn new(d: usize, m: usize, n: u32, seed: u64) -> Result<Self> {
        let c = Self {
            d,
            m,
            n,
            seed,
            mirror_boundary: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        // d = 1 is accepted as the trivial network (every map is the identity on
        // a one-dimensional space).
        if self.d < 1 || self.m < 1 || self.n < 1 {
            return Err(Error::InvalidConfig(format!(
                "need d >= 1, m >= 1, n >= 1 (got d={}, m={}, n={})",
                self.d, self.m, self.n
            )));
        }
        if self.n > 60 {
            return Err(Error::InvalidConfig(format!("depth {} too large", self.n)));
        }
        Ok(())
    }

    pub fn system_size(&self) -> u64 {
        system_size(self.n)
    }
}

/// `N = 2^(n+2)`.
pub fn system_size(n: u32) -> u64 {
    1u64 << (n + 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeraTensors {
    pub d: usize,
    pub m: usize,
    pub chi: Tensor,
    pub lambda: Tensor,
    pub alpha_l: Tensor,
    pub alpha_r: Tensor,
    pub hat: Tensor,
}

/// Which boundary coupler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl MeraTensors {
    pub fn from_parts(
        d: usize,
        m: usize,
        chi: Tensor,
        lambda: Tensor,
        alpha_l: Tensor,
        alpha_r: Tensor,
        hat: Tensor,
    ) -> Result<Self> {
        let t = Self {
            d,
            m,
            chi,
            lambda,
            alpha_l,
            alpha_r,
            hat,
        };
        t.check_shapes()?;
        Ok(t)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, m) = (self.d, self.m);
        let expect: [(&str, &Tensor, Vec<usize>); 5] = [
            ("chi", &self.chi, vec![d, d, d, d]),
            ("lambda", &self.lambda, vec![d, d, d]),
            ("alpha_l", &self.alpha_l, vec![m, d, m, d]),
            ("alpha_r", &self.alpha_r, vec![m, d, m, d]),
            ("hat", &self.hat, vec![m, d, d, d, d, m]),
        ];
        for (name, t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    /// Seeded complex Gaussians projected onto the constraint manifold by the
    /// polar decomposition; the hat is normalized to unit Frobenius norm.
    pub fn random_isometric(config: &MeraConfig) -> Result<Self> {
        config.validate()?;
        let (d, m) = (config.d, config.m);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let chi = random_unitary_tensor(d, d, &mut rng)?;
        let lambda = {
            let g = Tensor::random_gaussian(&[d * d, d], &mut rng);
            let u = linalg::polar_isometry(&mat_from_rm(d * d, d, g.data()))?;
            lower_upper_to_tensor(&u, &[d, d], &[d])?
        };
        let alpha_l = random_unitary_tensor(m, d, &mut rng)?;
        let alpha_r = if config.mirror_boundary {
            alpha_l.clone()
        } else {
            random_unitary_tensor(m, d, &mut rng)?
        };
        let hat = {
            let g = Tensor::random_gaussian(&[m, d, d, d, d, m], &mut rng);
            let nrm = g.norm();
            g.scale(C64::new(1.0 / nrm, 0.0))
        };
        Self::from_parts(d, m, chi, lambda, alpha_l, alpha_r, hat)
    }

    /// `V[(l1 l2), u] = lambda[u, l1, l2]`; an isometry (`V^† V = 1`).
    pub fn lambda_isometry(&self) -> CMat {
        upper_lower_matrix(&self.lambda, 1).transpose().to_owned()
    }

    /// `U[(l1 l2), (u1 u2)] = chi[u1, u2, l1, l2]`.
    pub fn chi_unitary(&self) -> CMat {
        upper_lower_matrix(&self.chi, 2).transpose().to_owned()
    }

    /// `U[(la ls), (ua us)] = alpha[ua, us, la, ls]`.
    pub fn alpha_unitary(&self, side: Side) -> CMat {
        let a = match side {
            Side::L => &self.alpha_l,
            Side::R => &self.alpha_r,
        };
        upper_lower_matrix(a, 2).transpose().to_owned()
    }

    /// The same network reflected left to right.
    pub fn mirrored(&self) -> Result<Self> {
        Self::from_parts(
            self.d,
            self.m,
            self.chi.permute(&[1, 0, 3, 2])?,
            self.lambda.permute(&[0, 2, 1])?,
            self.alpha_r.clone(),
            self.alpha_l.clone(),
            self.hat.permute(&[5, 4, 3, 2, 1, 0])?,
        )
    }
}

fn random_unitary_tensor(anc: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = anc * d;
    let g = Tensor::random_gaussian(&[n, n], rng);
    let u = linalg::polar_isometry(&mat_from_rm(n, n, g.data()))?;
    lower_upper_to_tensor(&u, &[anc, d], &[anc, d])
}

/// Rows of `u` are lower (fine) multi-indices, columns upper; the tensor is
/// laid out upper indices first.
fn lower_upper_to_tensor(u: &CMat, lower: &[usize], upper: &[usize]) -> Result<Tensor> {
    let t = Tensor::from_vec(&[u.nrows(), u.ncols()], mat_to_rm(u))?;
    let mut shape = lower.to_vec();
    shape.extend_from_slice(upper);
    let t = t.reshape(&shape)?;
    let nl = lower.len();
    let order: Vec<usize> = (nl..nl + upper.len()).chain(0..nl).collect();
    t.permute(&order)
}

/// Matrix with the first `n_upper` axes as rows and the rest as columns.
fn upper_lower_matrix(t: &Tensor, n_upper: usize) -> CMat {
    let rows: usize = t.shape()[..n_upper].iter().product();
    mat_from_rm(rows, t.len() / rows, t.data())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstraintStatus {
    Ok,
    Warn,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport {
    pub chi: f64,
    pub lambda: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub hat: f64,
}

impl ConstraintReport {
    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("chi", self.chi),
            ("lambda", self.lambda),
            ("alpha_l", self.alpha_l),
            ("alpha_r", self.alpha_r),
            ("hat", self.hat),
        ]
    }

    pub fn max_defect(&self) -> f64 {
        self.entries().iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries().iter().all(|e| e.1 <= tol)
    }

    /// Names of tensors whose defect exceeds `tol`.
    pub fn offenders(&self, tol: f64) -> Vec<&'static str> {
        self.entries()
            .iter()
            .filter(|e| !(e.1 <= tol))
            .map(|e| e.0)
            .collect()
    }

    pub fn status(&self) -> ConstraintStatus {
        let x = self.max_defect();
        if !(x <= HARD_FAIL_TOL) {
            ConstraintStatus::Fail
        } else if x > WARN_TOL {
            ConstraintStatus::Warn
        } else {
            ConstraintStatus::Ok
        }
    }

    /// Errors with the worst offender if any defect exceeds `tol`.
    pub fn require(&self, tol: f64) -> Result<()> {
        let worst = self
            .entries()
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("five entries");
        if worst.1 <= tol {
            Ok(())
        } else {
            Err(Error::ConstraintViolation {
                tensor: worst.0.to_string(),
                defect: worst.1,
                tolerance: tol,
            })
        }
    }
}

/// Max-abs deviation of `sum_k T[u,k] conj(T[l,k])` from `delta[u,l]`, with
/// the upper indices of `t` grouped as rows.
fn coisometry_defect(t: &Tensor, n_upper: usize) -> f64 {
    let a = upper_lower_matrix(t, n_upper);
    let g = &a * a.adjoint();
    linalg::max_abs_diff(&g, &linalg::identity(a.nrows()))
}

pub fn check_constraints(t: &MeraTensors) -> ConstraintReport {
    let hat_sq: f64 = t.hat.data().iter().map(|z| z.norm_sqr()).sum();
    ConstraintReport {
        chi: coisometry_defect(&t.chi, 2),
        lambda: coisometry_defect(&t.lambda, 1),
        alpha_l: coisometry_defect(&t.alpha_l, 2),
        alpha_r: coisometry_defect(&t.alpha_r, 2),
        hat: (hat_sq - 1.0).abs(),
    }
}

/// Reduced density matrices of the hat state on `(A,1,2)`, `(1,2,3)`,
/// `(2,3,4)` and `(3,4,A')`.
#[derive(Clone, Debug)]
pub struct TopBlocks {
    pub left: DensityMatrix,
    pub triples: [DensityMatrix; 2],
    pub right: DensityMatrix,
}

pub fn top_density_matrices(t: &MeraTensors) -> Result<TopBlocks> {
    let report = check_constraints(t);
    if !(report.hat <= HARD_FAIL_TOL) {
        return Err(Error::ConstraintViolation {
            tensor: "hat".into(),
            defect: report.hat,
            tolerance: HARD_FAIL_TOL,
        });
    }
    let (d, m) = (t.d, t.m);
    let block = |axes: [usize; 3], sites: Vec<Site>| -> Result<DensityMatrix> {
        let a = linalg::tensor_to_mat(&t.hat, &axes)?;
        let rho = &a * a.adjoint();
        DensityMatrix::new(linalg::hermitian_part(&rho), sites)
    };
    Ok(TopBlocks {
        left: block(
            [0, 1, 2],
            vec![Site::anc_l(m), Site::site(1, d), Site::site(2, d)],
        )?,
        triples: [
            block([1, 2, 3], Site::triple(1, d))?,
            block([2, 3, 4], Site::triple(2, d))?,
        ],
        right: block(
            [3, 4, 5],
            vec![Site::site(3, d), Site::site(4, d), Site::anc_r(m)],
        )?,
    })
}
