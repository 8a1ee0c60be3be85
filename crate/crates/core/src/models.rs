//! Local operators and reference models.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, CMat};
use crate::tensor::{C64, ONE, ZERO};

pub fn pauli(c: char) -> Result<CMat> {
    let i = C64::new(0.0, 1.0);
    let m = match c {
        'I' => [ONE, ZERO, ZERO, ONE],
        'X' => [ZERO, ONE, ONE, ZERO],
        'Y' => [ZERO, -i, i, ZERO],
        'Z' => [ONE, ZERO, ZERO, -ONE],
        other => return Err(Error::InvalidConfig(format!("unknown Pauli letter {other:?}"))),
    };
    Ok(linalg::mat_from_rm(2, 2, &m))
}

/// Tensor product of single-qubit Paulis, e.g. `"ZIZ"`.
pub fn pauli_string(s: &str) -> Result<CMat> {
    let mut out = linalg::identity(1);
    for c in s.chars() {
        out = linalg::kron(&out, &pauli(c)?);
    }
    Ok(out)
}

/// Operator on three contiguous sites.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    pub matrix: CMat,
    pub hermitian: bool,
}

impl LocalOperator {
    pub fn new(matrix: CMat, d: usize) -> Result<Self> {
        let n = d * d * d;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(mismatch(format!(
                "three-site operator must be {n}x{n}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = linalg::max_abs_diff(&matrix, &linalg::dagger(&matrix)) <= 1e-12;
        Ok(Self { matrix, hermitian })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: linalg::identity(d * d * d),
            hermitian: true,
        }
    }

    /// Left-right reflection: `O'[(a,b,c),(a',b',c')] = O[(c,b,a),(c',b',a')]`.
    pub fn mirrored(&self, d: usize) -> Self {
        let rev = |x: usize| {
            let (a, b, c) = (x / (d * d), (x / d) % d, x % d);
            c * d * d + b * d + a
        };
        let n = self.matrix.nrows();
        Self {
            matrix: CMat::from_fn(n, n, |i, j| self.matrix[(rev(i), rev(j))]),
            hermitian: self.hermitian,
        }
    }
}

/// Three-site interaction term `H_3`.
#[derive(Clone, Debug)]
pub struct Hamiltonian3 {
    pub h3: CMat,
    pub nu: usize,
}

impl Hamiltonian3 {
    pub fn new(h3: CMat) -> Result<Self> {
        if linalg::max_abs_diff(&h3, &linalg::dagger(&h3)) > 1e-12 {
            return Err(Error::InvalidConfig("H_3 must be Hermitian".into()));
        }
        Ok(Self { h3, nu: 3 })
    }

    /// `½ (h ⊗ 1 + 1 ⊗ h)` for a two-site term `h`.
    pub fn from_two_site(h2: &CMat, d: usize) -> Result<Self> {
        if h2.nrows() != d * d {
            return Err(mismatch("two-site term has the wrong size"));
        }
        let id = linalg::identity(d);
        let a = linalg::kron(h2, &id);
        let b = linalg::kron(&id, h2);
        let n = a.nrows();
        Self::new(CMat::from_fn(n, n, |i, j| (a[(i, j)] + b[(i, j)]) * 0.5))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            h3: linalg::identity(d * d * d),
            nu: 3,
        }
    }

    pub fn zero(d: usize) -> Self {
        let n = d * d * d;
        Self {
            h3: CMat::zeros(n, n),
            nu: 3,
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        let n = self.h3.nrows();
        let mut h = self.h3.clone();
        for i in 0..n {
            h[(i, i)] += C64::new(c, 0.0);
        }
        Self { h3: h, nu: self.nu }
    }

    pub fn dim(&self) -> usize {
        self.h3.nrows()
    }

    pub fn is_zero(&self) -> bool {
        linalg::max_abs(&self.h3) == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `-Z Z - g (X 1 + 1 X) / 2` per bond.
    Ising { g: f64 },
    Identity,
    Zero,
}

impl ModelSpec {
    pub fn hamiltonian(&self, d: usize) -> Result<Hamiltonian3> {
        match self {
            ModelSpec::Ising { g } => {
                if d != 2 {
                    return Err(Error::InvalidConfig("the Ising model needs d = 2".into()));
                }
                Hamiltonian3::from_two_site(&ising_bond(*g)?, 2)
            }
            ModelSpec::Identity => Ok(Hamiltonian3::identity(d)),
            ModelSpec::Zero => Ok(Hamiltonian3::zero(d)),
        }
    }
}

/// Bond term of `H = -Σ Z_i Z_{i+1} - g Σ X_i` with the field split evenly
/// between the two bonds touching a site.
pub fn ising_bond(g: f64) -> Result<CMat> {
    let zz = pauli_string("ZZ")?;
    let xi = pauli_string("XI")?;
    let ix = pauli_string("IX")?;
    Ok(CMat::from_fn(4, 4, |i, j| {
        -zz[(i, j)] - (xi[(i, j)] + ix[(i, j)]) * (g / 2.0)
    }))
}

/// Ground energy of the open chain `-Σ_{i<N} Z_i Z_{i+1} - g Σ_i X_i` from
/// its free-fermion form: minus the sum of singular values of the
/// bidiagonal matrix with `g` on the diagonal and `1` above it.
pub fn ising_open_ground_energy(n: usize, g: f64) -> Result<f64> {
    let b = faer::Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            g
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    let s = b
        .singular_values()
        .map_err(|e| Error::ConvergenceFailure(format!("svd: {e:?}")))?;
    Ok(-s.iter().sum::<f64>())
}

/// Dense open-chain Hamiltonian for small `n`, used to cross-check.
pub fn ising_open_dense(n: usize, g: f64) -> Result<CMat> {
    let dim = 1usize << n;
    let mut h = CMat::zeros(dim, dim);
    for s in 0..dim {
        // bit (n-1-i) is site i; Z eigenvalue +1 for bit 0
        let z = |i: usize| if (s >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
        let mut diag = 0.0;
        for i in 0..n - 1 {
            diag -= z(i) * z(i + 1);
        }
        h[(s, s)] += C64::new(diag, 0.0);
        for i in 0..n {
            let t = s ^ (1 << (n - 1 - i));
            h[(t, s)] += C64::new(-g, 0.0);
        }
    }
    Ok(h)
}
