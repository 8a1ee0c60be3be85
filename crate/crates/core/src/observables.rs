//! One-point profiles, bulk correlators and boundary energies.
//!
//! Finite systems are evaluated by descending from the top blocks along the
//! unique channel path of each triple. At level `k` (chain of `M = 2^(k+2)`
//! sites) the triple starting at `j` of level `k+1` comes from
//!
//! ```text
//! j = 1          K_L (left block (A,1,2) of level k)
//! j = 2M - 2     K_R (right block (M-1,M,A') of level k)
//! j = 2l         D_L (triple l of level k),  1 <= l <= M-2
//! j = 2l + 1     D_R (triple l of level k),  1 <= l <= M-2
//! ```
//!
//! and the edge blocks evolve under `B_L` and `B_R`. Every triple is covered.

use std::collections::HashMap;

use serde::Serialize;

use crate::channels::{build_four_site, ChannelSet, DensityMatrix, Site, Superoperator};
use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, CMat};
use crate::models::{Hamiltonian3, LocalOperator};
use crate::network::{system_size, top_density_matrices, MeraTensors, TopBlocks};
use crate::spectral::{self, FixedPointMethod};
use crate::tensor::{Tensor, C64, ZERO};

/// Signal floor for profile fits.
pub const SIGNAL_FLOOR: f64 = 1e-13;
/// Component threshold for the divergence flag.
pub const COMPONENT_TOL: f64 = 1e-10;

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_ITERS: usize = 1_000_000;

/// Channel-path evaluation of finite systems, memoized per `(level, start)`.
#[derive(Clone, Debug)]
pub struct FiniteRecursion {
    pub channels: ChannelSet,
    pub d: usize,
    left: Vec<CMat>,
    right: Vec<CMat>,
    top: [CMat; 2],
    cache: HashMap<(u32, i64), CMat>,
}

impl FiniteRecursion {
    pub fn new(t: &MeraTensors) -> Result<Self> {
        Self::from_parts(ChannelSet::build(t)?, top_density_matrices(t)?, t.d)
    }

    pub fn from_parts(channels: ChannelSet, top: TopBlocks, d: usize) -> Result<Self> {
        Ok(Self {
            channels,
            d,
            left: vec![top.left.matrix],
            right: vec![top.right.matrix],
            top: [top.triples[0].matrix.clone(), top.triples[1].matrix.clone()],
            cache: HashMap::new(),
        })
    }

    /// `(A,1,2)` at `level`.
    pub fn left_block(&mut self, level: u32) -> Result<CMat> {
        while self.left.len() <= level as usize {
            let next = self.channels.stable_l.apply(self.left.last().expect("nonempty"))?;
            self.left.push(next);
        }
        Ok(self.left[level as usize].clone())
    }

    /// `(N-1,N,A')` at `level`.
    pub fn right_block(&mut self, level: u32) -> Result<CMat> {
        while self.right.len() <= level as usize {
            let next = self.channels.stable_r.apply(self.right.last().expect("nonempty"))?;
            self.right.push(next);
        }
        Ok(self.right[level as usize].clone())
    }

    /// Triple `(j, j+1, j+2)` at `level`.
    pub fn triple(&mut self, level: u32, j: i64) -> Result<CMat> {
        let n = system_size(level) as i64;
        if j < 1 || j > n - 2 {
            return Err(Error::SiteOutOfRange {
                site: j,
                reason: format!("triples at level {level} start at 1..={}", n - 2),
            });
        }
        if level == 0 {
            return Ok(self.top[(j - 1) as usize].clone());
        }
        if let Some(m) = self.cache.get(&(level, j)) {
            return Ok(m.clone());
        }
        let m = n / 2;
        let out = if j == 1 {
            let b = self.left_block(level - 1)?;
            self.channels.absorb_l.apply(&b)?
        } else if j == 2 * m - 2 {
            let b = self.right_block(level - 1)?;
            self.channels.absorb_r.apply(&b)?
        } else if j % 2 == 0 {
            let p = self.triple(level - 1, j / 2)?;
            self.channels.descend_l.apply(&p)?
        } else {
            let p = self.triple(level - 1, (j - 1) / 2)?;
            self.channels.descend_r.apply(&p)?
        };
        self.cache.insert((level, j), out.clone());
        Ok(out)
    }

    pub fn triple_dm(&mut self, level: u32, j: i64) -> Result<DensityMatrix> {
        let d = self.d;
        DensityMatrix::new(self.triple(level, j)?, Site::triple(j, d))
    }

    /// `(1/(N-2)) Σ_{j=1}^{N-2} ρ_j` at `level`.
    pub fn averaged_triple(&mut self, level: u32) -> Result<CMat> {
        let n = system_size(level) as i64;
        let dim = self.d.pow(3);
        let mut acc = CMat::zeros(dim, dim);
        for j in 1..=n - 2 {
            acc += self.triple(level, j)?;
        }
        let s = 1.0 / (n - 2) as f64;
        Ok(CMat::from_fn(dim, dim, |a, b| acc[(a, b)] * s))
    }

    /// Right-hand side of the averaged-density recursion at `level >= 1`:
    /// `(K_L(ρ_{A,1,2}) + K_R(ρ_{.,.,A'}))/(N-2) + (1 - 1/(2^(level+1)-1)) D(ρ̄)`
    /// with all inputs from `level - 1`.
    pub fn averaged_triple_recursion(&mut self, level: u32) -> Result<CMat> {
        if level == 0 {
            return Err(mismatch("the averaged recursion starts at level 1"));
        }
        let n = system_size(level) as f64;
        let lb = self.left_block(level - 1)?;
        let kl = self.channels.absorb_l.apply(&lb)?;
        let rb = self.right_block(level - 1)?;
        let kr = self.channels.absorb_r.apply(&rb)?;
        let prev = self.averaged_triple(level - 1)?;
        let dprev = self.channels.average.apply(&prev)?;
        let w = 1.0 - 1.0 / ((1u64 << (level + 1)) as f64 - 1.0);
        let dim = kl.nrows();
        Ok(CMat::from_fn(dim, dim, |a, b| {
            (kl[(a, b)] + kr[(a, b)]) / (n - 2.0) + dprev[(a, b)] * w
        }))
    }
}

fn check_theta(theta: &LocalOperator, d: usize) -> Result<()> {
    let n = d * d * d;
    if theta.matrix.nrows() != n {
        return Err(mismatch(format!("operator of size {} on d = {d}", theta.matrix.nrows())));
    }
    Ok(())
}

/// `<Θ_l>` on the finite chain of depth `n`.
pub fn local_average_finite(t: &MeraTensors, theta: &LocalOperator, ell: i64, n: u32) -> Result<C64> {
    check_theta(theta, t.d)?;
    let mut rec = FiniteRecursion::new(t)?;
    let rho = rec.triple(n, ell)?;
    Ok(linalg::trace_of_product(&theta.matrix, &rho))
}

/// `Σ_{j=1}^{2^τ-1} Tr[H_3 ρ_j]` on the finite chain of depth `n`.
pub fn block_energy_finite(rec: &mut FiniteRecursion, h: &Hamiltonian3, tau: u32, n: u32) -> Result<f64> {
    let count = (1i64 << tau) - 1;
    let max = system_size(n) as i64 - 2;
    if count > max {
        return Err(Error::SiteOutOfRange {
            site: count,
            reason: format!("block of {count} triples does not fit in depth {n}"),
        });
    }
    let mut e = ZERO;
    for j in 1..=count {
        e += linalg::trace_of_product(&h.h3, &rec.triple(n, j)?);
    }
    Ok(e.re)
}

/// Thermodynamic-limit data near the left edge: fixed points of `B_L` and
/// of the averaged descending map, and the seed `K_L(ρᶠ_{A,1,2})`.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub channels: ChannelSet,
    pub edge_fixed: DensityMatrix,
    pub bulk_fixed: DensityMatrix,
    pub seed: CMat,
    descended: Vec<CMat>,
}

impl Boundary {
    pub fn new(t: &MeraTensors) -> Result<Self> {
        Self::from_channels(ChannelSet::build(t)?)
    }

    pub fn from_channels(channels: ChannelSet) -> Result<Self> {
        let edge_fixed = spectral::fixed_point(
            &channels.stable_l,
            FixedPointMethod::Eig,
            FIXED_POINT_TOL,
            FIXED_POINT_ITERS,
        )?;
        let bulk_fixed = spectral::fixed_point(
            &channels.average,
            FixedPointMethod::Eig,
            FIXED_POINT_TOL,
            FIXED_POINT_ITERS,
        )?;
        let seed = channels.absorb_l.apply(&edge_fixed.matrix)?;
        Ok(Self {
            channels,
            edge_fixed,
            bulk_fixed,
            descended: vec![seed.clone()],
            seed,
        })
    }

    /// `D^k K_L(ρᶠ_{A,1,2})`.
    pub fn descended(&mut self, k: u32) -> Result<CMat> {
        while self.descended.len() <= k as usize {
            let next = self.channels.average.apply(self.descended.last().expect("nonempty"))?;
            self.descended.push(next);
        }
        Ok(self.descended[k as usize].clone())
    }

    /// `Tr[Θ D^{⌊log2 l⌋} K_L(ρᶠ_{A,1,2})]`.
    pub fn local_average(&mut self, theta: &CMat, ell: u64) -> Result<C64> {
        if ell == 0 {
            return Err(Error::SiteOutOfRange {
                site: 0,
                reason: "sites are counted from 1".into(),
            });
        }
        let k = 63 - ell.leading_zeros();
        Ok(linalg::trace_of_product(theta, &self.descended(k)?))
    }

    pub fn bulk_value(&self, theta: &CMat) -> Result<C64> {
        self.bulk_fixed.expectation(theta)
    }

    /// `Σ_{p<τ} 2^p D^p K_L(ρᶠ_{A,1,2})` paired with `H_3`.
    pub fn block_energy(&mut self, h: &Hamiltonian3, tau: u32) -> Result<f64> {
        let mut e = 0.0;
        for p in 0..tau {
            let w = (1u64 << p) as f64;
            e += w * linalg::trace_of_product(&h.h3, &self.descended(p)?).re;
        }
        Ok(e)
    }
}

pub fn local_average_infinite(t: &MeraTensors, theta: &LocalOperator, ell: u64) -> Result<C64> {
    check_theta(theta, t.d)?;
    Boundary::new(t)?.local_average(&theta.matrix, ell)
}

/// `log2`-linear least squares; returns `(slope, intercept, max |residual|)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileResult {
    /// `l = 2^k`.
    pub distances: Vec<u64>,
    pub values: Vec<C64>,
    pub bulk: C64,
    /// `|value - bulk|`.
    pub deviations: Vec<f64>,
    /// Exponents `k` that entered the fit.
    pub fitted: Vec<u32>,
    pub exponent: f64,
    pub amplitude: f64,
    pub residual: f64,
}

/// Evaluates the profile at `l = 2^0..2^k_hi` and fits `log2|value - bulk|`
/// against `log2 l` over `window`, skipping points below `floor`.
pub fn boundary_profile_with(b: &mut Boundary, theta: &CMat, window: (u32, u32), floor: f64) -> Result<ProfileResult> {
    let bulk = b.bulk_value(theta)?;
    let mut distances = Vec::new();
    let mut values = Vec::new();
    let mut deviations = Vec::new();
    for k in 0..=window.1 {
        let ell = 1u64 << k;
        let v = b.local_average(theta, ell)?;
        distances.push(ell);
        deviations.push((v - bulk).norm());
        values.push(v);
    }
    let fitted: Vec<u32> = (window.0..=window.1)
        .filter(|&k| deviations[k as usize] >= floor)
        .collect();
    if fitted.len() < 2 {
        return Err(Error::SignalBelowFloor { floor });
    }
    let xs: Vec<f64> = fitted.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = fitted.iter().map(|&k| deviations[k as usize].log2()).collect();
    let (slope, intercept, residual) = fit_line(&xs, &ys);
    Ok(ProfileResult {
        distances,
        values,
        bulk,
        deviations,
        fitted,
        exponent: -slope,
        amplitude: intercept.exp2(),
        residual,
    })
}

pub fn boundary_profile(t: &MeraTensors, theta: &LocalOperator, window: (u32, u32)) -> Result<ProfileResult> {
    check_theta(theta, t.d)?;
    boundary_profile_with(&mut Boundary::new(t)?, &theta.matrix, window, SIGNAL_FLOOR)
}

/// How the doubled descending map is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TwoPointMode {
    /// `D ⊗ D` with the averaged `D`.
    Product,
    /// `½(D_L ⊗ D_L + D_R ⊗ D_R)`.
    Split,
}

/// `(A ⊗ B)(X)` for `X` on two blocks, without forming `A ⊗ B`.
pub fn apply_doubled(a: &Superoperator, b: &Superoperator, x: &CMat) -> Result<CMat> {
    let (na, nb) = (a.din(), b.din());
    if x.nrows() != na * nb || !a.is_endomorphism() || !b.is_endomorphism() {
        return Err(mismatch("doubled operator does not match the maps"));
    }
    let t = Tensor::from_vec(&[na, nb, na, nb], linalg::mat_to_rm(x))?;
    // [i1, j1, i2, j2] -> (i1 j1) x (i2 j2)
    let p = t.permute(&[0, 2, 1, 3])?;
    let m = linalg::mat_from_rm(na * na, nb * nb, p.data());
    let y = &a.matrix * &m * b.matrix.transpose();
    let yt = Tensor::from_vec(&[na, na, nb, nb], linalg::mat_to_rm(&y))?;
    let back = yt.permute(&[0, 2, 1, 3])?;
    Ok(linalg::mat_from_rm(na * nb, na * nb, back.data()))
}

/// Bulk two-point data: the connected seed `σ` on two adjacent triples and
/// the doubled descending map.
#[derive(Clone, Debug)]
pub struct BulkTwoPoint {
    pub channels: ChannelSet,
    pub sigma: CMat,
    pub mode: TwoPointMode,
}

impl BulkTwoPoint {
    /// `σ = ρ₆ - ρ₃ ⊗ ρ₃'`, where `ρ₆` is the six-site block obtained by
    /// descending the fixed point of the four-site map once, and `ρ₃`, `ρ₃'`
    /// its two three-site marginals.
    pub fn new(t: &MeraTensors, mode: TwoPointMode) -> Result<Self> {
        let channels = ChannelSet::build(t)?;
        let (f4, g6) = build_four_site(t)?;
        let rho4 = spectral::fixed_point(&f4, FixedPointMethod::Eig, FIXED_POINT_TOL, FIXED_POINT_ITERS)?;
        let rho6 = DensityMatrix::new(g6.apply(&rho4.matrix)?, Site::run(1, 6, t.d))?;
        let a = rho6.partial_trace(&[0, 1, 2])?;
        let b = rho6.partial_trace(&[3, 4, 5])?;
        let prod = linalg::kron(&a.matrix, &b.matrix);
        Ok(Self {
            channels,
            sigma: &rho6.matrix - &prod,
            mode,
        })
    }

    pub fn step(&self, x: &CMat) -> Result<CMat> {
        match self.mode {
            TwoPointMode::Product => apply_doubled(&self.channels.average, &self.channels.average, x),
            TwoPointMode::Split => {
                let l = apply_doubled(&self.channels.descend_l, &self.channels.descend_l, x)?;
                let r = apply_doubled(&self.channels.descend_r, &self.channels.descend_r, x)?;
                Ok(CMat::from_fn(l.nrows(), l.ncols(), |i, j| (l[(i, j)] + r[(i, j)]) * 0.5))
            }
        }
    }

    /// `Tr[(Θ ⊗ Θ) D2^m(σ)]` for `m = 0..=m_max`.
    pub fn values(&self, theta: &CMat, m_max: u32) -> Result<Vec<C64>> {
        let tt = linalg::kron(theta, theta);
        let mut x = self.sigma.clone();
        let mut out = Vec::with_capacity(m_max as usize + 1);
        for m in 0..=m_max {
            if m > 0 {
                x = self.step(&x)?;
            }
            out.push(linalg::trace_of_product(&tt, &x));
        }
        Ok(out)
    }
}

pub fn bulk_correlator(t: &MeraTensors, theta: &LocalOperator, m: u32, mode: TwoPointMode) -> Result<C64> {
    check_theta(theta, t.d)?;
    Ok(*BulkTwoPoint::new(t, mode)?
        .values(&theta.matrix, m)?
        .last()
        .expect("m + 1 values"))
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorResult {
    /// `Δl = 2^m`.
    pub separations: Vec<u64>,
    pub values: Vec<C64>,
    pub fitted: Vec<u32>,
    pub exponent: f64,
    pub amplitude: f64,
    pub residual: f64,
}

pub fn correlator_profile(tp: &BulkTwoPoint, theta: &CMat, window: (u32, u32), floor: f64) -> Result<CorrelatorResult> {
    let values = tp.values(theta, window.1)?;
    let fitted: Vec<u32> = (window.0..=window.1)
        .filter(|&m| values[m as usize].norm() >= floor)
        .collect();
    if fitted.len() < 2 {
        return Err(Error::SignalBelowFloor { floor });
    }
    let xs: Vec<f64> = fitted.iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = fitted.iter().map(|&m| values[m as usize].norm().log2()).collect();
    let (slope, intercept, residual) = fit_line(&xs, &ys);
    Ok(CorrelatorResult {
        separations: (0..=window.1).map(|m| 1u64 << m).collect(),
        values,
        fitted,
        exponent: -slope,
        amplitude: intercept.exp2(),
        residual,
    })
}

pub fn block_energy(t: &MeraTensors, h: &Hamiltonian3, tau: u32) -> Result<f64> {
    if tau == 0 {
        return Err(mismatch("tau must be at least 1"));
    }
    Boundary::new(t)?.block_energy(h, tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlagMethod {
    /// Components in the eigenbasis of `D`.
    Eigenbasis,
    /// Ratio test on partial sums (ill-conditioned eigenbasis).
    RatioTest,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyDeviation {
    pub tau: u32,
    /// `ΔE` for the first `2^τ - 1` sites.
    pub value: f64,
    /// `ΔE` for `τ' = 1..=τ`.
    pub partial_sums: Vec<f64>,
    pub divergence_flag: bool,
    pub method: FlagMethod,
    /// `(κ, |component of X|)` over the eigenbasis of `D`, in eigenvalue order.
    pub components: Vec<(C64, f64)>,
    /// Component of `X` on the `κ = 1` eigenvector.
    pub unit_component: f64,
    /// Asymptotic ratio of successive term norms `‖2^p D^p X‖`.
    pub term_ratio: f64,
}

/// Norms `‖2^p D^p X‖_F` for `p = 0..terms`. With `fixed` given, the
/// component along the fixed point (the trace) is removed after every step so
/// that rounding in `Tr X` is not amplified by `2^p`.
pub fn term_norms(d: &Superoperator, x: &CMat, terms: usize, fixed: Option<&CMat>) -> Result<Vec<f64>> {
    let mut y = x.clone();
    let mut out = Vec::with_capacity(terms);
    for p in 0..terms {
        if p > 0 {
            y = d.apply(&y)?;
            if let Some(f) = fixed {
                project_traceless(&mut y, f);
            }
        }
        out.push((p as f64).exp2() * linalg::frobenius(&y));
    }
    Ok(out)
}

fn project_traceless(y: &mut CMat, fixed: &CMat) {
    let tr = linalg::trace(y);
    *y -= CMat::from_fn(y.nrows(), y.ncols(), |i, j| fixed[(i, j)] * tr);
}

/// Geometric-mean ratio of the last `span` steps of a positive sequence.
pub fn tail_ratio(a: &[f64], span: usize) -> f64 {
    let n = a.len();
    let span = span.min(n - 1);
    let (hi, lo) = (a[n - 1], a[n - 1 - span]);
    if lo == 0.0 {
        return 0.0;
    }
    (hi / lo).powf(1.0 / span as f64)
}

const RATIO_TERMS: usize = 40;
const RATIO_SPAN: usize = 10;

impl Boundary {
    /// `X = K_L(ρᶠ_{A,1,2}) - ρᶠ_3`.
    pub fn energy_seed(&self) -> CMat {
        &self.seed - &self.bulk_fixed.matrix
    }

    pub fn energy_deviation(&mut self, h: &Hamiltonian3, tau: u32) -> Result<EnergyDeviation> {
        if tau == 0 {
            return Err(mismatch("tau must be at least 1"));
        }
        let x = self.energy_seed();
        let d = self.channels.average.clone();
        let mut partial_sums = Vec::with_capacity(tau as usize);
        let mut y = x.clone();
        let mut acc = 0.0;
        for p in 0..tau {
            if p > 0 {
                y = d.apply(&y)?;
                project_traceless(&mut y, &self.bulk_fixed.matrix);
            }
            acc += (p as f64).exp2() * linalg::trace_of_product(&h.h3, &y).re;
            partial_sums.push(acc);
        }
        let norms = term_norms(&d, &x, RATIO_TERMS, Some(&self.bulk_fixed.matrix))?;
        let term_ratio = tail_ratio(&norms, RATIO_SPAN);

        let e = linalg::eig(&d.matrix, true)?;
        let left = e.left.as_ref().expect("requested");
        let v = linalg::vec_rm(&x);
        let components: Vec<(C64, f64)> = e
            .values
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let c: C64 = left.col(i).iter().zip(&v).map(|(w, x)| w.conj() * x).sum();
                (k, c.norm())
            })
            .collect();
        let unit_component = components[0].1;
        let (divergence_flag, method) = if e.condition()? > spectral::DEFECTIVE_CONDITION {
            (term_ratio >= 1.0, FlagMethod::RatioTest)
        } else {
            let flag = components
                .iter()
                .skip(1)
                .any(|&(k, c)| k.norm() >= 0.5 && c > COMPONENT_TOL);
            (flag, FlagMethod::Eigenbasis)
        };
        Ok(EnergyDeviation {
            tau,
            value: acc,
            partial_sums,
            divergence_flag,
            method,
            components,
            unit_component,
            term_ratio,
        })
    }
}

pub fn boundary_energy_deviation(t: &MeraTensors, h: &Hamiltonian3, tau: u32) -> Result<EnergyDeviation> {
    Boundary::new(t)?.energy_deviation(h, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MeraConfig;
    use crate::oracle::{Oracle, DEFAULT_BUDGET};

    fn tensors(m: usize, seed: u64) -> MeraTensors {
        MeraTensors::random_isometric(&MeraConfig::new(2, m, 2, seed).unwrap()).unwrap()
    }

    #[test]
    fn recursion_matches_oracle_at_depth_two() {
        let t = tensors(2, 42);
        let o = Oracle::new(&t, 2, DEFAULT_BUDGET).unwrap();
        let mut rec = FiniteRecursion::new(&t).unwrap();
        for j in 1..=14 {
            let a = rec.triple(2, j).unwrap();
            let b = o.triple(j).unwrap();
            assert!(linalg::max_abs_diff(&a, &b.matrix) < 1e-10, "triple {j}");
        }
        let l = rec.left_block(2).unwrap();
        assert!(linalg::max_abs_diff(&l, &o.left_block().unwrap().matrix) < 1e-10);
        let r = rec.right_block(2).unwrap();
        assert!(linalg::max_abs_diff(&r, &o.right_block().unwrap().matrix) < 1e-10);
    }

    #[test]
    fn averaged_recursion_identity() {
        let t = tensors(2, 3);
        let mut rec = FiniteRecursion::new(&t).unwrap();
        for level in 1..=4 {
            let lhs = rec.averaged_triple(level).unwrap();
            let rhs = rec.averaged_triple_recursion(level).unwrap();
            assert!(linalg::max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn identity_observable() {
        let t = tensors(2, 5);
        let id = LocalOperator::identity(2);
        assert!((local_average_finite(&t, &id, 7, 3).unwrap() - 1.0).norm() < 1e-12);
        assert!((local_average_infinite(&t, &id, 37).unwrap() - 1.0).norm() < 1e-12);
        assert!(matches!(
            boundary_profile(&t, &id, (0, 8)),
            Err(Error::SignalBelowFloor { .. })
        ));
    }

    #[test]
    fn doubled_application_matches_tensor_product() {
        let t = tensors(1, 9);
        let c = ChannelSet::build(&t).unwrap();
        let full = c.descend_l.tensor_product(&c.descend_r).unwrap();
        let g = Tensor::random_gaussian(&[64, 64], &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1));
        let x = linalg::mat_from_rm(64, 64, g.data());
        let a = apply_doubled(&c.descend_l, &c.descend_r, &x).unwrap();
        let b = full.apply(&x).unwrap();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn energy_identities() {
        let t = tensors(2, 4);
        let mut b = Boundary::new(&t).unwrap();
        let id = Hamiltonian3::identity(2);
        assert!((b.block_energy(&id, 3).unwrap() - 7.0).abs() < 1e-12);
        let dev = b.energy_deviation(&id, 5).unwrap();
        assert!(dev.value.abs() < 1e-12);
        assert!(dev.unit_component < 1e-10);
    }

    #[test]
    fn sigma_is_traceless() {
        let t = tensors(1, 2);
        let tp = BulkTwoPoint::new(&t, TwoPointMode::Product).unwrap();
        assert!(linalg::trace(&tp.sigma).norm() < 1e-12);
        let id = linalg::identity(8);
        for v in tp.values(&id, 4).unwrap() {
            assert!(v.norm() < 1e-12);
        }
    }
}
