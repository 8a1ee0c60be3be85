//! Brute-force reference: contract the whole network into the pure state on
//! `A, 1..N, A'` and take exact partial traces.
//!
//! The layer schedule is applied from global wiring rules (every site split,
//! couplers on the two edges, disentanglers on `(2s, 2s+1)`), never from the
//! channel fragments, so agreement with [`crate::channels`] is a genuine
//! cross-check.
//!
//! When the full state at depth `n` exceeds the amplitude budget, the state at
//! `n - 1` is built instead and one more layer is applied to the reduced
//! density matrix of a window: the parents of the requested sites and of
//! their gate partners. Gates outside the window act only on traced wires.

use std::collections::BTreeSet;

use crate::channels::{DensityMatrix, Site, SiteLabel};
use crate::diagram::GateTensors;
use crate::error::{mismatch, Error, Result};
use crate::linalg::CMat;
use crate::network::{check_constraints, system_size, MeraTensors, HARD_FAIL_TOL};
use crate::tensor::{Tensor, C64, ZERO};

/// Default amplitude budget (2^24 complex doubles, 256 MiB).
pub const DEFAULT_BUDGET: u128 = 1 << 24;

/// Tensor whose axes come in contiguous groups of labeled legs (one group
/// for a pure state, a ket group and a bra group for an operator).
#[derive(Clone, Debug)]
struct Labeled {
    groups: Vec<Vec<SiteLabel>>,
    t: Tensor,
}

impl Labeled {
    fn offset(&self, g: usize) -> usize {
        self.groups[..g].iter().map(|x| x.len()).sum()
    }

    fn has(&self, l: SiteLabel) -> bool {
        self.groups[0].contains(&l)
    }

    fn pos(&self, g: usize, l: SiteLabel) -> Result<usize> {
        self.groups[g]
            .iter()
            .position(|&x| x == l)
            .ok_or_else(|| mismatch(format!("label {l:?} missing")))
    }

    /// Applies `op` (operator form) to `targets` in every group, using
    /// `conj(op)` on groups after the first.
    fn apply(&mut self, op: &Tensor, targets: &[SiteLabel], outs: &[SiteLabel]) -> Result<()> {
        let opc = op.conj();
        for g in 0..self.groups.len() {
            let off = self.offset(g);
            let local: Vec<usize> = targets
                .iter()
                .map(|&l| self.pos(g, l))
                .collect::<Result<_>>()?;
            let axes: Vec<usize> = local.iter().map(|p| p + off).collect();
            self.t = self.t.apply_on_axes(if g == 0 { op } else { &opc }, &axes)?;
            let first = local[0];
            let insert = (0..first).filter(|k| !local.contains(k)).count();
            let grp = &mut self.groups[g];
            grp.retain(|x| !targets.contains(x));
            grp.splice(insert..insert, outs.iter().copied());
        }
        Ok(())
    }

    /// Traces a leg out of a ket/bra pair of groups.
    fn trace_out(&mut self, l: SiteLabel) -> Result<()> {
        if self.groups.len() != 2 {
            return Err(mismatch("trace_out needs a ket and a bra group"));
        }
        let pk = self.pos(0, l)?;
        let pb = self.pos(1, l)? + self.offset(1);
        let dim = self.t.shape()[pk];
        self.t = self.t.contract(&Tensor::eye(dim), &[(pk, 0), (pb, 1)])?;
        self.groups[0].remove(pk);
        let pbl = self.pos(1, l)?;
        self.groups[1].remove(pbl);
        Ok(())
    }

    /// Refines one layer: `coarse_sites` is the chain length `M` before the
    /// layer. Gates whose legs are not all present are skipped; callers
    /// guarantee that skipped gates only touch traced wires. After each
    /// split, children outside `keep` are traced (operator form only).
    fn refine(
        &mut self,
        g: &GateTensors,
        coarse_sites: i64,
        keep: Option<&BTreeSet<SiteLabel>>,
    ) -> Result<()> {
        let m = coarse_sites;
        let parents: Vec<i64> = self.groups[0]
            .iter()
            .filter_map(|l| match l {
                SiteLabel::Pos(s) => Some(*s),
                _ => None,
            })
            .collect();
        // Split right to left so labels never collide.
        for &s in parents.iter().rev() {
            let kids = [SiteLabel::Pos(2 * s - 1), SiteLabel::Pos(2 * s)];
            self.apply(&g.lambda, &[SiteLabel::Pos(s)], &kids)?;
            if let Some(keep) = keep {
                for k in kids {
                    if !keep.contains(&k) {
                        self.trace_out(k)?;
                    }
                }
            }
        }
        let fine = |s: i64| SiteLabel::Pos(s);
        if self.has(SiteLabel::AncL) && self.has(fine(1)) {
            self.apply(&g.alpha_l, &[SiteLabel::AncL, fine(1)], &[SiteLabel::AncL, fine(1)])?;
        }
        if self.has(SiteLabel::AncR) && self.has(fine(2 * m)) {
            self.apply(&g.alpha_r, &[fine(2 * m), SiteLabel::AncR], &[fine(2 * m), SiteLabel::AncR])?;
        }
        for s in 1..m {
            let (a, b) = (fine(2 * s), fine(2 * s + 1));
            if self.has(a) && self.has(b) {
                self.apply(&g.chi, &[a, b], &[a, b])?;
            }
        }
        if let Some(keep) = keep {
            let drop: Vec<SiteLabel> = self.groups[0]
                .iter()
                .filter(|l| !keep.contains(l))
                .copied()
                .collect();
            for l in drop {
                self.trace_out(l)?;
            }
        }
        Ok(())
    }
}

/// The exact state of a depth-`n` network on `(A, 1..N, A')`.
#[derive(Clone, Debug)]
pub struct FullState {
    pub n: u32,
    pub d: usize,
    pub m: usize,
    /// Shape `(m, d, ..., d, m)`.
    pub amplitudes: Tensor,
}

impl FullState {
    pub fn system_size(&self) -> u64 {
        system_size(self.n)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    fn axis_of(&self, l: SiteLabel) -> Result<usize> {
        let n = self.system_size() as i64;
        match l {
            SiteLabel::AncL => Ok(0),
            SiteLabel::AncR => Ok(n as usize + 1),
            SiteLabel::Pos(s) if (1..=n).contains(&s) => Ok(s as usize),
            SiteLabel::Pos(s) => Err(Error::SiteOutOfRange {
                site: s,
                reason: format!("chain has sites 1..={n}"),
            }),
        }
    }

    fn site(&self, l: SiteLabel) -> Site {
        match l {
            SiteLabel::AncL => Site::anc_l(self.m),
            SiteLabel::AncR => Site::anc_r(self.m),
            SiteLabel::Pos(s) => Site::site(s, self.d),
        }
    }
}

/// Amplitude count of the depth-`n` state.
pub fn state_size(d: usize, m: usize, n: u32) -> u128 {
    let sites = system_size(n) as u32;
    (d as u128)
        .checked_pow(sites)
        .unwrap_or(u128::MAX)
        .saturating_mul((m * m) as u128)
}

pub fn build_state(t: &MeraTensors, n: u32, budget: u128) -> Result<FullState> {
    check_constraints(t).require(HARD_FAIL_TOL)?;
    let needed = state_size(t.d, t.m, n);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let g = GateTensors::new(t)?;
    let mut labels = vec![SiteLabel::AncL];
    labels.extend((1..=4).map(SiteLabel::Pos));
    labels.push(SiteLabel::AncR);
    let mut st = Labeled {
        groups: vec![labels],
        t: t.hat.clone(),
    };
    for level in 0..n {
        st.refine(&g, system_size(level) as i64, None)?;
    }
    let nsys = system_size(n) as i64;
    let mut want = vec![SiteLabel::AncL];
    want.extend((1..=nsys).map(SiteLabel::Pos));
    want.push(SiteLabel::AncR);
    if st.groups[0] != want {
        return Err(mismatch("leg order after contraction is not A, 1..N, A'"));
    }
    Ok(FullState {
        n,
        d: t.d,
        m: t.m,
        amplitudes: st.t,
    })
}

/// Exact partial trace by explicit summation over the complement.
fn reduced_matrix(state: &FullState, labels: &[SiteLabel]) -> Result<CMat> {
    let mut axes = Vec::with_capacity(labels.len());
    for &l in labels {
        let a = state.axis_of(l)?;
        if axes.contains(&a) {
            return Err(mismatch(format!("site {l:?} listed twice")));
        }
        axes.push(a);
    }
    let rank = state.amplitudes.rank();
    let mut order = axes.clone();
    order.extend((0..rank).filter(|k| !axes.contains(k)));
    let p = state.amplitudes.permute(&order)?;
    let k: usize = axes.iter().map(|&a| state.amplitudes.shape()[a]).product();
    let r = p.len() / k;
    let psi = p.data();
    let mut rho = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let mut acc = ZERO;
            let (ri, rj) = (&psi[i * r..(i + 1) * r], &psi[j * r..(j + 1) * r]);
            for (x, y) in ri.iter().zip(rj) {
                acc += x * y.conj();
            }
            rho[(i, j)] = acc;
            rho[(j, i)] = acc.conj();
        }
    }
    Ok(rho)
}

pub fn reduced_dm(state: &FullState, sites: &[SiteLabel]) -> Result<DensityMatrix> {
    let rho = reduced_matrix(state, sites)?;
    DensityMatrix::new(rho, sites.iter().map(|&l| state.site(l)).collect())
}

/// Exact density matrices of a depth-`n` network, either from the full state
/// or, past the budget, from the depth `n-1` state plus one windowed layer.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub n: u32,
    state: FullState,
    refine: Option<GateTensors>,
}

impl Oracle {
    pub fn new(t: &MeraTensors, n: u32, budget: u128) -> Result<Self> {
        if state_size(t.d, t.m, n) <= budget {
            return Ok(Self {
                n,
                state: build_state(t, n, budget)?,
                refine: None,
            });
        }
        if n == 0 {
            return Err(Error::BudgetExceeded {
                needed: state_size(t.d, t.m, n),
                budget,
            });
        }
        Ok(Self {
            n,
            state: build_state(t, n - 1, budget)?,
            refine: Some(GateTensors::new(t)?),
        })
    }

    /// Forces the windowed path (used to validate it against full states).
    pub fn windowed(t: &MeraTensors, n: u32, budget: u128) -> Result<Self> {
        if n == 0 {
            return Err(mismatch("windowed oracle needs n >= 1"));
        }
        Ok(Self {
            n,
            state: build_state(t, n - 1, budget)?,
            refine: Some(GateTensors::new(t)?),
        })
    }

    pub fn full_state(&self) -> Option<&FullState> {
        self.refine.is_none().then_some(&self.state)
    }

    pub fn system_size(&self) -> u64 {
        system_size(self.n)
    }

    fn site(&self, l: SiteLabel) -> Site {
        match l {
            SiteLabel::AncL => Site::anc_l(self.state.m),
            SiteLabel::AncR => Site::anc_r(self.state.m),
            SiteLabel::Pos(s) => Site::site(s, self.state.d),
        }
    }

    pub fn reduced(&self, sites: &[SiteLabel]) -> Result<DensityMatrix> {
        let Some(g) = &self.refine else {
            return reduced_dm(&self.state, sites);
        };
        let n_fine = self.system_size() as i64;
        let m_coarse = n_fine / 2;
        for &l in sites {
            if let SiteLabel::Pos(s) = l {
                if !(1..=n_fine).contains(&s) {
                    return Err(Error::SiteOutOfRange {
                        site: s,
                        reason: format!("chain has sites 1..={n_fine}"),
                    });
                }
            }
        }
        // Requested legs plus their gate partners in the last layer.
        let mut keep: BTreeSet<SiteLabel> = sites.iter().copied().collect();
        for &l in sites {
            match l {
                SiteLabel::AncL => {
                    keep.insert(SiteLabel::Pos(1));
                }
                SiteLabel::AncR => {
                    keep.insert(SiteLabel::Pos(n_fine));
                }
                SiteLabel::Pos(s) => {
                    if s == 1 {
                        keep.insert(SiteLabel::AncL);
                    }
                    if s == n_fine {
                        keep.insert(SiteLabel::AncR);
                    }
                    let partner = if s % 2 == 0 { s + 1 } else { s - 1 };
                    if (1..=n_fine).contains(&partner) {
                        keep.insert(SiteLabel::Pos(partner));
                    }
                }
            }
        }
        let mut window: BTreeSet<SiteLabel> = BTreeSet::new();
        for &l in &keep {
            window.insert(match l {
                SiteLabel::Pos(s) => SiteLabel::Pos((s + 1) / 2),
                other => other,
            });
        }
        // A coarse edge site drags its ancilla in so the coupler is applied.
        if window.contains(&SiteLabel::Pos(1)) {
            window.insert(SiteLabel::AncL);
        }
        if window.contains(&SiteLabel::Pos(m_coarse)) {
            window.insert(SiteLabel::AncR);
        }
        let wl: Vec<SiteLabel> = window.iter().copied().collect();
        let rho = reduced_matrix(&self.state, &wl)?;
        let dims: Vec<usize> = wl.iter().map(|&l| self.state.site(l).dim).collect();
        let mut shape = dims.clone();
        shape.extend_from_slice(&dims);
        let mut op = Labeled {
            groups: vec![wl.clone(), wl],
            t: Tensor::from_vec(&shape, crate::linalg::mat_to_rm(&rho))?,
        };
        // Ancillas pulled in only for the coupler are traced afterwards too.
        op.refine(g, m_coarse, Some(&keep))?;
        for l in op.groups[0].clone() {
            if !sites.contains(&l) {
                op.trace_out(l)?;
            }
        }
        let order: Vec<usize> = sites
            .iter()
            .map(|&l| op.pos(0, l))
            .collect::<Result<_>>()?;
        let k = order.len();
        let mut perm = order.clone();
        perm.extend(order.iter().map(|p| p + k));
        let p = op.t.permute(&perm)?;
        let dim: usize = sites.iter().map(|&l| self.site(l).dim).product();
        let m = crate::linalg::mat_from_rm(dim, dim, p.data());
        DensityMatrix::new(m, sites.iter().map(|&l| self.site(l)).collect())
    }

    pub fn triple(&self, ell: i64) -> Result<DensityMatrix> {
        let n = self.system_size() as i64;
        if ell < 1 || ell > n - 2 {
            return Err(Error::SiteOutOfRange {
                site: ell,
                reason: format!("triples start at 1..={}", n - 2),
            });
        }
        self.reduced(&[SiteLabel::Pos(ell), SiteLabel::Pos(ell + 1), SiteLabel::Pos(ell + 2)])
    }

    pub fn left_block(&self) -> Result<DensityMatrix> {
        self.reduced(&[SiteLabel::AncL, SiteLabel::Pos(1), SiteLabel::Pos(2)])
    }

    pub fn right_block(&self) -> Result<DensityMatrix> {
        let n = self.system_size() as i64;
        self.reduced(&[SiteLabel::Pos(n - 1), SiteLabel::Pos(n), SiteLabel::AncR])
    }

    pub fn expectation(&self, theta: &CMat, ell: i64) -> Result<C64> {
        self.triple(ell)?.expectation(theta)
    }

    /// `<Θ_l Θ_l'> - <Θ_l><Θ_l'>` for disjoint triples.
    pub fn correlator(&self, theta: &CMat, ell: i64, ell2: i64) -> Result<C64> {
        let (a, b) = (ell.min(ell2), ell.max(ell2));
        if b - a < 3 {
            return Err(Error::OverlappingSupports {
                a: a.max(0) as usize,
                b: b.max(0) as usize,
            });
        }
        let n = self.system_size() as i64;
        if a < 1 || b > n - 2 {
            return Err(Error::SiteOutOfRange {
                site: if a < 1 { a } else { b },
                reason: format!("triples start at 1..={}", n - 2),
            });
        }
        let labels: Vec<SiteLabel> = (a..a + 3).chain(b..b + 3).map(SiteLabel::Pos).collect();
        let rho = self.reduced(&labels)?;
        let joint = rho.expectation(&crate::linalg::kron(theta, theta))?;
        let ea = rho.partial_trace(&[0, 1, 2])?.expectation(theta)?;
        let eb = rho.partial_trace(&[3, 4, 5])?.expectation(theta)?;
        Ok(joint - ea * eb)
    }
}

pub fn exact_expectation(state: &FullState, theta: &CMat, ell: i64) -> Result<C64> {
    let dm = reduced_dm(
        state,
        &[SiteLabel::Pos(ell), SiteLabel::Pos(ell + 1), SiteLabel::Pos(ell + 2)],
    )?;
    dm.expectation(theta)
}

pub fn exact_correlator(state: &FullState, theta: &CMat, ell: i64, ell2: i64) -> Result<C64> {
    Oracle {
        n: state.n,
        state: state.clone(),
        refine: None,
    }
    .correlator(theta, ell, ell2)
}
