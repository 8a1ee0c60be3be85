//! Variational search over the uniform boundary network.
//!
//! The cost is `bulk + weight * ΔE(τ)`. Both terms are written as traces of
//! `H_3` against channel towers whose tops are frozen at the current fixed
//! points:
//!
//! ```text
//! bulk = Tr[H D^L(ρᶠ)]
//! ΔE   = Σ_{p<τ} 2^p Tr[H D^p K_L B_L^L(ρᶠ_edge)] - Σ_{p<τ} 2^p Tr[H D^(L+p)(ρᶠ)]
//! ```
//!
//! The environment of a gate is the derivative of this cost with respect to
//! the conjugate gate, collected occurrence by occurrence through the
//! fragment diagrams. The gate is replaced by the polar isometry of
//! `β·old - E`, starting from `β = 0` and increasing `β` until the exact cost
//! does not go up; if no `β` works the old gate is kept.

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelSet, Superoperator};
use crate::diagram::{self, fragments, Diagram, Gate, GateKind, GateTensors};
use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, CMat};
use crate::models::Hamiltonian3;
use crate::network::{check_constraints, MeraConfig, MeraTensors};
use crate::spectral::{self, FixedPointMethod};
use crate::tensor::{Tensor, C64};

pub const DEFAULT_TAU: u32 = 4;
pub const DEFAULT_LAYERS: usize = 6;
/// Weight of the boundary term. `ΔE` is measured against the bulk density,
/// so a large weight rewards raising the bulk energy.
pub const DEFAULT_WEIGHT: f64 = 1e-3;
/// Constraint tolerance enforced after every update.
pub const UPDATE_TOL: f64 = 1e-12;
const STALL_SWEEPS: usize = 5;
const MAX_RESTARTS: u64 = 3;
const START_STRIDE: u64 = 1000;
const DAMPING: [f64; 7] = [0.0, 0.5, 2.0, 8.0, 32.0, 128.0, 1024.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Chi,
    Lambda,
    AlphaL,
    AlphaR,
    Hat,
}

fn default_which() -> Vec<TensorKind> {
    vec![TensorKind::Chi, TensorKind::Lambda, TensorKind::AlphaL, TensorKind::AlphaR]
}
fn default_weight() -> f64 {
    DEFAULT_WEIGHT
}
fn default_tau() -> u32 {
    DEFAULT_TAU
}
fn default_layers() -> usize {
    DEFAULT_LAYERS
}
fn default_starts() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub sweeps: usize,
    #[serde(default = "default_which")]
    pub which: Vec<TensorKind>,
    /// Stop once the per-sweep decrease stays below this for five sweeps.
    #[serde(default)]
    pub tol_energy: f64,
    /// Seed for restarts when the starting network is not mixing.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_tau")]
    pub tau: u32,
    /// Layers in the frozen-top tower.
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Independent starts; the first is the given network, the others are
    /// drawn from `seed`. The lowest final cost wins.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

impl OptimizeConfig {
    pub fn new(sweeps: usize) -> Self {
        Self {
            sweeps,
            which: default_which(),
            tol_energy: 0.0,
            seed: 0,
            weight: DEFAULT_WEIGHT,
            tau: DEFAULT_TAU,
            layers: DEFAULT_LAYERS,
            starts: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidConfig("sweeps must be at least 1".into()));
        }
        if self.tau == 0 || self.layers == 0 || self.starts == 0 {
            return Err(Error::InvalidConfig("tau, layers and starts must be at least 1".into()));
        }
        if !(self.weight.is_finite() && self.tol_energy.is_finite() && self.tol_energy >= 0.0) {
            return Err(Error::InvalidConfig("weight and tol_energy must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyValue {
    /// `Tr[H_3 ρᶠ_3]`.
    pub bulk: f64,
    /// `ΔE` at the configured `τ`.
    pub deviation: f64,
}

impl EnergyValue {
    pub fn cost(&self, weight: f64) -> f64 {
        self.bulk + weight * self.deviation
    }
}

struct FixedPoints {
    bulk: CMat,
    edge: CMat,
}

fn fixed_points(c: &ChannelSet) -> Result<FixedPoints> {
    let fp = |s: &Superoperator| spectral::fixed_point(s, FixedPointMethod::Eig, 1e-12, 100_000);
    Ok(FixedPoints {
        bulk: fp(&c.average)?.matrix,
        edge: fp(&c.stable_l)?.matrix,
    })
}

fn energy_from(c: &ChannelSet, fp: &FixedPoints, h: &Hamiltonian3, tau: u32) -> Result<EnergyValue> {
    let bulk = linalg::trace_of_product(&h.h3, &fp.bulk).re;
    let mut y = &c.absorb_l.apply(&fp.edge)? - &fp.bulk;
    let mut dev = 0.0;
    for p in 0..tau {
        if p > 0 {
            y = c.average.apply(&y)?;
        }
        dev += (p as f64).exp2() * linalg::trace_of_product(&h.h3, &y).re;
    }
    Ok(EnergyValue { bulk, deviation: dev })
}

/// `(Tr[H ρᶠ_3], ΔE(τ = 4))`.
pub fn energy_functional(t: &MeraTensors, h: &Hamiltonian3) -> Result<EnergyValue> {
    energy_functional_at(t, h, DEFAULT_TAU)
}

pub fn energy_functional_at(t: &MeraTensors, h: &Hamiltonian3, tau: u32) -> Result<EnergyValue> {
    if h.dim() != t.d.pow(3) {
        return Err(mismatch("Hamiltonian does not match the site dimension"));
    }
    let c = ChannelSet::build_unchecked(t)?;
    energy_from(&c, &fixed_points(&c)?, h, tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MapId {
    DescendL,
    DescendR,
    AbsorbL,
    StableL,
}

const MAPS: [MapId; 4] = [MapId::DescendL, MapId::DescendR, MapId::AbsorbL, MapId::StableL];

impl MapId {
    fn diagram(self) -> Diagram {
        match self {
            MapId::DescendL => fragments::descend(true),
            MapId::DescendR => fragments::descend(false),
            MapId::AbsorbL => fragments::left_edge(true),
            MapId::StableL => fragments::left_edge(false),
        }
    }
    fn index(self) -> usize {
        self as usize
    }
}

/// One step of a tower: either a single map or the average of the two
/// descending maps.
#[derive(Clone, Copy)]
enum Step {
    D,
    K,
    B,
}

/// Per-map accumulator of `Σ c (Y ⊗ 1) V ρ`, shape `(kept·traced) x inputs`.
struct Accumulators {
    /// `V` regrouped as `kept x (traced·inputs)`.
    v: Vec<CMat>,
    acc: Vec<CMat>,
    traced: Vec<usize>,
}

impl Accumulators {
    fn new(t: &MeraTensors, g: &GateTensors) -> Result<Self> {
        let (mut v, mut acc, mut traced) = (Vec::new(), Vec::new(), Vec::new());
        for id in MAPS {
            let dia = id.diagram();
            let iso = dia.isometry(g, t.d, t.m)?;
            let din: usize = dia.input_dims(t.d, t.m).iter().product();
            let tr: usize = dia.traced_dims(t.d, t.m).iter().product();
            let rows = iso.len() / din;
            // row-major (k, t, i) read as k x (t, i)
            v.push(linalg::mat_from_rm(rows / tr, tr * din, iso.data()));
            acc.push(CMat::zeros(rows, din));
            traced.push(tr);
        }
        Ok(Self { v, acc, traced })
    }

    fn add(&mut self, id: MapId, coef: f64, y: &CMat, rho: &CMat) {
        let i = id.index();
        let tr = self.traced[i];
        let w = y * &self.v[i];
        let din = rho.nrows();
        let w = CMat::from_fn(w.nrows() * tr, din, |r, c| w[(r / tr, (r % tr) * din + c)]);
        let term = &w * rho;
        let c = C64::new(coef, 0.0);
        self.acc[i] += CMat::from_fn(term.nrows(), term.ncols(), |a, b| term[(a, b)] * c);
    }
}

fn forward(c: &ChannelSet, step: Step, x: &CMat) -> Result<CMat> {
    match step {
        Step::D => c.average.apply(x),
        Step::K => c.absorb_l.apply(x),
        Step::B => c.stable_l.apply(x),
    }
}

fn backward(c: &ChannelSet, step: Step, y: &CMat) -> Result<CMat> {
    match step {
        Step::D => c.average.adjoint_apply(y),
        Step::K => c.absorb_l.adjoint_apply(y),
        Step::B => c.stable_l.adjoint_apply(y),
    }
}

/// Adds the contributions of `coef · Tr[H · steps(ρ)]` (steps applied in
/// order) to the accumulators.
fn add_chain(
    c: &ChannelSet,
    acc: &mut Accumulators,
    steps: &[Step],
    rho: &CMat,
    h: &CMat,
    coef: f64,
) -> Result<()> {
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(rho.clone());
    for &s in steps {
        let next = forward(c, s, states.last().expect("nonempty"))?;
        states.push(next);
    }
    let mut y = h.clone();
    for (k, &s) in steps.iter().enumerate().rev() {
        let input = &states[k];
        match s {
            Step::D => {
                acc.add(MapId::DescendL, 0.5 * coef, &y, input);
                acc.add(MapId::DescendR, 0.5 * coef, &y, input);
            }
            Step::K => acc.add(MapId::AbsorbL, coef, &y, input),
            Step::B => acc.add(MapId::StableL, coef, &y, input),
        }
        y = backward(c, s, &y)?;
    }
    Ok(())
}

fn gate_kind(kind: TensorKind) -> Option<GateKind> {
    match kind {
        TensorKind::Chi => Some(GateKind::Chi),
        TensorKind::Lambda => Some(GateKind::Lambda),
        TensorKind::AlphaL => Some(GateKind::AlphaL),
        TensorKind::AlphaR => Some(GateKind::AlphaR),
        TensorKind::Hat => None,
    }
}

/// Environments (derivatives of the tower cost with respect to the
/// conjugated gate, in gate layout) for the requested kinds.
pub struct Environments {
    pub value: f64,
    pub gates: Vec<(GateKind, Tensor)>,
}

/// Tower cost and environments with the tops frozen at the fixed points of
/// `frozen` (usually `t` itself).
pub fn environments(
    t: &MeraTensors,
    frozen: (&CMat, &CMat),
    h: &Hamiltonian3,
    cfg: &OptimizeConfig,
    kinds: &[GateKind],
) -> Result<Environments> {
    let g = GateTensors::new(t)?;
    let c = ChannelSet::build_unchecked(t)?;
    let (rho_b, rho_e) = frozen;
    let mut acc = Accumulators::new(t, &g)?;
    let l = cfg.layers;
    let w = cfg.weight;

    let mut value = 0.0;
    let mut run = |steps: Vec<Step>, rho: &CMat, coef: f64, acc: &mut Accumulators| -> Result<()> {
        let mut x = rho.clone();
        for &s in &steps {
            x = forward(&c, s, &x)?;
        }
        value += coef * linalg::trace_of_product(&h.h3, &x).re;
        add_chain(&c, acc, &steps, rho, &h.h3, coef)
    };
    run(vec![Step::D; l], rho_b, 1.0, &mut acc)?;
    if w != 0.0 {
        for p in 0..cfg.tau as usize {
            let coef = w * (p as f64).exp2();
            let mut steps = vec![Step::B; l];
            steps.push(Step::K);
            steps.extend(std::iter::repeat_n(Step::D, p));
            run(steps, rho_e, coef, &mut acc)?;
            run(vec![Step::D; l + p], rho_b, -coef, &mut acc)?;
        }
    }

    let mut gates = Vec::new();
    for &kind in kinds {
        let op = g.get(kind);
        let mut env = Tensor::zeros(op.shape());
        for id in MAPS {
            let dia = id.diagram();
            let a = &acc.acc[id.index()];
            if linalg::max_abs(a) == 0.0 {
                continue;
            }
            for (i, gate) in dia.gates.iter().enumerate() {
                if gate.kind() != kind {
                    continue;
                }
                probe_occurrence(&dia, i, &g, t, a, &mut env)?;
            }
        }
        gates.push((kind, env));
    }
    Ok(Environments { value, gates })
}

/// `env[b] += Σ conj(V_b) ⊙ A`, where `V_b` is the fragment with gate `i`
/// replaced by the `b`-th unit tensor.
fn probe_occurrence(dia: &Diagram, i: usize, g: &GateTensors, t: &MeraTensors, a: &CMat, env: &mut Tensor) -> Result<()> {
    let shape = g.get(dia.gates[i].kind()).shape().to_vec();
    let size: usize = shape.iter().product();
    let ad = linalg::mat_to_rm(a);
    for b in 0..size {
        let vb = dia.isometry_with(t.d, t.m, |j, gate: &Gate| {
            if j == i {
                let mut e = Tensor::zeros(&shape);
                e.data_mut()[b] = C64::new(1.0, 0.0);
                Ok(e)
            } else {
                Ok(g.get(gate.kind()).clone())
            }
        })?;
        let s: C64 = vb.data().iter().zip(&ad).map(|(v, x)| v.conj() * x).sum();
        env.data_mut()[b] += s;
    }
    Ok(())
}

/// Gate-form tensor as the matrix `(outs) x (ins)`.
fn gate_matrix(kind: GateKind, op: &Tensor) -> CMat {
    let cols: usize = match kind {
        GateKind::Lambda => op.shape()[2],
        _ => op.shape()[2] * op.shape()[3],
    };
    linalg::mat_from_rm(op.len() / cols, cols, op.data())
}

fn with_gate(t: &MeraTensors, kind: GateKind, op: &Tensor, tie_alpha: bool) -> Result<MeraTensors> {
    let stored = diagram::stored_from_gate(kind, op)?;
    let mut out = t.clone();
    match kind {
        GateKind::Chi => out.chi = stored,
        GateKind::Lambda => out.lambda = stored,
        GateKind::AlphaL => {
            if tie_alpha {
                out.alpha_r = stored.clone();
            }
            out.alpha_l = stored;
        }
        GateKind::AlphaR => out.alpha_r = stored,
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub tensors: MeraTensors,
    /// Cost before the first sweep, then after every sweep.
    pub trace: Vec<f64>,
    pub energy: EnergyValue,
    pub sweeps: usize,
    /// Set when the run stopped because five consecutive sweeps decreased
    /// the cost by less than `tol_energy`.
    pub stalled: bool,
    /// Fresh seeds used because the start was not mixing.
    pub restarts: u64,
    /// Which start produced the result.
    pub start: usize,
}

struct Evaluation {
    cost: f64,
    energy: EnergyValue,
    fixed: FixedPoints,
}

/// Exact cost, or `None` when the candidate is not mixing.
fn evaluate(t: &MeraTensors, h: &Hamiltonian3, cfg: &OptimizeConfig) -> Result<Option<Evaluation>> {
    let c = ChannelSet::build_unchecked(t)?;
    let fixed = match fixed_points(&c) {
        Ok(f) => f,
        Err(Error::NotMixing { .. } | Error::ConvergenceFailure(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let energy = energy_from(&c, &fixed, h, cfg.tau)?;
    Ok(Some(Evaluation {
        cost: energy.cost(cfg.weight),
        energy,
        fixed,
    }))
}

pub fn optimize(t0: &MeraTensors, h: &Hamiltonian3, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    cfg.validate()?;
    if h.dim() != t0.d.pow(3) {
        return Err(mismatch("Hamiltonian does not match the site dimension"));
    }
    check_constraints(t0).require(1e-10)?;
    let mut best = optimize_from(t0.clone(), h, cfg, 0)?;
    for k in 1..cfg.starts {
        let t = fresh(t0, cfg.seed.wrapping_add(START_STRIDE * k as u64))?;
        let r = optimize_from(t, h, cfg, k)?;
        if r.trace.last() < best.trace.last() {
            best = r;
        }
    }
    Ok(best)
}

/// Random network with the shape, hat and boundary tie of `t0`.
fn fresh(t0: &MeraTensors, seed: u64) -> Result<MeraTensors> {
    let mut c = MeraConfig::new(t0.d, t0.m, 1, seed)?;
    c.mirror_boundary = t0.alpha_l == t0.alpha_r;
    let mut t = MeraTensors::random_isometric(&c)?;
    t.hat = t0.hat.clone();
    Ok(t)
}

fn optimize_from(t0: MeraTensors, h: &Hamiltonian3, cfg: &OptimizeConfig, start: usize) -> Result<OptimizeResult> {
    let mut t = t0.clone();
    let mut restarts = 0;
    let mut cur = loop {
        match evaluate(&t, h, cfg)? {
            Some(x) => break x,
            None if restarts < MAX_RESTARTS => {
                restarts += 1;
                t = fresh(&t0, cfg.seed.wrapping_add(START_STRIDE * start as u64 + restarts))?;
            }
            None => return Err(energy_functional_at(&t, h, cfg.tau).expect_err("not mixing")),
        }
    };
    let tie_alpha = t.alpha_l == t.alpha_r;
    let kinds: Vec<GateKind> = cfg.which.iter().filter_map(|&k| gate_kind(k)).collect();
    let mut trace = vec![cur.cost];
    let mut small = 0;
    let mut stalled = false;
    let mut sweeps = 0;
    for _ in 0..cfg.sweeps {
        sweeps += 1;
        let before = cur.cost;
        for &kind in &kinds {
            let env = environments(&t, (&cur.fixed.bulk, &cur.fixed.edge), h, cfg, &[kind])?;
            let e = &env.gates[0].1;
            if e.max_abs() == 0.0 {
                continue;
            }
            let g = GateTensors::new(&t)?;
            let old = gate_matrix(kind, g.get(kind));
            let em = gate_matrix(kind, e);
            let scale = linalg::frobenius(&em);
            for beta in DAMPING {
                let target = CMat::from_fn(old.nrows(), old.ncols(), |a, b| {
                    old[(a, b)] * (beta * scale) - em[(a, b)]
                });
                let new = linalg::polar_isometry(&target)?;
                let op = Tensor::from_vec(g.get(kind).shape(), linalg::mat_to_rm(&new))?;
                let cand = with_gate(&t, kind, &op, tie_alpha)?;
                if !check_constraints(&cand).passes(UPDATE_TOL) {
                    continue;
                }
                if let Some(ev) = evaluate(&cand, h, cfg)? {
                    if ev.cost <= cur.cost {
                        t = cand;
                        cur = ev;
                        break;
                    }
                }
            }
        }
        trace.push(cur.cost);
        if before - cur.cost < cfg.tol_energy {
            small += 1;
            if small >= STALL_SWEEPS {
                stalled = true;
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok(OptimizeResult {
        tensors: t,
        trace,
        energy: cur.energy,
        sweeps,
        stalled,
        restarts,
        start,
    })
}

/// Resumable checkpoint: tensors plus the cost trace so far.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: Option<MeraConfig>,
    pub optimize: OptimizeConfig,
    pub tensors: MeraTensors,
    pub trace: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        c.tensors.check_shapes()?;
        Ok(c)
    }

    /// Continues the run for `cfg.sweeps` more sweeps, appending to the trace.
    pub fn resume(&self, h: &Hamiltonian3) -> Result<(Checkpoint, OptimizeResult)> {
        let r = optimize(&self.tensors, h, &self.optimize)?;
        let mut trace = self.trace.clone();
        trace.extend_from_slice(if trace.is_empty() { &r.trace } else { &r.trace[1..] });
        let next = Checkpoint {
            config: self.config.clone(),
            optimize: self.optimize.clone(),
            tensors: r.tensors.clone(),
            trace,
        };
        Ok((next, r))
    }
}
