use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use bmera::channels::{twopoint_real_form, ChannelSet};
use bmera::io::TensorFile;
use bmera::linalg::{self, CMat};
use bmera::models::{pauli_string, Hamiltonian3, LocalOperator};
use bmera::network::{check_constraints, system_size, MeraTensors};
use bmera::observables::{
    boundary_profile_with, correlator_profile, Boundary, BulkTwoPoint, FiniteRecursion, TwoPointMode,
};
use bmera::optimizer::{optimize, Checkpoint, OptimizeResult};
use bmera::oracle::Oracle;
use bmera::spectral::{self, SpectrumReport};
use bmera::{Error, C64};

use crate::config::{Mode, OperatorSpec, RunConfig};
use crate::output::{num, re_im, Table};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Lib(Error),
    /// Tensors load fine but break a constraint; one entry per offender.
    Constraints(Vec<String>),
    OracleMismatch { discrepancy: f64, tolerance: f64 },
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Constraints(_) => 2,
            Failure::OracleMismatch { .. } => 4,
            Failure::Lib(e) => match e {
                Error::ConstraintViolation { .. } => 2,
                Error::NotMixing { .. } => 3,
                Error::BudgetExceeded { .. } => 5,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(s) => write!(f, "config: {s}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Constraints(v) => write!(f, "constraint failure: {}", v.join("; ")),
            Failure::OracleMismatch { discrepancy, tolerance } => {
                write!(f, "oracle mismatch: {discrepancy:.3e} exceeds {tolerance:.1e}")
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type Res<T> = Result<T, Failure>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    command: &'a str,
    hash: String,
    base: PathBuf,
    out: &'a Path,
}

impl Ctx<'_> {
    fn table(&self, columns: &[&str]) -> Table {
        Table::new(self.command, &self.hash, self.cfg.network.seed, columns)
    }

    /// Paths in the config are relative to the config file.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn tensors(&self) -> Res<MeraTensors> {
        let net = &self.cfg.network;
        match &net.tensors {
            None => Ok(MeraTensors::random_isometric(&net.mera())?),
            Some(p) => {
                let f = TensorFile::load(&self.resolve(p))?;
                if f.tensors.d != net.d || f.tensors.m != net.m {
                    return Err(Failure::Config(format!(
                        "saved tensors have d={}, m={}; config says d={}, m={}",
                        f.tensors.d, f.tensors.m, net.d, net.m
                    )));
                }
                Ok(f.tensors)
            }
        }
    }

    fn model(&self) -> Res<Hamiltonian3> {
        let spec = self
            .cfg
            .model
            .as_ref()
            .ok_or_else(|| Failure::Config(format!("{} needs a [model] section", self.command)))?;
        Ok(spec.hamiltonian(self.cfg.network.d)?)
    }
}

pub fn run(command: &str, cfg: &RunConfig, config_path: &Path, out: &Path) -> Res<()> {
    fs::create_dir_all(out)?;
    let ctx = Ctx {
        cfg,
        command,
        hash: cfg.hash(),
        base: config_path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out,
    };
    match command {
        "check" => check(&ctx),
        "spectrum" => spectrum(&ctx),
        "profile" => profile(&ctx),
        "correlator" => correlator(&ctx),
        "energy" => energy(&ctx),
        "optimize" => run_optimize(&ctx),
        "exact" => exact(&ctx),
        other => Err(Failure::Config(format!("unknown command {other}"))),
    }
}

fn check(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let tol = ctx.cfg.check.tolerance;
    let report = check_constraints(&t);
    let mut table = ctx.table(&["tensor", "defect", "tolerance", "pass"]);
    for (name, defect) in report.entries() {
        table.row(&[name.into(), num(defect), num(tol), (defect <= tol).to_string()]);
    }
    print!("{}", table.render());
    table.write(ctx.out, "check.csv")?;
    let bad = report.offenders(tol);
    if bad.is_empty() {
        return Ok(());
    }
    let entries = report.entries();
    Err(Failure::Constraints(
        bad.iter()
            .map(|name| {
                let d = entries.iter().find(|e| e.0 == *name).expect("named entry").1;
                format!("tensor={name},defect={d:.3e},tolerance={tol:.1e}")
            })
            .collect(),
    ))
}

fn spectrum_table(ctx: &Ctx, r: &SpectrumReport) -> Table {
    let mut t = ctx.table(&["index", "re", "im", "modulus", "phase", "exponent"]);
    t.note("map", &r.label);
    t.note("mixing", r.mixing);
    t.note("gap", num(r.gap));
    if let Some(d) = r.defective {
        t.note("defective", d);
    }
    for line in r.to_table().lines().skip(1) {
        t.row(&[line.to_string()]);
    }
    t
}

/// Largest distance in a greedy nearest matching of two multisets.
fn multiset_gap(a: &[C64], b: &[C64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let best = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        match best {
            Some((k, dist)) => {
                used[k] = true;
                worst = worst.max(dist);
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

fn spectrum(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let c = ChannelSet::build(&t)?;
    let maps = [
        (&c.descend_l, "descend_l"),
        (&c.descend_r, "descend_r"),
        (&c.average, "average"),
        (&c.stable_l, "stable_l"),
        (&c.stable_r, "stable_r"),
    ];
    let mut average = None;
    for (s, file) in maps {
        let r = spectral::spectrum(s)?;
        spectrum_table(ctx, &r).write(ctx.out, &format!("spectrum_{file}.csv"))?;
        if file == "average" {
            average = Some(r.eigenvalues);
        }
    }
    if ctx.cfg.spectrum.twopoint {
        let values = linalg::eigvals_real(&twopoint_real_form(&c.descend_l, &c.descend_r)?)?;
        let single = average.expect("average spectrum computed");
        let products: Vec<C64> = single.iter().flat_map(|a| single.iter().map(move |b| a * b)).collect();
        let same = linalg::max_abs_diff(&c.descend_l.matrix, &c.descend_r.matrix) <= 1e-12;
        let mut table = spectrum_table(ctx, &SpectrumReport::from_eigenvalues("D2", values.clone()));
        table.note("descend_l_equals_descend_r", same);
        table.note("max_distance_to_pairwise_products", num(multiset_gap(&values, &products)));
        table.write(ctx.out, "spectrum_twopoint.csv")?;
    }
    Ok(())
}

/// The operator from the config plus its eigenvalue when it is a scaling
/// operator of the averaged descending map.
fn operator(ctx: &Ctx, c: &ChannelSet) -> Res<(CMat, Option<C64>)> {
    let d = ctx.cfg.network.d;
    let spec = ctx.cfg.operator.as_ref().ok_or_else(|| {
        Failure::Config(format!("{} needs an [operator] section", ctx.command))
    })?;
    match spec {
        OperatorSpec::Identity => Ok((linalg::identity(d * d * d), None)),
        OperatorSpec::Pauli { string } => {
            if d != 2 || string.chars().count() != 3 {
                return Err(Failure::Config("Pauli operators need d = 2 and three letters".into()));
            }
            let m = LocalOperator::new(pauli_string(string)?, d)?.matrix;
            Ok((m, None))
        }
        OperatorSpec::Scaling { index } => {
            let ops = spectral::scaling_operators(&c.average, index + 1)?;
            let op = ops.into_iter().nth(*index).ok_or_else(|| {
                Failure::Config(format!("scaling operator {index} does not exist"))
            })?;
            Ok((op.operator, Some(op.eigenvalue)))
        }
    }
}

fn note_kappa(t: &mut Table, kappa: Option<C64>) {
    if let Some(k) = kappa {
        t.note("kappa", format!("{},{}", num(k.re), num(k.im)));
        t.note("minus_log2_abs_kappa", num(-k.norm().log2()));
    }
}

fn profile(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let c = ChannelSet::build(&t)?;
    let (theta, kappa) = operator(ctx, &c)?;
    let mut b = Boundary::from_channels(c)?;
    let fit = &ctx.cfg.profile;
    let r = boundary_profile_with(&mut b, &theta, fit.window, fit.floor)?;
    let mut table = ctx.table(&["k", "distance", "re", "im", "deviation", "in_fit"]);
    let [bre, bim] = re_im(r.bulk);
    table.note("bulk", format!("{bre},{bim}"));
    for (k, ((dist, v), dev)) in r.distances.iter().zip(&r.values).zip(&r.deviations).enumerate() {
        let [re, im] = re_im(*v);
        let used = r.fitted.contains(&(k as u32));
        table.row(&[k.to_string(), dist.to_string(), re, im, num(*dev), used.to_string()]);
    }
    table.write(ctx.out, "profile.csv")?;
    let mut summary = ctx.table(&["fitted_exponent", "amplitude", "residual", "points"]);
    note_kappa(&mut summary, kappa);
    summary.row(&[num(r.exponent), num(r.amplitude), num(r.residual), r.fitted.len().to_string()]);
    summary.write(ctx.out, "profile_fit.csv")?;
    Ok(())
}

fn correlator(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let sec = &ctx.cfg.correlator;
    let mode = match sec.mode {
        Mode::Product => TwoPointMode::Product,
        Mode::Split => TwoPointMode::Split,
    };
    let tp = BulkTwoPoint::new(&t, mode)?;
    let (theta, kappa) = operator(ctx, &tp.channels)?;
    let r = correlator_profile(&tp, &theta, sec.window, sec.floor)?;
    let mut table = ctx.table(&["m", "separation", "re", "im", "in_fit"]);
    table.note("mode", format!("{:?}", sec.mode).to_lowercase());
    for (m, (sep, v)) in r.separations.iter().zip(&r.values).enumerate() {
        let [re, im] = re_im(*v);
        table.row(&[m.to_string(), sep.to_string(), re, im, r.fitted.contains(&(m as u32)).to_string()]);
    }
    table.write(ctx.out, "correlator.csv")?;
    let mut summary = ctx.table(&["fitted_exponent", "amplitude", "residual", "points"]);
    note_kappa(&mut summary, kappa);
    summary.row(&[num(r.exponent), num(r.amplitude), num(r.residual), r.fitted.len().to_string()]);
    summary.write(ctx.out, "correlator_fit.csv")?;
    Ok(())
}

fn energy(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let h = ctx.model()?;
    let tau = ctx.cfg.energy.tau;
    let mut b = Boundary::new(&t)?;
    let dev = b.energy_deviation(&h, tau)?;
    let bulk = linalg::trace_of_product(&h.h3, &b.bulk_fixed.matrix).re;
    let mut table = ctx.table(&["tau", "block_energy", "delta_e", "increment"]);
    let last = dev.partial_sums.len().saturating_sub(2);
    let tail = dev.partial_sums.last().copied().unwrap_or(0.0) - dev.partial_sums.get(last).copied().unwrap_or(0.0);
    let converged = !dev.divergence_flag && tau > 1 && tail.abs() <= 1e-8 * dev.value.abs().max(1.0);
    table.note("bulk_energy_density", num(bulk));
    table.note("divergence_flag", dev.divergence_flag);
    table.note("flag_method", format!("{:?}", dev.method).to_lowercase());
    table.note("term_ratio", num(dev.term_ratio));
    table.note("unit_component", num(dev.unit_component));
    table.note("converged", converged);
    let mut prev = 0.0;
    for (i, s) in dev.partial_sums.iter().enumerate() {
        let tp = i as u32 + 1;
        let block = b.block_energy(&h, tp)?;
        table.row(&[tp.to_string(), num(block), num(*s), num(s - prev)]);
        prev = *s;
    }
    table.write(ctx.out, "energy.csv")?;
    let mut comps = ctx.table(&["index", "kappa_re", "kappa_im", "modulus", "component"]);
    for (i, (k, c)) in dev.components.iter().enumerate() {
        let [re, im] = re_im(*k);
        comps.row(&[i.to_string(), re, im, num(k.norm()), num(*c)]);
    }
    comps.write(ctx.out, "energy_components.csv")?;
    Ok(())
}

fn run_optimize(ctx: &Ctx) -> Res<()> {
    let h = ctx.model()?;
    let ocfg = ctx
        .cfg
        .optimize
        .clone()
        .ok_or_else(|| Failure::Config("optimize needs an [optimize] section".into()))?;
    let (checkpoint, result): (Checkpoint, OptimizeResult) = match &ctx.cfg.checkpoint.resume {
        Some(p) => {
            let mut ck = Checkpoint::from_json(&fs::read_to_string(ctx.resolve(p))?)?;
            ck.optimize = ocfg;
            ck.resume(&h)?
        }
        None => {
            let t = ctx.tensors()?;
            let r = optimize(&t, &h, &ocfg)?;
            let ck = Checkpoint {
                config: Some(ctx.cfg.network.mera()),
                optimize: ocfg,
                tensors: r.tensors.clone(),
                trace: r.trace.clone(),
            };
            (ck, r)
        }
    };
    let mut table = ctx.table(&["step", "cost"]);
    table.note("bulk_energy_density", num(result.energy.bulk));
    table.note("boundary_deviation", num(result.energy.deviation));
    table.note("sweeps", result.sweeps);
    table.note("stalled", result.stalled);
    table.note("start", result.start);
    table.note("restarts", result.restarts);
    for (i, c) in checkpoint.trace.iter().enumerate() {
        table.row(&[i.to_string(), num(*c)]);
    }
    table.write(ctx.out, "optimize.csv")?;
    fs::write(ctx.out.join("checkpoint.json"), checkpoint.to_json()?)?;
    TensorFile::new(checkpoint.tensors.clone(), checkpoint.config.clone()).save(&ctx.out.join("tensors.json"))?;
    Ok(())
}

fn exact(ctx: &Ctx) -> Res<()> {
    let t = ctx.tensors()?;
    let n = ctx.cfg.network.n;
    let sec = &ctx.cfg.exact;
    let oracle = Oracle::new(&t, n, sec.budget as u128)?;
    let mut rec = FiniteRecursion::new(&t)?;
    let mut table = ctx.table(&["region", "start", "max_abs_diff"]);
    let mut worst = 0.0f64;
    let mut push = |table: &mut Table, region: &str, start: i64, a: &CMat, b: &CMat| {
        let diff = linalg::max_abs_diff(a, b);
        worst = worst.max(diff);
        table.row(&[region.into(), start.to_string(), num(diff)]);
    };
    push(&mut table, "left_block", 1, &rec.left_block(n)?, &oracle.left_block()?.matrix);
    let size = system_size(n) as i64;
    let mut triples = Vec::new();
    for j in 1..=size - 2 {
        let r = rec.triple(n, j)?;
        let o = oracle.triple(j)?.matrix;
        push(&mut table, "triple", j, &r, &o);
        triples.push((r, o));
    }
    push(&mut table, "right_block", size - 1, &rec.right_block(n)?, &oracle.right_block()?.matrix);
    table.note("system_size", size);
    table.note("windowed", oracle.full_state().is_none());
    table.note("discrepancy", num(worst));
    table.note("tolerance", num(sec.tolerance));
    table.write(ctx.out, "exact.csv")?;
    if ctx.cfg.operator.is_some() {
        let (theta, _) = operator(ctx, &rec.channels)?;
        let mut values = ctx.table(&["site", "recursed_re", "recursed_im", "exact_re", "exact_im"]);
        for (j, (r, o)) in triples.iter().enumerate() {
            let [a, b] = re_im(linalg::trace_of_product(&theta, r));
            let [c, d] = re_im(linalg::trace_of_product(&theta, o));
            values.row(&[(j + 1).to_string(), a, b, c, d]);
        }
        values.write(ctx.out, "exact_values.csv")?;
    }
    if worst > sec.tolerance {
        return Err(Failure::OracleMismatch {
            discrepancy: worst,
            tolerance: sec.tolerance,
        });
    }
    Ok(())
}
