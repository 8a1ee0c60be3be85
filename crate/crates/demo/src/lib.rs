//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string; errors come back as JS exceptions.

use bmera::channels::ChannelSet;
use bmera::network::{MeraConfig, MeraTensors};
use bmera::observables::{boundary_profile_with, correlator_profile, Boundary, BulkTwoPoint, TwoPointMode};
use bmera::spectral::{self, ScalingOperator};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const FLOOR: f64 = 1e-6;
const SITE_DIM: usize = 2;

fn network(seed: u64, m: usize) -> bmera::Result<MeraTensors> {
    MeraTensors::random_isometric(&MeraConfig::new(SITE_DIM, m, 2, seed)?)
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct Eigen {
    re: f64,
    im: f64,
    modulus: f64,
    exponent: Option<f64>,
}

#[derive(Serialize)]
struct Spectra {
    seed: u64,
    average: Vec<Eigen>,
    boundary: Vec<Eigen>,
}

fn eigen_list(s: &bmera::channels::Superoperator) -> bmera::Result<Vec<Eigen>> {
    Ok(spectral::eigenvalues(s)?
        .into_iter()
        .map(|z| Eigen {
            re: z.re,
            im: z.im,
            modulus: z.norm(),
            exponent: (z.norm() < 1.0 - 1e-12 && z.norm() > 0.0).then(|| -z.norm().log2()),
        })
        .collect())
}

pub fn spectrum_json(seed: u64, m: usize) -> bmera::Result<String> {
    let c = ChannelSet::build(&network(seed, m)?)?;
    let out = Spectra {
        seed,
        average: eigen_list(&c.average)?,
        boundary: eigen_list(&c.stable_l)?,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct Profile {
    seed: u64,
    kappa: [f64; 2],
    expected: f64,
    /// `(log2 l, log2 |<Θ_l> - bulk|)`
    boundary: Vec<[f64; 2]>,
    boundary_exponent: f64,
    /// `(log2 Δl, log2 |C(Δl)|)`
    bulk: Vec<[f64; 2]>,
    bulk_exponent: f64,
}

fn log_points(values: impl Iterator<Item = f64>) -> Vec<[f64; 2]> {
    values
        .enumerate()
        .filter(|(_, v)| *v >= FLOOR)
        .map(|(k, v)| [k as f64, v.log2()])
        .collect()
}

fn operators(c: &ChannelSet) -> bmera::Result<Vec<ScalingOperator>> {
    spectral::scaling_operators(&c.average, 63)
}

pub fn profile_json(seed: u64, m: usize, index: usize, k_max: u32) -> bmera::Result<String> {
    let t = network(seed, m)?;
    let c = ChannelSet::build(&t)?;
    let op = operators(&c)?
        .into_iter()
        .nth(index)
        .ok_or_else(|| bmera::Error::InvalidConfig(format!("no scaling operator {index}")))?;
    let mut b = Boundary::from_channels(c)?;
    let p = boundary_profile_with(&mut b, &op.operator, (0, k_max), FLOOR)?;
    let tp = BulkTwoPoint::new(&t, TwoPointMode::Product)?;
    let q = correlator_profile(&tp, &op.operator, (0, k_max), FLOOR)?;
    let out = Profile {
        seed,
        kappa: [op.eigenvalue.re, op.eigenvalue.im],
        expected: op.exponent,
        boundary: log_points(p.deviations.iter().copied()),
        boundary_exponent: p.exponent,
        bulk: log_points(q.values.iter().map(|z| z.norm())),
        bulk_exponent: q.exponent,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct HalvingRow {
    modulus: f64,
    expected: f64,
    boundary: f64,
    bulk: f64,
    ratio: f64,
}

/// Boundary and bulk exponents for every scaling operator with
/// `0.05 < |κ| < 0.95` that has signal above the floor.
pub fn halving_json(seed: u64, m: usize) -> bmera::Result<String> {
    let t = network(seed, m)?;
    let c = ChannelSet::build(&t)?;
    let ops = operators(&c)?;
    let mut b = Boundary::from_channels(c)?;
    let tp = BulkTwoPoint::new(&t, TwoPointMode::Product)?;
    let mut rows = Vec::new();
    for op in ops.iter().filter(|o| (0.05..0.95).contains(&o.eigenvalue.norm())) {
        let (Ok(p), Ok(q)) = (
            boundary_profile_with(&mut b, &op.operator, (0, 10), FLOOR),
            correlator_profile(&tp, &op.operator, (0, 10), FLOOR),
        ) else {
            continue;
        };
        rows.push(HalvingRow {
            modulus: op.eigenvalue.norm(),
            expected: op.exponent,
            boundary: p.exponent,
            bulk: q.exponent,
            ratio: q.exponent / p.exponent,
        });
    }
    Ok(serde_json::to_string(&rows)?)
}

#[wasm_bindgen]
pub fn spectrum(seed: u32, m: u32) -> Result<String, JsError> {
    spectrum_json(seed.into(), m as usize).map_err(js)
}

#[wasm_bindgen]
pub fn profile(seed: u32, m: u32, index: u32, k_max: u32) -> Result<String, JsError> {
    profile_json(seed.into(), m as usize, index as usize, k_max).map_err(js)
}

#[wasm_bindgen]
pub fn halving(seed: u32, m: u32) -> Result<String, JsError> {
    halving_json(seed.into(), m as usize).map_err(js)
}
