use bmera::channels::ChannelSet;
use bmera::linalg::{self, CMat};
use bmera::models::{Hamiltonian3, LocalOperator, ModelSpec};
use bmera::network::{system_size, MeraConfig, MeraTensors};
use bmera::observables::*;
use bmera::oracle::{Oracle, DEFAULT_BUDGET};
use bmera::spectral;
use bmera::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensors(seed: u64) -> MeraTensors {
    MeraTensors::random_isometric(&MeraConfig::new(2, 2, 2, seed).unwrap()).unwrap()
}

fn hermitian(seed: u64) -> CMat {
    let g = Tensor::random_gaussian(&[8, 8], &mut ChaCha8Rng::seed_from_u64(seed));
    linalg::hermitian_part(&linalg::mat_from_rm(8, 8, g.data()))
}

fn ising() -> Hamiltonian3 {
    ModelSpec::Ising { g: 1.0 }.hamiltonian(2).unwrap()
}

#[test]
fn finite_values_match_oracle_everywhere() {
    let t = tensors(42);
    let theta = LocalOperator::new(hermitian(7), 2).unwrap();
    let o = Oracle::new(&t, 2, DEFAULT_BUDGET).unwrap();
    for ell in 1..=14 {
        let a = local_average_finite(&t, &theta, ell, 2).unwrap();
        let b = o.expectation(&theta.matrix, ell).unwrap();
        assert!((a - b).norm() < 1e-10, "l = {ell}");
    }
}

#[test]
fn mirrored_network_reflects_profile() {
    let t = tensors(5);
    let m = t.mirrored().unwrap();
    let theta = LocalOperator::new(hermitian(3), 2).unwrap();
    let flipped = theta.mirrored(2);
    let n = 3;
    let size = system_size(n) as i64;
    let mut a = FiniteRecursion::new(&t).unwrap();
    let mut b = FiniteRecursion::new(&m).unwrap();
    for ell in 1..=size - 2 {
        let x = linalg::trace_of_product(&theta.matrix, &a.triple(n, ell).unwrap());
        let y = linalg::trace_of_product(&flipped.matrix, &b.triple(n, size - ell - 1).unwrap());
        assert!((x - y).norm() < 1e-10, "l = {ell}");
    }
}

#[test]
fn out_of_range_sites_are_rejected() {
    let t = tensors(1);
    let id = LocalOperator::identity(2);
    assert!(local_average_finite(&t, &id, 0, 2).is_err());
    assert!(local_average_finite(&t, &id, 15, 2).is_err());
    assert!(local_average_infinite(&t, &id, 0).is_err());
}

#[test]
fn dyadic_windows_sum_exactly() {
    // Σ_{j ∈ [2^p, 2^{p+1})} ρ_j = 2^p D^p K_L(left block p+1 levels up).
    let t = tensors(9);
    let mut rec = FiniteRecursion::new(&t).unwrap();
    let c = rec.channels.clone();
    let n = 5;
    for p in 0..4u32 {
        let mut sum = CMat::zeros(8, 8);
        for j in (1i64 << p)..(1i64 << (p + 1)) {
            sum += rec.triple(n, j).unwrap();
        }
        let mut y = c.absorb_l.apply(&rec.left_block(n - p - 1).unwrap()).unwrap();
        for _ in 0..p {
            y = c.average.apply(&y).unwrap();
        }
        let scaled = CMat::from_fn(8, 8, |a, b| y[(a, b)] * (1u64 << p) as f64);
        assert!(linalg::max_abs_diff(&sum, &scaled) < 1e-12, "p = {p}");
    }
}

#[test]
fn window_averages_approach_the_infinite_value() {
    let t = tensors(11);
    let c = ChannelSet::build(&t).unwrap();
    let rate = spectral::second_modulus(&c.stable_l).unwrap();
    let theta = hermitian(21);
    let mut b = Boundary::from_channels(c).unwrap();
    let p = 2u32;
    let inf = b.local_average(&theta, 1 << p).unwrap();
    let mut rec = FiniteRecursion::new(&t).unwrap();
    let mut errs = Vec::new();
    for n in 4..=12 {
        let mut acc = bmera::C64::new(0.0, 0.0);
        for j in (1i64 << p)..(1i64 << (p + 1)) {
            acc += linalg::trace_of_product(&theta, &rec.triple(n, j).unwrap());
        }
        errs.push((acc / (1u64 << p) as f64 - inf).norm());
    }
    // decay no slower than the B_L rate, up to a constant
    let observed = (errs[errs.len() - 1] / errs[0]).powf(1.0 / (errs.len() - 1) as f64);
    assert!(observed <= rate + 1e-3, "observed {observed}, rate {rate}");
    assert!(errs[errs.len() - 1] < errs[0]);
}

#[test]
fn scaling_operators_decay_exactly() {
    let t = tensors(2);
    let c = ChannelSet::build(&t).unwrap();
    let ops = spectral::scaling_operators(&c.average, 4).unwrap();
    let mut b = Boundary::from_channels(c).unwrap();
    for op in &ops {
        let c0 = linalg::trace_of_product(&op.operator, &b.seed);
        for k in 0..=4u32 {
            let v = b.local_average(&op.operator, 1 << k).unwrap();
            let expect = c0 * op.eigenvalue.powu(k);
            assert!((v - expect).norm() <= 1e-10 * expect.norm().max(1e-300) + 1e-15);
            // constant on the dyadic window
            for ell in (1u64 << k)..(1u64 << (k + 1)) {
                assert_eq!(b.local_average(&op.operator, ell).unwrap(), v);
            }
        }
    }
}

#[test]
fn correlator_of_scaling_operator_is_a_power_law() {
    let t = tensors(2);
    let c = ChannelSet::build(&t).unwrap();
    let ops = spectral::scaling_operators(&c.average, 3).unwrap();
    let tp = BulkTwoPoint::new(&t, TwoPointMode::Product).unwrap();
    for op in &ops {
        let v = tp.values(&op.operator, 5).unwrap();
        let k2 = op.eigenvalue * op.eigenvalue;
        for m in 0..5 {
            assert!((v[m + 1] - v[m] * k2).norm() < 1e-12);
        }
    }
    let split = BulkTwoPoint::new(&t, TwoPointMode::Split).unwrap();
    let id = linalg::identity(8);
    assert!(split.values(&id, 3).unwrap().iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn averaged_recursion_matches_oracle_average() {
    let t = tensors(42);
    let o = Oracle::new(&t, 2, DEFAULT_BUDGET).unwrap();
    let mut avg = CMat::zeros(8, 8);
    for j in 1..=14 {
        avg += o.triple(j).unwrap().matrix;
    }
    let avg = CMat::from_fn(8, 8, |a, b| avg[(a, b)] / 14.0);
    let mut rec = FiniteRecursion::new(&t).unwrap();
    let rhs = rec.averaged_triple_recursion(2).unwrap();
    assert!(linalg::max_abs_diff(&avg, &rhs) < 1e-10);
}

#[test]
fn block_energy_cases() {
    let t = tensors(6);
    let mut b = Boundary::new(&t).unwrap();
    for tau in 1..=5 {
        let e = b.block_energy(&Hamiltonian3::identity(2), tau).unwrap();
        assert!((e - ((1u64 << tau) - 1) as f64).abs() < 1e-10);
    }
    let h = ising();
    let one = b.block_energy(&h, 1).unwrap();
    let direct = linalg::trace_of_product(&h.h3, &b.channels.absorb_l.apply(&b.edge_fixed.matrix).unwrap()).re;
    assert!((one - direct).abs() < 1e-14);
    assert!(block_energy(&t, &h, 0).is_err());
}

#[test]
fn convergent_deviation_has_bounded_ratio() {
    let t = tensors(8);
    let c = ChannelSet::build(&t).unwrap();
    let ev = spectral::eigenvalues(&c.average).unwrap();
    let kmax = ev[1].norm();
    assert!(kmax < 0.5);
    let dev = boundary_energy_deviation(&t, &ising(), 40).unwrap();
    assert!(!dev.divergence_flag);
    assert!(dev.unit_component < 1e-10);
    assert!(dev.term_ratio <= 2.0 * kmax + 1e-6);
    let s = &dev.partial_sums;
    // terms shrink like (2|κ|)^p, so the tail after 30 terms is tiny
    assert!((s[39] - s[29]).abs() < 1e-4 * s[0].abs().max(1.0));
}

#[test]
fn divergent_deviation_grows_at_twice_kappa() {
    let t = tensors(11);
    let c = ChannelSet::build(&t).unwrap();
    let ev = spectral::eigenvalues(&c.average).unwrap();
    assert!(ev[1].norm() >= 0.5);
    let dev = boundary_energy_deviation(&t, &ising(), 12).unwrap();
    assert!(dev.divergence_flag);
    assert!((dev.term_ratio - 2.0 * ev[1].norm()).abs() < 1e-3);
}

#[test]
fn zero_seed_gives_zero_deviation() {
    let t = tensors(3);
    let mut b = Boundary::new(&t).unwrap();
    b.seed = b.bulk_fixed.matrix.clone();
    let dev = b.energy_deviation(&ising(), 8).unwrap();
    assert!(dev.partial_sums.iter().all(|x| x.abs() < 1e-12));
    assert!(!dev.divergence_flag);
    let id = b.energy_deviation(&Hamiltonian3::identity(2), 8).unwrap();
    assert!(id.value.abs() < 1e-12);
}

#[test]
fn profile_fit_recovers_exponent() {
    let t = tensors(2);
    let c = ChannelSet::build(&t).unwrap();
    let op = spectral::scaling_operators(&c.average, 1).unwrap().remove(0);
    let mut b = Boundary::from_channels(c).unwrap();
    let r = boundary_profile_with(&mut b, &op.operator, (0, 10), 1e-6).unwrap();
    assert!((r.exponent - op.exponent).abs() < 1e-8);
    assert!(r.residual < 1e-8);
    assert!(r.distances.windows(2).all(|w| w[0] < w[1]));
}
