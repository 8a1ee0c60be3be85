use bmera::channels::{ChannelSet, DensityMatrix, Site};
use bmera::linalg::{self, CMat, FactorKind};
use bmera::network::{check_constraints, MeraConfig, MeraTensors};
use bmera::{Tensor, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian(shape: &[usize], seed: u64) -> Tensor {
    Tensor::random_gaussian(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_state(dim: usize, seed: u64) -> CMat {
    let g = gaussian(&[dim, dim], seed);
    let a = linalg::mat_from_rm(dim, dim, g.data());
    let p = &a * linalg::dagger(&a);
    let tr = linalg::trace(&p);
    CMat::from_fn(dim, dim, |i, j| p[(i, j)] / tr)
}

fn random_hermitian(dim: usize, seed: u64) -> CMat {
    let g = gaussian(&[dim, dim], seed);
    linalg::hermitian_part(&linalg::mat_from_rm(dim, dim, g.data()))
}

fn tensors(seed: u64, m: usize) -> MeraTensors {
    MeraTensors::random_isometric(&MeraConfig::new(2, m, 2, seed).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contraction_is_bilinear(seed in any::<u64>(), a in 2usize..4, b in 2usize..4, c in 2usize..4, s in -2.0f64..2.0) {
        let x = gaussian(&[a, b], seed);
        let y = gaussian(&[a, b], seed ^ 1);
        let z = gaussian(&[b, c], seed ^ 2);
        let k = C64::new(s, 0.5);
        let lhs = x.scale(k).add(&y).unwrap().contract(&z, &[(1, 0)]).unwrap();
        let rhs = x.contract(&z, &[(1, 0)]).unwrap().scale(k)
            .add(&y.contract(&z, &[(1, 0)]).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn contraction_is_associative(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4, d in 1usize..4) {
        let x = gaussian(&[a, b], seed);
        let y = gaussian(&[b, c], seed ^ 3);
        let z = gaussian(&[c, d], seed ^ 5);
        let left = x.contract(&y, &[(1, 0)]).unwrap().contract(&z, &[(1, 0)]).unwrap();
        let right = x.contract(&y.contract(&z, &[(1, 0)]).unwrap(), &[(1, 0)]).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn permutation_inverts(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let t = gaussian(&[2, 3, 1, 4], seed);
        let mut inv = vec![0; 4];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let back = t.permute(&perm).unwrap().permute(&inv).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn factorizations_reconstruct(seed in any::<u64>(), rows in 1usize..3) {
        let t = gaussian(&[2, 3, 2], seed);
        let axes: Vec<usize> = (0..rows).collect();
        let m = linalg::tensor_to_mat(&t, &axes).unwrap();
        for kind in [FactorKind::Svd, FactorKind::Polar, FactorKind::Qr] {
            let f = linalg::factorize(&t, &axes, kind).unwrap();
            prop_assert!(linalg::max_abs_diff(&f.reconstruct(), &m) < 1e-12);
        }
    }

    #[test]
    fn random_networks_satisfy_constraints(seed in any::<u64>(), m in 1usize..4) {
        prop_assert!(check_constraints(&tensors(seed, m)).passes(1e-12));
    }

    #[test]
    fn channels_are_cpt(seed in any::<u64>()) {
        let c = ChannelSet::build(&tensors(seed, 2)).unwrap();
        for s in c.six() {
            let (choi, unital) = s.cpt_defects().unwrap();
            prop_assert!(choi < 1e-10 && unital < 1e-10, "{}: {choi} {unital}", s.label.name());
        }
    }

    #[test]
    fn adjoint_is_dual(seed in any::<u64>()) {
        let c = ChannelSet::build(&tensors(seed, 2)).unwrap();
        for s in c.six() {
            let rho = random_state(s.din(), seed ^ 7);
            let o = random_hermitian(s.dout(), seed ^ 11);
            let a = linalg::trace_of_product(&o, &s.apply(&rho).unwrap());
            let b = linalg::trace_of_product(&s.adjoint_apply(&o).unwrap(), &rho);
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn channels_contract_trace_distance(seed in any::<u64>()) {
        let c = ChannelSet::build(&tensors(seed, 2)).unwrap();
        for s in c.six() {
            let r1 = random_state(s.din(), seed ^ 13);
            let r2 = random_state(s.din(), seed ^ 17);
            let before = linalg::trace_norm(&(&r1 - &r2)).unwrap();
            let after = linalg::trace_norm(&(&s.apply(&r1).unwrap() - &s.apply(&r2).unwrap())).unwrap();
            prop_assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn outputs_are_density_matrices(seed in any::<u64>()) {
        let c = ChannelSet::build(&tensors(seed, 2)).unwrap();
        let rho = random_state(8, seed ^ 19);
        let out = DensityMatrix::new(c.average.apply(&rho).unwrap(), Site::triple(1, 2)).unwrap();
        prop_assert!(out.is_valid(1e-12).unwrap());
    }
}
