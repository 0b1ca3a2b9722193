//! Channel, noise and symbol statistics of the system model.

mod common;

use cmdnet_core::system::{
    complex_to_real, ebn0_from_sigma2, sample_channel, sample_complex_channel,
    sample_instance_sigma2, sigma2_from_ebn0, stack_complex, ComplexMatrix,
};
use cmdnet_core::{ChannelConfig, ChannelModel, Constellation, Modulation};
use common::{rel_err, rng};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn iid_column_energy_concentrates_at_one() {
    let cfg = ChannelConfig::iid(4, 4);
    let mut r = rng(10);
    let draws = 100_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let h = sample_channel(&cfg, &mut r).unwrap();
        let e: f64 = h.column(0).iter().map(|v| v * v).sum();
        sum += e;
        sum_sq += e * e;
    }
    let mean = sum / draws as f64;
    let sd = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    assert!(
        (mean - 1.0).abs() < 3.0 * sd,
        "mean {mean}, 3σ = {}",
        3.0 * sd
    );
}

#[test]
fn correlated_channel_imposes_receive_correlation() {
    let cfg = ChannelConfig {
        n_tx: 1,
        n_rx: 2,
        model: ChannelModel::ColumnCorrelated(0.9),
        seed: 0,
    };
    let mut r = rng(11);
    let draws = 100_000;
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let h = sample_complex_channel(&cfg, &mut r).unwrap();
        samples.push(h.get(0, 0) * h.get(1, 0).conj());
    }
    let mean: Complex64 = samples.iter().sum::<Complex64>() / draws as f64;
    let var = samples.iter().map(|s| (s - mean).norm_sqr()).sum::<f64>() / (draws as f64 - 1.0);
    let se = (var / draws as f64).sqrt();
    let target = 0.9 / 2.0;
    assert!(
        (mean.re - target).abs() < 3.0 * se,
        "E[h1 h2*] = {mean}, target {target}, se {se}"
    );
    assert!(mean.im.abs() < 3.0 * se);
}

#[test]
fn zero_correlation_matches_iid_statistics() {
    let cfg = ChannelConfig {
        n_tx: 2,
        n_rx: 3,
        model: ChannelModel::ColumnCorrelated(0.0),
        seed: 0,
    };
    let mut r = rng(12);
    let draws = 50_000;
    let mut energy = 0.0;
    let mut cross = Complex64::new(0.0, 0.0);
    for _ in 0..draws {
        let h = sample_complex_channel(&cfg, &mut r).unwrap();
        energy += (0..3).map(|i| h.get(i, 0).norm_sqr()).sum::<f64>();
        cross += h.get(0, 1) * h.get(1, 1).conj();
    }
    assert!((energy / draws as f64 - 1.0).abs() < 0.02);
    assert!((cross / draws as f64).norm() < 0.01);
}

#[test]
fn complex_to_real_examples() {
    let one = ComplexMatrix::new(1, 1, vec![Complex64::new(1.0, 0.0)]).unwrap();
    assert_eq!(complex_to_real(&one).as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    let i = ComplexMatrix::new(1, 1, vec![Complex64::new(0.0, 1.0)]).unwrap();
    assert_eq!(complex_to_real(&i).as_slice(), &[0.0, -1.0, 1.0, 0.0]);
}

#[test]
fn ebn0_examples() {
    let bpsk = Constellation::new(Modulation::Bpsk);
    let qpsk = Constellation::new(Modulation::Qpsk);
    assert!((sigma2_from_ebn0(0.0, &bpsk) - 1.0).abs() < 1e-15);
    assert!((sigma2_from_ebn0(10.0, &qpsk) - 0.05).abs() < 1e-15);
    assert!((ebn0_from_sigma2(0.05, &qpsk) - 10.0).abs() < 1e-9);
}

#[test]
fn noise_variance_per_real_dimension() {
    let c = Constellation::new(Modulation::Qpsk);
    let cfg = ChannelConfig::iid(1, 1);
    let sigma2 = 0.3;
    let mut r = rng(13);
    let draws = 100_000;
    let mut acc = 0.0;
    let mut count = 0;
    for _ in 0..draws {
        let inst = sample_instance_sigma2(&cfg, &c, sigma2, &mut r).unwrap();
        let hx = inst.h.mul_vec(&inst.x);
        for (y, m) in inst.y.iter().zip(&hx) {
            acc += (y - m) * (y - m);
            count += 1;
        }
    }
    let var = acc / count as f64;
    assert!((var / (sigma2 / 2.0) - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn symbol_frequencies_match_priors() {
    let priors = vec![0.1, 0.2, 0.3, 0.4];
    let c = Constellation::new(Modulation::Qam16)
        .with_priors(priors.clone())
        .unwrap();
    let mut r = rng(14);
    let mut counts = [0u64; 4];
    for _ in 0..100_000 {
        counts[c.sample_index(&mut r)] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&priors)
        .map(|(&n, &p)| (n as f64 - p * 1e5).powi(2) / (p * 1e5))
        .sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p > 0.001, "counts {counts:?}, p = {p}");
}

#[test]
fn noiseless_least_squares_recovers_symbols() {
    let c = Constellation::new(Modulation::Qam16);
    let cfg = ChannelConfig::iid(3, 4);
    let mut r = rng(15);
    for _ in 0..20 {
        let inst = sample_instance_sigma2(&cfg, &c, 1e-24, &mut r).unwrap();
        let g = inst.h.gram();
        let rhs = inst.h.tr_mul_vec(&inst.y);
        let x = g.solve(&rhs).unwrap();
        assert!(rel_err(&x, &inst.x, 1e-12) < 1e-8);
    }
}

proptest! {
    #[test]
    fn complex_to_real_is_an_isometry(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5) {
        let mut r = rng(seed);
        let mut normal = || Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal));
        let data = (0..rows * cols).map(|_| normal()).collect();
        let h = ComplexMatrix::new(rows, cols, data).unwrap();
        let x: Vec<Complex64> = (0..cols).map(|_| normal()).collect();
        let yc: f64 = h.mul_vec(&x).iter().map(|v| v.norm_sqr()).sum();
        let yr: f64 = complex_to_real(&h).mul_vec(&stack_complex(&x)).iter().map(|v| v * v).sum();
        prop_assert!((yc - yr).abs() <= 1e-10 * yc.max(1e-300));
    }

    #[test]
    fn ebn0_round_trip(ebn0 in -10.0f64..40.0, which in 0usize..3) {
        let c = Constellation::new([Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16][which]);
        prop_assert!((ebn0_from_sigma2(sigma2_from_ebn0(ebn0, &c), &c) - ebn0).abs() < 1e-9);
    }

    #[test]
    fn constellation_invariants(which in 0usize..3, w in proptest::collection::vec(0.01f64..1.0, 4)) {
        let m = [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16][which];
        let base = Constellation::new(m);
        prop_assert!((base.complex_energy() - 1.0).abs() < 1e-12);
        prop_assert!(base.representer().windows(2).all(|p| p[0] < p[1]));
        for i in 1..base.k() {
            prop_assert_eq!(base.bit_distance(i - 1, i), 1);
        }
        let w = &w[..base.k()];
        let total: f64 = w.iter().sum();
        let priors: Vec<f64> = w.iter().map(|v| v / total).collect();
        let c = base.with_priors(priors).unwrap();
        prop_assert!((c.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
