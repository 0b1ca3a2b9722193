//! Statistical and numerical checks of the Gumbel / concrete kernel.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use cmdnet_core::concrete::{
    concrete_log_density, gumbel_max_sample, relax_to_symbol, sample_gumbel, tempered_softmax,
    ConcreteParams,
};
use cmdnet_core::{Constellation, Modulation};
use common::rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic for counts against `priors`.
pub fn chi_square_p(counts: &[u64], priors: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(priors)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .cdf(stat)
}

#[test]
fn gumbel_moments() {
    let g = sample_gumbel(1_000_000, &mut rng(1));
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(
        (mean - 0.577_215_664_901_532_9).abs() < 0.003,
        "mean {mean}"
    );
    assert!(
        (var - std::f64::consts::PI.powi(2) / 6.0).abs() < 0.01,
        "variance {var}"
    );
}

#[test]
fn gumbel_max_matches_priors() {
    let mut r = rng(2);
    for priors in [vec![0.25; 4], vec![0.1, 0.2, 0.3, 0.4], vec![0.3, 0.7]] {
        let mut counts = vec![0u64; priors.len()];
        for _ in 0..100_000 {
            counts[gumbel_max_sample(&priors, &mut r)] += 1;
        }
        let p = chi_square_p(&counts, &priors);
        assert!(p > 0.001, "priors {priors:?}: counts {counts:?}, p = {p}");
        if priors.len() == 2 {
            let f = counts[1] as f64 / 1e5;
            assert!((f - 0.7).abs() < 0.0045, "frequency {f}");
        }
    }
}

#[test]
fn gumbel_max_degenerate_prior() {
    let mut r = rng(3);
    let priors = [1.0 - 2e-12, 1e-12, 1e-12];
    assert!((0..10_000).all(|_| gumbel_max_sample(&priors, &mut r) == 0));
}

#[test]
fn zero_temperature_softmax_is_one_hot() {
    let z = tempered_softmax(&[0.0, 1.0, -1.0], 1e-3);
    assert!(z[1] > 1.0 - 1e-6 && z[0] < 1e-6 && z[2] < 1e-6);
}

#[test]
fn density_at_center_is_one() {
    let p = ConcreteParams::new(vec![0.5, 0.5], 1.0).unwrap();
    let d = concrete_log_density(&[0.5, 0.5], &p).unwrap().exp();
    assert!((d - 1.0).abs() < 1e-12);
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Integrates the two-class density over `z₁ ∈ (0,1)` in logit coordinates,
/// `z₁ = σ(t)`, `dz₁ = z₁(1 - z₁) dt`. Points within 1e-12 of the boundary
/// are outside the density's domain, so the mass beyond `|t| = 25` is taken
/// from the closed-form CDF `P(z₁ ≤ σ(t)) = σ(τt - ln(ρ₁/ρ₂))`.
fn integrate_two_class(params: &ConcreteParams) -> f64 {
    let tau = params.temperature();
    let shift = (params.priors()[0] / params.priors()[1]).ln();
    let span = 25.0;
    let interior = simpson(-span, span, 20_000, |t| {
        let z = sigmoid(t);
        concrete_log_density(&[z, 1.0 - z], params).unwrap().exp() * z * (1.0 - z)
    });
    let tails = sigmoid(-tau * span - shift) + 1.0 - sigmoid(tau * span - shift);
    interior + tails
}

#[test]
fn two_class_density_integrates_to_one() {
    let p = ConcreteParams::new(vec![0.5, 0.5], 0.5).unwrap();
    let total = integrate_two_class(&p);
    assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    for (priors, tau) in [([0.3, 0.7], 1.0), ([0.9, 0.1], 0.25), ([0.5, 0.5], 2.0)] {
        let p = ConcreteParams::new(priors.to_vec(), tau).unwrap();
        let total = integrate_two_class(&p);
        assert!(
            (total - 1.0).abs() < 1e-3,
            "priors {priors:?}, τ = {tau}: {total}"
        );
    }
}

#[test]
fn two_class_cdf_matches_closed_form() {
    // P(z₁ ≤ s) = σ(τ·logit(s) - ln(ρ₁/ρ₂)) for the two-class concrete variable.
    let p = ConcreteParams::new(vec![0.3, 0.7], 0.6).unwrap();
    for s in [0.1f64, 0.4, 0.8] {
        let logit = (s / (1.0 - s)).ln();
        let numeric = simpson(-200.0, logit, 40_000, |t| {
            let z = sigmoid(t);
            if !(z > 1e-12) {
                return 0.0;
            }
            concrete_log_density(&[z, 1.0 - z], &p).unwrap().exp() * z * (1.0 - z)
        });
        let exact = sigmoid(0.6 * logit - (0.3f64 / 0.7).ln());
        assert!(
            (numeric - exact).abs() < 1e-6,
            "s = {s}: {numeric} vs {exact}"
        );
    }
}

#[test]
fn three_class_density_integrates_to_one() {
    // z = softmax(t₁, t₂, 0); the Jacobian of (z₁, z₂) w.r.t. (t₁, t₂) is z₁z₂z₃.
    let p = ConcreteParams::new(vec![0.2, 0.3, 0.5], 0.8).unwrap();
    let span = 40.0;
    let n = 800;
    let inner = |t1: f64| {
        simpson(-span, span, n, |t2| {
            let m = t1.max(t2).max(0.0);
            let (e1, e2, e3) = ((t1 - m).exp(), (t2 - m).exp(), (-m).exp());
            let s = e1 + e2 + e3;
            let z = [e1 / s, e2 / s, e3 / s];
            if z.iter().any(|&v| !(v > 1e-12)) {
                return 0.0;
            }
            concrete_log_density(&z, &p).unwrap().exp() * z[0] * z[1] * z[2]
        })
    };
    let total = simpson(-span, span, n, inner);
    assert!((total - 1.0).abs() < 1e-3, "integral {total}");
}

#[test]
fn two_class_log_density_is_convex_for_small_temperature() {
    for tau in [0.1, 0.5, 0.9, 1.0] {
        for priors in [[0.5, 0.5], [0.2, 0.8]] {
            let p = ConcreteParams::new(priors.to_vec(), tau).unwrap();
            let h = 1e-3;
            let ld = |z: f64| concrete_log_density(&[z, 1.0 - z], &p).unwrap();
            let mut z = 0.01;
            while z < 0.99 {
                let second = ld(z + h) - 2.0 * ld(z) + ld(z - h);
                assert!(
                    second >= -1e-9,
                    "τ = {tau}, ρ = {priors:?}, z = {z}: {second:e}"
                );
                z += 0.01;
            }
        }
    }
}

#[test]
fn zero_temperature_relaxed_mean_matches_prior_mean() {
    let c = Constellation::new(Modulation::Qam16)
        .with_priors(vec![0.1, 0.2, 0.3, 0.4])
        .unwrap();
    let mut r = rng(5);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let g = sample_gumbel(c.k(), &mut r);
        let logits: Vec<f64> = c.log_priors().iter().zip(&g).map(|(l, g)| l + g).collect();
        sum += relax_to_symbol(&tempered_softmax(&logits, 1e-3), c.representer()).unwrap();
    }
    let mean = sum / n as f64;
    assert!((mean - c.mean()).abs() < 0.01, "{mean} vs {}", c.mean());
}
