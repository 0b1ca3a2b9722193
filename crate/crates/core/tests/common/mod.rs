#![allow(dead_code)]

use cmdnet_core::rng::{self, StreamRng};
use cmdnet_core::system::{sample_instance, sigma2_from_ebn0};
use cmdnet_core::{ChannelConfig, Constellation, Modulation, SystemInstance};
use rand::Rng;
use rand_distr::StandardNormal;

pub const TEST_DOMAIN: u64 = 0x7465_7374;

pub fn rng(seed: u64) -> StreamRng {
    rng::stream(seed, TEST_DOMAIN, 0)
}

pub fn random_modulation<R: Rng>(r: &mut R) -> Modulation {
    [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16][r.random_range(0..3)]
}

/// Small random system with a random noise level in [0, 20] dB.
pub fn random_instance<R: Rng>(c: &Constellation, r: &mut R) -> SystemInstance {
    let cfg = ChannelConfig::iid(r.random_range(1..=3), r.random_range(1..=3));
    let ebn0 = r.random_range(0.0..20.0);
    sample_instance(&cfg, c, ebn0, r).unwrap()
}

pub fn normals<R: Rng>(len: usize, scale: f64, r: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| scale * r.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn sigma2(ebn0: f64, c: &Constellation) -> f64 {
    sigma2_from_ebn0(ebn0, c)
}

/// `‖a - b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Central differences of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// One-sided paired test at 95%: the mean of `a - b` is not significantly
/// above zero. Returns `(mean, bound)` with `bound = 1.645·sd/√n`.
pub fn paired_upper(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, 1.645 * (var / n).sqrt())
}
