//! Runtime oracle checks: analytic gradients against finite differences, the
//! concrete kernel against its closed forms, and oracle dominance.

use cmdnet_core::cmd::{binary_gradient, binary_objective, objective, objective_gradient};
use cmdnet_core::concrete::{concrete_log_density, gumbel_max_sample, ConcreteParams};
use cmdnet_core::metrics::{estimate_mops, MopsDetector};
use cmdnet_core::rng::{self, StreamRng};
use cmdnet_core::system::sample_instance;
use cmdnet_core::training::{self, decode, encode, sample_loss_and_gradient, Workspace};
use cmdnet_core::{
    ChannelConfig, CmdMode, CmdParams, Constellation, Detector, GumbelState, IoOracle, MapOracle,
    MatchedFilter, Mmse, Modulation, SystemInstance,
};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SELFTEST: u64 = 0x5345_4c46_5445_5354;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
pub const OBJECTIVE_TOL: f64 = 1e-6;
pub const LOSS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn stream(seed: u64) -> StreamRng {
    rng::stream(seed, SELFTEST, 0)
}

/// `‖a - b‖ / max(‖b‖, 1e-8)`.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + FD_STEP;
            let up = f(&p);
            p[i] = x[i] - FD_STEP;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Small random system with 1–3 transmit and receive antennas, Eb/N0 in
/// [0, 20] dB.
fn random_instance(c: &Constellation, r: &mut StreamRng) -> SystemInstance {
    let cfg = ChannelConfig::iid(r.random_range(1..=3), r.random_range(1..=3));
    sample_instance(&cfg, c, r.random_range(0.0..20.0), r).expect("valid configuration")
}

fn random_modulation(r: &mut StreamRng) -> Modulation {
    [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16][r.random_range(0..3)]
}

/// Worst relative gradient errors over `seeds` random cases each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientErrors {
    pub multiclass_objective: f64,
    pub binary_objective: f64,
    pub multiclass_loss: f64,
    pub binary_loss: f64,
}

impl GradientErrors {
    pub fn passed(&self) -> bool {
        self.multiclass_objective < OBJECTIVE_TOL
            && self.binary_objective < OBJECTIVE_TOL
            && self.multiclass_loss < LOSS_TOL
            && self.binary_loss < LOSS_TOL
    }
}

pub fn gradient_errors(seeds: u64) -> GradientErrors {
    let mut e = GradientErrors {
        multiclass_objective: 0.0,
        binary_objective: 0.0,
        multiclass_loss: 0.0,
        binary_loss: 0.0,
    };
    let mut ws = Workspace::default();
    for seed in 0..seeds {
        let mut r = stream(seed);
        let c = Constellation::new(random_modulation(&mut r));
        let inst = random_instance(&c, &mut r);
        let tau = r.random_range(0.3..1.5);
        let k = c.k();
        let gamma: Vec<f64> = (0..inst.n() * k)
            .map(|_| r.random_range(-3.0..3.0))
            .collect();
        let state = GumbelState::from_vec(inst.n(), k, gamma.clone()).expect("sized");
        let analytic = objective_gradient(&state, &inst, &c, tau);
        let fd = central_diff(&gamma, |g| {
            objective(
                &GumbelState::from_vec(inst.n(), k, g.to_vec()).expect("sized"),
                &inst,
                &c,
                tau,
            )
        });
        e.multiclass_objective = e
            .multiclass_objective
            .max(rel_err(analytic.as_slice(), &fd));

        let c2 = Constellation::new(if r.random() {
            Modulation::Bpsk
        } else {
            Modulation::Qpsk
        });
        let inst2 = random_instance(&c2, &mut r);
        let lambda: Vec<f64> = (0..inst2.n()).map(|_| r.random_range(-4.0..4.0)).collect();
        let analytic = binary_gradient(&lambda, &inst2, &c2, tau);
        let fd = central_diff(&lambda, |l| binary_objective(l, &inst2, &c2, tau));
        e.binary_objective = e.binary_objective.max(rel_err(&analytic, &fd));

        let layers = r.random_range(1..=5);
        let taus = (0..=layers).map(|_| r.random_range(0.3..1.2)).collect();
        let deltas = (0..layers).map(|_| r.random_range(0.2..1.2)).collect();
        let params = CmdParams::new(taus, deltas).expect("positive");
        for (mode, c, inst, worst) in [
            (CmdMode::MultiClass, &c, &inst, &mut e.multiclass_loss),
            (CmdMode::Binary, &c2, &inst2, &mut e.binary_loss),
        ] {
            let theta = encode(&params);
            let mut analytic = vec![0.0; theta.len()];
            sample_loss_and_gradient(inst, c, &params, mode, &mut ws, &mut analytic);
            let batch = std::slice::from_ref(inst);
            let n = inst.n() as f64;
            let fd = central_diff(&theta, |t| {
                n * training::cross_entropy_loss(batch, c, &decode(t, layers), mode)
                    .expect("valid mode")
            });
            *worst = worst.max(rel_err(&analytic, &fd));
        }
    }
    e
}

/// Upper-tail p-value of Pearson's statistic for `counts` against `priors`.
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
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("at least two classes");
    1.0 - dist.cdf(stat)
}

/// Smallest p-value of the Gumbel-max pmf test over several priors, 10⁵
/// draws each.
pub fn gumbel_max_min_p(seed: u64) -> f64 {
    let mut r = stream(seed);
    [vec![0.3, 0.7], vec![0.25; 4], vec![0.1, 0.2, 0.3, 0.4]]
        .iter()
        .map(|priors| {
            let mut counts = vec![0u64; priors.len()];
            for _ in 0..100_000 {
                counts[gumbel_max_sample(priors, &mut r)] += 1;
            }
            chi_square_p(&counts, priors)
        })
        .fold(1.0, f64::min)
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Integral of the two-class concrete density over `z₁ ∈ (0,1)`, by Simpson's
/// rule in logit coordinates with the closed-form mass beyond `|t| = 25`.
pub fn two_class_mass(priors: [f64; 2], tau: f64) -> f64 {
    let params = ConcreteParams::new(priors.to_vec(), tau).expect("valid parameters");
    let span = 25.0;
    let panels = 20_000;
    let h = 2.0 * span / panels as f64;
    let f = |t: f64| {
        let z = sigmoid(t);
        concrete_log_density(&[z, 1.0 - z], &params)
            .expect("interior point")
            .exp()
            * z
            * (1.0 - z)
    };
    let mut s = f(-span) + f(span);
    for i in 1..panels {
        s += f(-span + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let shift = (priors[0] / priors[1]).ln();
    s * h / 3.0 + sigmoid(-tau * span - shift) + 1.0 - sigmoid(tau * span - shift)
}

/// Concrete kernel: `(min chi-square p, |density(½,½) - 1|, worst |mass - 1|)`.
pub fn concrete_checks(seed: u64) -> (f64, f64, f64) {
    let p = gumbel_max_min_p(seed);
    let center = ConcreteParams::new(vec![0.5, 0.5], 1.0).expect("valid parameters");
    let density = concrete_log_density(&[0.5, 0.5], &center)
        .expect("interior point")
        .exp();
    let mass = [
        ([0.5, 0.5], 0.5),
        ([0.5, 0.5], 1.0),
        ([0.3, 0.7], 1.0),
        ([0.9, 0.1], 0.25),
        ([0.5, 0.5], 2.0),
    ]
    .iter()
    .map(|&(priors, tau)| (two_class_mass(priors, tau) - 1.0).abs())
    .fold(0.0, f64::max);
    (p, (density - 1.0).abs(), mass)
}

/// Paired one-sided 95% check that `a` is not worse than `b`:
/// `mean(a - b) ≤ 1.645·sd(a - b)/√n`.
pub fn not_worse(a: &[f64], b: &[f64]) -> bool {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    mean <= 1.645 * (var / n).sqrt()
}

/// Per-instance frame and symbol errors of MAP, IO, MF and MMSE on 2×2 BPSK
/// at 10 dB; MAP must not be worse in FER and IO not worse in SER than any
/// other detector.
fn oracle_dominance(trials: u64) -> Check {
    let c = Constellation::new(Modulation::Bpsk);
    let cfg = ChannelConfig::iid(2, 2);
    let detectors: [&dyn Detector; 4] = [
        &MapOracle::default(),
        &IoOracle::default(),
        &MatchedFilter,
        &Mmse,
    ];
    let mut frames: Vec<Vec<f64>> = (0..4)
        .map(|_| Vec::with_capacity(trials as usize))
        .collect();
    let mut symbols: Vec<Vec<f64>> = (0..4)
        .map(|_| Vec::with_capacity(trials as usize))
        .collect();
    for i in 0..trials {
        let mut r = rng::stream(1, SELFTEST, i);
        let inst = sample_instance(&cfg, &c, 10.0, &mut r).expect("valid configuration");
        for (d, det) in detectors.iter().enumerate() {
            let out = det.detect(&inst, &c).expect("small system");
            let errors = out
                .indices
                .iter()
                .zip(&inst.x_indices)
                .filter(|(a, b)| a != b)
                .count();
            frames[d].push(f64::from(u8::from(errors > 0)));
            symbols[d].push(errors as f64);
        }
    }
    let passed = frames.iter().all(|f| not_worse(&frames[0], f))
        && symbols.iter().all(|s| not_worse(&symbols[1], s));
    let total = |v: &[Vec<f64>]| {
        v.iter()
            .map(|d| d.iter().sum::<f64>() as u64)
            .collect::<Vec<_>>()
    };
    Check {
        name: "oracle dominance",
        passed,
        detail: format!(
            "frame errors MAP/IO/MF/MMSE {:?}, symbol errors {:?}",
            total(&frames),
            total(&symbols)
        ),
    }
}

pub fn run_all() -> Vec<Check> {
    let g = gradient_errors(100);
    let (p, center, mass) = concrete_checks(0);
    let mops = estimate_mops(MopsDetector::CmdMultiClass, 32, 32, 2, 1);
    vec![
        Check {
            name: "objective gradients",
            passed: g.multiclass_objective < OBJECTIVE_TOL && g.binary_objective < OBJECTIVE_TOL,
            detail: format!(
                "worst relative error {:.2e} multi-class, {:.2e} binary (tolerance {OBJECTIVE_TOL:e})",
                g.multiclass_objective, g.binary_objective
            ),
        },
        Check {
            name: "training loss gradients",
            passed: g.multiclass_loss < LOSS_TOL && g.binary_loss < LOSS_TOL,
            detail: format!(
                "worst relative error {:.2e} multi-class, {:.2e} binary (tolerance {LOSS_TOL:e})",
                g.multiclass_loss, g.binary_loss
            ),
        },
        Check {
            name: "Gumbel-max pmf",
            passed: p > 0.001,
            detail: format!("smallest chi-square p-value {p:.4}"),
        },
        Check {
            name: "concrete density",
            passed: center <= 1e-12 && mass <= 1e-3,
            detail: format!("|p(½,½) - 1| = {center:.1e}, worst |mass - 1| = {mass:.1e}"),
        },
        oracle_dominance(2000),
        Check { name: "operation count", passed: mops == 8704, detail: format!("CMD per layer, N = M = 64: {mops}") },
    ]
}
