//! Analytic gradients against central finite differences.

mod common;

use cmdnet_core::cmd::{
    binary_gradient, binary_objective, likelihood_gradient, objective, objective_gradient,
};
use cmdnet_core::training::{self, decode, encode, sample_loss_and_gradient, Workspace};
use cmdnet_core::{CmdMode, CmdParams, Constellation, GumbelState, Modulation};
use common::{central_diff, normals, random_instance, random_modulation, rel_err, rng};
use rand::Rng;

const OBJECTIVE_TOL: f64 = 1e-6;
const LOSS_TOL: f64 = 1e-4;
const SEEDS: u64 = 100;

#[test]
fn multiclass_objective_gradient() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let c = Constellation::new(random_modulation(&mut r));
        let inst = random_instance(&c, &mut r);
        let k = c.k();
        let tau = r.random_range(0.3..1.5);
        let gamma = normals(inst.n() * k, 1.5, &mut r);
        let state = GumbelState::from_vec(inst.n(), k, gamma.clone()).unwrap();
        let analytic = objective_gradient(&state, &inst, &c, tau);
        let fd = central_diff(&gamma, 1e-5, |g| {
            objective(
                &GumbelState::from_vec(inst.n(), k, g.to_vec()).unwrap(),
                &inst,
                &c,
                tau,
            )
        });
        worst = worst.max(rel_err(analytic.as_slice(), &fd, 1e-8));
    }
    assert!(worst < OBJECTIVE_TOL, "worst relative error {worst:e}");
}

#[test]
fn binary_objective_gradient() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(1000 + seed);
        let m = if r.random() {
            Modulation::Bpsk
        } else {
            Modulation::Qpsk
        };
        let c = Constellation::new(m);
        let c = if r.random() {
            c.with_priors(vec![0.3, 0.7]).unwrap()
        } else {
            c
        };
        let inst = random_instance(&c, &mut r);
        let tau = r.random_range(0.3..1.5);
        let lambda = normals(inst.n(), 2.0, &mut r);
        let analytic = binary_gradient(&lambda, &inst, &c, tau);
        let fd = central_diff(&lambda, 1e-5, |l| binary_objective(l, &inst, &c, tau));
        worst = worst.max(rel_err(&analytic, &fd, 1e-8));
    }
    assert!(worst < OBJECTIVE_TOL, "worst relative error {worst:e}");
}

#[test]
fn likelihood_gradient_matches_log_likelihood() {
    for seed in 0..SEEDS {
        let mut r = rng(2000 + seed);
        let c = Constellation::new(random_modulation(&mut r));
        let inst = random_instance(&c, &mut r);
        let x = normals(inst.n(), 0.7, &mut r);
        let analytic = likelihood_gradient(&x, &inst);
        let fd = central_diff(&x, 1e-5, |x| inst.log_likelihood(x));
        let e = rel_err(&analytic, &fd, 1e-8);
        assert!(e < OBJECTIVE_TOL, "seed {seed}: {e:e}");
    }
}

fn random_params<R: Rng>(layers: usize, r: &mut R) -> CmdParams {
    let taus = (0..=layers).map(|_| r.random_range(0.3..1.2)).collect();
    let deltas = (0..layers).map(|_| r.random_range(0.2..1.2)).collect();
    CmdParams::new(taus, deltas).unwrap()
}

fn check_loss_gradient(mode: CmdMode, seed_base: u64) {
    let mut worst: f64 = 0.0;
    let mut ws = Workspace::default();
    for seed in 0..SEEDS {
        let mut r = rng(seed_base + seed);
        let c = match mode {
            CmdMode::Binary => Constellation::new(if r.random() {
                Modulation::Bpsk
            } else {
                Modulation::Qpsk
            }),
            CmdMode::MultiClass => Constellation::new(random_modulation(&mut r)),
        };
        let inst = random_instance(&c, &mut r);
        let layers = r.random_range(1..=5);
        let params = random_params(layers, &mut r);
        let theta = encode(&params);
        let mut analytic = vec![0.0; theta.len()];
        let loss = sample_loss_and_gradient(&inst, &c, &params, mode, &mut ws, &mut analytic);
        let batch = std::slice::from_ref(&inst);
        let n = inst.n() as f64;
        // The loss through the detector's own posterior is an independent
        // evaluation of the same function.
        let direct = n * training::cross_entropy_loss(batch, &c, &params, mode).unwrap();
        assert!(
            (loss - direct).abs() <= 1e-9 * direct.abs().max(1.0),
            "seed {seed}: {loss} vs {direct}"
        );
        let fd = central_diff(&theta, 1e-5, |t| {
            n * training::cross_entropy_loss(batch, &c, &decode(t, layers), mode).unwrap()
        });
        worst = worst.max(rel_err(&analytic, &fd, 1e-8));
    }
    assert!(worst < LOSS_TOL, "worst relative error {worst:e}");
}

#[test]
fn multiclass_loss_gradient() {
    check_loss_gradient(CmdMode::MultiClass, 3000);
}

#[test]
fn binary_loss_gradient() {
    check_loss_gradient(CmdMode::Binary, 4000);
}
