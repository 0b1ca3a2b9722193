mod common;

use std::sync::OnceLock;

use cmdnet_core::training::{
    cross_entropy_loss, init_params, train, training_sample, TrainConfig, TrainTrace,
};
use cmdnet_core::{
    ChannelConfig, CmdDetector, CmdMode, CmdParams, Constellation, InitSchedule, MapOracle, Mmse,
    Modulation,
};
use cmdnet_harness::sweep::Sweep;
use cmdnet_harness::{NamedDetector, Parallel};
use common::{fixed, paired_upper};

const ITERATIONS: usize = 2000;

struct Trained {
    config: TrainConfig,
    channel: ChannelConfig,
    params: CmdParams,
    trace: TrainTrace,
}

fn trained(n: usize, layers: usize) -> Trained {
    let c = Constellation::new(Modulation::Bpsk);
    let channel = ChannelConfig::iid(n, n);
    let config = TrainConfig {
        iterations: ITERATIONS,
        seed: 21,
        ..TrainConfig::for_constellation(&c, layers)
    };
    let (params, trace) = train(&config, &c, &channel, &Parallel).unwrap();
    Trained {
        config,
        channel,
        params,
        trace,
    }
}

fn bpsk_8x8() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| trained(8, 16))
}

fn bpsk_4x4() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| trained(4, 8))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn smoothed_loss_decreases() {
    let losses = &bpsk_8x8().trace.losses;
    assert_eq!(losses.len(), ITERATIONS);
    let early = mean(&losses[..100]);
    let late = mean(&losses[ITERATIONS - 100..]);
    assert!(
        late < early,
        "loss over the first 100 iterations {early}, over the last 100 {late}"
    );
}

#[test]
fn held_out_cross_entropy_improves() {
    let t = bpsk_8x8();
    let c = Constellation::new(Modulation::Bpsk);
    let held_out = TrainConfig {
        seed: t.config.seed + 1000,
        ..t.config.clone()
    };
    let initial = init_params(t.config.layers, 2, t.config.init).unwrap();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for i in 0..4000 {
        let inst = [training_sample(&held_out, &c, &t.channel, 0, i).unwrap()];
        before.push(cross_entropy_loss(&inst, &c, &initial, CmdMode::MultiClass).unwrap());
        after.push(cross_entropy_loss(&inst, &c, &t.params, CmdMode::MultiClass).unwrap());
    }
    let (diff, bound) = paired_upper(&after, &before);
    assert!(
        diff + bound < 0.0,
        "held-out cross-entropy change {diff} ± {bound}"
    );
}

#[test]
fn trained_is_not_worse_than_initial_at_the_midpoint() {
    let t = bpsk_8x8();
    let (lo, hi) = t.config.ebn0_range_db;
    let initial = init_params(t.config.layers, 2, InitSchedule::Default).unwrap();
    let detectors = [
        NamedDetector::new(
            "trained",
            CmdDetector::new(t.params.clone(), CmdMode::MultiClass),
        ),
        NamedDetector::new("initial", CmdDetector::new(initial, CmdMode::MultiClass)),
    ];
    let sweep = Sweep {
        constellation: Constellation::new(Modulation::Bpsk),
        channel: t.channel,
        ebn0_db: vec![(lo + hi) / 2.0],
        stop: fixed(100_000),
        seed: 31,
    };
    let rows = sweep.run(&detectors).unwrap();
    let (trained, initial) = (rows[0].counts.ber(), rows[1].counts.ber());
    assert!(trained <= initial, "trained {trained} initial {initial}");
}

fn check_ordering(t: &Trained) {
    let layers = t.config.layers;
    let detectors = [
        NamedDetector::new("map", MapOracle::default()),
        NamedDetector::new(
            "trained",
            CmdDetector::new(t.params.clone(), CmdMode::MultiClass),
        ),
        NamedDetector::new(
            "cmd",
            CmdDetector::new(
                init_params(layers, 2, InitSchedule::Default).unwrap(),
                CmdMode::MultiClass,
            ),
        ),
        NamedDetector::new("mmse", Mmse),
    ];
    let sweep = Sweep {
        constellation: Constellation::new(Modulation::Bpsk),
        channel: t.channel,
        ebn0_db: vec![6.0, 9.0, 12.0],
        stop: fixed(100_000),
        seed: 41,
    };
    let rows = sweep.run(&detectors).unwrap();
    for point in rows.chunks(detectors.len()) {
        let ber: Vec<f64> = point.iter().map(|r| r.counts.ber()).collect();
        let n = t.channel.n_tx;
        let ebn0 = point[0].ebn0_db;
        assert!(
            ber[0] <= ber[1],
            "{n}x{n} {ebn0} dB: MAP {} trained {}",
            ber[0],
            ber[1]
        );
        assert!(
            ber[1] <= ber[2],
            "{n}x{n} {ebn0} dB: trained {} CMD {}",
            ber[1],
            ber[2]
        );
        assert!(
            ber[1] <= ber[3],
            "{n}x{n} {ebn0} dB: trained {} MMSE {}",
            ber[1],
            ber[3]
        );
    }
}

#[test]
fn detector_ordering_4x4() {
    check_ordering(bpsk_4x4());
}

#[test]
fn detector_ordering_8x8() {
    check_ordering(bpsk_8x8());
}
