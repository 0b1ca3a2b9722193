//! Monte Carlo BER/SER/FER sweeps.
//!
//! Instance `i` of grid point `p` is drawn from its own random stream, so all
//! detectors see the same instances and results do not depend on the worker
//! count. Each detector runs until it has collected `min_errors` bit errors or
//! used `max_instances` instances; the rule is evaluated after every round of
//! `round_size` instances.

use std::io::Write;

use cmdnet_core::metrics::ErrorCounts;
use cmdnet_core::rng::{self, domain};
use cmdnet_core::system::sample_instance;
use cmdnet_core::{ChannelConfig, Constellation};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, NamedDetector, StopRule};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub detector: String,
    pub ebn0_db: f64,
    pub counts: ErrorCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
}

impl MonteCarloReport {
    pub fn row(&self, detector: &str, ebn0_db: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.ebn0_db == ebn0_db)
    }
}

/// Sweep settings independent of the detector list.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub constellation: Constellation,
    pub channel: ChannelConfig,
    pub ebn0_db: Vec<f64>,
    pub stop: StopRule,
    pub seed: u64,
}

pub fn run_ber_sweep(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    let detectors = config.build_detectors()?;
    if detectors.is_empty() {
        return Err(HarnessError::config("no detectors configured"));
    }
    let sweep = Sweep {
        constellation: config.constellation()?,
        channel: config.channel(),
        ebn0_db: config.ebn0_db.clone(),
        stop: config.stop,
        seed: config.seed,
    };
    let rows = sweep.run(&detectors)?;
    Ok(MonteCarloReport {
        scenario: config.scenario.clone(),
        rows,
    })
}

impl Sweep {
    /// Rows in grid-major, detector-minor order.
    pub fn run(&self, detectors: &[NamedDetector]) -> Result<Vec<SweepRow>> {
        let mut rows = Vec::with_capacity(self.ebn0_db.len() * detectors.len());
        for (point, &ebn0) in self.ebn0_db.iter().enumerate() {
            let counts = self.run_point(detectors, point as u64, ebn0)?;
            rows.extend(detectors.iter().zip(counts).map(|(d, counts)| SweepRow {
                detector: d.label.clone(),
                ebn0_db: ebn0,
                counts,
            }));
        }
        Ok(rows)
    }

    fn run_point(
        &self,
        detectors: &[NamedDetector],
        point: u64,
        ebn0: f64,
    ) -> Result<Vec<ErrorCounts>> {
        let stop = self.stop;
        let mut totals = vec![ErrorCounts::default(); detectors.len()];
        let mut start = 0u64;
        loop {
            let active: Vec<usize> = (0..detectors.len())
                .filter(|&d| {
                    totals[d].bit_errors < stop.min_errors && totals[d].frames < stop.max_instances
                })
                .collect();
            if active.is_empty() {
                return Ok(totals);
            }
            let end = (start + stop.round_size).min(stop.max_instances);
            let round: Vec<Vec<ErrorCounts>> = (start..end)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(self.seed, domain::SWEEP, rng::index2(point, i));
                    let inst = sample_instance(&self.channel, &self.constellation, ebn0, &mut r)?;
                    active
                        .iter()
                        .map(|&d| {
                            let out = detectors[d].detector.detect(&inst, &self.constellation)?;
                            let mut counts = ErrorCounts::default();
                            counts.record(&inst.x_indices, &out.indices, &self.constellation);
                            Ok(counts)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for per_instance in &round {
                for (&d, counts) in active.iter().zip(per_instance) {
                    totals[d].merge(counts);
                }
            }
            start = end;
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    detector: &'a str,
    ebn0_db: f64,
    bit_errors: u64,
    bits: u64,
    symbol_errors: u64,
    symbols: u64,
    frame_errors: u64,
    frames: u64,
    instances: u64,
    ber: f64,
    ber_ci95: f64,
    ser: f64,
    ser_ci95: f64,
    fer: f64,
    fer_ci95: f64,
}

/// One line per (detector, Eb/N0) under a fixed header.
pub fn write_report_csv<W: Write>(report: &MonteCarloReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &report.rows {
        let c = &row.counts;
        w.serialize(CsvRow {
            scenario: &report.scenario,
            detector: &row.detector,
            ebn0_db: row.ebn0_db,
            bit_errors: c.bit_errors,
            bits: c.bits,
            symbol_errors: c.symbol_errors,
            symbols: c.symbols,
            frame_errors: c.frame_errors,
            frames: c.frames,
            instances: c.frames,
            ber: c.ber(),
            ber_ci95: c.ber_half_width(),
            ser: c.ser(),
            ser_ci95: c.ser_half_width(),
            fer: c.fer(),
            fer_ci95: c.fer_half_width(),
        })?;
    }
    w.flush()?;
    Ok(())
}
