//! Soft-output quality: reliability diagrams, expected calibration error,
//! KL divergence to the exact marginals and LLR histograms.

use std::io::Write;

use cmdnet_core::cmd::LLR_CLAMP;
use cmdnet_core::metrics::{CalibrationAccumulator, CalibrationReport};
use cmdnet_core::rng::{self, domain};
use cmdnet_core::system::sample_instance;
use cmdnet_core::{ChannelConfig, Constellation, IoOracle, OracleLimits};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, NamedDetector};
use crate::error::{HarnessError, Result};

/// Instances per parallel work unit; partial results are merged in unit
/// order.
const CHUNK: u64 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorCalibration {
    pub detector: String,
    pub ebn0_db: f64,
    pub report: CalibrationReport,
    /// Counts of all LLRs over equal bins spanning `±LLR_CLAMP`.
    pub llr_histogram: Vec<u64>,
}

/// Calibration settings independent of the detector list.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub constellation: Constellation,
    pub channel: ChannelConfig,
    pub ebn0_db: f64,
    pub instances: u64,
    pub llr_bins: usize,
    pub seed: u64,
}

pub fn run_calibration(config: &ExperimentConfig) -> Result<Vec<DetectorCalibration>> {
    let section = config
        .calibration
        .as_ref()
        .ok_or_else(|| HarnessError::config("the configuration has no [calibration] section"))?;
    let detectors = config.build_detectors()?;
    if detectors.is_empty() {
        return Err(HarnessError::config("no detectors configured"));
    }
    let run = Calibration {
        constellation: config.constellation()?,
        channel: config.channel(),
        ebn0_db: section.ebn0_db,
        instances: section.instances,
        llr_bins: section.llr_bins,
        seed: config.seed,
    };
    run.run(&detectors)
}

#[derive(Clone)]
struct Partial {
    acc: CalibrationAccumulator,
    llr: Vec<u64>,
}

impl Calibration {
    /// Exact marginals are used when the exhaustive oracle fits the default
    /// search limit; otherwise the reports carry no KL value.
    pub fn run(&self, detectors: &[NamedDetector]) -> Result<Vec<DetectorCalibration>> {
        let c = &self.constellation;
        let k = c.k();
        let io = IoOracle {
            limits: OracleLimits::default(),
        };
        let real_dims = if c.modulation().is_real() {
            self.channel.n_tx
        } else {
            2 * self.channel.n_tx
        };
        let exact = io.limits.check(k, real_dims).is_ok();
        let empty = Partial {
            acc: CalibrationAccumulator::default(),
            llr: vec![0; self.llr_bins],
        };
        let chunks = self.instances.div_ceil(CHUNK);
        let partials: Vec<Vec<Partial>> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut parts = vec![empty.clone(); detectors.len()];
                for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(self.instances) {
                    let mut r = rng::stream(self.seed, domain::CALIBRATION, i);
                    let inst = sample_instance(&self.channel, c, self.ebn0_db, &mut r)?;
                    let marginals: Option<Vec<f64>> = if exact {
                        Some(
                            io.log_marginals(&inst, c)?
                                .iter()
                                .map(|l| l.exp())
                                .collect(),
                        )
                    } else {
                        None
                    };
                    for (d, part) in detectors.iter().zip(&mut parts) {
                        let out = d.detector.detect(&inst, c)?;
                        for (n, (row, &t)) in out.posterior_rows().zip(&inst.x_indices).enumerate()
                        {
                            part.acc.add(row, t);
                            if let Some(m) = &marginals {
                                part.acc.add_kl(&m[n * k..(n + 1) * k], row);
                            }
                        }
                        for &l in &out.llr {
                            part.llr[llr_bin(l, self.llr_bins)] += 1;
                        }
                    }
                }
                Ok(parts)
            })
            .collect::<Result<_>>()?;
        let mut totals = vec![empty; detectors.len()];
        for parts in &partials {
            for (total, part) in totals.iter_mut().zip(parts) {
                total.acc.merge(&part.acc);
                for (a, b) in total.llr.iter_mut().zip(&part.llr) {
                    *a += b;
                }
            }
        }
        Ok(detectors
            .iter()
            .zip(totals)
            .map(|(d, t)| DetectorCalibration {
                detector: d.label.clone(),
                ebn0_db: self.ebn0_db,
                report: t.acc.report(),
                llr_histogram: t.llr,
            })
            .collect())
    }
}

fn llr_bin(llr: f64, bins: usize) -> usize {
    let u = (llr + LLR_CLAMP) / (2.0 * LLR_CLAMP);
    ((u * bins as f64) as usize).min(bins - 1)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    detector: &'a str,
    ebn0_db: f64,
    symbols: u64,
    ece: f64,
    mean_kl: Option<f64>,
}

#[derive(Serialize)]
struct ReliabilityRow<'a> {
    detector: &'a str,
    bin: usize,
    lower: f64,
    upper: f64,
    count: u64,
    confidence: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct LlrRow<'a> {
    detector: &'a str,
    lower: f64,
    upper: f64,
    count: u64,
}

/// One line per detector; `mean_kl` is empty without exact marginals.
pub fn write_summary_csv<W: Write>(results: &[DetectorCalibration], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(SummaryRow {
            detector: &r.detector,
            ebn0_db: r.ebn0_db,
            symbols: r.report.symbols,
            ece: r.report.ece,
            mean_kl: r.report.mean_kl,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reliability_csv<W: Write>(results: &[DetectorCalibration], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for (i, b) in r.report.bins.iter().enumerate() {
            w.serialize(ReliabilityRow {
                detector: &r.detector,
                bin: i,
                lower: b.lower,
                upper: b.upper,
                count: b.count,
                confidence: b.confidence,
                accuracy: b.accuracy,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_llr_csv<W: Write>(results: &[DetectorCalibration], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        let width = 2.0 * LLR_CLAMP / r.llr_histogram.len() as f64;
        for (i, &count) in r.llr_histogram.iter().enumerate() {
            let lower = -LLR_CLAMP + i as f64 * width;
            w.serialize(LlrRow {
                detector: &r.detector,
                lower,
                upper: lower + width,
                count,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
