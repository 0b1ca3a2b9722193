//! The `cmdnet` command line.
//!
//! Exit status 0 on success, 1 on configuration or input errors, 2 on
//! numerical failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cmdnet_core::metrics::{estimate_mops, MopsDetector};
use cmdnet_core::training::Trainer;
use serde::Serialize;

use crate::calibration::{
    run_calibration, write_llr_csv, write_reliability_csv, write_summary_csv,
};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::parallel::Parallel;
use crate::params_file::{save_params, ParamsMetadata, SavedParams};
use crate::selftest;
use crate::sweep::{run_ber_sweep, write_report_csv};

#[derive(Debug, Parser)]
#[command(
    name = "cmdnet",
    version,
    about = "Concrete MAP detection: simulation, training and calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo BER/SER/FER sweep written as CSV.
    Simulate(RunArgs),
    /// Train per-layer parameters; writes a parameter file and a loss trace.
    Train(RunArgs),
    /// Reliability diagram, ECE, KL to exact marginals and LLR histogram.
    Calibrate(RunArgs),
    /// Multiplications per detection.
    Complexity(ComplexityArgs),
    /// Gradient, concrete-kernel and oracle self-checks.
    Selftest,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train for the long-run iteration count.
    #[arg(long)]
    long_run: bool,
}

#[derive(Debug, Args)]
struct ComplexityArgs {
    /// Complex transmit antennas.
    #[arg(long)]
    nt: usize,
    /// Complex receive antennas.
    #[arg(long)]
    nr: usize,
    /// Levels per real dimension.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Unfolded iterations; defaults to 2·nt.
    #[arg(long)]
    layers: Option<usize>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(&args),
        Command::Train(args) => train(&args),
        Command::Calibrate(args) => calibrate(&args),
        Command::Complexity(args) => complexity(&args),
        Command::Selftest => run_selftest(),
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output_path(args: &RunArgs, config: &ExperimentConfig, default_suffix: &str) -> PathBuf {
    match (&args.out, &config.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => config.resolve(p),
        (None, None) => PathBuf::from(format!("{}{default_suffix}", config.scenario)),
    }
}

/// `dir/stem.ext` → `dir/stem{suffix}.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.csv"))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e)),
        None => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_csv(path: &Path, write: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Result<()> {
    write(create(path)?).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn simulate(args: &RunArgs) -> Result<()> {
    let config = load(args)?;
    let out = output_path(args, &config, ".csv");
    let report = run_ber_sweep(&config)?;
    write_csv(&out, |w| write_report_csv(&report, w))?;
    for row in &report.rows {
        let c = &row.counts;
        println!(
            "{:>12} {:>7.2} dB  BER {:.4e} ± {:.1e}  ({} bit errors, {} instances)",
            row.detector,
            row.ebn0_db,
            c.ber(),
            c.ber_half_width(),
            c.bit_errors,
            c.frames
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    loss: f64,
    learning_rate: f64,
}

fn train(args: &RunArgs) -> Result<()> {
    let config = load(args)?;
    let train_config = config.train_config(args.long_run)?;
    let constellation = config.constellation()?;
    let channel = config.channel();
    let out = output_path(args, &config, "_params.toml");
    let mut trainer = Trainer::new(train_config.clone(), constellation.clone(), channel)?;
    let report_every = train_config.checkpoint_every.max(1);
    while trainer.iteration() < train_config.iterations {
        trainer.step(&Parallel)?;
        let it = trainer.iteration();
        if it % report_every == 0 {
            let losses = &trainer.trace().losses;
            let window = &losses[losses.len().saturating_sub(report_every)..];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            eprintln!("iteration {it}: mean loss {mean:.5}");
        }
    }
    let (params, trace) = trainer.finish();
    let saved = SavedParams {
        k: constellation.k(),
        params,
        metadata: ParamsMetadata::from_training(&train_config, &constellation, &channel),
    };
    create_parent(&out)?;
    save_params(&out, &saved)?;
    let trace_path = sibling(&out, "_trace");
    write_csv(&trace_path, |w| {
        let mut w = csv::Writer::from_writer(w);
        for (i, (&loss, &learning_rate)) in
            trace.losses.iter().zip(&trace.learning_rates).enumerate()
        {
            w.serialize(TraceRow {
                iteration: i,
                loss,
                learning_rate,
            })?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("wrote {} and {}", out.display(), trace_path.display());
    Ok(())
}

fn calibrate(args: &RunArgs) -> Result<()> {
    let config = load(args)?;
    let out = output_path(args, &config, "_calibration.csv");
    let results = run_calibration(&config)?;
    let reliability = sibling(&out, "_reliability");
    let llr = sibling(&out, "_llr");
    write_csv(&out, |w| write_summary_csv(&results, w))?;
    write_csv(&reliability, |w| write_reliability_csv(&results, w))?;
    write_csv(&llr, |w| write_llr_csv(&results, w))?;
    for r in &results {
        let kl = r
            .report
            .mean_kl
            .map_or_else(|| "n/a".into(), |v| format!("{v:.4e}"));
        println!(
            "{:>12}  ECE {:.4}  mean KL {kl}  ({} symbols)",
            r.detector, r.report.ece, r.report.symbols
        );
    }
    println!(
        "wrote {}, {} and {}",
        out.display(),
        reliability.display(),
        llr.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ComplexityRow {
    detector: &'static str,
    layers: Option<usize>,
    per_layer: Option<u64>,
    total: u64,
}

fn complexity(args: &ComplexityArgs) -> Result<()> {
    if args.nt == 0 || args.nr == 0 || args.k < 2 {
        return Err(HarnessError::config(
            "--nt and --nr must be positive and --k at least 2",
        ));
    }
    let layers = args.layers.unwrap_or(2 * args.nt);
    let mut rows = Vec::new();
    for (name, detector) in [
        ("cmd", MopsDetector::CmdMultiClass),
        ("cmd-binary", MopsDetector::CmdBinary),
    ] {
        let per_layer = estimate_mops(detector, args.nt, args.nr, args.k, 1);
        let total = estimate_mops(detector, args.nt, args.nr, args.k, layers);
        rows.push(ComplexityRow {
            detector: name,
            layers: Some(layers),
            per_layer: Some(per_layer),
            total,
        });
    }
    for (name, detector) in [
        ("mf", MopsDetector::MatchedFilter),
        ("mmse", MopsDetector::Mmse),
    ] {
        let total = estimate_mops(detector, args.nt, args.nr, args.k, 0);
        rows.push(ComplexityRow {
            detector: name,
            layers: None,
            per_layer: None,
            total,
        });
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<12} {:>7} {:>12} {:>14}",
        "detector", "layers", "per layer", "total"
    );
    for r in &rows {
        let opt = |v: Option<u64>| v.map_or_else(|| "-".into(), |v| v.to_string());
        let _ = writeln!(
            stdout,
            "{:<12} {:>7} {:>12} {:>14}",
            r.detector,
            opt(r.layers.map(|l| l as u64)),
            opt(r.per_layer),
            r.total
        );
    }
    if let Some(path) = &args.out {
        write_csv(path, |w| {
            let mut w = csv::Writer::from_writer(w);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn run_selftest() -> Result<()> {
    let checks = selftest::run_all();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    match checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect::<Vec<_>>()
    {
        failed if failed.is_empty() => Ok(()),
        failed => Err(HarnessError::SelfTest(failed.join(", "))),
    }
}
