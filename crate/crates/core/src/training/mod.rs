//! Training of per-layer temperatures and step sizes by minimizing the mean
//! cross-entropy between the output posterior and the transmitted symbols.

mod adam;
mod unfold;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use adam::{Adam, AdamConfig};
pub use unfold::{sample_loss_and_gradient, Workspace};

use crate::cmd::{detect, CmdMode, CmdParams};
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::system::{sample_instance, ChannelConfig, Constellation, SystemInstance};

/// Lower bound applied to step sizes after every update.
pub const MIN_STEP_SIZE: f64 = 1e-6;

/// Initial per-layer parameter schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitSchedule {
    /// Unit step sizes and temperatures decaying linearly from `τ_max` to 0.1.
    #[default]
    Default,
    /// Temperatures and step sizes both decaying linearly from 1 to 0.01.
    Splin,
}

impl InitSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::Splin => "splin",
        }
    }
}

impl core::str::FromStr for InitSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Self::Default),
            "splin" => Ok(Self::Splin),
            _ => Err(Error::InvalidParams(alloc::format!(
                "unknown init schedule `{s}`"
            ))),
        }
    }
}

/// Starting temperature of the default schedule for a `k`-level alphabet.
pub fn max_temperature(k: usize) -> f64 {
    if k <= 2 {
        1.0
    } else {
        2.0 / (k as f64 - 1.0)
    }
}

/// Untrained parameters for `layers` iterations.
pub fn init_params(layers: usize, k: usize, schedule: InitSchedule) -> Result<CmdParams> {
    if layers == 0 {
        return Err(Error::InvalidParams(
            "at least one layer is required".into(),
        ));
    }
    let frac = |j: usize| j as f64 / layers as f64;
    let (temperatures, step_sizes) = match schedule {
        InitSchedule::Default => {
            let t_max = max_temperature(k);
            let t = (0..=layers)
                .map(|j| t_max - (t_max - 0.1) * frac(j))
                .collect();
            (t, vec![1.0; layers])
        }
        InitSchedule::Splin => {
            let t: Vec<f64> = (0..=layers).map(|j| 1.0 - 0.99 * frac(j)).collect();
            let d = t[..layers].to_vec();
            (t, d)
        }
    };
    CmdParams::new(temperatures, step_sizes)
}

/// Number of layers used when none is configured: two per transmit antenna.
pub fn default_layers(channel: &ChannelConfig) -> usize {
    2 * channel.n_tx
}

/// Flattens parameters to `[ln τ, δ]`.
pub fn encode(params: &CmdParams) -> Vec<f64> {
    params
        .temperatures()
        .iter()
        .map(|&t| math::ln(t))
        .chain(params.step_sizes().iter().copied())
        .collect()
}

/// Inverse of [`encode`].
pub fn decode(theta: &[f64], layers: usize) -> CmdParams {
    let temperatures = theta[..=layers].iter().map(|&l| math::exp(l)).collect();
    let step_sizes = theta[layers + 1..].to_vec();
    CmdParams::from_parts_unchecked(temperatures, step_sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    /// Eb/N0 in dB, drawn uniformly per training instance.
    pub ebn0_range_db: (f64, f64),
    pub adam: AdamConfig,
    pub layers: usize,
    pub init: InitSchedule,
    pub mode: CmdMode,
    pub seed: u64,
    /// Parameters are snapshotted every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Defaults for a constellation: 500 samples over 4..27 dB, or 1500
    /// samples over 10..33 dB for four-level alphabets.
    pub fn for_constellation(constellation: &Constellation, layers: usize) -> Self {
        let (batch_size, ebn0_range_db) = if constellation.k() > 2 {
            (1500, (10.0, 33.0))
        } else {
            (500, (4.0, 27.0))
        };
        Self {
            batch_size,
            iterations: 10_000,
            ebn0_range_db,
            adam: AdamConfig::default(),
            layers,
            init: InitSchedule::Default,
            mode: CmdMode::MultiClass,
            seed: 0,
            checkpoint_every: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.layers == 0 {
            return Err(Error::InvalidParams(
                "batch size and layer count must be positive".into(),
            ));
        }
        let (lo, hi) = self.ebn0_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParams(
                "Eb/N0 range must be finite and ordered".into(),
            ));
        }
        self.adam.validate()
    }
}

/// Draws training instance `index` of iteration `iteration`.
///
/// Each instance has its own random stream, so batches can be generated in
/// any order or in parallel.
pub fn training_sample(
    config: &TrainConfig,
    constellation: &Constellation,
    channel: &ChannelConfig,
    iteration: usize,
    index: usize,
) -> Result<SystemInstance> {
    let mut r = rng::stream(
        config.seed,
        rng::domain::TRAIN,
        rng::index2(iteration as u64, index as u64),
    );
    let (lo, hi) = config.ebn0_range_db;
    let ebn0 = if hi > lo { r.random_range(lo..hi) } else { lo };
    sample_instance(channel, constellation, ebn0, &mut r)
}

/// Mean loss and gradient over a batch.
pub trait BatchEvaluator {
    /// Returns the loss and gradient summed over every symbol of the batch,
    /// together with the symbol count. Per-sample contributions must be
    /// added in batch order so that results do not depend on scheduling.
    fn sums(
        &self,
        batch: &[SystemInstance],
        constellation: &Constellation,
        params: &CmdParams,
        mode: CmdMode,
    ) -> (f64, Vec<f64>, usize);

    fn loss_and_gradient(
        &self,
        batch: &[SystemInstance],
        constellation: &Constellation,
        params: &CmdParams,
        mode: CmdMode,
    ) -> (f64, Vec<f64>) {
        let (loss, mut grad, count) = self.sums(batch, constellation, params, mode);
        let scale = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

/// Single-threaded evaluator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchEvaluator for Sequential {
    fn sums(
        &self,
        batch: &[SystemInstance],
        constellation: &Constellation,
        params: &CmdParams,
        mode: CmdMode,
    ) -> (f64, Vec<f64>, usize) {
        let mut ws = Workspace::default();
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        let mut sample = vec![0.0; params.len()];
        let mut count = 0;
        for inst in batch {
            sample.iter_mut().for_each(|g| *g = 0.0);
            loss +=
                sample_loss_and_gradient(inst, constellation, params, mode, &mut ws, &mut sample);
            for (g, s) in grad.iter_mut().zip(&sample) {
                *g += s;
            }
            count += inst.n();
        }
        (loss, grad, count)
    }
}

/// Mean cross-entropy of the detector's output posterior, computed through
/// [`detect`] rather than the training pass.
pub fn cross_entropy_loss(
    batch: &[SystemInstance],
    constellation: &Constellation,
    params: &CmdParams,
    mode: CmdMode,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for inst in batch {
        let out = detect(inst, constellation, params, mode)?;
        for (row, &t) in out.log_posterior_rows().zip(&inst.x_indices) {
            total -= row[t];
        }
        count += inst.n();
    }
    Ok(total / count.max(1) as f64)
}

/// Loss history and periodic parameter snapshots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Batch loss before each update.
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub checkpoints: Vec<(usize, CmdParams)>,
}

/// Stateful optimizer loop; [`train`] drives it to completion.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    constellation: Constellation,
    channel: ChannelConfig,
    theta: Vec<f64>,
    params: CmdParams,
    adam: Adam,
    iteration: usize,
    trace: TrainTrace,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        constellation: Constellation,
        channel: ChannelConfig,
    ) -> Result<Self> {
        let params = init_params(config.layers, constellation.k(), config.init)?;
        Self::with_params(config, constellation, channel, params)
    }

    /// Starts from given parameters instead of the configured schedule.
    pub fn with_params(
        config: TrainConfig,
        constellation: Constellation,
        channel: ChannelConfig,
        params: CmdParams,
    ) -> Result<Self> {
        config.validate()?;
        channel.validate()?;
        if params.n_layers() != config.layers {
            return Err(Error::InvalidParams(alloc::format!(
                "parameters have {} layers, config asks for {}",
                params.n_layers(),
                config.layers
            )));
        }
        if config.mode == CmdMode::Binary && constellation.k() != 2 {
            return Err(Error::ModeMismatch(constellation.k()));
        }
        let theta = encode(&params);
        let adam = Adam::new(config.adam, theta.len());
        Ok(Self {
            config,
            constellation,
            channel,
            theta,
            params,
            adam,
            iteration: 0,
            trace: TrainTrace::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &CmdParams {
        &self.params
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Draws the batch for the current iteration.
    pub fn batch(&self) -> Result<Vec<SystemInstance>> {
        (0..self.config.batch_size)
            .map(|i| {
                training_sample(
                    &self.config,
                    &self.constellation,
                    &self.channel,
                    self.iteration,
                    i,
                )
            })
            .collect()
    }

    /// Applies one update from an already drawn batch and returns its loss.
    pub fn step_with_batch<E: BatchEvaluator + ?Sized>(
        &mut self,
        batch: &[SystemInstance],
        evaluator: &E,
    ) -> Result<f64> {
        let (loss, grad) =
            evaluator.loss_and_gradient(batch, &self.constellation, &self.params, self.config.mode);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                snapshot: alloc::boxed::Box::new(self.params.clone()),
            });
        }
        self.adam.step(&mut self.theta, &grad);
        let layers = self.config.layers;
        for d in &mut self.theta[layers + 1..] {
            *d = d.max(MIN_STEP_SIZE);
        }
        self.params = decode(&self.theta, layers);
        self.trace.losses.push(loss);
        self.trace
            .learning_rates
            .push(self.config.adam.learning_rate);
        self.iteration += 1;
        let every = self.config.checkpoint_every;
        if every > 0 && self.iteration.is_multiple_of(every) {
            self.trace
                .checkpoints
                .push((self.iteration, self.params.clone()));
        }
        Ok(loss)
    }

    pub fn step<E: BatchEvaluator + ?Sized>(&mut self, evaluator: &E) -> Result<f64> {
        let batch = self.batch()?;
        self.step_with_batch(&batch, evaluator)
    }

    pub fn finish(self) -> (CmdParams, TrainTrace) {
        (self.params, self.trace)
    }
}

/// Runs the configured number of iterations from the configured schedule.
pub fn train<E: BatchEvaluator + ?Sized>(
    config: &TrainConfig,
    constellation: &Constellation,
    channel: &ChannelConfig,
    evaluator: &E,
) -> Result<(CmdParams, TrainTrace)> {
    let mut trainer = Trainer::new(config.clone(), constellation.clone(), *channel)?;
    while trainer.iteration() < config.iterations {
        trainer.step(evaluator)?;
    }
    Ok(trainer.finish())
}
