use cmdnet_core::training::{sample_loss_and_gradient, BatchEvaluator, Workspace};
use cmdnet_core::{CmdMode, CmdParams, Constellation, SystemInstance};
use rayon::prelude::*;

/// Batch evaluator that computes per-sample gradients on the rayon pool and
/// adds them in batch order. The result is bitwise identical to
/// [`cmdnet_core::training::Sequential`] for any thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl BatchEvaluator for Parallel {
    fn sums(
        &self,
        batch: &[SystemInstance],
        constellation: &Constellation,
        params: &CmdParams,
        mode: CmdMode,
    ) -> (f64, Vec<f64>, usize) {
        let samples: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map_init(Workspace::default, |ws, inst| {
                let mut grad = vec![0.0; params.len()];
                let loss =
                    sample_loss_and_gradient(inst, constellation, params, mode, ws, &mut grad);
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (l, g) in &samples {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        (loss, grad, batch.iter().map(SystemInstance::n).sum())
    }
}
