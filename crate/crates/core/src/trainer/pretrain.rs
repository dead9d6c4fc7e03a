use crate::diffnet::{adam_update, AdamConfig, AdamState, Architecture, ParamVector};
use crate::envsuite::{sample_context, sample_data, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flowcore::{fm_loss_and_grad_with, FmSample};
use crate::rng::{self, standard_normal_vec};
use rand::Rng as _;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Draws one flow-matching batch; contexts are uniform and independent of the data.
pub fn fm_batch(task: &TaskSpec, batch: usize, seed: u64, step: u64) -> Vec<FmSample> {
    let mut r = rng::rng_from(&[rng::stream::PRETRAIN, seed, step]);
    (0..batch)
        .map(|_| {
            let x0 = sample_data(task, &mut r);
            let x1 = standard_normal_vec(&mut r, task.state_dim);
            let tau = r.random::<f64>();
            let context = sample_context(task, &mut r);
            FmSample { x0, x1, tau, context }
        })
        .collect()
}

/// Flow-matching pretraining from `ParamVector::init(arch, seed)`.
/// Returns the parameters and the per-step loss.
pub fn pretrain(arch: Architecture, task: &TaskSpec, cfg: &PretrainConfig, exec: Exec) -> Result<(ParamVector, Vec<f64>)> {
    let params = ParamVector::init(arch, cfg.seed);
    pretrain_from(params, task, cfg, exec)
}

pub fn pretrain_from(
    mut params: ParamVector,
    task: &TaskSpec,
    cfg: &PretrainConfig,
    exec: Exec,
) -> Result<(ParamVector, Vec<f64>)> {
    if params.arch().state_dim() != task.state_dim || params.arch().context_count() != task.context_count {
        return Err(Error::Shape("network does not match the task's state or context dimensions".into()));
    }
    let mut state = AdamState::new(params.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = fm_batch(task, cfg.batch, cfg.seed, step as u64);
        let (loss, grad) = fm_loss_and_grad_with(&params, &batch, exec)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                detail: format!("flow-matching loss {loss}"),
            });
        }
        adam_update(params.values_mut(), &grad, &mut state, &cfg.adam)?;
        losses.push(loss);
    }
    Ok((params, losses))
}
