use serde::{Deserialize, Serialize};

use crate::diffnet::ParamVector;
use crate::envsuite::{quality, reward, TaskSpec};
use crate::error::Result;
use crate::exec::Exec;
use crate::flowcore::{ode_sample, NoiseSchedule};
use crate::rng::{self, standard_normal_vec};

/// Deterministic (ODE) evaluation of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_reward: f64,
    /// Fraction of samples whose reward exceeds the threshold.
    pub accuracy: f64,
    pub quality_mean: f64,
    pub per_context_reward: Vec<f64>,
}

/// Initial noises are derived from `eval_seed` alone, so successive
/// evaluations in a run compare the policy on identical starting points.
pub fn evaluate(
    params: &ParamVector,
    task: &TaskSpec,
    schedule: &NoiseSchedule,
    samples_per_context: usize,
    threshold: f64,
    eval_seed: u64,
    exec: Exec,
) -> Result<EvalSummary> {
    let n = samples_per_context;
    let contexts = task.context_count;
    let samples = exec.try_map(contexts * n, |idx| -> Result<(f64, f64)> {
        let c = idx / n;
        let mut r = rng::rng_from(&[rng::stream::EVAL, eval_seed, c as u64, (idx % n) as u64]);
        let x_start = standard_normal_vec(&mut r, task.state_dim);
        let x0 = ode_sample(params, &x_start, c, schedule)?;
        Ok((reward(task, &x0, c), quality(task, &x0)))
    })?;
    let total = samples.len() as f64;
    let per_context_reward = samples
        .chunks(n)
        .map(|ch| ch.iter().map(|s| s.0).sum::<f64>() / n as f64)
        .collect();
    Ok(EvalSummary {
        mean_reward: samples.iter().map(|s| s.0).sum::<f64>() / total,
        accuracy: samples.iter().filter(|s| s.0 > threshold).count() as f64 / total,
        quality_mean: samples.iter().map(|s| s.1).sum::<f64>() / total,
        per_context_reward,
    })
}
