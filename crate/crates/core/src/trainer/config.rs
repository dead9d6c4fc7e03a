use serde::{Deserialize, Serialize};

use crate::advantage::{AdvantageConfig, Estimator, DEFAULT_EPS_MEAN, DEFAULT_EPS_STD};
use crate::diffnet::{AdamConfig, Architecture};
use crate::envsuite::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::flowcore::NoiseSchedule;
use crate::rollout::RolloutOptions;

use super::PretrainConfig;

/// Full experiment configuration as a flat key/value document.
///
/// `tcrm_enabled` and `value_weights` default to on for the `vgpo` estimator
/// and off for `flow-grpo`; [`TrainConfig::resolve`] fills them in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,

    pub task: TaskKind,
    pub task_state_dim: usize,
    pub task_modes: usize,
    pub task_radius: f64,
    pub task_mode_variance: f64,
    pub task_contexts: usize,
    pub task_sharpness: f64,
    pub task_ring_radius: f64,

    pub hidden_dims: Vec<usize>,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,

    pub group_size: usize,
    pub sampling_steps: usize,
    pub train_steps: usize,
    pub contexts_per_step: usize,
    pub inner_epochs: usize,
    pub noise_level: f64,
    pub shared_initial_noise: bool,

    pub estimator: Estimator,
    pub tcrm_enabled: Option<bool>,
    pub value_weights: Option<bool>,
    pub gamma: f64,
    pub k: f64,
    pub eps_std: f64,
    pub eps_mean: f64,

    pub eps_clip: f64,
    pub kl_enabled: bool,
    pub beta_kl: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,

    pub eval_every: usize,
    pub eval_samples_per_context: usize,
    pub accuracy_threshold: f64,
    pub checkpoint_every: usize,
    /// Record real elapsed time in metrics. Off by default so that metrics
    /// files are byte-identical across repeated runs.
    pub log_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            task: TaskKind::ModePreference,
            task_state_dim: 2,
            task_modes: 8,
            task_radius: 3.0,
            task_mode_variance: 0.15,
            task_contexts: 8,
            task_sharpness: 1.0,
            task_ring_radius: 2.0,
            hidden_dims: vec![64, 64],
            pretrain_steps: 1000,
            pretrain_batch: 256,
            pretrain_lr: 2e-3,
            group_size: 8,
            sampling_steps: 10,
            train_steps: 1000,
            contexts_per_step: 4,
            inner_epochs: 1,
            noise_level: 0.7,
            shared_initial_noise: false,
            estimator: Estimator::Vgpo,
            tcrm_enabled: None,
            value_weights: None,
            gamma: 0.9,
            k: 0.5,
            eps_std: DEFAULT_EPS_STD,
            eps_mean: DEFAULT_EPS_MEAN,
            eps_clip: 0.2,
            kl_enabled: false,
            beta_kl: 0.01,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            eval_every: 25,
            eval_samples_per_context: 256,
            accuracy_threshold: 0.5,
            checkpoint_every: 0,
            log_wallclock: false,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

impl TrainConfig {
    /// Fills estimator-dependent switches and checks every invariant.
    pub fn resolve(mut self) -> Result<Self> {
        let vgpo = self.estimator == Estimator::Vgpo;
        let tcrm = *self.tcrm_enabled.get_or_insert(vgpo);
        let weights = *self.value_weights.get_or_insert(vgpo && tcrm);
        if !vgpo && (tcrm || weights) {
            return Err(invalid(
                "estimator flow-grpo uses terminal rewards only: tcrm_enabled and value_weights must be false".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma = {} must lie in [0, 1)", self.gamma)));
        }
        if !(self.k >= 0.0) {
            return Err(invalid(format!("k = {} must be >= 0", self.k)));
        }
        if !(self.eps_clip > 0.0) {
            return Err(invalid(format!("eps_clip = {} must be > 0", self.eps_clip)));
        }
        if !(self.beta_kl >= 0.0) {
            return Err(invalid(format!("beta_kl = {} must be >= 0", self.beta_kl)));
        }
        if !(self.noise_level > 0.0) {
            return Err(invalid(format!(
                "noise_level = {} must be > 0: policy ratios need stochastic transitions",
                self.noise_level
            )));
        }
        if self.group_size < 2 {
            return Err(invalid(format!("group_size = {} must be >= 2", self.group_size)));
        }
        if self.sampling_steps < 2 {
            return Err(invalid(format!("sampling_steps = {} must be >= 2", self.sampling_steps)));
        }
        if self.contexts_per_step == 0 || self.inner_epochs == 0 || self.pretrain_batch == 0 {
            return Err(invalid("contexts_per_step, inner_epochs and pretrain_batch must be >= 1".into()));
        }
        if self.eval_every == 0 || self.eval_samples_per_context == 0 {
            return Err(invalid("eval_every and eval_samples_per_context must be >= 1".into()));
        }
        if !(self.eps_std > 0.0 && self.eps_mean > 0.0) {
            return Err(invalid("eps_std and eps_mean must be > 0".into()));
        }
        if !(self.lr > 0.0 && self.pretrain_lr > 0.0) {
            return Err(invalid("learning rates must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(invalid(format!("accuracy_threshold = {} must lie in [0, 1]", self.accuracy_threshold)));
        }
        self.task_spec()?;
        self.architecture()?;
        Ok(self)
    }

    pub fn tcrm(&self) -> bool {
        self.tcrm_enabled.unwrap_or(self.estimator == Estimator::Vgpo)
    }

    pub fn uses_value_weights(&self) -> bool {
        self.value_weights
            .unwrap_or(self.estimator == Estimator::Vgpo && self.tcrm())
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let mut t = TaskSpec::evenly_spaced(
            self.task,
            self.task_state_dim,
            self.task_modes,
            self.task_radius,
            self.task_mode_variance,
            self.task_contexts,
            self.task_sharpness,
        )
        .map_err(|e| invalid(format!("task: {e}")))?;
        t.ring_radius = self.task_ring_radius;
        t.validate().map_err(|e| invalid(format!("task: {e}")))?;
        Ok(t)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.task_state_dim, self.task_contexts, self.hidden_dims.clone())
            .map_err(|e| invalid(format!("architecture: {e}")))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.noise_level, self.sampling_steps).map_err(|e| invalid(format!("schedule: {e}")))
    }

    pub fn advantage_config(&self) -> AdvantageConfig {
        AdvantageConfig {
            estimator: self.estimator,
            tcrm: self.tcrm(),
            value_weights: self.uses_value_weights(),
            gamma: self.gamma,
            k: self.k,
            eps_std: self.eps_std,
            eps_mean: self.eps_mean,
        }
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            group_size: self.group_size,
            shared_initial_noise: self.shared_initial_noise,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch: self.pretrain_batch,
            adam: AdamConfig::with_lr(self.pretrain_lr),
            seed: self.seed,
        }
    }

    /// KL coefficient actually applied.
    pub fn effective_beta(&self) -> f64 {
        if self.kl_enabled {
            self.beta_kl
        } else {
            0.0
        }
    }
}
