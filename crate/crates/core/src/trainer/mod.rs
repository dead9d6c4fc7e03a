//! The policy-optimization loop: flow-matching pretraining, rollouts under
//! the old policy, advantage estimation and one ascent step on the clipped
//! surrogate per outer iteration.

mod config;
mod eval;
mod pretrain;
mod run;
mod surrogate;

pub use config::TrainConfig;
pub use eval::{evaluate, EvalSummary};
pub use pretrain::{fm_batch, pretrain, pretrain_from, PretrainConfig};
pub use run::{run, RunOutcome, RunSink};
pub use surrogate::{clipped_term, surrogate_loss_and_grad, PolicyTriplet, SurrogateOutput};

use crate::advantage::{estimate, mean_std, AdvantageTable, GroupEstimate};
use crate::diffnet::{adam_update, l2_norm, AdamState, ParamVector};
use crate::envsuite::{sample_context, RewardModel, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flowcore::NoiseSchedule;
use crate::rng;
use crate::rollout::{rollout_batch, RolloutGroup};

/// Training-side measurements of one outer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub train_reward_mean: f64,
    /// Mean over groups of the population std of terminal rewards.
    pub group_reward_std_mean: f64,
    pub kl_mean: f64,
    pub objective: f64,
    pub update_norm: f64,
    pub clip_fraction: f64,
}

/// Rollouts, their estimates, and the contexts they were drawn for.
pub struct StepBatch {
    pub groups: Vec<RolloutGroup>,
    pub estimates: Vec<GroupEstimate>,
}

impl StepBatch {
    pub fn advantages(&self) -> Vec<AdvantageTable> {
        self.estimates.iter().map(|e| e.advantages.clone()).collect()
    }
}

pub struct Trainer {
    cfg: TrainConfig,
    task: TaskSpec,
    schedule: NoiseSchedule,
    triplet: PolicyTriplet,
    adam: AdamState,
    exec: Exec,
}

pub fn group_reward_std_mean(groups: &[RolloutGroup]) -> f64 {
    groups.iter().map(|g| mean_std(&g.terminal_rewards()).1).sum::<f64>() / groups.len() as f64
}

impl Trainer {
    pub fn new(cfg: TrainConfig, pretrained: ParamVector, exec: Exec) -> Result<Self> {
        let cfg = cfg.resolve()?;
        let task = cfg.task_spec()?;
        if pretrained.arch() != &cfg.architecture()? {
            return Err(Error::Shape("pretrained parameters do not match the configured architecture".into()));
        }
        let schedule = cfg.schedule()?;
        let adam = AdamState::new(pretrained.len());
        Ok(Trainer {
            cfg,
            task,
            schedule,
            triplet: PolicyTriplet::from_pretrained(pretrained),
            adam,
            exec,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn triplet(&self) -> &PolicyTriplet {
        &self.triplet
    }

    pub fn params(&self) -> &ParamVector {
        &self.triplet.current
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// Copies the current parameters into the rollout snapshot.
    pub fn refresh_old(&mut self) {
        self.triplet.refresh_old();
    }

    /// Contexts for outer step `step`.
    pub fn contexts_for(&self, step: u64) -> Vec<usize> {
        let mut r = rng::rng_from(&[rng::stream::CONTEXTS, self.cfg.seed, step]);
        (0..self.cfg.contexts_per_step)
            .map(|_| sample_context(&self.task, &mut r))
            .collect()
    }

    /// Rollouts under the old policy plus values, weights and advantages.
    pub fn sample_batch(&self, step: u64, rm: &dyn RewardModel) -> Result<StepBatch> {
        let contexts = self.contexts_for(step);
        let groups = rollout_batch(
            &self.triplet.old,
            &contexts,
            &self.schedule,
            rm,
            self.cfg.seed,
            step,
            &self.cfg.rollout_options(),
            self.exec,
        )?;
        let acfg = self.cfg.advantage_config();
        let estimates = groups.iter().map(|g| estimate(g, &acfg)).collect::<Result<Vec<_>>>()?;
        Ok(StepBatch { groups, estimates })
    }

    pub fn train_step(&mut self, step: u64) -> Result<StepStats> {
        let task = self.task.clone();
        self.train_step_with(step, &task)
    }

    /// One outer iteration with an arbitrary reward model.
    pub fn train_step_with(&mut self, step: u64, rm: &dyn RewardModel) -> Result<StepStats> {
        self.triplet.refresh_old();
        let batch = self.sample_batch(step, rm)?;
        let advantages = batch.advantages();
        let before = self.triplet.current.values().to_vec();
        let adam_cfg = self.cfg.adam();
        let mut last = None;
        for _ in 0..self.cfg.inner_epochs {
            let out = surrogate_loss_and_grad(
                &self.triplet,
                &batch.groups,
                &advantages,
                &self.schedule,
                self.cfg.eps_clip,
                self.cfg.effective_beta(),
                self.exec,
            )?;
            if !out.objective.is_finite() || out.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    step: step as usize,
                    detail: format!("surrogate objective {}", out.objective),
                });
            }
            let descent: Vec<f64> = out.gradient.iter().map(|g| -g).collect();
            adam_update(self.triplet.current.values_mut(), &descent, &mut self.adam, &adam_cfg)?;
            last = Some(out);
        }
        let out = last.expect("inner_epochs >= 1");
        let delta: Vec<f64> = self
            .triplet
            .current
            .values()
            .iter()
            .zip(&before)
            .map(|(a, b)| a - b)
            .collect();
        let n_traj: usize = batch.groups.iter().map(|g| g.group_size()).sum();
        Ok(StepStats {
            step,
            train_reward_mean: batch.groups.iter().flat_map(|g| g.terminal_rewards()).sum::<f64>() / n_traj as f64,
            group_reward_std_mean: group_reward_std_mean(&batch.groups),
            kl_mean: out.kl_mean,
            objective: out.objective,
            update_norm: l2_norm(&delta),
            clip_fraction: out.clip_fraction,
        })
    }

    pub fn evaluate(&self) -> Result<EvalSummary> {
        evaluate(
            &self.triplet.current,
            &self.task,
            &self.schedule,
            self.cfg.eval_samples_per_context,
            self.cfg.accuracy_threshold,
            self.cfg.seed,
            self.exec,
        )
    }
}
