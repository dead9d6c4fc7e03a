//! Denoising-MDP executor. A group is `G` SDE trajectories sampled from the
//! frozen old policy under one context; every step also records an instant
//! reward obtained by projecting the new state to a virtual terminal sample
//! with a single deterministic step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffnet::ParamVector;
use crate::envsuite::RewardModel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flowcore::{ode_project, sde_step, transition_logpdf, NoiseSchedule, StepDistribution};
use crate::rng::{self, standard_normal_vec};

/// One rollout, stored in generation order: index `j` is the step from
/// `τ = (T-j)/T` to `τ = (T-j-1)/T`, i.e. MDP time `t = T - j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub context: usize,
    /// `s_T … s_0`, length `T + 1`.
    pub states: Vec<Vec<f64>>,
    /// Standard-normal draws injected at each step, length `T`.
    pub noises: Vec<Vec<f64>>,
    pub step_dists: Vec<StepDistribution>,
    /// Log-density of each transition under the generating policy. Empty when
    /// the schedule is deterministic (`a = 0`).
    pub logp_old: Vec<f64>,
    /// `R_T … R_1`.
    pub instant_rewards: Vec<f64>,
    pub terminal_reward: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.noises.len()
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has states")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutGroup {
    pub context: usize,
    pub trajectories: Vec<Trajectory>,
}

impl RolloutGroup {
    pub fn group_size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn terminal_rewards(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.terminal_reward).collect()
    }

    /// `G × T` matrix of instant rewards.
    pub fn instant_rewards(&self) -> Vec<Vec<f64>> {
        self.trajectories.iter().map(|t| t.instant_rewards.clone()).collect()
    }
}

/// Identifies the random streams of one group inside a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupSeed {
    pub run_seed: u64,
    pub step: u64,
    pub slot: u64,
}

impl GroupSeed {
    fn trajectory_rng(&self, i: usize) -> rng::Rng {
        rng::rng_from(&[rng::stream::TRAJECTORY, self.run_seed, self.step, self.slot, i as u64])
    }

    fn shared_noise(&self, dim: usize) -> Vec<f64> {
        let mut r = rng::rng_from(&[rng::stream::GROUP_NOISE, self.run_seed, self.step, self.slot]);
        standard_normal_vec(&mut r, dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutOptions {
    pub group_size: usize,
    /// Start every trajectory of a group from the same `x_T`.
    pub shared_initial_noise: bool,
}

/// `RM(ode_project(θ_old, s_next, τ_next), c)`.
pub fn instant_reward(
    params_old: &ParamVector,
    s_next: &[f64],
    tau_next: f64,
    rm: &dyn RewardModel,
    context: usize,
) -> Result<f64> {
    let x0_hat = ode_project(params_old, s_next, tau_next, context)?;
    Ok(rm.reward(&x0_hat, context))
}

/// Samples one trajectory from the given initial state and per-step noises.
pub fn rollout_trajectory(
    params_old: &ParamVector,
    context: usize,
    x_start: Vec<f64>,
    noises: Vec<Vec<f64>>,
    schedule: &NoiseSchedule,
    rm: &dyn RewardModel,
) -> Result<Trajectory> {
    let steps = schedule.steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut step_dists = Vec::with_capacity(steps);
    let mut logp_old = Vec::with_capacity(steps);
    let mut instant = Vec::with_capacity(steps);
    states.push(x_start);
    for (j, noise) in noises.iter().enumerate() {
        let i = steps - j;
        let (next, dist) = sde_step(params_old, states.last().unwrap(), schedule.tau(i), context, schedule, noise)
            .map_err(|e| Error::NonFinite(format!("trajectory aborted at step t={i}, context {context}: {e}")))?;
        if dist.variance > 0.0 {
            logp_old.push(transition_logpdf(&next, &dist)?);
        }
        instant.push(instant_reward(params_old, &next, schedule.tau(i - 1), rm, context)?);
        step_dists.push(dist);
        states.push(next);
    }
    let terminal_reward = rm.reward(states.last().unwrap(), context);
    Ok(Trajectory {
        context,
        states,
        noises,
        step_dists,
        logp_old,
        instant_rewards: instant,
        terminal_reward,
    })
}

fn draw_trajectory(
    params_old: &ParamVector,
    context: usize,
    schedule: &NoiseSchedule,
    rm: &dyn RewardModel,
    seed: &GroupSeed,
    opts: &RolloutOptions,
    i: usize,
) -> Result<Trajectory> {
    let dim = params_old.arch().state_dim();
    let mut r = seed.trajectory_rng(i);
    let own_start = standard_normal_vec(&mut r, dim);
    let x_start = if opts.shared_initial_noise {
        seed.shared_noise(dim)
    } else {
        own_start
    };
    let noises = (0..schedule.steps()).map(|_| standard_normal_vec(&mut r, dim)).collect();
    rollout_trajectory(params_old, context, x_start, noises, schedule, rm)
}

/// Samples `G` trajectories for one context.
pub fn rollout_group(
    params_old: &ParamVector,
    context: usize,
    schedule: &NoiseSchedule,
    rm: &dyn RewardModel,
    seed: GroupSeed,
    opts: &RolloutOptions,
    exec: Exec,
) -> Result<RolloutGroup> {
    if opts.group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size {} must be >= 2", opts.group_size)));
    }
    let trajectories = exec.try_map(opts.group_size, |i| {
        draw_trajectory(params_old, context, schedule, rm, &seed, opts, i)
    })?;
    Ok(RolloutGroup { context, trajectories })
}

/// Samples one group per context, with slot `k` seeded by `(run_seed, step, k)`.
/// All `B·G` trajectories are scheduled as independent work items.
#[allow(clippy::too_many_arguments)]
pub fn rollout_batch(
    params_old: &ParamVector,
    contexts: &[usize],
    schedule: &NoiseSchedule,
    rm: &dyn RewardModel,
    run_seed: u64,
    step: u64,
    opts: &RolloutOptions,
    exec: Exec,
) -> Result<Vec<RolloutGroup>> {
    if opts.group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size {} must be >= 2", opts.group_size)));
    }
    let g = opts.group_size;
    let mut flat = exec.try_map(contexts.len() * g, |n| {
        let slot = n / g;
        let seed = GroupSeed { run_seed, step, slot: slot as u64 };
        draw_trajectory(params_old, contexts[slot], schedule, rm, &seed, opts, n % g)
    })?;
    let mut groups = Vec::with_capacity(contexts.len());
    for &context in contexts.iter().rev() {
        let trajectories = flat.split_off(flat.len() - g);
        groups.push(RolloutGroup { context, trajectories });
    }
    groups.reverse();
    Ok(groups)
}

/// One line of the trajectory dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub group: usize,
    pub index: usize,
    pub context: usize,
    pub states: Vec<Vec<f64>>,
    pub instant_rewards: Vec<f64>,
    pub terminal_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(step: u64, group: usize, index: usize, t: &Trajectory) -> Self {
        TrajectoryRecord {
            step,
            group,
            index,
            context: t.context,
            states: t.states.clone(),
            instant_rewards: t.instant_rewards.clone(),
            terminal_reward: t.terminal_reward,
            cumulative_values: None,
            advantages: None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<trajectory dump>", e))?;
    }
    Ok(())
}
