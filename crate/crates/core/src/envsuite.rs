//! Synthetic generative tasks: Gaussian-mixture data for pretraining, a set of
//! conditioning contexts, analytic rewards in `[0, 1]`, and a log-density
//! quality score that is independent of the optimized reward.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal_vec, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Each context designates one mixture component; reward peaks at its center.
    ModePreference,
    /// Reward favours `x[0] > 0`, independent of context.
    HalfPlane,
    /// Reward favours `‖x‖ = ring_radius`, independent of context.
    Ring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub center: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub state_dim: usize,
    pub modes: Vec<Mode>,
    /// Isotropic variance shared by all mixture components.
    pub mode_variance: f64,
    pub context_count: usize,
    pub reward_sharpness: f64,
    /// Target radius of the ring task.
    pub ring_radius: f64,
}

/// Scores a (virtual or actual) terminal sample under a conditioning context.
pub trait RewardModel: Sync {
    fn reward(&self, x: &[f64], context: usize) -> f64;
}

impl TaskSpec {
    /// Equal-weight modes evenly spaced on a circle (2D) or a segment `[-r, r]` (1D).
    pub fn evenly_spaced(
        kind: TaskKind,
        state_dim: usize,
        n_modes: usize,
        radius: f64,
        mode_variance: f64,
        context_count: usize,
        reward_sharpness: f64,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidArgument("task needs at least one mode".into()));
        }
        let w = 1.0 / n_modes as f64;
        let modes = (0..n_modes)
            .map(|k| {
                let center = match state_dim {
                    1 if n_modes == 1 => vec![radius],
                    1 => vec![-radius + 2.0 * radius * k as f64 / (n_modes - 1) as f64],
                    2 => {
                        let ang = std::f64::consts::TAU * k as f64 / n_modes as f64;
                        vec![radius * ang.cos(), radius * ang.sin()]
                    }
                    d => return Err(Error::InvalidArgument(format!("state dim {d} not supported (1 or 2)"))),
                };
                Ok(Mode { center, weight: w })
            })
            .collect::<Result<Vec<_>>>()?;
        let t = TaskSpec {
            kind,
            state_dim,
            modes,
            mode_variance,
            context_count,
            reward_sharpness,
            ring_radius: 2.0,
        };
        t.validate()?;
        Ok(t)
    }

    /// 8 modes on a circle of radius 3, variance 0.15, one context per mode.
    pub fn default_mode_preference() -> Self {
        Self::evenly_spaced(TaskKind::ModePreference, 2, 8, 3.0, 0.15, 8, 1.0).expect("valid default task")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=2).contains(&self.state_dim) {
            return bad(format!("state_dim {} must be 1 or 2", self.state_dim));
        }
        if self.modes.is_empty() {
            return bad("task needs at least one mode".into());
        }
        if self.modes.iter().any(|m| m.center.len() != self.state_dim || m.weight < 0.0) {
            return bad("mode centers must match state_dim and weights must be >= 0".into());
        }
        let total: f64 = self.modes.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {total}, expected 1"));
        }
        if !(self.mode_variance > 0.0) || !(self.reward_sharpness > 0.0) {
            return bad("mode_variance and reward_sharpness must be > 0".into());
        }
        if self.context_count == 0 {
            return bad("context_count must be >= 1".into());
        }
        if self.kind == TaskKind::ModePreference && self.context_count > self.modes.len() {
            return bad(format!(
                "mode-preference needs context_count ({}) <= number of modes ({})",
                self.context_count,
                self.modes.len()
            ));
        }
        if !self.ring_radius.is_finite() {
            return bad("ring_radius must be finite".into());
        }
        Ok(())
    }

    pub fn target_center(&self, context: usize) -> &[f64] {
        &self.modes[context].center
    }
}

/// Uniform draw over contexts.
pub fn sample_context(task: &TaskSpec, rng: &mut Rng) -> usize {
    if task.context_count == 1 {
        0
    } else {
        rng.random_range(0..task.context_count)
    }
}

/// Draw from the full mixture; pretraining data ignores the context.
pub fn sample_data(task: &TaskSpec, rng: &mut Rng) -> Vec<f64> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = task.modes.len() - 1;
    for (k, m) in task.modes.iter().enumerate() {
        acc += m.weight;
        if u < acc {
            pick = k;
            break;
        }
    }
    let sd = task.mode_variance.sqrt();
    let z = standard_normal_vec(rng, task.state_dim);
    task.modes[pick].center.iter().zip(z).map(|(c, n)| c + sd * n).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn reward(task: &TaskSpec, x: &[f64], context: usize) -> f64 {
    let s = task.reward_sharpness;
    match task.kind {
        TaskKind::ModePreference => (-s * sq_dist(x, task.target_center(context))).exp(),
        TaskKind::HalfPlane => logistic(s * x[0]),
        TaskKind::Ring => {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (-s * (r - task.ring_radius).powi(2)).exp()
        }
    }
}

impl RewardModel for TaskSpec {
    fn reward(&self, x: &[f64], context: usize) -> f64 {
        reward(self, x, context)
    }
}

/// Log-density of `x` under the task's full data mixture.
pub fn quality(task: &TaskSpec, x: &[f64]) -> f64 {
    let var = task.mode_variance;
    let d = task.state_dim as f64;
    let log_norm = -0.5 * d * (std::f64::consts::TAU * var).ln();
    let terms: Vec<f64> = task
        .modes
        .iter()
        .filter(|m| m.weight > 0.0)
        .map(|m| m.weight.ln() + log_norm - sq_dist(x, &m.center) / (2.0 * var))
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
