//! Rectified-flow mathematics: the straight interpolation path, the
//! flow-matching regression loss, deterministic Euler sampling, the
//! marginal-preserving SDE sampler used for exploration, and the Gaussian
//! transition densities the policy ratio is built from.
//!
//! Time runs from noise (`τ = 1`) to data (`τ = 0`) on the uniform grid
//! `τ_i = i/T`, `i = T … 1`, with `Δτ = 1/T`.

use serde::{Deserialize, Serialize};

use crate::diffnet::{NetInput, ParamVector};
use crate::error::{ensure_finite, Error, Result};
use crate::exec::{sum_in_order, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    a: f64,
    steps: usize,
    tau_clamp_lo: f64,
    tau_clamp_hi: f64,
}

impl NoiseSchedule {
    /// Schedule with the default clamp `[1/(2T), 1 - 1/(2T)]`.
    pub fn new(a: f64, steps: usize) -> Result<Self> {
        let half = 0.5 / steps.max(1) as f64;
        Self::with_clamp(a, steps, half, 1.0 - half)
    }

    pub fn with_clamp(a: f64, steps: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level a = {a} must be >= 0")));
        }
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("step count {steps} must be >= 2")));
        }
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidArgument(format!("clamp [{lo}, {hi}] must satisfy 0 < lo < hi < 1")));
        }
        Ok(NoiseSchedule {
            a,
            steps,
            tau_clamp_lo: lo,
            tau_clamp_hi: hi,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// `τ_i = i/T`.
    pub fn tau(&self, i: usize) -> f64 {
        i as f64 / self.steps as f64
    }

    pub fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(self.tau_clamp_lo, self.tau_clamp_hi)
    }
}

/// Isotropic Gaussian transition `N(mean, variance·I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// `x_τ = (1-τ)·x0 + τ·x1`.
pub fn interpolate(x0: &[f64], x1: &[f64], tau: f64) -> Result<Vec<f64>> {
    if x0.len() != x1.len() {
        return Err(Error::Shape(format!("interpolate: {} vs {}", x0.len(), x1.len())));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("time {tau} outside [0, 1]")));
    }
    Ok(x0.iter().zip(x1).map(|(a, b)| (1.0 - tau) * a + tau * b).collect())
}

/// One flow-matching regression sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FmSample {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub tau: f64,
    pub context: usize,
}

const FM_CHUNK: usize = 32;

/// Mean over the batch of `‖(x1 - x0) - v_θ(x_τ, τ)‖²` and its parameter gradient.
pub fn fm_loss_and_grad(params: &ParamVector, batch: &[FmSample]) -> Result<(f64, Vec<f64>)> {
    fm_loss_and_grad_with(params, batch, Exec::Sequential)
}

/// [`fm_loss_and_grad`] with chunks evaluated under `exec`; chunk results are
/// reduced in order so every strategy returns identical bits.
pub fn fm_loss_and_grad_with(
    params: &ParamVector,
    batch: &[FmSample],
    exec: Exec,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("flow-matching batch is empty".into()));
    }
    let n = batch.len() as f64;
    let chunks: Vec<&[FmSample]> = batch.chunks(FM_CHUNK).collect();
    let parts = exec.try_map(chunks.len(), |c| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for s in chunks[c] {
            let xt = interpolate(&s.x0, &s.x1, s.tau)?;
            let v = params.forward(NetInput::new(&xt, s.tau, s.context))?;
            let resid: Vec<f64> = s
                .x1
                .iter()
                .zip(&s.x0)
                .zip(&v)
                .map(|((b, a), vv)| (b - a) - vv)
                .collect();
            loss += resid.iter().map(|r| r * r).sum::<f64>();
            let upstream: Vec<f64> = resid.iter().map(|r| -2.0 * r / n).collect();
            params.grad_accumulate(NetInput::new(&xt, s.tau, s.context), &upstream, &mut grad)?;
        }
        Ok((loss, grad))
    })?;
    let loss = parts.iter().map(|(l, _)| l).sum::<f64>() / n;
    let grads: Vec<Vec<f64>> = parts.into_iter().map(|(_, g)| g).collect();
    Ok((loss, sum_in_order(&grads, params.len())))
}

/// `σ(τ) = a·√(τ'/(1-τ'))` with `τ'` clamped away from the endpoints.
pub fn sigma(tau: f64, schedule: &NoiseSchedule) -> f64 {
    if schedule.a == 0.0 {
        return 0.0;
    }
    let t = schedule.clamp(tau);
    schedule.a * (t / (1.0 - t)).sqrt()
}

/// The mean of one SDE transition together with how it depends on the
/// velocity: `mean = x·(1 - c·Δτ) + velocity_coeff·v`, with `c = σ²/(2τ')`.
#[derive(Clone, Debug)]
pub struct StepMean {
    pub velocity: Vec<f64>,
    pub dist: StepDistribution,
    /// `∂mean/∂v = -Δτ·(1 + c·(1-τ'))`, a scalar because the noise is isotropic.
    pub velocity_coeff: f64,
}

/// Mean and variance of the step from `τ` to `τ - Δτ`.
pub fn step_mean(
    params: &ParamVector,
    x: &[f64],
    tau: f64,
    context: usize,
    schedule: &NoiseSchedule,
) -> Result<StepMean> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("SDE step time {tau} outside (0, 1]")));
    }
    let v = params.forward(NetInput::new(x, tau, context))?;
    let dt = schedule.dt();
    let s = sigma(tau, schedule);
    let t = schedule.clamp(tau);
    let c = s * s / (2.0 * t);
    let mean: Vec<f64> = x
        .iter()
        .zip(&v)
        .map(|(&xi, &vi)| xi - (vi + c * (xi + (1.0 - t) * vi)) * dt)
        .collect();
    ensure_finite(&mean, "SDE step mean")?;
    Ok(StepMean {
        velocity: v,
        dist: StepDistribution {
            mean,
            variance: s * s * dt,
        },
        velocity_coeff: -dt * (1.0 + c * (1.0 - t)),
    })
}

/// One exploration step: `x_next = mean + σ·√Δτ·noise`. With `a = 0` this is
/// exactly the Euler step `x - Δτ·v`.
pub fn sde_step(
    params: &ParamVector,
    x: &[f64],
    tau: f64,
    context: usize,
    schedule: &NoiseSchedule,
    noise: &[f64],
) -> Result<(Vec<f64>, StepDistribution)> {
    if noise.len() != x.len() {
        return Err(Error::Shape(format!("noise has {} entries, state {}", noise.len(), x.len())));
    }
    let sm = step_mean(params, x, tau, context, schedule)?;
    let scale = sigma(tau, schedule) * schedule.dt().sqrt();
    let next: Vec<f64> = if scale == 0.0 {
        sm.dist.mean.clone()
    } else {
        sm.dist.mean.iter().zip(noise).map(|(m, n)| m + scale * n).collect()
    };
    ensure_finite(&next, "SDE step output")?;
    Ok((next, sm.dist))
}

/// Deterministic Euler step `x - Δτ·v(x, τ)`.
pub fn euler_step(params: &ParamVector, x: &[f64], tau: f64, context: usize, dt: f64) -> Result<Vec<f64>> {
    let v = params.forward(NetInput::new(x, tau, context))?;
    Ok(x.iter().zip(&v).map(|(xi, vi)| xi - vi * dt).collect())
}

/// Full ODE trajectory `x_T, …, x_0` from the initial noise `x_t`.
pub fn ode_trajectory(
    params: &ParamVector,
    x_start: &[f64],
    context: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(schedule.steps() + 1);
    states.push(x_start.to_vec());
    for i in (1..=schedule.steps()).rev() {
        let next = euler_step(params, states.last().unwrap(), schedule.tau(i), context, schedule.dt())?;
        states.push(next);
    }
    Ok(states)
}

/// Terminal sample of the ODE integrator.
pub fn ode_sample(
    params: &ParamVector,
    x_start: &[f64],
    context: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let mut x = x_start.to_vec();
    for i in (1..=schedule.steps()).rev() {
        x = euler_step(params, &x, schedule.tau(i), context, schedule.dt())?;
    }
    Ok(x)
}

/// Terminal sample of the SDE sampler driven by the given per-step noises.
pub fn sde_sample(
    params: &ParamVector,
    x_start: &[f64],
    context: usize,
    schedule: &NoiseSchedule,
    noises: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if noises.len() != schedule.steps() {
        return Err(Error::Shape(format!("{} noise vectors for {} steps", noises.len(), schedule.steps())));
    }
    let mut x = x_start.to_vec();
    for (j, i) in (1..=schedule.steps()).rev().enumerate() {
        x = sde_step(params, &x, schedule.tau(i), context, schedule, &noises[j])?.0;
    }
    Ok(x)
}

/// One-step projection to a virtual terminal sample: `x̂0 = s - τ·v(s, τ)`.
pub fn ode_project(params: &ParamVector, s: &[f64], tau: f64, context: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("projection time {tau} outside [0, 1]")));
    }
    if tau == 0.0 {
        ensure_finite(s, "projection state")?;
        return Ok(s.to_vec());
    }
    let v = params.forward(NetInput::new(s, tau, context))?;
    Ok(s.iter().zip(&v).map(|(si, vi)| si - tau * vi).collect())
}

/// Isotropic Gaussian log-density `-D/2·log(2π·var) - ‖x - mean‖²/(2·var)`.
pub fn transition_logpdf(x_next: &[f64], dist: &StepDistribution) -> Result<f64> {
    if !(dist.variance > 0.0) {
        return Err(Error::DegenerateVariance(dist.variance));
    }
    if x_next.len() != dist.mean.len() {
        return Err(Error::Shape(format!("logpdf: {} vs {}", x_next.len(), dist.mean.len())));
    }
    let d = x_next.len() as f64;
    let sq: f64 = x_next.iter().zip(&dist.mean).map(|(x, m)| (x - m) * (x - m)).sum();
    Ok(-0.5 * d * (2.0 * std::f64::consts::PI * dist.variance).ln() - sq / (2.0 * dist.variance))
}

/// KL divergence between two isotropic Gaussians of equal variance.
pub fn kl_step(dist: &StepDistribution, reference: &StepDistribution) -> Result<f64> {
    if (dist.variance - reference.variance).abs() > 1e-12 {
        return Err(Error::VarianceMismatch(dist.variance, reference.variance));
    }
    if !(dist.variance > 0.0) {
        return Err(Error::DegenerateVariance(dist.variance));
    }
    if dist.mean.len() != reference.mean.len() {
        return Err(Error::Shape(format!("kl: {} vs {}", dist.mean.len(), reference.mean.len())));
    }
    let sq: f64 = dist.mean.iter().zip(&reference.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / (2.0 * dist.variance))
}
