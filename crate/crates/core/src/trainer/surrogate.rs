use crate::advantage::AdvantageTable;
use crate::diffnet::{NetInput, ParamVector};
use crate::error::{Error, Result};
use crate::exec::{sum_in_order, Exec};
use crate::flowcore::{kl_step, step_mean, transition_logpdf, NoiseSchedule};
use crate::rollout::{RolloutGroup, Trajectory};

/// Current, old (rollout) and reference policies.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTriplet {
    pub current: ParamVector,
    pub old: ParamVector,
    pub reference: ParamVector,
}

impl PolicyTriplet {
    /// All three snapshots start at the pretrained parameters.
    pub fn from_pretrained(p: ParamVector) -> Self {
        PolicyTriplet {
            current: p.clone(),
            old: p.clone(),
            reference: p,
        }
    }

    pub fn refresh_old(&mut self) {
        self.old.values_mut().copy_from_slice(self.current.values());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateOutput {
    /// Clipped surrogate minus `β·KL`, averaged over trajectories and steps.
    pub objective: f64,
    /// Gradient of `objective` with respect to the current parameters.
    pub gradient: Vec<f64>,
    pub kl_mean: f64,
    pub clip_fraction: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

struct Partial {
    objective: f64,
    kl: f64,
    clipped: usize,
    ratio_min: f64,
    ratio_max: f64,
    grad: Vec<f64>,
}

#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn trajectory_terms(
    current: &ParamVector,
    reference: &ParamVector,
    traj: &Trajectory,
    adv: &[f64],
    schedule: &NoiseSchedule,
    eps_clip: f64,
    beta: f64,
    scale: f64,
) -> Result<Partial> {
    let steps = schedule.steps();
    if traj.steps() != steps || adv.len() != steps {
        return Err(Error::Shape("trajectory, schedule and advantage lengths differ".into()));
    }
    if traj.logp_old.len() != steps {
        return Err(Error::DegenerateVariance(0.0));
    }
    let mut out = Partial {
        objective: 0.0,
        kl: 0.0,
        clipped: 0,
        ratio_min: f64::INFINITY,
        ratio_max: f64::NEG_INFINITY,
        grad: vec![0.0; current.len()],
    };
    for j in 0..steps {
        let tau = schedule.tau(steps - j);
        let x = &traj.states[j];
        let x_next = &traj.states[j + 1];
        let cur = step_mean(current, x, tau, traj.context, schedule)?;
        let var = cur.dist.variance;
        if !(var > 0.0) {
            return Err(Error::DegenerateVariance(var));
        }
        let logp = transition_logpdf(x_next, &cur.dist)?;
        let ratio = (logp - traj.logp_old[j]).exp();
        let a = adv[j];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip) * a;
        // Ties resolve to the unclipped branch so that on-policy gradients are exact.
        let (value, coef) = if unclipped <= clipped {
            (unclipped, a * ratio)
        } else {
            out.clipped += 1;
            (clipped, 0.0)
        };
        let refm = step_mean(reference, x, tau, traj.context, schedule)?;
        let kl = kl_step(&cur.dist, &refm.dist)?;
        out.objective += value - beta * kl;
        out.kl += kl;
        out.ratio_min = out.ratio_min.min(ratio);
        out.ratio_max = out.ratio_max.max(ratio);

        // d(value)/dμ = coef·(x_next - μ)/var, d(β·kl)/dμ = β·(μ - μ_ref)/var,
        // and dμ/dv = velocity_coeff.
        let upstream: Vec<f64> = x_next
            .iter()
            .zip(&cur.dist.mean)
            .zip(&refm.dist.mean)
            .map(|((xn, mu), mr)| {
                scale * cur.velocity_coeff * (coef * (xn - mu) - beta * (mu - mr)) / var
            })
            .collect();
        current.grad_accumulate(NetInput::new(x, tau, traj.context), &upstream, &mut out.grad)?;
    }
    Ok(out)
}

/// Clipped policy-ratio surrogate with a KL penalty towards the reference
/// policy, and its exact gradient. Ratios use the stored old log-densities and
/// recompute only the current policy's transition mean at each stored state;
/// advantages and old log-densities are constants.
pub fn surrogate_loss_and_grad(
    triplet: &PolicyTriplet,
    groups: &[RolloutGroup],
    advantages: &[AdvantageTable],
    schedule: &NoiseSchedule,
    eps_clip: f64,
    beta_kl: f64,
    exec: Exec,
) -> Result<SurrogateOutput> {
    if groups.len() != advantages.len() {
        return Err(Error::Shape(format!("{} groups but {} advantage tables", groups.len(), advantages.len())));
    }
    let mut items: Vec<(&Trajectory, &[f64])> = Vec::new();
    for (g, a) in groups.iter().zip(advantages) {
        if g.trajectories.len() != a.values.len() {
            return Err(Error::Shape("advantage table rows differ from group size".into()));
        }
        for (t, row) in g.trajectories.iter().zip(&a.values) {
            items.push((t, row));
        }
    }
    if items.is_empty() {
        return Err(Error::InvalidArgument("no trajectories".into()));
    }
    let steps = schedule.steps();
    let count = (items.len() * steps) as f64;
    let scale = 1.0 / count;
    let parts = exec.try_map(items.len(), |n| {
        let (t, a) = items[n];
        trajectory_terms(&triplet.current, &triplet.reference, t, a, schedule, eps_clip, beta_kl, scale)
    })?;
    let grads: Vec<Vec<f64>> = parts.iter().map(|p| p.grad.clone()).collect();
    Ok(SurrogateOutput {
        objective: parts.iter().map(|p| p.objective).sum::<f64>() / count,
        gradient: sum_in_order(&grads, triplet.current.len()),
        kl_mean: parts.iter().map(|p| p.kl).sum::<f64>() / count,
        clip_fraction: parts.iter().map(|p| p.clipped).sum::<usize>() as f64 / count,
        ratio_min: parts.iter().map(|p| p.ratio_min).fold(f64::INFINITY, f64::min),
        ratio_max: parts.iter().map(|p| p.ratio_max).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Per-element clipped surrogate `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps_clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip) * advantage)
}
