#![allow(dead_code)]

use flowrl::advantage::{estimate, AdvantageConfig, Estimator};
use flowrl::diffnet::{AdamConfig, Architecture, NetInput, ParamVector};
use flowrl::envsuite::{TaskKind, TaskSpec};
use flowrl::exec::Exec;
use flowrl::flowcore::{fm_loss_and_grad, ode_trajectory, FmSample, NoiseSchedule};
use flowrl::rng::{rng_from, standard_normal_vec};
use flowrl::rollout::{rollout_batch, rollout_trajectory, RolloutOptions};
use flowrl::trainer::{pretrain, surrogate_loss_and_grad, PolicyTriplet, PretrainConfig, TrainConfig};
use rand::Rng as _;

/// Central differences with step `h`, element-wise relative error against
/// `analytic` with denominator `max(1e-8, |fd|)`. Returns the worst error.
pub fn fd_max_rel_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], h: f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1e-8));
    }
    worst
}

/// 2D state, 2 contexts, hidden [6, 5]: 95 parameters.
pub fn tiny_arch() -> Architecture {
    Architecture::new(2, 2, vec![6, 5]).unwrap()
}

pub fn tiny_task() -> TaskSpec {
    TaskSpec::evenly_spaced(TaskKind::ModePreference, 2, 2, 1.5, 0.15, 2, 1.0).unwrap()
}

/// Small but complete training setup for fast loop-level tests.
pub fn small_config() -> TrainConfig {
    TrainConfig {
        hidden_dims: vec![16, 16],
        pretrain_steps: 200,
        pretrain_batch: 64,
        eval_samples_per_context: 16,
        train_steps: 10,
        eval_every: 5,
        ..TrainConfig::default()
    }
    .resolve()
    .unwrap()
}

pub fn pretrained_for(cfg: &TrainConfig) -> ParamVector {
    flowrl::harness::pretrain_for(cfg, Exec::default()).unwrap().0
}

/// Two equal 1D modes at ±1.5 with variance 0.1, single context.
pub fn two_mode_1d() -> TaskSpec {
    TaskSpec::evenly_spaced(TaskKind::ModePreference, 1, 2, 1.5, 0.1, 1, 1.0).unwrap()
}

pub fn pretrain_1d(task: &TaskSpec, steps: usize, seed: u64) -> (ParamVector, Vec<f64>) {
    let arch = Architecture::new(1, task.context_count, vec![64, 64]).unwrap();
    let cfg = PretrainConfig {
        steps,
        batch: 256,
        adam: AdamConfig::with_lr(2e-3),
        seed,
    };
    pretrain(arch, task, &cfg, Exec::default()).unwrap()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Empirical 1-Wasserstein distance between equal-size 1D samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub const FD_STEP: f64 = 1e-6;

pub fn random_params(arch: Architecture, seed: u64, scale: f64) -> ParamVector {
    let mut r = rng_from(&[99, seed]);
    let n = arch.param_count();
    let v = (0..n).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
    ParamVector::from_values(arch, v).unwrap()
}

pub fn arch_matrix() -> Vec<Architecture> {
    vec![
        Architecture::new(1, 1, vec![4]).unwrap(),
        Architecture::new(2, 3, vec![8]).unwrap(),
        tiny_arch(),
        Architecture::new(2, 2, vec![5, 4, 3]).unwrap(),
    ]
}

/// Surrogate gradient error for a VGPO batch rolled out under `old`, with the
/// current policy `old` plus uniform noise of half-width `perturb`.
/// Returns (worst relative error, clip fraction).
pub fn surrogate_case(beta: f64, perturb: f64, eps_clip: f64) -> (f64, f64) {
    let arch = tiny_arch();
    let task = tiny_task();
    let sched = NoiseSchedule::new(0.7, 4).unwrap();
    let old = ParamVector::init(arch.clone(), 5);
    let mut reference = old.clone();
    let mut current = old.clone();
    let mut r = rng_from(&[13]);
    for v in current.values_mut() {
        *v += perturb * (2.0 * r.random::<f64>() - 1.0);
    }
    for v in reference.values_mut() {
        *v += 0.05 * (2.0 * r.random::<f64>() - 1.0);
    }
    let opts = RolloutOptions {
        group_size: 4,
        shared_initial_noise: false,
    };
    let groups = rollout_batch(&old, &[0, 1], &sched, &task, 1, 1, &opts, Exec::Sequential).unwrap();
    let acfg = AdvantageConfig {
        estimator: Estimator::Vgpo,
        tcrm: true,
        value_weights: true,
        gamma: 0.9,
        k: 0.5,
        eps_std: 1e-8,
        eps_mean: 1e-6,
    };
    let adv: Vec<_> = groups.iter().map(|g| estimate(g, &acfg).unwrap().advantages).collect();
    let triplet = PolicyTriplet {
        current,
        old,
        reference,
    };
    let out = surrogate_loss_and_grad(&triplet, &groups, &adv, &sched, eps_clip, beta, Exec::Sequential).unwrap();
    let f = |v: &[f64]| {
        let mut t = triplet.clone();
        t.current.values_mut().copy_from_slice(v);
        surrogate_loss_and_grad(&t, &groups, &adv, &sched, eps_clip, beta, Exec::Sequential)
            .unwrap()
            .objective
    };
    let e = fd_max_rel_error(f, triplet.current.values(), &out.gradient, FD_STEP);
    (e, out.clip_fraction)
}


/// Worst parameter- and input-gradient errors of `⟨upstream, forward⟩` for a
/// random network of the given architecture.
pub fn net_grad_errors(arch: &Architecture, seed: u64) -> (f64, f64) {
    let p = random_params(arch.clone(), seed, 0.8);
    let mut r = rng_from(&[7, seed]);
    let x = standard_normal_vec(&mut r, arch.state_dim());
    let tau = r.random::<f64>();
    let ctx = arch.context_count() - 1;
    let up = standard_normal_vec(&mut r, arch.output_dim());
    let (pg, xg) = p.grad(NetInput::new(&x, tau, ctx), &up).unwrap();
    let dot = |out: Vec<f64>| out.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
    let f_param = |v: &[f64]| {
        let q = ParamVector::from_values(arch.clone(), v.to_vec()).unwrap();
        dot(q.forward(NetInput::new(&x, tau, ctx)).unwrap())
    };
    let f_x = |xv: &[f64]| dot(p.forward(NetInput::new(xv, tau, ctx)).unwrap());
    (
        fd_max_rel_error(f_param, p.values(), &pg, FD_STEP),
        fd_max_rel_error(f_x, &x, &xg, FD_STEP),
    )
}

pub fn fm_grad_error() -> f64 {
    let arch = tiny_arch();
    let p = random_params(arch.clone(), 3, 0.5);
    let mut r = rng_from(&[11]);
    let batch: Vec<FmSample> = (0..40)
        .map(|i| FmSample {
            x0: standard_normal_vec(&mut r, 2),
            x1: standard_normal_vec(&mut r, 2),
            tau: r.random::<f64>(),
            context: i % 2,
        })
        .collect();
    let (_, g) = fm_loss_and_grad(&p, &batch).unwrap();
    let f = |v: &[f64]| {
        let q = ParamVector::from_values(arch.clone(), v.to_vec()).unwrap();
        fm_loss_and_grad(&q, &batch).unwrap().0
    };
    fd_max_rel_error(f, p.values(), &g, FD_STEP)
}

/// Number of states, over `cases` random networks and schedules with `a = 0`,
/// where the SDE rollout and the Euler integrator differ in any bit.
pub fn euler_reduction_mismatches(cases: u64) -> usize {
    let task = tiny_task();
    let mut bad = 0;
    for seed in 0..cases {
        let p = ParamVector::init(tiny_arch(), seed);
        let sched = NoiseSchedule::new(0.0, 3 + (seed as usize % 8)).unwrap();
        let mut r = rng_from(&[21, seed]);
        let x_start = standard_normal_vec(&mut r, 2);
        let noises: Vec<Vec<f64>> = (0..sched.steps()).map(|_| standard_normal_vec(&mut r, 2)).collect();
        let ctx = (seed % 2) as usize;
        let ode = ode_trajectory(&p, &x_start, ctx, &sched).unwrap();
        let traj = rollout_trajectory(&p, ctx, x_start, noises, &sched, &task).unwrap();
        assert_eq!(traj.states.len(), ode.len());
        bad += traj
            .states
            .iter()
            .zip(&ode)
            .filter(|(a, b)| a.iter().zip(b.iter()).any(|(x, y)| x.to_bits() != y.to_bits()))
            .count();
    }
    bad
}

/// Rolls out 1000 trajectories over varied tasks, networks, noise levels and
/// step counts; returns (rollouts, last-step mismatches, out-of-range rewards).
pub fn terminal_reward_fuzz() -> (usize, usize, usize) {
    let tasks = [
        tiny_task(),
        TaskSpec::default_mode_preference(),
        TaskSpec::evenly_spaced(TaskKind::HalfPlane, 2, 2, 1.5, 0.2, 2, 2.0).unwrap(),
        TaskSpec::evenly_spaced(TaskKind::Ring, 2, 2, 1.5, 0.2, 2, 1.0).unwrap(),
    ];
    let (mut count, mut mismatched, mut out_of_range) = (0, 0, 0);
    for seed in 0..25u64 {
        let task = &tasks[seed as usize % tasks.len()];
        let arch = Architecture::new(2, task.context_count, vec![8, 8]).unwrap();
        let p = ParamVector::init(arch, seed);
        let a = [0.1, 0.3, 0.7, 1.0, 0.0][seed as usize % 5];
        let sched = NoiseSchedule::new(a, 2 + seed as usize % 12).unwrap();
        let opts = RolloutOptions {
            group_size: 8,
            shared_initial_noise: seed % 3 == 0,
        };
        let contexts: Vec<usize> = (0..5).map(|c| c % task.context_count).collect();
        let groups = rollout_batch(&p, &contexts, &sched, task, seed, 7, &opts, Exec::default()).unwrap();
        for t in groups.iter().flat_map(|g| &g.trajectories) {
            count += 1;
            if t.instant_rewards.last().unwrap().to_bits() != t.terminal_reward.to_bits()
                || t.terminal_reward != flowrl::envsuite::reward(task, t.terminal_state(), t.context)
            {
                mismatched += 1;
            }
            out_of_range += t.instant_rewards.iter().filter(|r| !(0.0..=1.0).contains(*r)).count();
        }
    }
    (count, mismatched, out_of_range)
}
