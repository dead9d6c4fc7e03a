use std::time::Instant;

use super::{group_reward_std_mean, StepStats, TrainConfig, Trainer};
use crate::diffnet::ParamVector;
use crate::error::Result;
use crate::exec::Exec;
use crate::harness::metrics::MetricRecord;

/// Receives metrics as they are produced and periodic checkpoints.
pub trait RunSink {
    fn record(&mut self, record: &MetricRecord) -> Result<()>;

    fn checkpoint(&mut self, _step: usize, _params: &ParamVector) -> Result<()> {
        Ok(())
    }
}

impl RunSink for Vec<MetricRecord> {
    fn record(&mut self, record: &MetricRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub final_params: ParamVector,
    pub records: Vec<MetricRecord>,
}

fn window_mean(window: &[StepStats], f: impl Fn(&StepStats) -> f64) -> f64 {
    if window.is_empty() {
        0.0
    } else {
        window.iter().map(f).sum::<f64>() / window.len() as f64
    }
}

/// `S` outer steps starting from `pretrained`, with an evaluation record at
/// step 0, every `eval_every` steps and at the final step. Training fields of a
/// record average the steps since the previous record; the step-0 record takes
/// its reward spread from a probe rollout of the pretrained policy.
///
/// Records are handed to `sink` as soon as they exist, so a failing step still
/// leaves every earlier record flushed.
pub fn run(cfg: &TrainConfig, pretrained: ParamVector, exec: Exec, sink: &mut dyn RunSink) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), pretrained, exec)?;
    let cfg = trainer.config().clone();
    let wallclock = |t: &Instant| {
        if cfg.log_wallclock {
            t.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut records = Vec::new();

    let probe = trainer.sample_batch(0, &trainer.task().clone())?;
    let eval = trainer.evaluate()?;
    let first = MetricRecord::new(0, &eval, group_reward_std_mean(&probe.groups), 0.0, 0.0, wallclock(&started));
    sink.record(&first)?;
    records.push(first);

    let mut window: Vec<StepStats> = Vec::new();
    for step in 1..=cfg.train_steps {
        window.push(trainer.train_step(step as u64)?);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            sink.checkpoint(step, trainer.params())?;
        }
        if step % cfg.eval_every == 0 || step == cfg.train_steps {
            let eval = trainer.evaluate()?;
            let rec = MetricRecord::new(
                step,
                &eval,
                window_mean(&window, |s| s.group_reward_std_mean),
                window_mean(&window, |s| s.kl_mean),
                window_mean(&window, |s| s.update_norm),
                wallclock(&started),
            );
            sink.record(&rec)?;
            records.push(rec);
            window.clear();
        }
    }
    Ok(RunOutcome {
        final_params: trainer.params().clone(),
        records,
    })
}
