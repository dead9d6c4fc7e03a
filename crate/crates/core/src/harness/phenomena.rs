//! Reads finished metric streams and reports three phenomena: the shrinking
//! within-group reward spread of converging runs, how quickly dense and
//! sparse reward signals reach a reward threshold, and how much sample quality
//! each method gives up for its task-reward gain.

use serde::Serialize;

use super::metrics::MetricRecord;
use crate::error::{Error, Result};

/// Metrics of one finished run, labelled by preset name.
#[derive(Clone, Debug)]
pub struct RunSeries {
    pub name: String,
    pub records: Vec<MetricRecord>,
}

impl RunSeries {
    pub fn new(name: impl Into<String>, records: Vec<MetricRecord>) -> Self {
        RunSeries {
            name: name.into(),
            records,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhenomenaConfig {
    /// Fraction of a run's final reward that counts as "reached".
    pub threshold_frac: f64,
    /// Minimum gain of the best eval reward over step 0 for a run to count as converging.
    pub min_improvement: f64,
    pub method: String,
    pub baseline: String,
    pub dense: String,
    pub sparse: String,
}

impl Default for PhenomenaConfig {
    fn default() -> Self {
        PhenomenaConfig {
            threshold_frac: 0.8,
            min_improvement: 0.01,
            method: "vgpo".into(),
            baseline: "flow-grpo".into(),
            dense: "vgpo".into(),
            sparse: "adae-only".into(),
        }
    }
}

pub const NO_CONVERGENCE: &str = "no convergence, std trend not evaluated";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StdTrend {
    pub run: String,
    pub converged: bool,
    pub first_quartile_std: f64,
    pub final_quartile_std: f64,
    /// `None` when the run did not converge.
    pub decreasing: Option<bool>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSpeed {
    pub dense_run: String,
    pub sparse_run: String,
    pub dense_threshold: f64,
    pub sparse_threshold: f64,
    pub dense_steps: Option<usize>,
    pub sparse_steps: Option<usize>,
    /// `sparse_steps / dense_steps`; above 1 means the dense run got there sooner.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub run: String,
    pub pretrained_reward: f64,
    pub final_reward: f64,
    pub pretrained_quality: f64,
    pub final_quality: f64,
    pub quality_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchedQuality {
    pub method: String,
    pub baseline: String,
    pub matched_reward: f64,
    pub method_quality_drop: f64,
    pub baseline_quality_drop: f64,
    pub method_no_worse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhenomenaReport {
    pub std_trends: Vec<StdTrend>,
    pub convergence: Option<ConvergenceSpeed>,
    pub tradeoff: Vec<TradeoffRow>,
    pub matched: Option<MatchedQuality>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn std_trend(run: &RunSeries, min_improvement: f64) -> StdTrend {
    let r = &run.records;
    let q = (r.len() / 4).max(1);
    let first = mean(r.iter().take(q).map(|m| m.group_reward_std_mean));
    let last = mean(r.iter().rev().take(q).map(|m| m.group_reward_std_mean));
    let start = r.first().map_or(f64::NAN, |m| m.mean_reward);
    let best = r.iter().skip(1).map(|m| m.mean_reward).fold(f64::NEG_INFINITY, f64::max);
    let converged = r.len() >= 2 && best - start >= min_improvement;
    let (decreasing, note) = if converged {
        let d = last < first;
        (Some(d), if d { "std decreasing".to_string() } else { "std not decreasing".to_string() })
    } else {
        (None, NO_CONVERGENCE.to_string())
    };
    StdTrend {
        run: run.name.clone(),
        converged,
        first_quartile_std: first,
        final_quartile_std: last,
        decreasing,
        note,
    }
}

/// First recorded step whose eval reward reaches `threshold`.
pub fn steps_to_threshold(records: &[MetricRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|m| m.mean_reward >= threshold).map(|m| m.step)
}

pub fn convergence_speed(dense: &RunSeries, sparse: &RunSeries, frac: f64) -> ConvergenceSpeed {
    let thr = |s: &RunSeries| s.records.last().map_or(f64::NAN, |m| m.mean_reward * frac);
    let (dt, st) = (thr(dense), thr(sparse));
    let dense_steps = steps_to_threshold(&dense.records, dt);
    let sparse_steps = steps_to_threshold(&sparse.records, st);
    let speedup = match (dense_steps, sparse_steps) {
        (Some(d), Some(s)) if d > 0 => Some(s as f64 / d as f64),
        _ => None,
    };
    ConvergenceSpeed {
        dense_run: dense.name.clone(),
        sparse_run: sparse.name.clone(),
        dense_threshold: dt,
        sparse_threshold: st,
        dense_steps,
        sparse_steps,
        speedup,
    }
}

/// Quality at the first point where the eval reward reaches `level`, linearly
/// interpolated in reward between the two bracketing evaluations.
pub fn quality_at_reward(records: &[MetricRecord], level: f64) -> Option<f64> {
    let first = records.first()?;
    if first.mean_reward >= level {
        return Some(first.quality_mean);
    }
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (b.mean_reward >= level).then(|| {
            let span = b.mean_reward - a.mean_reward;
            let f = if span > 0.0 { (level - a.mean_reward) / span } else { 1.0 };
            a.quality_mean + f * (b.quality_mean - a.quality_mean)
        })
    })
}

fn tradeoff_row(run: &RunSeries) -> Option<TradeoffRow> {
    let (a, b) = (run.records.first()?, run.records.last()?);
    Some(TradeoffRow {
        run: run.name.clone(),
        pretrained_reward: a.mean_reward,
        final_reward: b.mean_reward,
        pretrained_quality: a.quality_mean,
        final_quality: b.quality_mean,
        quality_drop: a.quality_mean - b.quality_mean,
    })
}

/// Compares quality drops at the highest reward both runs attain.
pub fn matched_quality(method: &RunSeries, baseline: &RunSeries) -> Option<MatchedQuality> {
    let peak = |s: &RunSeries| s.records.iter().map(|m| m.mean_reward).fold(f64::NEG_INFINITY, f64::max);
    let level = peak(method).min(peak(baseline));
    let drop = |s: &RunSeries| Some(s.records.first()?.quality_mean - quality_at_reward(&s.records, level)?);
    let (m, b) = (drop(method)?, drop(baseline)?);
    Some(MatchedQuality {
        method: method.name.clone(),
        baseline: baseline.name.clone(),
        matched_reward: level,
        method_quality_drop: m,
        baseline_quality_drop: b,
        method_no_worse: m <= b,
    })
}

fn find<'a>(runs: &'a [RunSeries], name: &str) -> Result<&'a RunSeries> {
    runs.iter()
        .find(|r| r.name == name)
        .filter(|r| !r.records.is_empty())
        .ok_or_else(|| Error::MissingRun(name.to_string()))
}

/// The method and baseline runs are required; the dense/sparse comparison is
/// reported only when both of those runs are present.
pub fn reproduce_phenomena(runs: &[RunSeries], cfg: &PhenomenaConfig) -> Result<PhenomenaReport> {
    let method = find(runs, &cfg.method)?;
    let baseline = find(runs, &cfg.baseline)?;
    let convergence = match (find(runs, &cfg.dense), find(runs, &cfg.sparse)) {
        (Ok(d), Ok(s)) => Some(convergence_speed(d, s, cfg.threshold_frac)),
        _ => None,
    };
    Ok(PhenomenaReport {
        std_trends: runs.iter().map(|r| std_trend(r, cfg.min_improvement)).collect(),
        convergence,
        tradeoff: runs.iter().filter_map(tradeoff_row).collect(),
        matched: matched_quality(method, baseline),
    })
}

impl PhenomenaReport {
    /// Plain-text rendering for terminals and run directories.
    pub fn render(&self) -> String {
        let mut s = String::from("reward std trend\n");
        for t in &self.std_trends {
            s.push_str(&format!(
                "  {:<10} first-quartile {:.4}  final-quartile {:.4}  {}\n",
                t.run, t.first_quartile_std, t.final_quartile_std, t.note
            ));
        }
        if let Some(c) = &self.convergence {
            let show = |x: Option<usize>| x.map_or("never".to_string(), |v| v.to_string());
            s.push_str(&format!(
                "steps to threshold\n  {:<10} {} (threshold {:.4})\n  {:<10} {} (threshold {:.4})\n  speedup {}\n",
                c.dense_run,
                show(c.dense_steps),
                c.dense_threshold,
                c.sparse_run,
                show(c.sparse_steps),
                c.sparse_threshold,
                c.speedup.map_or("n/a".to_string(), |v| format!("{v:.2}")),
            ));
        }
        s.push_str("quality vs reward\n  run        reward0  reward  quality0  quality  drop\n");
        for r in &self.tradeoff {
            s.push_str(&format!(
                "  {:<10} {:>7.4} {:>7.4} {:>9.4} {:>8.4} {:>6.4}\n",
                r.run, r.pretrained_reward, r.final_reward, r.pretrained_quality, r.final_quality, r.quality_drop
            ));
        }
        if let Some(m) = &self.matched {
            s.push_str(&format!(
                "matched reward {:.4}: {} drop {:.4}, {} drop {:.4}\n",
                m.matched_reward, m.method, m.method_quality_drop, m.baseline, m.baseline_quality_drop
            ));
        }
        s
    }
}
