//! Metrics stream (JSON lines) and plot-ready curves (CSV).

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::EvalSummary;

pub const SCHEMA_VERSION: u32 = 1;

/// One evaluation point of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub schema_version: u32,
    pub step: usize,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub quality_mean: f64,
    pub group_reward_std_mean: f64,
    pub kl_mean: f64,
    pub update_norm: f64,
    pub wallclock_ms: f64,
}

impl MetricRecord {
    pub fn new(
        step: usize,
        eval: &EvalSummary,
        group_reward_std_mean: f64,
        kl_mean: f64,
        update_norm: f64,
        wallclock_ms: f64,
    ) -> Self {
        MetricRecord {
            schema_version: SCHEMA_VERSION,
            step,
            mean_reward: eval.mean_reward,
            accuracy: eval.accuracy,
            quality_mean: eval.quality_mean,
            group_reward_std_mean,
            kl_mean,
            update_norm,
            wallclock_ms,
        }
    }
}

pub fn write_record<W: Write>(w: &mut W, r: &MetricRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, r)?;
    w.write_all(b"\n").map_err(|e| Error::io("<metrics>", e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MetricRecord = serde_json::from_str(&line)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: metrics schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                r.schema_version
            )));
        }
        out.push(r);
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "step,mean_reward,accuracy,quality_mean,group_reward_std_mean,kl_mean,update_norm";

/// One CSV row per evaluation step.
pub fn curves_csv(records: &[MetricRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.mean_reward, r.accuracy, r.quality_mean, r.group_reward_std_mean, r.kl_mean, r.update_norm
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize) -> MetricRecord {
        MetricRecord {
            schema_version: SCHEMA_VERSION,
            step,
            mean_reward: 0.25,
            accuracy: 0.125,
            quality_mean: -2.5,
            group_reward_std_mean: 0.1,
            kl_mean: 0.0,
            update_norm: 0.01,
            wallclock_ms: 0.0,
        }
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let csv = curves_csv(&[rec(0), rec(25), rec(50)]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[2].starts_with("25,0.25,0.125,-2.5,"));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut f = std::fs::File::create(&p).unwrap();
        write_record(&mut f, &rec(0)).unwrap();
        write_record(&mut f, &rec(25)).unwrap();
        drop(f);
        assert_eq!(read_metrics(&p).unwrap(), vec![rec(0), rec(25)]);
    }
}
