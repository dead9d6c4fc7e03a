//! Advantage estimators.
//!
//! Tables are `G × T`, row `i` is a trajectory of the group and column `j`
//! follows generation order (MDP time `t = T - j`). Statistics across the
//! group use the population standard deviation. Columns whose standard
//! deviation falls below `eps_std` take an explicit degenerate branch instead
//! of dividing by a vanishing number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rollout::RolloutGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Terminal reward, group-normalized and broadcast over time.
    FlowGrpo,
    /// Adaptive dual advantage over (possibly cumulative) values.
    #[serde(alias = "vgpo-adae")]
    Vgpo,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::FlowGrpo => "flow-grpo",
            Estimator::Vgpo => "vgpo",
        })
    }
}

pub const DEFAULT_EPS_STD: f64 = 1e-8;
pub const DEFAULT_EPS_MEAN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageTable {
    pub values: Vec<Vec<f64>>,
    pub estimator: Estimator,
    pub k: f64,
    pub eps_std: f64,
}

/// Mean and population standard deviation, computed on data shifted by the
/// first element so that a constant column gives exactly `(x, 0)`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let Some(&x0) = xs.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = xs.len() as f64;
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - x0 - shift) * (x - x0 - shift)).sum::<f64>() / n;
    (x0 + shift, var.sqrt())
}

/// Discounted values `Q_t = Σ_{k<t} γ^k R_{t-k}` for rewards given as
/// `R_T … R_1`, computed right to left with `Q_1 = R_1`, `Q_t = R_t + γ·Q_{t-1}`.
pub fn cumulative_values(instant_rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside [0, 1)")));
    }
    let mut q = vec![0.0; instant_rewards.len()];
    let mut acc = 0.0;
    for (j, r) in instant_rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        q[j] = acc;
    }
    Ok(q)
}

/// `ω_t = Q_t / mean_t(Q)`; all ones when the temporal mean is below `eps_mean`.
pub fn value_weights(q: &[f64], eps_mean: f64) -> Vec<f64> {
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    if !(mean >= eps_mean) {
        return vec![1.0; q.len()];
    }
    q.iter().map(|v| v / mean).collect()
}

fn check_group(rows: usize) -> Result<()> {
    if rows < 2 {
        return Err(Error::InvalidArgument(format!("group size {rows} must be >= 2")));
    }
    Ok(())
}

fn check_rect(table: &[Vec<f64>]) -> Result<usize> {
    check_group(table.len())?;
    let t = table[0].len();
    if table.iter().any(|r| r.len() != t) {
        return Err(Error::Shape("ragged value table".into()));
    }
    Ok(t)
}

fn column(table: &[Vec<f64>], j: usize) -> Vec<f64> {
    table.iter().map(|r| r[j]).collect()
}

/// Group-normalized terminal rewards broadcast to `steps` columns.
pub fn grpo_terminal_advantage(terminal_rewards: &[f64], steps: usize, eps_std: f64) -> Result<AdvantageTable> {
    check_group(terminal_rewards.len())?;
    let (mean, std) = mean_std(terminal_rewards);
    let values = terminal_rewards
        .iter()
        .map(|r| {
            let a = if std < eps_std { 0.0 } else { (r - mean) / std };
            vec![a; steps]
        })
        .collect();
    Ok(AdvantageTable {
        values,
        estimator: Estimator::FlowGrpo,
        k: 0.0,
        eps_std,
    })
}

/// Per-column `(Q - mean)/std`; degenerate columns are zero.
pub fn group_relative(q: &[Vec<f64>], eps_std: f64) -> Result<Vec<Vec<f64>>> {
    let steps = check_rect(q)?;
    let mut out = vec![vec![0.0; steps]; q.len()];
    for j in 0..steps {
        let col = column(q, j);
        let (mean, std) = mean_std(&col);
        if std < eps_std {
            continue;
        }
        for (row, v) in out.iter_mut().zip(&col) {
            row[j] = (v - mean) / std;
        }
    }
    Ok(out)
}

/// Adaptive dual advantage `ω·((1+α)·Q - mean)/std` with `α = k·std`.
/// A degenerate column takes its limit `ω·k·Q`.
pub fn adae(q: &[Vec<f64>], k: f64, omega: &[Vec<f64>], eps_std: f64) -> Result<AdvantageTable> {
    let steps = check_rect(q)?;
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("k = {k} must be >= 0")));
    }
    if omega.len() != q.len() || omega.iter().any(|r| r.len() != steps) {
        return Err(Error::Shape("weight table does not match value table".into()));
    }
    let mut values = vec![vec![0.0; steps]; q.len()];
    for j in 0..steps {
        let col = column(q, j);
        let (mean, std) = mean_std(&col);
        for (i, row) in values.iter_mut().enumerate() {
            let w = omega[i][j];
            row[j] = if std < eps_std {
                w * (k * col[i])
            } else {
                let alpha = k * std;
                w * (((1.0 + alpha) * col[i] - mean) / std)
            };
        }
    }
    Ok(AdvantageTable {
        values,
        estimator: Estimator::Vgpo,
        k,
        eps_std,
    })
}

/// Report for one value column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdReport {
    pub std: f64,
    /// `1/std`, the factor pure relative normalization multiplies gaps by.
    /// Infinite when the column is constant.
    pub amplification: f64,
    pub flagged: bool,
    pub guard_active: bool,
}

pub fn near_zero_std_diagnostic(column: &[f64], threshold: f64, eps_std: f64) -> StdReport {
    let (_, std) = mean_std(column);
    StdReport {
        std,
        amplification: if std == 0.0 { f64::INFINITY } else { 1.0 / std },
        flagged: std < threshold,
        guard_active: std < eps_std,
    }
}

/// Switches of the full estimation pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvantageConfig {
    pub estimator: Estimator,
    /// Use discounted instant-reward values; otherwise every column holds the
    /// terminal reward.
    pub tcrm: bool,
    pub value_weights: bool,
    pub gamma: f64,
    pub k: f64,
    pub eps_std: f64,
    pub eps_mean: f64,
}

/// Everything computed from one group's rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupEstimate {
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub advantages: AdvantageTable,
}

pub fn estimate(group: &RolloutGroup, cfg: &AdvantageConfig) -> Result<GroupEstimate> {
    let steps = group.trajectories.first().map_or(0, |t| t.steps());
    let terminal = group.terminal_rewards();
    let values: Vec<Vec<f64>> = if cfg.tcrm {
        group
            .trajectories
            .iter()
            .map(|t| cumulative_values(&t.instant_rewards, cfg.gamma))
            .collect::<Result<_>>()?
    } else {
        terminal.iter().map(|&r| vec![r; steps]).collect()
    };
    let weights: Vec<Vec<f64>> = if cfg.value_weights {
        values.iter().map(|q| value_weights(q, cfg.eps_mean)).collect()
    } else {
        vec![vec![1.0; steps]; values.len()]
    };
    let advantages = match cfg.estimator {
        Estimator::FlowGrpo => grpo_terminal_advantage(&terminal, steps, cfg.eps_std)?,
        Estimator::Vgpo => adae(&values, cfg.k, &weights, cfg.eps_std)?,
    };
    Ok(GroupEstimate {
        values,
        weights,
        advantages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn constant_column_has_exactly_zero_spread() {
        assert_eq!(mean_std(&[0.8; 8]), (0.8, 0.0));
        assert_eq!(mean_std(&[0.1; 3]), (0.1, 0.0));
    }

    #[test]
    fn cumulative_value_examples() {
        let r = [0.3, 0.9, 0.1, 0.6];
        assert_eq!(cumulative_values(&r, 0.0).unwrap(), r.to_vec());
        assert!(close(&cumulative_values(&[0.5, 0.2, 1.0], 0.5).unwrap(), &[0.85, 0.7, 1.0], 1e-15));
        let q = cumulative_values(&[1.0; 6], 0.9).unwrap();
        for (j, v) in q.iter().enumerate() {
            let t = (6 - j) as i32;
            assert!((v - (1.0 - 0.9f64.powi(t)) / 0.1).abs() < 1e-12);
        }
        assert!(cumulative_values(&r, 1.0).is_err());
    }

    #[test]
    fn value_weight_examples() {
        assert_eq!(value_weights(&[0.4; 5], 1e-6), vec![1.0; 5]);
        assert!(close(&value_weights(&[2.0, 1.0, 1.0], 1e-6), &[1.5, 0.75, 0.75], 1e-15));
        assert_eq!(value_weights(&[0.0; 4], 1e-6), vec![1.0; 4]);
    }

    #[test]
    fn grpo_examples() {
        let t = grpo_terminal_advantage(&[0.0, 1.0, 2.0], 4, 1e-8).unwrap();
        let want = [-1.2247, 0.0, 1.2247];
        for (row, w) in t.values.iter().zip(want) {
            assert!(row.iter().all(|a| (a - w).abs() < 1e-4));
        }
        let z = grpo_terminal_advantage(&[0.1; 8], 3, 1e-8).unwrap();
        assert!(z.values.iter().flatten().all(|&a| a == 0.0));
        assert!(grpo_terminal_advantage(&[0.1], 3, 1e-8).is_err());
    }

    #[test]
    fn group_relative_examples() {
        let q = vec![vec![0.0, 0.3], vec![1.0, 0.3]];
        let a = group_relative(&q, 1e-8).unwrap();
        assert_eq!(a, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let shifted: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v + 5.0).collect()).collect();
        assert_eq!(group_relative(&shifted, 1e-8).unwrap(), a);
    }

    #[test]
    fn adae_examples() {
        let q = vec![vec![0.8, 0.2], vec![0.8, 0.6], vec![0.8, 0.1]];
        let ones = vec![vec![1.0; 2]; 3];
        let t = adae(&q, 0.5, &ones, 1e-8).unwrap();
        for row in &t.values {
            assert!((row[0] - 0.4).abs() < 1e-15);
        }
        let gr = group_relative(&q, 1e-8).unwrap();
        for i in 0..3 {
            assert!((t.values[i][1] - (gr[i][1] + 0.5 * q[i][1])).abs() < 1e-12);
        }
        let k0 = adae(&q, 0.0, &ones, 1e-8).unwrap();
        assert_eq!(k0.values, gr);
        assert!(adae(&q, -1.0, &ones, 1e-8).is_err());
        assert!(adae(&q, 0.5, &ones[..2], 1e-8).is_err());
    }

    #[test]
    fn diagnostic_examples() {
        let col = [0.5 - 0.0008, 0.5 + 0.0008];
        let r = near_zero_std_diagnostic(&col, 0.01, 1e-8);
        assert!((r.amplification - 1250.0).abs() < 1e-6);
        assert!(r.flagged && !r.guard_active);
        let unit = near_zero_std_diagnostic(&[-1.0, 1.0], 0.01, 1e-8);
        assert_eq!(unit.amplification, 1.0);
        assert!(!unit.flagged);
        let c = near_zero_std_diagnostic(&[0.3; 4], 0.01, 1e-8);
        assert!(c.amplification.is_infinite() && c.flagged && c.guard_active);
    }

    #[test]
    fn estimator_names() {
        assert_eq!(serde_json::to_string(&Estimator::FlowGrpo).unwrap(), "\"flow-grpo\"");
        let e: Estimator = serde_json::from_str("\"vgpo-adae\"").unwrap();
        assert_eq!(e, Estimator::Vgpo);
    }
}
