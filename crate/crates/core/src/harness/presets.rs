use serde::{Deserialize, Serialize};

use crate::advantage::Estimator;
use crate::trainer::TrainConfig;

/// The four cells of the component ablation. Presets only touch the
/// estimator, TCRM, `k` and value-weight switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentPreset {
    Vgpo,
    FlowGrpo,
    TcrmOnly,
    AdaeOnly,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 4] = [
        ExperimentPreset::Vgpo,
        ExperimentPreset::FlowGrpo,
        ExperimentPreset::TcrmOnly,
        ExperimentPreset::AdaeOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentPreset::Vgpo => "vgpo",
            ExperimentPreset::FlowGrpo => "flow-grpo",
            ExperimentPreset::TcrmOnly => "tcrm-only",
            ExperimentPreset::AdaeOnly => "adae-only",
        }
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        let (estimator, tcrm, k) = match self {
            ExperimentPreset::Vgpo => (Estimator::Vgpo, true, base.k),
            ExperimentPreset::FlowGrpo => (Estimator::FlowGrpo, false, 0.0),
            ExperimentPreset::TcrmOnly => (Estimator::Vgpo, true, 0.0),
            ExperimentPreset::AdaeOnly => (Estimator::Vgpo, false, base.k),
        };
        c.estimator = estimator;
        c.tcrm_enabled = Some(tcrm);
        c.value_weights = Some(tcrm);
        c.k = k;
        c
    }
}

impl std::fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}
