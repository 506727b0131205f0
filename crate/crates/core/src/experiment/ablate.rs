use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{run_train, write};
use super::{ExperimentConfig, ExperimentError};

/// A recipe component that an ablation removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    PretrainInit,
    Balanced,
    Masking,
    Mixup,
    Labelfix,
    Ensemble,
    WeightAvg,
}

impl Toggle {
    pub const ALL: [Toggle; 7] = [
        Self::PretrainInit,
        Self::Balanced,
        Self::Masking,
        Self::Mixup,
        Self::Labelfix,
        Self::Ensemble,
        Self::WeightAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PretrainInit => "pretrain-init",
            Self::Balanced => "balanced",
            Self::Masking => "masking",
            Self::Mixup => "mixup",
            Self::Labelfix => "labelfix",
            Self::Ensemble => "ensemble",
            Self::WeightAvg => "weight-avg",
        }
    }

    /// `cfg` with this component switched off.
    pub fn remove_from(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        let noop = |what: &str| log::warn!("ablation {what}: base config does not use it; variant equals the full recipe");
        match self {
            Self::PretrainInit => {
                if c.init_params.take().is_none() {
                    noop(self.name());
                }
            }
            Self::Balanced => c.augment.balanced = false,
            Self::Masking => {
                c.augment.freq_mask = 0;
                c.augment.time_mask = 0;
            }
            Self::Mixup => c.augment.mixup_rate = 0.0,
            Self::Labelfix => {
                if c.enhance.take().is_none() {
                    noop(self.name());
                }
            }
            Self::Ensemble => c.aggregate.ensemble = false,
            Self::WeightAvg => c.aggregate.weight_avg = false,
        }
        c
    }
}

impl FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown toggle {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `full` or `no-<toggle>`.
    pub variant: String,
    pub mean: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub sd: f64,
    /// (master seed, headline mAP) per run.
    pub runs: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// `variant,mean,sd,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,mean,sd,n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:?},{:?},{}", r.variant, r.mean, r.sd, r.runs.len());
        }
        out
    }

    /// `variant,seed,map`.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("variant,seed,map\n");
        for r in &self.rows {
            for (seed, map) in &r.runs {
                let _ = writeln!(out, "{},{seed},{map:?}", r.variant);
            }
        }
        out
    }
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains the full recipe and one variant per removed toggle, for every
/// master seed. Each run lands in `<output_dir>/ablation/<variant>/seed_<s>`;
/// the table is written to `<output_dir>/ablation.csv`.
pub fn run_ablation(
    base: &ExperimentConfig,
    toggles: &[Toggle],
    seeds: &[u64],
) -> Result<AblationTable, ExperimentError> {
    base.validate()?;
    if seeds.is_empty() {
        return Err(ExperimentError::Config {
            line: None,
            message: "ablation needs at least one seed".into(),
        });
    }
    for (i, t) in toggles.iter().enumerate() {
        if toggles[..i].contains(t) {
            return Err(ExperimentError::Config {
                line: None,
                message: format!("toggle {} listed twice", t.name()),
            });
        }
    }
    let variants = std::iter::once(("full".to_string(), base.clone())).chain(
        toggles
            .iter()
            .map(|t| (format!("no-{}", t.name()), t.remove_from(base))),
    );
    let mut rows = Vec::new();
    for (variant, cfg) in variants {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            c.output_dir = base
                .output_dir
                .join("ablation")
                .join(&variant)
                .join(format!("seed_{seed}"));
            let summary = run_train(&c)?;
            log::info!("{variant} seed {seed}: {:.4}", summary.headline());
            runs.push((seed, summary.headline()));
        }
        let maps: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let (mean, sd) = mean_sd(&maps);
        rows.push(AblationRow { variant, mean, sd, runs });
    }
    let table = AblationTable { rows };
    write(&base.output_dir.join("ablation.csv"), table.to_csv())?;
    write(&base.output_dir.join("ablation_runs.csv"), table.runs_csv())?;
    Ok(table)
}
