use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::corpus::SynthSpec;
use crate::labelfix::{RepairMode, ThresholdPolicy};
use crate::model::{AdamConfig, Architecture, LRSchedule, ModelConfig, TrainConfig};
use crate::sampler::AugmentConfig;
use crate::{rng, FeatureShape};

/// One experiment, read from a TOML file. Relative paths are resolved
/// against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Synthesis, sampling and initialization each get a named
    /// stream derived from it.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhance: Option<EnhanceSection>,
    #[serde(default)]
    pub aggregate: AggregateSection,
    /// Externally produced parameters to start from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_params: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus directory; exclusive with `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    /// Replacement label file for the training corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Defaults to `synth` with a fresh sample seed and a quarter of the size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontology: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub time_strides: [usize; 2],
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            architecture: m.architecture,
            time_strides: m.time_strides,
            hidden_dim: m.hidden_dim,
            embed_dim: m.embed_dim,
            num_heads: m.num_heads,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, num_classes: usize, feature_shape: FeatureShape) -> ModelConfig {
        ModelConfig {
            architecture: self.architecture,
            num_classes,
            feature_shape,
            time_strides: self.time_strides,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            num_heads: self.num_heads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LRSchedule,
    pub adam: AdamConfig,
    pub report_last_k: usize,
    /// Distinguishes runs that share a master seed (and so a corpus) but
    /// should train independently, e.g. members of a seed committee.
    pub replicate: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            schedule: t.schedule,
            adam: t.adam,
            report_last_k: t.report_last_k,
            replicate: 0,
        }
    }
}

/// Label enhancement applied to the training labels before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceSection {
    pub policy: ThresholdPolicy,
    pub mode: RepairMode,
    /// Skip classes without a threshold instead of failing.
    #[serde(default)]
    pub permissive: bool,
    /// Completed run whose weight-averaged model scores the training set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_run: Option<PathBuf>,
    /// Score matrix (CSV, samples by classes) used instead of a teacher run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateSection {
    /// First epoch of the averaging window; defaults to the first epoch at a
    /// quarter of the base rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_avg_start: Option<usize>,
    pub weight_avg: bool,
    pub ensemble: bool,
}

impl Default for AggregateSection {
    fn default() -> Self {
        Self {
            weight_avg_start: None,
            weight_avg: true,
            ensemble: true,
        }
    }
}

/// 1-based line of the first occurrence of `key` as a TOML key or table
/// header.
pub(crate) fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        let header = l.trim_start_matches('[').trim_end_matches(']').trim();
        if l.starts_with('[') {
            return header == key || header.ends_with(&format!(".{key}"));
        }
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl ExperimentConfig {
    /// Parses and validates. `base` resolves relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            ExperimentError::Config {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.resolve_paths(base);
        cfg.validate_with(Some(text))?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ExperimentError::Config { line, message } => ExperimentError::Config {
                line,
                message: format!("{}: {message}", path.display()),
            },
            e => e,
        })
    }

    /// A config training on a synthetic corpus with every other setting at
    /// its default.
    pub fn synthetic(spec: SynthSpec, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            output_dir: output_dir.into(),
            data: DataConfig {
                synth: Some(spec),
                ..DataConfig::default()
            },
            model: ModelSection::default(),
            augment: AugmentConfig::default(),
            train: TrainSection::default(),
            enhance: None,
            aggregate: AggregateSection::default(),
            init_params: None,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let d = &mut self.data;
        for p in [&mut d.train, &mut d.train_labels, &mut d.eval, &mut d.eval_labels, &mut d.ontology]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(e) = &mut self.enhance {
            for p in [&mut e.teacher_run, &mut e.teacher_scores].into_iter().flatten() {
                fix(p);
            }
        }
        if let Some(p) = &mut self.init_params {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.validate_with(None)
    }

    fn validate_with(&self, text: Option<&str>) -> Result<(), ExperimentError> {
        let err = |key: &str, message: String| ExperimentError::Config {
            line: text.and_then(|t| line_of(t, key)),
            message,
        };
        let d = &self.data;
        match (&d.train, &d.synth) {
            (Some(_), Some(_)) => return Err(err("synth", "data.train and data.synth are exclusive".into())),
            (None, None) => return Err(err("data", "one of data.train or data.synth is required".into())),
            _ => {}
        }
        if d.train.is_some() && d.eval.is_none() {
            return Err(err("train", "data.eval is required with data.train".into()));
        }
        if d.eval.is_some() && d.eval_synth.is_some() {
            return Err(err("eval_synth", "data.eval and data.eval_synth are exclusive".into()));
        }
        if d.synth.is_none() && d.eval_synth.is_some() {
            return Err(err("eval_synth", "data.eval_synth needs data.synth".into()));
        }
        for (key, spec) in [("synth", &d.synth), ("eval_synth", &d.eval_synth)] {
            if let Some(s) = spec {
                s.validate().map_err(|e| err(key, e.to_string()))?;
            }
        }
        if let (Some(a), Some(b)) = (&d.synth, &d.eval_synth) {
            if a.num_classes != b.num_classes || a.feature_shape != b.feature_shape {
                return Err(err("eval_synth", "eval_synth must match synth classes and feature shape".into()));
            }
        }
        for (key, path) in [
            ("train", &d.train),
            ("train_labels", &d.train_labels),
            ("eval", &d.eval),
            ("eval_labels", &d.eval_labels),
            ("ontology", &d.ontology),
            ("init_params", &self.init_params),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(err(key, format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        if let Some(e) = &self.enhance {
            if d.ontology.is_none() {
                return Err(err("enhance", "label enhancement requires data.ontology".into()));
            }
            match (&e.teacher_run, &e.teacher_scores) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(err(
                        "enhance",
                        "enhance needs exactly one of teacher_run or teacher_scores".into(),
                    ))
                }
                (Some(p), None) | (None, Some(p)) => {
                    if !p.exists() {
                        return Err(err("enhance", format!("teacher {} does not exist", p.display())));
                    }
                }
            }
        }
        let t = self.train_config();
        t.validate().map_err(|e| err("train", e.to_string()))?;
        if let Some(s) = &d.synth {
            self.augment
                .validate(s.feature_shape)
                .map_err(|e| err("augment", e.to_string()))?;
            self.model
                .model_config(s.num_classes, s.feature_shape)
                .validate()
                .map_err(|e| err("model", e.to_string()))?;
        }
        if let Some(s) = self.aggregate.weight_avg_start {
            if s == 0 || s > self.train.epochs {
                return Err(err(
                    "weight_avg_start",
                    format!("weight_avg_start {s} outside 1..={}", self.train.epochs),
                ));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(err("output_dir", "output_dir is empty".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            schedule: t.schedule.clone(),
            adam: t.adam.clone(),
            seed: rng::derive_seed(self.seed, "train", t.replicate),
            report_last_k: t.report_last_k,
        }
    }

    /// Synthetic specs with seeds fanned out from the master seed. Training
    /// and evaluation corpora share class patterns.
    pub fn synth_specs(&self) -> Option<(SynthSpec, SynthSpec)> {
        let base = self.data.synth.as_ref()?;
        let pattern_seed = rng::derive_seed(self.seed, "synth.pattern", base.pattern_seed);
        let train = SynthSpec {
            seed: rng::derive_seed(self.seed, "synth.train", base.seed),
            pattern_seed,
            ..base.clone()
        };
        let eval = match &self.data.eval_synth {
            Some(e) => SynthSpec {
                seed: rng::derive_seed(self.seed, "synth.eval", e.seed),
                pattern_seed,
                ..e.clone()
            },
            None => SynthSpec {
                seed: rng::derive_seed(self.seed, "synth.eval", base.seed),
                pattern_seed,
                num_samples: (base.num_samples / 4).max(base.num_classes),
                ..base.clone()
            },
        };
        Some((train, eval))
    }

    /// First epoch of the weight-averaging and checkpoint-ensemble window.
    /// Without an explicit start or a quarter-rate epoch inside the run, the
    /// second half of the run is used.
    pub fn averaging_start(&self) -> usize {
        let epochs = self.train.epochs;
        self.aggregate
            .weight_avg_start
            .or_else(|| self.train.schedule.quarter_rate_epoch(epochs))
            .unwrap_or(epochs / 2 + 1)
            .min(epochs)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
