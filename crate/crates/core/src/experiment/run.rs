use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{enhance, ExperimentConfig, ExperimentError};
use crate::aggregate::{average_weights, ensemble_mean, Committee, Member};
use crate::corpus::{generate_synthetic, read_corpus, read_labels, write_labels, MultiLabelCorpus};
use crate::metrics::{evaluate, last_k_mean_map, EvalReport};
use crate::model::{load_external_init, predict, train, Checkpoint, Model, ParameterVector, TrainLogRow};
use crate::ontology::Ontology;
use crate::rng;
use crate::sampler::{make_weights, simulate_coverage, CoverageTrace};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Corpora and ontology referenced by a config.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: MultiLabelCorpus,
    pub eval: MultiLabelCorpus,
    pub ontology: Option<Ontology>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data, ExperimentError> {
    let d = &cfg.data;
    let (mut train, mut eval) = match cfg.synth_specs() {
        Some((t, e)) => (generate_synthetic(&t)?, generate_synthetic(&e)?),
        None => {
            let t = d.train.as_deref().expect("validated");
            let e = d.eval.as_deref().expect("validated");
            (read_corpus(t)?, read_corpus(e)?)
        }
    };
    if train.class_table().names != eval.class_table().names
        || train.feature_shape() != eval.feature_shape()
    {
        return Err(ExperimentError::Run(
            "training and evaluation corpora differ in classes or feature shape".into(),
        ));
    }
    if let Some(p) = &d.train_labels {
        train = train.with_labels(&read_labels(p, &train.class_table().names)?)?;
    }
    if let Some(p) = &d.eval_labels {
        eval = eval.with_labels(&read_labels(p, &eval.class_table().names)?)?;
    }
    let ontology = match &d.ontology {
        Some(p) => {
            let o = Ontology::read(p, &train.class_table().names)?;
            crate::ontology::validate(&o)?;
            Some(o)
        }
        None => None,
    };
    Ok(Data { train, eval, ontology })
}

/// Removes the lockfile when dropped.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(ExperimentError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(ExperimentError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub config_sha256: String,
    pub epochs: usize,
    pub num_params: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub report_last_k: usize,
    /// Mean eval mAP over the last `report_last_k` epochs.
    pub last_k_mean_map: f64,
    pub final_map: f64,
    pub averaging_start: usize,
    pub weight_avg_map: Option<f64>,
    /// Mean of the checkpoint predictions over the averaging window.
    pub ensemble_map: Option<f64>,
}

impl RunSummary {
    /// The single number a run contributes to a comparison: the ensemble
    /// when enabled, else the weight-averaged model, else the last-k mean.
    pub fn headline(&self) -> f64 {
        self.ensemble_map
            .or(self.weight_avg_map)
            .unwrap_or(self.last_k_mean_map)
    }
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}

fn mkdir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(|e| ExperimentError::io(path, e))
}

fn log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from("epoch,iter,lr,loss,eval_map\n");
    for r in rows {
        let map = r.eval_map.map(|m| format!("{m:?}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:?},{:?},{map}", r.epoch, r.iteration, r.lr, r.loss);
    }
    out
}

/// Trains one configuration into its output directory.
///
/// Layout: `config.toml` and `config.sha256`, `train_log.csv`,
/// `checkpoints/epoch_NNN.ckpt`, `eval/epoch_NNN.json`, `weight_avg.ckpt`,
/// `eval/weight_avg.json`, `eval/ensemble.json` and `summary.json`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    mkdir(&dir)?;
    let _lock = RunLock::acquire(&dir)?;
    for sub in ["checkpoints", "eval"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| ExperimentError::io(&p, e))?;
        }
        mkdir(&p)?;
    }
    let snapshot = cfg.to_toml();
    let sha = sha256_hex(snapshot.as_bytes());
    write(&dir.join("config.toml"), &snapshot)?;
    write(&dir.join("config.sha256"), format!("{sha}\n"))?;

    let mut data = load_data(cfg)?;
    if let Some(section) = &cfg.enhance {
        let onto = data.ontology.as_ref().expect("validated");
        let teacher = enhance::TeacherSource::from_section(section);
        let scores = enhance::teacher_scores(&teacher, &data.train)?;
        let e = enhance::enhance_split(&data.train, &scores, onto, section, None)?;
        write_labels(&data.train, &e.labels, &dir.join("enhanced_train_labels.tsv"))?;
        write(&dir.join("enhance_audit.csv"), e.audit.to_csv(&data.train.class_table().names))?;
        log::info!(
            "label enhancement added {} labels ({:.2}%)",
            e.audit.labels_added,
            e.audit.percent_added
        );
        data.train = data.train.with_labels(&e.labels)?;
    }

    let model = Model::new(
        cfg.model
            .model_config(data.train.num_classes(), data.train.feature_shape()),
    )?;
    let tc = cfg.train_config();
    let init = match &cfg.init_params {
        Some(p) => {
            let (params, report) =
                load_external_init(p, &model, &mut rng::stream(tc.seed, "init.external", 0))?;
            log::info!(
                "external init: {} loaded, {} reinitialized",
                report.loaded.len(),
                report.reinitialized.len()
            );
            Some(params)
        }
        None => None,
    };
    let outcome = train(&model, &data.train, &cfg.augment, &tc, Some(&data.eval), init)?;

    write(&dir.join("train_log.csv"), log_csv(&outcome.log))?;
    for (ckpt, report) in outcome.checkpoints.iter().zip(&outcome.eval_reports) {
        ckpt.params.save(&dir.join(format!("checkpoints/epoch_{:03}.ckpt", ckpt.epoch)))?;
        write(&dir.join(format!("eval/epoch_{:03}.json", ckpt.epoch)), report.to_json())?;
    }
    let names = &data.eval.class_table().names;
    let final_report = outcome.eval_reports.last().expect("epochs >= 1");
    write(&dir.join("eval/final_classes.csv"), final_report.class_csv(names))?;

    let start = cfg.averaging_start();
    let labels = data.eval.label_matrix();
    let weight_avg_map = if cfg.aggregate.weight_avg {
        let avg = average_weights(&outcome.checkpoints, start)?;
        avg.save(&dir.join("weight_avg.ckpt"))?;
        let report = evaluate(&predict(&model, &avg, &data.eval)?, &labels)?;
        write(&dir.join("eval/weight_avg.json"), report.to_json())?;
        write(&dir.join("eval/weight_avg_classes.csv"), report.class_csv(names))?;
        Some(report.map)
    } else {
        None
    };
    let ensemble_map = if cfg.aggregate.ensemble {
        let members = outcome
            .checkpoints
            .iter()
            .zip(&outcome.eval_predictions)
            .filter(|(c, _)| c.epoch >= start)
            .map(|(c, p)| Member {
                tag: format!("epoch_{:03}", c.epoch),
                predictions: p.clone(),
            })
            .collect();
        let mean = ensemble_mean(&Committee::new(members)?)?;
        let report = evaluate(&mean, &labels)?;
        write(&dir.join("eval/ensemble.json"), report.to_json())?;
        Some(report.map)
    } else {
        None
    };

    let summary = RunSummary {
        run_dir: dir.clone(),
        config_sha256: sha,
        epochs: tc.epochs,
        num_params: model.num_params(),
        train_samples: data.train.len(),
        eval_samples: data.eval.len(),
        report_last_k: tc.report_last_k,
        last_k_mean_map: last_k_mean_map(&outcome.eval_reports, tc.report_last_k)
            .expect("at least one report"),
        final_map: final_report.map,
        averaging_start: start,
        weight_avg_map,
        ensemble_map,
    };
    write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

/// A completed run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    /// False when `config.toml` no longer matches the recorded hash.
    pub snapshot_intact: bool,
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self, ExperimentError> {
        let cfg_path = path.join("config.toml");
        let text = fs::read_to_string(&cfg_path).map_err(|e| ExperimentError::io(&cfg_path, e))?;
        let recorded = fs::read_to_string(path.join("config.sha256")).unwrap_or_default();
        let snapshot_intact = recorded.trim() == sha256_hex(text.as_bytes());
        if !snapshot_intact {
            log::warn!(
                "{}: config snapshot does not match its recorded hash; results may not reproduce",
                path.display()
            );
        }
        let config = ExperimentConfig::parse(&text, path)?;
        Ok(Self {
            path: path.to_path_buf(),
            config,
            snapshot_intact,
        })
    }

    pub fn summary(&self) -> Result<RunSummary, ExperimentError> {
        let p = self.path.join("summary.json");
        let text = fs::read_to_string(&p).map_err(|e| ExperimentError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Run(format!("{}: {e}", p.display())))
    }

    pub fn model(&self, data: &Data) -> Result<Model, ExperimentError> {
        Ok(Model::new(self.config.model.model_config(
            data.train.num_classes(),
            data.train.feature_shape(),
        ))?)
    }

    /// Per-epoch checkpoints in epoch order.
    pub fn checkpoints(&self) -> Result<Vec<Checkpoint>, ExperimentError> {
        let dir = self.path.join("checkpoints");
        let mut found = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| ExperimentError::io(&dir, e))? {
            let entry = entry.map_err(|e| ExperimentError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(epoch) = name
                .strip_prefix("epoch_")
                .and_then(|s| s.strip_suffix(".ckpt"))
                .and_then(|s| s.parse::<usize>().ok())
            {
                found.push(epoch);
            }
        }
        found.sort_unstable();
        if found.is_empty() {
            return Err(ExperimentError::Run(format!("no checkpoints in {}", dir.display())));
        }
        found
            .into_iter()
            .map(|epoch| {
                Ok(Checkpoint {
                    epoch,
                    params: self.checkpoint(&format!("epoch_{epoch:03}"))?,
                })
            })
            .collect()
    }

    /// Loads `weight_avg`, `last` or `epoch_NNN`.
    pub fn checkpoint(&self, which: &str) -> Result<ParameterVector, ExperimentError> {
        let path = match which {
            "weight_avg" => self.path.join("weight_avg.ckpt"),
            "last" => {
                let epochs = self.config.train.epochs;
                self.path.join(format!("checkpoints/epoch_{epochs:03}.ckpt"))
            }
            other => self.path.join(format!("checkpoints/{other}.ckpt")),
        };
        if !path.exists() {
            return Err(ExperimentError::Run(format!("missing checkpoint {}", path.display())));
        }
        Ok(ParameterVector::load(&path)?)
    }

    /// Re-evaluates a stored checkpoint on the run's evaluation corpus, or on
    /// `corpus` when given.
    pub fn evaluate(
        &self,
        which: &str,
        corpus: Option<&MultiLabelCorpus>,
    ) -> Result<EvalReport, ExperimentError> {
        let data = load_data(&self.config)?;
        let model = self.model(&data)?;
        let params = self.checkpoint(which)?;
        let eval = corpus.unwrap_or(&data.eval);
        Ok(evaluate(&predict(&model, &params, eval)?, &eval.label_matrix())?)
    }
}

/// Unseen-fraction trace of the configured sampler over the training corpus.
pub fn run_coverage(cfg: &ExperimentConfig, epochs: usize) -> Result<CoverageTrace, ExperimentError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let train = &data.train;
    let weights = make_weights(train.class_table(), &train.label_sets())?;
    Ok(simulate_coverage(
        &weights,
        &train.label_sets(),
        train.num_classes(),
        &cfg.augment,
        train.feature_shape(),
        epochs,
        rng::derive_seed(cfg.train_config().seed, "sampler", 0),
    )?)
}
