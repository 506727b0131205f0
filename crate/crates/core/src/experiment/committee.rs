use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{load_data, write};
use super::{ExperimentError, RunDir};
use crate::aggregate::{
    average_parameters, ensemble_logit_mean, ensemble_mean, sweep_csv, sweep_start_epoch, Committee,
    Member, SweepPoint,
};
use crate::corpus::MultiLabelCorpus;
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{predict_logits, sigmoid_probs, Model, ModelConfig, ParameterVector};

/// Which checkpoints of a run join the committee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberSelect {
    Last,
    /// Every per-epoch checkpoint, one member each.
    All,
    WeightAvg,
    Epoch(usize),
}

impl std::str::FromStr for MemberSelect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "last" => Ok(Self::Last),
            "all" => Ok(Self::All),
            "weight_avg" => Ok(Self::WeightAvg),
            _ => s
                .strip_prefix("epoch_")
                .and_then(|n| n.parse().ok())
                .map(Self::Epoch)
                .ok_or_else(|| format!("unknown member selection {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberSpec {
    pub tag: String,
    pub run: PathBuf,
    pub select: MemberSelect,
}

/// Reads `tag<TAB>run_dir[<TAB>last|all|weight_avg|epoch_N]` lines; `#`
/// starts a comment. Relative run paths are taken from the manifest's
/// directory.
pub fn read_committee_manifest(path: &Path) -> Result<Vec<MemberSpec>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| ExperimentError::Config {
            line: Some(i + 1),
            message: format!("{}: {m}", path.display()),
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(bad("expected tag, run directory and optional selection".into()));
        }
        let select = match fields.get(2) {
            Some(s) => s.parse().map_err(bad)?,
            None => MemberSelect::Last,
        };
        let run = PathBuf::from(fields[1]);
        out.push(MemberSpec {
            tag: fields[0].to_string(),
            run: if run.is_relative() { base.join(run) } else { run },
            select,
        });
    }
    if out.is_empty() {
        return Err(ExperimentError::Config {
            line: None,
            message: format!("{}: committee manifest lists no members", path.display()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub members: Vec<(String, EvalReport)>,
    pub ensemble: EvalReport,
    pub avg_map: f64,
    pub best_map: f64,
    pub ensemble_map: f64,
    /// Sigmoid of the mean member logits.
    pub logit_ensemble_map: f64,
    /// Parameters averaged across members; only when all members share a
    /// model configuration.
    pub weight_avg_map: Option<f64>,
    pub sweeps: Vec<(String, Vec<SweepPoint>)>,
}

impl AggregateOutcome {
    /// Avg/Best/Ensemble comparison row with the committee size.
    pub fn comparison_csv(&self) -> String {
        let wa = self.weight_avg_map.map(|m| format!("{m:?}")).unwrap_or_default();
        format!(
            "members,avg_map,best_map,ensemble_map,logit_ensemble_map,weight_avg_map\n{},{:?},{:?},{:?},{:?},{wa}\n",
            self.members.len(),
            self.avg_map,
            self.best_map,
            self.ensemble_map,
            self.logit_ensemble_map
        )
    }
}

struct Loaded {
    tag: String,
    config: ModelConfig,
    params: ParameterVector,
    logits: Matrix,
}

/// Evaluates every member and their ensemble on `eval`, or on the first
/// member's evaluation corpus. Outputs go to `out_dir` when given.
pub fn run_aggregate(
    specs: &[MemberSpec],
    eval: Option<&MultiLabelCorpus>,
    out_dir: Option<&Path>,
) -> Result<AggregateOutcome, ExperimentError> {
    let first = specs.first().ok_or_else(|| ExperimentError::Config {
        line: None,
        message: "committee has no members".into(),
    })?;
    let owned;
    let eval = match eval {
        Some(e) => e,
        None => {
            owned = load_data(&RunDir::open(&first.run)?.config)?.eval;
            &owned
        }
    };
    let labels = eval.label_matrix();
    let mut loaded = Vec::new();
    let mut sweeps = Vec::new();
    for spec in specs {
        let run = RunDir::open(&spec.run)?;
        let config = run
            .config
            .model
            .model_config(eval.num_classes(), eval.feature_shape());
        let model = Model::new(config.clone())?;
        let chosen: Vec<(String, ParameterVector)> = match &spec.select {
            MemberSelect::Last => vec![(spec.tag.clone(), run.checkpoint("last")?)],
            MemberSelect::WeightAvg => vec![(spec.tag.clone(), run.checkpoint("weight_avg")?)],
            MemberSelect::Epoch(e) => vec![(spec.tag.clone(), run.checkpoint(&format!("epoch_{e:03}"))?)],
            MemberSelect::All => {
                let ckpts = run.checkpoints()?;
                sweeps.push((spec.tag.clone(), sweep_start_epoch(&model, &ckpts, eval, None)?));
                ckpts
                    .into_iter()
                    .map(|c| (format!("{}/epoch_{:03}", spec.tag, c.epoch), c.params))
                    .collect()
            }
        };
        for (tag, params) in chosen {
            let logits = predict_logits(&model, &params, eval)?;
            loaded.push(Loaded {
                tag,
                config: config.clone(),
                params,
                logits,
            });
        }
    }

    let to_probs = |m: &Matrix| {
        let (r, c) = m.shape();
        Matrix::from_vec(r, c, sigmoid_probs(m.as_slice())).expect("shape preserved")
    };
    let committee = Committee::new(
        loaded
            .iter()
            .map(|l| Member {
                tag: l.tag.clone(),
                predictions: to_probs(&l.logits),
            })
            .collect(),
    )?;
    let mut members = Vec::new();
    for m in &committee.members {
        members.push((m.tag.clone(), evaluate(&m.predictions, &labels)?));
    }
    let ensemble = evaluate(&ensemble_mean(&committee)?, &labels)?;
    let logit_refs: Vec<&Matrix> = loaded.iter().map(|l| &l.logits).collect();
    let logit_ensemble_map = evaluate(&to_probs(&ensemble_logit_mean(&logit_refs)?), &labels)?.map;
    let weight_avg_map = if loaded.iter().all(|l| l.config == loaded[0].config) {
        let params: Vec<&ParameterVector> = loaded.iter().map(|l| &l.params).collect();
        let avg = average_parameters(&params)?;
        let model = Model::new(loaded[0].config.clone())?;
        Some(evaluate(&to_probs(&predict_logits(&model, &avg, eval)?), &labels)?.map)
    } else {
        None
    };
    let maps: Vec<f64> = members.iter().map(|(_, r)| r.map).collect();
    let outcome = AggregateOutcome {
        avg_map: maps.iter().sum::<f64>() / maps.len() as f64,
        best_map: maps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ensemble_map: ensemble.map,
        logit_ensemble_map,
        weight_avg_map,
        members,
        ensemble,
        sweeps,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        write(&dir.join("comparison.csv"), outcome.comparison_csv())?;
        write(&dir.join("ensemble.json"), outcome.ensemble.to_json())?;
        let mut csv = String::from("tag,map,mean_auc,d_prime\n");
        for (tag, r) in &outcome.members {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(csv, "{tag},{:?},{},{}", r.map, opt(r.mean_auc), opt(r.d_prime));
        }
        write(&dir.join("members.csv"), csv)?;
        for (tag, curve) in &outcome.sweeps {
            let safe: String = tag
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            write(&dir.join(format!("sweep_{safe}.csv")), sweep_csv(curve))?;
        }
    }
    Ok(outcome)
}
