use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{load_data, write};
use super::{EnhanceSection, ExperimentConfig, ExperimentError, RunDir};
use crate::corpus::{write_labels, MultiLabelCorpus};
use crate::labelfix::{
    enhance, enhance_eval_set, make_thresholds, EnhanceAudit, Enhancement, RepairMode, Strictness,
    TeacherScores, ThresholdPolicy, ThresholdSet,
};
use crate::matrix::Matrix;
use crate::model::predict;
use crate::ontology::Ontology;

/// Where teacher scores come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    /// A completed run; its weight-averaged model (or last checkpoint)
    /// scores each split.
    Run(PathBuf),
    /// Precomputed CSV score matrices for the training and, optionally, the
    /// evaluation split.
    Scores { train: PathBuf, eval: Option<PathBuf> },
}

impl TeacherSource {
    pub(crate) fn from_section(s: &EnhanceSection) -> Self {
        match (&s.teacher_run, &s.teacher_scores) {
            (Some(run), _) => Self::Run(run.clone()),
            (None, Some(train)) => Self::Scores {
                train: train.clone(),
                eval: None,
            },
            (None, None) => unreachable!("validated"),
        }
    }
}

fn read_scores(path: &Path) -> Result<TeacherScores, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    Ok(TeacherScores::new(Matrix::from_csv(&text)?)?)
}

fn score_with_run(dir: &Path, corpus: &MultiLabelCorpus) -> Result<TeacherScores, ExperimentError> {
    let run = RunDir::open(dir)?;
    let model = crate::model::Model::new(
        run.config
            .model
            .model_config(corpus.num_classes(), corpus.feature_shape()),
    )?;
    let params = run.checkpoint("weight_avg").or_else(|_| run.checkpoint("last"))?;
    Ok(TeacherScores::new(predict(&model, &params, corpus)?)?)
}

/// Teacher scores for the training corpus.
pub(crate) fn teacher_scores(
    source: &TeacherSource,
    corpus: &MultiLabelCorpus,
) -> Result<TeacherScores, ExperimentError> {
    match source {
        TeacherSource::Run(dir) => score_with_run(dir, corpus),
        TeacherSource::Scores { train, .. } => read_scores(train),
    }
}

fn strictness(permissive: bool) -> Strictness {
    if permissive {
        Strictness::Permissive
    } else {
        Strictness::Strict
    }
}

/// Enhances the training split with thresholds from its own scores, unless
/// `thresholds` is given.
pub(crate) fn enhance_split(
    corpus: &MultiLabelCorpus,
    scores: &TeacherScores,
    onto: &Ontology,
    section: &EnhanceSection,
    thresholds: Option<&ThresholdSet>,
) -> Result<Enhancement, ExperimentError> {
    let labels = corpus.label_sets();
    let owned;
    let t = match thresholds {
        Some(t) => t,
        None => {
            owned = make_thresholds(scores, &labels, section.policy)?;
            &owned
        }
    };
    Ok(enhance(&labels, scores, onto, t, section.mode, strictness(section.permissive))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceOutcome {
    pub output_dir: PathBuf,
    /// Training and evaluation audits for every policy, in policy order.
    pub audits: Vec<EnhanceAudit>,
}

impl EnhanceOutcome {
    /// `split,policy,mode,original_labels,labels_added,percent_added,impacted_classes`.
    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("split,policy,mode,original_labels,labels_added,percent_added,impacted_classes\n");
        for a in &self.audits {
            let split = match a.split {
                crate::labelfix::Split::Train => "train",
                crate::labelfix::Split::Eval => "eval",
            };
            let _ = writeln!(
                out,
                "{split},{},{},{},{},{:.4},{}",
                a.policy.name(),
                a.mode.name(),
                a.original_labels,
                a.labels_added,
                a.percent_added,
                a.impacted_classes()
            );
        }
        out
    }
}

/// Scores both splits with the teacher and writes enhanced label files and
/// audits for every threshold policy under `<output_dir>/enhance/<policy>/`.
/// Evaluation labels are repaired with thresholds computed on the training
/// split.
pub fn run_enhance(
    cfg: &ExperimentConfig,
    teacher: &TeacherSource,
    mode: RepairMode,
    permissive: bool,
) -> Result<EnhanceOutcome, ExperimentError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let onto = data.ontology.as_ref().ok_or_else(|| ExperimentError::Config {
        line: None,
        message: "enhance requires data.ontology".into(),
    })?;
    let (train_scores, eval_scores) = match teacher {
        TeacherSource::Run(dir) => (score_with_run(dir, &data.train)?, Some(score_with_run(dir, &data.eval)?)),
        TeacherSource::Scores { train, eval } => (
            read_scores(train)?,
            eval.as_deref().map(read_scores).transpose()?,
        ),
    };
    let out = cfg.output_dir.join("enhance");
    let names = &data.train.class_table().names;
    let train_labels = data.train.label_sets();
    let eval_labels = data.eval.label_sets();
    let mut audits = Vec::new();
    for policy in ThresholdPolicy::ALL {
        let dir = out.join(policy.name());
        fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
        let t = make_thresholds(&train_scores, &train_labels, policy)?;
        write(&dir.join("thresholds.csv"), thresholds_csv(&t, names))?;
        let e = enhance(&train_labels, &train_scores, onto, &t, mode, strictness(permissive))?;
        write_labels(&data.train, &e.labels, &dir.join("train_labels.tsv"))?;
        write(&dir.join("train_audit.csv"), e.audit.to_csv(names))?;
        audits.push(e.audit);
        if let Some(scores) = &eval_scores {
            let e = enhance_eval_set(&eval_labels, scores, onto, &t, mode, strictness(permissive))?;
            write_labels(&data.eval, &e.labels, &dir.join("eval_labels.tsv"))?;
            write(&dir.join("eval_audit.csv"), e.audit.to_csv(names))?;
            audits.push(e.audit);
        }
    }
    let outcome = EnhanceOutcome {
        output_dir: out.clone(),
        audits,
    };
    write(&out.join("audit_summary.csv"), outcome.summary_csv())?;
    write(
        &out.join("audit.json"),
        serde_json::to_string_pretty(&outcome).expect("audit serializes"),
    )?;
    Ok(outcome)
}

fn thresholds_csv(t: &ThresholdSet, names: &[String]) -> String {
    let mut out = String::from("class,threshold\n");
    for (name, v) in names.iter().zip(&t.values) {
        let v = v.map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(out, "{name},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_teacher_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = crate::corpus::generate_synthetic(&crate::SynthSpec {
            num_samples: 20,
            ..Default::default()
        })
        .unwrap();
        let e = teacher_scores(&TeacherSource::Run(dir.path().join("nope")), &corpus);
        assert!(e.is_err());
    }
}
