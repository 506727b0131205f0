//! Ontology-constrained label enhancement driven by a teacher's scores.
//!
//! Per-class thresholds come from the teacher's scores on the samples already
//! carrying that class. A one-hop ontology neighbour of an original label is
//! added when the teacher scores it strictly above the neighbour's threshold.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassId;
use crate::matrix::Matrix;
use crate::ontology::{Ontology, OntologyError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LabelFixError {
    #[error("class {class} has no positive samples, so its threshold is undefined")]
    UndefinedThreshold { class: ClassId },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("teacher score {value} at ({row}, {col}) outside [0, 1]")]
    ScoreRange { row: usize, col: usize, value: f64 },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("unknown {kind} {value:?}")]
    Parse { kind: &'static str, value: String },
}

/// Teacher prediction scores, samples by classes, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherScores(Matrix);

impl TeacherScores {
    pub fn new(scores: Matrix) -> Result<Self, LabelFixError> {
        for r in 0..scores.rows() {
            for (c, &v) in scores.row(r).iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(LabelFixError::ScoreRange { row: r, col: c, value: v });
                }
            }
        }
        Ok(Self(scores))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicy {
    Mean,
    P25,
    P10,
    P5,
}

impl ThresholdPolicy {
    pub const ALL: [ThresholdPolicy; 4] = [Self::Mean, Self::P25, Self::P10, Self::P5];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::P25 => "p25",
            Self::P10 => "p10",
            Self::P5 => "p5",
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = LabelFixError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| LabelFixError::Parse {
                kind: "threshold policy",
                value: s.to_string(),
            })
    }
}

/// Which missing-label errors to repair: `Type1` adds children of existing
/// labels, `Type2` adds parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairMode {
    Type1,
    Type2,
    Both,
}

impl RepairMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Type1 => "type1",
            Self::Type2 => "type2",
            Self::Both => "both",
        }
    }
}

impl FromStr for RepairMode {
    type Err = LabelFixError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Type1, Self::Type2, Self::Both]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| LabelFixError::Parse {
                kind: "repair mode",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// `None` for classes without positive samples.
    pub values: Vec<Option<f64>>,
    pub policy: ThresholdPolicy,
}

/// Nearest-rank percentile of an ascending list: the value at rank
/// `ceil(p / 100 * n)`, ranks counted from 1.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn make_thresholds(
    scores: &TeacherScores,
    labels: &[Vec<ClassId>],
    policy: ThresholdPolicy,
) -> Result<ThresholdSet, LabelFixError> {
    let m = scores.matrix();
    if m.rows() != labels.len() {
        return Err(LabelFixError::Dimensions(format!(
            "{} score rows for {} label sets",
            m.rows(),
            labels.len()
        )));
    }
    let c = m.cols();
    let mut positives: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (i, set) in labels.iter().enumerate() {
        for &k in set {
            if k >= c {
                return Err(LabelFixError::Dimensions(format!(
                    "label {k} on sample {i} but scores have {c} classes"
                )));
            }
            positives[k].push(m.get(i, k));
        }
    }
    let values = positives
        .into_iter()
        .map(|mut s| {
            if s.is_empty() {
                return None;
            }
            Some(match policy {
                ThresholdPolicy::Mean => s.iter().sum::<f64>() / s.len() as f64,
                p => {
                    s.sort_by(f64::total_cmp);
                    let pct = match p {
                        ThresholdPolicy::P25 => 25.0,
                        ThresholdPolicy::P10 => 10.0,
                        _ => 5.0,
                    };
                    nearest_rank(&s, pct)
                }
            })
        })
        .collect();
    Ok(ThresholdSet { values, policy })
}

/// How undefined thresholds are treated when a class shows up as a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    /// Skip the candidate and log a warning.
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceAudit {
    pub split: Split,
    pub mode: RepairMode,
    pub policy: ThresholdPolicy,
    pub original_labels: usize,
    pub labels_added: usize,
    /// Added labels as a percentage of the original label count.
    pub percent_added: f64,
    pub added_per_class: Vec<usize>,
    pub skipped_undefined: usize,
}

impl EnhanceAudit {
    pub fn impacted_classes(&self) -> usize {
        self.added_per_class.iter().filter(|&&n| n > 0).count()
    }

    /// `class,labels_added,impacted`.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("class,labels_added,impacted\n");
        for (k, &n) in self.added_per_class.iter().enumerate() {
            let name = class_names.get(k).map_or_else(|| k.to_string(), Clone::clone);
            let _ = writeln!(out, "{name},{n},{}", u8::from(n > 0));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhancement {
    pub labels: Vec<Vec<ClassId>>,
    pub audit: EnhanceAudit,
}

/// Adds missing labels to a training split.
pub fn enhance(
    labels: &[Vec<ClassId>],
    scores: &TeacherScores,
    onto: &Ontology,
    thresholds: &ThresholdSet,
    mode: RepairMode,
    strictness: Strictness,
) -> Result<Enhancement, LabelFixError> {
    enhance_split(labels, scores, onto, thresholds, mode, strictness, Split::Train)
}

/// Same repair applied to an evaluation split; the audit records the split.
pub fn enhance_eval_set(
    labels: &[Vec<ClassId>],
    scores: &TeacherScores,
    onto: &Ontology,
    thresholds: &ThresholdSet,
    mode: RepairMode,
    strictness: Strictness,
) -> Result<Enhancement, LabelFixError> {
    enhance_split(labels, scores, onto, thresholds, mode, strictness, Split::Eval)
}

fn enhance_split(
    labels: &[Vec<ClassId>],
    scores: &TeacherScores,
    onto: &Ontology,
    thresholds: &ThresholdSet,
    mode: RepairMode,
    strictness: Strictness,
    split: Split,
) -> Result<Enhancement, LabelFixError> {
    let m = scores.matrix();
    let c = onto.num_classes();
    if m.rows() != labels.len() || m.cols() != c || thresholds.values.len() != c {
        return Err(LabelFixError::Dimensions(format!(
            "{} label sets, scores {:?}, {} ontology classes, {} thresholds",
            labels.len(),
            m.shape(),
            c,
            thresholds.values.len()
        )));
    }
    let mut added_per_class = vec![0usize; c];
    let mut skipped_undefined = 0;
    let mut out = Vec::with_capacity(labels.len());
    for (i, original) in labels.iter().enumerate() {
        let mut enhanced: BTreeSet<ClassId> = original.iter().copied().collect();
        for &k in original {
            let mut candidates: Vec<ClassId> = Vec::new();
            if matches!(mode, RepairMode::Type1 | RepairMode::Both) {
                candidates.extend(onto.children(k)?);
            }
            if matches!(mode, RepairMode::Type2 | RepairMode::Both) {
                candidates.extend(onto.parents(k)?);
            }
            for kn in candidates {
                if original.contains(&kn) || enhanced.contains(&kn) {
                    continue;
                }
                let Some(t) = thresholds.values[kn] else {
                    match strictness {
                        Strictness::Strict => {
                            return Err(LabelFixError::UndefinedThreshold { class: kn })
                        }
                        Strictness::Permissive => {
                            log::warn!("skipping candidate class {kn}: undefined threshold");
                            skipped_undefined += 1;
                            continue;
                        }
                    }
                };
                if m.get(i, kn) > t {
                    enhanced.insert(kn);
                    added_per_class[kn] += 1;
                }
            }
        }
        out.push(enhanced.into_iter().collect());
    }
    let original_labels: usize = labels.iter().map(Vec::len).sum();
    let labels_added: usize = added_per_class.iter().sum();
    let percent_added = if original_labels == 0 {
        0.0
    } else {
        100.0 * labels_added as f64 / original_labels as f64
    };
    Ok(Enhancement {
        labels: out,
        audit: EnhanceAudit {
            split,
            mode,
            policy: thresholds.policy,
            original_labels,
            labels_added,
            percent_added,
            added_per_class,
            skipped_undefined,
        },
    })
}
