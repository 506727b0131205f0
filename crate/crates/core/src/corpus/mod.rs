//! Multi-label corpora: in-memory representation, class tallies, the
//! synthetic long-tailed generator and the directory format.

mod io;
mod synth;

pub use io::{read_corpus, read_corpus_with_labels, read_labels, write_corpus, write_labels};
pub use synth::{generate_synthetic, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::augment::FeatureMatrix;
use crate::matrix::LabelMatrix;

pub type ClassId = usize;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path} line {line}: {reason}")]
    MalformedManifest {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("malformed label file {path} line {line}: {reason}")]
    MalformedLabels {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("shape mismatch for sample {sample}: {reason}")]
    ShapeMismatch { sample: String, reason: String },
    #[error("unknown class {name:?} in {path} line {line}")]
    UnknownClass {
        name: String,
        path: String,
        line: usize,
    },
    #[error("invalid sample {sample}: {reason}")]
    InvalidSample { sample: String, reason: String },
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Time frames by frequency bins. A corpus of 1-D signals uses
/// `freq_bins == 1`, with the signal laid out along the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureShape {
    pub time_frames: usize,
    pub freq_bins: usize,
}

impl FeatureShape {
    pub const fn new(time_frames: usize, freq_bins: usize) -> Self {
        Self {
            time_frames,
            freq_bins,
        }
    }

    pub const fn len(&self) -> usize {
        self.time_frames * self.freq_bins
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for FeatureShape {
    fn default() -> Self {
        Self::new(1056, 128)
    }
}

impl std::fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.time_frames, self.freq_bins)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Row-major `time_frames x freq_bins`.
    pub features: Vec<f32>,
    /// Sorted, deduplicated class ids.
    pub labels: Vec<ClassId>,
}

impl Sample {
    pub fn new(id: impl Into<String>, features: Vec<f32>, mut labels: Vec<ClassId>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        Self {
            id: id.into(),
            features,
            labels,
        }
    }

    pub fn has_label(&self, k: ClassId) -> bool {
        self.labels.binary_search(&k).is_ok()
    }

    pub fn matrix(&self, shape: FeatureShape) -> FeatureMatrix {
        FeatureMatrix::from_f32(shape.time_frames, shape.freq_bins, &self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub names: Vec<String>,
    pub counts: Vec<usize>,
}

impl ClassTable {
    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelCorpus {
    samples: Vec<Sample>,
    class_table: ClassTable,
    feature_shape: FeatureShape,
}

/// Class names appear in whitespace- and comma-separated text files.
pub(crate) fn check_class_name(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("empty class name".into());
    }
    if name.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(format!(
            "class name {name:?} contains whitespace or a comma"
        ));
    }
    Ok(())
}

impl MultiLabelCorpus {
    /// Validates samples against the shape and class list and tallies counts.
    pub fn new(
        class_names: Vec<String>,
        feature_shape: FeatureShape,
        samples: Vec<Sample>,
    ) -> Result<Self, CorpusError> {
        if class_names.is_empty() {
            return Err(CorpusError::Invalid("no classes".into()));
        }
        if samples.is_empty() {
            return Err(CorpusError::Invalid("no samples".into()));
        }
        if feature_shape.is_empty() {
            return Err(CorpusError::Invalid(format!(
                "empty feature shape {feature_shape}"
            )));
        }
        for name in &class_names {
            check_class_name(name).map_err(CorpusError::Invalid)?;
        }
        let c = class_names.len();
        for s in &samples {
            if s.id.is_empty() || s.id.contains(['\t', '\n', '\r']) {
                return Err(CorpusError::InvalidSample {
                    sample: s.id.clone(),
                    reason: "id must be nonempty and free of tabs and newlines".into(),
                });
            }
            if s.features.len() != feature_shape.len() {
                return Err(CorpusError::ShapeMismatch {
                    sample: s.id.clone(),
                    reason: format!(
                        "{} values, corpus shape {feature_shape} needs {}",
                        s.features.len(),
                        feature_shape.len()
                    ),
                });
            }
            if s.labels.is_empty() {
                return Err(CorpusError::InvalidSample {
                    sample: s.id.clone(),
                    reason: "no labels".into(),
                });
            }
            if let Some(&k) = s.labels.iter().find(|&&k| k >= c) {
                return Err(CorpusError::InvalidSample {
                    sample: s.id.clone(),
                    reason: format!("class id {k} out of range for {c} classes"),
                });
            }
            if s.labels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CorpusError::InvalidSample {
                    sample: s.id.clone(),
                    reason: "labels not sorted and unique".into(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::InvalidSample {
                    sample: s.id.clone(),
                    reason: "non-finite feature value".into(),
                });
            }
        }
        let counts = tally(&samples, c);
        Ok(Self {
            samples,
            class_table: ClassTable {
                names: class_names,
                counts,
            },
            feature_shape,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.class_table
    }

    pub fn feature_shape(&self) -> FeatureShape {
        self.feature_shape
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_table.num_classes()
    }

    pub fn label_sets(&self) -> Vec<Vec<ClassId>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        LabelMatrix::from_sets(&self.label_sets(), self.num_classes())
    }

    /// Returns a copy with every sample's labels replaced, e.g. by an
    /// enhanced label set.
    pub fn with_labels(&self, labels: &[Vec<ClassId>]) -> Result<Self, CorpusError> {
        if labels.len() != self.samples.len() {
            return Err(CorpusError::Invalid(format!(
                "{} label sets for {} samples",
                labels.len(),
                self.samples.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, l)| Sample::new(s.id.clone(), s.features.clone(), l.clone()))
            .collect();
        Self::new(self.class_table.names.clone(), self.feature_shape, samples)
    }
}

fn tally(samples: &[Sample], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for s in samples {
        for &k in &s.labels {
            counts[k] += 1;
        }
    }
    counts
}

/// Recounts per-class sample numbers from the corpus labels.
pub fn count_classes(corpus: &MultiLabelCorpus) -> ClassTable {
    ClassTable {
        names: corpus.class_table.names.clone(),
        counts: tally(&corpus.samples, corpus.num_classes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: &[&[usize]], classes: &[&str]) -> MultiLabelCorpus {
        let shape = FeatureShape::new(2, 2);
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Sample::new(format!("s{i}"), vec![0.0; 4], l.to_vec()))
            .collect();
        MultiLabelCorpus::new(
            classes.iter().map(|s| s.to_string()).collect(),
            shape,
            samples,
        )
        .unwrap()
    }

    #[test]
    fn counts_direct_tally() {
        let c = tiny(&[&[0], &[0, 1], &[1]], &["A", "B"]);
        assert_eq!(count_classes(&c).counts, vec![2, 2]);
    }

    #[test]
    fn counts_saturate_when_every_sample_has_every_label() {
        let c = tiny(&[&[0, 1, 2][..]; 5], &["A", "B", "C"]);
        assert_eq!(count_classes(&c).counts, vec![5, 5, 5]);
    }

    #[test]
    fn rejects_unlabeled_and_misshaped_samples() {
        let shape = FeatureShape::new(2, 2);
        let names = vec!["A".to_string()];
        let e = MultiLabelCorpus::new(names.clone(), shape, vec![Sample::new("x", vec![0.0; 4], vec![])]);
        assert!(matches!(e, Err(CorpusError::InvalidSample { .. })));
        let e = MultiLabelCorpus::new(names.clone(), shape, vec![Sample::new("x", vec![0.0; 3], vec![0])]);
        assert!(matches!(e, Err(CorpusError::ShapeMismatch { .. })));
        let e = MultiLabelCorpus::new(names, shape, vec![Sample::new("x", vec![f32::NAN; 4], vec![0])]);
        assert!(matches!(e, Err(CorpusError::InvalidSample { .. })));
    }

    #[test]
    fn rejects_class_names_with_separators() {
        let shape = FeatureShape::new(1, 1);
        let e = MultiLabelCorpus::new(
            vec!["Male speech".into()],
            shape,
            vec![Sample::new("x", vec![0.0], vec![0])],
        );
        assert!(matches!(e, Err(CorpusError::Invalid(_))));
    }
}
