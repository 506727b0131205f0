//! Training-recipe toolkit for multi-label audio tagging.
//!
//! The crate is organized around the stages of the recipe:
//!
//! * [`corpus`] holds multi-label datasets, the synthetic long-tailed generator
//!   and the on-disk corpus directory format.
//! * [`ontology`] is the parent/child class graph used by [`labelfix`].
//! * [`sampler`] produces balanced epoch plans (sample draws, mixup partners,
//!   mask parameters) and coverage statistics; [`augment`] applies them.
//! * [`model`] is a small attention-pooling tagger with a hand-written
//!   backward pass, the warmup/step learning-rate schedule and checkpoints.
//! * [`aggregate`] averages checkpoint weights and ensembles predictions.
//! * [`metrics`] computes AP, mAP, ROC-AUC and d-prime.
//! * [`experiment`] ties everything into reproducible run directories and backs
//!   the `psla` command-line tool.

pub mod aggregate;
pub mod augment;
pub mod corpus;
pub mod experiment;
pub mod labelfix;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod ontology;
pub mod rng;
pub mod sampler;

pub use corpus::{ClassId, ClassTable, FeatureShape, MultiLabelCorpus, Sample, SynthSpec};
pub use matrix::{LabelMatrix, Matrix};
pub use ontology::Ontology;
