//! Checkpoint weight averaging and prediction ensembling.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::MultiLabelCorpus;
use crate::matrix::Matrix;
use crate::metrics::{evaluate, MetricsError};
use crate::model::{predict, predict_logits, Checkpoint, Model, ModelError, ParameterVector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("no checkpoints at or after epoch {start_epoch}")]
    EmptyWindow { start_epoch: usize },
    #[error("checkpoint manifests differ")]
    ManifestMismatch,
    #[error("committee is empty")]
    EmptyCommittee,
    #[error("member {tag} has shape {got:?}, expected {expected:?}")]
    Dimensions {
        tag: String,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Coordinatewise arithmetic mean of parameter vectors with identical
/// manifests.
pub fn average_parameters(params: &[&ParameterVector]) -> Result<ParameterVector, AggregateError> {
    let first = params.first().ok_or(AggregateError::EmptyWindow { start_epoch: 0 })?;
    if params.iter().any(|p| p.manifest() != first.manifest()) {
        return Err(AggregateError::ManifestMismatch);
    }
    let n = params.len() as f64;
    let values = (0..first.len())
        .map(|i| params.iter().map(|p| p.values()[i]).sum::<f64>() / n)
        .collect();
    Ok(ParameterVector::new(first.manifest().to_vec(), values)?)
}

/// Averages every checkpoint from `start_epoch` (1-based) to the last.
pub fn average_weights(
    checkpoints: &[Checkpoint],
    start_epoch: usize,
) -> Result<ParameterVector, AggregateError> {
    let window: Vec<&ParameterVector> = checkpoints
        .iter()
        .filter(|c| c.epoch >= start_epoch)
        .map(|c| &c.params)
        .collect();
    if window.is_empty() {
        return Err(AggregateError::EmptyWindow { start_epoch });
    }
    average_parameters(&window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Provenance, e.g. `run-a/epoch_012` or `seed-3`.
    pub tag: String,
    pub predictions: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Committee {
    pub members: Vec<Member>,
}

impl Committee {
    pub fn new(members: Vec<Member>) -> Result<Self, AggregateError> {
        let first = members.first().ok_or(AggregateError::EmptyCommittee)?;
        let expected = first.predictions.shape();
        for m in &members {
            if m.predictions.shape() != expected {
                return Err(AggregateError::Dimensions {
                    tag: m.tag.clone(),
                    got: m.predictions.shape(),
                    expected,
                });
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn elementwise_mean(mats: &[&Matrix]) -> Result<Matrix, AggregateError> {
    let first = mats.first().ok_or(AggregateError::EmptyCommittee)?;
    let (r, c) = first.shape();
    let n = mats.len() as f64;
    let data = (0..r * c)
        .map(|i| mats.iter().map(|m| m.as_slice()[i]).sum::<f64>() / n)
        .collect();
    Ok(Matrix::from_vec(r, c, data).expect("shape preserved"))
}

/// Mean of the members' probability matrices.
pub fn ensemble_mean(committee: &Committee) -> Result<Matrix, AggregateError> {
    let mats: Vec<&Matrix> = committee.members.iter().map(|m| &m.predictions).collect();
    elementwise_mean(&mats)
}

/// Mean of pre-sigmoid outputs. Only meaningful when members carry logits;
/// used to check that weight averaging of an affine model equals logit
/// averaging.
pub fn ensemble_logit_mean(logits: &[&Matrix]) -> Result<Matrix, AggregateError> {
    elementwise_mean(logits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub start_epoch: usize,
    pub weight_avg_map: f64,
    pub ensemble_map: f64,
}

/// For every candidate start epoch, the eval mAP of the weight-averaged model
/// and of the prediction-averaged checkpoint committee over the window from
/// that epoch to the last. `predictions`, when given, are the per-checkpoint
/// eval predictions and save recomputing them.
pub fn sweep_start_epoch(
    model: &Model,
    checkpoints: &[Checkpoint],
    eval: &MultiLabelCorpus,
    predictions: Option<&[Matrix]>,
) -> Result<Vec<SweepPoint>, AggregateError> {
    let labels = eval.label_matrix();
    let owned;
    let preds: &[Matrix] = match predictions {
        Some(p) if p.len() == checkpoints.len() => p,
        _ => {
            owned = checkpoints
                .iter()
                .map(|c| predict(model, &c.params, eval))
                .collect::<Result<Vec<_>, _>>()?;
            &owned
        }
    };
    let mut curve = Vec::with_capacity(checkpoints.len());
    for (i, ckpt) in checkpoints.iter().enumerate() {
        let averaged = average_weights(checkpoints, ckpt.epoch)?;
        let weight_avg_map = evaluate(&predict(model, &averaged, eval)?, &labels)?.map;
        let window: Vec<&Matrix> = preds[i..].iter().collect();
        let ensemble_map = evaluate(&elementwise_mean(&window)?, &labels)?.map;
        curve.push(SweepPoint {
            start_epoch: ckpt.epoch,
            weight_avg_map,
            ensemble_map,
        });
    }
    Ok(curve)
}

pub fn sweep_csv(curve: &[SweepPoint]) -> String {
    let mut out = String::from("start_epoch,weight_avg_map,ensemble_map\n");
    for p in curve {
        let _ = writeln!(out, "{},{:?},{:?}", p.start_epoch, p.weight_avg_map, p.ensemble_map);
    }
    out
}

/// Largest absolute gap, over all samples and classes, between the logits
/// of the weight-averaged window and the mean of per-checkpoint logits.
pub fn logit_linearity_gap(
    model: &Model,
    checkpoints: &[Checkpoint],
    start_epoch: usize,
    eval: &MultiLabelCorpus,
) -> Result<f64, AggregateError> {
    let averaged = average_weights(checkpoints, start_epoch)?;
    let direct = predict_logits(model, &averaged, eval)?;
    let members = checkpoints
        .iter()
        .filter(|c| c.epoch >= start_epoch)
        .map(|c| predict_logits(model, &c.params, eval))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&Matrix> = members.iter().collect();
    let mean = ensemble_logit_mean(&refs)?;
    Ok(direct
        .as_slice()
        .iter()
        .zip(mean.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
