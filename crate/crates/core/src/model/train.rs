use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LRSchedule, Model, ModelError, ParameterVector};
use crate::augment::{apply_mask_in_place, mixup, FeatureMatrix};
use crate::corpus::MultiLabelCorpus;
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalReport};
use crate::rng;
use crate::sampler::{make_weights, plan_epoch, AugmentConfig, Draw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LRSchedule,
    pub adam: AdamConfig,
    /// Master seed; sampler and initialization streams are derived from it.
    pub seed: u64,
    /// Headline metric is the mean eval mAP of this many final epochs.
    pub report_last_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 100,
            schedule: LRSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
            report_last_k: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if self.report_last_k == 0 {
            return Err(ModelError::Config("report_last_k must be >= 1".into()));
        }
        self.schedule.validate().map_err(ModelError::Config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: ParameterVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    /// Global iteration count at the end of the epoch.
    pub iteration: u64,
    pub lr: f64,
    /// Mean training loss over the epoch's draws.
    pub loss: f64,
    pub eval_map: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<TrainLogRow>,
    /// One per epoch when an evaluation corpus was supplied.
    pub eval_reports: Vec<EvalReport>,
    pub eval_predictions: Vec<Matrix>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i] + cfg.weight_decay * params[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Builds the augmented training example for one planned draw: mixup first,
/// then masking.
fn materialize(
    corpus: &MultiLabelCorpus,
    draw: &Draw,
    aug: &AugmentConfig,
) -> Result<(FeatureMatrix, Vec<f64>), ModelError> {
    let shape = corpus.feature_shape();
    let c = corpus.num_classes();
    let dense = |idx: usize| {
        let mut y = vec![0.0; c];
        for &k in &corpus.samples()[idx].labels {
            y[k] = 1.0;
        }
        y
    };
    let xi = corpus.samples()[draw.primary].matrix(shape);
    let (mut x, y) = match draw.mixup {
        Some(m) => {
            let xj = corpus.samples()[m.index].matrix(shape);
            mixup(&xi, &dense(draw.primary), &xj, &dense(m.index), m.lambda)
                .map_err(|e| ModelError::Data(e.to_string()))?
        }
        None => (xi, dense(draw.primary)),
    };
    apply_mask_in_place(&mut x, draw.mask, aug.mask_value).map_err(|e| ModelError::Data(e.to_string()))?;
    Ok((x, y))
}

/// Trains `model` on `corpus`, one checkpoint per epoch. Deterministic for a
/// fixed configuration: per-example gradients are computed in parallel but
/// summed in draw order.
pub fn train(
    model: &Model,
    corpus: &MultiLabelCorpus,
    aug: &AugmentConfig,
    config: &TrainConfig,
    eval: Option<&MultiLabelCorpus>,
    init: Option<ParameterVector>,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    let mc = model.config();
    if corpus.feature_shape() != mc.feature_shape || corpus.num_classes() != mc.num_classes {
        return Err(ModelError::Shape(format!(
            "corpus is {} with {} classes, model expects {} with {}",
            corpus.feature_shape(),
            corpus.num_classes(),
            mc.feature_shape,
            mc.num_classes
        )));
    }
    aug.validate(corpus.feature_shape())
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let weights = make_weights(corpus.class_table(), &corpus.label_sets())
        .map_err(|e| ModelError::Data(e.to_string()))?;
    let sampler_seed = rng::derive_seed(config.seed, "sampler", 0);
    let mut params = match init {
        Some(p) => {
            if p.manifest() != model.manifest().as_slice() {
                return Err(ModelError::Manifest("initial parameters do not fit the model".into()));
            }
            p
        }
        None => model.init(&mut rng::stream(config.seed, "init", 0)),
    };
    let mut adam = Adam::new(params.len());
    let mut iteration: u64 = 0;
    let mut outcome = TrainOutcome {
        checkpoints: Vec::with_capacity(config.epochs),
        log: Vec::with_capacity(config.epochs),
        eval_reports: Vec::new(),
        eval_predictions: Vec::new(),
    };
    for epoch in 1..=config.epochs {
        let plan = plan_epoch(&weights, aug, corpus.feature_shape(), sampler_seed, epoch as u64)
            .map_err(|e| ModelError::Config(e.to_string()))?;
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for batch in plan.draws.chunks(config.batch_size) {
            iteration += 1;
            let per_example: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|draw| {
                    let (x, y) = materialize(corpus, draw, aug)?;
                    let mut grad = vec![0.0; model.num_params()];
                    let l = model.loss_and_grad(&params, &x.data, &y, &mut grad)?;
                    Ok((l, grad))
                })
                .collect::<Result<_, ModelError>>()?;
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for (l, g) in &per_example {
                batch_loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !batch_loss.is_finite() {
                return Err(ModelError::Divergence {
                    epoch,
                    iteration,
                    loss: batch_loss * scale,
                });
            }
            epoch_loss += batch_loss;
            lr = config.schedule.lr(iteration, epoch);
            adam.update(params.values_mut(), &grad, lr, &config.adam);
            if params.values().iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Divergence {
                    epoch,
                    iteration,
                    loss: f64::NAN,
                });
            }
        }
        let mut eval_map = None;
        if let Some(eval) = eval {
            let preds = predict(model, &params, eval)?;
            let report = evaluate(&preds, &eval.label_matrix())
                .map_err(|e| ModelError::Data(e.to_string()))?;
            eval_map = Some(report.map);
            outcome.eval_reports.push(report);
            outcome.eval_predictions.push(preds);
        }
        let loss = epoch_loss / plan.draws.len() as f64;
        log::debug!("epoch {epoch}: loss {loss:.5}, lr {lr:.3e}, eval mAP {eval_map:?}");
        outcome.log.push(TrainLogRow {
            epoch,
            iteration,
            lr,
            loss,
            eval_map,
        });
        outcome.checkpoints.push(Checkpoint {
            epoch,
            params: params.clone(),
        });
    }
    Ok(outcome)
}

/// Pre-sigmoid outputs for every sample of `corpus`, samples by classes.
pub fn predict_logits(
    model: &Model,
    params: &ParameterVector,
    corpus: &MultiLabelCorpus,
) -> Result<Matrix, ModelError> {
    let shape = corpus.feature_shape();
    let rows: Vec<Vec<f64>> = corpus
        .samples()
        .par_iter()
        .map(|s| Ok(model.forward(params, &s.matrix(shape).data)?.logits))
        .collect::<Result<_, ModelError>>()?;
    Matrix::from_rows(&rows).map_err(|e| ModelError::Shape(e.to_string()))
}

/// Class probabilities for every sample of `corpus`.
pub fn predict(
    model: &Model,
    params: &ParameterVector,
    corpus: &MultiLabelCorpus,
) -> Result<Matrix, ModelError> {
    let logits = predict_logits(model, params, corpus)?;
    let (r, c) = logits.shape();
    let probs = super::sigmoid_probs(logits.as_slice());
    Matrix::from_vec(r, c, probs).map_err(|e| ModelError::Shape(e.to_string()))
}
