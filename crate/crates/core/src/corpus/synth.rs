use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ClassId, CorpusError, FeatureShape, MultiLabelCorpus, Sample};
use crate::rng;

/// Most labels a generated sample may carry.
pub const MAX_LABELS: usize = 5;

/// Parameters of the synthetic long-tailed corpus generator.
///
/// `seed` drives label assignment, event placement and noise. Class patterns
/// come from `pattern_seed`, so a training and an evaluation corpus drawn with
/// different `seed`s but the same `pattern_seed` share the same classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub num_samples: usize,
    /// Largest class count over smallest class count.
    pub imbalance_ratio: f64,
    /// Probability that an occurrence of a non-head class is attached to a
    /// head-class sample instead of getting a sample of its own.
    pub cooccurrence: f64,
    pub seed: u64,
    pub pattern_seed: u64,
    pub feature_shape: FeatureShape,
    pub planted_signal_strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            num_samples: 1000,
            imbalance_ratio: 100.0,
            cooccurrence: 0.3,
            seed: 0,
            pattern_seed: 0,
            feature_shape: FeatureShape::new(64, 16),
            planted_signal_strength: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes {} < 2", self.num_classes));
        }
        if self.num_samples < self.num_classes {
            return bad(format!(
                "num_samples {} < num_classes {}",
                self.num_samples, self.num_classes
            ));
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return bad(format!("imbalance_ratio {} must be >= 1", self.imbalance_ratio));
        }
        if !(0.0..=1.0).contains(&self.cooccurrence) {
            return bad(format!("cooccurrence {} outside [0, 1]", self.cooccurrence));
        }
        if !(self.planted_signal_strength >= 0.0 && self.planted_signal_strength.is_finite()) {
            return bad(format!(
                "planted_signal_strength {} must be >= 0",
                self.planted_signal_strength
            ));
        }
        if self.feature_shape.is_empty() {
            return bad(format!("empty feature shape {}", self.feature_shape));
        }
        Ok(())
    }

    /// Exponent `s` of the count decay `c_k ∝ (k + 1)^(-s)`; chosen so that
    /// the first and last class differ by exactly `imbalance_ratio`.
    pub fn zipf_exponent(&self) -> f64 {
        self.imbalance_ratio.ln() / (self.num_classes as f64).ln()
    }

    /// Per-class total counts and the number of each non-head class's
    /// occurrences that ride along on head-class samples.
    fn count_plan(&self) -> (Vec<usize>, Vec<usize>) {
        let c = self.num_classes;
        let s = self.zipf_exponent();
        let decay: Vec<f64> = (0..c).map(|k| ((k + 1) as f64).powf(-s)).collect();
        let plan = |scale: f64| -> (Vec<usize>, Vec<usize>, usize) {
            let counts: Vec<usize> = decay
                .iter()
                .map(|r| ((scale * r).round() as usize).max(1))
                .collect();
            let tail: usize = counts[1..].iter().sum();
            // head samples can host at most MAX_LABELS - 1 extra labels each
            let capacity = (MAX_LABELS - 1) * counts[0];
            let rate = if tail == 0 {
                0.0
            } else {
                self.cooccurrence.min(capacity as f64 / tail as f64)
            };
            let mut attached: Vec<usize> = counts
                .iter()
                .map(|&n| ((rate * n as f64).floor() as usize).min(n))
                .collect();
            attached[0] = 0;
            let samples = counts[0] + counts[1..].iter().zip(&attached[1..]).map(|(n, a)| n - a).sum::<usize>();
            (counts, attached, samples)
        };
        let target = self.num_samples;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while plan(hi).2 <= target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if plan(mid).2 <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mut counts, attached, samples) = plan(lo);
        // the step function may stop a few samples short; the head absorbs them
        counts[0] += target - samples;
        (counts, attached)
    }
}

/// Generates a deterministic long-tailed multi-label corpus with planted,
/// class-dependent time-frequency events.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<MultiLabelCorpus, CorpusError> {
    spec.validate()?;
    let c = spec.num_classes;
    let shape = spec.feature_shape;
    let (counts, attached) = spec.count_plan();

    let mut rng = rng::stream(spec.seed, "synth.labels", 0);
    let mut label_sets: Vec<Vec<ClassId>> = vec![vec![0]; counts[0]];
    // greedy by remaining capacity always succeeds because the total attached
    // count is within capacity and no class attaches more than counts[0] times
    let mut order: Vec<usize> = (1..c).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(attached[k]));
    for &k in &order {
        let mut hosts: Vec<(usize, u64)> = (0..counts[0])
            .filter(|&h| label_sets[h].len() < MAX_LABELS)
            .map(|h| (h, rng.random()))
            .collect();
        hosts.sort_by_key(|&(h, key)| (label_sets[h].len(), key));
        for &(h, _) in hosts.iter().take(attached[k]) {
            label_sets[h].push(k);
        }
    }
    for k in 1..c {
        for _ in 0..counts[k] - attached[k] {
            label_sets.push(vec![k]);
        }
    }
    label_sets.shuffle(&mut rng);

    let patterns = class_patterns(spec.pattern_seed, c, shape.freq_bins);
    let event_frames = (shape.time_frames / 4).max(1);
    let mut feature_rng = rng::stream(spec.seed, "synth.features", 0);
    let samples = label_sets
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let mut x: Vec<f32> = (0..shape.len())
                .map(|_| feature_rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            for &k in &labels {
                let onset = feature_rng.random_range(0..=shape.time_frames - event_frames);
                for t in onset..onset + event_frames {
                    let row = &mut x[t * shape.freq_bins..(t + 1) * shape.freq_bins];
                    for (v, p) in row.iter_mut().zip(&patterns[k]) {
                        *v += (spec.planted_signal_strength * p) as f32;
                    }
                }
            }
            Sample::new(format!("syn{i:06}"), x, labels)
        })
        .collect();
    let names = (0..c).map(|k| format!("class{k:03}")).collect();
    MultiLabelCorpus::new(names, shape, samples)
}

/// Unit-RMS random frequency profiles, one per class.
fn class_patterns(seed: u64, num_classes: usize, freq_bins: usize) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "synth.patterns", 0);
    (0..num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..freq_bins).map(|_| rng.sample(StandardNormal)).collect();
            let rms = (v.iter().map(|a| a * a).sum::<f64>() / freq_bins as f64).sqrt();
            v.into_iter().map(|a| a / rms.max(1e-12)).collect()
        })
        .collect()
}
