//! Balanced sampling with replacement, the mixup gate, per-draw mask
//! parameters, and coverage statistics.
//!
//! An epoch is fully pre-drawn into an [`EpochPlan`]; training only consumes
//! plans. The plan for `(seed, epoch)` is a pure function of those two values.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Beta;
use serde::{Deserialize, Serialize};

use crate::augment::MaskParams;
use crate::corpus::{ClassId, ClassTable, FeatureShape};
use crate::rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplerError {
    #[error("sample {sample} has zero weight (no labels or a label with zero count)")]
    ZeroWeight { sample: usize },
    #[error("class {class} appears in labels but has count 0")]
    ZeroCount { class: ClassId },
    #[error("class id {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: ClassId, num_classes: usize },
    #[error("invalid augmentation config: {0}")]
    Config(String),
    #[error("empty weight vector")]
    Empty,
    #[error("plan line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Per-sample sampling weights, `w_i = sum over k in y_i of 1 / c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights(Vec<f64>);

impl SamplingWeights {
    /// Wraps precomputed weights; all must be finite and positive.
    pub fn new(w: Vec<f64>) -> Result<Self, SamplerError> {
        if w.is_empty() {
            return Err(SamplerError::Empty);
        }
        if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SamplerError::ZeroWeight { sample: i });
        }
        Ok(Self(w))
    }

    /// Uniform weights over `n` samples.
    pub fn uniform(n: usize) -> Result<Self, SamplerError> {
        Self::new(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn make_weights(
    class_table: &ClassTable,
    labels: &[Vec<ClassId>],
) -> Result<SamplingWeights, SamplerError> {
    let c = class_table.counts.len();
    let mut w = vec![0.0; labels.len()];
    for (i, set) in labels.iter().enumerate() {
        for &k in set {
            let count = *class_table
                .counts
                .get(k)
                .ok_or(SamplerError::ClassOutOfRange { class: k, num_classes: c })?;
            if count == 0 {
                return Err(SamplerError::ZeroCount { class: k });
            }
            w[i] += 1.0 / count as f64;
        }
    }
    SamplingWeights::new(w)
}

/// Augmentation and sampling knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Longest frequency mask, in bins.
    pub freq_mask: usize,
    /// Longest time mask, in frames.
    pub time_mask: usize,
    pub mixup_rate: f64,
    /// Beta(alpha, alpha) parameter for the mixing coefficient.
    pub alpha: f64,
    /// Multinomial draws by weight when set; a reshuffled traversal otherwise.
    pub balanced: bool,
    pub mask_value: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            freq_mask: 48,
            time_mask: 192,
            mixup_rate: 0.5,
            alpha: 10.0,
            balanced: true,
            mask_value: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self, shape: FeatureShape) -> Result<(), SamplerError> {
        if self.freq_mask > shape.freq_bins {
            return Err(SamplerError::Config(format!(
                "freq_mask {} exceeds {} frequency bins",
                self.freq_mask, shape.freq_bins
            )));
        }
        if self.time_mask > shape.time_frames {
            return Err(SamplerError::Config(format!(
                "time_mask {} exceeds {} time frames",
                self.time_mask, shape.time_frames
            )));
        }
        if !(0.0..=1.0).contains(&self.mixup_rate) {
            return Err(SamplerError::Config(format!(
                "mixup_rate {} outside [0, 1]",
                self.mixup_rate
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SamplerError::Config(format!("alpha {} must be > 0", self.alpha)));
        }
        if !self.mask_value.is_finite() {
            return Err(SamplerError::Config("mask_value must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPartner {
    pub index: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub primary: usize,
    pub mixup: Option<MixPartner>,
    pub mask: MaskParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub draws: Vec<Draw>,
}

pub fn plan_epoch(
    weights: &SamplingWeights,
    config: &AugmentConfig,
    shape: FeatureShape,
    seed: u64,
    epoch: u64,
) -> Result<EpochPlan, SamplerError> {
    config.validate(shape)?;
    let n = weights.len();
    let mut rng = rng::stream(seed, "sampler.epoch", epoch);
    let primaries: Vec<usize> = if config.balanced {
        let dist = WeightedIndex::new(weights.as_slice())
            .map_err(|e| SamplerError::Config(e.to_string()))?;
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    };
    let beta = Beta::new(config.alpha, config.alpha)
        .map_err(|e| SamplerError::Config(e.to_string()))?;
    let draws = primaries
        .into_iter()
        .map(|primary| {
            let mixup = (rng.random::<f64>() < config.mixup_rate).then(|| MixPartner {
                index: rng.random_range(0..n),
                lambda: beta.sample(&mut rng),
            });
            let f = rng.random_range(0..=config.freq_mask);
            let f0 = rng.random_range(0..=shape.freq_bins - f);
            let t = rng.random_range(0..=config.time_mask);
            let t0 = rng.random_range(0..=shape.time_frames - t);
            Draw {
                primary,
                mixup,
                mask: MaskParams { f0, f, t0, t },
            }
        })
        .collect();
    Ok(EpochPlan { draws })
}

impl EpochPlan {
    /// One line per draw: `primary partner lambda f0 f t0 t`, tab-separated,
    /// with `-` for the partner and lambda of unmixed draws.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# primary\tpartner\tlambda\tf0\tf\tt0\tt\n");
        for d in &self.draws {
            let (j, lambda) = match d.mixup {
                Some(m) => (m.index.to_string(), format!("{:?}", m.lambda)),
                None => ("-".into(), "-".into()),
            };
            let m = d.mask;
            let _ = writeln!(out, "{}\t{j}\t{lambda}\t{}\t{}\t{}\t{}", d.primary, m.f0, m.f, m.t0, m.t);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SamplerError> {
        let mut draws = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| SamplerError::Parse { line: i + 1, reason };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, got {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
            let mixup = match (f[1], f[2]) {
                ("-", "-") => None,
                (j, l) => Some(MixPartner {
                    index: int(j)?,
                    lambda: l.parse().map_err(|e| bad(format!("{l:?}: {e}")))?,
                }),
            };
            draws.push(Draw {
                primary: int(f[0])?,
                mixup,
                mask: MaskParams {
                    f0: int(f[3])?,
                    f: int(f[4])?,
                    t0: int(f[5])?,
                    t: int(f[6])?,
                },
            });
        }
        Ok(Self { draws })
    }
}

/// Fraction of samples never drawn, per epoch, plus how often each class was
/// presented to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrace {
    pub unseen_fraction: Vec<f64>,
    /// Cumulative over all epochs; a sample drawn as primary or mixup partner
    /// contributes once per draw to each of its classes.
    pub class_frequency: Vec<u64>,
}

impl CoverageTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,unseen_fraction\n");
        for (e, u) in self.unseen_fraction.iter().enumerate() {
            let _ = writeln!(out, "{},{u:?}", e + 1);
        }
        out
    }
}

pub fn simulate_coverage(
    weights: &SamplingWeights,
    labels: &[Vec<ClassId>],
    num_classes: usize,
    config: &AugmentConfig,
    shape: FeatureShape,
    epochs: usize,
    seed: u64,
) -> Result<CoverageTrace, SamplerError> {
    if epochs == 0 {
        return Err(SamplerError::Config("epochs must be >= 1".into()));
    }
    let n = weights.len();
    let mut seen = vec![false; n];
    let mut unseen = n;
    let mut unseen_fraction = Vec::with_capacity(epochs);
    let mut class_frequency = vec![0u64; num_classes];
    let mut visit = |i: usize, seen: &mut Vec<bool>, unseen: &mut usize| {
        if !seen[i] {
            seen[i] = true;
            *unseen -= 1;
        }
        if let Some(set) = labels.get(i) {
            for &k in set {
                if let Some(c) = class_frequency.get_mut(k) {
                    *c += 1;
                }
            }
        }
    };
    for epoch in 1..=epochs {
        let plan = plan_epoch(weights, config, shape, seed, epoch as u64)?;
        for d in &plan.draws {
            visit(d.primary, &mut seen, &mut unseen);
            if let Some(m) = d.mixup {
                visit(m.index, &mut seen, &mut unseen);
            }
        }
        unseen_fraction.push(unseen as f64 / n as f64);
    }
    Ok(CoverageTrace {
        unseen_fraction,
        class_frequency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(counts: &[usize]) -> ClassTable {
        ClassTable {
            names: (0..counts.len()).map(|k| format!("c{k}")).collect(),
            counts: counts.to_vec(),
        }
    }

    const SHAPE: FeatureShape = FeatureShape::new(100, 20);

    fn cfg(balanced: bool, mixup_rate: f64) -> AugmentConfig {
        AugmentConfig {
            freq_mask: 8,
            time_mask: 30,
            mixup_rate,
            balanced,
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn weight_formula() {
        let w = make_weights(&table(&[4, 1]), &[vec![0, 1]]).unwrap();
        assert_eq!(w.as_slice(), &[1.25]);
    }

    #[test]
    fn uniform_counts_recover_uniform_weights() {
        let labels: Vec<Vec<usize>> = (0..12).map(|i| vec![i % 3]).collect();
        let w = make_weights(&table(&[4, 4, 4]), &labels).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn hand_corpus_matches_formula() {
        // classes A:3, B:2, C:4
        let labels = vec![vec![0], vec![0, 1], vec![1, 2], vec![2], vec![0, 2], vec![2]];
        let w = make_weights(&table(&[3, 2, 4]), &labels).unwrap();
        let expected = [
            1.0 / 3.0,
            1.0 / 3.0 + 0.5,
            0.5 + 0.25,
            0.25,
            1.0 / 3.0 + 0.25,
            0.25,
        ];
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_samples_are_rejected() {
        assert_eq!(
            make_weights(&table(&[1, 0]), &[vec![0], vec![1]]),
            Err(SamplerError::ZeroCount { class: 1 })
        );
        assert_eq!(
            make_weights(&table(&[1]), &[vec![0], vec![]]),
            Err(SamplerError::ZeroWeight { sample: 1 })
        );
    }

    #[test]
    fn closed_gate_means_no_mixup() {
        let w = SamplingWeights::uniform(500).unwrap();
        let plan = plan_epoch(&w, &cfg(true, 0.0), SHAPE, 1, 1).unwrap();
        assert!(plan.draws.iter().all(|d| d.mixup.is_none()));
    }

    #[test]
    fn traversal_is_a_permutation() {
        let w = SamplingWeights::new((1..=300).map(f64::from).collect()).unwrap();
        let plan = plan_epoch(&w, &cfg(false, 0.0), SHAPE, 5, 2).unwrap();
        let mut idx: Vec<usize> = plan.draws.iter().map(|d| d.primary).collect();
        idx.sort_unstable();
        assert_eq!(idx, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn plans_are_reproducible_per_epoch() {
        let w = SamplingWeights::uniform(50).unwrap();
        let a = plan_epoch(&w, &cfg(true, 0.5), SHAPE, 9, 3).unwrap();
        let b = plan_epoch(&w, &cfg(true, 0.5), SHAPE, 9, 3).unwrap();
        let c = plan_epoch(&w, &cfg(true, 0.5), SHAPE, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn plan_text_round_trip() {
        let w = SamplingWeights::uniform(40).unwrap();
        let plan = plan_epoch(&w, &cfg(true, 0.5), SHAPE, 2, 1).unwrap();
        assert_eq!(EpochPlan::from_text(&plan.to_text()).unwrap(), plan);
    }

    #[test]
    fn config_bounds_are_checked() {
        let w = SamplingWeights::uniform(4).unwrap();
        let mut c = cfg(true, 0.5);
        c.freq_mask = 21;
        assert!(matches!(plan_epoch(&w, &c, SHAPE, 0, 0), Err(SamplerError::Config(_))));
    }

    #[test]
    fn traversal_sees_everything_in_one_epoch() {
        let w = SamplingWeights::uniform(100).unwrap();
        let labels = vec![vec![0]; 100];
        let trace = simulate_coverage(&w, &labels, 1, &cfg(false, 0.5), SHAPE, 3, 0).unwrap();
        assert_eq!(trace.unseen_fraction[0], 0.0);
        assert_eq!(trace.to_csv().lines().count(), 4);
    }

    proptest! {
        #[test]
        fn weights_are_permutation_equivariant(
            labels in prop::collection::vec(prop::collection::btree_set(0usize..4, 1..4), 1..30),
            seed in any::<u64>(),
        ) {
            let labels: Vec<Vec<usize>> = labels.into_iter().map(|s| s.into_iter().collect()).collect();
            let mut counts = vec![0; 4];
            for s in &labels { for &k in s { counts[k] += 1; } }
            let t = table(&counts);
            let w = make_weights(&t, &labels).unwrap();
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.shuffle(&mut crate::rng::stream(seed, "test", 0));
            let permuted: Vec<Vec<usize>> = order.iter().map(|&i| labels[i].clone()).collect();
            let wp = make_weights(&t, &permuted).unwrap();
            for (pos, &i) in order.iter().enumerate() {
                prop_assert_eq!(wp.as_slice()[pos], w.as_slice()[i]);
            }
        }

        #[test]
        fn masks_stay_in_bounds(seed in any::<u64>(), time in 1usize..50, freq in 1usize..20) {
            let w = SamplingWeights::uniform(64).unwrap();
            let c = AugmentConfig { freq_mask: freq, time_mask: time, ..cfg(true, 0.5) };
            let shape = FeatureShape::new(time, freq);
            let plan = plan_epoch(&w, &c, shape, seed, 0).unwrap();
            for d in &plan.draws {
                prop_assert!(d.mask.fits(time, freq));
                prop_assert!(d.mask.f <= freq && d.mask.t <= time);
                if let Some(m) = d.mixup {
                    prop_assert!((0.0..=1.0).contains(&m.lambda));
                    prop_assert!(m.index < 64);
                }
            }
        }

        #[test]
        fn unseen_fraction_is_nonincreasing(seed in any::<u64>(), rate in 0.0f64..1.0) {
            let w = SamplingWeights::new((1..=200).map(|i| 1.0 / f64::from(i)).collect()).unwrap();
            let labels = vec![vec![0]; 200];
            let trace = simulate_coverage(&w, &labels, 1, &cfg(true, rate), SHAPE, 6, seed).unwrap();
            for pair in trace.unseen_fraction.windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
        }
    }
}
