#![allow(dead_code)]

use psla::experiment::ExperimentConfig;
use psla::labelfix::TeacherScores;
use psla::model::Architecture;
use psla::ontology::Ontology;
use psla::{FeatureShape, Matrix, SynthSpec};
use rand::Rng;

/// Brute-force AP: walk every positive and count how many samples sit at or
/// above it in the stable descending order.
pub fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let rank_of = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i))
            .count()
    };
    let positives: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut total = 0.0;
    for &i in &positives {
        let r = rank_of(i);
        let hits = positives
            .iter()
            .filter(|&&j| rank_of(j) <= r)
            .count();
        total += hits as f64 / r as f64;
    }
    total / positives.len() as f64
}

/// Exhaustive pair counting, as (wins + ties / 2) / (P * Q) with the
/// numerator kept in halves so the comparison can be exact.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut halves = 0u64;
    let (mut p, mut q) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            q += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                halves += 2;
            } else if scores[i] == scores[j] {
                halves += 1;
            }
        }
    }
    halves as f64 / (2 * p * q) as f64
}

/// Eight classes: parents 0 and 1, children 2..=4 under 0 and 5..=7 under 1.
pub fn two_level_ontology() -> Ontology {
    Ontology::from_edges(8, [(0, 2), (0, 3), (0, 4), (1, 5), (1, 6), (1, 7)]).unwrap()
}

pub struct PlantedBenchmark {
    pub truth: Vec<Vec<usize>>,
    pub corrupted: Vec<Vec<usize>>,
    pub deleted: usize,
    pub scores: TeacherScores,
}

/// 200 samples, each holding one or two parent/child pairs. A third of the
/// samples lose a child label, another third a parent label. The teacher
/// sees the truth through +-0.05 uniform noise.
pub fn planted_benchmark(seed: u64) -> PlantedBenchmark {
    let mut rng = psla::rng::stream(seed, "planted", 0);
    let n = 200;
    let mut truth = Vec::new();
    let mut corrupted = Vec::new();
    let mut deleted = 0;
    for i in 0..n {
        let parent = rng.random_range(0..2usize);
        let child = 2 + 3 * parent + rng.random_range(0..3usize);
        let mut t = vec![parent, child];
        if rng.random_bool(0.3) {
            let other = 1 - parent;
            t.push(other);
            t.push(2 + 3 * other + rng.random_range(0..3usize));
        }
        t.sort_unstable();
        let mut c = t.clone();
        match i % 3 {
            0 => c.retain(|&k| k != child),
            1 => c.retain(|&k| k != parent),
            _ => {}
        }
        deleted += t.len() - c.len();
        truth.push(t);
        corrupted.push(c);
    }
    let mut m = Matrix::zeros(n, 8);
    for (i, t) in truth.iter().enumerate() {
        for k in 0..8 {
            let base = if t.contains(&k) { 0.95 } else { 0.0 };
            m.set(i, k, base + rng.random_range(0.0..0.05));
        }
    }
    PlantedBenchmark {
        truth,
        corrupted,
        deleted,
        scores: TeacherScores::new(m).unwrap(),
    }
}

/// A few-second training setup: small synthetic corpus, tiny attention model.
pub fn quick_config(dir: &std::path::Path, arch: Architecture, epochs: usize) -> ExperimentConfig {
    let spec = SynthSpec {
        num_classes: 5,
        num_samples: 200,
        imbalance_ratio: 10.0,
        feature_shape: FeatureShape::new(16, 8),
        planted_signal_strength: 2.0,
        ..SynthSpec::default()
    };
    let mut c = ExperimentConfig::synthetic(spec, dir);
    c.model.architecture = arch;
    c.model.time_strides = [4, 2];
    c.model.hidden_dim = 8;
    c.model.embed_dim = 8;
    c.model.num_heads = 2;
    c.augment.freq_mask = 2;
    c.augment.time_mask = 4;
    c.train.epochs = epochs;
    c.train.batch_size = 20;
    c.train.schedule.warmup_iters = 10;
    c.train.schedule.base_lr = 1e-2;
    c.train.schedule.decay_start_epoch = 2;
    c.train.schedule.decay_period = 1;
    c
}
