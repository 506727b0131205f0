use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::corpus::FeatureShape;
use crate::rng;

fn small(arch: Architecture, heads: usize) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        num_classes: 3,
        feature_shape: FeatureShape::new(8, 4),
        time_strides: [2, 2],
        hidden_dim: 5,
        embed_dim: 4,
        num_heads: heads,
    }
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test.input", 0);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn perturbed(model: &Model, seed: u64, scale: f64) -> ParameterVector {
    let mut p = model.init(&mut rng::stream(seed, "test.init", 0));
    let mut r = rng::stream(seed, "test.perturb", 0);
    for v in p.values_mut() {
        *v += scale * r.sample::<f64, _>(StandardNormal);
    }
    p
}

#[test]
fn manifests_partition_the_vector() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.encoded_frames(), 33);
    let m = Model::new(cfg).unwrap();
    let p = m.init(&mut rng::stream(0, "t", 0));
    assert_eq!(p.len(), m.num_params());
    assert!(p.tensor("head3.classifier.bias").is_some());
}

#[test]
fn bad_configs_are_rejected() {
    let mut cfg = small(Architecture::Attention, 2);
    cfg.time_strides = [3, 2];
    assert!(matches!(Model::new(cfg), Err(ModelError::Config(_))));
    let mut cfg = small(Architecture::Attention, 2);
    cfg.num_heads = 0;
    assert!(Model::new(cfg).is_err());
}

#[test]
fn input_shape_is_checked() {
    let m = Model::new(small(Architecture::Attention, 2)).unwrap();
    let p = m.init(&mut rng::stream(0, "t", 0));
    assert!(matches!(m.forward(&p, &[0.0; 5]), Err(ModelError::Shape(_))));
    let other = Model::new(small(Architecture::Linear, 1)).unwrap();
    let q = other.init(&mut rng::stream(0, "t", 0));
    assert!(matches!(m.forward(&q, &[0.0; 32]), Err(ModelError::Manifest(_))));
}

#[test]
fn uniform_attention_is_the_temporal_mean() {
    let m = Model::new(small(Architecture::Attention, 1)).unwrap();
    let mut p = perturbed(&m, 1, 0.3);
    // zero attention weights and biases: every frame gets the same logit
    let off = offset_of(&p, "head0.attention.weight");
    let len = 3 * 4 + 3;
    p.values_mut()[off..off + len].fill(0.0);
    let x = random_input(32, 2);
    let pass = m.forward(&p, &x).unwrap();
    for a in &pass.attention[0] {
        assert!((a - 0.5).abs() < 1e-15);
    }
    // recompute the classification branch mean independently
    let w = p.tensor("head0.classifier.weight").unwrap();
    let b = p.tensor("head0.classifier.bias").unwrap();
    let z = encode_reference(&p, &x);
    for k in 0..3 {
        let mean: f64 = z
            .iter()
            .map(|zt| b[k] + (0..4).map(|j| w[k * 4 + j] * zt[j]).sum::<f64>())
            .sum::<f64>()
            / z.len() as f64;
        assert!((pass.logits[k] - mean).abs() < 1e-12);
    }
}

fn offset_of(p: &ParameterVector, name: &str) -> usize {
    let mut off = 0;
    for s in p.manifest() {
        if s.name == name {
            return off;
        }
        off += s.size();
    }
    panic!("no tensor {name}");
}

/// Straightforward re-implementation of the encoder for the `small` config.
fn encode_reference(p: &ParameterVector, x: &[f64]) -> Vec<Vec<f64>> {
    let w1 = p.tensor("encoder.stage1.weight").unwrap();
    let b1 = p.tensor("encoder.stage1.bias").unwrap();
    let w2 = p.tensor("encoder.stage2.weight").unwrap();
    let b2 = p.tensor("encoder.stage2.bias").unwrap();
    let h1: Vec<Vec<f64>> = (0..4)
        .map(|blk| {
            let input = &x[blk * 8..(blk + 1) * 8];
            (0..5)
                .map(|o| (b1[o] + (0..8).map(|i| w1[o * 8 + i] * input[i]).sum::<f64>()).tanh())
                .collect()
        })
        .collect();
    (0..2)
        .map(|j| {
            let input: Vec<f64> = h1[2 * j].iter().chain(&h1[2 * j + 1]).copied().collect();
            (0..4)
                .map(|o| (b2[o] + (0..10).map(|i| w2[o * 10 + i] * input[i]).sum::<f64>()).tanh())
                .collect()
        })
        .collect()
}

#[test]
fn single_head_gate_is_identity() {
    let m = Model::new(small(Architecture::Attention, 1)).unwrap();
    let p = perturbed(&m, 3, 0.5);
    let pass = m.forward(&p, &random_input(32, 4)).unwrap();
    assert_eq!(pass.logits, pass.heads_for_test()[0]);
}

#[test]
fn attention_weights_sum_to_one() {
    let m = Model::new(small(Architecture::Attention, 3)).unwrap();
    for seed in 0..20 {
        let p = perturbed(&m, seed, 1.0);
        let pass = m.forward(&p, &random_input(32, seed + 100)).unwrap();
        let tz = m.config().encoded_frames();
        for alpha in &pass.attention {
            for k in 0..3 {
                let s: f64 = (0..tz).map(|t| alpha[t * 3 + k]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        assert!(pass.probs.iter().all(|&q| q > 0.0 && q < 1.0));
    }
}

#[test]
fn linear_variant_ignores_frame_order() {
    let m = Model::new(small(Architecture::Linear, 1)).unwrap();
    let p = perturbed(&m, 5, 0.5);
    let x = random_input(32, 6);
    let mut rev = Vec::new();
    for t in (0..8).rev() {
        rev.extend_from_slice(&x[t * 4..(t + 1) * 4]);
    }
    let a = m.forward(&p, &x).unwrap().logits;
    let b = m.forward(&p, &rev).unwrap().logits;
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn bce_reference_values() {
    assert!((loss(&[0.5, 0.5, 0.5], &[1.0, 0.0, 0.3]) - std::f64::consts::LN_2).abs() < 1e-15);
    let floor = -(1.0 - LOSS_EPS).ln();
    assert!(loss(&[1.0, 0.0], &[1.0, 0.0]) <= floor + 1e-18);
}

#[test]
fn bce_matches_scalar_oracle() {
    let mut r = rng::stream(8, "test.bce", 0);
    for _ in 0..50 {
        let p: Vec<f64> = (0..7).map(|_| r.random_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..7).map(|_| r.random_range(0.0..1.0)).collect();
        let mut oracle = 0.0;
        for i in 0..7 {
            oracle += -(y[i] * p[i].ln()) - (1.0 - y[i]) * (1.0 - p[i]).ln();
        }
        oracle /= 7.0;
        assert!((loss(&p, &y) - oracle).abs() < 1e-10);
        assert!(loss(&p, &y) >= 0.0);
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    let m = Model::new(small(Architecture::Linear, 1)).unwrap();
    for seed in 0..5 {
        let p = perturbed(&m, seed, 0.5);
        let y = [1.0, 0.0, 0.4];
        let err = grad_check(&m, &p, &random_input(32, seed + 10), &y).unwrap();
        assert!(err < 1e-7, "seed {seed}: {err}");
    }
}

#[test]
fn attention_gradients_match_finite_differences() {
    let m = Model::new(small(Architecture::Attention, 3)).unwrap();
    for seed in 0..5 {
        let p = perturbed(&m, seed, 0.5);
        let y = [1.0, 0.0, 0.4];
        let err = grad_check(&m, &p, &random_input(32, seed + 10), &y).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn bias_gradient_at_zero_is_p_minus_y() {
    let m = Model::new(small(Architecture::Linear, 1)).unwrap();
    let p = ParameterVector::zeros(m.manifest());
    let mut grad = vec![0.0; m.num_params()];
    m.loss_and_grad(&p, &[0.0; 32], &[0.0; 3], &mut grad).unwrap();
    let bias = &grad[grad.len() - 3..];
    for g in bias {
        // sigmoid(0) - 0, averaged over 3 classes
        assert!((g - 0.5 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn external_init_round_trip_and_partial_load() {
    let dir = tempfile::tempdir().unwrap();
    let m = Model::new(small(Architecture::Attention, 2)).unwrap();
    let p = perturbed(&m, 1, 0.1);
    let path = dir.path().join("own.ckpt");
    p.save(&path).unwrap();
    let (q, report) = load_external_init(&path, &m, &mut rng::stream(0, "x", 0)).unwrap();
    assert_eq!(q, p);
    assert!(report.reinitialized.is_empty() && report.missing.is_empty());

    // same backbone, 5 output classes and an extra tensor
    let mut other_cfg = small(Architecture::Attention, 2);
    other_cfg.num_classes = 5;
    let other = Model::new(other_cfg).unwrap();
    let op = perturbed(&other, 2, 0.1);
    let mut manifest = op.manifest().to_vec();
    manifest.push(TensorSpec::new("projection.weight", &[2, 2]));
    let mut values = op.values().to_vec();
    values.extend([1.0; 4]);
    let path = dir.path().join("foreign.ckpt");
    ParameterVector::new(manifest, values).unwrap().save(&path).unwrap();
    let (q, report) = load_external_init(&path, &m, &mut rng::stream(0, "x", 0)).unwrap();
    assert!(report.loaded.contains(&"encoder.stage1.weight".to_string()));
    assert!(report.reinitialized.contains(&"head0.classifier.weight".to_string()));
    assert_eq!(report.ignored, vec!["projection.weight".to_string()]);
    assert_eq!(q.tensor("encoder.stage2.weight"), op.tensor("encoder.stage2.weight"));

    let path = dir.path().join("unrelated.ckpt");
    ParameterVector::zeros(vec![TensorSpec::new("foo", &[3])]).save(&path).unwrap();
    assert!(matches!(
        load_external_init(&path, &m, &mut rng::stream(0, "x", 0)),
        Err(ModelError::Incompatible { .. })
    ));
}
