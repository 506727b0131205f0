use psla::corpus::{count_classes, generate_synthetic};
use psla::SynthSpec;

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_classes: 20,
        num_samples: 5000,
        imbalance_ratio: 500.0,
        seed,
        ..SynthSpec::default()
    }
}

/// Least-squares slope of ln(count) against ln(rank).
fn fitted_exponent(mut counts: Vec<usize>) -> f64 {
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (((i + 1) as f64).ln(), (c as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

#[test]
fn zipf_exponent_recovered_by_regression() {
    let s = spec(3);
    let c = generate_synthetic(&s).unwrap();
    let fitted = fitted_exponent(c.class_table().counts.clone());
    let target = s.zipf_exponent();
    assert!(
        (fitted - target).abs() <= 0.1 * target,
        "fitted {fitted:.3} vs configured {target:.3}"
    );
}

#[test]
fn stored_counts_match_independent_tally() {
    let c = generate_synthetic(&spec(7)).unwrap();
    let mut tally = vec![0usize; c.num_classes()];
    for s in c.samples() {
        for &k in &s.labels {
            tally[k] += 1;
        }
    }
    assert_eq!(c.class_table().counts, tally);
    assert_eq!(count_classes(&c).counts, tally);
    let bits: usize = c.samples().iter().map(|s| s.labels.len()).sum();
    assert_eq!(tally.iter().sum::<usize>(), bits);
}

#[test]
fn imbalance_ratio_and_label_cap() {
    let c = generate_synthetic(&spec(3)).unwrap();
    let counts = &c.class_table().counts;
    let ratio = *counts.iter().max().unwrap() as f64 / *counts.iter().min().unwrap() as f64;
    assert!((ratio / 500.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
    assert!(c.samples().iter().all(|s| (1..=5).contains(&s.labels.len())));
}
