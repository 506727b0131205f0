//! Time/frequency masking and mixup on feature matrices and label vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AugmentError {
    #[error("mask {params:?} exceeds a {time}x{freq} feature matrix")]
    MaskOutOfBounds {
        params: MaskParams,
        time: usize,
        freq: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mixing coefficient {0} outside [0, 1]")]
    Lambda(f64),
}

/// Row-major `time x freq` feature matrix in 64-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub time: usize,
    pub freq: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(time: usize, freq: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), time * freq, "feature data does not match {time}x{freq}");
        Self { time, freq, data }
    }

    pub fn filled(time: usize, freq: usize, value: f64) -> Self {
        Self::new(time, freq, vec![value; time * freq])
    }

    pub fn from_f32(time: usize, freq: usize, values: &[f32]) -> Self {
        Self::new(time, freq, values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.freq + f]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.freq..(t + 1) * self.freq]
    }
}

/// Frequency band `[f0, f0 + f)` and time band `[t0, t0 + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskParams {
    pub f0: usize,
    pub f: usize,
    pub t0: usize,
    pub t: usize,
}

impl MaskParams {
    pub fn fits(&self, time: usize, freq: usize) -> bool {
        self.f0 + self.f <= freq && self.t0 + self.t <= time
    }
}

/// Sets every cell in the frequency band (across all frames) and every cell in
/// the time band (across all bins) to `mask_value`. Cells outside both bands
/// are left untouched.
pub fn apply_mask(
    x: &FeatureMatrix,
    p: MaskParams,
    mask_value: f64,
) -> Result<FeatureMatrix, AugmentError> {
    let mut out = x.clone();
    apply_mask_in_place(&mut out, p, mask_value)?;
    Ok(out)
}

pub fn apply_mask_in_place(
    x: &mut FeatureMatrix,
    p: MaskParams,
    mask_value: f64,
) -> Result<(), AugmentError> {
    if !p.fits(x.time, x.freq) {
        return Err(AugmentError::MaskOutOfBounds {
            params: p,
            time: x.time,
            freq: x.freq,
        });
    }
    let freq = x.freq;
    for (t, frame) in x.data.chunks_exact_mut(freq).enumerate() {
        if (p.t0..p.t0 + p.t).contains(&t) {
            frame.fill(mask_value);
        } else {
            frame[p.f0..p.f0 + p.f].fill(mask_value);
        }
    }
    Ok(())
}

/// `lambda * a + (1 - lambda) * b`, elementwise. Also the mixup path for
/// corpora stored as 1-D signals.
pub fn mix_arrays(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>, AugmentError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(AugmentError::Lambda(lambda));
    }
    if a.len() != b.len() {
        return Err(AugmentError::ShapeMismatch(format!(
            "{} vs {} values",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect())
}

/// Convex combination of two samples and their (possibly soft) label vectors.
pub fn mixup(
    x_i: &FeatureMatrix,
    y_i: &[f64],
    x_j: &FeatureMatrix,
    y_j: &[f64],
    lambda: f64,
) -> Result<(FeatureMatrix, Vec<f64>), AugmentError> {
    if (x_i.time, x_i.freq) != (x_j.time, x_j.freq) {
        return Err(AugmentError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x_i.time, x_i.freq, x_j.time, x_j.freq
        )));
    }
    let data = mix_arrays(&x_i.data, &x_j.data, lambda)?;
    let y = mix_arrays(y_i, y_j, lambda)?;
    Ok((FeatureMatrix::new(x_i.time, x_i.freq, data), y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(time: usize, freq: usize) -> FeatureMatrix {
        FeatureMatrix::new(time, freq, (0..time * freq).map(|v| v as f64 + 0.5).collect())
    }

    #[test]
    fn empty_mask_is_identity() {
        let x = ramp(5, 3);
        let p = MaskParams { f0: 2, f: 0, t0: 4, t: 0 };
        assert_eq!(apply_mask(&x, p, 0.0).unwrap(), x);
    }

    #[test]
    fn full_mask_saturates() {
        let x = ramp(5, 3);
        let p = MaskParams { f0: 0, f: 3, t0: 0, t: 5 };
        assert_eq!(apply_mask(&x, p, -1.0).unwrap(), FeatureMatrix::filled(5, 3, -1.0));
    }

    #[test]
    fn masked_cells_are_the_union_of_both_bands() {
        let x = FeatureMatrix::filled(4, 4, 1.0);
        let p = MaskParams { f0: 1, f: 2, t0: 0, t: 1 };
        let out = apply_mask(&x, p, 0.0).unwrap();
        // enumerate cells by the union rule
        let mut expected = 0;
        for t in 0..4 {
            for f in 0..4 {
                let masked = (1..3).contains(&f) || t == 0;
                expected += usize::from(masked);
                assert_eq!(out.get(t, f), if masked { 0.0 } else { 1.0 });
            }
        }
        assert_eq!(expected, 10);
        assert_eq!(out.data.iter().filter(|&&v| v == 0.0).count(), 10);
    }

    #[test]
    fn mask_bounds_are_checked() {
        let x = ramp(4, 4);
        let p = MaskParams { f0: 3, f: 2, t0: 0, t: 0 };
        assert!(matches!(apply_mask(&x, p, 0.0), Err(AugmentError::MaskOutOfBounds { .. })));
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let a = FeatureMatrix::filled(2, 2, 2.0);
        let b = FeatureMatrix::filled(2, 2, 0.0);
        let (x, y) = mixup(&a, &[1.0, 0.0], &b, &[0.0, 1.0], 1.0).unwrap();
        assert_eq!((x, y), (a.clone(), vec![1.0, 0.0]));
        let (x, y) = mixup(&a, &[1.0, 0.0], &b, &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(x, FeatureMatrix::filled(2, 2, 1.0));
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn mixup_coordinatewise_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "test", 0);
        let a: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (x, _) = mixup(
            &FeatureMatrix::new(6, 10, a.clone()),
            &[1.0],
            &FeatureMatrix::new(6, 10, b.clone()),
            &[0.0],
            0.3,
        )
        .unwrap();
        for i in 0..60 {
            assert!((x.data[i] - (0.3 * a[i] + 0.7 * b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn mixup_rejects_mismatch_and_bad_lambda() {
        let a = FeatureMatrix::filled(2, 2, 1.0);
        let b = FeatureMatrix::filled(2, 3, 1.0);
        assert!(matches!(mixup(&a, &[1.0], &b, &[1.0], 0.5), Err(AugmentError::ShapeMismatch(_))));
        assert_eq!(mix_arrays(&[1.0], &[1.0], 1.5), Err(AugmentError::Lambda(1.5)));
    }

    fn matrix_and_mask() -> impl Strategy<Value = (FeatureMatrix, MaskParams)> {
        (1usize..8, 1usize..8).prop_flat_map(|(time, freq)| {
            (
                prop::collection::vec(-10.0f64..10.0, time * freq),
                0..=freq,
                0..=time,
            )
                .prop_flat_map(move |(data, f, t)| {
                    (Just(data), Just(f), 0..=freq - f, Just(t), 0..=time - t)
                })
                .prop_map(move |(data, f, f0, t, t0)| {
                    (FeatureMatrix::new(time, freq, data), MaskParams { f0, f, t0, t })
                })
        })
    }

    proptest! {
        #[test]
        fn masking_is_idempotent((x, p) in matrix_and_mask(), v in -1.0f64..1.0) {
            let once = apply_mask(&x, p, v).unwrap();
            prop_assert_eq!(apply_mask(&once, p, v).unwrap(), once);
        }

        #[test]
        fn mixup_is_symmetric_under_lambda_swap(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            ya in prop::collection::vec(prop::bool::ANY, 3),
            yb in prop::collection::vec(prop::bool::ANY, 3),
            lambda in 0.0f64..=1.0,
        ) {
            let ya: Vec<f64> = ya.iter().map(|&v| f64::from(u8::from(v))).collect();
            let yb: Vec<f64> = yb.iter().map(|&v| f64::from(u8::from(v))).collect();
            let xa = FeatureMatrix::new(2, 3, a);
            let xb = FeatureMatrix::new(2, 3, b);
            let (x1, y1) = mixup(&xa, &ya, &xb, &yb, lambda).unwrap();
            let (x2, y2) = mixup(&xb, &yb, &xa, &ya, 1.0 - lambda).unwrap();
            for (u, v) in x1.data.iter().zip(&x2.data).chain(y1.iter().zip(&y2)) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
            let bound: f64 = ya.iter().sum::<f64>() + yb.iter().sum::<f64>();
            prop_assert!(y1.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(y1.iter().sum::<f64>() <= bound + 1e-12);
        }
    }
}
