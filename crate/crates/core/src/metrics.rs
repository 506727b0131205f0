//! Ranking metrics for multi-label tagging: average precision, ROC-AUC,
//! d-prime, and per-class report assembly.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::matrix::{LabelMatrix, Matrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("length mismatch: {0} scores vs {1} labels")]
    Length(usize, usize),
    #[error("auc {0} outside the open interval (0, 1)")]
    AucRange(f64),
    #[error("dimension mismatch: predictions {pred:?} vs labels {labels:?}")]
    Dimensions {
        pred: (usize, usize),
        labels: (usize, usize),
    },
    #[error("no class has a positive example")]
    AllDegenerate,
    #[error("need at least 3 classes, got {0}")]
    TooFew(usize),
    #[error("non-finite score")]
    NonFinite,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

/// Non-interpolated average precision. Ties keep input order after a stable
/// descending sort.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricsError::Undefined("no positive labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability a
/// random positive outscores a random negative, ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::Undefined("need both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // sweep tie groups in ascending order; numerator is a multiple of 1/2
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group_pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        let group_neg = end - start - group_pos;
        wins += (group_pos * neg_below) as f64 + 0.5 * (group_pos * group_neg) as f64;
        neg_below += group_neg;
        start = end;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Sensitivity index `sqrt(2) * inverse_normal_cdf(auc)`.
pub fn d_prime(auc: f64) -> Result<f64, MetricsError> {
    if !(auc > 0.0 && auc < 1.0) {
        return Err(MetricsError::AucRange(auc));
    }
    Ok(std::f64::consts::SQRT_2 * inverse_normal_cdf(auc))
}

/// Standard normal quantile by Wichura's AS 241 (PPND16) rational
/// approximations; relative error around 1e-16 on (0, 1).
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
            + 67265.770_927_008_700)
            * r
            + 45921.953_931_549_871)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5226.495_278_852_545_5 + 28729.085_735_721_942) * r
            + 39307.895_800_092_710)
            * r
            + 21213.794_301_586_595)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414_1e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_61)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_344_9e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_07)
            * r
            + 0.689_767_334_985_100_0)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_81)
            * r
            + 0.599_832_206_555_887_94)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for classes without positives in the evaluated split.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub mean_auc: Option<f64>,
    /// Derived from `mean_auc`; `None` unless it lies strictly inside (0, 1).
    pub d_prime: Option<f64>,
    pub num_eval: usize,
    pub positives: Vec<usize>,
    pub excluded_classes: usize,
}

pub fn evaluate(predictions: &Matrix, labels: &LabelMatrix) -> Result<EvalReport, MetricsError> {
    if predictions.shape() != (labels.rows(), labels.cols()) {
        return Err(MetricsError::Dimensions {
            pred: predictions.shape(),
            labels: (labels.rows(), labels.cols()),
        });
    }
    let c = labels.cols();
    let mut per_class_ap = Vec::with_capacity(c);
    let mut per_class_auc = Vec::with_capacity(c);
    let mut positives = Vec::with_capacity(c);
    for k in 0..c {
        let scores = predictions.column(k);
        let truth = labels.column(k);
        positives.push(truth.iter().filter(|&&b| b).count());
        per_class_ap.push(average_precision(&scores, &truth).ok());
        per_class_auc.push(roc_auc(&scores, &truth).ok());
    }
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricsError::AllDegenerate);
    }
    let excluded_classes = c - defined.len();
    if excluded_classes > 0 {
        log::info!("{excluded_classes} of {c} classes have no positives and are excluded from mAP");
    }
    let map = defined.iter().sum::<f64>() / defined.len() as f64;
    let aucs: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let mean_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    let d_prime = mean_auc.and_then(|a| d_prime(a).ok());
    Ok(EvalReport {
        per_class_ap,
        map,
        per_class_auc,
        mean_auc,
        d_prime,
        num_eval: labels.rows(),
        positives,
        excluded_classes,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `class,ap,auc,count`, one row per class; undefined metrics are empty.
    pub fn class_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("class,ap,auc,count\n");
        for k in 0..self.per_class_ap.len() {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            let name = class_names.get(k).map_or_else(|| k.to_string(), Clone::clone);
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                fmt(self.per_class_ap[k]),
                fmt(self.per_class_auc[k]),
                self.positives[k]
            );
        }
        out
    }
}

/// Mean mAP over the last `k` reports (all of them if fewer).
pub fn last_k_mean_map(reports: &[EvalReport], k: usize) -> Option<f64> {
    let tail = &reports[reports.len().saturating_sub(k.max(1))..];
    (!tail.is_empty()).then(|| tail.iter().map(|r| r.map).sum::<f64>() / tail.len() as f64)
}

/// Pearson correlation between per-class AP and a per-class covariate.
pub fn correlate(per_class_ap: &[f64], covariate: &[f64]) -> Result<f64, MetricsError> {
    if per_class_ap.len() != covariate.len() {
        return Err(MetricsError::Length(per_class_ap.len(), covariate.len()));
    }
    let n = per_class_ap.len();
    if n < 3 {
        return Err(MetricsError::TooFew(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(per_class_ap), mean(covariate));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in per_class_ap.iter().zip(covariate) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::Undefined("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
