use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ExperimentRecord, GsaError};
use crate::metrics::Feature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub feature: String,
    pub target: String,
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    /// Two-sided p-values from the t approximation with `n - 2` degrees of freedom.
    pub pearson_p: f64,
    pub spearman_p: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Product-moment correlation. `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

fn p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Pearson and Spearman between two named series.
pub fn correlate_series(x: &[f64], y: &[f64], x_name: &str, y_name: &str) -> Result<Correlation, GsaError> {
    if x.len() != y.len() {
        return Err(GsaError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(GsaError::InsufficientRecords { needed: 3, got: x.len() });
    }
    let pearson_r = pearson(x, y).ok_or_else(|| {
        let name = if x.iter().all(|v| *v == x[0]) { x_name } else { y_name };
        GsaError::Degenerate(name.to_string())
    })?;
    let spearman_r = spearman(x, y).expect("non-constant series have non-constant ranks");
    Ok(Correlation {
        feature: x_name.to_string(),
        target: y_name.to_string(),
        n: x.len(),
        pearson: pearson_r,
        spearman: spearman_r,
        pearson_p: p_value(pearson_r, x.len()),
        spearman_p: p_value(spearman_r, x.len()),
    })
}

/// Correlation of one feature with F1 across records.
pub fn correlate(records: &[ExperimentRecord], feature: Feature) -> Result<Correlation, GsaError> {
    let x: Vec<f64> = records.iter().map(|r| r.features.get(feature)).collect();
    let y: Vec<f64> = records.iter().map(|r| r.f1).collect();
    correlate_series(&x, &y, feature.name(), "f1")
}

/// One row per feature; constant features are reported as errors in place.
pub fn correlate_all(records: &[ExperimentRecord]) -> Vec<(Feature, Result<Correlation, GsaError>)> {
    Feature::ALL.into_iter().map(|f| (f, correlate(records, f))).collect()
}
