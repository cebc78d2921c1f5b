//! Attention spectrum analysis.
//!
//! A sharp attention row (mass concentrated on a few keys) has a flat power
//! spectrum with plenty of high-frequency energy; a blunt, near-uniform row
//! has almost all of its power at DC. The score is the power-weighted mean
//! frequency index of the spectrum:
//!
//! ```text
//! ASA = sum_k k * |F_k|^2 / sum_k |F_k|^2
//! ```
//!
//! so a uniform row scores exactly 0 and a one-hot row of length `L` scores
//! the mean of the one-sided bin indices `0..=L/2`.

mod density;
mod format;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use density::{asa_vs_density, DensityAsaRow, DensityAsaTable, SubsetAttention};
pub use format::{read_attention, read_attention_file, write_attention, write_attention_file, ATN1_MAGIC, ATN1_VERSION};

/// Allowed deviation of a softmax row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum AsaError {
    #[error("sequence length {0} is below 2")]
    TooShort(usize),
    #[error("expected {expected} weights for {layers}x{heads}x{len}x{len}, got {got}")]
    Shape {
        layers: usize,
        heads: usize,
        len: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}, head {head}, row {row}: {message}")]
    Row {
        layer: usize,
        head: usize,
        row: usize,
        message: String,
    },
    #[error("byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("no tensors for subset {0}")]
    NoTensors(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provenance of one attention tensor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TensorMeta {
    #[serde(default)]
    pub corpus_id: String,
    #[serde(default)]
    pub sentence_id: String,
    #[serde(default)]
    pub model_name: String,
    /// Anything else the exporter recorded (checkpoint path, layer selection).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// `layers x heads x L x L` attention weights, rows are softmax distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    seq_len: usize,
    weights: Vec<f32>,
    pub meta: TensorMeta,
}

impl AttentionTensor {
    /// Validates shape, finiteness, non-negativity and row sums.
    pub fn new(layers: usize, heads: usize, seq_len: usize, weights: Vec<f32>, meta: TensorMeta) -> Result<Self, AsaError> {
        if seq_len < 2 {
            return Err(AsaError::TooShort(seq_len));
        }
        let expected = layers * heads * seq_len * seq_len;
        if layers == 0 || heads == 0 || weights.len() != expected {
            return Err(AsaError::Shape {
                layers,
                heads,
                len: seq_len,
                expected,
                got: weights.len(),
            });
        }
        let tensor = AttentionTensor {
            layers,
            heads,
            seq_len,
            weights,
            meta,
        };
        tensor.validate()?;
        Ok(tensor)
    }

    fn validate(&self) -> Result<(), AsaError> {
        for layer in 0..self.layers {
            for head in 0..self.heads {
                for row in 0..self.seq_len {
                    let values = self.row(layer, head, row);
                    let fail = |message: String| AsaError::Row { layer, head, row, message };
                    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                        return Err(fail(format!("non-finite weight {v}")));
                    }
                    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
                        return Err(fail(format!("negative weight {v}")));
                    }
                    let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(fail(format!("row sums to {sum}, expected 1")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    fn matrix(&self, layer: usize, head: usize) -> &[f32] {
        let size = self.seq_len * self.seq_len;
        let start = (layer * self.heads + head) * size;
        &self.weights[start..start + size]
    }

    pub fn row(&self, layer: usize, head: usize, row: usize) -> &[f32] {
        &self.matrix(layer, head)[row * self.seq_len..(row + 1) * self.seq_len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    /// 1-D transform of every attention row.
    #[default]
    RowWise1d,
    /// 2-D transform of every `L x L` matrix, radial bin as frequency index.
    Full2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyWeight {
    /// `k`
    #[default]
    BinIndex,
    /// `k / floor(L/2)`, so scores are comparable across lengths.
    NormalizedFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    MeanOverRowsHeadsLayers,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AsaConfig {
    pub mode: SpectrumMode,
    pub weight: FrequencyWeight,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsaReport {
    pub asa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<f64>>,
}

/// Power-weighted mean frequency of a power spectrum indexed by `weights`.
fn weighted_ratio(power: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (w, p) in power {
        num += w * p;
        den += p;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn weight_scale(cfg: &AsaConfig, len: usize) -> f64 {
    match cfg.weight {
        FrequencyWeight::BinIndex => 1.0,
        FrequencyWeight::NormalizedFrequency => 1.0 / (len / 2) as f64,
    }
}

/// ASA of a single distribution (one attention row).
pub fn row_asa(row: &[f64], fft: &dyn Fft<f64>, cfg: &AsaConfig) -> f64 {
    // Centering leaves every bin but DC unchanged and keeps flat rows exactly flat.
    let sum: f64 = row.iter().sum();
    let mean = sum / row.len() as f64;
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    fft.process(&mut buf);
    buf[0] = Complex::new(sum, 0.0);
    let scale = weight_scale(cfg, row.len());
    let half = row.len() / 2;
    weighted_ratio(buf[..=half].iter().enumerate().map(|(k, c)| (k as f64 * scale, c.norm_sqr())))
}

fn matrix_asa_2d(matrix: &[f64], len: usize, fft: &dyn Fft<f64>, cfg: &AsaConfig) -> f64 {
    let sum: f64 = matrix.iter().sum();
    let mean = sum / matrix.len() as f64;
    let mut buf: Vec<Complex<f64>> = matrix.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    for row in buf.chunks_mut(len) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); len];
    for c in 0..len {
        for r in 0..len {
            column[r] = buf[r * len + c];
        }
        fft.process(&mut column);
        for r in 0..len {
            buf[r * len + c] = column[r];
        }
    }
    buf[0] = Complex::new(sum, 0.0);
    let scale = weight_scale(cfg, len);
    let fold = |k: usize| k.min(len - k) as f64;
    weighted_ratio((0..len * len).map(|i| {
        let (ky, kx) = (i / len, i % len);
        let radius = (fold(kx).powi(2) + fold(ky).powi(2)).sqrt().round();
        (radius * scale, buf[i].norm_sqr())
    }))
}

/// Mean ASA of every (head, row) in each layer, in layer order.
fn layer_scores(tensor: &AttentionTensor, cfg: &AsaConfig) -> Vec<f64> {
    let len = tensor.seq_len;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    (0..tensor.layers)
        .into_par_iter()
        .map(|layer| {
            let fft: Arc<dyn Fft<f64>> = Arc::clone(&fft);
            let mut total = 0.0;
            let mut count = 0usize;
            for head in 0..tensor.heads {
                let matrix: Vec<f64> = tensor.matrix(layer, head).iter().map(|&v| f64::from(v)).collect();
                match cfg.mode {
                    SpectrumMode::RowWise1d => {
                        for row in matrix.chunks(len) {
                            total += row_asa(row, fft.as_ref(), cfg);
                            count += 1;
                        }
                    }
                    SpectrumMode::Full2d => {
                        total += matrix_asa_2d(&matrix, len, fft.as_ref(), cfg);
                        count += 1;
                    }
                }
            }
            total / count as f64
        })
        .collect()
}

/// ASA of one tensor under `cfg`. Every layer holds the same number of
/// rows, so the mean of per-layer means is the mean over all rows.
pub fn compute_asa(tensor: &AttentionTensor, cfg: &AsaConfig) -> AsaReport {
    let per_layer = layer_scores(tensor, cfg);
    let asa = per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    AsaReport {
        asa,
        per_layer: (cfg.aggregate == Aggregate::PerLayer).then_some(per_layer),
    }
}

/// Mean ASA over several tensors (e.g. all sentences of one subset).
pub fn mean_asa(tensors: &[AttentionTensor], cfg: &AsaConfig) -> Option<f64> {
    if tensors.is_empty() {
        return None;
    }
    Some(tensors.iter().map(|t| compute_asa(t, cfg).asa).sum::<f64>() / tensors.len() as f64)
}

/// Row-wise softmax of `logits * temperature`; a helper for synthetic fixtures.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().map(|v| v * temperature).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v * temperature - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
