use serde::{Deserialize, Serialize};

use super::{mean_asa, AsaConfig, AsaError, AttentionTensor};
use crate::gsa::{correlate_series, Correlation};
use crate::metrics::FeatureVector;

/// Attention tensors exported for the sentences of one subset.
#[derive(Debug, Clone)]
pub struct SubsetAttention {
    pub subset_id: String,
    pub features: FeatureVector,
    pub tensors: Vec<AttentionTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityAsaRow {
    pub subset_id: String,
    pub ned: f64,
    pub mean_asa: f64,
    pub tensors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityAsaTable {
    /// Sorted by density, then ASA, then id.
    pub rows: Vec<DensityAsaRow>,
    /// `None` with fewer than three rows or a constant column.
    pub correlation: Option<Correlation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_unavailable: Option<String>,
}

/// Pairs each subset's density with its mean ASA and correlates the two.
pub fn asa_vs_density(records: &[SubsetAttention], cfg: &AsaConfig) -> Result<DensityAsaTable, AsaError> {
    let mut rows = records
        .iter()
        .map(|r| {
            let mean_asa = mean_asa(&r.tensors, cfg).ok_or_else(|| AsaError::NoTensors(r.subset_id.clone()))?;
            Ok(DensityAsaRow {
                subset_id: r.subset_id.clone(),
                ned: r.features.ned,
                mean_asa,
                tensors: r.tensors.len(),
            })
        })
        .collect::<Result<Vec<_>, AsaError>>()?;
    rows.sort_by(|a, b| {
        a.ned
            .total_cmp(&b.ned)
            .then(a.mean_asa.total_cmp(&b.mean_asa))
            .then_with(|| a.subset_id.cmp(&b.subset_id))
    });
    let ned: Vec<f64> = rows.iter().map(|r| r.ned).collect();
    let asa: Vec<f64> = rows.iter().map(|r| r.mean_asa).collect();
    let (correlation, correlation_unavailable) = match correlate_series(&ned, &asa, "ned", "mean_asa") {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(DensityAsaTable {
        rows,
        correlation,
        correlation_unavailable,
    })
}
