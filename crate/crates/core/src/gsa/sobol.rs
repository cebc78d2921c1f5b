use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_batch, GsaError, Surface};
use crate::rng;

/// Largest base sample count the Sobol generator supports.
const MAX_BASE_SAMPLES: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SobolConfig {
    /// `N`; a power of two >= 64. The surface is evaluated `N * (d + 2)` times.
    pub base_samples: usize,
    pub seed: u64,
    /// Bootstrap replicates for the confidence intervals (0 disables them).
    pub bootstrap: usize,
    pub workers: usize,
}

impl Default for SobolConfig {
    fn default() -> Self {
        SobolConfig {
            base_samples: 1024,
            seed: 0,
            bootstrap: 1000,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndex {
    pub name: String,
    pub s1: f64,
    pub st: f64,
    /// 2.5% and 97.5% bootstrap percentiles.
    pub s1_ci95: [f64; 2],
    pub st_ci95: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub indices: Vec<SobolIndex>,
    pub base_samples: usize,
    pub bootstrap: usize,
}

impl SobolResult {
    /// Names ordered by decreasing first-order index.
    pub fn ranking_s1(&self) -> Vec<&str> {
        let mut idx: Vec<&SobolIndex> = self.indices.iter().collect();
        idx.sort_by(|a, b| b.s1.total_cmp(&a.s1));
        idx.into_iter().map(|i| i.name.as_str()).collect()
    }
}

/// Output evaluations of the Saltelli design.
struct Evaluations {
    a: Vec<f64>,
    b: Vec<f64>,
    /// `ab[i][j]`: row `j` of A with column `i` taken from B.
    ab: Vec<Vec<f64>>,
}

fn estimate(ev: &Evaluations, rows: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = rows.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &j in rows {
        for v in [ev.a[j], ev.b[j]] {
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / (2.0 * n);
    let var = sum_sq / (2.0 * n) - mean * mean;
    if var <= 0.0 {
        return None;
    }
    let mut s1 = Vec::with_capacity(ev.ab.len());
    let mut st = Vec::with_capacity(ev.ab.len());
    for ab in &ev.ab {
        let mut first = 0.0;
        let mut total = 0.0;
        for &j in rows {
            first += ev.b[j] * (ab[j] - ev.a[j]);
            let d = ev.a[j] - ab[j];
            total += d * d;
        }
        // Saltelli (2010) first-order and Jansen total-order estimators.
        s1.push(first / n / var);
        st.push(0.5 * total / n / var);
    }
    Some((s1, st))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Variance-based first- and total-order indices from a Saltelli design
/// built on a scrambled Sobol sequence.
pub fn run_sobol<S: Surface + ?Sized>(surface: &S, cfg: &SobolConfig) -> Result<SobolResult, GsaError> {
    let n = cfg.base_samples;
    if n < 64 || !n.is_power_of_two() || n > MAX_BASE_SAMPLES {
        return Err(GsaError::InvalidParameter(format!(
            "base_samples must be a power of two in [64, {MAX_BASE_SAMPLES}], got {n}"
        )));
    }
    let dim = surface.dim();
    if dim == 0 || 2 * dim > 256 {
        return Err(GsaError::InvalidParameter(format!("unsupported dimension {dim}")));
    }
    let bounds = surface.bounds().to_vec();
    let scramble = (cfg.seed ^ (cfg.seed >> 32)) as u32;
    let unit = |row: usize, col: usize| f64::from(sobol_burley::sample(row as u32, col as u32, scramble));
    let scale = |u: f64, i: usize| bounds[i].0 + u * (bounds[i].1 - bounds[i].0);

    let a_rows: Vec<Vec<f64>> = (0..n).map(|j| (0..dim).map(|i| scale(unit(j, i), i)).collect()).collect();
    let b_rows: Vec<Vec<f64>> = (0..n).map(|j| (0..dim).map(|i| scale(unit(j, dim + i), i)).collect()).collect();

    let mut points = Vec::with_capacity(n * (dim + 2));
    points.extend(a_rows.iter().cloned());
    points.extend(b_rows.iter().cloned());
    for i in 0..dim {
        for j in 0..n {
            let mut row = a_rows[j].clone();
            row[i] = b_rows[j][i];
            points.push(row);
        }
    }
    let y = evaluate_batch(surface, &points, cfg.workers)?;
    let ev = Evaluations {
        a: y[..n].to_vec(),
        b: y[n..2 * n].to_vec(),
        ab: (0..dim).map(|i| y[(2 + i) * n..(3 + i) * n].to_vec()).collect(),
    };

    let all_rows: Vec<usize> = (0..n).collect();
    let mean = ev.a.iter().chain(&ev.b).sum::<f64>() / (2 * n) as f64;
    let var = ev.a.iter().chain(&ev.b).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (2 * n) as f64;
    if var <= 1e-12 * mean.abs().max(1.0).powi(2) {
        return Err(GsaError::Flat(var));
    }
    let (s1, st) = estimate(&ev, &all_rows).ok_or(GsaError::Flat(var))?;

    // Each replicate owns a seeded stream, so results do not depend on scheduling.
    let replicates: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.bootstrap)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = rng::stream(rng::derive_seed(cfg.seed, "gsa/sobol/bootstrap", r as u64), "draw");
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            estimate(&ev, &rows)
        })
        .collect();

    let ci = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64, point: f64| -> [f64; 2] {
        if replicates.is_empty() {
            return [point, point];
        }
        let mut v: Vec<f64> = replicates.iter().map(pick).collect();
        v.sort_by(f64::total_cmp);
        [percentile(&v, 0.025), percentile(&v, 0.975)]
    };

    let indices = surface
        .names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| SobolIndex {
            name,
            s1: s1[i],
            st: st[i],
            s1_ci95: ci(&|r| r.0[i], s1[i]),
            st_ci95: ci(&|r| r.1[i], st[i]),
        })
        .collect();
    Ok(SobolResult {
        indices,
        base_samples: n,
        bootstrap: cfg.bootstrap,
    })
}
