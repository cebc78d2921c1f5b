use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_batch, GsaError, Surface};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorrisConfig {
    pub trajectories: usize,
    /// Grid levels `p`; must be even and at least 4.
    pub levels: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for MorrisConfig {
    fn default() -> Self {
        MorrisConfig {
            trajectories: 20,
            levels: 6,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorrisIndex {
    pub name: String,
    /// Mean absolute elementary effect.
    pub mu_star: f64,
    pub mu: f64,
    /// Sample standard deviation of the elementary effects.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorrisResult {
    pub indices: Vec<MorrisIndex>,
    pub trajectories: usize,
    pub levels: usize,
    /// Step size in unit-cube coordinates.
    pub delta: f64,
}

impl MorrisResult {
    /// Names ordered by decreasing mu*.
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<&MorrisIndex> = self.indices.iter().collect();
        idx.sort_by(|a, b| b.mu_star.total_cmp(&a.mu_star));
        idx.into_iter().map(|i| i.name.as_str()).collect()
    }
}

/// One trajectory in unit-cube coordinates: `d + 1` points, each differing
/// from the previous one in exactly one coordinate by `±delta`. Returns the
/// points and, per step, `(dimension, signed step)`.
fn trajectory<R: Rng>(rng: &mut R, dim: usize, levels: usize, delta: f64) -> (Vec<Vec<f64>>, Vec<(usize, f64)>) {
    let step = 1.0 / (levels - 1) as f64;
    let half = levels / 2;
    let mut current: Vec<f64> = Vec::with_capacity(dim);
    let mut signs = Vec::with_capacity(dim);
    for _ in 0..dim {
        // Base value from the lower half of the grid so that base + delta <= 1.
        let base = rng.random_range(0..half) as f64 * step;
        let up = rng.random_bool(0.5);
        current.push(if up { base } else { base + delta });
        signs.push(if up { delta } else { -delta });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.shuffle(rng);
    let mut points = vec![current.clone()];
    let mut steps = Vec::with_capacity(dim);
    for &j in &order {
        current[j] = (current[j] + signs[j]).clamp(0.0, 1.0);
        points.push(current.clone());
        steps.push((j, signs[j]));
    }
    (points, steps)
}

/// Morris elementary-effects screening with the classic one-at-a-time
/// trajectory design on a `levels`-point grid.
///
/// Effects are measured per unit of the normalised input, so features with
/// different physical ranges are comparable.
pub fn run_morris<S: Surface + ?Sized>(surface: &S, cfg: &MorrisConfig) -> Result<MorrisResult, GsaError> {
    if cfg.levels < 4 || !cfg.levels.is_multiple_of(2) {
        return Err(GsaError::InvalidParameter(format!("levels must be even and >= 4, got {}", cfg.levels)));
    }
    if cfg.trajectories < 2 {
        return Err(GsaError::InvalidParameter(format!("trajectories must be >= 2, got {}", cfg.trajectories)));
    }
    let dim = surface.dim();
    if dim == 0 {
        return Err(GsaError::InvalidParameter("surface has no inputs".into()));
    }
    let bounds = surface.bounds().to_vec();
    let delta = cfg.levels as f64 / (2.0 * (cfg.levels - 1) as f64);
    let mut rng = rng::stream(cfg.seed, "gsa/morris");

    let mut unit_points = Vec::with_capacity(cfg.trajectories * (dim + 1));
    let mut all_steps = Vec::with_capacity(cfg.trajectories);
    for _ in 0..cfg.trajectories {
        let (pts, steps) = trajectory(&mut rng, dim, cfg.levels, delta);
        unit_points.extend(pts);
        all_steps.push(steps);
    }
    let points: Vec<Vec<f64>> = unit_points
        .iter()
        .map(|u| u.iter().zip(&bounds).map(|(x, (lo, hi))| lo + x * (hi - lo)).collect())
        .collect();
    let y = evaluate_batch(surface, &points, cfg.workers)?;

    let mut effects: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.trajectories); dim];
    for (t, steps) in all_steps.iter().enumerate() {
        let base = t * (dim + 1);
        for (s, &(j, signed)) in steps.iter().enumerate() {
            effects[j].push((y[base + s + 1] - y[base + s]) / signed);
        }
    }

    let names = surface.names();
    let indices = effects
        .iter()
        .zip(names)
        .map(|(ee, name)| {
            let n = ee.len() as f64;
            let mu = ee.iter().sum::<f64>() / n;
            let mu_star = ee.iter().map(|e| e.abs()).sum::<f64>() / n;
            let var = ee.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / (n - 1.0);
            MorrisIndex {
                name,
                mu_star,
                mu,
                sigma: var.max(0.0).sqrt(),
            }
        })
        .collect();
    Ok(MorrisResult {
        indices,
        trajectories: cfg.trajectories,
        levels: cfg.levels,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsa::FnSurface;
    use std::f64::consts::PI;

    fn cfg(seed: u64) -> MorrisConfig {
        MorrisConfig { seed, ..Default::default() }
    }

    #[test]
    fn linear_effect_is_constant() {
        let f = FnSurface::new(vec![(0.0, 1.0); 4], |x: &[f64]| 3.0 * x[0]);
        let r = run_morris(&f, &cfg(1)).unwrap();
        assert!((r.indices[0].mu_star - 3.0).abs() < 1e-9);
        assert!(r.indices[0].sigma.abs() < 1e-9);
        for i in &r.indices[1..] {
            assert_eq!(i.mu_star, 0.0);
        }
    }

    #[test]
    fn interaction_gives_spread() {
        let f = FnSurface::new(vec![(0.0, 1.0); 2], |x: &[f64]| x[0] * x[1]);
        let r = run_morris(&f, &cfg(2)).unwrap();
        assert!(r.indices[0].sigma > 0.0);
    }

    #[test]
    fn trajectories_stay_on_grid() {
        let mut rng = rng::stream(3, "t");
        let levels = 6;
        let delta = 0.6;
        for _ in 0..100 {
            let (pts, steps) = trajectory(&mut rng, 5, levels, delta);
            assert_eq!(pts.len(), 6);
            let mut seen: Vec<usize> = steps.iter().map(|s| s.0).collect();
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2, 3, 4]);
            for p in &pts {
                for &x in p {
                    let k = x * (levels - 1) as f64;
                    assert!((0.0..=1.0).contains(&x));
                    assert!((k - k.round()).abs() < 1e-9, "{x} off grid");
                }
            }
        }
    }

    #[test]
    fn shift_and_scale() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1] * x[1] * x[0];
        let base = run_morris(&FnSurface::new(vec![(0.0, 1.0); 3], f), &cfg(4)).unwrap();
        let shifted = run_morris(&FnSurface::new(vec![(0.0, 1.0); 3], move |x: &[f64]| f(x) + 10.0), &cfg(4)).unwrap();
        let scaled = run_morris(&FnSurface::new(vec![(0.0, 1.0); 3], move |x: &[f64]| -2.5 * f(x)), &cfg(4)).unwrap();
        for i in 0..3 {
            assert!((base.indices[i].mu_star - shifted.indices[i].mu_star).abs() < 1e-9);
            assert!((scaled.indices[i].mu_star - 2.5 * base.indices[i].mu_star).abs() < 1e-9);
            assert!((scaled.indices[i].sigma - 2.5 * base.indices[i].sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let f = FnSurface::new(vec![(0.0, 1.0)], |x: &[f64]| x[0]);
        assert!(run_morris(&f, &MorrisConfig { levels: 5, ..Default::default() }).is_err());
        assert!(run_morris(&f, &MorrisConfig { levels: 2, ..Default::default() }).is_err());
        assert!(run_morris(&f, &MorrisConfig { trajectories: 1, ..Default::default() }).is_err());
    }

    fn ishigami(x: &[f64]) -> f64 {
        x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
    }

    /// mu* of each active input averaged over every grid base point and
    /// both step directions: the quantity the sampled estimate approximates.
    fn dense_mu_star(levels: usize) -> [f64; 3] {
        let delta = levels as f64 / (2.0 * (levels - 1) as f64);
        let to_x = |u: f64| -PI + u * 2.0 * PI;
        let grid: Vec<f64> = (0..levels).map(|k| k as f64 / (levels - 1) as f64).collect();
        let mut out = [0.0; 3];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut n = 0.0;
            for &a in &grid {
                for &b in &grid {
                    for &c in &grid {
                        let base = [a, b, c];
                        if base[i] + delta > 1.0 + 1e-12 {
                            continue;
                        }
                        let mut up = base;
                        up[i] += delta;
                        let f0 = ishigami(&base.map(to_x));
                        let f1 = ishigami(&up.map(to_x));
                        sum += ((f1 - f0) / delta).abs();
                        n += 1.0;
                    }
                }
            }
            *slot = sum / n;
        }
        out
    }

    #[test]
    fn ishigami_ranking_matches_dense_grid() {
        let oracle = dense_mu_star(6);
        let mut bounds = vec![(-PI, PI); 3];
        bounds.extend(vec![(0.0, 1.0); 3]);
        let f = FnSurface::new(bounds, ishigami);
        let r = run_morris(&f, &MorrisConfig { trajectories: 200, ..cfg(5) }).unwrap();
        for i in 0..3 {
            let rel = (r.indices[i].mu_star - oracle[i]).abs() / oracle[i];
            assert!(rel < 0.2, "x{} sampled {} oracle {}", i + 1, r.indices[i].mu_star, oracle[i]);
        }
        let mut oracle_order: Vec<usize> = (0..3).collect();
        oracle_order.sort_by(|&a, &b| oracle[b].total_cmp(&oracle[a]));
        let sampled: Vec<String> = r.ranking().iter().take(3).map(|s| s.to_string()).collect();
        let expected: Vec<String> = oracle_order.iter().map(|i| format!("x{}", i + 1)).collect();
        assert_eq!(sampled, expected, "oracle {oracle:?}");
        for dummy in &r.indices[3..] {
            assert_eq!(dummy.mu_star, 0.0);
        }
    }
}
