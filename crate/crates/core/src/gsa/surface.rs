use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentRecord, GsaError};
use crate::metrics::Feature;

/// Closed interval `[lo, hi]` with `lo < hi`.
pub type Bounds = (f64, f64);

/// A scalar response over a box in feature space.
///
/// Points passed to [`Surface::evaluate`] are in the surface's own units,
/// inside [`Surface::bounds`].
pub trait Surface: Sync {
    fn names(&self) -> Vec<String>;
    fn bounds(&self) -> &[Bounds];
    fn evaluate(&self, point: &[f64]) -> Result<f64, GsaError>;

    fn dim(&self) -> usize {
        self.bounds().len()
    }
}

/// Evaluates points in order, optionally on a bounded worker pool. The
/// result order is the input order regardless of scheduling; on failure the
/// error of the lowest-indexed failing point is returned.
pub fn evaluate_batch<S: Surface + ?Sized>(
    surface: &S,
    points: &[Vec<f64>],
    workers: usize,
) -> Result<Vec<f64>, GsaError> {
    let results: Vec<Result<f64, GsaError>> = if workers <= 1 {
        points.iter().map(|p| surface.evaluate(p)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| GsaError::InvalidParameter(format!("worker pool: {e}")))?;
        pool.install(|| points.par_iter().map(|p| surface.evaluate(p)).collect())
    };
    results
        .into_iter()
        .zip(points)
        .map(|(r, p)| match r {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(GsaError::Evaluation {
                point: p.clone(),
                message: format!("non-finite response {v}"),
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// A surface backed by a Rust closure; used for analytic test functions.
pub struct FnSurface<F> {
    names: Vec<String>,
    bounds: Vec<Bounds>,
    f: F,
}

impl<F> FnSurface<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(bounds: Vec<Bounds>, f: F) -> Self {
        let names = (1..=bounds.len()).map(|i| format!("x{i}")).collect();
        FnSurface { names, bounds, f }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.bounds.len());
        self.names = names;
        self
    }
}

impl<F> Surface for FnSurface<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    fn evaluate(&self, point: &[f64]) -> Result<f64, GsaError> {
        Ok((self.f)(point))
    }
}

/// Per-feature `[min, max]` over the records. A feature that is constant
/// across records gets a small symmetric interval so that `lo < hi` holds.
pub fn record_bounds(records: &[ExperimentRecord]) -> Vec<Bounds> {
    Feature::ALL
        .iter()
        .map(|&f| {
            let values = records.iter().map(|r| r.features.get(f));
            let lo = values.clone().fold(f64::INFINITY, f64::min);
            let hi = values.fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-12 {
                (lo, hi)
            } else {
                let pad = (lo.abs() * 1e-3).max(1e-6);
                (lo - pad, hi + pad)
            }
        })
        .collect()
}

/// Inverse-distance-weighted k-nearest-neighbour interpolation of F1 in
/// feature space normalised to the record bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnSurrogate {
    k: usize,
    bounds: Vec<Bounds>,
    points: Vec<[f64; 6]>,
    values: Vec<f64>,
}

impl KnnSurrogate {
    fn normalize(&self, point: &[f64]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (i, (v, (lo, hi))) in point.iter().zip(&self.bounds).enumerate() {
            out[i] = (v - lo) / (hi - lo);
        }
        out
    }

    pub fn predict(&self, point: &[f64]) -> f64 {
        let q = self.normalize(point);
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let exact: Vec<f64> = dists
            .iter()
            .take_while(|(d, _)| *d <= 1e-12)
            .map(|&(_, i)| self.values[i])
            .collect();
        if !exact.is_empty() {
            return exact.iter().sum::<f64>() / exact.len() as f64;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, i) in dists.iter().take(self.k) {
            let w = 1.0 / (d * d);
            num += w * self.values[i];
            den += w;
        }
        num / den
    }
}

/// A command that reads one JSON object of feature values on stdin and
/// prints one number on stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    300.0
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout: Duration) -> Self {
        ExternalCommand {
            program: program.into(),
            args,
            timeout_secs: timeout.as_secs_f64(),
        }
    }

    fn run(&self, names: &[String], point: &[f64]) -> Result<f64, String> {
        let payload: serde_json::Map<String, serde_json::Value> = names
            .iter()
            .zip(point)
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect();
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start {}: {e}", self.program))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let body = serde_json::to_vec(&payload).expect("map serializes");
            // A command that ignores stdin may close it early; that is not an error.
            let _ = stdin.write_all(&body);
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs);
        let status = loop {
            match child.try_wait().map_err(|e| e.to_string())? {
                Some(status) => break status,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(format!("timed out after {}s", self.timeout_secs));
                }
                None => std::thread::sleep(Duration::from_millis(2)),
            }
        };
        let out = reader
            .join()
            .map_err(|_| "stdout reader panicked".to_string())?
            .map_err(|e| e.to_string())?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut err);
            }
            return Err(format!("exited with {status}: {}", err.trim()));
        }
        out.trim()
            .parse::<f64>()
            .map_err(|_| format!("expected one number on stdout, got {:?}", out.trim()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    KnnSurrogate(KnnSurrogate),
    ExternalCommand(ExternalCommand),
}

/// F1 as a function of the six structural features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub kind: SurfaceKind,
    pub bounds: Vec<Bounds>,
}

impl ResponseSurface {
    /// An external evaluator over the given bounds.
    pub fn external(command: ExternalCommand, bounds: Vec<Bounds>) -> Result<Self, GsaError> {
        if bounds.len() != Feature::ALL.len() || bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(GsaError::InvalidParameter("need six bounds with lo < hi".into()));
        }
        Ok(ResponseSurface {
            kind: SurfaceKind::ExternalCommand(command),
            bounds,
        })
    }
}

impl Surface for ResponseSurface {
    fn names(&self) -> Vec<String> {
        Feature::ALL.iter().map(|f| f.name().to_string()).collect()
    }

    fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    fn evaluate(&self, point: &[f64]) -> Result<f64, GsaError> {
        match &self.kind {
            SurfaceKind::KnnSurrogate(knn) => Ok(knn.predict(point)),
            SurfaceKind::ExternalCommand(cmd) => cmd.run(&self.names(), point).map_err(|message| GsaError::Evaluation {
                point: point.to_vec(),
                message,
            }),
        }
    }
}

/// Fits the k-NN surrogate; bounds are the observed record bounds.
pub fn fit_knn_surrogate(records: &[ExperimentRecord], k: usize) -> Result<ResponseSurface, GsaError> {
    if k == 0 {
        return Err(GsaError::InvalidParameter("k must be >= 1".into()));
    }
    let needed = k.max(4);
    if records.len() < needed {
        return Err(GsaError::InsufficientRecords { needed, got: records.len() });
    }
    let bounds = record_bounds(records);
    let mut knn = KnnSurrogate {
        k,
        bounds: bounds.clone(),
        points: Vec::new(),
        values: records.iter().map(|r| r.f1).collect(),
    };
    knn.points = records.iter().map(|r| knn.normalize(&r.features.to_array())).collect();
    Ok(ResponseSurface {
        kind: SurfaceKind::KnnSurrogate(knn),
        bounds,
    })
}
