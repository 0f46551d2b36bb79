//! K-component Gaussian mixture over curves with Bézier means, fitted by EM.
//!
//! Each component k holds control points θ_k, per-axis noise variances
//! σ²_k, and a mixing weight α_k. A curve's density under a component is
//! the product of independent Gaussian densities of its observed points
//! around the component curve evaluated at the curve's own times, so routes
//! of different durations compare directly without resampling.
//!
//! The E-step computes posterior memberships in log space with a per-curve
//! log-sum-exp, which realizes the usual constant-rescaling trick exactly
//! and keeps curves with hundreds of points finite. The M-step never
//! materializes the big diagonal weight matrix: per-curve Gram and moment
//! matrices are accumulated with scalar weights, which is the sparse
//! formulation of the weighted normal equations.

mod kmeans;
mod prepare;
mod steps;

pub use kmeans::kmeans_endpoints;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{BernsteinError, ControlPoints};
use crate::curve::NormalizedCurve;
use prepare::{prepare, PreparedCurve};

/// Tolerance for the internal non-decreasing log-likelihood check.
const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("need at least {k} curves for k = {k}, got {n}")]
    InsufficientData { n: usize, k: usize },
    #[error("no curves supplied")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{total} stacked points cannot support a degree-{degree} fit (need {needed})")]
    ShortOfPoints {
        total: usize,
        degree: usize,
        needed: usize,
    },
    #[error("cannot initialize cluster {cluster}: {reason}")]
    Initialization { cluster: usize, reason: String },
    #[error("cluster {cluster} is degenerate: weighted normal equations are singular")]
    DegenerateCluster { cluster: usize },
    #[error("non-finite log-density for curve {curve_key} under cluster {cluster}")]
    Numerical { curve_key: String, cluster: usize },
    #[error(
        "log-likelihood decreased at iteration {iteration}: {previous} -> {current}; history: {history:?}"
    )]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
        history: Vec<f64>,
    },
    #[error("memberships are invalid: {0}")]
    BadMemberships(String),
    #[error("model file is invalid: {0}")]
    BadModel(String),
    #[error(transparent)]
    Bernstein(#[from] BernsteinError),
}

/// One mixture component: a Bézier mean with diagonal per-axis noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterComponent {
    pub theta: ControlPoints,
    /// Per-axis noise variances in yards².
    pub sigma2: [f64; 2],
    pub alpha: f64,
}

/// A fitted (or initialized) mixture model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub degree: usize,
    pub components: Vec<ClusterComponent>,
    /// Log-likelihood recorded after every E-step of the fit.
    pub fit_history: Vec<f64>,
}

/// Fit settings. `steps` forces an exact number of EM steps regardless of
/// tolerance; `threads == 0` uses all available parallelism.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub degree: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub steps: Option<usize>,
    pub seed: u64,
    pub threads: usize,
    pub variance_floor: f64,
    pub alpha_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 30,
            degree: 5,
            tol: 1e-6,
            max_iters: 100,
            steps: None,
            seed: 0,
            threads: 0,
            variance_floor: 1e-6,
            alpha_floor: 1e-6,
        }
    }
}

/// Row-stochastic posterior membership probabilities, n curves by k
/// clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>, // row-major
}

impl MembershipMatrix {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self, MixtureError> {
        if data.len() != n * k {
            return Err(MixtureError::BadMemberships(format!(
                "expected {} entries for {n}x{k}, got {}",
                n * k,
                data.len()
            )));
        }
        for row in 0..n {
            let slice = &data[row * k..(row + 1) * k];
            if slice.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(MixtureError::BadMemberships(format!(
                    "row {row} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = slice.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MixtureError::BadMemberships(format!(
                    "row {row} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { n, k, data })
    }

    /// Hard 0/1 memberships from cluster indices.
    pub fn from_assignments(assignments: &[usize], k: usize) -> Result<Self, MixtureError> {
        let n = assignments.len();
        let mut data = vec![0.0; n * k];
        for (i, &z) in assignments.iter().enumerate() {
            if z >= k {
                return Err(MixtureError::BadMemberships(format!(
                    "assignment {z} out of range for k = {k}"
                )));
            }
            data[i * k + z] = 1.0;
        }
        Self::new(n, k, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, row: usize, cluster: usize) -> f64 {
        self.data[row * self.k + cluster]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.k..(row + 1) * self.k]
    }

    /// Index and value of the row maximum; the first maximum wins ties.
    pub fn argmax_row(&self, row: usize) -> (usize, f64) {
        let slice = self.row(row);
        let mut best = 0;
        for (j, &v) in slice.iter().enumerate() {
            if v > slice[best] {
                best = j;
            }
        }
        let _ = &slice;
        (best, self.row(row)[best])
    }
}

/// Hard assignment of one curve: `cluster` is 1-based to match label maps
/// and report output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub curve_key: String,
    pub cluster: usize,
    pub posterior: f64,
}

/// On-disk model document.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    k: usize,
    p: usize,
    components: Vec<ClusterComponent>,
    fit_history: Vec<f64>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.components.is_empty() {
            return Err(MixtureError::BadModel("model has no components".into()));
        }
        let mut alpha_sum = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.theta.degree() != self.degree {
                return Err(MixtureError::BadModel(format!(
                    "component {} has degree {} but the model declares {}",
                    i + 1,
                    c.theta.degree(),
                    self.degree
                )));
            }
            if !(c.sigma2[0].is_finite() && c.sigma2[0] > 0.0)
                || !(c.sigma2[1].is_finite() && c.sigma2[1] > 0.0)
            {
                return Err(MixtureError::BadModel(format!(
                    "component {} has non-positive variance",
                    i + 1
                )));
            }
            if !(c.alpha.is_finite() && c.alpha > 0.0 && c.alpha <= 1.0) {
                return Err(MixtureError::BadModel(format!(
                    "component {} has mixing weight {} outside (0, 1]",
                    i + 1,
                    c.alpha
                )));
            }
            alpha_sum += c.alpha;
        }
        if (alpha_sum - 1.0).abs() > 1e-9 {
            return Err(MixtureError::BadModel(format!(
                "mixing weights sum to {alpha_sum}, not 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            k: self.k(),
            p: self.degree,
            components: self.components.clone(),
            fit_history: self.fit_history.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, MixtureError> {
        let file: ModelFile =
            serde_json::from_str(json).map_err(|e| MixtureError::BadModel(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(MixtureError::BadModel(format!(
                "unsupported format_version {} (this build reads {})",
                file.format_version, MODEL_FORMAT_VERSION
            )));
        }
        if file.components.len() != file.k {
            return Err(MixtureError::BadModel(format!(
                "model declares k = {} but carries {} components",
                file.k,
                file.components.len()
            )));
        }
        let model = ClusterModel {
            degree: file.p,
            components: file.components,
            fit_history: file.fit_history,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Initial model from hard assignments: per-cluster pooled least squares for
/// the mean, per-axis mean squared residual for the variances, and member
/// share for the mixing weight.
pub fn initialize_model(
    curves: &[NormalizedCurve],
    assignments: &[usize],
    degree: usize,
    config: &FitConfig,
) -> Result<ClusterModel, MixtureError> {
    let prepared = prepare(curves, degree)?;
    initialize_prepared(&prepared, assignments, degree, config)
}

fn initialize_prepared(
    prepared: &[PreparedCurve],
    assignments: &[usize],
    degree: usize,
    config: &FitConfig,
) -> Result<ClusterModel, MixtureError> {
    if assignments.len() != prepared.len() {
        return Err(MixtureError::BadMemberships(format!(
            "{} assignments for {} curves",
            assignments.len(),
            prepared.len()
        )));
    }
    let k = assignments.iter().copied().max().map_or(0, |z| z + 1);
    if k == 0 {
        return Err(MixtureError::EmptyInput);
    }

    // Pooled point counts decide up front whether each cluster supports a
    // degree-P fit.
    let mut counts = vec![0usize; k];
    for (pc, &z) in prepared.iter().zip(assignments) {
        counts[z] += pc.m;
    }
    for (cluster, &count) in counts.iter().enumerate() {
        if count < degree + 1 {
            return Err(MixtureError::Initialization {
                cluster: cluster + 1,
                reason: format!(
                    "{count} pooled points cannot support a degree-{degree} fit"
                ),
            });
        }
    }

    let memberships = MembershipMatrix::from_assignments(assignments, k)?;
    let (components, _) =
        steps::m_step_prepared(prepared, &memberships, degree, config, false).map_err(|e| {
            match e {
                MixtureError::DegenerateCluster { cluster } => MixtureError::Initialization {
                    cluster,
                    reason: "pooled design matrix is singular".into(),
                },
                other => other,
            }
        })?;
    Ok(ClusterModel {
        degree,
        components,
        fit_history: Vec::new(),
    })
}

/// Posterior memberships and total log-likelihood of `curves` under `model`.
pub fn e_step(
    model: &ClusterModel,
    curves: &[NormalizedCurve],
) -> Result<(MembershipMatrix, f64), MixtureError> {
    if curves.is_empty() {
        return Err(MixtureError::EmptyInput);
    }
    model.validate()?;
    let prepared = prepare(curves, model.degree)?;
    steps::e_step_prepared(model, &prepared)
}

/// One maximization step given memberships; includes the collapse rule that
/// reinitializes components whose mass fell below 0.01/k.
pub fn m_step(
    curves: &[NormalizedCurve],
    memberships: &MembershipMatrix,
    degree: usize,
    config: &FitConfig,
) -> Result<ClusterModel, MixtureError> {
    let prepared = prepare(curves, degree)?;
    let (components, _) =
        steps::m_step_prepared(&prepared, memberships, degree, config, true)?;
    Ok(ClusterModel {
        degree,
        components,
        fit_history: Vec::new(),
    })
}

/// Full fit: k-means on endpoints, pooled initialization, then alternating
/// E/M steps until the log-likelihood change drops below `tol` (or for
/// exactly `steps` steps when the override is set).
pub fn fit(
    curves: &[NormalizedCurve],
    config: &FitConfig,
) -> Result<(ClusterModel, MembershipMatrix), MixtureError> {
    if curves.is_empty() {
        return Err(MixtureError::EmptyInput);
    }
    if config.k == 0 {
        return Err(MixtureError::InvalidConfig("k must be at least 1".into()));
    }
    if curves.len() < config.k {
        return Err(MixtureError::InsufficientData {
            n: curves.len(),
            k: config.k,
        });
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(MixtureError::InvalidConfig(format!(
            "tolerance must be positive and finite, got {}",
            config.tol
        )));
    }
    if config.max_iters == 0 {
        return Err(MixtureError::InvalidConfig("max_iters must be at least 1".into()));
    }
    if config.steps == Some(0) {
        return Err(MixtureError::InvalidConfig("steps override must be at least 1".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| MixtureError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| fit_inner(curves, config))
}

fn fit_inner(
    curves: &[NormalizedCurve],
    config: &FitConfig,
) -> Result<(ClusterModel, MembershipMatrix), MixtureError> {
    let prepared = prepare(curves, config.degree)?;
    let init_assignments = kmeans::kmeans_endpoints(curves, config.k, config.seed)?;
    let mut model = initialize_prepared(&prepared, &init_assignments, config.degree, config)?;

    let mut history: Vec<f64> = Vec::new();
    let mut previous: Option<f64> = None;
    // A collapse reinitialization perturbs the model outside the EM
    // guarantees, so the next delta is neither checked nor used to stop.
    let mut skip_delta_checks = false;
    let limit = config.steps.unwrap_or(config.max_iters);

    loop {
        let (memberships, ll) = steps::e_step_prepared(&model, &prepared)?;
        history.push(ll);

        if let Some(prev) = previous {
            if !skip_delta_checks {
                if ll < prev - MONOTONE_SLACK {
                    return Err(MixtureError::NonMonotone {
                        iteration: history.len(),
                        previous: prev,
                        current: ll,
                        history,
                    });
                }
                if config.steps.is_none() && (ll - prev).abs() < config.tol {
                    model.fit_history = history;
                    return Ok((model, memberships));
                }
            }
        }
        if history.len() >= limit {
            model.fit_history = history;
            return Ok((model, memberships));
        }

        let (components, reinitialized) =
            steps::m_step_prepared(&prepared, &memberships, config.degree, config, true)?;
        model.components = components;
        skip_delta_checks = reinitialized;
        previous = Some(ll);
    }
}

/// Hard-assign one curve: argmax of a single-curve E-step, lowest index on
/// ties.
pub fn assign(model: &ClusterModel, curve: &NormalizedCurve) -> Result<Assignment, MixtureError> {
    let batch = assign_batch(model, std::slice::from_ref(curve))?;
    Ok(batch.into_iter().next().expect("one curve in, one assignment out"))
}

pub fn assign_batch(
    model: &ClusterModel,
    curves: &[NormalizedCurve],
) -> Result<Vec<Assignment>, MixtureError> {
    let (memberships, _) = e_step(model, curves)?;
    Ok(curves
        .iter()
        .enumerate()
        .map(|(i, curve)| {
            let (z, pi) = memberships.argmax_row(i);
            Assignment {
                curve_key: curve.key(),
                cluster: z + 1,
                posterior: pi,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
