//! Bernstein basis evaluation, Bézier curves, and least-squares fitting of
//! control points.
//!
//! A planar Bézier curve of degree `P` is `B(t) = Σ_p θ_p · b_p(t)` for
//! `t ∈ [0, 1]`, where `b_p(t) = C(P,p) tᵖ (1−t)^(P−p)` and the weights
//! `θ_0..θ_P` are the control points. Stacking the basis values at a curve's
//! observation times gives a design matrix, so fitting control points to an
//! observed trajectory is an ordinary least-squares problem solved per
//! coordinate axis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::NormalizedCurve;

/// Singular values below this are treated as rank deficiency.
const RANK_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BernsteinError {
    #[error("basis index {index} exceeds degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },
    #[error("parameter t = {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("design matrix needs at least one time sample")]
    EmptyTimes,
    #[error("control points need at least one row")]
    EmptyControlPoints,
    #[error("control points must be finite")]
    NonFiniteControlPoints,
    #[error("{points} samples cannot determine a degree-{degree} fit (need {needed})")]
    Underdetermined {
        points: usize,
        degree: usize,
        needed: usize,
    },
    #[error("design matrix is rank-deficient (rank {rank} < {cols}); are times duplicated?")]
    SingularSystem { rank: usize, cols: usize },
}

/// Control points of a planar Bézier curve. Row `p` weights basis term `p`;
/// columns are (downfield, lateral) in yards.
///
/// Serializes as a bare `[[x, y], …]` array.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ControlPoints {
    points: Vec<[f64; 2]>,
}

impl<'de> Deserialize<'de> for ControlPoints {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let points = Vec::<[f64; 2]>::deserialize(deserializer)?;
        ControlPoints::new(points).map_err(serde::de::Error::custom)
    }
}

impl ControlPoints {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, BernsteinError> {
        if points.is_empty() {
            return Err(BernsteinError::EmptyControlPoints);
        }
        if !points.iter().all(|p| p[0].is_finite() && p[1].is_finite()) {
            return Err(BernsteinError::NonFiniteControlPoints);
        }
        Ok(Self { points })
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
}

/// Bernstein basis values at a curve's observation times: entry `(j, p)` is
/// `b_p(t_j)`. Every row sums to 1 and all entries lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    inner: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn degree(&self) -> usize {
        self.inner.ncols() - 1
    }

    pub fn get(&self, row: usize, term: usize) -> f64 {
        self.inner[(row, term)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Binomial coefficient via the multiplicative recurrence. Each intermediate
/// is the integer C(n−k+i, i), so the result is exact in f64 for n ≤ 30.
fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 1..=k {
        c = c * (n - k + i) as f64 / i as f64;
    }
    c
}

fn basis_unchecked(index: usize, degree: usize, t: f64) -> f64 {
    binomial(degree, index) * t.powi(index as i32) * (1.0 - t).powi((degree - index) as i32)
}

/// Bernstein basis polynomial `b_index` of the given degree at `t`.
pub fn basis(index: usize, degree: usize, t: f64) -> Result<f64, BernsteinError> {
    if index > degree {
        return Err(BernsteinError::IndexOutOfRange { index, degree });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(BernsteinError::ParameterOutOfRange(t));
    }
    Ok(basis_unchecked(index, degree, t))
}

/// Evaluate all basis terms of a degree at the given times.
pub fn design_matrix(times: &[f64], degree: usize) -> Result<DesignMatrix, BernsteinError> {
    if times.is_empty() {
        return Err(BernsteinError::EmptyTimes);
    }
    if let Some(&t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(BernsteinError::ParameterOutOfRange(t));
    }
    let inner = DMatrix::from_fn(times.len(), degree + 1, |j, p| {
        basis_unchecked(p, degree, times[j])
    });
    Ok(DesignMatrix { inner })
}

/// Point on the Bézier curve defined by `control` at parameter `t`.
pub fn evaluate_bezier(control: &ControlPoints, t: f64) -> Result<[f64; 2], BernsteinError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(BernsteinError::ParameterOutOfRange(t));
    }
    let degree = control.degree();
    let mut out = [0.0, 0.0];
    for (p, point) in control.points().iter().enumerate() {
        let b = basis_unchecked(p, degree, t);
        out[0] += b * point[0];
        out[1] += b * point[1];
    }
    Ok(out)
}

/// Sample the curve at `count` evenly spaced parameters from 0 to 1.
pub fn sample_bezier(control: &ControlPoints, count: usize) -> Vec<[f64; 2]> {
    assert!(count >= 2, "need at least the two endpoints");
    (0..count)
        .map(|j| {
            let t = j as f64 / (count - 1) as f64;
            evaluate_bezier(control, t).expect("t is in [0, 1] by construction")
        })
        .collect()
}

/// Least-squares control points for `points` observed at `times`, solved per
/// axis through a singular value decomposition of the design matrix.
pub fn fit_points(
    times: &[f64],
    points: &[[f64; 2]],
    degree: usize,
) -> Result<ControlPoints, BernsteinError> {
    let cols = degree + 1;
    if times.len() < cols {
        return Err(BernsteinError::Underdetermined {
            points: times.len(),
            degree,
            needed: cols,
        });
    }
    let design = design_matrix(times, degree)?;
    let rhs = DMatrix::from_fn(points.len(), 2, |j, axis| points[j][axis]);
    let svd = design.inner.svd(true, true);
    let rank = svd.rank(RANK_EPS);
    if rank < cols {
        return Err(BernsteinError::SingularSystem { rank, cols });
    }
    let theta = svd
        .solve(&rhs, RANK_EPS)
        .map_err(|_| BernsteinError::SingularSystem { rank, cols })?;
    ControlPoints::new((0..cols).map(|p| [theta[(p, 0)], theta[(p, 1)]]).collect())
}

/// Fit a single observed curve with ordinary least squares.
pub fn fit_control_points(
    curve: &NormalizedCurve,
    degree: usize,
) -> Result<ControlPoints, BernsteinError> {
    fit_points(curve.times(), curve.points(), degree)
}
