//! Per-curve quantities that depend only on the time grid and the degree,
//! computed once per fit and reused by every E and M step.

use nalgebra::DMatrix;

use crate::bernstein::design_matrix;
use crate::curve::NormalizedCurve;
use crate::mixture::{ClusterComponent, MixtureError};

pub(crate) struct PreparedCurve {
    pub key: String,
    pub m: usize,
    cols: usize,
    /// Row-major basis values, m x (degree + 1).
    design: Vec<f64>,
    points: Vec<[f64; 2]>,
    /// TᵀT, (degree+1) square.
    pub gram: DMatrix<f64>,
    /// TᵀY, (degree+1) x 2.
    pub moment: DMatrix<f64>,
}

pub(crate) fn prepare(
    curves: &[NormalizedCurve],
    degree: usize,
) -> Result<Vec<PreparedCurve>, MixtureError> {
    curves
        .iter()
        .map(|curve| {
            let design = design_matrix(curve.times(), degree)?;
            let t = design.matrix();
            let y = DMatrix::from_fn(curve.len(), 2, |j, axis| curve.points()[j][axis]);
            let gram = t.transpose() * t;
            let moment = t.transpose() * &y;
            let cols = degree + 1;
            let mut rows = Vec::with_capacity(curve.len() * cols);
            for j in 0..curve.len() {
                for p in 0..cols {
                    rows.push(design.get(j, p));
                }
            }
            Ok(PreparedCurve {
                key: curve.key(),
                m: curve.len(),
                cols,
                design: rows,
                points: curve.points().to_vec(),
                gram,
                moment,
            })
        })
        .collect()
}

impl PreparedCurve {
    /// Per-axis sum of squared residuals of this curve around the Bézier
    /// curve defined by `theta`.
    pub fn sse(&self, theta: &[[f64; 2]]) -> [f64; 2] {
        let mut sse = [0.0, 0.0];
        for j in 0..self.m {
            let row = &self.design[j * self.cols..(j + 1) * self.cols];
            let mut mu = [0.0, 0.0];
            for (b, th) in row.iter().zip(theta) {
                mu[0] += b * th[0];
                mu[1] += b * th[1];
            }
            let d0 = self.points[j][0] - mu[0];
            let d1 = self.points[j][1] - mu[1];
            sse[0] += d0 * d0;
            sse[1] += d1 * d1;
        }
        sse
    }

    /// Log density of the curve under one component: independent Gaussians
    /// per observed point and axis.
    pub fn log_density(&self, component: &ClusterComponent) -> f64 {
        let sse = self.sse(component.theta.points());
        let m = self.m as f64;
        let mut total = 0.0;
        for axis in 0..2 {
            let var = component.sigma2[axis];
            total += -0.5 * m * (2.0 * std::f64::consts::PI * var).ln() - sse[axis] / (2.0 * var);
        }
        total
    }

    /// Least-squares control points of this curve alone, via its own normal
    /// equations. None when the curve cannot support the degree.
    pub fn solo_theta(&self) -> Option<Vec<[f64; 2]>> {
        if self.m < self.cols {
            return None;
        }
        let chol = self.gram.clone().cholesky()?;
        let theta = chol.solve(&self.moment);
        Some((0..self.cols).map(|p| [theta[(p, 0)], theta[(p, 1)]]).collect())
    }
}
