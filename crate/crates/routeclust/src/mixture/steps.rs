//! Expectation and maximization steps.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bernstein::ControlPoints;
use crate::mixture::prepare::PreparedCurve;
use crate::mixture::{
    ClusterComponent, ClusterModel, FitConfig, MembershipMatrix, MixtureError,
};

/// E-step: per-curve membership rows and the total log-likelihood.
///
/// Densities are combined in log space and each row is normalized with a
/// log-sum-exp, so long curves cannot underflow. The per-curve work runs in
/// parallel; the log-likelihood reduction is an ordered sum over curve
/// indices, which keeps the result independent of the thread count.
pub(crate) fn e_step_prepared(
    model: &ClusterModel,
    prepared: &[PreparedCurve],
) -> Result<(MembershipMatrix, f64), MixtureError> {
    if prepared.is_empty() {
        return Err(MixtureError::EmptyInput);
    }
    let k = model.k();
    let ln_alpha: Vec<f64> = model.components.iter().map(|c| c.alpha.ln()).collect();

    let rows: Vec<(Vec<f64>, f64)> = prepared
        .par_iter()
        .map(|pc| {
            let mut logw = vec![0.0; k];
            for (cluster, component) in model.components.iter().enumerate() {
                let w = ln_alpha[cluster] + pc.log_density(component);
                if !w.is_finite() {
                    return Err(MixtureError::Numerical {
                        curve_key: pc.key.clone(),
                        cluster: cluster + 1,
                    });
                }
                logw[cluster] = w;
            }
            let max = logw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + logw.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
            let mut row: Vec<f64> = logw.iter().map(|w| (w - lse).exp()).collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            Ok((row, lse))
        })
        .collect::<Result<_, _>>()?;

    let log_likelihood: f64 = rows.iter().map(|(_, lse)| lse).sum();
    let mut data = Vec::with_capacity(prepared.len() * k);
    for (row, _) in &rows {
        data.extend_from_slice(row);
    }
    let memberships = MembershipMatrix::new(prepared.len(), k, data)?;
    Ok((memberships, log_likelihood))
}

enum ClusterFit {
    Fitted(ClusterComponent),
    Collapsed,
}

/// M-step: weighted least squares per cluster.
///
/// For each cluster the weighted normal equations are accumulated from the
/// per-curve Gram and moment matrices scaled by the membership weight, so
/// the per-point weight matrix is never formed. Clusters run in parallel;
/// within a cluster, curves are accumulated in index order.
///
/// With `allow_collapse`, clusters whose mass drops below 0.01/k are rebuilt
/// from the curve the surviving components explain worst. Returns the
/// components and whether any cluster was rebuilt.
pub(crate) fn m_step_prepared(
    prepared: &[PreparedCurve],
    memberships: &MembershipMatrix,
    degree: usize,
    config: &FitConfig,
    allow_collapse: bool,
) -> Result<(Vec<ClusterComponent>, bool), MixtureError> {
    let n = prepared.len();
    if n == 0 {
        return Err(MixtureError::EmptyInput);
    }
    if memberships.n() != n {
        return Err(MixtureError::BadMemberships(format!(
            "memberships cover {} curves but {} were supplied",
            memberships.n(),
            n
        )));
    }
    let k = memberships.k();
    let cols = degree + 1;
    let total_points: usize = prepared.iter().map(|pc| pc.m).sum();
    if total_points < cols {
        return Err(MixtureError::ShortOfPoints {
            total: total_points,
            degree,
            needed: cols,
        });
    }

    let collapse_mass = if allow_collapse {
        0.01 * n as f64 / k as f64
    } else {
        0.0
    };

    let fits: Vec<ClusterFit> = (0..k)
        .into_par_iter()
        .map(|cluster| {
            let mut mass = 0.0;
            for i in 0..n {
                mass += memberships.get(i, cluster);
            }
            if allow_collapse && mass < collapse_mass {
                return Ok(ClusterFit::Collapsed);
            }

            let mut gram = DMatrix::<f64>::zeros(cols, cols);
            let mut moment = DMatrix::<f64>::zeros(cols, 2);
            for (i, pc) in prepared.iter().enumerate() {
                let w = memberships.get(i, cluster);
                if w == 0.0 {
                    continue;
                }
                gram.axpy(w, &pc.gram, 1.0);
                moment.axpy(w, &pc.moment, 1.0);
            }

            let chol = gram
                .cholesky()
                .ok_or(MixtureError::DegenerateCluster { cluster: cluster + 1 })?;
            let solved = chol.solve(&moment);
            let theta: Vec<[f64; 2]> =
                (0..cols).map(|p| [solved[(p, 0)], solved[(p, 1)]]).collect();

            // Variance: weighted residual sum over points, normalized by the
            // weighted point count, per axis.
            let mut weighted_sse = [0.0, 0.0];
            let mut weighted_points = 0.0;
            for (i, pc) in prepared.iter().enumerate() {
                let w = memberships.get(i, cluster);
                if w == 0.0 {
                    continue;
                }
                let sse = pc.sse(&theta);
                weighted_sse[0] += w * sse[0];
                weighted_sse[1] += w * sse[1];
                weighted_points += w * pc.m as f64;
            }
            let sigma2 = [
                (weighted_sse[0] / weighted_points).max(config.variance_floor),
                (weighted_sse[1] / weighted_points).max(config.variance_floor),
            ];

            Ok(ClusterFit::Fitted(ClusterComponent {
                theta: ControlPoints::new(theta)?,
                sigma2,
                alpha: mass / n as f64,
            }))
        })
        .collect::<Result<_, MixtureError>>()?;

    let reinitialized = fits.iter().any(|f| matches!(f, ClusterFit::Collapsed));
    let mut components: Vec<Option<ClusterComponent>> = fits
        .into_iter()
        .map(|f| match f {
            ClusterFit::Fitted(c) => Some(c),
            ClusterFit::Collapsed => None,
        })
        .collect();

    if reinitialized {
        rebuild_collapsed(prepared, &mut components, cols, config)?;
    }

    let mut out: Vec<ClusterComponent> = components
        .into_iter()
        .map(|c| c.expect("every cluster fitted or rebuilt"))
        .collect();

    // Floor and renormalize the mixing weights.
    let mut alpha_sum = 0.0;
    for c in &mut out {
        c.alpha = c.alpha.max(config.alpha_floor);
        alpha_sum += c.alpha;
    }
    for c in &mut out {
        c.alpha /= alpha_sum;
    }

    Ok((out, reinitialized))
}

/// Rebuild collapsed components, one per worst-explained curve. The donor
/// curve's own least-squares fit becomes the new mean; its residuals set the
/// variance; the weight restarts at 1/k.
fn rebuild_collapsed(
    prepared: &[PreparedCurve],
    components: &mut [Option<ClusterComponent>],
    cols: usize,
    config: &FitConfig,
) -> Result<(), MixtureError> {
    let survivors: Vec<&ClusterComponent> =
        components.iter().flatten().collect();
    debug_assert!(!survivors.is_empty(), "collapse mass bound keeps >= 1 survivor");

    // Best attainable log-density per curve under the surviving components.
    let best: Vec<f64> = prepared
        .par_iter()
        .map(|pc| {
            survivors
                .iter()
                .map(|c| pc.log_density(c))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut used: Vec<usize> = Vec::new();
    let k = components.len();
    for cluster in 0..k {
        if components[cluster].is_some() {
            continue;
        }
        let donor = best
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite log-densities"))
            .map(|(i, _)| i)
            .ok_or(MixtureError::DegenerateCluster { cluster: cluster + 1 })?;
        used.push(donor);

        let pc = &prepared[donor];
        let theta = match pc.solo_theta() {
            Some(theta) => theta,
            None => pooled_theta(prepared, cols)
                .ok_or(MixtureError::DegenerateCluster { cluster: cluster + 1 })?,
        };
        let sse = pc.sse(&theta);
        let m = pc.m as f64;
        let sigma2 = [
            (sse[0] / m).max(config.variance_floor),
            (sse[1] / m).max(config.variance_floor),
        ];
        components[cluster] = Some(ClusterComponent {
            theta: ControlPoints::new(theta)?,
            sigma2,
            alpha: 1.0 / k as f64,
        });
    }
    Ok(())
}

fn pooled_theta(prepared: &[PreparedCurve], cols: usize) -> Option<Vec<[f64; 2]>> {
    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    let mut moment = DMatrix::<f64>::zeros(cols, 2);
    for pc in prepared {
        gram.axpy(1.0, &pc.gram, 1.0);
        moment.axpy(1.0, &pc.moment, 1.0);
    }
    let chol = gram.cholesky()?;
    let solved = chol.solve(&moment);
    Some((0..cols).map(|p| [solved[(p, 0)], solved[(p, 1)]]).collect())
}
