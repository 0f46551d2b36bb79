//! Core curve types shared by the preprocessing, clustering, and synthesis
//! modules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve has {points} points but {times} times")]
    LengthMismatch { points: usize, times: usize },
    #[error("times must start at 0, end at 1, and increase strictly")]
    BadTimes,
    #[error("curve contains a non-finite coordinate")]
    NonFinite,
}

/// A preprocessed route: points in (downfield, lateral) yards with
/// observation times rescaled to [0, 1].
///
/// Curves emitted by the preprocessing pipeline additionally start at the
/// origin; curves sampled from a generative model carry noise on every
/// point, including the first.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCurve {
    pub game_id: String,
    pub play_id: String,
    pub player_id: String,
    pub position_code: String,
    points: Vec<[f64; 2]>,
    times: Vec<f64>,
    pub was_mirrored: bool,
}

impl NormalizedCurve {
    pub fn new(
        game_id: impl Into<String>,
        play_id: impl Into<String>,
        player_id: impl Into<String>,
        position_code: impl Into<String>,
        points: Vec<[f64; 2]>,
        times: Vec<f64>,
        was_mirrored: bool,
    ) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints(points.len()));
        }
        if points.len() != times.len() {
            return Err(CurveError::LengthMismatch {
                points: points.len(),
                times: times.len(),
            });
        }
        if !points.iter().all(|p| p[0].is_finite() && p[1].is_finite()) {
            return Err(CurveError::NonFinite);
        }
        let m = times.len();
        if times[0] != 0.0 || times[m - 1] != 1.0 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CurveError::BadTimes);
        }
        Ok(Self {
            game_id: game_id.into(),
            play_id: play_id.into(),
            player_id: player_id.into(),
            position_code: position_code.into(),
            points,
            times,
            was_mirrored,
        })
    }

    /// Stable key identifying this curve across files: `game|play|player`.
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.game_id, self.play_id, self.player_id)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least 2 points
    }

    /// Last observed point; the k-means initialization clusters on these.
    pub fn endpoint(&self) -> [f64; 2] {
        self.points[self.points.len() - 1]
    }
}

/// Per-curve metadata carried alongside the flat point table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub curve_key: String,
    pub game_id: String,
    pub play_id: String,
    pub player_id: String,
    pub display_name: String,
    pub position_code: String,
    pub was_mirrored: bool,
    pub n_points: usize,
}

impl CurveMeta {
    pub fn from_curve(curve: &NormalizedCurve, display_name: impl Into<String>) -> Self {
        Self {
            curve_key: curve.key(),
            game_id: curve.game_id.clone(),
            play_id: curve.play_id.clone(),
            player_id: curve.player_id.clone(),
            display_name: display_name.into(),
            position_code: curve.position_code.clone(),
            was_mirrored: curve.was_mirrored,
            n_points: curve.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: Vec<[f64; 2]>, times: Vec<f64>) -> Result<NormalizedCurve, CurveError> {
        NormalizedCurve::new("g", "p", "r", "WR", points, times, false)
    }

    #[test]
    fn accepts_well_formed_curve() {
        let c = curve(vec![[0.0, 0.0], [1.0, 2.0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.key(), "g|p|r");
        assert_eq!(c.endpoint(), [1.0, 2.0]);
    }

    #[test]
    fn rejects_single_point() {
        assert!(matches!(
            curve(vec![[0.0, 0.0]], vec![0.0]),
            Err(CurveError::TooFewPoints(1))
        ));
    }

    #[test]
    fn rejects_bad_time_grid() {
        // does not end at 1
        assert!(curve(vec![[0.0, 0.0], [1.0, 0.0]], vec![0.0, 0.9]).is_err());
        // not strictly increasing
        assert!(curve(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![0.0, 0.5, 0.5]
        )
        .is_err());
    }

    #[test]
    fn rejects_non_finite_points() {
        assert!(matches!(
            curve(vec![[0.0, 0.0], [f64::NAN, 1.0]], vec![0.0, 1.0]),
            Err(CurveError::NonFinite)
        ));
    }
}
