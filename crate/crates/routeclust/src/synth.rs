//! Synthetic route corpora with known cluster labels.
//!
//! Real tracking data never records which route a player was told to run, so
//! validation works against generated corpora: curves sampled from known
//! Bézier templates with Gaussian noise, scored with the adjusted Rand
//! index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::bernstein::{evaluate_bezier, ControlPoints};
use crate::curve::{CurveMeta, NormalizedCurve};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one template")]
    NoTemplates,
    #[error("template {0:?} has non-positive weight")]
    BadWeight(String),
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("duration range [{min}, {max}] is invalid (need 2 <= min <= max)")]
    BadDurationRange { min: usize, max: usize },
    #[error("partitions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 labeled items, got {0}")]
    TooFewItems(usize),
    #[error("template file is invalid: {0}")]
    BadTemplateFile(#[from] serde_json::Error),
}

/// A named generating curve with a sampling weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub theta: ControlPoints,
    pub weight: f64,
}

/// Generator settings; a corpus is fully determined by these plus the
/// template set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    /// Per-axis noise standard deviation in yards.
    pub noise_sigma: [f64; 2],
    /// Inclusive range of points per curve.
    pub m_range: (usize, usize),
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub curves: Vec<NormalizedCurve>,
    pub metas: Vec<CurveMeta>,
    /// Index into the template list for each curve.
    pub truth: Vec<usize>,
    pub config: GeneratorConfig,
}

/// Eight route shapes loosely following the conventional route tree,
/// shipped as editable JSON.
pub fn default_templates() -> Vec<Template> {
    parse_templates(include_str!("../assets/templates.json"))
        .expect("bundled template set is valid")
}

pub fn parse_templates(json: &str) -> Result<Vec<Template>, SynthError> {
    let templates: Vec<Template> = serde_json::from_str(json)?;
    validate_templates(&templates)?;
    Ok(templates)
}

fn validate_templates(templates: &[Template]) -> Result<(), SynthError> {
    if templates.is_empty() {
        return Err(SynthError::NoTemplates);
    }
    for t in templates {
        if !(t.weight > 0.0 && t.weight.is_finite()) {
            return Err(SynthError::BadWeight(t.name.clone()));
        }
    }
    Ok(())
}

/// Sample a corpus: template drawn by weight, duration uniform in `m_range`,
/// times sorted uniforms pinned to {0, 1}, points on the template curve plus
/// independent per-axis Gaussian noise.
pub fn generate(
    templates: &[Template],
    config: &GeneratorConfig,
) -> Result<SyntheticCorpus, SynthError> {
    validate_templates(templates)?;
    if config.n == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    for &s in &config.noise_sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(SynthError::BadNoise(s));
        }
    }
    let (m_min, m_max) = config.m_range;
    if m_min < 2 || m_min > m_max {
        return Err(SynthError::BadDurationRange { min: m_min, max: m_max });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = [
        Normal::new(0.0, config.noise_sigma[0]).expect("validated sigma"),
        Normal::new(0.0, config.noise_sigma[1]).expect("validated sigma"),
    ];
    let cumulative: Vec<f64> = templates
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t.weight;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();

    let mut curves = Vec::with_capacity(config.n);
    let mut metas = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let draw = rng.random_range(0.0..total);
        let which = cumulative.iter().position(|&c| draw < c).unwrap();
        let template = &templates[which];

        let m = rng.random_range(m_min..=m_max);
        let times = random_times(&mut rng, m);
        let points: Vec<[f64; 2]> = times
            .iter()
            .map(|&t| {
                let base = evaluate_bezier(&template.theta, t).expect("t in [0,1]");
                [
                    base[0] + noise[0].sample(&mut rng),
                    base[1] + noise[1].sample(&mut rng),
                ]
            })
            .collect();

        let player = format!("p{i}");
        let curve = NormalizedCurve::new(
            "synth",
            i.to_string(),
            player.clone(),
            "WR",
            points,
            times,
            false,
        )
        .expect("generated curve satisfies invariants");
        metas.push(CurveMeta::from_curve(&curve, player));
        curves.push(curve);
        truth.push(which);
    }

    Ok(SyntheticCorpus {
        curves,
        metas,
        truth,
        config: config.clone(),
    })
}

/// Strictly increasing times with the endpoints pinned to 0 and 1.
fn random_times(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let mut times = Vec::with_capacity(m);
        times.push(0.0);
        for _ in 0..m - 2 {
            times.push(rng.random_range(0.0..1.0));
        }
        times.push(1.0);
        times[1..m - 1].sort_by(|a, b| a.partial_cmp(b).unwrap());
        if times.windows(2).all(|w| w[0] < w[1]) {
            return times;
        }
    }
}

/// Adjusted Rand index between two partitions, from the pair-counting
/// contingency table. 1 means identical partitions, 0 chance-level
/// agreement.
pub fn adjusted_rand_index(truth: &[usize], predicted: &[usize]) -> Result<f64, SynthError> {
    if truth.len() != predicted.len() {
        return Err(SynthError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.len() < 2 {
        return Err(SynthError::TooFewItems(truth.len()));
    }

    let mut contingency: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut row_sums: BTreeMap<usize, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<usize, u64> = BTreeMap::new();
    for (&a, &b) in truth.iter().zip(predicted.iter()) {
        *contingency.entry((a, b)).or_insert(0) += 1;
        *row_sums.entry(a).or_insert(0) += 1;
        *col_sums.entry(b).or_insert(0) += 1;
    }

    fn comb2(x: u64) -> f64 {
        (x * (x - 1) / 2) as f64
    }

    let sum_cells: f64 = contingency.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = row_sums.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = col_sums.values().map(|&c| comb2(c)).sum();
    let pairs = comb2(truth.len() as u64);

    let expected = sum_rows * sum_cols / pairs;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() == 0.0 {
        // Both partitions are trivial in the same way; call it agreement.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, sigma: f64, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n,
            noise_sigma: [sigma, sigma],
            m_range: (10, 30),
            seed,
        }
    }

    #[test]
    fn default_templates_parse() {
        let templates = default_templates();
        assert_eq!(templates.len(), 8);
        assert!(templates.iter().any(|t| t.name == "go"));
        for t in &templates {
            assert_eq!(t.theta.degree(), 5);
        }
    }

    #[test]
    fn zero_noise_points_lie_on_template() {
        let templates = default_templates();
        let corpus = generate(&templates, &config(10, 0.0, 42)).unwrap();
        assert_eq!(corpus.curves.len(), 10);
        for (curve, &which) in corpus.curves.iter().zip(&corpus.truth) {
            let theta = &templates[which].theta;
            for (point, &t) in curve.points().iter().zip(curve.times()) {
                let expected = evaluate_bezier(theta, t).unwrap();
                assert!((point[0] - expected[0]).abs() < 1e-12);
                assert!((point[1] - expected[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_template_means_uniform_truth() {
        let templates = vec![default_templates().remove(0)];
        let corpus = generate(&templates, &config(10, 0.3, 1)).unwrap();
        assert!(corpus.truth.iter().all(|&z| z == 0));
    }

    #[test]
    fn fixed_seed_reproduces_corpus() {
        let templates = default_templates();
        let a = generate(&templates, &config(25, 0.5, 7)).unwrap();
        let b = generate(&templates, &config(25, 0.5, 7)).unwrap();
        assert_eq!(a.truth, b.truth);
        for (ca, cb) in a.curves.iter().zip(b.curves.iter()) {
            assert_eq!(ca.points(), cb.points());
            assert_eq!(ca.times(), cb.times());
        }
    }

    #[test]
    fn durations_respect_range() {
        let templates = default_templates();
        let corpus = generate(&templates, &config(50, 0.1, 3)).unwrap();
        assert!(corpus.curves.iter().all(|c| (10..=30).contains(&c.len())));
    }

    #[test]
    fn generate_rejects_bad_input() {
        let templates = default_templates();
        assert!(matches!(
            generate(&templates, &config(0, 0.5, 1)),
            Err(SynthError::EmptyCorpus)
        ));
        let mut bad = config(5, 0.5, 1);
        bad.noise_sigma = [-1.0, 0.5];
        assert!(matches!(generate(&templates, &bad), Err(SynthError::BadNoise(_))));
        let mut bad = config(5, 0.5, 1);
        bad.m_range = (1, 5);
        assert!(matches!(
            generate(&templates, &bad),
            Err(SynthError::BadDurationRange { .. })
        ));
        assert!(matches!(generate(&[], &config(5, 0.5, 1)), Err(SynthError::NoTemplates)));
    }

    #[test]
    fn ari_identical_partitions() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        // Relabeled but identical as a partition.
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]).unwrap(), 1.0);
    }

    #[test]
    fn ari_single_cluster_vs_balanced_truth_is_zero() {
        let truth = [0, 0, 0, 1, 1, 1];
        let predicted = [0, 0, 0, 0, 0, 0];
        assert_eq!(adjusted_rand_index(&truth, &predicted).unwrap(), 0.0);
    }

    /// Brute-force all-pairs oracle: classify each of the C(n,2) pairs as
    /// together/apart in each partition and apply the chance-corrected
    /// agreement formula.
    fn ari_pair_oracle(truth: &[usize], predicted: &[usize]) -> f64 {
        let n = truth.len();
        let (mut both, mut truth_only, mut pred_only, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let t = truth[i] == truth[j];
                let p = predicted[i] == predicted[j];
                match (t, p) {
                    (true, true) => both += 1.0,
                    (true, false) => truth_only += 1.0,
                    (false, true) => pred_only += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total = both + truth_only + pred_only + neither;
        let expected = (both + truth_only) * (both + pred_only) / total;
        let max_index = 0.5 * ((both + truth_only) + (both + pred_only));
        (both - expected) / (max_index - expected)
    }

    #[test]
    fn ari_matches_pair_counting_oracle() {
        let truth = [1, 1, 2, 2];
        let predicted = [1, 2, 1, 2];
        let got = adjusted_rand_index(&truth, &predicted).unwrap();
        let want = ari_pair_oracle(&truth, &predicted);
        assert!((got - want).abs() < 1e-12, "got {got}, oracle {want}");

        // A few irregular cases against the same oracle.
        let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let predicted = [0, 1, 0, 1, 1, 2, 2, 0, 2];
        let got = adjusted_rand_index(&truth, &predicted).unwrap();
        let want = ari_pair_oracle(&truth, &predicted);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn ari_rejects_bad_input() {
        assert!(matches!(
            adjusted_rand_index(&[0, 1], &[0, 1, 2]),
            Err(SynthError::LengthMismatch(2, 3))
        ));
        assert!(matches!(
            adjusted_rand_index(&[0], &[0]),
            Err(SynthError::TooFewItems(1))
        ));
    }

    #[test]
    fn per_point_log_density_matches_gaussian_entropy() {
        // Average log-density of generated points under the true template
        // and noise level should approach the analytic value
        // -0.5*ln(2*pi*sx^2) - 0.5*ln(2*pi*sy^2) - 1.
        let templates = default_templates();
        let sigma = [0.5, 0.8];
        let corpus = generate(
            &templates,
            &GeneratorConfig {
                n: 2000,
                noise_sigma: sigma,
                m_range: (15, 35),
                seed: 99,
            },
        )
        .unwrap();

        let mut total = 0.0;
        let mut count = 0usize;
        for (curve, &which) in corpus.curves.iter().zip(&corpus.truth) {
            let theta = &templates[which].theta;
            for (point, &t) in curve.points().iter().zip(curve.times()) {
                let mean = evaluate_bezier(theta, t).unwrap();
                for axis in 0..2 {
                    let var = sigma[axis] * sigma[axis];
                    let d = point[axis] - mean[axis];
                    total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
                }
                count += 1;
            }
        }
        let average = total / count as f64;
        let analytic = -0.5 * (2.0 * std::f64::consts::PI * sigma[0] * sigma[0]).ln()
            - 0.5 * (2.0 * std::f64::consts::PI * sigma[1] * sigma[1]).ln()
            - 1.0;
        assert!(
            (average - analytic).abs() < 0.1 * analytic.abs(),
            "average {average} vs analytic {analytic}"
        );
    }
}
