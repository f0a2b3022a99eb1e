//! Per-episode off-policy statistics and regression inputs.
//!
//! For a fixed evaluation policy π and data logged under behavior policies
//! β_i this module computes, per episode i:
//!
//! - the return `G_i`,
//! - the full-trajectory importance ratio `ρ_i = Π_t π/β_i`,
//! - the per-decision IS estimate `Ĵ_i = Σ_t ρ_i^t R_i^t`,
//! - the prefix-normalized estimate `J̃_i = ρ_i G_i / ((n/i) Σ_{k≤i} ρ_k)`,
//! - the instrument `Z_i = [G_i, J̃_i]`,
//!
//! and assembles the two weighted stages of the instrument-variable
//! auto-regression. PDIS is used for `Ĵ_i`; the full ratio `ρ_i` corrects the
//! meta-transition. The two must not be conflated.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::envs::{DomainId, EpisodeHistory};
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::regress::{weighted_least_squares, ArModel, FitDiagnostics};

/// Threshold on `Σ ρ_j ρ_{j+1}` below which the stage-2 sample is unusable.
pub const MIN_WEIGHT_MASS: f64 = 1e-12;

/// Ordered episodes logged in one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub domain: DomainId,
    pub episodes: Vec<EpisodeHistory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Long-format CSV `episode,t,observation,action,reward,behavior_prob`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "t", "observation", "action", "reward", "behavior_prob", "truncated"])?;
        for ep in &self.episodes {
            for (t, s) in ep.steps.iter().enumerate() {
                out.write_record([
                    ep.episode_index.to_string(),
                    t.to_string(),
                    s.observation.to_string(),
                    s.action.to_string(),
                    s.reward.to_string(),
                    s.behavior_prob.to_string(),
                    u8::from(ep.truncated).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(domain: DomainId, reader: R) -> Result<Self> {
        type Row = (u64, usize, usize, usize, f64, f64, u8);
        let mut input = csv::Reader::from_reader(reader);
        let mut episodes: Vec<EpisodeHistory> = Vec::new();
        for (line, record) in input.deserialize::<Row>().enumerate() {
            let (episode, t, observation, action, reward, behavior_prob, truncated) =
                record.map_err(|e| Error::Schema { line: line + 2, message: e.to_string() })?;
            let step = crate::envs::Step { observation, action, reward, behavior_prob };
            match episodes.last_mut() {
                Some(ep) if ep.episode_index == episode => {
                    if t != ep.steps.len() {
                        return Err(Error::Schema { line: line + 2, message: format!("step {t} out of order") });
                    }
                    ep.steps.push(step);
                }
                last => {
                    if let Some(prev) = last {
                        if episode <= prev.episode_index {
                            return Err(Error::Schema {
                                line: line + 2,
                                message: format!("episode {episode} out of order"),
                            });
                        }
                    }
                    if t != 0 {
                        return Err(Error::Schema { line: line + 2, message: "episode must start at t = 0".into() });
                    }
                    episodes.push(EpisodeHistory {
                        episode_index: episode,
                        steps: vec![step],
                        truncated: truncated != 0,
                    });
                }
            }
        }
        Ok(Self { domain, episodes })
    }
}

fn step_ratio(pi: &Policy, observation: usize, action: usize, behavior_prob: f64) -> Result<f64> {
    if !(behavior_prob > 0.0) {
        return Err(Error::ZeroBehaviorProbability { observation, action });
    }
    Ok(pi.prob(observation, action)? / behavior_prob)
}

/// Per-decision importance sampling estimate `Σ_t (Π_{j≤t} π/β) R_t`.
pub fn pdis_estimate(history: &EpisodeHistory, pi: &Policy) -> Result<f64> {
    let mut ratio = 1.0;
    let mut total = 0.0;
    for s in &history.steps {
        ratio *= step_ratio(pi, s.observation, s.action, s.behavior_prob)?;
        total += ratio * s.reward;
    }
    Ok(total)
}

/// Full-trajectory importance ratio `ρ = Π_t π/β`.
pub fn trajectory_ratio(history: &EpisodeHistory, pi: &Policy) -> Result<f64> {
    history.steps.iter().try_fold(1.0, |acc, s| Ok(acc * step_ratio(pi, s.observation, s.action, s.behavior_prob)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSeries {
    pub g: Vec<f64>,
    pub rho: Vec<f64>,
    pub j_hat: Vec<f64>,
    pub j_tilde: Vec<f64>,
}

impl PerformanceSeries {
    /// Builds a series from raw per-episode returns and ratios, deriving the
    /// instrument component `J̃`. `j_hat` is supplied by the caller.
    pub fn from_parts(g: Vec<f64>, rho: Vec<f64>, j_hat: Vec<f64>) -> Result<Self> {
        let n = g.len();
        if rho.len() != n || j_hat.len() != n {
            return Err(Error::DimensionMismatch("series components differ in length".into()));
        }
        if rho.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::NonFinite("importance ratios".into()));
        }
        let j_tilde = prefix_normalized(&g, &rho);
        Ok(Self { g, rho, j_hat, j_tilde })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Instrument `Z_i = [G_i, J̃_i]`.
    pub fn z(&self, i: usize) -> [f64; 2] {
        [self.g[i], self.j_tilde[i]]
    }

    pub fn max_abs_return(&self) -> f64 {
        self.g.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// CSV `i,G,rho,j_hat,j_tilde` with 1-based episode numbers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["i", "G", "rho", "j_hat", "j_tilde"])?;
        for i in 0..self.len() {
            out.write_record([
                (i + 1).to_string(),
                self.g[i].to_string(),
                self.rho[i].to_string(),
                self.j_hat[i].to_string(),
                self.j_tilde[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `J̃_i = ρ_i G_i / ((n/i) Σ_{k≤i} ρ_k)` with 1-based `i`; zero when the
/// prefix carries no ratio mass.
fn prefix_normalized(g: &[f64], rho: &[f64]) -> Vec<f64> {
    let n = g.len() as f64;
    let mut prefix = 0.0;
    g.iter()
        .zip(rho)
        .enumerate()
        .map(|(idx, (g, r))| {
            prefix += r;
            let i = (idx + 1) as f64;
            let denom = (n / i) * prefix;
            if denom > 0.0 {
                r * g / denom
            } else {
                0.0
            }
        })
        .collect()
}

pub fn build_performance_series(dataset: &Dataset, pi: &Policy) -> Result<PerformanceSeries> {
    let mut g = Vec::with_capacity(dataset.len());
    let mut rho = Vec::with_capacity(dataset.len());
    let mut j_hat = Vec::with_capacity(dataset.len());
    for ep in &dataset.episodes {
        g.push(ep.episode_return());
        rho.push(trajectory_ratio(ep, pi)?);
        j_hat.push(pdis_estimate(ep, pi)?);
    }
    PerformanceSeries::from_parts(g, rho, j_hat)
}

fn self_normalized(g: &[f64], rho: &[f64]) -> Result<f64> {
    let mass: f64 = rho.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::IneffectiveSample("all importance ratios are zero".into()));
    }
    Ok(g.iter().zip(rho).map(|(g, r)| g * r).sum::<f64>() / mass)
}

/// Weighted importance sampling over every episode: `Σ ρ_i G_i / Σ ρ_i`.
pub fn wis_estimate(series: &PerformanceSeries) -> Result<f64> {
    self_normalized(&series.g, &series.rho)
}

/// WIS over the most recent `window` episodes.
pub fn swis_estimate(series: &PerformanceSeries, window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidConfig("sliding window must be positive".into()));
    }
    if window > series.len() {
        return Err(Error::InsufficientEpisodes { needed: window, available: series.len() });
    }
    let start = series.len() - window;
    self_normalized(&series.g[start..], &series.rho[start..])
}

/// Rows of a weighted regression stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// 0-based episode index `e` each row belongs to.
    pub episodes: Vec<usize>,
    pub targets: Vec<f64>,
    /// Normalized to sum to one over the rows.
    pub weights: Vec<f64>,
}

/// Inputs to the two-stage importance-weighted IV regression with `p` lags.
///
/// With 1-based episode `i`, stage 1 has rows `i = p+1..n` mapping the
/// instruments `Z_{i-p..i-1}` to its target, and stage 2 has rows
/// `i = 2p..n-1` mapping the denoised values `J̄_{i-p+1..i}` to its target.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub p: usize,
    /// Per-episode instrument vectors (all of the same dimension).
    pub instruments: Vec<Vec<f64>>,
    pub stage1: Stage,
    pub stage2: Stage,
    pub intercept: bool,
}

fn normalize(raw: Vec<f64>, label: &str) -> Result<Vec<f64>> {
    if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::NonFinite(format!("{label} weights")));
    }
    let mass: f64 = raw.iter().sum();
    if mass < MIN_WEIGHT_MASS {
        return Err(Error::IneffectiveSample(format!("{label} weight mass {mass:e} is below {MIN_WEIGHT_MASS:e}")));
    }
    Ok(raw.into_iter().map(|w| w / mass).collect())
}

impl RegressionProblem {
    /// Assembles the stage rows from per-episode arrays of length `n`.
    /// Stage-2 arrays are indexed by the row's episode; their last entry
    /// (episode `n`) is never used.
    pub fn from_episode_arrays(
        p: usize,
        instruments: Vec<Vec<f64>>,
        stage1_targets: &[f64],
        stage1_raw_weights: &[f64],
        stage2_targets: &[f64],
        stage2_raw_weights: &[f64],
        intercept: bool,
    ) -> Result<Self> {
        let n = instruments.len();
        if p == 0 {
            return Err(Error::InvalidConfig("lag order p must be at least 1".into()));
        }
        if n < 2 * p + 1 {
            return Err(Error::InsufficientEpisodes { needed: 2 * p + 1, available: n });
        }
        for (len, what) in [
            (stage1_targets.len(), "stage-1 targets"),
            (stage1_raw_weights.len(), "stage-1 weights"),
            (stage2_targets.len(), "stage-2 targets"),
            (stage2_raw_weights.len(), "stage-2 weights"),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{what} has length {len}, expected {n}")));
            }
        }
        let dim = instruments[0].len();
        if dim == 0 || instruments.iter().any(|z| z.len() != dim) {
            return Err(Error::DimensionMismatch("instrument vectors differ in dimension".into()));
        }
        let s1: Vec<usize> = (p..n).collect();
        let s2: Vec<usize> = (2 * p - 1..n - 1).collect();
        let stage1 = Stage {
            targets: s1.iter().map(|&e| stage1_targets[e]).collect(),
            weights: normalize(s1.iter().map(|&e| stage1_raw_weights[e]).collect(), "stage-1")?,
            episodes: s1,
        };
        let stage2 = Stage {
            targets: s2.iter().map(|&e| stage2_targets[e]).collect(),
            weights: normalize(s2.iter().map(|&e| stage2_raw_weights[e]).collect(), "stage-2")?,
            episodes: s2,
        };
        Ok(Self { p, instruments, stage1, stage2, intercept })
    }

    pub fn instrument_dim(&self) -> usize {
        self.instruments[0].len()
    }

    pub fn n_episodes(&self) -> usize {
        self.instruments.len()
    }

    /// Stage-1 feature row for 0-based episode `e`: the instruments of
    /// episodes `e-1, e-2, …, e-p` (most recent first), then the intercept.
    pub fn stage1_features(&self, e: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.p * self.instrument_dim() + 1);
        for k in 1..=self.p {
            row.extend_from_slice(&self.instruments[e - k]);
        }
        if self.intercept {
            row.push(1.0);
        }
        row
    }
}

/// Double-counterfactual regression inputs for the OPEN estimator.
///
/// Stage 1 regresses `G_i` on the lagged instruments with weights
/// `ρ̄_i ∝ ρ_i`; stage 2 regresses `G_{i+1}` on the denoised lags with weights
/// `ρ†_i ∝ ρ_i ρ_{i+1}`, which carries both the correction for the data
/// distribution in episode `i+1` and for the meta-transition out of episode `i`.
pub fn build_regression_targets(series: &PerformanceSeries, p: usize) -> Result<RegressionProblem> {
    let n = series.len();
    let instruments = (0..n).map(|i| series.z(i).to_vec()).collect();
    let mut s2_targets = vec![0.0; n];
    let mut s2_weights = vec![0.0; n];
    for e in 0..n.saturating_sub(1) {
        s2_targets[e] = series.g[e + 1];
        s2_weights[e] = series.rho[e] * series.rho[e + 1];
    }
    RegressionProblem::from_episode_arrays(p, instruments, &series.g, &series.rho, &s2_targets, &s2_weights, true)
}

/// Result of the naive auto-regression on raw PDIS estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveFit {
    pub model: ArModel,
    /// True when the normal equations were (near-)singular and the ridge
    /// fallback determined the solution.
    pub degenerate: bool,
}

/// Least-squares fit of `ρ_i Ĵ_{i+1}` on the raw lags `Ĵ_i, …, Ĵ_{i-p+1}`
/// (plus intercept). Inconsistent under noisy inputs; kept to demonstrate the
/// attenuation that the IV fit removes.
pub fn naive_ar_fit(series: &PerformanceSeries, p: usize) -> Result<NaiveFit> {
    naive_ar_fit_with(series, p, true)
}

pub fn naive_ar_fit_with(series: &PerformanceSeries, p: usize, intercept: bool) -> Result<NaiveFit> {
    let n = series.len();
    if p == 0 {
        return Err(Error::InvalidConfig("lag order p must be at least 1".into()));
    }
    if n < p + 2 {
        return Err(Error::InsufficientEpisodes { needed: p + 2, available: n });
    }
    // 0-based rows e = p-1..n-2: lags Ĵ_e, …, Ĵ_{e-p+1} → ρ_e Ĵ_{e+1}
    let rows: Vec<usize> = (p - 1..n - 1).collect();
    let cols = p + usize::from(intercept);
    let x = DMatrix::from_fn(rows.len(), cols, |r, c| if c < p { series.j_hat[rows[r] - c] } else { 1.0 });
    let y: Vec<f64> = rows.iter().map(|&e| series.rho[e] * series.j_hat[e + 1]).collect();
    let w = vec![1.0; rows.len()];
    let fit = weighted_least_squares(&x, &y, &w)?;
    let mut theta = fit.coefficients.clone();
    if !intercept {
        theta.push(0.0);
    }
    let degenerate = fit.degenerate;
    Ok(NaiveFit {
        model: ArModel {
            p,
            theta,
            phi: Vec::new(),
            intercept,
            diagnostics: FitDiagnostics { stage1: None, stage2: fit.diagnostics() },
        },
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Step;

    fn history(steps: &[(usize, usize, f64, f64)]) -> EpisodeHistory {
        EpisodeHistory {
            episode_index: 0,
            steps: steps
                .iter()
                .map(|&(o, a, r, b)| Step { observation: o, action: a, reward: r, behavior_prob: b })
                .collect(),
            truncated: false,
        }
    }

    fn two_action(q: f64) -> Policy {
        Policy::constant_row(2, vec![1.0 - q, q]).unwrap()
    }

    #[test]
    fn single_step_pdis() {
        let pi = two_action(0.8);
        let h = history(&[(0, 1, 10.0, 0.4)]);
        assert!((pdis_estimate(&h, &pi).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn on_policy_collapse() {
        let pi = two_action(0.3);
        let h = history(&[(0, 1, 1.0, 0.3), (1, 0, 2.0, 0.7), (0, 0, -4.0, 0.7)]);
        assert_eq!(trajectory_ratio(&h, &pi).unwrap(), 1.0);
        assert_eq!(pdis_estimate(&h, &pi).unwrap(), h.episode_return());
    }

    #[test]
    fn ratios_multiply() {
        let pi = two_action(0.5);
        // ratios 2 (0.5/0.25) and 0.5 (0.5/1.0)
        let h = history(&[(0, 1, 0.0, 0.25), (0, 1, 0.0, 1.0)]);
        assert_eq!(trajectory_ratio(&h, &pi).unwrap(), 1.0);
    }

    #[test]
    fn zero_behavior_probability_is_rejected() {
        let pi = two_action(0.5);
        let h = history(&[(0, 1, 1.0, 0.0)]);
        assert!(matches!(pdis_estimate(&h, &pi), Err(Error::ZeroBehaviorProbability { .. })));
        assert!(trajectory_ratio(&h, &pi).is_err());
    }

    fn series(g: &[f64], rho: &[f64]) -> PerformanceSeries {
        let j_hat = g.iter().zip(rho).map(|(g, r)| g * r).collect();
        PerformanceSeries::from_parts(g.to_vec(), rho.to_vec(), j_hat).unwrap()
    }

    #[test]
    fn wis_examples() {
        assert_eq!(wis_estimate(&series(&[2.0, 6.0], &[1.0, 3.0])).unwrap(), 5.0);
        assert!((wis_estimate(&series(&[7.0], &[0.3])).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(wis_estimate(&series(&[1.0, 2.0, 6.0], &[1.0; 3])).unwrap(), 3.0);
        assert!(matches!(wis_estimate(&series(&[1.0, 2.0], &[0.0, 0.0])), Err(Error::IneffectiveSample(_))));
    }

    #[test]
    fn swis_examples() {
        let s = series(&[1.0, 4.0, 2.0, 9.0], &[0.5, 2.0, 1.0, 1.5]);
        assert_eq!(swis_estimate(&s, 4).unwrap(), wis_estimate(&s).unwrap());
        assert_eq!(swis_estimate(&s, 1).unwrap(), 9.0);
        assert!(swis_estimate(&s, 0).is_err());
        assert!(swis_estimate(&s, 5).is_err());

        let mut g = vec![100.0; 10];
        g.extend([3.5; 400]);
        let mut rho = vec![2.0; 10];
        rho.extend([1.0; 400]);
        assert_eq!(swis_estimate(&series(&g, &rho), 400).unwrap(), 3.5);
    }

    #[test]
    fn prefix_normalized_examples() {
        let s = series(&[4.0, 6.0], &[1.0, 1.0]);
        assert_eq!(s.j_tilde, vec![2.0, 3.0]);
        let g = [3.0, 5.0, 7.0, 9.0];
        let s = series(&g, &[1.0; 4]);
        for (jt, g) in s.j_tilde.iter().zip(g) {
            assert!((jt - g / 4.0).abs() < 1e-15);
        }
        assert_eq!(s.z(1).len(), 2);
    }

    #[test]
    fn stage_weights_on_policy_are_uniform() {
        let n = 12;
        let s = series(&vec![1.0; n], &vec![1.0; n]);
        let prob = build_regression_targets(&s, 1).unwrap();
        assert!(prob.stage1.weights.iter().all(|w| (w - 1.0 / (n as f64 - 1.0)).abs() < 1e-15));
        assert!(prob.stage2.weights.iter().all(|w| (w - 1.0 / (n as f64 - 2.0)).abs() < 1e-15));
    }

    #[test]
    fn stage1_weight_example() {
        let s = series(&[1.0, 1.0, 1.0], &[1.0, 2.0, 1.0]);
        let prob = build_regression_targets(&s, 1).unwrap();
        assert_eq!(prob.stage1.episodes, vec![1, 2]);
        assert!((prob.stage1.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((prob.stage1.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(prob.stage2.episodes, vec![1]);
    }

    #[test]
    fn regression_rows_follow_lag_ranges() {
        let n = 11;
        let g: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = series(&g, &vec![1.0; n]);
        let prob = build_regression_targets(&s, 3).unwrap();
        // 1-based stage-1 rows i = 4..=11, stage-2 rows i = 6..=10
        assert_eq!(prob.stage1.episodes, (3..11).collect::<Vec<_>>());
        assert_eq!(prob.stage2.episodes, (5..10).collect::<Vec<_>>());
        assert_eq!(prob.stage2.targets[0], g[6]);
        let f = prob.stage1_features(3);
        assert_eq!(f.len(), 3 * 2 + 1);
        assert_eq!(f[0], g[2]);
        assert_eq!(f[4], g[0]);
        assert!(build_regression_targets(&series(&g[..6], &[1.0; 6]), 3).is_err());
    }

    #[test]
    fn zero_stage2_mass_is_an_ineffective_sample() {
        // alternating zeros make every ρ_i ρ_{i+1} vanish
        let rho: Vec<f64> = (0..9).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let s = series(&[1.0; 9], &rho);
        assert!(matches!(build_regression_targets(&s, 1), Err(Error::IneffectiveSample(_))));
    }

    #[test]
    fn naive_recovers_noiseless_slope() {
        let mut g = vec![10.0];
        for _ in 1..60 {
            g.push(g.last().unwrap() * 0.9);
        }
        let s = series(&g, &vec![1.0; g.len()]);
        let fit = naive_ar_fit(&s, 1).unwrap();
        assert!((fit.model.theta[0] - 0.9).abs() < 1e-6, "{:?}", fit.model.theta);
    }

    #[test]
    fn naive_flags_constant_series() {
        let s = series(&[3.0; 20], &[1.0; 20]);
        let fit = naive_ar_fit(&s, 1).unwrap();
        assert!(fit.degenerate);
        assert!(fit.model.theta.iter().all(|t| t.is_finite()));
        assert!(naive_ar_fit(&series(&[1.0; 2], &[1.0; 2]), 1).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = Dataset {
            domain: DomainId::RoboToyActive,
            episodes: (0..3)
                .map(|i| EpisodeHistory {
                    episode_index: i,
                    steps: vec![Step { observation: 0, action: 1, reward: 9.5 + i as f64, behavior_prob: 0.4 }],
                    truncated: false,
                })
                .collect(),
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(DomainId::RoboToyActive, buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stage_weights_are_distributions(rho in proptest::collection::vec(0.01f64..5.0, 9..40), p in 1usize..4) {
                let g: Vec<f64> = (0..rho.len()).map(|i| (i as f64).sin()).collect();
                let s = series(&g, &rho);
                prop_assume!(rho.len() > 2 * p);
                let prob = build_regression_targets(&s, p).unwrap();
                for stage in [&prob.stage1, &prob.stage2] {
                    prop_assert!((stage.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(stage.weights.iter().all(|w| (0.0..=1.0).contains(w)));
                }
            }

            #[test]
            fn prefix_statistics_ignore_later_episodes(
                g in proptest::collection::vec(-5.0f64..5.0, 6..30),
                rho in proptest::collection::vec(0.0f64..3.0, 30),
                cut in 1usize..5,
                noise in -10.0f64..10.0,
            ) {
                let n = g.len();
                let rho = &rho[..n];
                let base = series(&g, rho);
                let mut g2 = g.clone();
                let mut rho2 = rho.to_vec();
                for k in cut..n {
                    g2[k] += noise;
                    rho2[k] = (rho2[k] + noise.abs()).min(7.0);
                }
                let changed = series(&g2, &rho2);
                for i in 0..cut {
                    prop_assert_eq!(base.j_tilde[i], changed.j_tilde[i]);
                    prop_assert_eq!(base.z(i), changed.z(i));
                }
            }
        }
    }
}
