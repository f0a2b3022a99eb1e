//! Auto-regressive rollout and the single predictor interface shared by all
//! algorithms.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    build_performance_series, build_regression_targets, naive_ar_fit, swis_estimate, wis_estimate, Dataset,
    PerformanceSeries,
};
use crate::policies::Policy;
use crate::regress::{prowls_fit, prowls_forecast, two_stage_iv_fit_with, ArModel, Shrinkage};

/// Rollout values beyond this multiple of `max |G|` are clipped.
pub const DIVERGENCE_FACTOR: f64 = 1e4;

pub mod flag {
    pub const DIVERGENT: &str = "divergent-forecast";
    pub const WEAK_INSTRUMENT: &str = "weak-instrument";
    pub const ILL_CONDITIONED: &str = "ill-conditioned";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "OPEN")]
    Open,
    #[serde(rename = "ProWLS")]
    ProWls,
    #[serde(rename = "WIS")]
    Wis,
    #[serde(rename = "SWIS")]
    Swis,
    #[serde(rename = "NaiveAR")]
    NaiveAr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Open, Algorithm::ProWls, Algorithm::Wis, Algorithm::Swis, Algorithm::NaiveAr];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Open => "OPEN",
            Algorithm::ProWls => "ProWLS",
            Algorithm::Wis => "WIS",
            Algorithm::Swis => "SWIS",
            Algorithm::NaiveAr => "NaiveAR",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// Hyper-parameters of every algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoParams {
    /// OPEN lag order.
    pub open_p: usize,
    /// Pro-WLS Fourier order.
    pub prowls_d: usize,
    /// SWIS window length.
    pub swis_window: usize,
    /// Naive AR lag order.
    pub naive_p: usize,
    /// Shrinkage of OPEN's stage-2 regression.
    pub open_shrinkage: Shrinkage,
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self { open_p: 400, prowls_d: 5, swis_window: 400, naive_p: 1, open_shrinkage: Shrinkage::Gcv }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// Predicted `J_{n+1..n+L}`.
    pub per_episode: Vec<f64>,
    /// `Σ per_episode`.
    pub total: f64,
    pub algorithm: Algorithm,
    pub flags: Vec<String>,
    pub provenance: Option<Provenance>,
}

impl Forecast {
    fn new(algorithm: Algorithm, per_episode: Vec<f64>, flags: Vec<String>) -> Self {
        let total = per_episode.iter().sum();
        Self { per_episode, total, algorithm, flags, provenance: None }
    }

    pub fn flat(algorithm: Algorithm, value: f64, horizon: usize) -> Self {
        Self::new(algorithm, vec![value; horizon], Vec::new())
    }

    pub fn has_flag(&self, name: &str) -> bool {
        self.flags.iter().any(|f| f == name)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// CSV `episode_index,predicted_J` with episodes numbered from `first_episode`.
    pub fn write_csv<W: Write>(&self, writer: W, first_episode: u64) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode_index", "predicted_J"])?;
        for (k, v) in self.per_episode.iter().enumerate() {
            out.write_record([(first_episode + k as u64).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Iterates the fitted model `horizon` times, feeding predictions back into
/// the lag window. Values whose magnitude exceeds `clip` are clipped and the
/// forecast is flagged as divergent.
pub fn rollout(model: &ArModel, seed_lags: &[f64], horizon: usize, clip: Option<f64>) -> Result<(Vec<f64>, bool)> {
    if seed_lags.len() != model.p {
        return Err(Error::DimensionMismatch(format!("rollout needs {} lags, got {}", model.p, seed_lags.len())));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("forecast horizon must be at least 1".into()));
    }
    if !model.is_finite() || seed_lags.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rollout inputs".into()));
    }
    // window[0] is the most recent value
    let mut window = seed_lags.to_vec();
    let mut out = Vec::with_capacity(horizon);
    let mut divergent = false;
    for _ in 0..horizon {
        let mut next = model.predict_next(&window);
        if let Some(bound) = clip {
            if !next.is_finite() || next.abs() > bound {
                next = if next.is_nan() { 0.0 } else { next.clamp(-bound, bound) };
                divergent = true;
            }
        }
        out.push(next);
        window.pop();
        window.insert(0, next);
    }
    Ok((out, divergent))
}

fn model_flags(model: &ArModel, divergent: bool) -> Vec<String> {
    let mut flags = Vec::new();
    if divergent {
        flags.push(flag::DIVERGENT.to_string());
    }
    if model.diagnostics.weak_instrument() {
        flags.push(flag::WEAK_INSTRUMENT.to_string());
    }
    if model.diagnostics.degenerate() {
        flags.push(flag::ILL_CONDITIONED.to_string());
    }
    flags
}

/// Forecast from a pre-computed performance series.
pub fn predict_series(
    algorithm: Algorithm,
    series: &PerformanceSeries,
    params: &AlgoParams,
    horizon: usize,
) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("forecast horizon must be at least 1".into()));
    }
    let clip = Some(DIVERGENCE_FACTOR * series.max_abs_return());
    match algorithm {
        Algorithm::Wis => Ok(Forecast::flat(algorithm, wis_estimate(series)?, horizon)),
        Algorithm::Swis => Ok(Forecast::flat(algorithm, swis_estimate(series, params.swis_window)?, horizon)),
        Algorithm::ProWls => {
            let model = prowls_fit(&series.g, &series.rho, params.prowls_d)?;
            let mut values = prowls_forecast(&model, series.len(), horizon);
            let mut flags = Vec::new();
            if let Some(bound) = clip {
                if values.iter().any(|v| v.abs() > bound) {
                    values.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
                    flags.push(flag::DIVERGENT.to_string());
                }
            }
            if model.diagnostics.degenerate {
                flags.push(flag::ILL_CONDITIONED.to_string());
            }
            Ok(Forecast::new(algorithm, values, flags))
        }
        Algorithm::Open => {
            let problem = build_regression_targets(series, params.open_p)?;
            let fit = two_stage_iv_fit_with(&problem, params.open_shrinkage)?;
            let (values, divergent) = rollout(&fit.model, &fit.seed_lags(), horizon, clip)?;
            Ok(Forecast::new(algorithm, values, model_flags(&fit.model, divergent)))
        }
        Algorithm::NaiveAr => {
            let fit = naive_ar_fit(series, params.naive_p)?;
            let lags: Vec<f64> = series.j_hat.iter().rev().take(params.naive_p).copied().collect();
            let (values, divergent) = rollout(&fit.model, &lags, horizon, clip)?;
            Ok(Forecast::new(algorithm, values, model_flags(&fit.model, divergent)))
        }
    }
}

/// Forecasts `π`'s next `horizon` per-episode performances from logged data.
pub fn predict(
    algorithm: Algorithm,
    dataset: &Dataset,
    pi: &Policy,
    params: &AlgoParams,
    horizon: usize,
) -> Result<Forecast> {
    let series = build_performance_series(dataset, pi)?;
    predict_series(algorithm, &series, params, horizon)
}
