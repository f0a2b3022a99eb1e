//! Experiment orchestration: data collection, clone-based ground truth,
//! speed sweeps, hyper-parameter ablations and the illustrative demo.
//!
//! Every random stream is derived from `base_seed` along the path
//! `base → trial → episode → clone`; trial seeds do not depend on the speed,
//! so cells at different speeds (and different hyper-parameter values) are
//! paired.

use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{env_create, restore, snapshot, DomainId, DomainParams, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::estimators::{build_performance_series, build_regression_targets, Dataset, PerformanceSeries};
use crate::forecast::{flag, predict_series, rollout, AlgoParams, Algorithm, DIVERGENCE_FACTOR};
use crate::policies::{default_presets, preset_with, support_ratio_bound, Policy};
use crate::regress::two_stage_iv_fit_with;
use crate::seed::{derive, tag};
use crate::stats;

/// Scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::InvalidConfig(format!("unknown profile `{other}` (expected paper or desk)"))),
        }
    }
}

/// Environment settings shared by every cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// Interactions per episode; 0 selects each domain's default.
    pub horizon_cap: usize,
    pub params: DomainParams,
}

/// Full description of a sweep. Defaults are the desk profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domains: Vec<DomainId>,
    pub speeds: Vec<f64>,
    /// n: logged episodes per trial.
    pub n_episodes: usize,
    /// L: forecast horizon in episodes.
    pub horizon: usize,
    pub n_trials: usize,
    pub n_future_clones: usize,
    pub algorithms: Vec<Algorithm>,
    pub base_seed: u64,
    /// Evaluation policy preset, or `default` for the domain's own.
    pub pi_preset: String,
    /// Behavior policy preset, or `default` for the domain's own.
    pub beta_preset: String,
    pub params: AlgoParams,
    pub env: EnvSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let (n, horizon, trials, clones, lag) = match profile {
            Profile::Paper => (2000, 200, 30, 30, 400),
            Profile::Desk => (1000, 100, 20, 20, 200),
        };
        Self {
            domains: DomainId::ALL.to_vec(),
            speeds: vec![0.0, 1.0, 2.0, 3.0],
            n_episodes: n,
            horizon,
            n_trials: trials,
            n_future_clones: clones,
            algorithms: Algorithm::ALL.to_vec(),
            base_seed: 0,
            pi_preset: "default".into(),
            beta_preset: "default".into(),
            params: AlgoParams { open_p: lag, swis_window: lag, ..AlgoParams::default() },
            env: EnvSection::default(),
        }
    }

    /// Builds a configuration from a profile, an optional TOML document and
    /// dotted `key=value` overrides, applied in that order. Keys that do not
    /// exist in the schema are rejected.
    pub fn load(profile: Profile, toml_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(Self::profile(profile)).map_err(|e| Error::Toml(e.to_string()))?;
        let schema = value.clone();
        if let Some(text) = toml_text {
            let doc: toml::Table = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
            merge(&mut value, toml::Value::Table(doc));
        }
        for item in overrides {
            apply_override(&mut value, &schema, item)?;
        }
        let config: Self = value.try_into().map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Stable FNV-1a digest of the canonical TOML form.
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_episodes;
        let p = &self.params;
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.domains.is_empty() || self.speeds.is_empty() || self.algorithms.is_empty() {
            return invalid("domains, speeds and algorithms must be non-empty".into());
        }
        if self.horizon == 0 || self.n_trials == 0 || self.n_future_clones == 0 {
            return invalid("horizon, n_trials and n_future_clones must be at least 1".into());
        }
        if p.open_p == 0 || 2 * p.open_p >= n {
            return invalid(format!("OPEN lag order p = {} must satisfy 1 ≤ p < n/2 (n = {n})", p.open_p));
        }
        if p.swis_window == 0 || p.swis_window > n {
            return invalid(format!("SWIS window {} must be in 1..={n}", p.swis_window));
        }
        if 2 * p.prowls_d + 1 >= n {
            return invalid(format!("Pro-WLS basis 2d+1 = {} must be below n = {n}", 2 * p.prowls_d + 1));
        }
        if p.naive_p == 0 || p.naive_p + 2 > n {
            return invalid(format!("naive AR lag order {} is incompatible with n = {n}", p.naive_p));
        }
        for &speed in &self.speeds {
            if !speed.is_finite() || speed < 0.0 {
                return Err(Error::InvalidSpeed(speed));
            }
        }
        for &domain in &self.domains {
            self.env_config(domain, 0.0, 0).validate()?;
            let (pi, beta) = self.policies(domain)?;
            if !support_ratio_bound(&pi, &beta)?.is_finite() {
                return invalid(format!("behavior policy does not cover the evaluation policy on {domain}"));
            }
        }
        Ok(())
    }

    pub fn env_config(&self, domain: DomainId, speed: f64, seed: u64) -> EnvConfig {
        EnvConfig {
            domain,
            speed,
            seed,
            horizon_cap: (self.env.horizon_cap > 0).then_some(self.env.horizon_cap),
            params: self.env.params.clone(),
        }
    }

    /// `(π, β)` for a domain.
    pub fn policies(&self, domain: DomainId) -> Result<(Policy, Policy)> {
        let (pi_default, beta_default) = default_presets(domain);
        let pick = |id: &str, fallback: &str| if id == "default" { fallback.to_string() } else { id.to_string() };
        let pi = preset_with(&pick(&self.pi_preset, pi_default), domain, &self.env.params)?;
        let beta = preset_with(&pick(&self.beta_preset, beta_default), domain, &self.env.params)?;
        Ok((pi, beta))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive(self.base_seed, tag::TRIAL, trial as u64)
    }
}

fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(value: &mut toml::Value, schema: &toml::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let mut known = schema;
    for part in &path {
        known = known
            .get(part)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown configuration key `{}`", key.trim())))?;
    }
    let mut slot = value;
    for part in &path {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown configuration key `{}`", key.trim())))?;
    }
    *slot = parse_scalar(raw.trim());
    Ok(())
}

/// Runs `beta` for `n` episodes from a fresh environment and returns the
/// logged data with the post-meta-transition state after episode `n`.
pub fn collect(config: &EnvConfig, beta: &Policy, n: usize) -> Result<(Dataset, EnvState)> {
    collect_from(env_create(config.clone())?, beta, n, |_| Ok(()))
}

fn collect_from<F>(mut state: EnvState, beta: &Policy, n: usize, mut before_episode: F) -> Result<(Dataset, EnvState)>
where
    F: FnMut(&EnvState) -> Result<()>,
{
    let domain = state.domain();
    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        before_episode(&state)?;
        let (history, next) = state.run_episode(beta, 0)?;
        episodes.push(history);
        state = next;
    }
    Ok((Dataset { domain, episodes }, state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Mean over clones of `Σ_{k=1..L} G_{n+k}`.
    pub mean: f64,
    /// Standard error of `mean` across clones.
    pub se: f64,
    /// Mean over clones of each future episode's return.
    pub per_episode: Vec<f64>,
    pub per_clone: Vec<f64>,
}

/// Monte-Carlo value of executing `pi` for `horizon` episodes from the
/// snapshotted state, over `clones` independently seeded futures.
pub fn ground_truth(
    snapshot_bytes: &[u8],
    pi: &Policy,
    horizon: usize,
    clones: usize,
    seed: u64,
) -> Result<GroundTruth> {
    if clones == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("ground truth needs at least one clone and one episode".into()));
    }
    let origin = restore(snapshot_bytes)?;
    let mut per_episode = vec![0.0; horizon];
    let mut per_clone = Vec::with_capacity(clones);
    for c in 0..clones {
        let sub_seed = derive(seed, tag::CLONE, c as u64);
        let mut state = origin.clone();
        let mut total = 0.0;
        for slot in per_episode.iter_mut() {
            let (h, next) = state.run_episode(pi, sub_seed)?;
            let g = h.episode_return();
            total += g;
            *slot += g;
            state = next;
        }
        per_clone.push(total);
    }
    per_episode.iter_mut().for_each(|v| *v /= clones as f64);
    Ok(GroundTruth { mean: stats::mean(&per_clone), se: stats::se(&per_clone), per_episode, per_clone })
}

/// Monte-Carlo `J_i(π)` of the current episode's POMDP: the mean return of a
/// single episode of `pi` over `clones` seeded copies of `state`.
pub fn expected_performance(state: &EnvState, pi: &Policy, clones: usize, seed: u64) -> Result<(f64, f64)> {
    let returns = (0..clones)
        .map(|c| {
            let sub = derive(seed, tag::CLONE_EPISODE, c as u64);
            state.run_episode(pi, sub).map(|(h, _)| h.episode_return())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((stats::mean(&returns), stats::se(&returns)))
}

/// One `(domain, speed, algorithm, trial)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub domain: DomainId,
    pub speed: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub predicted: f64,
    pub truth: f64,
    pub error: f64,
    /// Diagnostic and failure tags, e.g. `divergent-forecast`.
    pub flags: Vec<String>,
}

/// Tags that exclude a row from the aggregates.
pub const FATAL_FLAGS: [&str; 6] =
    [flag::DIVERGENT, "ineffective-sample", "insufficient-data", "non-finite", "support-violation", "error"];

impl SweepRow {
    pub fn failed(&self) -> bool {
        !self.predicted.is_finite() || self.flags.iter().any(|f| FATAL_FLAGS.contains(&f.as_str()))
    }
}

/// Aggregate over the trials of one `(domain, speed, algorithm)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: DomainId,
    pub speed: f64,
    pub algorithm: Algorithm,
    /// `|mean(predicted − truth)|`.
    pub abs_bias: f64,
    /// `mean((predicted − truth)²)`.
    pub mse: f64,
    pub se_bias: f64,
    pub se_mse: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let summary = summarize(&rows);
        Self { rows, summary }
    }

    pub fn cell(&self, domain: DomainId, speed: f64, algorithm: Algorithm) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.domain == domain && s.speed == speed && s.algorithm == algorithm)
    }

    /// Ok-row errors of one cell, indexed by trial (`None` for failed trials).
    pub fn errors(&self, domain: DomainId, speed: f64, algorithm: Algorithm) -> Vec<Option<f64>> {
        let mut rows: Vec<&SweepRow> =
            self.rows.iter().filter(|r| r.domain == domain && r.speed == speed && r.algorithm == algorithm).collect();
        rows.sort_by_key(|r| r.trial);
        rows.iter().map(|r| (!r.failed()).then_some(r.error)).collect()
    }
}

/// Aggregates rows per `(domain, speed, algorithm)` in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(DomainId, f64, Algorithm)> = Vec::new();
    for r in rows {
        let key = (r.domain, r.speed, r.algorithm);
        if !keys.iter().any(|k| k.0 == key.0 && k.1.to_bits() == key.1.to_bits() && k.2 == key.2) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(domain, speed, algorithm)| {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.domain == domain && r.speed.to_bits() == speed.to_bits() && r.algorithm == algorithm)
                .collect();
            let errors: Vec<f64> = cell.iter().filter(|r| !r.failed()).map(|r| r.error).collect();
            let squared: Vec<f64> = errors.iter().map(|e| e * e).collect();
            let n_ok = errors.len();
            SummaryRow {
                domain,
                speed,
                algorithm,
                abs_bias: stats::mean(&errors).abs(),
                mse: stats::mean(&squared),
                se_bias: stats::se(&errors),
                se_mse: stats::se(&squared),
                n_ok,
                n_failed: cell.len() - n_ok,
            }
        })
        .collect()
}

/// Which hyper-parameter an ablation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationParam {
    OpenP,
    ProwlsD,
}

impl AblationParam {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationParam::OpenP => "open_p",
            AblationParam::ProwlsD => "prowls_d",
        }
    }

    fn apply(self, params: &AlgoParams, value: usize) -> AlgoParams {
        let mut out = *params;
        match self {
            AblationParam::OpenP => out.open_p = value,
            AblationParam::ProwlsD => out.prowls_d = value,
        }
        out
    }
}

impl FromStr for AblationParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_p" => Ok(AblationParam::OpenP),
            "prowls_d" => Ok(AblationParam::ProwlsD),
            other => Err(Error::InvalidConfig(format!("unknown ablation parameter `{other}`"))),
        }
    }
}

/// Per-cell inputs shared by every algorithm, or the failure tag.
type CellOutcome = std::result::Result<(PerformanceSeries, GroundTruth), &'static str>;

fn run_cell(config: &ExperimentConfig, domain: DomainId, speed: f64, trial: usize) -> CellOutcome {
    let trial_seed = config.trial_seed(trial);
    let env = config.env_config(domain, speed, trial_seed);
    let run = || -> Result<(PerformanceSeries, GroundTruth)> {
        let (pi, beta) = config.policies(domain)?;
        let (data, state) = collect(&env, &beta, config.n_episodes)?;
        // predictions see only the dataset; ground truth only the snapshot
        let series = build_performance_series(&data, &pi)?;
        let oracle_seed = derive(trial_seed, tag::ORACLE, 0);
        let truth = ground_truth(&snapshot(&state), &pi, config.horizon, config.n_future_clones, oracle_seed)?;
        Ok((series, truth))
    };
    run().map_err(|e| e.kind())
}

fn rows_for_cell(
    config: &ExperimentConfig,
    params: &AlgoParams,
    domain: DomainId,
    speed: f64,
    trial: usize,
    outcome: &CellOutcome,
) -> Vec<SweepRow> {
    let truth = outcome.as_ref().map_or(f64::NAN, |(_, t)| t.mean);
    config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let (predicted, flags) = match outcome {
                Ok((series, _)) => match predict_series(algorithm, series, params, config.horizon) {
                    Ok(f) => (f.total, f.flags),
                    Err(e) => (f64::NAN, vec![e.kind().to_string()]),
                },
                Err(kind) => (f64::NAN, vec![kind.to_string()]),
            };
            SweepRow { domain, speed, algorithm, trial, predicted, truth, error: predicted - truth, flags }
        })
        .collect()
}

fn with_jobs<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(work))
        }
        _ => Ok(work()),
    }
}

fn sweep_variants(config: &ExperimentConfig, variants: &[AlgoParams], jobs: Option<usize>) -> Result<Vec<SweepResult>> {
    config.validate()?;
    for v in variants {
        ExperimentConfig { params: *v, ..config.clone() }.validate()?;
    }
    let cells: Vec<(DomainId, f64, usize)> = config
        .domains
        .iter()
        .flat_map(|&d| config.speeds.iter().flat_map(move |&s| (0..config.n_trials).map(move |t| (d, s, t))))
        .collect();
    let per_cell: Vec<Vec<Vec<SweepRow>>> = with_jobs(jobs, || {
        cells
            .par_iter()
            .map(|&(domain, speed, trial)| {
                let outcome = run_cell(config, domain, speed, trial);
                variants.iter().map(|v| rows_for_cell(config, v, domain, speed, trial, &outcome)).collect()
            })
            .collect()
    })?;
    Ok((0..variants.len())
        .map(|k| {
            // cell order is (domain, speed, trial); emit rows as (domain, speed, algorithm, trial)
            let mut rows: Vec<SweepRow> = per_cell.iter().flat_map(|c| c[k].iter().cloned()).collect();
            let pos = |r: &SweepRow| {
                let d = config.domains.iter().position(|x| *x == r.domain).unwrap_or(0);
                let s = config.speeds.iter().position(|x| x.to_bits() == r.speed.to_bits()).unwrap_or(0);
                let a = config.algorithms.iter().position(|x| *x == r.algorithm).unwrap_or(0);
                (d, s, a, r.trial)
            };
            rows.sort_by_key(pos);
            SweepResult::from_rows(rows)
        })
        .collect())
}

/// Every `(domain, speed, trial)` cell: collect, forecast with each
/// algorithm, and compare with the clone ground truth. Cell failures become
/// flagged rows and never abort the sweep.
pub fn run_sweep(config: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult> {
    Ok(sweep_variants(config, &[config.params], jobs)?.remove(0))
}

/// Repeats the sweep for each value of one hyper-parameter on shared data,
/// ground truth and seeds.
pub fn ablation_sweep(
    config: &ExperimentConfig,
    param: AblationParam,
    values: &[usize],
    jobs: Option<usize>,
) -> Result<Vec<(usize, SweepResult)>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one value".into()));
    }
    let variants: Vec<AlgoParams> = values.iter().map(|&v| param.apply(&config.params, v)).collect();
    let results = sweep_variants(config, &variants, jobs)?;
    Ok(values.iter().copied().zip(results).collect())
}

const RESULTS_HEADER: [&str; 8] = ["domain", "speed", "algorithm", "trial", "predicted", "truth", "error", "flags"];
const SUMMARY_HEADER: [&str; 9] =
    ["domain", "speed", "algorithm", "abs_bias", "mse", "se_bias", "se_mse", "n_ok", "n_failed"];

pub fn write_results_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RESULTS_HEADER)?;
    for r in rows {
        out.write_record([
            r.domain.as_str().to_string(),
            r.speed.to_string(),
            r.algorithm.as_str().to_string(),
            r.trial.to_string(),
            r.predicted.to_string(),
            r.truth.to_string(),
            r.error.to_string(),
            r.flags.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.domain.as_str().to_string(),
            r.speed.to_string(),
            r.algorithm.as_str().to_string(),
            r.abs_bias.to_string(),
            r.mse.to_string(),
            r.se_bias.to_string(),
            r.se_mse.to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, name: &str, line: usize) -> Result<T> {
    let raw = record.get(idx).ok_or_else(|| Error::Schema { line, message: format!("missing column `{name}`") })?;
    raw.trim().parse().map_err(|_| Error::Schema { line, message: format!("invalid {name} `{raw}`") })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| Error::Schema { line: 1, message: e.to_string() })?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Schema { line: 1, message: format!("expected header `{}`", expected.join(",")) });
    }
    Ok(())
}

fn data_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut input = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(&mut input, &RESULTS_HEADER)?;
    let mut rows = Vec::new();
    for (k, record) in input.records().enumerate() {
        let record = record.map_err(|e| Error::Schema { line: k + 2, message: e.to_string() })?;
        let line = data_line(&record, k + 2);
        if record.len() != RESULTS_HEADER.len() {
            return Err(Error::Schema {
                line,
                message: format!("expected {} fields, found {}", RESULTS_HEADER.len(), record.len()),
            });
        }
        let domain: String = field(&record, 0, "domain", line)?;
        let algorithm: String = field(&record, 2, "algorithm", line)?;
        let flags: String = field(&record, 7, "flags", line)?;
        rows.push(SweepRow {
            domain: domain.parse().map_err(|e: Error| Error::Schema { line, message: e.to_string() })?,
            speed: field(&record, 1, "speed", line)?,
            algorithm: algorithm.parse().map_err(|e: Error| Error::Schema { line, message: e.to_string() })?,
            trial: field(&record, 3, "trial", line)?,
            predicted: field(&record, 4, "predicted", line)?,
            truth: field(&record, 5, "truth", line)?,
            error: field(&record, 6, "error", line)?,
            flags: flags.split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut input = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(&mut input, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    for (k, record) in input.records().enumerate() {
        let record = record.map_err(|e| Error::Schema { line: k + 2, message: e.to_string() })?;
        let line = data_line(&record, k + 2);
        if record.len() != SUMMARY_HEADER.len() {
            return Err(Error::Schema {
                line,
                message: format!("expected {} fields, found {}", SUMMARY_HEADER.len(), record.len()),
            });
        }
        let domain: String = field(&record, 0, "domain", line)?;
        let algorithm: String = field(&record, 2, "algorithm", line)?;
        rows.push(SummaryRow {
            domain: domain.parse().map_err(|e: Error| Error::Schema { line, message: e.to_string() })?,
            speed: field(&record, 1, "speed", line)?,
            algorithm: algorithm.parse().map_err(|e: Error| Error::Schema { line, message: e.to_string() })?,
            abs_bias: field(&record, 3, "abs_bias", line)?,
            mse: field(&record, 4, "mse", line)?,
            se_bias: field(&record, 5, "se_bias", line)?,
            se_mse: field(&record, 6, "se_mse", line)?,
            n_ok: field(&record, 7, "n_ok", line)?,
            n_failed: field(&record, 8, "n_failed", line)?,
        });
    }
    Ok(rows)
}

/// Series behind the three-panel illustration of the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutput {
    pub domain: DomainId,
    pub speed: f64,
    /// Deployment boundary: episodes `1..=n` are logged, `n+1..=n+L` forecast.
    pub n: usize,
    /// True `J_i(π)` for `i = 1..=n+L` (clone Monte Carlo).
    pub true_j: Vec<f64>,
    /// PDIS estimates `Ĵ_i` for `i = 1..=n`.
    pub j_hat: Vec<f64>,
    /// 1-based episode of `denoised[0]`.
    pub denoised_start: usize,
    /// Stage-1 denoised series `J̄_i`.
    pub denoised: Vec<f64>,
    /// OPEN forecast for `i = n+1..=n+L`.
    pub forecast: Vec<f64>,
    pub forecast_flags: Vec<String>,
    /// Least-squares slope of `Ĵ` over the logged episodes.
    pub past_slope: f64,
    /// Least-squares slope of the forecast segment.
    pub forecast_slope: f64,
    /// Standard deviation of `Ĵ_i − J_i` over the denoised episodes.
    pub raw_residual_sd: f64,
    /// Standard deviation of `J̄_i − J_i` over the same episodes.
    pub denoised_residual_sd: f64,
}

/// Collects one trial with `β`, tracking the true performance of `π` along
/// the way, then fits OPEN and forecasts the deployment of `π`.
pub fn run_demo(config: &ExperimentConfig, domain: DomainId, speed: f64, trial: usize) -> Result<DemoOutput> {
    let n = config.n_episodes;
    let horizon = config.horizon;
    let p = config.params.open_p;
    let clones = config.n_future_clones;
    let trial_seed = config.trial_seed(trial);
    let (pi, beta) = config.policies(domain)?;
    let env = config.env_config(domain, speed, trial_seed);
    let oracle_seed = derive(trial_seed, tag::ORACLE, 1);

    let mut true_j = Vec::with_capacity(n + horizon);
    let (data, state) = collect_from(env_create(env)?, &beta, n, |s| {
        true_j.push(expected_performance(s, &pi, clones, derive(oracle_seed, tag::EPISODE, s.episode_index))?.0);
        Ok(())
    })?;
    let truth = ground_truth(&snapshot(&state), &pi, horizon, clones, derive(trial_seed, tag::ORACLE, 0))?;
    true_j.extend(&truth.per_episode);

    let series = build_performance_series(&data, &pi)?;
    let fit = two_stage_iv_fit_with(&build_regression_targets(&series, p)?, config.params.open_shrinkage)?;
    let clip = Some(DIVERGENCE_FACTOR * series.max_abs_return());
    let (forecast, divergent) = rollout(&fit.model, &fit.seed_lags(), horizon, clip)?;
    let mut forecast_flags = Vec::new();
    if divergent {
        forecast_flags.push(flag::DIVERGENT.to_string());
    }

    let past_x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let future_x: Vec<f64> = (n + 1..=n + horizon).map(|i| i as f64).collect();
    let raw: Vec<f64> = (p..n).map(|e| series.j_hat[e] - true_j[e]).collect();
    let denoised_err: Vec<f64> = (p..n).map(|e| fit.denoised[e - p] - true_j[e]).collect();
    Ok(DemoOutput {
        domain,
        speed,
        n,
        past_slope: stats::ols_slope(&past_x, &series.j_hat),
        forecast_slope: if horizon > 1 { stats::ols_slope(&future_x, &forecast) } else { 0.0 },
        raw_residual_sd: stats::sd(&raw),
        denoised_residual_sd: stats::sd(&denoised_err),
        true_j,
        j_hat: series.j_hat.clone(),
        denoised_start: p + 1,
        denoised: fit.denoised,
        forecast,
        forecast_flags,
    })
}

impl DemoOutput {
    /// `episode,true_j` including the forecast window.
    pub fn write_true_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "true_j", "deployed"])?;
        for (k, v) in self.true_j.iter().enumerate() {
            out.write_record([(k + 1).to_string(), v.to_string(), u8::from(k >= self.n).to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `episode,j_hat`.
    pub fn write_estimates_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "j_hat"])?;
        for (k, v) in self.j_hat.iter().enumerate() {
            out.write_record([(k + 1).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `episode,kind,value` where kind is `denoised` or `forecast`.
    pub fn write_forecast_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "kind", "value"])?;
        for (k, v) in self.denoised.iter().enumerate() {
            out.write_record([(self.denoised_start + k).to_string(), "denoised".into(), v.to_string()])?;
        }
        for (k, v) in self.forecast.iter().enumerate() {
            out.write_record([(self.n + 1 + k).to_string(), "forecast".into(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::Shrinkage;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            domains: vec![DomainId::RoboToyActive],
            speeds: vec![0.0],
            n_episodes: 40,
            horizon: 5,
            n_trials: 2,
            n_future_clones: 3,
            algorithms: vec![Algorithm::Wis],
            params: AlgoParams { open_p: 3, prowls_d: 2, swis_window: 10, ..AlgoParams::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn profiles() {
        let desk = ExperimentConfig::profile(Profile::Desk);
        assert_eq!((desk.n_episodes, desk.horizon, desk.n_trials, desk.n_future_clones), (1000, 100, 20, 20));
        let paper = ExperimentConfig::profile(Profile::Paper);
        assert_eq!((paper.n_episodes, paper.horizon, paper.n_trials, paper.n_future_clones), (2000, 200, 30, 30));
        assert_eq!((paper.params.open_p, paper.params.prowls_d, paper.params.swis_window), (400, 5, 400));
        desk.validate().unwrap();
        paper.validate().unwrap();
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = ExperimentConfig::load(
            Profile::Desk,
            Some("n_episodes = 500\n[params]\nopen_p = 50\n"),
            &[
                "speeds=[0, 2.5]".into(),
                "env.params.wear_rate=0.01".into(),
                "domains=[\"robotoy_active\"]".into(),
                "pi_preset=robotoy_always_run".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.n_episodes, 500);
        assert_eq!(c.params.open_p, 50);
        assert_eq!(c.speeds, vec![0.0, 2.5]);
        assert_eq!(c.env.params.wear_rate, 0.01);
        assert_eq!(c.pi_preset, "robotoy_always_run");
        assert!(ExperimentConfig::load(Profile::Desk, None, &["params.bogus=1".into()]).is_err());
        assert!(ExperimentConfig::load(Profile::Desk, None, &["nonsense".into()]).is_err());
        assert!(ExperimentConfig::load(Profile::Desk, Some("typo_key = 3"), &[]).is_err());
        assert!(ExperimentConfig::load(Profile::Desk, None, &["params.open_p=600".into()]).is_err());
        let plain = ExperimentConfig::load(Profile::Desk, None, &["params.open_shrinkage=none".into()]).unwrap();
        assert_eq!(plain.params.open_shrinkage, Shrinkage::None);
        assert!(ExperimentConfig::load(Profile::Desk, None, &["params.open_shrinkage=lasso".into()]).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::load(Profile::Paper, Some(&text), &[]).unwrap(), c);
        assert_eq!(c.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn empty_collection() {
        let env = EnvConfig::new(DomainId::Medevac, 1.0, 3);
        let beta = Policy::uniform(48, 5).unwrap();
        let (data, state) = collect(&env, &beta, 0).unwrap();
        assert!(data.is_empty());
        assert_eq!(state, env_create(env).unwrap());
    }

    #[test]
    fn logged_probabilities_match_behavior() {
        let c = tiny();
        let (_, beta) = c.policies(DomainId::RoboToyActive).unwrap();
        let (data, _) = collect(&c.env_config(DomainId::RoboToyActive, 1.0, 9), &beta, 50).unwrap();
        for ep in &data.episodes {
            for s in &ep.steps {
                assert_eq!(s.behavior_prob, beta.prob(s.observation, s.action).unwrap());
            }
        }
    }

    #[test]
    fn bookkeeping_sweep() {
        let r = run_sweep(&tiny(), None).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.summary.len(), 1);
        assert_eq!(r.summary[0].n_ok, 2);
        let again = run_sweep(&tiny(), Some(2)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn summary_identity() {
        let rows: Vec<SweepRow> = [1.0, -3.0, 2.5, f64::NAN]
            .iter()
            .enumerate()
            .map(|(t, e)| SweepRow {
                domain: DomainId::Medevac,
                speed: 1.0,
                algorithm: Algorithm::Open,
                trial: t,
                predicted: 10.0 + e,
                truth: 10.0,
                error: *e,
                flags: vec![],
            })
            .collect();
        let s = &summarize(&rows)[0];
        assert_eq!((s.n_ok, s.n_failed), (3, 1));
        assert!((s.abs_bias - 0.5 / 3.0).abs() < 1e-12);
        assert!(s.mse >= s.abs_bias.powi(2));
    }

    #[test]
    fn results_csv_round_trip() {
        let r =
            run_sweep(&ExperimentConfig { algorithms: vec![Algorithm::Wis, Algorithm::Open], ..tiny() }, None).unwrap();
        let mut buf = Vec::new();
        write_results_csv(&r.rows, &mut buf).unwrap();
        let back = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(back, r.rows);
        let mut buf = Vec::new();
        write_summary_csv(&r.summary, &mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), r.summary);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let bad = "domain,speed,algorithm,trial,predicted,truth,error,flags\nrobotoy_active,0,WIS,0,1,1,0,\nrobotoy_active,zero,WIS,1,1,1,0,\n";
        match read_results_csv(bad.as_bytes()) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_results_csv("a,b\n".as_bytes()), Err(Error::Schema { line: 1, .. })));
    }
}
