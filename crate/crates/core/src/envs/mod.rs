//! Non-stationary episodic decision processes.
//!
//! An environment is a sequence of POMDPs `M_1, M_2, …`. Within an episode the
//! POMDP is fixed; between episodes a meta-transition moves the latent
//! parameters, either as a function of the episode index (passive), of the
//! realized interaction history (active), or both (hybrid). The meta-transition
//! rule of every domain is time-invariant: the only dependence on the absolute
//! episode index is through an oscillation phase.
//!
//! Each domain scales its rate of change by `speed`; `speed = 0` is stationary.

pub mod medevac;
pub mod mountain_car;
pub mod robotoy;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainId {
    #[serde(rename = "robotoy_active")]
    RoboToyActive,
    #[serde(rename = "robotoy_passive")]
    RoboToyPassive,
    #[serde(rename = "ns_mountain_car")]
    NsMountainCar,
    #[serde(rename = "medevac")]
    Medevac,
}

impl DomainId {
    pub const ALL: [DomainId; 4] =
        [DomainId::RoboToyActive, DomainId::RoboToyPassive, DomainId::NsMountainCar, DomainId::Medevac];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainId::RoboToyActive => "robotoy_active",
            DomainId::RoboToyPassive => "robotoy_passive",
            DomainId::NsMountainCar => "ns_mountain_car",
            DomainId::Medevac => "medevac",
        }
    }

    fn code(self) -> u8 {
        match self {
            DomainId::RoboToyActive => 1,
            DomainId::RoboToyPassive => 2,
            DomainId::NsMountainCar => 3,
            DomainId::Medevac => 4,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.code() == code)
    }

    pub fn is_robotoy(self) -> bool {
        matches!(self, DomainId::RoboToyActive | DomainId::RoboToyPassive)
    }

    /// (observations, actions) under default parameters.
    pub fn spaces(self) -> (usize, usize) {
        self.spaces_with(&DomainParams::default())
    }

    pub fn spaces_with(self, params: &DomainParams) -> (usize, usize) {
        match self {
            DomainId::RoboToyActive | DomainId::RoboToyPassive => (1, 2),
            DomainId::NsMountainCar => (params.grid_size * params.grid_size, 3),
            DomainId::Medevac => (medevac::N_OBSERVATIONS, medevac::N_ACTIONS),
        }
    }

    /// Natural per-episode interaction limit `T`.
    pub fn default_horizon(self) -> usize {
        match self {
            DomainId::RoboToyActive | DomainId::RoboToyPassive => 1,
            DomainId::NsMountainCar => mountain_car::MAX_MACRO_STEPS,
            DomainId::Medevac => medevac::EVENTS_PER_EPISODE,
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for DomainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s).ok_or_else(|| Error::UnknownDomain(s.to_string()))
    }
}

/// Tunable constants of all domains. Defaults reproduce the shipped benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainParams {
    /// RoboToy reward for walking at λ = 1.
    pub walk_reward: f64,
    /// RoboToy reward for running at λ = 1.
    pub run_reward: f64,
    /// Standard deviation of RoboToy reward noise (truncated at 4σ).
    pub reward_noise: f64,
    /// α₀: per-run wear factor, multiplied by speed.
    pub wear_rate: f64,
    pub lambda_min: f64,
    /// RoboToy-Passive oscillation amplitude A.
    pub passive_amplitude: f64,
    pub passive_period: f64,
    /// Primitive steps per mountain-car macro-action.
    pub action_repeat: usize,
    /// Mountain-car observation grid is `grid_size × grid_size`.
    pub grid_size: usize,
    /// c_v: force decay per unit of mean |velocity|, multiplied by speed.
    pub velocity_wear: f64,
    pub kappa_min: f64,
    /// MEDEVAC reward for serving priority 0, 1, 2.
    pub priority_rewards: [f64; 3],
    /// Base MEDEVAC arrival rate per priority level.
    pub arrival_rates: [f64; 3],
    /// Nominal ambulance service-completion rate.
    pub service_rate: f64,
    /// Service-rate decay per dispatch, multiplied by speed.
    pub service_wear: f64,
    pub service_rate_min: f64,
    /// High-priority arrival oscillation amplitude.
    pub surge_amplitude: f64,
    pub surge_period: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        Self {
            walk_reward: 8.0,
            run_reward: 10.0,
            reward_noise: 0.05,
            wear_rate: 0.002,
            lambda_min: 0.05,
            passive_amplitude: 0.3,
            passive_period: 2000.0,
            action_repeat: 10,
            grid_size: 8,
            velocity_wear: 0.02,
            kappa_min: 0.2,
            priority_rewards: [1.0, 5.0, 25.0],
            arrival_rates: [0.5, 0.3, 0.2],
            service_rate: 0.25,
            service_wear: 0.0002,
            service_rate_min: 0.05,
            surge_amplitude: 0.5,
            surge_period: 2000.0,
        }
    }
}

impl DomainParams {
    fn validate(&self) -> Result<()> {
        let non_negative = [
            ("walk_reward", self.walk_reward),
            ("run_reward", self.run_reward),
            ("reward_noise", self.reward_noise),
            ("wear_rate", self.wear_rate),
            ("lambda_min", self.lambda_min),
            ("passive_amplitude", self.passive_amplitude),
            ("velocity_wear", self.velocity_wear),
            ("kappa_min", self.kappa_min),
            ("service_wear", self.service_wear),
            ("service_rate_min", self.service_rate_min),
            ("surge_amplitude", self.surge_amplitude),
        ];
        for (name, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be finite and non-negative")));
            }
        }
        if self.passive_amplitude >= 1.0 || self.surge_amplitude >= 1.0 {
            return Err(Error::InvalidConfig("oscillation amplitudes must be below 1".into()));
        }
        if !(self.passive_period > 0.0 && self.surge_period > 0.0) {
            return Err(Error::InvalidConfig("oscillation periods must be positive".into()));
        }
        if self.action_repeat == 0 || self.grid_size < 2 {
            return Err(Error::InvalidConfig("action_repeat ≥ 1 and grid_size ≥ 2 required".into()));
        }
        if !(self.service_rate > 0.0) || self.arrival_rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidConfig("MEDEVAC rates must be positive".into()));
        }
        if self.arrival_rates.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("total arrival rate must be positive".into()));
        }
        Ok(())
    }

    fn to_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.walk_reward,
            self.run_reward,
            self.reward_noise,
            self.wear_rate,
            self.lambda_min,
            self.passive_amplitude,
            self.passive_period,
            self.action_repeat as f64,
            self.grid_size as f64,
            self.velocity_wear,
            self.kappa_min,
        ];
        v.extend(self.priority_rewards);
        v.extend(self.arrival_rates);
        v.extend([
            self.service_rate,
            self.service_wear,
            self.service_rate_min,
            self.surge_amplitude,
            self.surge_period,
        ]);
        v
    }

    const N_VALUES: usize = 22;

    fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != Self::N_VALUES {
            return Err(Error::MalformedSnapshot(format!("expected {} parameters, found {}", Self::N_VALUES, v.len())));
        }
        let as_count = |x: f64| -> Result<usize> {
            if x.fract() != 0.0 || !(0.0..1e9).contains(&x) {
                return Err(Error::MalformedSnapshot(format!("bad integer parameter {x}")));
            }
            Ok(x as usize)
        };
        Ok(Self {
            walk_reward: v[0],
            run_reward: v[1],
            reward_noise: v[2],
            wear_rate: v[3],
            lambda_min: v[4],
            passive_amplitude: v[5],
            passive_period: v[6],
            action_repeat: as_count(v[7])?,
            grid_size: as_count(v[8])?,
            velocity_wear: v[9],
            kappa_min: v[10],
            priority_rewards: [v[11], v[12], v[13]],
            arrival_rates: [v[14], v[15], v[16]],
            service_rate: v[17],
            service_wear: v[18],
            service_rate_min: v[19],
            surge_amplitude: v[20],
            surge_period: v[21],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub domain: DomainId,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub seed: u64,
    /// Maximum interactions per episode; `None` means the domain default.
    #[serde(default)]
    pub horizon_cap: Option<usize>,
    #[serde(default)]
    pub params: DomainParams,
}

impl EnvConfig {
    pub fn new(domain: DomainId, speed: f64, seed: u64) -> Self {
        Self { domain, speed, seed, horizon_cap: None, params: DomainParams::default() }
    }

    pub fn horizon(&self) -> usize {
        self.horizon_cap.unwrap_or_else(|| self.domain.default_horizon())
    }

    pub fn spaces(&self) -> (usize, usize) {
        self.domain.spaces_with(&self.params)
    }

    /// Largest reward magnitude any step can produce.
    pub fn reward_bound(&self) -> f64 {
        let p = &self.params;
        match self.domain {
            DomainId::RoboToyActive | DomainId::RoboToyPassive => {
                p.walk_reward.max(p.run_reward) * (1.0 + p.passive_amplitude) + 4.0 * p.reward_noise
            }
            DomainId::NsMountainCar => 1.0,
            DomainId::Medevac => p.priority_rewards.iter().fold(0.0, |m, r| m.max(r.abs())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::InvalidSpeed(self.speed));
        }
        if self.horizon() == 0 {
            return Err(Error::InvalidConfig("horizon_cap must be at least 1".into()));
        }
        self.params.validate()
    }
}

/// Per-step outcome inside an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: usize,
    pub reward: f64,
    pub done: bool,
}

/// One logged interaction `(O, A, R, β(O, A))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: usize,
    pub action: usize,
    pub reward: f64,
    pub behavior_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHistory {
    pub episode_index: u64,
    pub steps: Vec<Step>,
    /// True when the cap `T` ended the episode rather than termination.
    pub truncated: bool,
}

impl EpisodeHistory {
    /// Observed return `G = Σ_t R_t`.
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Snapshot of `M_i`: the configuration, episode counter, latent parameters
/// and random-stream key.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub config: EnvConfig,
    pub episode_index: u64,
    /// RoboToy: `[λ]`; mountain car: `[κ]`; MEDEVAC: `[surge, μ_1..μ_4]`.
    pub latent: Vec<f64>,
    pub rng_state: u64,
}

/// Summary of an episode consumed by the meta-transition.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Trace {
    RoboToy { ran: bool },
    MountainCar { mean_abs_velocity: f64 },
    Medevac { dispatches: [u32; medevac::AMBULANCES] },
}

pub fn env_create(config: EnvConfig) -> Result<EnvState> {
    config.validate()?;
    let latent = match config.domain {
        DomainId::RoboToyActive => vec![1.0],
        DomainId::RoboToyPassive => vec![robotoy::passive_lambda(&config, 0)],
        DomainId::NsMountainCar => vec![1.0],
        DomainId::Medevac => medevac::nominal_latent(&config),
    };
    let rng_state = seed::derive(config.seed, seed::tag::ENV, 0);
    Ok(EnvState { config, episode_index: 0, latent, rng_state })
}

/// Samples an action and returns it with its probability under `policy`.
pub(crate) fn act(policy: &Policy, observation: usize, rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let action = policy.sample(observation, rng)?;
    let prob = policy.prob(observation, action)?;
    if prob <= 0.0 {
        return Err(Error::ZeroBehaviorProbability { observation, action });
    }
    Ok((action, prob))
}

impl EnvState {
    pub fn domain(&self) -> DomainId {
        self.config.domain
    }

    /// A scalar summary of the latent "health" used for active-causality checks:
    /// λ, κ, or the mean ambulance service rate.
    pub fn latent_multiplier(&self) -> f64 {
        match self.config.domain {
            DomainId::Medevac => {
                let rates = &self.latent[1..];
                rates.iter().sum::<f64>() / rates.len() as f64
            }
            _ => self.latent[0],
        }
    }

    fn episode_rng(&self, sub_seed: u64) -> ChaCha8Rng {
        let stream = seed::derive(self.rng_state, seed::tag::EPISODE, self.episode_index);
        ChaCha8Rng::seed_from_u64(seed::derive(stream, seed::tag::ENV, sub_seed))
    }

    /// Runs one episode with `policy`, logging its action probabilities as the
    /// behavior probabilities, and returns the history together with the
    /// post-meta-transition state for the next episode.
    pub fn run_episode(&self, policy: &Policy, sub_seed: u64) -> Result<(EpisodeHistory, EnvState)> {
        let (n_obs, n_actions) = self.config.spaces();
        policy.check_spaces(n_obs, n_actions)?;
        let mut rng = self.episode_rng(sub_seed);
        let horizon = self.config.horizon();
        let (steps, truncated, trace) = match self.config.domain {
            DomainId::RoboToyActive | DomainId::RoboToyPassive => robotoy::simulate(self, policy, &mut rng)?,
            DomainId::NsMountainCar => mountain_car::simulate(self, policy, horizon, &mut rng)?,
            DomainId::Medevac => medevac::simulate(self, policy, horizon, &mut rng)?,
        };
        let history = EpisodeHistory { episode_index: self.episode_index, steps, truncated };
        let next = self.meta_transition(&trace);
        Ok((history, next))
    }

    fn meta_transition(&self, trace: &Trace) -> EnvState {
        let next_index = self.episode_index + 1;
        let latent = match (self.config.domain, trace) {
            (DomainId::RoboToyActive, Trace::RoboToy { ran }) => robotoy::active_update(self, *ran),
            (DomainId::RoboToyPassive, _) => vec![robotoy::passive_lambda(&self.config, next_index)],
            (DomainId::NsMountainCar, Trace::MountainCar { mean_abs_velocity }) => {
                mountain_car::update(self, *mean_abs_velocity)
            }
            (DomainId::Medevac, Trace::Medevac { dispatches }) => medevac::update(self, next_index, dispatches),
            _ => unreachable!("trace does not match domain"),
        };
        EnvState { config: self.config.clone(), episode_index: next_index, latent, rng_state: self.rng_state }
    }

    fn expected_latent_len(domain: DomainId) -> usize {
        match domain {
            DomainId::Medevac => 1 + medevac::AMBULANCES,
            _ => 1,
        }
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"NSOPESNP";
const SNAPSHOT_VERSION: u16 = 1;

/// Serializes a state: magic, version, domain code, speed, seed, horizon cap,
/// parameter block, episode index, latent vector and stream key, all
/// little-endian and length-prefixed where variable.
pub fn snapshot(state: &EnvState) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.push(state.config.domain.code());
    out.extend_from_slice(&state.config.speed.to_le_bytes());
    out.extend_from_slice(&state.config.seed.to_le_bytes());
    out.extend_from_slice(&(state.config.horizon_cap.map_or(0, |h| h as u64)).to_le_bytes());
    let params = state.config.params.to_values();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.episode_index.to_le_bytes());
    out.extend_from_slice(&(state.latent.len() as u32).to_le_bytes());
    for v in &state.latent {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.rng_state.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedSnapshot(format!("truncated while reading {what}")))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take::<8>(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>(what)?))
    }

    fn f64_vec(&mut self, what: &str) -> Result<Vec<f64>> {
        let len = self.u32(what)? as usize;
        if len > 1 << 16 {
            return Err(Error::MalformedSnapshot(format!("implausible {what} length {len}")));
        }
        (0..len).map(|_| self.f64(what)).collect()
    }
}

pub fn restore(bytes: &[u8]) -> Result<EnvState> {
    let mut cur = Cursor { bytes, pos: 0 };
    if &cur.take::<8>("magic")? != SNAPSHOT_MAGIC {
        return Err(Error::MalformedSnapshot("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(cur.take::<2>("version")?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::MalformedSnapshot(format!("unsupported version {version}")));
    }
    let [code] = cur.take::<1>("domain")?;
    let domain =
        DomainId::from_code(code).ok_or_else(|| Error::MalformedSnapshot(format!("unknown domain code {code}")))?;
    let speed = cur.f64("speed")?;
    let seed = cur.u64("seed")?;
    let horizon_cap = match cur.u64("horizon")? {
        0 => None,
        h => Some(h as usize),
    };
    let params = DomainParams::from_values(&cur.f64_vec("parameters")?)?;
    let episode_index = cur.u64("episode index")?;
    let latent = cur.f64_vec("latent")?;
    let rng_state = cur.u64("rng state")?;
    if cur.pos != bytes.len() {
        return Err(Error::MalformedSnapshot(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if latent.len() != EnvState::expected_latent_len(domain) || latent.iter().any(|v| !v.is_finite()) {
        return Err(Error::MalformedSnapshot("latent vector does not match domain".into()));
    }
    let config = EnvConfig { domain, speed, seed, horizon_cap, params };
    config.validate().map_err(|e| Error::MalformedSnapshot(e.to_string()))?;
    Ok(EnvState { config, episode_index, latent, rng_state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::preset;

    fn run_many(state: &EnvState, policy: &Policy, k: usize, seed0: u64) -> (Vec<EpisodeHistory>, EnvState) {
        let mut s = state.clone();
        let mut out = Vec::new();
        for i in 0..k {
            let (h, next) = s.run_episode(policy, seed0 + i as u64).unwrap();
            out.push(h);
            s = next;
        }
        (out, s)
    }

    #[test]
    fn create_rejects_bad_configs() {
        assert!(matches!(env_create(EnvConfig::new(DomainId::RoboToyActive, -1.0, 1)), Err(Error::InvalidSpeed(_))));
        let mut cfg = EnvConfig::new(DomainId::Medevac, 1.0, 1);
        cfg.horizon_cap = Some(0);
        assert!(env_create(cfg).is_err());
        assert!(matches!("robotoy".parse::<DomainId>(), Err(Error::UnknownDomain(_))));
    }

    #[test]
    fn robotoy_nominal_state_ignores_speed() {
        let a = env_create(EnvConfig::new(DomainId::RoboToyActive, 0.0, 1)).unwrap();
        let b = env_create(EnvConfig::new(DomainId::RoboToyActive, 3.0, 1)).unwrap();
        assert_eq!(a.latent, vec![1.0]);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.episode_index, 0);
        assert_eq!(a.rng_state, b.rng_state);
    }

    #[test]
    fn creation_is_deterministic() {
        let a = env_create(EnvConfig::new(DomainId::Medevac, 2.0, 7)).unwrap();
        let b = env_create(EnvConfig::new(DomainId::Medevac, 2.0, 7)).unwrap();
        assert_eq!(snapshot(&a), snapshot(&b));
    }

    #[test]
    fn snapshot_round_trip_and_replay() {
        for domain in DomainId::ALL {
            let state = env_create(EnvConfig::new(domain, 1.5, 99)).unwrap();
            let pi = preset(crate::policies::default_presets(domain).0, domain).unwrap();
            let (_, advanced) = run_many(&state, &pi, 5, 10);
            let bytes = snapshot(&advanced);
            let restored = restore(&bytes).unwrap();
            assert_eq!(restored, advanced);
            let (h1, s1) = advanced.run_episode(&pi, 77).unwrap();
            let (h2, s2) = restored.run_episode(&pi, 77).unwrap();
            assert_eq!(h1, h2);
            assert_eq!(s1, s2);
        }
    }

    #[test]
    fn restore_rejects_malformed_bytes() {
        let state = env_create(EnvConfig::new(DomainId::NsMountainCar, 1.0, 5)).unwrap();
        let bytes = snapshot(&state);
        assert!(restore(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(restore(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(restore(&extra).is_err());
        let mut wrong_domain = bytes;
        wrong_domain[10] = 99;
        assert!(restore(&wrong_domain).is_err());
    }

    #[test]
    fn distinct_sub_seeds_diverge() {
        let state = env_create(EnvConfig::new(DomainId::Medevac, 1.0, 5)).unwrap();
        let pi = preset("medevac_triage(0.9)", DomainId::Medevac).unwrap();
        let a: Vec<_> = (0..10).map(|s| state.run_episode(&pi, s).unwrap().0).collect();
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn speed_zero_keeps_latent() {
        for domain in DomainId::ALL {
            let state = env_create(EnvConfig::new(domain, 0.0, 3)).unwrap();
            let pi = preset("uniform", domain).unwrap();
            let (_, end) = run_many(&state, &pi, 20, 0);
            assert_eq!(end.latent, state.latent, "{domain}");
        }
    }

    #[test]
    fn policy_with_wrong_shape_is_rejected() {
        let state = env_create(EnvConfig::new(DomainId::NsMountainCar, 0.0, 3)).unwrap();
        let p = Policy::uniform(1, 2).unwrap();
        assert!(matches!(state.run_episode(&p, 0), Err(Error::SpaceMismatch(_))));
    }

    #[test]
    fn rewards_stay_within_declared_bound() {
        for domain in DomainId::ALL {
            let state = env_create(EnvConfig::new(domain, 3.0, 8)).unwrap();
            let bound = state.config.reward_bound();
            let pi = preset("uniform", domain).unwrap();
            let (hs, _) = run_many(&state, &pi, 200, 0);
            for h in hs {
                assert!(h.steps.len() <= state.config.horizon());
                assert!(h.steps.iter().all(|s| s.reward.abs() <= bound), "{domain}");
            }
        }
    }

    #[test]
    fn horizon_cap_truncates() {
        let mut cfg = EnvConfig::new(DomainId::NsMountainCar, 0.0, 4);
        cfg.horizon_cap = Some(3);
        let state = env_create(cfg).unwrap();
        let idle = preset("mc_idle", DomainId::NsMountainCar).unwrap();
        let (h, _) = state.run_episode(&idle, 0).unwrap();
        assert_eq!(h.steps.len(), 3);
        assert!(h.truncated);
    }

    fn latent_after(domain: DomainId, policy_id: &str, k: usize, speed: f64) -> f64 {
        let state = env_create(EnvConfig::new(domain, speed, 21)).unwrap();
        let p = preset(policy_id, domain).unwrap();
        run_many(&state, &p, k, 100).1.latent_multiplier()
    }

    #[test]
    fn aggressive_policies_wear_faster() {
        let pairs = [
            (DomainId::RoboToyActive, "robotoy_always_run", "robotoy_always_walk"),
            (DomainId::NsMountainCar, "mc_full_throttle", "mc_idle"),
            (DomainId::Medevac, "medevac_always_dispatch", "medevac_never_dispatch"),
        ];
        for (domain, aggressive, gentle) in pairs {
            for speed in [0.5, 2.0] {
                for k in [1, 5, 40] {
                    let a = latent_after(domain, aggressive, k, speed);
                    let g = latent_after(domain, gentle, k, speed);
                    assert!(a < g, "{domain} speed {speed} k {k}: {a} !< {g}");
                }
            }
        }
    }

    #[test]
    fn passive_channels_ignore_actions() {
        let run = latent_after(DomainId::RoboToyPassive, "robotoy_always_run", 300, 2.0);
        let walk = latent_after(DomainId::RoboToyPassive, "robotoy_always_walk", 300, 2.0);
        assert_eq!(run, walk);

        let surge = |policy: &str| {
            let state = env_create(EnvConfig::new(DomainId::Medevac, 2.0, 21)).unwrap();
            let p = preset(policy, DomainId::Medevac).unwrap();
            let mut s = state;
            let mut trail = Vec::new();
            for i in 0..200 {
                s = s.run_episode(&p, i).unwrap().1;
                trail.push(s.latent[0]);
            }
            trail
        };
        assert_eq!(surge("medevac_always_dispatch"), surge("medevac_never_dispatch"));
    }
}
