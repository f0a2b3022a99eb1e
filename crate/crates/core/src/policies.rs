//! Discrete-observation stochastic policies with exact action probabilities.
//!
//! Importance sampling needs `π(o, a)` and `β(o, a)` exactly, so every policy
//! here answers [`Policy::prob`] in closed form and [`Policy::sample`] draws
//! from the very same row.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{DomainId, DomainParams};
use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Row-stochastic table indexed `[observation][action]`.
    Tabular(Vec<Vec<f64>>),
    /// Convex combination of policies over identical spaces.
    Mixture(Vec<(f64, Policy)>),
    /// A named preset, resolved to a concrete policy at construction.
    DomainPreset { preset_id: String, resolved: Box<Policy> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_obs: usize,
    n_actions: usize,
    kind: PolicyKind,
}

impl Policy {
    pub fn tabular(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_obs = rows.len();
        if n_obs == 0 {
            return Err(Error::InvalidPolicy("table has no rows".into()));
        }
        let n_actions = rows[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidPolicy("table has no actions".into()));
        }
        for (o, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!("row {o} has {} entries, expected {n_actions}", row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidPolicy(format!("row {o} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidPolicy(format!("row {o} sums to {sum}")));
            }
        }
        Ok(Self { n_obs, n_actions, kind: PolicyKind::Tabular(rows) })
    }

    pub fn uniform(n_obs: usize, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidPolicy("table has no actions".into()));
        }
        Self::tabular(vec![vec![1.0 / n_actions as f64; n_actions]; n_obs])
    }

    /// Same action distribution at every observation.
    pub fn constant_row(n_obs: usize, row: Vec<f64>) -> Result<Self> {
        Self::tabular(vec![row; n_obs])
    }

    pub fn mixture(components: Vec<(f64, Policy)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidPolicy("mixture has no components".into()));
        };
        let (n_obs, n_actions) = (first.n_obs, first.n_actions);
        let mut total = 0.0;
        for (w, p) in &components {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidPolicy(format!("mixture weight {w} is negative")));
            }
            if p.n_obs != n_obs || p.n_actions != n_actions {
                return Err(Error::InvalidPolicy("mixture components differ in shape".into()));
            }
            total += w;
        }
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidPolicy(format!("mixture weights sum to {total}")));
        }
        Ok(Self { n_obs, n_actions, kind: PolicyKind::Mixture(components) })
    }

    /// `0.5·π + 0.5·uniform`, the behavior-policy construction used for
    /// every domain without a hand-specified behavior preset.
    pub fn half_uniform(pi: &Policy) -> Result<Self> {
        let uniform = Policy::uniform(pi.n_obs, pi.n_actions)?;
        Self::mixture(vec![(0.5, pi.clone()), (0.5, uniform)])
    }

    pub fn n_observations(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn preset_id(&self) -> Option<&str> {
        match &self.kind {
            PolicyKind::DomainPreset { preset_id, .. } => Some(preset_id),
            _ => None,
        }
    }

    fn check(&self, observation: usize, action: usize) -> Result<()> {
        if observation >= self.n_obs || action >= self.n_actions {
            return Err(Error::OutOfRange { observation, action, n_obs: self.n_obs, n_actions: self.n_actions });
        }
        Ok(())
    }

    /// Exact probability of `action` at `observation`.
    pub fn prob(&self, observation: usize, action: usize) -> Result<f64> {
        self.check(observation, action)?;
        Ok(self.prob_unchecked(observation, action))
    }

    fn prob_unchecked(&self, observation: usize, action: usize) -> f64 {
        match &self.kind {
            PolicyKind::Tabular(rows) => rows[observation][action],
            PolicyKind::Mixture(parts) => parts.iter().map(|(w, p)| w * p.prob_unchecked(observation, action)).sum(),
            PolicyKind::DomainPreset { resolved, .. } => resolved.prob_unchecked(observation, action),
        }
    }

    /// The full action distribution at `observation`.
    pub fn row(&self, observation: usize) -> Result<Vec<f64>> {
        self.check(observation, 0)?;
        Ok((0..self.n_actions).map(|a| self.prob_unchecked(observation, a)).collect())
    }

    /// Draws an action by inverting the cumulative distribution of [`Policy::row`].
    pub fn sample<R: Rng + ?Sized>(&self, observation: usize, rng: &mut R) -> Result<usize> {
        let row = self.row(observation)?;
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last_positive = None;
        for (a, p) in row.iter().enumerate() {
            if *p > 0.0 {
                cumulative += p;
                last_positive = Some(a);
                if u < cumulative {
                    return Ok(a);
                }
            }
        }
        // u landed in the rounding gap above the final cumulative sum
        last_positive.ok_or_else(|| Error::InvalidPolicy(format!("row {observation} has no mass")))
    }

    pub fn check_spaces(&self, n_obs: usize, n_actions: usize) -> Result<()> {
        if self.n_obs != n_obs || self.n_actions != n_actions {
            return Err(Error::SpaceMismatch(format!(
                "policy is {}x{}, domain is {n_obs}x{n_actions}",
                self.n_obs, self.n_actions
            )));
        }
        Ok(())
    }

    /// Flattens the policy into an explicit table.
    pub fn to_table(&self) -> Vec<Vec<f64>> {
        (0..self.n_obs).map(|o| (0..self.n_actions).map(|a| self.prob_unchecked(o, a)).collect()).collect()
    }

    /// Writes `observation_id,action_id,probability` rows (non-zero entries only).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["observation_id", "action_id", "probability"])?;
        for (o, row) in self.to_table().iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    out.write_record([o.to_string(), a.to_string(), p.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a tabular policy; entries not listed are zero.
    pub fn read_csv<R: Read>(reader: R, n_obs: usize, n_actions: usize) -> Result<Self> {
        let mut rows = vec![vec![0.0; n_actions]; n_obs];
        let mut input = csv::Reader::from_reader(reader);
        for (line, record) in input.deserialize::<(usize, usize, f64)>().enumerate() {
            let (o, a, p) = record?;
            if o >= n_obs || a >= n_actions {
                return Err(Error::Schema {
                    line: line + 2,
                    message: format!("entry ({o}, {a}) outside {n_obs}x{n_actions}"),
                });
            }
            rows[o][a] = p;
        }
        Self::tabular(rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path, n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, n_obs, n_actions)
    }
}

/// `max π(o,a)/β(o,a)` over the support of π; infinite when β misses any
/// action π can take.
pub fn support_ratio_bound(pi: &Policy, beta: &Policy) -> Result<f64> {
    pi.check_spaces(beta.n_obs, beta.n_actions)?;
    let mut bound: f64 = 0.0;
    for o in 0..pi.n_obs {
        for a in 0..pi.n_actions {
            let p = pi.prob_unchecked(o, a);
            if p > 0.0 {
                let b = beta.prob_unchecked(o, a);
                if b <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                bound = bound.max(p / b);
            }
        }
    }
    Ok(bound)
}

/// Resolves a preset id such as `robotoy_run_heavy(0.8)` or
/// `behavior(mc_pump(0.8))` for `domain`.
///
/// Grammar: `name` or `name(arg)`, where `behavior(...)` wraps any preset as
/// `0.5·inner + 0.5·uniform`.
pub fn preset(id: &str, domain: DomainId) -> Result<Policy> {
    preset_with(id, domain, &DomainParams::default())
}

/// [`preset`] for a domain with non-default parameters (observation grid size).
pub fn preset_with(id: &str, domain: DomainId, params: &DomainParams) -> Result<Policy> {
    let resolved = resolve(id.trim(), domain, params)?;
    Ok(Policy {
        n_obs: resolved.n_obs,
        n_actions: resolved.n_actions,
        kind: PolicyKind::DomainPreset { preset_id: id.trim().to_string(), resolved: Box::new(resolved) },
    })
}

/// Default (evaluation, behavior) preset ids for each domain.
pub fn default_presets(domain: DomainId) -> (&'static str, &'static str) {
    match domain {
        DomainId::RoboToyActive | DomainId::RoboToyPassive => ("robotoy_run_heavy(0.8)", "robotoy_walk_heavy(0.8)"),
        DomainId::NsMountainCar => ("mc_pump(0.8)", "behavior(mc_pump(0.8))"),
        DomainId::Medevac => ("medevac_triage(0.9)", "behavior(medevac_triage(0.9))"),
    }
}

fn split_call(id: &str) -> Result<(&str, Option<&str>)> {
    match id.find('(') {
        None => Ok((id, None)),
        Some(open) => {
            if !id.ends_with(')') {
                return Err(Error::UnknownPreset(id.to_string()));
            }
            Ok((&id[..open], Some(id[open + 1..id.len() - 1].trim())))
        }
    }
}

fn probability_arg(id: &str, arg: Option<&str>) -> Result<f64> {
    let q: f64 = arg
        .ok_or_else(|| Error::UnknownPreset(id.to_string()))?
        .parse()
        .map_err(|_| Error::UnknownPreset(id.to_string()))?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidPolicy(format!("preset `{id}` needs a probability in [0, 1]")));
    }
    Ok(q)
}

fn resolve(id: &str, domain: DomainId, params: &DomainParams) -> Result<Policy> {
    let (name, arg) = split_call(id)?;
    let (n_obs, n_actions) = domain.spaces_with(params);
    let wrong_domain = || Error::InvalidPolicy(format!("preset `{id}` does not apply to {domain}"));
    match name {
        "uniform" => Policy::uniform(n_obs, n_actions),
        "behavior" => {
            let inner = arg.ok_or_else(|| Error::UnknownPreset(id.to_string()))?;
            Policy::half_uniform(&resolve(inner, domain, params)?)
        }
        "robotoy_run_heavy" | "robotoy_walk_heavy" | "robotoy_always_run" | "robotoy_always_walk" => {
            if !domain.is_robotoy() {
                return Err(wrong_domain());
            }
            let run = |q: f64| Policy::constant_row(n_obs, vec![1.0 - q, q]);
            match name {
                "robotoy_run_heavy" => run(probability_arg(id, arg)?),
                "robotoy_always_run" => run(1.0),
                "robotoy_always_walk" => run(0.0),
                // half of the evaluation policy, half always-walk
                _ => Policy::mixture(vec![(0.5, run(probability_arg(id, arg)?)?), (0.5, run(0.0)?)]),
            }
        }
        "mc_pump" | "mc_full_throttle" | "mc_idle" => {
            if domain != DomainId::NsMountainCar {
                return Err(wrong_domain());
            }
            match name {
                // full force at every step, always along the current velocity
                "mc_full_throttle" => crate::envs::mountain_car::pumping_table(n_obs, 1.0).and_then(Policy::tabular),
                "mc_idle" => Policy::constant_row(n_obs, vec![0.0, 1.0, 0.0]),
                _ => {
                    let q = probability_arg(id, arg)?;
                    crate::envs::mountain_car::pumping_table(n_obs, q).and_then(Policy::tabular)
                }
            }
        }
        "medevac_triage" | "medevac_always_dispatch" | "medevac_never_dispatch" => {
            if domain != DomainId::Medevac {
                return Err(wrong_domain());
            }
            use crate::envs::medevac;
            match name {
                "medevac_always_dispatch" => Policy::tabular(medevac::always_dispatch_table()),
                "medevac_never_dispatch" => Policy::tabular(medevac::never_dispatch_table()),
                _ => Policy::tabular(medevac::triage_table(probability_arg(id, arg)?)),
            }
        }
        _ => Err(Error::UnknownPreset(id.to_string())),
    }
}
