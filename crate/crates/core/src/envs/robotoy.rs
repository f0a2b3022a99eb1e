//! RoboToy: a robot finishes a task by walking or running. Running pays more
//! but, in the active variant, wears the motors and scales down every future
//! reward by `(1 − α)`. The passive variant instead oscillates the reward
//! scale with the episode index.
//!
//! Each episode is a single macro-decision (`T = 1`).

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{act, EnvConfig, EnvState, Step, Trace};
use crate::error::Result;
use crate::policies::Policy;

pub const WALK: usize = 0;
pub const RUN: usize = 1;

/// `λ_i = 1 + A·sin(2π·speed·i / period)`.
pub fn passive_lambda(config: &EnvConfig, episode_index: u64) -> f64 {
    let p = &config.params;
    let phase = std::f64::consts::TAU * config.speed * episode_index as f64 / p.passive_period;
    1.0 + p.passive_amplitude * phase.sin()
}

/// Wear factor α = speed · α₀.
pub fn wear(config: &EnvConfig) -> f64 {
    config.speed * config.params.wear_rate
}

pub(crate) fn active_update(state: &EnvState, ran: bool) -> Vec<f64> {
    let lambda = state.latent[0];
    if !ran {
        return vec![lambda];
    }
    let next = lambda * (1.0 - wear(&state.config));
    vec![next.max(state.config.params.lambda_min.min(lambda))]
}

/// Expected reward of `action` at reward scale `lambda`.
pub fn mean_reward(config: &EnvConfig, lambda: f64, action: usize) -> f64 {
    let base = if action == RUN { config.params.run_reward } else { config.params.walk_reward };
    base * lambda
}

pub(crate) fn simulate(state: &EnvState, policy: &Policy, rng: &mut ChaCha8Rng) -> Result<(Vec<Step>, bool, Trace)> {
    let observation = 0;
    let (action, behavior_prob) = act(policy, observation, rng)?;
    let sigma = state.config.params.reward_noise;
    let noise = if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z.clamp(-4.0, 4.0)
    } else {
        0.0
    };
    let reward = mean_reward(&state.config, state.latent[0], action) + noise;
    let step = Step { observation, action, reward, behavior_prob };
    Ok((vec![step], false, Trace::RoboToy { ran: action == RUN }))
}
