//! Non-stationary mountain car.
//!
//! Classic under-powered car dynamics with macro-actions that repeat a
//! primitive action `action_repeat` times. Observations are cells of a
//! position × velocity grid. After every episode the effective engine force
//! multiplier κ decays in proportion to the episode's mean |velocity|, so
//! vigorous driving wears the motor (active non-stationarity).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{act, EnvState, Step, Trace};
use crate::error::{Error, Result};
use crate::policies::Policy;

pub const MAX_MACRO_STEPS: usize = 30;
pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;

pub const LEFT: usize = 0;
pub const IDLE: usize = 1;
pub const RIGHT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

impl CarState {
    /// One primitive step with force multiplier `kappa`.
    pub fn step(self, action: usize, kappa: f64) -> CarState {
        let push = action as f64 - 1.0;
        let mut velocity = self.velocity + push * FORCE * kappa - GRAVITY * (3.0 * self.position).cos();
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        let mut position = (self.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        if position > MAX_POSITION {
            position = MAX_POSITION;
        }
        CarState { position, velocity }
    }

    pub fn at_goal(self) -> bool {
        self.position >= GOAL_POSITION
    }

    /// Grid cell id `position_bin · grid + velocity_bin`.
    pub fn observation(self, grid: usize) -> usize {
        let bin = |x: f64, lo: f64, hi: f64| -> usize {
            let b = ((x - lo) / (hi - lo) * grid as f64).floor();
            (b.max(0.0) as usize).min(grid - 1)
        };
        bin(self.position, MIN_POSITION, MAX_POSITION) * grid + bin(self.velocity, -MAX_SPEED, MAX_SPEED)
    }
}

/// Energy-pumping policy: push in the direction of the velocity bin with
/// probability `q`, the other two actions share the rest.
pub fn pumping_table(n_obs: usize, q: f64) -> Result<Vec<Vec<f64>>> {
    let grid = (n_obs as f64).sqrt().round() as usize;
    if grid * grid != n_obs {
        return Err(Error::InvalidPolicy(format!("{n_obs} observations is not a square grid")));
    }
    let other = (1.0 - q) / 2.0;
    Ok((0..n_obs)
        .map(|o| {
            let velocity_bin = o % grid;
            let preferred = if velocity_bin >= grid / 2 { RIGHT } else { LEFT };
            (0..3).map(|a| if a == preferred { q } else { other }).collect()
        })
        .collect())
}

pub(crate) fn simulate(
    state: &EnvState,
    policy: &Policy,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Step>, bool, Trace)> {
    let params = &state.config.params;
    let kappa = state.latent[0];
    let mut car = CarState { position: rng.random_range(-0.6..-0.4), velocity: 0.0 };
    let mut steps = Vec::with_capacity(horizon);
    let mut speed_sum = 0.0;
    let mut primitive = 0usize;
    let mut done = false;
    while steps.len() < horizon && !done {
        let observation = car.observation(params.grid_size);
        let (action, behavior_prob) = act(policy, observation, rng)?;
        for _ in 0..params.action_repeat {
            car = car.step(action, kappa);
            speed_sum += car.velocity.abs();
            primitive += 1;
            if car.at_goal() {
                done = true;
                break;
            }
        }
        steps.push(Step { observation, action, reward: -1.0, behavior_prob });
    }
    let mean_abs_velocity = if primitive > 0 { speed_sum / primitive as f64 } else { 0.0 };
    Ok((steps, !done, Trace::MountainCar { mean_abs_velocity }))
}

/// `κ_{i+1} = max(κ_min, κ_i·(1 − speed·c_v·v̄_i))`.
pub(crate) fn update(state: &EnvState, mean_abs_velocity: f64) -> Vec<f64> {
    let kappa = state.latent[0];
    let p = &state.config.params;
    let next = kappa * (1.0 - state.config.speed * p.velocity_wear * mean_abs_velocity);
    vec![next.max(p.kappa_min.min(kappa))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{env_create, DomainId, EnvConfig};
    use crate::policies::preset;

    #[test]
    fn observation_grid_covers_corners() {
        let lo = CarState { position: MIN_POSITION, velocity: -MAX_SPEED };
        let hi = CarState { position: MAX_POSITION, velocity: MAX_SPEED };
        assert_eq!(lo.observation(8), 0);
        assert_eq!(hi.observation(8), 63);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let s = CarState { position: MIN_POSITION + 0.001, velocity: -0.05 }.step(LEFT, 1.0);
        assert_eq!(s.position, MIN_POSITION);
        assert_eq!(s.velocity, 0.0);
    }

    #[test]
    fn pumping_policy_reaches_goal_when_fresh() {
        let s = env_create(EnvConfig::new(DomainId::NsMountainCar, 0.0, 2)).unwrap();
        let pi = preset("mc_pump(1.0)", DomainId::NsMountainCar).unwrap();
        let mut reached = 0;
        for i in 0..50 {
            let (h, _) = s.run_episode(&pi, i).unwrap();
            if !h.truncated {
                reached += 1;
            }
        }
        assert!(reached >= 45, "{reached}");
    }

    #[test]
    fn force_decay_follows_mean_velocity() {
        let s = env_create(EnvConfig::new(DomainId::NsMountainCar, 2.0, 2)).unwrap();
        let next = update(&s, 0.03);
        assert!((next[0] - (1.0 - 2.0 * 0.02 * 0.03)).abs() < 1e-15);
    }

    #[test]
    fn pumping_table_rows_are_distributions() {
        let t = pumping_table(64, 0.8).unwrap();
        for row in &t {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(t[0][LEFT], 0.8);
        assert_eq!(t[7][RIGHT], 0.8);
        assert!(pumping_table(10, 0.8).is_err());
    }
}
