//! MEDEVAC air-ambulance dispatch.
//!
//! Calls arrive as Poisson events from 34 zones with three priority levels.
//! At each call the controller sees the priority and which of the four
//! ambulances are free, and either dispatches one ambulance or declines.
//! Serving a call pays the priority's reward; the ambulance is then busy for
//! an exponential service time that grows with its distance to the zone.
//!
//! Non-stationarity is hybrid: the high-priority arrival rate oscillates with
//! the episode index (passive) and each ambulance's service rate decays with
//! how often it was dispatched (active).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{act, EnvConfig, EnvState, Step, Trace};
use crate::error::{Error, Result};
use crate::policies::Policy;

pub const ZONES: usize = 34;
pub const AMBULANCES: usize = 4;
pub const PRIORITIES: usize = 3;
pub const EVENTS_PER_EPISODE: usize = 20;
pub const N_OBSERVATIONS: usize = PRIORITIES << AMBULANCES;
pub const N_ACTIONS: usize = AMBULANCES + 1;
pub const NO_DISPATCH: usize = AMBULANCES;

const GRID_COLUMNS: usize = 6;
const BASE_ZONES: [usize; AMBULANCES] = [7, 10, 25, 28];
const DISTANCE_COST: f64 = 0.25;

fn zone_xy(zone: usize) -> (f64, f64) {
    ((zone % GRID_COLUMNS) as f64, (zone / GRID_COLUMNS) as f64)
}

fn distance(a: usize, b: usize) -> f64 {
    let (ax, ay) = zone_xy(a);
    let (bx, by) = zone_xy(b);
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Relative call volume of each zone (fixed, uneven).
fn zone_weights() -> [f64; ZONES] {
    let mut w = [0.0; ZONES];
    for (z, slot) in w.iter_mut().enumerate() {
        *slot = 1.0 + ((z * 7) % 5) as f64 * 0.25;
    }
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

pub fn observation(priority: usize, free_mask: usize) -> usize {
    priority * (1 << AMBULANCES) + free_mask
}

pub fn decode_observation(observation: usize) -> (usize, usize) {
    (observation >> AMBULANCES, observation & ((1 << AMBULANCES) - 1))
}

fn lowest_free(mask: usize) -> Option<usize> {
    (0..AMBULANCES).find(|a| mask & (1 << a) != 0)
}

fn table_from(preferred: impl Fn(usize, usize) -> usize, q: f64) -> Vec<Vec<f64>> {
    let other = (1.0 - q) / (N_ACTIONS - 1) as f64;
    (0..N_OBSERVATIONS)
        .map(|o| {
            let (priority, mask) = decode_observation(o);
            let best = preferred(priority, mask);
            (0..N_ACTIONS).map(|a| if a == best { q } else { other }).collect()
        })
        .collect()
}

/// Serve high priority whenever possible, medium when at least two
/// ambulances are free, low when at least three are; follow that rule with
/// probability `q`.
pub fn triage_table(q: f64) -> Vec<Vec<f64>> {
    table_from(
        |priority, mask| {
            let free = mask.count_ones() as usize;
            let reserve = PRIORITIES - 1 - priority;
            match lowest_free(mask) {
                Some(a) if free > reserve => a,
                _ => NO_DISPATCH,
            }
        },
        q,
    )
}

/// Always dispatch the lowest-index free ambulance (ambulance 0 if none is free).
pub fn always_dispatch_table() -> Vec<Vec<f64>> {
    table_from(|_, mask| lowest_free(mask).unwrap_or(0), 1.0)
}

pub fn never_dispatch_table() -> Vec<Vec<f64>> {
    table_from(|_, _| NO_DISPATCH, 1.0)
}

fn surge(config: &EnvConfig, episode_index: u64) -> f64 {
    let p = &config.params;
    let phase = std::f64::consts::TAU * config.speed * episode_index as f64 / p.surge_period;
    1.0 + p.surge_amplitude * phase.sin()
}

pub(crate) fn nominal_latent(config: &EnvConfig) -> Vec<f64> {
    let mut latent = vec![surge(config, 0)];
    latent.extend([config.params.service_rate; AMBULANCES]);
    latent
}

/// Surge follows the episode-index phase; each service rate decays by
/// `speed · service_wear` per dispatch in the finished episode.
pub(crate) fn update(state: &EnvState, next_index: u64, dispatches: &[u32; AMBULANCES]) -> Vec<f64> {
    let p = &state.config.params;
    let mut latent = vec![surge(&state.config, next_index)];
    for (a, &count) in dispatches.iter().enumerate() {
        let rate = state.latent[1 + a];
        let next = rate * (1.0 - state.config.speed * p.service_wear * count as f64);
        latent.push(next.max(p.service_rate_min.min(rate)));
    }
    latent
}

pub(crate) fn simulate(
    state: &EnvState,
    policy: &Policy,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Step>, bool, Trace)> {
    let p = &state.config.params;
    let weights = zone_weights();
    let mut priority_rates = p.arrival_rates;
    priority_rates[PRIORITIES - 1] *= state.latent[0];
    let total_rate: f64 = priority_rates.iter().sum();
    let gaps = Exp::new(total_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let events = horizon;
    let mut clock = 0.0;
    let mut busy_until = [0.0f64; AMBULANCES];
    let mut dispatches = [0u32; AMBULANCES];
    let mut steps = Vec::with_capacity(events);
    for _ in 0..events {
        clock += gaps.sample(rng);
        let priority = pick(&priority_rates, total_rate, rng);
        let zone = pick(&weights, 1.0, rng);
        let mask = (0..AMBULANCES).filter(|&a| busy_until[a] <= clock).fold(0, |m, a| m | (1 << a));
        let observation = observation(priority, mask);
        let (action, behavior_prob) = act(policy, observation, rng)?;
        let mut reward = 0.0;
        if action < AMBULANCES && mask & (1 << action) != 0 {
            reward = p.priority_rewards[priority];
            dispatches[action] += 1;
            let rate = state.latent[1 + action] / (1.0 + DISTANCE_COST * distance(BASE_ZONES[action], zone));
            let service = Exp::new(rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            busy_until[action] = clock + service.sample(rng);
        }
        steps.push(Step { observation, action, reward, behavior_prob });
    }
    Ok((steps, false, Trace::Medevac { dispatches }))
}

fn pick(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{env_create, DomainId};
    use crate::policies::preset;

    #[test]
    fn observation_encoding_round_trips() {
        for pr in 0..PRIORITIES {
            for mask in 0..16 {
                assert_eq!(decode_observation(observation(pr, mask)), (pr, mask));
            }
        }
        assert_eq!(N_OBSERVATIONS, 48);
    }

    #[test]
    fn triage_reserves_ambulances() {
        let t = triage_table(1.0);
        // one free ambulance: serve only high priority
        assert_eq!(t[observation(2, 0b0100)][2], 1.0);
        assert_eq!(t[observation(1, 0b0100)][NO_DISPATCH], 1.0);
        assert_eq!(t[observation(0, 0b0111)][0], 1.0);
        assert_eq!(t[observation(2, 0)][NO_DISPATCH], 1.0);
    }

    #[test]
    fn episodes_have_fixed_event_count_and_valid_rewards() {
        let s = env_create(EnvConfig::new(DomainId::Medevac, 1.0, 4)).unwrap();
        let pi = preset("medevac_triage(0.9)", DomainId::Medevac).unwrap();
        for i in 0..20 {
            let (h, _) = s.run_episode(&pi, i).unwrap();
            assert_eq!(h.steps.len(), EVENTS_PER_EPISODE);
            for st in &h.steps {
                assert!([0.0, 1.0, 5.0, 25.0].contains(&st.reward));
            }
        }
    }

    #[test]
    fn never_dispatch_earns_nothing() {
        let s = env_create(EnvConfig::new(DomainId::Medevac, 1.0, 4)).unwrap();
        let p = preset("medevac_never_dispatch", DomainId::Medevac).unwrap();
        let (h, next) = s.run_episode(&p, 0).unwrap();
        assert_eq!(h.episode_return(), 0.0);
        assert_eq!(next.latent[1..], s.latent[1..]);
    }

    #[test]
    fn zone_weights_are_normalised() {
        assert!((zone_weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(distance(0, 0), 0.0);
    }
}
