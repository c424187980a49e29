//! Exact simulation by thinning.
//!
//! Between events the positive-weight part of the excitation only decays, so
//! `sum_{w_j > 0} w_j A_j(s) + max mu` over the current baseline segment
//! bounds the intensity until the next event or knot. Negative components
//! (the hbb cutoff) only lower the true intensity, so the bound stays valid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::baseline::Baseline;
use crate::error::{domain, HawkesError, Result};
use crate::events::EventSeries;
use crate::kernels::Kernel;

/// Name of the generator behind every seeded routine in this crate.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha, seed_from_u64)";

pub const DEFAULT_EVENT_CAP: usize = 10_000_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn default_cap() -> usize {
    DEFAULT_EVENT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: Kernel,
    pub baseline: Baseline,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub max_events: usize,
}

impl SimConfig {
    pub fn new(kernel: Kernel, baseline: Baseline, horizon: f64, seed: u64) -> Self {
        Self {
            kernel,
            baseline,
            horizon,
            seed,
            max_events: DEFAULT_EVENT_CAP,
        }
    }
}

pub fn simulate(config: &SimConfig) -> Result<EventSeries> {
    let mut rng = rng_from_seed(config.seed);
    simulate_with(config, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<EventSeries> {
    let horizon = config.horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain(format!("simulation horizon must be positive, got {horizon}")));
    }
    if let Some(h) = config.baseline.horizon() {
        if h < horizon {
            return Err(domain(format!("baseline ends at {h} before the horizon {horizon}")));
        }
    }
    let mass = config.kernel.total_mass();
    if mass >= 1.0 {
        log::warn!("kernel mass {mass} >= 1: the process is not sub-critical");
    }

    let components = config.kernel.to_exp_components();
    let mut state = vec![0.0; components.len()];
    let mut times = Vec::new();
    let mut s = 0.0f64;

    let decay_to = |state: &mut [f64], from: f64, to: f64| {
        let dt = to - from;
        for (a, c) in state.iter_mut().zip(components) {
            *a *= (-dt / c.timescale).exp();
        }
    };

    while s < horizon {
        let kernel_bound: f64 = state
            .iter()
            .zip(components)
            .filter(|(_, c)| c.weight > 0.0)
            .map(|(a, c)| c.weight * a)
            .sum();
        let (mu_bound, segment_end) = config.baseline.segment_bound(s);
        let stop = segment_end.min(horizon);
        let bound = kernel_bound + mu_bound;
        if bound <= 0.0 {
            decay_to(&mut state, s, stop);
            s = stop;
            continue;
        }
        let step: f64 = rng.sample::<f64, _>(Exp1) / bound;
        let candidate = s + step;
        if candidate >= stop {
            decay_to(&mut state, s, stop);
            s = stop;
            continue;
        }
        if candidate <= s {
            continue;
        }
        decay_to(&mut state, s, candidate);
        s = candidate;
        let excitation: f64 = state.iter().zip(components).map(|(a, c)| c.weight * a).sum();
        let intensity = config.baseline.value(s) + excitation;
        if rng.random::<f64>() * bound <= intensity {
            times.push(s);
            if times.len() > config.max_events {
                return Err(HawkesError::Explosion {
                    cap: config.max_events,
                });
            }
            for a in state.iter_mut() {
                *a += 1.0;
            }
        }
    }
    EventSeries::new(times, horizon)
}
