//! Traffic model: negative-binomial connection counts and popularity-based
//! domain choice.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, Poisson};

use super::scenario::{DomainWeight, NbParams};

/// Draws from NB(r, p) as a Gamma–Poisson mixture: the Poisson rate is
/// Gamma(r, (1-p)/p) distributed, which yields mean r(1-p)/p and variance
/// r(1-p)/p².
pub fn sample_connection_count<R: Rng + ?Sized>(params: NbParams, rng: &mut R) -> u64 {
    assert!(params.is_valid(), "invalid negative binomial parameters {params:?}");
    let gamma = Gamma::new(params.r, (1.0 - params.p) / params.p).expect("checked parameters");
    poisson(gamma.sample(rng), rng)
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).map_or(0, |d| d.sample(rng) as u64)
}

/// Precomputed sampler for one hour's parameter pair.
#[derive(Debug, Clone)]
pub struct ConnectionSampler {
    gamma: Gamma<f64>,
}

impl ConnectionSampler {
    pub fn new(params: NbParams) -> ConnectionSampler {
        assert!(params.is_valid(), "invalid negative binomial parameters {params:?}");
        ConnectionSampler { gamma: Gamma::new(params.r, (1.0 - params.p) / params.p).expect("checked parameters") }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        poisson(self.gamma.sample(rng), rng)
    }
}

/// Categorical distribution over the modelled domains plus the "outside"
/// outcome.
#[derive(Debug, Clone)]
pub struct DomainPicker {
    servers: Vec<u32>,
    weights: Option<WeightedIndex<f64>>,
    outside_fraction: f64,
}

impl DomainPicker {
    pub fn new(dist: &[DomainWeight], outside_fraction: f64) -> DomainPicker {
        let weights = WeightedIndex::new(dist.iter().map(|d| d.views_per_million)).ok();
        DomainPicker { servers: dist.iter().map(|d| d.server).collect(), weights, outside_fraction }
    }

    /// `None` means the connection went outside the modelled set.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u32> {
        if self.outside_fraction > 0.0 && rng.random_bool(self.outside_fraction.min(1.0)) {
            return None;
        }
        let weights = self.weights.as_ref()?;
        Some(self.servers[weights.sample(rng)])
    }
}

pub fn pick_domain<R: Rng + ?Sized>(dist: &[DomainWeight], outside_fraction: f64, rng: &mut R) -> Option<u32> {
    DomainPicker::new(dist, outside_fraction).pick(rng)
}
