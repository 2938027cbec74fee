//! Sample moments of the connection-count sampler against the closed forms
//! for NB(r, p): mean r(1-p)/p, variance r(1-p)/p².

use ct_gossip_core::sim::{sample_connection_count, NbParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PAIRS: [(f64, f64); 5] = [(0.5, 0.3), (1.0, 0.5), (2.5, 0.2), (5.0, 0.7), (10.0, 0.05)];

#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub r: f64,
    pub p: f64,
    pub mean: f64,
    pub variance: f64,
    pub expected_mean: f64,
    pub expected_variance: f64,
}

impl Moments {
    pub fn mean_error(&self) -> f64 {
        (self.mean - self.expected_mean).abs() / self.expected_mean
    }

    pub fn variance_error(&self) -> f64 {
        (self.variance - self.expected_variance).abs() / self.expected_variance
    }

    pub fn within(&self, mean_tol: f64, var_tol: f64) -> bool {
        self.mean_error() <= mean_tol && self.variance_error() <= var_tol
    }
}

pub fn moments(r: f64, p: f64, draws: usize, seed: u64) -> Moments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = NbParams { r, p };
    let xs: Vec<f64> = (0..draws).map(|_| sample_connection_count(params, &mut rng) as f64).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Moments { r, p, mean, variance, expected_mean: r * (1.0 - p) / p, expected_variance: r * (1.0 - p) / (p * p) }
}
