use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VoltageModel;

/// A (bit-line level, sense reference) pair that must stay separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    /// Number of stored ones, 0..=3.
    pub level: usize,
    /// Reference index, 0..=2 for R1..R3.
    pub reference: usize,
}

impl Boundary {
    /// The six adjacent pairs, in level order.
    pub const ALL: [Boundary; 6] = [
        Boundary { level: 0, reference: 0 },
        Boundary { level: 1, reference: 0 },
        Boundary { level: 1, reference: 1 },
        Boundary { level: 2, reference: 1 },
        Boundary { level: 2, reference: 2 },
        Boundary { level: 3, reference: 2 },
    ];

    /// Distance from `level_mv` to the reference, positive on the correct side.
    pub fn margin(&self, model: &VoltageModel, level_mv: f64) -> f64 {
        let r = f64::from(model.refs_mv()[self.reference]);
        if self.reference < self.level {
            level_mv - r
        } else {
            r - level_mv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub boundary: Boundary,
    pub nominal_mv: f64,
    pub min_mv: f64,
    pub mean_mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub sigma_mv: f64,
    pub trials: u64,
    /// Sense decisions evaluated: eight input combinations per trial.
    pub decisions: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub boundaries: Vec<MarginStats>,
}

/// Senses all eight three-bit combinations `trials` times with independent
/// zero-mean Gaussian noise of `sigma_mv` on the bit-line level.
///
/// The noise stream depends only on `seed`, so runs with the same seed and
/// different sigmas see the same standard-normal draws scaled by sigma.
pub fn monte_carlo_margin(model: &VoltageModel, sigma_mv: f64, trials: u64, seed: u64) -> MarginReport {
    assert!(sigma_mv >= 0.0, "sigma must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min = [f64::INFINITY; 6];
    let mut sum = [0.0f64; 6];
    let mut count = [0u64; 6];
    let mut errors = 0u64;
    for _ in 0..trials {
        for combo in 0u32..8 {
            let ones = combo.count_ones() as usize;
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = f64::from(model.level(ones)) + sigma_mv * z;
            if model.classify(v) != ones {
                errors += 1;
            }
            for (i, b) in Boundary::ALL.iter().enumerate().filter(|(_, b)| b.level == ones) {
                let m = b.margin(model, v);
                min[i] = min[i].min(m);
                sum[i] += m;
                count[i] += 1;
            }
        }
    }
    let decisions = trials * 8;
    let boundaries = Boundary::ALL
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let nominal = b.margin(model, f64::from(model.level(b.level)));
            MarginStats {
                boundary: b,
                nominal_mv: nominal,
                min_mv: if count[i] == 0 { nominal } else { min[i] },
                mean_mv: if count[i] == 0 { nominal } else { sum[i] / count[i] as f64 },
            }
        })
        .collect();
    MarginReport {
        sigma_mv,
        trials,
        decisions,
        errors,
        error_rate: if decisions == 0 { 0.0 } else { errors as f64 / decisions as f64 },
        boundaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_margins() {
        let r = monte_carlo_margin(&VoltageModel::default(), 0.0, 100, 1);
        assert_eq!(r.errors, 0);
        let nominal: Vec<f64> = r.boundaries.iter().map(|b| b.nominal_mv).collect();
        assert_eq!(nominal, vec![80.0, 135.0, 55.0, 185.0, 115.0, 100.0]);
        assert!(r.boundaries.iter().all(|b| b.min_mv == b.nominal_mv && b.mean_mv == b.nominal_mv));
    }

    #[test]
    fn same_seed_is_reproducible() {
        let m = VoltageModel::default();
        assert_eq!(monte_carlo_margin(&m, 20.0, 500, 9), monte_carlo_margin(&m, 20.0, 500, 9));
    }

    #[test]
    fn error_rate_matches_gaussian_tails() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let model = VoltageModel::default();
        let sigma = 60.0;
        let n = Normal::new(0.0, sigma).unwrap();
        let tail = |m: f64| n.sf(m);
        // lower and upper distance to the nearest references, per level
        let window = [(f64::INFINITY, 80.0), (135.0, 55.0), (185.0, 115.0), (100.0, f64::INFINITY)];
        let weights = [1.0, 3.0, 3.0, 1.0];
        let expected: f64 = window
            .iter()
            .zip(weights)
            .map(|(&(lo, hi), w)| w * (tail(lo) + tail(hi)))
            .sum::<f64>()
            / 8.0;
        let r = monte_carlo_margin(&model, sigma, 20_000, 3);
        assert!((r.error_rate - expected).abs() < 0.01, "{} vs {expected}", r.error_rate);
    }
}
