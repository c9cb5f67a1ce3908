use serde::{Deserialize, Serialize};

use super::{FeatureMap, NetError, Result};

/// Fully connected layer with unsigned `weight_bits`-bit weights. Inputs are
/// shifted by `shift` and saturated to `act_bits` bits before the product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayer {
    /// `weights[out][in]`
    pub weights: Vec<Vec<u32>>,
    pub weight_bits: u32,
    pub act_bits: u32,
    #[serde(default)]
    pub shift: u64,
}

impl MlpLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self, inputs: usize) -> Result<()> {
        if self.weight_bits == 0 || self.weight_bits > 16 || self.act_bits == 0 || self.act_bits > 16 {
            return Err(NetError::InvalidSpec(format!(
                "MLP widths N={} M={} must be in 1..=16",
                self.weight_bits, self.act_bits
            )));
        }
        if self.weights.is_empty() {
            return Err(NetError::InvalidSpec("MLP without outputs".into()));
        }
        if let Some(row) = self.weights.iter().find(|r| r.len() != inputs) {
            return Err(NetError::ShapeMismatch(format!(
                "MLP weight row of length {} for {inputs} inputs",
                row.len()
            )));
        }
        let limit = 1u64 << self.weight_bits;
        if self.weights.iter().flatten().any(|&w| u64::from(w) >= limit) {
            return Err(NetError::InvalidSpec(format!("MLP weight exceeds {} bits", self.weight_bits)));
        }
        Ok(())
    }
}

/// Inference-time affine normalisation in Q16 fixed point:
/// `score = gamma * x + beta`, both `gamma` and `beta` scaled by 2^16.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<i64>,
    pub beta: Vec<i64>,
}

impl BatchNorm {
    pub const FRAC_BITS: u32 = 16;
    pub const ONE: i64 = 1 << Self::FRAC_BITS;

    pub fn identity(n: usize) -> Self {
        BatchNorm { gamma: vec![Self::ONE; n], beta: vec![0; n] }
    }

    pub fn validate(&self, inputs: usize) -> Result<()> {
        if self.gamma.len() != inputs || self.beta.len() != inputs {
            return Err(NetError::ShapeMismatch(format!(
                "batch norm with {}/{} parameters for {inputs} inputs",
                self.gamma.len(),
                self.beta.len()
            )));
        }
        Ok(())
    }
}

/// Non-overlapping `window x window` mean, rounded half up. Trailing rows and
/// columns that do not fill a window are dropped.
pub fn avg_pool(fm: &FeatureMap, window: usize) -> Result<FeatureMap> {
    if window == 0 || window > fm.height() || window > fm.width() {
        return Err(NetError::ShapeMismatch(format!(
            "pool window {window} for a {}x{} map",
            fm.height(),
            fm.width()
        )));
    }
    let (oh, ow) = (fm.height() / window, fm.width() / window);
    let n = (window * window) as u64;
    let mut data = Vec::with_capacity(fm.channels() * oh * ow);
    for c in 0..fm.channels() {
        for y in 0..oh {
            for x in 0..ow {
                let mut sum = 0u64;
                for dy in 0..window {
                    for dx in 0..window {
                        sum += u64::from(fm.get(c, y * window + dy, x * window + dx));
                    }
                }
                data.push(((sum + n / 2) / n) as u32);
            }
        }
    }
    FeatureMap::new(fm.channels(), oh, ow, fm.bits(), data)
}

pub fn quantize_activation(x: u64, shift: u64, bits: u32) -> u64 {
    x.saturating_sub(shift).min((1u64 << bits) - 1)
}

pub fn mlp_forward(input: &[u64], layer: &MlpLayer) -> Result<Vec<u64>> {
    layer.validate(input.len())?;
    let q: Vec<u64> = input.iter().map(|&x| quantize_activation(x, layer.shift, layer.act_bits)).collect();
    layer
        .weights
        .iter()
        .map(|row| {
            row.iter()
                .zip(&q)
                .try_fold(0u64, |acc, (&w, &x)| acc.checked_add(u64::from(w) * x))
                .ok_or(NetError::Overflow("MLP dot product"))
        })
        .collect()
}

pub fn batch_norm(input: &[u64], bn: &BatchNorm) -> Result<Vec<i64>> {
    bn.validate(input.len())?;
    input
        .iter()
        .zip(bn.gamma.iter().zip(&bn.beta))
        .map(|(&x, (&g, &b))| {
            let v = i128::from(g) * i128::from(x) + i128::from(b);
            i64::try_from(v).map_err(|_| NetError::Overflow("batch norm"))
        })
        .collect()
}

/// Pool, two fully connected layers and the affine normalisation. Returns
/// Q16 scores.
pub fn head_forward(fm: &FeatureMap, pool: usize, mlp1: &MlpLayer, mlp2: &MlpLayer, bn: &BatchNorm) -> Result<Vec<i64>> {
    let pooled = avg_pool(fm, pool)?;
    let flat: Vec<u64> = pooled.data().iter().map(|&v| u64::from(v)).collect();
    let hidden = mlp_forward(&flat, mlp1)?;
    let out = mlp_forward(&hidden, mlp2)?;
    batch_norm(&out, bn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize, bits: u32) -> MlpLayer {
        let weights = (0..n).map(|i| (0..n).map(|j| u32::from(i == j)).collect()).collect();
        MlpLayer { weights, weight_bits: 1, act_bits: bits, shift: 0 }
    }

    #[test]
    fn pool_rounds_half_up() {
        let fm = FeatureMap::new(1, 2, 2, 8, vec![1, 2, 2, 2]).unwrap();
        // 7 / 4 = 1.75 -> 2
        assert_eq!(avg_pool(&fm, 2).unwrap().data(), &[2]);
        let fm = FeatureMap::new(1, 1, 2, 8, vec![1, 2]).unwrap();
        assert!(avg_pool(&fm, 2).is_err());
        let fm = FeatureMap::new(1, 2, 2, 8, vec![0, 1, 1, 0]).unwrap();
        // exactly one half rounds up
        assert_eq!(avg_pool(&fm, 2).unwrap().data(), &[1]);
    }

    #[test]
    fn identity_head_returns_pooled() {
        let fm = FeatureMap::new(1, 4, 4, 4, (0..16).collect()).unwrap();
        let pooled = avg_pool(&fm, 2).unwrap();
        let scores = head_forward(&fm, 2, &identity(4, 4), &identity(4, 4), &BatchNorm::identity(4)).unwrap();
        let expected: Vec<i64> = pooled.data().iter().map(|&v| i64::from(v) << 16).collect();
        assert_eq!(scores, expected);
    }

    #[test]
    fn zero_weights_give_beta() {
        let fm = FeatureMap::new(1, 2, 2, 8, vec![9, 9, 9, 9]).unwrap();
        let zero = MlpLayer { weights: vec![vec![0]; 3], weight_bits: 3, act_bits: 3, shift: 0 };
        let second = MlpLayer { weights: vec![vec![1, 2, 3]; 2], weight_bits: 3, act_bits: 3, shift: 0 };
        let bn = BatchNorm { gamma: vec![5, 7], beta: vec![-3, 11] };
        assert_eq!(head_forward(&fm, 2, &zero, &second, &bn).unwrap(), vec![-3, 11]);
    }

    #[test]
    fn activation_saturates() {
        assert_eq!(quantize_activation(1000, 0, 3), 7);
        assert_eq!(quantize_activation(5, 6, 3), 0);
        assert_eq!(quantize_activation(9, 4, 3), 5);
    }

    #[test]
    fn mlp_validation() {
        let bad = MlpLayer { weights: vec![vec![8]], weight_bits: 3, act_bits: 3, shift: 0 };
        assert!(mlp_forward(&[1], &bad).is_err());
        let ragged = MlpLayer { weights: vec![vec![1, 2], vec![1]], weight_bits: 3, act_bits: 3, shift: 0 };
        assert!(matches!(mlp_forward(&[1, 1], &ragged), Err(NetError::ShapeMismatch(_))));
    }
}
