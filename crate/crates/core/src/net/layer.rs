use serde::{Deserialize, Serialize};

use super::kernel::{prune_kernel, prune_projection};
use super::{lbp_encode, ApproxConfig, FeatureMap, LbpKernel, NetError, OpCount, ProjectionMap, Result};

/// Zero-insertion degree `[s*(out-1) - in + f] / 2` that makes an `f`-wide
/// window with stride `s` produce `out` outputs from `in` inputs.
pub fn compute_padding(stride: usize, out: usize, input: usize, extent: usize) -> Result<usize> {
    if stride == 0 || out == 0 || input == 0 || extent == 0 {
        return Err(NetError::ShapeMismatch("padding arguments must be >= 1".into()));
    }
    let numerator = (stride as i64) * (out as i64 - 1) - input as i64 + extent as i64;
    if numerator < 0 {
        return Err(NetError::NegativePadding(numerator));
    }
    if numerator % 2 != 0 {
        return Err(NetError::NonIntegerPadding(numerator));
    }
    Ok((numerator / 2) as usize)
}

pub fn shifted_relu(x: u32, theta: u32) -> u32 {
    x.saturating_sub(theta)
}

/// One output channel: a kernel per input channel and the fusion table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbpOutput {
    pub kernels: Vec<LbpKernel>,
    pub projection: ProjectionMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbpLayer {
    pub outputs: Vec<LbpOutput>,
    /// Shifted-ReLU threshold. Defaults to `2^(m-1)` per output channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<u32>,
    #[serde(default)]
    pub joint: bool,
}

impl LbpOutput {
    pub fn theta(&self, layer_theta: Option<u32>) -> u32 {
        let m = self.projection.width();
        layer_theta.unwrap_or(if m == 0 { 0 } else { 1 << (m - 1) })
    }

    /// Kernels and projection after approximation.
    pub fn pruned(&self, cfg: ApproxConfig) -> Result<LbpOutput> {
        for k in &self.kernels {
            cfg.check(k, &self.projection)?;
        }
        Ok(LbpOutput {
            kernels: self.kernels.iter().map(|k| prune_kernel(k, cfg.apx)).collect(),
            projection: prune_projection(&self.projection, cfg.apx),
        })
    }
}

impl LbpLayer {
    pub fn extent(&self) -> Option<usize> {
        self.outputs.first().and_then(|o| o.kernels.first()).map(LbpKernel::extent)
    }

    pub fn validate(&self, input_channels: usize) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(NetError::InvalidSpec("LBP layer without outputs".into()));
        }
        let f = self.extent().ok_or_else(|| NetError::InvalidSpec("LBP output without kernels".into()))?;
        for (o, out) in self.outputs.iter().enumerate() {
            if out.kernels.len() != input_channels {
                return Err(NetError::ShapeMismatch(format!(
                    "output {o} has {} kernels for {input_channels} input channels",
                    out.kernels.len()
                )));
            }
            if let Some(k) = out.kernels.iter().find(|k| k.extent() != f) {
                return Err(NetError::ShapeMismatch(format!(
                    "output {o} mixes kernel extents {} and {f}",
                    k.extent()
                )));
            }
            out.projection.validate_against(&out.kernels)?;
        }
        Ok(())
    }

    /// Width of the fused codes this layer emits (before joining).
    pub fn code_bits(&self) -> u32 {
        self.outputs.iter().map(|o| o.projection.width()).max().unwrap_or(0).max(1)
    }

    pub fn output_channels(&self, input_channels: usize) -> usize {
        self.outputs.len() + if self.joint { input_channels } else { 0 }
    }

    pub fn output_bits(&self, input_bits: u32) -> u32 {
        if self.joint {
            input_bits.max(self.code_bits())
        } else {
            self.code_bits()
        }
    }

    /// Per-axis zero padding that keeps the output the same size as the input.
    pub fn padding(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let f = self.extent().ok_or_else(|| NetError::InvalidSpec("LBP layer without kernels".into()))?;
        Ok((compute_padding(1, height, height, f)?, compute_padding(1, width, width, f)?))
    }
}

pub fn lbp_layer_forward(fm: &FeatureMap, layer: &LbpLayer, cfg: ApproxConfig) -> Result<FeatureMap> {
    lbp_layer_forward_counted(fm, layer, cfg).map(|(out, _)| out)
}

/// Forward pass that also tallies the memory reads, comparisons and writes
/// it performs (pivot and sample reads, one write per comparison result,
/// one read and one write per surviving projection entry).
pub fn lbp_layer_forward_counted(fm: &FeatureMap, layer: &LbpLayer, cfg: ApproxConfig) -> Result<(FeatureMap, OpCount)> {
    layer.validate(fm.channels())?;
    let f = layer.extent().expect("validated");
    let (pad_y, pad_x) = layer.padding(fm.height(), fm.width())?;
    let (h, w) = (fm.height(), fm.width());
    let out_bits = layer.code_bits();
    let mut out = FeatureMap::zeros(layer.outputs.len(), h, w, out_bits)?;
    let mut ops = OpCount::default();
    let mut patch = vec![0u32; f * f];
    let mut codes = vec![0u32; fm.channels()];

    for (o, spec) in layer.outputs.iter().enumerate() {
        let theta = spec.theta(layer.theta);
        let pruned = spec.pruned(cfg)?;
        for y in 0..h {
            for x in 0..w {
                for (c, kernel) in pruned.kernels.iter().enumerate() {
                    for (i, v) in patch.iter_mut().enumerate() {
                        let py = (y + i / f) as isize - pad_y as isize;
                        let px = (x + i % f) as isize - pad_x as isize;
                        *v = fm.get_padded(c, py, px);
                    }
                    codes[c] = lbp_encode(&patch, kernel)?;
                    let n = kernel.samples().len() as u64;
                    ops.reads += n + 1;
                    ops.comparisons += n;
                    ops.writes += n;
                }
                let fused = pruned
                    .projection
                    .entries()
                    .iter()
                    .fold(0u32, |acc, e| acc | ((codes[e.channel] >> e.bit) & 1) << e.out_bit);
                let m = pruned.projection.entries().len() as u64;
                ops.reads += m;
                ops.writes += m;
                out.set(o, y, x, shifted_relu(fused, theta))?;
            }
        }
    }
    let out = if layer.joint { fm.concat_channels(&out)? } else { out };
    Ok((out, ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ProjectionEntry, Tap};

    #[test]
    fn padding_examples() {
        assert_eq!(compute_padding(1, 5, 5, 3).unwrap(), 1);
        assert_eq!(compute_padding(1, 9, 9, 1).unwrap(), 0);
        assert_eq!(compute_padding(2, 3, 5, 3).unwrap(), 1);
    }

    #[test]
    fn padding_errors() {
        assert!(matches!(compute_padding(1, 2, 9, 3), Err(NetError::NegativePadding(-5))));
        assert!(matches!(compute_padding(1, 5, 5, 2), Err(NetError::NonIntegerPadding(1))));
    }

    #[test]
    fn padded_axis_produces_requested_outputs() {
        // brute force: count window starts on the padded axis
        for (s, out, input, f) in [(1usize, 5usize, 5usize, 3usize), (2, 3, 5, 3), (1, 7, 7, 5), (3, 4, 10, 5)] {
            let pad = compute_padding(s, out, input, f).unwrap();
            let padded = input + 2 * pad;
            let count = (0..padded).step_by(s).filter(|&start| start + f <= padded).count();
            assert_eq!(count, out, "s={s} out={out} in={input} f={f}");
        }
    }

    #[test]
    fn shifted_relu_examples() {
        assert_eq!(shifted_relu(13, 0), 13);
        assert_eq!(shifted_relu(0, 99), 0);
        assert_eq!(shifted_relu(13, 8), 5);
    }

    fn identity_layer(m: u32, joint: bool) -> LbpLayer {
        let projection = ProjectionMap::new(
            (0..m).map(|i| ProjectionEntry { channel: 0, bit: i, out_bit: i }).collect(),
        )
        .unwrap();
        LbpLayer { outputs: vec![LbpOutput { kernels: vec![LbpKernel::ring3()], projection }], theta: Some(0), joint }
    }

    #[test]
    fn zero_input_saturates_codes() {
        let fm = FeatureMap::zeros(1, 6, 6, 8).unwrap();
        let out = lbp_layer_forward(&fm, &identity_layer(4, false), ApproxConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 15));
        assert_eq!((out.height(), out.width()), (6, 6));
    }

    #[test]
    fn joint_keeps_input_channels() {
        let fm = FeatureMap::new(1, 2, 2, 8, vec![1, 2, 3, 4]).unwrap();
        let out = lbp_layer_forward(&fm, &identity_layer(4, true), ApproxConfig::default()).unwrap();
        assert_eq!(out.channels(), 2);
        assert_eq!(out.channel(0), fm.data());
    }

    #[test]
    fn kernel_count_must_match_channels() {
        let fm = FeatureMap::zeros(2, 3, 3, 8).unwrap();
        assert!(matches!(
            lbp_layer_forward(&fm, &identity_layer(4, false), ApproxConfig::default()),
            Err(NetError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn projection_reading_missing_bit_is_rejected() {
        let k = LbpKernel::new(3, Tap(1, 1), vec![Tap(0, 0)], vec![0]).unwrap();
        let projection = ProjectionMap::new(vec![ProjectionEntry { channel: 0, bit: 3, out_bit: 0 }]).unwrap();
        let layer = LbpLayer { outputs: vec![LbpOutput { kernels: vec![k], projection }], theta: None, joint: false };
        let fm = FeatureMap::zeros(1, 3, 3, 8).unwrap();
        assert!(matches!(
            lbp_layer_forward(&fm, &layer, ApproxConfig::default()),
            Err(NetError::InvalidProjection(_))
        ));
    }
}
