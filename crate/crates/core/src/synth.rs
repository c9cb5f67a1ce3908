//! Seeded random networks and frames for verification runs and workloads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{
    BatchNorm, InputGeometry, LayerSpec, LbpKernel, LbpLayer, LbpOutput, MlpLayer, NetworkSpec, ProjectionEntry,
    ProjectionMap, Tap, FORMAT_VERSION,
};
use crate::sensor::RawImage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub bits: u32,
    pub lbp_layers: usize,
    pub outputs: usize,
    pub extent: usize,
    pub samples: usize,
    /// Projection entries per output.
    pub m: usize,
    pub joint: bool,
    pub pool: usize,
    pub hidden: usize,
    pub classes: usize,
    pub weight_bits: u32,
    pub act_bits: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            height: 28,
            width: 28,
            bits: 8,
            lbp_layers: 1,
            outputs: 2,
            extent: 3,
            samples: 4,
            m: 4,
            joint: true,
            pool: 2,
            hidden: 16,
            classes: 10,
            weight_bits: 2,
            act_bits: 4,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pivot and `samples` distinct taps with shuffled significances.
pub fn random_kernel<R: Rng>(rng: &mut R, extent: usize, samples: usize) -> LbpKernel {
    assert!(samples < extent * extent, "not enough taps");
    let mut taps: Vec<Tap> = (0..extent * extent).map(|i| Tap(i / extent, i % extent)).collect();
    taps.shuffle(rng);
    let pivot = taps[0];
    let samples: Vec<Tap> = taps[1..=samples].to_vec();
    let mut sig: Vec<u32> = (0..samples.len() as u32).collect();
    sig.shuffle(rng);
    LbpKernel::new(extent, pivot, samples, sig).expect("valid by construction")
}

/// `m` entries reading distinct code bits, mapped onto out bits `0..m`.
pub fn random_projection<R: Rng>(rng: &mut R, kernels: &[LbpKernel], m: usize) -> ProjectionMap {
    let mut sources: Vec<(usize, u32)> =
        kernels.iter().enumerate().flat_map(|(c, k)| (0..k.code_bits()).map(move |b| (c, b))).collect();
    assert!(m <= sources.len(), "projection wider than the available code bits");
    sources.shuffle(rng);
    let mut outs: Vec<u32> = (0..m as u32).collect();
    outs.shuffle(rng);
    let entries = sources.into_iter().zip(outs).map(|((channel, bit), out_bit)| ProjectionEntry { channel, bit, out_bit }).collect();
    ProjectionMap::new(entries).expect("valid by construction")
}

pub fn random_lbp_layer<R: Rng>(rng: &mut R, channels: usize, p: &SynthParams) -> LbpLayer {
    let outputs = (0..p.outputs)
        .map(|_| {
            let kernels: Vec<LbpKernel> = (0..channels).map(|_| random_kernel(rng, p.extent, p.samples)).collect();
            let projection = random_projection(rng, &kernels, p.m);
            LbpOutput { kernels, projection }
        })
        .collect();
    LbpLayer { outputs, theta: None, joint: p.joint }
}

fn random_mlp<R: Rng>(rng: &mut R, outputs: usize, inputs: usize, weight_bits: u32, act_bits: u32, shift: u64) -> MlpLayer {
    let weights = (0..outputs).map(|_| (0..inputs).map(|_| rng.random_range(0..1u32 << weight_bits)).collect()).collect();
    MlpLayer { weights, weight_bits, act_bits, shift }
}

/// LBP layers, average pooling, two MLP layers and batch normalisation.
pub fn random_network(seed: u64, p: &SynthParams) -> NetworkSpec {
    let mut rng = rng(seed);
    let mut layers = Vec::new();
    let mut channels = 1;
    for _ in 0..p.lbp_layers {
        let l = random_lbp_layer(&mut rng, channels, p);
        channels = l.output_channels(channels);
        layers.push(LayerSpec::Lbp(l));
    }
    layers.push(LayerSpec::AvgPool { window: p.pool });
    let flat = channels * (p.height / p.pool) * (p.width / p.pool);
    layers.push(LayerSpec::Mlp(random_mlp(&mut rng, p.hidden, flat, p.weight_bits, p.act_bits, 1)));
    layers.push(LayerSpec::Mlp(random_mlp(&mut rng, p.classes, p.hidden, p.weight_bits, p.act_bits, 4)));
    let gamma = (0..p.classes).map(|_| rng.random_range(-2 * BatchNorm::ONE..=2 * BatchNorm::ONE)).collect();
    let beta = (0..p.classes).map(|_| rng.random_range(-1000i64..=1000) << 8).collect();
    layers.push(LayerSpec::BatchNorm(BatchNorm { gamma, beta }));
    NetworkSpec {
        format_version: FORMAT_VERSION,
        input: InputGeometry { channels: 1, height: p.height, width: p.width, bits: p.bits },
        apx: 0,
        layers,
    }
}

/// Uniform random frame.
pub fn random_image<R: Rng>(rng: &mut R, height: usize, width: usize, depth: u32) -> RawImage {
    let samples = (0..height * width).map(|_| rng.random_range(0..1u32 << depth) as u16).collect();
    RawImage::new(height, width, depth, samples).expect("valid by construction")
}

/// Smooth frame: a random gradient plus noise, closer to natural images.
pub fn textured_image<R: Rng>(rng: &mut R, height: usize, width: usize, depth: u32) -> RawImage {
    let max = (1u32 << depth) - 1;
    let (gy, gx): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let samples = (0..height * width)
        .map(|i| {
            let (y, x) = ((i / width) as f64 / height as f64, (i % width) as f64 / width as f64);
            let base = 0.5 + 0.35 * (gy * y + gx * x);
            let noise: f64 = rng.random_range(-0.15..0.15);
            ((base + noise).clamp(0.0, 1.0) * f64::from(max)).round() as u16
        })
        .collect();
    RawImage::new(height, width, depth, samples).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn networks_are_valid_and_reproducible() {
        let p = SynthParams::default();
        let a = random_network(5, &p);
        a.validate().unwrap();
        assert_eq!(a, random_network(5, &p));
        assert_ne!(a, random_network(6, &p));
        for apx in 0..=2 {
            a.check_apx(crate::net::ApproxConfig::new(apx)).unwrap();
        }
    }

    #[test]
    fn kernels_use_distinct_taps() {
        let mut r = rng(1);
        for _ in 0..50 {
            let k = random_kernel(&mut r, 3, 8);
            assert_eq!(k.samples().len(), 8);
            assert!(!k.samples().contains(&k.pivot()));
        }
    }
}
