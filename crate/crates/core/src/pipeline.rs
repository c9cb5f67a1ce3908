//! Inference on the modelled hardware: sensor quantisation, LBP layers on
//! sub-arrays, MLP layers as bit-serial AND plus DPU reduction.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::SimConfig;
use crate::dpu::{Dpu, DpuError};
use crate::isa::{merge_traces, EventClass, IsaError, TraceEvent};
use crate::mapper::{build_layout, chunks, compile_mlp_layer, execute_mlp, load_lbp_tile, run_inmem_lbp, Lane, MapError};
use crate::net::{forward, Activation, ApproxConfig, FeatureMap, LayerSpec, LbpLayer, MlpLayer, NetError, NetworkSpec};
use crate::sensor::{quantize_skip, RawImage, SensorError};
use crate::subarray::COLS;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dpu(#[from] DpuError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("layer {layer}: {msg}")]
    Unsupported { layer: usize, msg: String },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Output of every layer, as in [`crate::net::forward`].
    pub activations: Vec<Activation>,
    pub trace: Vec<TraceEvent>,
}

/// Sensor frontend: one conversion event per image row and converted bit.
pub fn sensor_events(img: &RawImage, bits: u32, apx: u32) -> Vec<TraceEvent> {
    let planes = bits.saturating_sub(apx);
    (0..img.height() as u64 * u64::from(planes))
        .map(|i| TraceEvent::new(i, None, "convert", img.width() as u32, EventClass::PixelConversion))
        .collect()
}

/// Golden-model inference on a raw frame.
pub fn reference_image(spec: &NetworkSpec, img: &RawImage, cfg: ApproxConfig) -> Result<Vec<Activation>> {
    spec.check_apx(cfg)?;
    let fm = quantize_skip(img, spec.input.bits, cfg.apx)?;
    Ok(forward(spec, &fm, cfg)?)
}

/// Simulated inference on a raw frame.
pub fn simulate_image(spec: &NetworkSpec, img: &RawImage, cfg: ApproxConfig, sim: &SimConfig) -> Result<SimOutput> {
    spec.check_apx(cfg)?;
    let fm = quantize_skip(img, spec.input.bits, cfg.apx)?;
    let sensor = sensor_events(img, spec.input.bits, cfg.apx);
    // the frontend zeroed the approximated pixel bits
    simulate(spec, &fm, cfg, sim, cfg.apx, sensor)
}

/// Simulated inference on an already quantised map whose low bits are
/// not known to be zero.
pub fn simulate_map(spec: &NetworkSpec, fm: &FeatureMap, cfg: ApproxConfig, sim: &SimConfig) -> Result<SimOutput> {
    spec.check_apx(cfg)?;
    simulate(spec, fm, cfg, sim, 0, Vec::new())
}

fn simulate(
    spec: &NetworkSpec,
    input: &FeatureMap,
    cfg: ApproxConfig,
    sim: &SimConfig,
    mut zero_lsbs: u32,
    sensor: Vec<TraceEvent>,
) -> Result<SimOutput> {
    spec.shapes()?;
    let mut lanes = (0..sim.sub_arrays as u32).map(|id| Lane::new(id, sim.voltage)).collect::<Result<Vec<_>, _>>()?;
    let mut dpu = Dpu::new();
    let mut current = Activation::Map(input.clone());
    let mut activations = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        let tag = Some(idx as u32);
        lanes.iter_mut().for_each(|l| l.set_layer(tag));
        dpu.layer = tag;
        let next = match (layer, &current) {
            (LayerSpec::Lbp(l), Activation::Map(fm)) => {
                let (out, z) = lbp_layer(fm, l, cfg, zero_lsbs, &mut lanes, &mut dpu)?;
                zero_lsbs = z;
                Activation::Map(out)
            }
            (LayerSpec::AvgPool { window }, Activation::Map(fm)) => {
                zero_lsbs = 0;
                Activation::Map(dpu.avg_pool(fm, *window)?)
            }
            (LayerSpec::Mlp(m), a @ (Activation::Map(_) | Activation::Vector(_))) => {
                Activation::Vector(mlp_layer(&a.flatten().expect("map or vector"), m, &mut lanes, &mut dpu)?)
            }
            (LayerSpec::BatchNorm(bn), Activation::Vector(v)) => Activation::Scores(dpu.batch_norm(v, bn)?),
            (l, _) => {
                return Err(PipelineError::Unsupported { layer: idx, msg: format!("{} cannot consume its input", l.kind()) })
            }
        };
        activations.push(next.clone());
        current = next;
    }
    let mut traces: Vec<Vec<TraceEvent>> = lanes.into_iter().map(|l| l.events).collect();
    traces.push(dpu.take_events());
    traces.push(sensor);
    Ok(SimOutput { activations, trace: merge_traces(traces) })
}

/// Where an LBP bit goes once the sub-array has produced it.
#[derive(Clone, Copy)]
struct Slot {
    output: usize,
    channel: usize,
    significance: u32,
    pos: usize,
}

fn lbp_layer(
    fm: &FeatureMap,
    layer: &LbpLayer,
    cfg: ApproxConfig,
    zero_lsbs: u32,
    lanes: &mut [Lane],
    dpu: &mut Dpu,
) -> Result<(FeatureMap, u32)> {
    layer.validate(fm.channels())?;
    let (pad_y, pad_x) = layer.padding(fm.height(), fm.width())?;
    let (h, w) = (fm.height(), fm.width());
    let positions = h * w;
    let out_bits = layer.code_bits();
    let pruned = layer.outputs.iter().map(|o| o.pruned(cfg)).collect::<Result<Vec<_>, _>>()?;

    let at = |c: usize, pos: usize, tap: (usize, usize)| {
        let y = (pos / w + tap.0) as isize - pad_y as isize;
        let x = (pos % w + tap.1) as isize - pad_x as isize;
        fm.get_padded(c, y, x)
    };
    let mut pixels = Vec::new();
    let mut pivots = Vec::new();
    let mut slots = Vec::new();
    for (o, out) in pruned.iter().enumerate() {
        for (c, k) in out.kernels.iter().enumerate() {
            let pivot = k.pivot();
            for (tap, &sig) in k.samples().iter().zip(k.significance()) {
                for pos in 0..positions {
                    pixels.push(at(c, pos, (tap.0, tap.1)));
                    pivots.push(at(c, pos, (pivot.0, pivot.1)));
                    slots.push(Slot { output: o, channel: c, significance: sig, pos });
                }
            }
        }
    }

    // tile t runs on lane t mod n; lanes are independent
    let skip = zero_lsbs.min(cfg.apx).min(fm.bits());
    let tiles = chunks(pixels.len(), COLS);
    let n = lanes.len();
    let results: Vec<Vec<(usize, Vec<bool>)>> = lanes
        .par_iter_mut()
        .enumerate()
        .map(|(li, lane)| {
            let mut out = Vec::new();
            for (t, range) in tiles.iter().enumerate().filter(|(t, _)| t % n == li) {
                let plan = build_layout(range.len(), fm.bits(), skip)?;
                let ev = load_lbp_tile(lane, &plan, &pixels[range.clone()], &pivots[range.clone()])?;
                lane.events.extend(ev);
                let res = run_inmem_lbp(lane, &plan, ApproxConfig::new(skip))?;
                lane.events.extend(res.events);
                out.push((t, res.bits));
            }
            Ok(out)
        })
        .collect::<Result<_, MapError>>()?;

    let mut codes = vec![vec![vec![0u32; positions]; fm.channels()]; pruned.len()];
    for (t, bits) in results.into_iter().flatten() {
        for (slot, bit) in slots[tiles[t].clone()].iter().zip(bits) {
            codes[slot.output][slot.channel][slot.pos] |= u32::from(bit) << slot.significance;
        }
    }

    let mut out = FeatureMap::zeros(pruned.len(), h, w, out_bits)?;
    let mut known_zero = u32::MAX;
    for (o, spec) in pruned.iter().enumerate() {
        let theta = layer.outputs[o].theta(layer.theta);
        known_zero = known_zero.min(spec.projection.skipped().min(theta.trailing_zeros()));
        let mut fused = vec![0u64; positions];
        for e in spec.projection.entries() {
            for range in chunks(positions, COLS) {
                fuse_events(dpu, range.len());
                for pos in range {
                    fused[pos] |= u64::from((codes[o][e.channel][pos] >> e.bit) & 1) << e.out_bit;
                }
            }
        }
        for range in chunks(positions, COLS) {
            let act = dpu.activate("threshold", &fused[range.clone()], u64::from(theta), out_bits);
            for (pos, v) in range.zip(act) {
                out.set(o, pos / w, pos % w, v as u32)?;
            }
        }
    }
    if layer.joint {
        Ok((fm.concat_channels(&out)?, known_zero.min(zero_lsbs)))
    } else {
        Ok((out, known_zero))
    }
}

fn fuse_events(dpu: &mut Dpu, width: usize) {
    dpu.record("fuse_read", width as u32, EventClass::Fusion);
    dpu.record("fuse_write", width as u32, EventClass::Fusion);
}

fn mlp_layer(input: &[u64], layer: &MlpLayer, lanes: &mut [Lane], dpu: &mut Dpu) -> Result<Vec<u64>> {
    layer.validate(input.len())?;
    let mut acts = Vec::with_capacity(input.len());
    for range in chunks(input.len(), COLS) {
        acts.extend(dpu.activate("activate", &input[range], layer.shift, layer.act_bits));
    }
    let plan = compile_mlp_layer(layer.outputs(), layer.inputs(), layer.weight_bits, layer.act_bits, lanes.len())?;
    Ok(execute_mlp(&plan, &layer.weights, &acts, lanes, dpu)?)
}
