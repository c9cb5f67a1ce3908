use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{chunks, round_robin, Lane, MapError, RegionLayout, Result};
use crate::dpu::Dpu;
use crate::isa::{EventClass, Instruction, IsaError, Opcode, Program, Size};
use crate::subarray::{Row, COLS};

/// Rows `C_k(X)` for `k = 0..width`, LSB first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSliceTensor {
    pub width: u32,
    pub len: usize,
    pub slices: Vec<Vec<bool>>,
}

pub fn bit_slice(x: &[u64], width: u32) -> Result<BitSliceTensor> {
    if let Some(&v) = x.iter().find(|&&v| width < 64 && v >> width != 0) {
        return Err(MapError::WidthTooSmall { value: v, width });
    }
    let slices = (0..width).map(|k| x.iter().map(|&v| (v >> k) & 1 == 1).collect()).collect();
    Ok(BitSliceTensor { width, len: x.len(), slices })
}

pub fn unslice(t: &BitSliceTensor) -> Vec<u64> {
    (0..t.len)
        .map(|i| t.slices.iter().enumerate().fold(0u64, |acc, (k, s)| acc | u64::from(s[i]) << k))
        .collect()
}

/// One neuron over one segment of at most 256 inputs, on one sub-array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpTile {
    pub lane: usize,
    pub neuron: usize,
    pub segment: Range<usize>,
    /// `C_n(W)` rows, `n = 0..N`.
    pub weight_rows: Vec<usize>,
    /// `C_m(I)` rows, `m = 0..M`.
    pub input_rows: Vec<usize>,
    /// One AND per `(n, m)` pair; the DPU reduces each right after it runs.
    pub program: Program,
    pub pairs: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpPlan {
    pub outputs: usize,
    pub inputs: usize,
    pub weight_bits: u32,
    pub act_bits: u32,
    pub tiles: Vec<MlpTile>,
}

/// Places the bit slices of an `outputs x inputs` layer and emits the AND
/// programs. The AND is the carry (majority) instruction with an all-0
/// third operand.
pub fn compile_mlp_layer(outputs: usize, inputs: usize, weight_bits: u32, act_bits: u32, lanes: usize) -> Result<MlpPlan> {
    if weight_bits == 0 || act_bits == 0 {
        return Err(MapError::PlanMismatch("bit widths must be at least 1".into()));
    }
    if weight_bits as usize > RegionLayout::WEIGHT.len() || act_bits as usize > RegionLayout::INPUT.len() {
        return Err(MapError::CapacityExceeded(format!(
            "{weight_bits} weight slices / {act_bits} input slices exceed the 32-row regions"
        )));
    }
    let weight_rows: Vec<usize> = RegionLayout::WEIGHT.take(weight_bits as usize).collect();
    let input_rows: Vec<usize> = RegionLayout::INPUT.take(act_bits as usize).collect();
    let pairs: Vec<(u32, u32)> = (0..weight_bits).flat_map(|n| (0..act_bits).map(move |m| (n, m))).collect();
    let scratch: Vec<usize> = RegionLayout::SCRATCH.collect();
    let zero = RegionLayout::HELPERS.zero[0];

    let segments = chunks(inputs, COLS);
    let work: Vec<(usize, Range<usize>)> =
        (0..outputs).flat_map(|j| segments.iter().map(move |s| (j, s.clone()))).collect();
    let mut tiles = Vec::with_capacity(work.len());
    for (lane, items) in round_robin(work.len(), lanes).into_iter().enumerate() {
        for idx in items {
            let (neuron, segment) = work[idx].clone();
            let size = Size::covering(segment.len()).expect("segment fits a row");
            let instructions = pairs
                .iter()
                .enumerate()
                .map(|(k, &(n, m))| {
                    Instruction::new(
                        Opcode::Carry,
                        scratch[k % scratch.len()],
                        &[weight_rows[n as usize], input_rows[m as usize], zero],
                        size,
                    )
                })
                .collect::<std::result::Result<Vec<_>, IsaError>>()?;
            let mut program = Program::new(lane as u32, instructions);
            program.helpers = RegionLayout::HELPERS;
            tiles.push(MlpTile {
                lane,
                neuron,
                segment,
                weight_rows: weight_rows.clone(),
                input_rows: input_rows.clone(),
                program,
                pairs: pairs.clone(),
            });
        }
    }
    tiles.sort_by_key(|t| (t.lane, t.neuron, t.segment.start));
    Ok(MlpPlan { outputs, inputs, weight_bits, act_bits, tiles })
}

fn slice_row(values: impl Iterator<Item = u64>, bit: u32) -> Row {
    let mut r = Row::ZERO;
    for (col, v) in values.enumerate() {
        r.set(col, (v >> bit) & 1 == 1);
    }
    r
}

/// Runs a compiled layer on `lanes` and returns the integer dot products.
/// `acts` must already be quantised to `act_bits`.
pub fn execute_mlp(plan: &MlpPlan, weights: &[Vec<u32>], acts: &[u64], lanes: &mut [Lane], dpu: &mut Dpu) -> Result<Vec<u64>> {
    if weights.len() != plan.outputs || weights.iter().any(|r| r.len() != plan.inputs) || acts.len() != plan.inputs {
        return Err(MapError::PlanMismatch("weights or activations do not match the plan".into()));
    }
    if let Some(&w) = weights.iter().flatten().find(|&&w| u64::from(w) >> plan.weight_bits != 0) {
        return Err(MapError::WidthTooSmall { value: u64::from(w), width: plan.weight_bits });
    }
    if let Some(&a) = acts.iter().find(|&&a| a >> plan.act_bits != 0) {
        return Err(MapError::WidthTooSmall { value: a, width: plan.act_bits });
    }
    let mut acc = vec![0i64; plan.outputs];
    let available = lanes.len();
    for tile in &plan.tiles {
        let lane = lanes
            .get_mut(tile.lane)
            .ok_or_else(|| MapError::PlanMismatch(format!("plan uses sub-array {} of {}", tile.lane, available)))?;
        let w = &weights[tile.neuron][tile.segment.clone()];
        let x = &acts[tile.segment.clone()];
        for (n, &row) in tile.weight_rows.iter().enumerate() {
            lane.sa.write_row(row, slice_row(w.iter().map(|&v| u64::from(v)), n as u32)).map_err(IsaError::from)?;
        }
        for (m, &row) in tile.input_rows.iter().enumerate() {
            lane.sa.write_row(row, slice_row(x.iter().copied(), m as u32)).map_err(IsaError::from)?;
        }
        let bytes = ((tile.weight_rows.len() + tile.input_rows.len()) * COLS / 8) as u32;
        let ev = lane.exec.emit("load", bytes, EventClass::DataLoad);
        lane.events.push(ev);
        for (instr, &(n, m)) in tile.program.instructions.iter().zip(&tile.pairs) {
            let ev = lane.exec.execute(&mut lane.sa, instr)?;
            lane.events.extend(ev);
            let product = lane.sa.read_row(instr.dest).map_err(IsaError::from)?;
            let ev = lane.exec.emit("read_product", instr.size.columns() as u32, EventClass::RowRead);
            lane.events.push(ev);
            let count = dpu.bitcount(&product, tile.segment.len());
            acc[tile.neuron] = dpu.shift_accumulate(acc[tile.neuron], u64::from(count), m, n)?;
        }
    }
    Ok(acc.into_iter().map(|v| v as u64).collect())
}
