use serde::{Deserialize, Serialize};

use super::{Lane, MapError, RegionLayout, Result};
use crate::isa::{EventClass, Helpers, Instruction, Opcode, Size, TraceEvent};
use crate::net::ApproxConfig;
use crate::subarray::{Row, COLS};

/// Placement of one LBP tile in a sub-array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    /// Parallel (pixel, pivot) pairs, one per column.
    pub columns: usize,
    /// Full width of the stored values.
    pub bits: u32,
    /// Low bits that are never mapped.
    pub skipped_lsbs: u32,
    /// P rows holding bits `bits-1` down to `skipped_lsbs`, MSB first.
    pub pixel_rows: Vec<usize>,
    /// C rows in the same order.
    pub pivot_rows: Vec<usize>,
    pub pivot_copies: usize,
    pub result_row: usize,
    pub lbp_row: usize,
    pub helpers: Helpers,
}

impl MappingPlan {
    pub fn mapped_bits(&self) -> usize {
        self.pixel_rows.len()
    }

    pub fn size(&self) -> Size {
        Size::covering(self.columns).expect("columns checked at build time")
    }

    pub fn column_mask(&self) -> Row {
        Row::prefix(self.columns)
    }

    /// Bytes moved from the buffer when loading the tile: every mapped
    /// pixel and pivot row.
    pub fn load_bytes(&self) -> u32 {
        (2 * self.mapped_bits() * COLS / 8) as u32
    }
}

pub fn build_layout(columns: usize, bits: u32, skipped_lsbs: u32) -> Result<MappingPlan> {
    if columns == 0 || bits == 0 {
        return Err(MapError::PlanMismatch("a plan needs at least one column and one bit".into()));
    }
    if columns > COLS {
        return Err(MapError::CapacityExceeded(format!("{columns} parallel pixels exceed {COLS} columns")));
    }
    if bits > 32 {
        return Err(MapError::CapacityExceeded(format!("{bits}-bit values")));
    }
    let mapped = bits.saturating_sub(skipped_lsbs) as usize;
    if mapped > RegionLayout::PIXEL.len() {
        return Err(MapError::CapacityExceeded(format!("{mapped} bit rows exceed the pixel region")));
    }
    Ok(MappingPlan {
        columns,
        bits,
        skipped_lsbs: skipped_lsbs.min(bits),
        pixel_rows: RegionLayout::PIXEL.take(mapped).collect(),
        pivot_rows: RegionLayout::PIVOT.take(mapped).collect(),
        pivot_copies: columns,
        result_row: RegionLayout::RESULT_ROW,
        lbp_row: RegionLayout::LBP_ROW,
        helpers: RegionLayout::HELPERS,
    })
}

fn transpose(values: &[u32], bit: u32) -> Row {
    let mut r = Row::ZERO;
    for (col, &v) in values.iter().enumerate() {
        r.set(col, (v >> bit) & 1 == 1);
    }
    r
}

/// Writes the bit-transposed pixels and pivot copies of one tile.
pub fn load_lbp_tile(lane: &mut Lane, plan: &MappingPlan, pixels: &[u32], pivots: &[u32]) -> Result<Vec<TraceEvent>> {
    if pixels.len() != plan.columns || pivots.len() != plan.columns {
        return Err(MapError::PlanMismatch(format!(
            "{} pixels and {} pivots for a {}-column plan",
            pixels.len(),
            pivots.len(),
            plan.columns
        )));
    }
    if let Some(&v) = pixels.iter().chain(pivots).find(|&&v| plan.bits < 32 && v >> plan.bits != 0) {
        return Err(MapError::WidthTooSmall { value: u64::from(v), width: plan.bits });
    }
    for (i, (&p, &c)) in plan.pixel_rows.iter().zip(&plan.pivot_rows).enumerate() {
        let bit = plan.bits - 1 - i as u32;
        lane.sa.write_row(p, transpose(pixels, bit)).map_err(crate::isa::IsaError::from)?;
        lane.sa.write_row(c, transpose(pivots, bit)).map_err(crate::isa::IsaError::from)?;
    }
    Ok(vec![lane.exec.emit("load", plan.load_bytes(), EventClass::DataLoad)])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InMemLbp {
    /// LBP bit per column: pixel >= pivot over the mapped bits.
    pub bits: Vec<bool>,
    /// Compare iterations issued before every column resolved.
    pub iterations: u32,
    pub events: Vec<TraceEvent>,
}

/// MSB-first in-memory comparison over a loaded tile.
///
/// Each iteration XORs one pixel-bit row with its pivot-bit row into the
/// result row. Columns that mismatch for the first time take the inverted
/// pivot bit as their LBP bit and are masked from then on. The loop stops
/// once every column is resolved; columns that never mismatch are equal and
/// get 1.
pub fn run_inmem_lbp(lane: &mut Lane, plan: &MappingPlan, cfg: ApproxConfig) -> Result<InMemLbp> {
    if plan.skipped_lsbs != cfg.apx.min(plan.bits) {
        return Err(MapError::PlanMismatch(format!(
            "plan skips {} low bits, configuration approximates {}",
            plan.skipped_lsbs, cfg.apx
        )));
    }
    if plan.helpers != lane.exec.helpers {
        return Err(MapError::PlanMismatch("helper rows differ from the executor's".into()));
    }
    let size = plan.size();
    let cols = plan.column_mask();
    let mut events = Vec::new();
    let mut resolved = Row::ZERO;
    let mut lbp = Row::ZERO;
    let mut iterations = 0;
    for (&p, &c) in plan.pixel_rows.iter().zip(&plan.pivot_rows) {
        let cmp = Instruction::new(Opcode::Cmp, plan.result_row, &[p, c], size)?;
        events.extend(lane.exec.execute(&mut lane.sa, &cmp)?);
        iterations += 1;
        let diff = lane.sa.read_row(plan.result_row).map_err(crate::isa::IsaError::from)?;
        events.push(lane.exec.emit("read_result", size.columns() as u32, EventClass::RowRead));
        let fresh = diff & !resolved & cols;
        if !fresh.is_zero() {
            let pivot = lane.sa.read_row(c).map_err(crate::isa::IsaError::from)?;
            events.push(lane.exec.emit("read_pivot", size.columns() as u32, EventClass::RowRead));
            // pixel bit 1 where the pivot bit is 0
            lbp = lbp | (fresh & !pivot);
            resolved = resolved | fresh;
        }
        if resolved == cols {
            break;
        }
    }
    lbp = lbp | (cols & !resolved);
    let old = lane.sa.read_row(plan.lbp_row).map_err(crate::isa::IsaError::from)?;
    let full = Row::prefix(size.columns());
    lane.sa.write_row(plan.lbp_row, lbp.select(&full, &old)).map_err(crate::isa::IsaError::from)?;
    events.push(lane.exec.emit("write_lbp", size.columns() as u32, EventClass::RowWrite));
    Ok(InMemLbp { bits: (0..plan.columns).map(|c| lbp.get(c)).collect(), iterations, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subarray::VoltageModel;

    fn lane() -> Lane {
        Lane::new(0, VoltageModel::default()).unwrap()
    }

    #[test]
    fn four_pixel_layout() {
        let plan = build_layout(4, 8, 0).unwrap();
        assert_eq!(plan.pixel_rows, (0..8).collect::<Vec<_>>());
        assert_eq!(plan.pivot_rows, (64..72).collect::<Vec<_>>());
        assert_eq!(plan.pivot_copies, 4);
        assert_eq!(plan.size(), Size::S64);
        let one = build_layout(1, 1, 0).unwrap();
        assert_eq!((one.columns, one.mapped_bits()), (1, 1));
        assert!(matches!(build_layout(300, 8, 0), Err(MapError::CapacityExceeded(_))));
        assert_eq!(build_layout(4, 8, 2).unwrap().pixel_rows, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn walkthrough_first_iteration() {
        // columns P3..P0; pivot MSB is 0, P3 and P0 have MSB 1
        let pivot = 0b0110_0000;
        let pixels = [0b1000_0001, 0b0010_0000, 0b0101_1111, 0b1111_0000];
        let mut l = lane();
        let plan = build_layout(4, 8, 0).unwrap();
        load_lbp_tile(&mut l, &plan, &pixels, &[pivot; 4]).unwrap();
        let cmp = Instruction::new(Opcode::Cmp, plan.result_row, &[0, 64], Size::S64).unwrap();
        l.exec.execute(&mut l.sa, &cmp).unwrap();
        let xor = l.sa.read_row(plan.result_row).unwrap();
        assert_eq!((0..4).map(|c| xor.get(c)).collect::<Vec<_>>(), [true, false, false, true]);
        let out = run_inmem_lbp(&mut l, &plan, ApproxConfig::new(0)).unwrap();
        assert_eq!(out.bits, [true, false, false, true]);
    }

    #[test]
    fn equal_values_run_full_depth() {
        let mut l = lane();
        let plan = build_layout(3, 8, 0).unwrap();
        load_lbp_tile(&mut l, &plan, &[77; 3], &[77; 3]).unwrap();
        let out = run_inmem_lbp(&mut l, &plan, ApproxConfig::new(0)).unwrap();
        assert_eq!(out.bits, [true; 3]);
        assert_eq!(out.iterations, 8);
    }

    #[test]
    fn early_exit_when_msb_decides() {
        let mut l = lane();
        let plan = build_layout(2, 8, 0).unwrap();
        load_lbp_tile(&mut l, &plan, &[200, 3], &[3, 200]).unwrap();
        let out = run_inmem_lbp(&mut l, &plan, ApproxConfig::new(0)).unwrap();
        assert_eq!(out.bits, [true, false]);
        assert_eq!(out.iterations, 1);
        assert!(out.events.iter().all(|e| e.sub_array == Some(0)));
    }

    #[test]
    fn plan_must_match() {
        let mut l = lane();
        let plan = build_layout(2, 8, 1).unwrap();
        assert!(matches!(run_inmem_lbp(&mut l, &plan, ApproxConfig::new(0)), Err(MapError::PlanMismatch(_))));
        assert!(matches!(load_lbp_tile(&mut l, &plan, &[1], &[1, 2]), Err(MapError::PlanMismatch(_))));
        assert!(matches!(load_lbp_tile(&mut l, &plan, &[256, 0], &[1, 2]), Err(MapError::WidthTooSmall { .. })));
    }
}
