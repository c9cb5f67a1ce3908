//! Functional model of one 256x256 compute sub-array built from
//! read-decoupled 8T cells.
//!
//! Activating three read word-lines discharges each read bit-line to a level
//! set by how many of the three cells store a 1. A sense amplifier with three
//! references turns that level into OR3, MAJ3 and AND3 (and complements) in
//! the same cycle, and a majority over OR3, MIN3 and AND3 yields XOR3.
//! Nothing in the compute path writes to the cell grid.

mod margin;
mod row;

pub use margin::{monte_carlo_margin, Boundary, MarginReport, MarginStats};
pub use row::{maj, Row};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROWS: usize = 256;
pub const COLS: usize = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubArrayError {
    #[error("row {0} out of range")]
    RowOutOfRange(usize),
    #[error("row {0} activated more than once")]
    DuplicateRow(usize),
    #[error("helper row {row} is not all-{}", u8::from(*expected))]
    HelperNotInitialized { row: usize, expected: bool },
    #[error("invalid voltage model: {0}")]
    InvalidVoltageModel(String),
}

pub type Result<T, E = SubArrayError> = std::result::Result<T, E>;

/// Read bit-line levels and sense references, in millivolts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVoltageModel", into = "RawVoltageModel")]
pub struct VoltageModel {
    levels_mv: [u32; 4],
    refs_mv: [u32; 3],
    precharge_mv: u32,
}

#[derive(Serialize, Deserialize)]
struct RawVoltageModel {
    levels_mv: [u32; 4],
    refs_mv: [u32; 3],
    precharge_mv: u32,
}

impl TryFrom<RawVoltageModel> for VoltageModel {
    type Error = SubArrayError;

    fn try_from(raw: RawVoltageModel) -> Result<Self> {
        VoltageModel::new(raw.levels_mv, raw.refs_mv, raw.precharge_mv)
    }
}

impl From<VoltageModel> for RawVoltageModel {
    fn from(v: VoltageModel) -> Self {
        RawVoltageModel { levels_mv: v.levels_mv, refs_mv: v.refs_mv, precharge_mv: v.precharge_mv }
    }
}

impl Default for VoltageModel {
    fn default() -> Self {
        VoltageModel { levels_mv: [280, 495, 735, 950], refs_mv: [360, 550, 850], precharge_mv: 1100 }
    }
}

impl VoltageModel {
    /// `levels_mv[k]` is the bit-line level with `k` of three cells at 1.
    /// Levels and references must interleave strictly.
    pub fn new(levels_mv: [u32; 4], refs_mv: [u32; 3], precharge_mv: u32) -> Result<Self> {
        let [l0, l1, l2, l3] = levels_mv;
        let [r1, r2, r3] = refs_mv;
        if !(l0 < r1 && r1 < l1 && l1 < r2 && r2 < l2 && l2 < r3 && r3 < l3) {
            return Err(SubArrayError::InvalidVoltageModel(format!(
                "levels {levels_mv:?} and references {refs_mv:?} do not interleave"
            )));
        }
        if l3 > precharge_mv {
            return Err(SubArrayError::InvalidVoltageModel(format!(
                "level {l3} mV above precharge {precharge_mv} mV"
            )));
        }
        Ok(VoltageModel { levels_mv, refs_mv, precharge_mv })
    }

    pub fn levels_mv(&self) -> [u32; 4] {
        self.levels_mv
    }

    pub fn refs_mv(&self) -> [u32; 3] {
        self.refs_mv
    }

    pub fn precharge_mv(&self) -> u32 {
        self.precharge_mv
    }

    pub fn level(&self, ones: usize) -> u32 {
        self.levels_mv[ones]
    }

    /// Number of references a (possibly noisy) level exceeds; this is the
    /// popcount the sense amplifier reports.
    pub fn classify(&self, level_mv: f64) -> usize {
        self.refs_mv.iter().filter(|&&r| level_mv > f64::from(r)).count()
    }
}

/// All outputs of one sense-amplifier evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenseOut {
    pub or3: Row,
    pub maj3: Row,
    pub and3: Row,
    pub nor3: Row,
    pub min3: Row,
    pub nand3: Row,
    pub xor3: Row,
}

/// Compares each level against the three references.
pub fn sense(levels_mv: &[u32], model: &VoltageModel) -> SenseOut {
    let [r1, r2, r3] = model.refs_mv;
    let mut or3 = Row::ZERO;
    let mut maj3 = Row::ZERO;
    let mut and3 = Row::ZERO;
    for (col, &v) in levels_mv.iter().enumerate().take(COLS) {
        or3.set(col, v > r1);
        maj3.set(col, v > r2);
        and3.set(col, v > r3);
    }
    let min3 = !maj3;
    SenseOut { or3, maj3, and3, nor3: !or3, min3, nand3: !and3, xor3: maj(or3, min3, and3) }
}

/// Two-input operations realised with a constant helper row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Logic2 {
    Xor2,
    And2,
    Or2,
    Nor2,
    Nand2,
    Xnor2,
}

impl Logic2 {
    pub const ALL: [Logic2; 6] = [Logic2::Xor2, Logic2::And2, Logic2::Or2, Logic2::Nor2, Logic2::Nand2, Logic2::Xnor2];

    /// Constant the helper row must hold.
    pub fn helper(self) -> bool {
        matches!(self, Logic2::And2 | Logic2::Nand2)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SubArray {
    cells: Vec<Row>,
    model: VoltageModel,
}

impl std::fmt::Debug for SubArray {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubArray").field("model", &self.model).finish_non_exhaustive()
    }
}

impl Default for SubArray {
    fn default() -> Self {
        SubArray::new(VoltageModel::default())
    }
}

impl SubArray {
    pub fn new(model: VoltageModel) -> Self {
        SubArray { cells: vec![Row::ZERO; ROWS], model }
    }

    pub fn model(&self) -> &VoltageModel {
        &self.model
    }

    fn check(row: usize) -> Result<usize> {
        if row < ROWS {
            Ok(row)
        } else {
            Err(SubArrayError::RowOutOfRange(row))
        }
    }

    pub fn write_row(&mut self, row: usize, bits: Row) -> Result<()> {
        self.cells[Self::check(row)?] = bits;
        Ok(())
    }

    pub fn read_row(&self, row: usize) -> Result<Row> {
        Ok(self.cells[Self::check(row)?])
    }

    /// Per-column bit-line level with rows `a`, `b`, `c` activated together.
    pub fn activate3(&self, a: usize, b: usize, c: usize) -> Result<Vec<u32>> {
        let (ra, rb, rc) = (self.read_row(a)?, self.read_row(b)?, self.read_row(c)?);
        if a == b || a == c {
            return Err(SubArrayError::DuplicateRow(a));
        }
        if b == c {
            return Err(SubArrayError::DuplicateRow(b));
        }
        Ok((0..COLS)
            .map(|col| {
                let ones = usize::from(ra.get(col)) + usize::from(rb.get(col)) + usize::from(rc.get(col));
                self.model.level(ones)
            })
            .collect())
    }

    /// One activate-and-sense cycle.
    pub fn compute3(&self, a: usize, b: usize, c: usize) -> Result<SenseOut> {
        Ok(sense(&self.activate3(a, b, c)?, &self.model))
    }

    /// Two-input op of rows `a` and `b`, with `helper` holding the constant
    /// [`Logic2::helper`] requires.
    pub fn logic2(&self, op: Logic2, a: usize, b: usize, helper: usize) -> Result<Row> {
        let expected = op.helper();
        let h = self.read_row(helper)?;
        if h != if expected { Row::ONES } else { Row::ZERO } {
            return Err(SubArrayError::HelperNotInitialized { row: helper, expected });
        }
        let s = self.compute3(a, b, helper)?;
        Ok(match op {
            Logic2::Xor2 => s.xor3,
            Logic2::And2 => s.and3,
            Logic2::Or2 => s.or3,
            Logic2::Nor2 => s.nor3,
            Logic2::Nand2 => s.nand3,
            // majority over the complementary outputs
            Logic2::Xnor2 => maj(s.nor3, s.maj3, s.nand3),
        })
    }

    /// Sum and carry of a column-wise one-bit full adder, from one sense.
    pub fn full_add(&self, a: usize, b: usize, c: usize) -> Result<(Row, Row)> {
        let s = self.compute3(a, b, c)?;
        Ok((s.xor3, s.maj3))
    }

    /// Every row as 64 hex digits, one per line.
    pub fn dump_hex(&self) -> String {
        let mut out = String::with_capacity(ROWS * (COLS / 4 + 1));
        for r in &self.cells {
            out.push_str(&r.to_hex());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loaded(a: bool, b: bool, c: bool) -> SubArray {
        let mut sa = SubArray::default();
        for (row, bit) in [(0, a), (1, b), (2, c)] {
            sa.write_row(row, if bit { Row::ONES } else { Row::ZERO }).unwrap();
        }
        sa
    }

    #[test]
    fn nominal_levels() {
        assert!(loaded(false, false, false).activate3(0, 1, 2).unwrap().iter().all(|&v| v == 280));
        assert!(loaded(true, true, true).activate3(0, 1, 2).unwrap().iter().all(|&v| v == 950));
        assert!(loaded(false, true, false).activate3(0, 1, 2).unwrap().iter().all(|&v| v == 495));
    }

    #[test]
    fn four_case_xor3() {
        for (bits, xor) in [((false, false, false), false), ((false, false, true), true), ((false, true, true), false), ((true, true, true), true)] {
            let s = loaded(bits.0, bits.1, bits.2).compute3(0, 1, 2).unwrap();
            assert_eq!(s.xor3.get(17), xor, "{bits:?}");
        }
    }

    #[test]
    fn and3_only_at_top_level() {
        let model = VoltageModel::default();
        for (k, &lvl) in model.levels_mv().iter().enumerate() {
            let s = sense(&[lvl], &model);
            assert_eq!(s.and3.get(0), k == 3);
        }
    }

    #[test]
    fn truth_tables() {
        for combo in 0u8..8 {
            let (a, b, c) = (combo & 1 == 1, combo & 2 == 2, combo & 4 == 4);
            let s = loaded(a, b, c).compute3(0, 1, 2).unwrap();
            let ones = combo.count_ones();
            assert_eq!(s.xor3.get(0), ones % 2 == 1);
            assert_eq!(s.maj3.get(0), ones >= 2);
            assert_eq!(s.and3.get(0), ones == 3);
            assert_eq!(s.or3.get(0), ones >= 1);
            assert_eq!(s.nor3, !s.or3);
            assert_eq!(s.min3, !s.maj3);
            assert_eq!(s.nand3, !s.and3);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let sa = SubArray::default();
        assert_eq!(sa.activate3(0, 0, 1), Err(SubArrayError::DuplicateRow(0)));
        assert_eq!(sa.activate3(0, 1, 1), Err(SubArrayError::DuplicateRow(1)));
        assert_eq!(sa.activate3(0, 1, 256), Err(SubArrayError::RowOutOfRange(256)));
        assert_eq!(sa.read_row(300), Err(SubArrayError::RowOutOfRange(300)));
    }

    #[test]
    fn helper_is_checked() {
        let mut sa = SubArray::default();
        sa.write_row(3, Row::ONES).unwrap();
        assert_eq!(
            sa.logic2(Logic2::Xor2, 0, 1, 3),
            Err(SubArrayError::HelperNotInitialized { row: 3, expected: false })
        );
        assert!(sa.logic2(Logic2::And2, 0, 1, 3).is_ok());
    }

    #[test]
    fn xor2_of_row_with_itself_is_zero() {
        let mut sa = SubArray::default();
        let r = Row::from_words([0xDEAD_BEEF, 1, u64::MAX, 42]);
        sa.write_row(0, r).unwrap();
        sa.write_row(1, r).unwrap();
        assert_eq!(sa.logic2(Logic2::Xor2, 0, 1, 2).unwrap(), Row::ZERO);
        assert_eq!(sa.logic2(Logic2::Xnor2, 0, 1, 2).unwrap(), Row::ONES);
    }

    #[test]
    fn voltage_model_must_interleave() {
        assert!(VoltageModel::new([280, 495, 735, 950], [500, 550, 850], 1100).is_err());
        assert!(VoltageModel::new([280, 495, 735, 950], [360, 550, 850], 900).is_err());
        let json = serde_json::to_string(&VoltageModel::default()).unwrap();
        assert_eq!(serde_json::from_str::<VoltageModel>(&json).unwrap(), VoltageModel::default());
    }

    #[test]
    fn dump_has_one_line_per_row() {
        let mut sa = SubArray::default();
        sa.write_row(5, Row::ONES).unwrap();
        let dump = sa.dump_hex();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), ROWS);
        assert_eq!(lines[5], "f".repeat(64));
    }
}
