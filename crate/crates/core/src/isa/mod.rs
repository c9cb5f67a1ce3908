//! Instruction set of the compute sub-array: assembler, executor and the
//! event trace consumed by the performance model.
//!
//! Assembly is one instruction per line, `OPCODE dest, src1[, src2[, src3]] [#n]`,
//! with `;` starting a comment. `ini` takes `zeros` or `ones` in place of a
//! source. Directives `.subarray N`, `.zero rA, rB` and `.ones rC` set the
//! program's sub-array id and helper rows.

mod asm;
mod exec;
mod trace;

pub use asm::{parse_program, print_program};
pub use exec::{run, Executor};
pub use trace::{merge_traces, read_jsonl, write_jsonl, EventClass, TraceEvent};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subarray::{SubArrayError, ROWS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("line {line}, col {col}: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("line {line}, col {col}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, col: usize, name: String },
    #[error("line {line}, col {col}: bad address `{text}`")]
    BadAddress { line: usize, col: usize, text: String },
    #[error("helper row {row} is not all-{}", u8::from(*ones))]
    UninitializedHelper { row: usize, ones: bool },
    #[error("row {0} out of range")]
    RowOutOfRange(usize),
    #[error("row {0} activated more than once")]
    DuplicateRow(usize),
    #[error("unsupported size {0}")]
    BadSize(u32),
    #[error("{opcode} takes {expected} source operand(s), got {found}")]
    Arity { opcode: Opcode, expected: usize, found: usize },
    #[error("trace: {0}")]
    Trace(String),
}

impl From<SubArrayError> for IsaError {
    fn from(e: SubArrayError) -> Self {
        match e {
            SubArrayError::RowOutOfRange(r) => IsaError::RowOutOfRange(r),
            SubArrayError::DuplicateRow(r) => IsaError::DuplicateRow(r),
            SubArrayError::HelperNotInitialized { row, expected } => IsaError::UninitializedHelper { row, ones: expected },
            SubArrayError::InvalidVoltageModel(m) => IsaError::Trace(m),
        }
    }
}

pub type Result<T, E = IsaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opcode {
    Copy,
    Ini,
    Cmp,
    Search,
    Nand3,
    Nor3,
    Carry,
    Sum,
}

impl Opcode {
    pub const ALL: [Opcode; 8] =
        [Opcode::Copy, Opcode::Ini, Opcode::Cmp, Opcode::Search, Opcode::Nand3, Opcode::Nor3, Opcode::Carry, Opcode::Sum];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Copy => "copy",
            Opcode::Ini => "ini",
            Opcode::Cmp => "cmp",
            Opcode::Search => "search",
            Opcode::Nand3 => "nand3",
            Opcode::Nor3 => "nor3",
            Opcode::Carry => "carry",
            Opcode::Sum => "sum",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|o| o.mnemonic().eq_ignore_ascii_case(s))
    }

    /// Number of source rows.
    pub fn arity(self) -> usize {
        match self {
            Opcode::Ini => 0,
            Opcode::Copy => 1,
            Opcode::Cmp | Opcode::Search => 2,
            Opcode::Nand3 | Opcode::Nor3 | Opcode::Carry | Opcode::Sum => 3,
        }
    }

    /// In-array cycles one instruction occupies.
    pub fn cycles(self) -> u64 {
        match self {
            Opcode::Search => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Active column count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Size {
    S64,
    S128,
    #[default]
    S256,
}

impl Size {
    pub fn columns(self) -> usize {
        match self {
            Size::S64 => 64,
            Size::S128 => 128,
            Size::S256 => 256,
        }
    }

    /// Smallest size covering `cols` columns.
    pub fn covering(cols: usize) -> Option<Size> {
        [Size::S64, Size::S128, Size::S256].into_iter().find(|s| s.columns() >= cols)
    }
}

impl TryFrom<u32> for Size {
    type Error = IsaError;

    fn try_from(n: u32) -> Result<Size> {
        match n {
            64 => Ok(Size::S64),
            128 => Ok(Size::S128),
            256 => Ok(Size::S256),
            _ => Err(IsaError::BadSize(n)),
        }
    }
}

impl From<Size> for u32 {
    fn from(s: Size) -> u32 {
        s.columns() as u32
    }
}

/// One instruction. Unused source slots are 0; `fill` only matters for `ini`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dest: usize,
    pub src: [usize; 3],
    #[serde(default)]
    pub fill: bool,
    #[serde(default)]
    pub size: Size,
}

impl Instruction {
    pub fn new(opcode: Opcode, dest: usize, srcs: &[usize], size: Size) -> Result<Self> {
        if opcode == Opcode::Ini || srcs.len() != opcode.arity() {
            return Err(IsaError::Arity { opcode, expected: opcode.arity(), found: srcs.len() });
        }
        let mut src = [0; 3];
        src[..srcs.len()].copy_from_slice(srcs);
        let i = Instruction { opcode, dest, src, fill: false, size };
        i.check_rows()?;
        Ok(i)
    }

    pub fn ini(dest: usize, ones: bool, size: Size) -> Result<Self> {
        let i = Instruction { opcode: Opcode::Ini, dest, src: [0; 3], fill: ones, size };
        i.check_rows()?;
        Ok(i)
    }

    pub fn sources(&self) -> &[usize] {
        &self.src[..self.opcode.arity()]
    }

    fn check_rows(&self) -> Result<()> {
        match std::iter::once(self.dest).chain(self.sources().iter().copied()).find(|&r| r >= ROWS) {
            Some(r) => Err(IsaError::RowOutOfRange(r)),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} r{}", self.opcode, self.dest)?;
        if self.opcode == Opcode::Ini {
            write!(f, ", {}", if self.fill { "ones" } else { "zeros" })?;
        }
        for s in self.sources() {
            write!(f, ", r{s}")?;
        }
        write!(f, " #{}", self.size.columns())
    }
}

/// Constant rows the executor relies on: two all-0 rows and one all-1 row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Helpers {
    pub zero: [usize; 2],
    pub ones: usize,
}

impl Default for Helpers {
    fn default() -> Self {
        Helpers { zero: [128, 129], ones: 130 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Program {
    pub sub_array: u32,
    pub helpers: Helpers,
    pub instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(sub_array: u32, instructions: Vec<Instruction>) -> Self {
        Program { sub_array, helpers: Helpers::default(), instructions }
    }

    /// Instructions that initialise the helper rows over all 256 columns.
    pub fn helper_preamble(helpers: Helpers) -> Vec<Instruction> {
        vec![
            Instruction::ini(helpers.zero[0], false, Size::S256).expect("helper row"),
            Instruction::ini(helpers.zero[1], false, Size::S256).expect("helper row"),
            Instruction::ini(helpers.ones, true, Size::S256).expect("helper row"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(Size::try_from(128).unwrap().columns(), 128);
        assert_eq!(Size::try_from(100), Err(IsaError::BadSize(100)));
        assert_eq!(Size::covering(65), Some(Size::S128));
        assert_eq!(Size::covering(257), None);
    }

    #[test]
    fn constructor_checks() {
        assert!(matches!(Instruction::new(Opcode::Sum, 4, &[1, 2], Size::S256), Err(IsaError::Arity { .. })));
        assert_eq!(Instruction::new(Opcode::Copy, 400, &[1], Size::S64), Err(IsaError::RowOutOfRange(400)));
        let i = Instruction::new(Opcode::Sum, 4, &[1, 2, 3], Size::S256).unwrap();
        assert_eq!(i.to_string(), "sum r4, r1, r2, r3 #256");
        assert_eq!(Instruction::ini(7, true, Size::S64).unwrap().to_string(), "ini r7, ones #64");
    }
}
