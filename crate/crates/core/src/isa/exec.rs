use super::{EventClass, Helpers, Instruction, IsaError, Opcode, Program, Result, TraceEvent};
use crate::subarray::{Row, SubArray};

/// Issues instructions against one sub-array and numbers their cycles.
#[derive(Debug, Clone)]
pub struct Executor {
    pub sub_array: u32,
    pub helpers: Helpers,
    pub layer: Option<u32>,
    cycle: u64,
}

impl Executor {
    pub fn new(sub_array: u32, helpers: Helpers) -> Self {
        Executor { sub_array, helpers, layer: None, cycle: 0 }
    }

    pub fn for_program(program: &Program) -> Self {
        Executor::new(program.sub_array, program.helpers)
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Records an event issued outside the instruction stream on this
    /// sub-array, such as a controller row read.
    pub fn emit(&mut self, op: &str, size: u32, class: EventClass) -> TraceEvent {
        let e = TraceEvent::new(self.cycle, Some(self.sub_array), op, size, class).with_layer(self.layer);
        self.cycle += 1;
        e
    }

    fn check_helper(&self, sa: &SubArray, row: usize, ones: bool, mask: Row) -> Result<()> {
        let h = sa.read_row(row)?;
        let want = if ones { Row::ONES } else { Row::ZERO };
        if (h & mask) != (want & mask) {
            return Err(IsaError::UninitializedHelper { row, ones });
        }
        Ok(())
    }

    fn store(sa: &mut SubArray, dest: usize, value: Row, mask: Row) -> Result<()> {
        let old = sa.read_row(dest)?;
        sa.write_row(dest, value.select(&mask, &old))?;
        Ok(())
    }

    /// Executes one instruction. `search` yields two events, everything
    /// else one.
    pub fn execute(&mut self, sa: &mut SubArray, instr: &Instruction) -> Result<Vec<TraceEvent>> {
        let mask = Row::prefix(instr.size.columns());
        let size = instr.size.columns() as u32;
        let name = instr.opcode.mnemonic();
        let [z0, z1] = self.helpers.zero;
        let [a, b, c] = instr.src;
        match instr.opcode {
            Opcode::Ini => {
                Self::store(sa, instr.dest, if instr.fill { Row::ONES } else { Row::ZERO }, mask)?;
                return Ok(vec![self.emit(name, size, EventClass::RowWrite)]);
            }
            Opcode::Copy => {
                self.check_helper(sa, z0, false, mask)?;
                self.check_helper(sa, z1, false, mask)?;
                let s = sa.compute3(a, z0, z1)?;
                Self::store(sa, instr.dest, s.or3, mask)?;
            }
            Opcode::Cmp => {
                self.check_helper(sa, z0, false, mask)?;
                let s = sa.compute3(a, b, z0)?;
                Self::store(sa, instr.dest, s.xor3, mask)?;
            }
            Opcode::Search => {
                self.check_helper(sa, z0, false, mask)?;
                self.check_helper(sa, z1, false, mask)?;
                let diff = sa.compute3(a, b, z0)?;
                Self::store(sa, instr.dest, diff.xor3, mask)?;
                let first = self.emit(name, size, EventClass::InArray);
                let eq = sa.compute3(instr.dest, z0, z1)?;
                Self::store(sa, instr.dest, eq.nor3, mask)?;
                return Ok(vec![first, self.emit(name, size, EventClass::InArray)]);
            }
            Opcode::Nand3 | Opcode::Nor3 | Opcode::Carry | Opcode::Sum => {
                let s = sa.compute3(a, b, c)?;
                let out = match instr.opcode {
                    Opcode::Nand3 => s.nand3,
                    Opcode::Nor3 => s.nor3,
                    Opcode::Carry => s.maj3,
                    _ => s.xor3,
                };
                Self::store(sa, instr.dest, out, mask)?;
            }
        }
        Ok(vec![self.emit(name, size, EventClass::InArray)])
    }
}

/// Runs a program in order and returns its trace.
pub fn run(program: &Program, sa: &mut SubArray) -> Result<Vec<TraceEvent>> {
    let mut ex = Executor::for_program(program);
    let mut trace = Vec::with_capacity(program.instructions.len());
    for instr in &program.instructions {
        trace.extend(ex.execute(sa, instr)?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Size;

    fn ready() -> SubArray {
        let mut sa = SubArray::default();
        sa.write_row(130, Row::ONES).unwrap();
        sa
    }

    fn pattern(bits: &str) -> Row {
        Row::from_bits(&bits.bytes().map(|b| b == b'1').collect::<Vec<_>>())
    }

    #[test]
    fn cmp_is_xor() {
        let mut sa = ready();
        sa.write_row(1, pattern("10110010")).unwrap();
        sa.write_row(2, pattern("01010101")).unwrap();
        let prog = Program::new(0, vec![Instruction::new(Opcode::Cmp, 3, &[1, 2], Size::S64).unwrap()]);
        let trace = run(&prog, &mut sa).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(sa.read_row(3).unwrap(), pattern("11100111"));
    }

    #[test]
    fn search_equal_rows_is_all_ones_on_active_columns() {
        let mut sa = ready();
        let r = Row::from_words([7, 0, 99, 1 << 40]);
        sa.write_row(1, r).unwrap();
        sa.write_row(2, r).unwrap();
        let prog = Program::new(0, vec![Instruction::new(Opcode::Search, 3, &[1, 2], Size::S128).unwrap()]);
        let trace = run(&prog, &mut sa).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[1].cycle, 1);
        assert_eq!(sa.read_row(3).unwrap(), Row::prefix(128));
    }

    #[test]
    fn dirty_helper_is_reported() {
        let mut sa = ready();
        sa.write_row(128, Row::from_words([0, 0, 0, 1])).unwrap();
        let cmp = Instruction::new(Opcode::Cmp, 3, &[1, 2], Size::S256).unwrap();
        let mut ex = Executor::new(0, Helpers::default());
        assert_eq!(ex.execute(&mut sa, &cmp), Err(IsaError::UninitializedHelper { row: 128, ones: false }));
        // the dirty column lies outside a 64-column instruction
        let narrow = Instruction { size: Size::S64, ..cmp };
        assert!(ex.execute(&mut sa, &narrow).is_ok());
    }

    #[test]
    fn carry_truth_table() {
        let mut sa = ready();
        sa.write_row(1, pattern("00001111")).unwrap();
        sa.write_row(2, pattern("00110011")).unwrap();
        sa.write_row(3, pattern("01010101")).unwrap();
        let prog = Program::new(0, vec![
            Instruction::new(Opcode::Carry, 4, &[1, 2, 3], Size::S64).unwrap(),
            Instruction::new(Opcode::Sum, 5, &[1, 2, 3], Size::S64).unwrap(),
        ]);
        run(&prog, &mut sa).unwrap();
        assert_eq!(sa.read_row(4).unwrap(), pattern("00010111"));
        assert_eq!(sa.read_row(5).unwrap(), pattern("01101001"));
    }

    #[test]
    fn empty_program_has_empty_trace() {
        assert!(run(&Program::default(), &mut ready()).unwrap().is_empty());
    }
}
