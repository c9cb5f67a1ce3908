use std::fmt::Write as _;

use super::{Helpers, Instruction, IsaError, Opcode, Program, Result, Size};
use crate::subarray::ROWS;

/// A token with its 1-based column.
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn operands(line: &str, start: usize) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut offset = start;
    for piece in line[start..].split(',') {
        let lead = piece.len() - piece.trim_start().len();
        out.push(Tok { text: piece.trim(), col: offset + lead + 1 });
        offset += piece.len() + 1;
    }
    out
}

fn address(line: usize, t: &Tok<'_>) -> Result<usize> {
    let bad = || IsaError::BadAddress { line, col: t.col, text: t.text.to_string() };
    let digits = t.text.strip_prefix(['r', 'R']).ok_or_else(bad)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    match digits.parse::<usize>() {
        Ok(n) if n < ROWS => Ok(n),
        _ => Err(bad()),
    }
}

pub fn parse_program(text: &str) -> Result<Program> {
    let mut program = Program::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let code = raw.split(';').next().unwrap_or("");
        let trimmed = code.trim_start();
        if trimmed.trim().is_empty() {
            continue;
        }
        let indent = code.len() - trimmed.len();
        let syntax = |col: usize, msg: &str| IsaError::SyntaxError { line: line_no, col, msg: msg.to_string() };

        let word_end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        let word = &trimmed[..word_end];
        let rest_start = indent + word_end;

        // split off an optional `#n` size suffix
        let (body_end, size) = match code.rfind('#') {
            Some(h) if h >= rest_start => {
                let n = code[h + 1..].trim();
                let n: u32 = n.parse().map_err(|_| syntax(h + 2, "size must be a number"))?;
                let size = Size::try_from(n).map_err(|_| syntax(h + 2, "size must be 64, 128 or 256"))?;
                (h, Some(size))
            }
            Some(h) => return Err(syntax(h + 1, "unexpected `#`")),
            None => (code.len(), None),
        };
        let body = &code[..body_end];
        let ops = if body[rest_start..].trim().is_empty() { Vec::new() } else { operands(body, rest_start) };
        if let Some(t) = ops.iter().find(|t| t.text.is_empty()) {
            return Err(syntax(t.col, "empty operand"));
        }

        if let Some(directive) = word.strip_prefix('.') {
            if size.is_some() {
                return Err(syntax(indent + 1, "directives take no size"));
            }
            match (directive, ops.as_slice()) {
                ("subarray", [t]) => {
                    program.sub_array = t.text.parse().map_err(|_| syntax(t.col, "sub-array id must be a number"))?;
                }
                ("zero", [a, b]) => program.helpers.zero = [address(line_no, a)?, address(line_no, b)?],
                ("ones", [a]) => program.helpers.ones = address(line_no, a)?,
                ("subarray" | "zero" | "ones", _) => return Err(syntax(indent + 1, "wrong operand count")),
                _ => return Err(syntax(indent + 1, &format!("unknown directive `.{directive}`"))),
            }
            continue;
        }

        let opcode = Opcode::from_mnemonic(word).ok_or_else(|| IsaError::UnknownOpcode {
            line: line_no,
            col: indent + 1,
            name: word.to_string(),
        })?;
        let size = size.unwrap_or_default();
        let Some((dest, srcs)) = ops.split_first() else {
            return Err(syntax(rest_start + 1, "missing destination"));
        };
        let dest_row = address(line_no, dest)?;
        let instr = if opcode == Opcode::Ini {
            let [fill] = srcs else {
                return Err(syntax(dest.col, "ini takes a destination and `zeros` or `ones`"));
            };
            let ones = match fill.text {
                "zeros" | "0" => false,
                "ones" | "1" => true,
                _ => return Err(syntax(fill.col, "expected `zeros` or `ones`")),
            };
            Instruction::ini(dest_row, ones, size)?
        } else {
            if srcs.len() != opcode.arity() {
                return Err(syntax(
                    dest.col,
                    &format!("{opcode} takes {} source operand(s), got {}", opcode.arity(), srcs.len()),
                ));
            }
            let rows = srcs.iter().map(|t| address(line_no, t)).collect::<Result<Vec<_>>>()?;
            Instruction::new(opcode, dest_row, &rows, size)?
        };
        program.instructions.push(instr);
    }
    Ok(program)
}

pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    let default = Helpers::default();
    if program.sub_array != 0 {
        writeln!(out, ".subarray {}", program.sub_array).unwrap();
    }
    if program.helpers.zero != default.zero {
        writeln!(out, ".zero r{}, r{}", program.helpers.zero[0], program.helpers.zero[1]).unwrap();
    }
    if program.helpers.ones != default.ones {
        writeln!(out, ".ones r{}", program.helpers.ones).unwrap();
    }
    for i in &program.instructions {
        writeln!(out, "{i}").unwrap();
    }
    out
}
