//! The bundled register bytecode: program model, assembly parser, printer
//! and validator.
//!
//! Registers are typed by the width of the instructions that define them;
//! every function declares its parameters as `r0..rN` and its optional
//! return width. Memory and input reads are little-endian.

mod parse;
mod print;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinOp, CastOp, Relop, UnOp};

pub use parse::{parse_program, parse_unvalidated};
pub use validate::validate;

pub const DEFAULT_MEMORY_SIZE: usize = 65536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Width {
    W8,
    W16,
    W32,
    W64,
}

impl Width {
    pub const ALL: [Width; 4] = [Width::W8, Width::W16, Width::W32, Width::W64];

    pub fn bits(self) -> u32 {
        match self {
            Width::W8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
            Width::W64 => 64,
        }
    }

    pub fn bytes(self) -> u32 {
        self.bits() / 8
    }

    pub fn from_bits(bits: u64) -> Option<Width> {
        match bits {
            8 => Some(Width::W8),
            16 => Some(Width::W16),
            32 => Some(Width::W32),
            64 => Some(Width::W64),
            _ => None,
        }
    }

    pub fn from_bytes(bytes: u64) -> Option<Width> {
        bytes.checked_mul(8).and_then(Width::from_bits)
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg(pub u16);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => r.fmt(f),
            Operand::Imm(v) => fmt_imm(*v, f),
        }
    }
}

fn fmt_imm(v: u64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v < 4096 {
        write!(f, "{v}")
    } else {
        write!(f, "{v:#x}")
    }
}

/// Source position of an instruction. Columns point at the opcode token.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
    pub column: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32, column: u32) -> Self {
        Location {
            file: file.into(),
            line,
            column,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inst {
    Const {
        dst: Reg,
        value: u64,
        width: Width,
    },
    /// Read `size` input bytes at `offset`; bytes past the end read as zero.
    In {
        dst: Reg,
        offset: Operand,
        size: Width,
    },
    Mov {
        dst: Reg,
        src: Reg,
        width: Width,
    },
    Load {
        dst: Reg,
        addr: Operand,
        size: Width,
    },
    Store {
        addr: Operand,
        src: Operand,
        size: Width,
    },
    Unary {
        op: UnOp,
        dst: Reg,
        src: Operand,
        width: Width,
    },
    Binary {
        op: BinOp,
        dst: Reg,
        lhs: Operand,
        rhs: Operand,
        width: Width,
    },
    Cast {
        op: CastOp,
        dst: Reg,
        src: Reg,
        from: Width,
        to: Width,
    },
    /// Writes 0 or 1 into an 8-bit destination.
    Cmp {
        relop: Relop,
        dst: Reg,
        lhs: Operand,
        rhs: Operand,
        width: Width,
    },
    Br {
        cond: Reg,
        then_label: String,
        else_label: String,
    },
    Jmp {
        target: String,
    },
    Switch {
        value: Reg,
        cases: Vec<(u64, String)>,
        default: String,
    },
    Call {
        dst: Option<Reg>,
        func: String,
        args: Vec<Operand>,
    },
    Ret {
        value: Option<Operand>,
    },
    Crash {
        bug: u32,
    },
    Halt,
}

impl Inst {
    pub fn opcode(&self) -> &'static str {
        match self {
            Inst::Const { .. } => "const",
            Inst::In { .. } => "in",
            Inst::Mov { .. } => "mov",
            Inst::Load { .. } => "load",
            Inst::Store { .. } => "store",
            Inst::Unary { op, .. } => op.mnemonic(),
            Inst::Binary { op, .. } => op.mnemonic(),
            Inst::Cast { op, .. } => op.mnemonic(),
            Inst::Cmp { .. } => "cmp",
            Inst::Br { .. } => "br",
            Inst::Jmp { .. } => "jmp",
            Inst::Switch { .. } => "switch",
            Inst::Call { .. } => "call",
            Inst::Ret { .. } => "ret",
            Inst::Crash { .. } => "crash",
            Inst::Halt => "halt",
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Inst::Br { .. }
                | Inst::Jmp { .. }
                | Inst::Switch { .. }
                | Inst::Ret { .. }
                | Inst::Crash { .. }
                | Inst::Halt
        )
    }

    pub fn dst(&self) -> Option<Reg> {
        match self {
            Inst::Const { dst, .. }
            | Inst::In { dst, .. }
            | Inst::Mov { dst, .. }
            | Inst::Load { dst, .. }
            | Inst::Unary { dst, .. }
            | Inst::Binary { dst, .. }
            | Inst::Cast { dst, .. }
            | Inst::Cmp { dst, .. } => Some(*dst),
            Inst::Call { dst, .. } => *dst,
            _ => None,
        }
    }

    /// Jump labels referenced by this instruction.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Inst::Br {
                then_label,
                else_label,
                ..
            } => vec![then_label, else_label],
            Inst::Jmp { target } => vec![target],
            Inst::Switch { cases, default, .. } => {
                let mut v: Vec<&str> = cases.iter().map(|(_, l)| l.as_str()).collect();
                v.push(default);
                v
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub inst: Inst,
    pub loc: Location,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Width>,
    pub ret: Option<Width>,
    pub body: Vec<Instruction>,
    /// Label name to the index of the instruction it marks.
    pub labels: BTreeMap<String, usize>,
    pub loc: Location,
}

impl FunctionDef {
    /// One past the highest register index mentioned anywhere in the function.
    pub fn num_regs(&self) -> usize {
        let mut max = self.params.len();
        let mut see = |r: Reg| max = max.max(r.0 as usize + 1);
        let op = |o: &Operand, see: &mut dyn FnMut(Reg)| {
            if let Operand::Reg(r) = o {
                see(*r)
            }
        };
        for ins in &self.body {
            if let Some(d) = ins.inst.dst() {
                see(d);
            }
            match &ins.inst {
                Inst::In { offset, .. } => op(offset, &mut see),
                Inst::Mov { src, .. } | Inst::Cast { src, .. } => see(*src),
                Inst::Load { addr, .. } => op(addr, &mut see),
                Inst::Store { addr, src, .. } => {
                    op(addr, &mut see);
                    op(src, &mut see);
                }
                Inst::Unary { src, .. } => op(src, &mut see),
                Inst::Binary { lhs, rhs, .. } | Inst::Cmp { lhs, rhs, .. } => {
                    op(lhs, &mut see);
                    op(rhs, &mut see);
                }
                Inst::Br { cond, .. } => see(*cond),
                Inst::Switch { value, .. } => see(*value),
                Inst::Call { args, .. } => args.iter().for_each(|a| op(a, &mut see)),
                Inst::Ret { value: Some(v) } => op(v, &mut see),
                _ => {}
            }
        }
        max
    }

    /// Labels attached to the instruction at `index`, in name order.
    pub fn labels_at(&self, index: usize) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, i)| **i == index)
            .map(|(l, _)| l.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub entry: String,
    pub memory_size: usize,
    pub functions: Vec<FunctionDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(|f| f.body.len()).sum()
    }

    /// Copy of the program with every location cleared, for structural
    /// comparison.
    pub fn without_locations(&self) -> Program {
        let mut p = self.clone();
        for f in &mut p.functions {
            f.loc = Location::default();
            for i in &mut f.body {
                i.loc = Location::default();
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub loc: Location,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.loc, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IrError {
    #[error("{loc}: syntax error: {message}")]
    Syntax { loc: Location, message: String },
    #[error("invalid program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

impl IrError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            IrError::Syntax { loc, message } => vec![Diagnostic {
                loc: loc.clone(),
                message: message.clone(),
            }],
            IrError::Invalid(d) => d.clone(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests;
