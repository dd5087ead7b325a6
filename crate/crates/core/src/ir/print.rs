use std::fmt;

use super::{fmt_imm, FunctionDef, Inst, Program, DEFAULT_MEMORY_SIZE};

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {}", self.name)?;
        if self.memory_size != DEFAULT_MEMORY_SIZE {
            writeln!(f, "memory {}", self.memory_size)?;
        }
        if self.entry != "main" {
            writeln!(f, "entry {}", self.entry)?;
        }
        for func in &self.functions {
            writeln!(f)?;
            func.fmt(f)?;
        }
        Ok(())
    }
}

impl fmt::Display for FunctionDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn {}(", self.name)?;
        for (i, w) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "r{i}:{w}")?;
        }
        f.write_str(")")?;
        if let Some(r) = self.ret {
            write!(f, " -> {r}")?;
        }
        writeln!(f, " {{")?;
        for (idx, ins) in self.body.iter().enumerate() {
            for label in self.labels_at(idx) {
                writeln!(f, "{label}:")?;
            }
            writeln!(f, "  {}", ins.inst)?;
        }
        writeln!(f, "}}")
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inst::Const { dst, value, width } => {
                write!(f, "{dst} = const ")?;
                fmt_imm(*value, f)?;
                write!(f, " {width}")
            }
            Inst::In { dst, offset, size } => write!(f, "{dst} = in {offset} {}", size.bytes()),
            Inst::Mov { dst, src, width } => write!(f, "{dst} = mov {src} {width}"),
            Inst::Load { dst, addr, size } => write!(f, "{dst} = load {addr} {}", size.bytes()),
            Inst::Store { addr, src, size } => write!(f, "store {addr} {src} {}", size.bytes()),
            Inst::Unary {
                op,
                dst,
                src,
                width,
            } => write!(f, "{dst} = {} {src} {width}", op.mnemonic()),
            Inst::Binary {
                op,
                dst,
                lhs,
                rhs,
                width,
            } => write!(f, "{dst} = {op} {lhs} {rhs} {width}"),
            Inst::Cast {
                op,
                dst,
                src,
                from,
                to,
            } => write!(f, "{dst} = {} {src} {from} {to}", op.mnemonic()),
            Inst::Cmp {
                relop,
                dst,
                lhs,
                rhs,
                width,
            } => write!(f, "{dst} = cmp {relop} {lhs} {rhs} {width}"),
            Inst::Br {
                cond,
                then_label,
                else_label,
            } => write!(f, "br {cond} @{then_label} @{else_label}"),
            Inst::Jmp { target } => write!(f, "jmp @{target}"),
            Inst::Switch {
                value,
                cases,
                default,
            } => {
                write!(f, "switch {value} [")?;
                for (i, (v, l)) in cases.iter().enumerate() {
                    f.write_str(if i == 0 { " " } else { ", " })?;
                    fmt_imm(*v, f)?;
                    write!(f, " -> @{l}")?;
                }
                write!(f, " ] @{default}")
            }
            Inst::Call { dst, func, args } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                write!(f, "call {func}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Inst::Ret { value: Some(v) } => write!(f, "ret {v}"),
            Inst::Ret { value: None } => f.write_str("ret"),
            Inst::Crash { bug } => write!(f, "crash {bug}"),
            Inst::Halt => f.write_str("halt"),
        }
    }
}
