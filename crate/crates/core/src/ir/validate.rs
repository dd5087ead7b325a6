use std::collections::{BTreeMap, HashMap, HashSet};

use crate::bits::{mask, to_signed, CastOp};

use super::{Diagnostic, FunctionDef, Inst, Location, Operand, Program, Reg, Width};

fn fits(value: u64, width: Width) -> bool {
    let bits = width.bits();
    value & mask(bits) == value || to_signed(value, bits) as u64 == value
}

struct Checker<'p> {
    program: &'p Program,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn push(&mut self, loc: &Location, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            loc: loc.clone(),
            message: message.into(),
        });
    }

    fn function(&mut self, f: &FunctionDef) {
        if f.body.is_empty() {
            self.push(&f.loc, format!("function `{}` has no instructions", f.name));
            return;
        }
        if !f.body.last().unwrap().inst.is_terminator() {
            self.push(
                &f.body.last().unwrap().loc,
                format!("function `{}` must end with a terminator", f.name),
            );
        }
        for (label, idx) in &f.labels {
            if *idx >= f.body.len() {
                self.push(&f.loc, format!("label `{label}` does not mark an instruction"));
            }
        }

        // Register widths come from parameters and defining instructions.
        let mut widths: BTreeMap<Reg, (Width, Location)> = BTreeMap::new();
        for (i, w) in f.params.iter().enumerate() {
            widths.insert(Reg(i as u16), (*w, f.loc.clone()));
        }
        for ins in &f.body {
            let Some(dst) = ins.inst.dst() else { continue };
            let w = match &ins.inst {
                Inst::Const { width, .. }
                | Inst::Mov { width, .. }
                | Inst::Unary { width, .. }
                | Inst::Binary { width, .. } => Some(*width),
                Inst::In { size, .. } | Inst::Load { size, .. } => Some(*size),
                Inst::Cast { to, .. } => Some(*to),
                Inst::Cmp { .. } => Some(Width::W8),
                Inst::Call { func, .. } => self.program.function(func).and_then(|c| c.ret),
                _ => None,
            };
            let Some(w) = w else { continue };
            match widths.get(&dst) {
                Some((prev, _)) if *prev != w => self.push(
                    &ins.loc,
                    format!("width mismatch: {dst} defined as {w}-bit but previously {prev}-bit"),
                ),
                Some(_) => {}
                None => {
                    widths.insert(dst, (w, ins.loc.clone()));
                }
            }
        }

        let reg_use = |this: &mut Self, loc: &Location, r: Reg, want: Option<Width>, what: &str| {
            match widths.get(&r) {
                None => this.push(loc, format!("register {r} is used but never defined")),
                Some((w, _)) => {
                    if let Some(want) = want {
                        if *w != want {
                            this.push(
                                loc,
                                format!("width mismatch: {what} expects {want}-bit operand, {r} is {w}-bit"),
                            );
                        }
                    }
                }
            }
        };
        let operand = |this: &mut Self, loc: &Location, o: &Operand, want: Option<Width>, what: &str| match o {
            Operand::Reg(r) => reg_use(this, loc, *r, want, what),
            Operand::Imm(v) => {
                if let Some(w) = want {
                    if !fits(*v, w) {
                        this.push(loc, format!("immediate {v:#x} does not fit in {w} bits"));
                    }
                }
            }
        };

        for ins in &f.body {
            let loc = &ins.loc;
            let op = ins.inst.opcode();
            match &ins.inst {
                Inst::Const { value, width, .. } => {
                    if !fits(*value, *width) {
                        self.push(loc, format!("immediate {value:#x} does not fit in {width} bits"));
                    }
                }
                Inst::In { offset, .. } => operand(self, loc, offset, None, op),
                Inst::Mov { src, width, .. } => operand(self, loc, &Operand::Reg(*src), Some(*width), op),
                Inst::Load { addr, .. } => operand(self, loc, addr, None, op),
                Inst::Store { addr, src, size } => {
                    operand(self, loc, addr, None, op);
                    operand(self, loc, src, Some(*size), op);
                }
                Inst::Unary { src, width, .. } => operand(self, loc, src, Some(*width), op),
                Inst::Binary { lhs, rhs, width, .. } | Inst::Cmp { lhs, rhs, width, .. } => {
                    operand(self, loc, lhs, Some(*width), op);
                    operand(self, loc, rhs, Some(*width), op);
                }
                Inst::Cast { op: cast, src, from, to, .. } => {
                    operand(self, loc, &Operand::Reg(*src), Some(*from), op);
                    let ok = match cast {
                        CastOp::Trunc => to.bits() < from.bits(),
                        CastOp::Zext | CastOp::Sext => to.bits() > from.bits(),
                    };
                    if !ok {
                        self.push(loc, format!("width mismatch: invalid {op} from {from} to {to} bits"));
                    }
                }
                Inst::Br { cond, .. } => operand(self, loc, &Operand::Reg(*cond), None, op),
                Inst::Jmp { .. } => {}
                Inst::Switch { value, cases, .. } => {
                    operand(self, loc, &Operand::Reg(*value), None, op);
                    let vw = widths.get(value).map(|(w, _)| *w);
                    let mut seen = HashSet::new();
                    for (v, _) in cases {
                        if let Some(w) = vw {
                            if *v & mask(w.bits()) != *v {
                                self.push(loc, format!("switch case {v:#x} does not fit in {w} bits"));
                            }
                        }
                        if !seen.insert(*v) {
                            self.push(loc, format!("duplicate switch case {v:#x}"));
                        }
                    }
                }
                Inst::Call { dst, func, args } => match self.program.function(func) {
                    None => self.push(loc, format!("call to undefined function `{func}`")),
                    Some(callee) => {
                        if callee.params.len() != args.len() {
                            self.push(
                                loc,
                                format!(
                                    "call to `{func}` passes {} arguments, expected {}",
                                    args.len(),
                                    callee.params.len()
                                ),
                            );
                        }
                        for (a, w) in args.iter().zip(&callee.params) {
                            operand(self, loc, a, Some(*w), op);
                        }
                        if dst.is_some() && callee.ret.is_none() {
                            self.push(loc, format!("function `{func}` does not return a value"));
                        }
                    }
                },
                Inst::Ret { value } => match (value, f.ret) {
                    (Some(v), Some(w)) => operand(self, loc, v, Some(w), op),
                    (None, Some(w)) => self.push(loc, format!("`{}` must return a {w}-bit value", f.name)),
                    (Some(_), None) => self.push(loc, format!("`{}` does not return a value", f.name)),
                    (None, None) => {}
                },
                Inst::Crash { .. } | Inst::Halt => {}
            }
            for target in ins.inst.targets() {
                if !f.labels.contains_key(target) {
                    self.push(loc, format!("undefined label `@{target}`"));
                }
            }
        }
    }
}

/// Check every program invariant. Diagnostics are sorted by location.
pub fn validate(program: &Program) -> Result<(), Vec<Diagnostic>> {
    let mut c = Checker {
        program,
        diags: Vec::new(),
    };
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for f in &program.functions {
        *seen.entry(f.name.as_str()).or_default() += 1;
    }
    for f in &program.functions {
        if seen[f.name.as_str()] > 1 {
            c.push(&f.loc, format!("duplicate function `{}`", f.name));
        }
        if f.params.len() > u16::MAX as usize {
            c.push(&f.loc, "too many parameters");
        }
    }
    match program.function(&program.entry) {
        None => c.push(
            &Location::new("", 0, 0),
            format!("entry function `{}` is not defined", program.entry),
        ),
        Some(f) if !f.params.is_empty() => {
            c.push(&f.loc, format!("entry function `{}` must not take parameters", f.name))
        }
        Some(_) => {}
    }
    if program.memory_size == 0 {
        c.push(&Location::new("", 0, 0), "memory size must be positive");
    }
    for f in &program.functions {
        c.function(f);
    }
    let mut diags = c.diags;
    if diags.is_empty() {
        Ok(())
    } else {
        diags.sort();
        diags.dedup();
        Err(diags)
    }
}
