use std::collections::BTreeMap;

use crate::bits::{BinOp, CastOp, Relop, UnOp};

use super::{
    validate, Diagnostic, FunctionDef, Inst, Instruction, IrError, Location, Operand, Program,
    Reg, Width, DEFAULT_MEMORY_SIZE,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Label(String),
    Num(u64),
    Punct(char),
    Arrow,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    col: u32,
}

fn tokenize(line: &str, loc: &Location) -> Result<Vec<Spanned>, IrError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        if c == ';' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Spanned {
                tok: Tok::Arrow,
                col,
            });
            i += 2;
            continue;
        }
        if "=[](),:{}".contains(c) {
            out.push(Spanned {
                tok: Tok::Punct(c),
                col,
            });
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() && !"=[](),:{};".contains(chars[i]) {
            if chars[i] == '-' && i > start && chars.get(i + 1) == Some(&'>') {
                break;
            }
            i += 1;
        }
        let word: String = chars[start..i].iter().collect();
        let tok = if let Some(rest) = word.strip_prefix('@') {
            if rest.is_empty() {
                return Err(syntax(loc, col, "empty label reference"));
            }
            Tok::Label(rest.to_string())
        } else if word.starts_with(|ch: char| ch.is_ascii_digit() || ch == '-') {
            Tok::Num(parse_number(&word).ok_or_else(|| syntax(loc, col, format!("bad number `{word}`")))?)
        } else {
            Tok::Word(word)
        };
        out.push(Spanned { tok, col });
    }
    Ok(out)
}

fn parse_number(s: &str) -> Option<u64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let mag = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else {
        body.replace('_', "").parse::<u64>().ok()?
    };
    if neg {
        if mag > 1u64 << 63 {
            return None;
        }
        Some(mag.wrapping_neg())
    } else {
        Some(mag)
    }
}

fn syntax(loc: &Location, col: u32, message: impl Into<String>) -> IrError {
    IrError::Syntax {
        loc: Location::new(loc.file.clone(), loc.line, col),
        message: message.into(),
    }
}

struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    loc: &'a Location,
}

impl<'a> Cursor<'a> {
    fn col(&self) -> u32 {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |t| t.col)
    }

    fn err(&self, msg: impl Into<String>) -> IrError {
        syntax(self.loc, self.col(), msg)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|s| &s.tok);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn end(&self) -> Result<(), IrError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), IrError> {
        match self.next() {
            Some(Tok::Punct(p)) if *p == c => Ok(()),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected `{c}`")))
            }
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> Result<&'a str, IrError> {
        match self.next() {
            Some(Tok::Word(w)) => Ok(w),
            _ => {
                self.pos -= 1;
                Err(self.err("expected identifier"))
            }
        }
    }

    fn num(&mut self) -> Result<u64, IrError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(*n),
            _ => {
                self.pos -= 1;
                Err(self.err("expected number"))
            }
        }
    }

    fn reg(&mut self) -> Result<Reg, IrError> {
        let col = self.col();
        let w = self.word()?;
        parse_reg(w).ok_or_else(|| syntax(self.loc, col, format!("expected register, found `{w}`")))
    }

    fn operand(&mut self) -> Result<Operand, IrError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Operand::Imm(*n))
            }
            _ => self.reg().map(Operand::Reg),
        }
    }

    fn label(&mut self) -> Result<String, IrError> {
        match self.next() {
            Some(Tok::Label(l)) => Ok(l.clone()),
            _ => {
                self.pos -= 1;
                Err(self.err("expected `@label`"))
            }
        }
    }

    fn width_bits(&mut self) -> Result<Width, IrError> {
        let col = self.col();
        let n = self.num()?;
        Width::from_bits(n).ok_or_else(|| syntax(self.loc, col, format!("invalid width {n}")))
    }

    fn size_bytes(&mut self) -> Result<Width, IrError> {
        let col = self.col();
        let n = self.num()?;
        Width::from_bytes(n).ok_or_else(|| syntax(self.loc, col, format!("invalid size {n}")))
    }
}

fn parse_reg(w: &str) -> Option<Reg> {
    let digits = w.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<u16>().ok().map(Reg)
}

struct FnBuilder {
    def: FunctionDef,
    pending_labels: Vec<(String, Location)>,
}

/// Parse assembly text without running the validator. Diagnostics that the
/// parser can detect without aborting (unknown relops, duplicate labels or
/// functions) are returned alongside the program.
pub fn parse_unvalidated(text: &str, file: &str) -> Result<(Program, Vec<Diagnostic>), IrError> {
    let mut name: Option<String> = None;
    let mut entry = "main".to_string();
    let mut memory_size = DEFAULT_MEMORY_SIZE;
    let mut functions: Vec<FunctionDef> = Vec::new();
    let mut diags = Vec::new();
    let mut current: Option<FnBuilder> = None;

    for (idx, line) in text.lines().enumerate() {
        let loc = Location::new(file, idx as u32 + 1, 1);
        let toks = tokenize(line, &loc)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            loc: &loc,
        };

        let Some(builder) = current.as_mut() else {
            let kw = cur.word()?;
            match kw {
                "program" => {
                    name = Some(cur.word()?.to_string());
                    cur.end()?;
                }
                "memory" => {
                    let n = cur.num()?;
                    if n == 0 || n > (1 << 30) {
                        return Err(cur.err("memory size out of range"));
                    }
                    memory_size = n as usize;
                    cur.end()?;
                }
                "entry" => {
                    entry = cur.word()?.to_string();
                    cur.end()?;
                }
                "fn" => {
                    let fname = cur.word()?.to_string();
                    let mut params = Vec::new();
                    if cur.eat_punct('(')
                        && !cur.eat_punct(')') {
                            loop {
                                let col = cur.col();
                                let r = cur.reg()?;
                                if r.0 as usize != params.len() {
                                    return Err(syntax(
                                        &loc,
                                        col,
                                        format!("parameter {} must be r{}", params.len(), params.len()),
                                    ));
                                }
                                cur.punct(':')?;
                                params.push(cur.width_bits()?);
                                if cur.eat_punct(')') {
                                    break;
                                }
                                cur.punct(',')?;
                            }
                        }
                    let ret = if cur.peek() == Some(&Tok::Arrow) {
                        cur.pos += 1;
                        Some(cur.width_bits()?)
                    } else {
                        None
                    };
                    cur.punct('{')?;
                    cur.end()?;
                    if functions.iter().any(|f| f.name == fname) {
                        diags.push(Diagnostic {
                            loc: Location::new(file, loc.line, toks[0].col),
                            message: format!("duplicate function `{fname}`"),
                        });
                    }
                    current = Some(FnBuilder {
                        def: FunctionDef {
                            name: fname,
                            params,
                            ret,
                            body: Vec::new(),
                            labels: BTreeMap::new(),
                            loc: Location::new(file, loc.line, toks[0].col),
                        },
                        pending_labels: Vec::new(),
                    });
                }
                other => return Err(syntax(&loc, toks[0].col, format!("unexpected `{other}` at top level"))),
            }
            continue;
        };

        if toks.len() == 1 && toks[0].tok == Tok::Punct('}') {
            let mut b = current.take().unwrap();
            for (l, lloc) in b.pending_labels.drain(..) {
                diags.push(Diagnostic {
                    loc: lloc,
                    message: format!("label `{l}` does not mark an instruction"),
                });
            }
            functions.push(b.def);
            continue;
        }

        if toks.len() == 2 && toks[1].tok == Tok::Punct(':') {
            if let Tok::Word(l) = &toks[0].tok {
                let lloc = Location::new(file, loc.line, toks[0].col);
                if builder.def.labels.contains_key(l)
                    || builder.pending_labels.iter().any(|(p, _)| p == l)
                {
                    diags.push(Diagnostic {
                        loc: lloc.clone(),
                        message: format!("duplicate label `{l}`"),
                    });
                }
                builder.pending_labels.push((l.clone(), lloc));
                continue;
            }
        }

        let (inst, col) = parse_instruction(&mut cur, &mut diags)?;
        let index = builder.def.body.len();
        for (l, _) in builder.pending_labels.drain(..) {
            builder.def.labels.entry(l).or_insert(index);
        }
        builder.def.body.push(Instruction {
            inst,
            loc: Location::new(file, loc.line, col),
        });
    }

    if let Some(b) = current {
        return Err(IrError::Syntax {
            loc: b.def.loc,
            message: format!("function `{}` is missing its closing `}}`", b.def.name),
        });
    }

    let name = name.unwrap_or_else(|| {
        std::path::Path::new(file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("program")
            .to_string()
    });
    Ok((
        Program {
            name,
            entry,
            memory_size,
            functions,
        },
        diags,
    ))
}

fn parse_instruction(cur: &mut Cursor<'_>, diags: &mut Vec<Diagnostic>) -> Result<(Inst, u32), IrError> {
    let dst = if cur.toks.len() > 1 && cur.toks[1].tok == Tok::Punct('=') {
        let r = cur.reg()?;
        cur.pos += 1;
        Some(r)
    } else {
        None
    };
    let col = cur.col();
    let opcode = cur.word()?;
    let loc = cur.loc;
    let need_dst = |d: Option<Reg>| d.ok_or_else(|| syntax(loc, col, format!("`{opcode}` needs a destination register")));

    let inst = match opcode {
        "const" => {
            let dst = need_dst(dst)?;
            let value = cur.num()?;
            let width = cur.width_bits()?;
            Inst::Const { dst, value, width }
        }
        "in" => Inst::In {
            dst: need_dst(dst)?,
            offset: cur.operand()?,
            size: cur.size_bytes()?,
        },
        "mov" => Inst::Mov {
            dst: need_dst(dst)?,
            src: cur.reg()?,
            width: cur.width_bits()?,
        },
        "load" => Inst::Load {
            dst: need_dst(dst)?,
            addr: cur.operand()?,
            size: cur.size_bytes()?,
        },
        "not" | "neg" => Inst::Unary {
            op: if opcode == "not" { UnOp::Not } else { UnOp::Neg },
            dst: need_dst(dst)?,
            src: cur.operand()?,
            width: cur.width_bits()?,
        },
        "trunc" | "zext" | "sext" => Inst::Cast {
            op: match opcode {
                "trunc" => CastOp::Trunc,
                "zext" => CastOp::Zext,
                _ => CastOp::Sext,
            },
            dst: need_dst(dst)?,
            src: cur.reg()?,
            from: cur.width_bits()?,
            to: cur.width_bits()?,
        },
        "cmp" => {
            let dst = need_dst(dst)?;
            let rcol = cur.col();
            let rtok = cur.word()?;
            let relop = match rtok.parse::<Relop>() {
                Ok(r) => r,
                Err(()) => {
                    diags.push(Diagnostic {
                        loc: Location::new(cur.loc.file.clone(), cur.loc.line, rcol),
                        message: format!("unknown relop `{rtok}`"),
                    });
                    Relop::Eq
                }
            };
            Inst::Cmp {
                relop,
                dst,
                lhs: cur.operand()?,
                rhs: cur.operand()?,
                width: cur.width_bits()?,
            }
        }
        "call" => {
            let func = cur.word()?.to_string();
            let mut args = Vec::new();
            while !cur.at_end() {
                args.push(cur.operand()?);
            }
            Inst::Call { dst, func, args }
        }
        op if BinOp::from_mnemonic(op).is_some() => Inst::Binary {
            op: BinOp::from_mnemonic(op).unwrap(),
            dst: need_dst(dst)?,
            lhs: cur.operand()?,
            rhs: cur.operand()?,
            width: cur.width_bits()?,
        },
        other => {
            if dst.is_some() && matches!(other, "store" | "br" | "jmp" | "switch" | "ret" | "crash" | "halt") {
                return Err(syntax(cur.loc, col, format!("`{other}` does not produce a value")));
            }
            match other {
                "store" => Inst::Store {
                    addr: cur.operand()?,
                    src: cur.operand()?,
                    size: cur.size_bytes()?,
                },
                "br" => Inst::Br {
                    cond: cur.reg()?,
                    then_label: cur.label()?,
                    else_label: cur.label()?,
                },
                "jmp" => Inst::Jmp { target: cur.label()? },
                "switch" => {
                    let value = cur.reg()?;
                    cur.punct('[')?;
                    let mut cases = Vec::new();
                    if !cur.eat_punct(']') {
                        loop {
                            let v = cur.num()?;
                            match cur.next() {
                                Some(Tok::Arrow) => {}
                                _ => {
                                    cur.pos -= 1;
                                    return Err(cur.err("expected `->`"));
                                }
                            }
                            cases.push((v, cur.label()?));
                            if cur.eat_punct(']') {
                                break;
                            }
                            cur.punct(',')?;
                        }
                    }
                    Inst::Switch {
                        value,
                        cases,
                        default: cur.label()?,
                    }
                }
                "ret" => Inst::Ret {
                    value: if cur.at_end() { None } else { Some(cur.operand()?) },
                },
                "crash" => {
                    let col = cur.col();
                    let bug = cur.num()?;
                    let bug = u32::try_from(bug).map_err(|_| syntax(cur.loc, col, "bug id must fit in 32 bits"))?;
                    Inst::Crash { bug }
                }
                "halt" => Inst::Halt,
                _ => return Err(syntax(cur.loc, col, format!("unknown opcode `{other}`"))),
            }
        }
    };
    cur.end()?;
    Ok((inst, col))
}

/// Parse and validate assembly text. `file` names the module in every
/// instruction location.
pub fn parse_program(text: &str, file: &str) -> Result<Program, IrError> {
    let (program, mut diags) = parse_unvalidated(text, file)?;
    if let Err(more) = validate(&program) {
        diags.extend(more);
    }
    if diags.is_empty() {
        Ok(program)
    } else {
        diags.sort();
        diags.dedup();
        Err(IrError::Invalid(diags))
    }
}
