//! Fixed-width bitvector arithmetic.
//!
//! These are the concrete semantics shared by the interpreter, the term
//! evaluator and synthesized functions. Division by zero and oversized
//! shifts follow the SMT-LIB bitvector conventions so that every operation
//! is total:
//!
//! * `udiv x 0 = all-ones`, `urem x 0 = x`
//! * `sdiv x 0 = -1` when `x >= 0` and `1` otherwise, `srem x 0 = x`
//! * shifting by `>= width` yields zero (or the sign fill for `ashr`)

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Mask with the low `width` bits set. `width` must be in `1..=64`.
#[inline]
pub fn mask(width: u32) -> u64 {
    debug_assert!((1..=64).contains(&width));
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[inline]
pub fn truncate(value: u64, width: u32) -> u64 {
    value & mask(width)
}

/// Interpret the low `width` bits of `value` as a two's complement integer.
#[inline]
pub fn to_signed(value: u64, width: u32) -> i64 {
    let v = truncate(value, width);
    if width >= 64 {
        v as i64
    } else if v >> (width - 1) & 1 == 1 {
        (v | !mask(width)) as i64
    } else {
        v as i64
    }
}

#[inline]
pub fn sign_extend(value: u64, from: u32, to: u32) -> u64 {
    truncate(to_signed(value, from) as u64, to)
}

#[inline]
fn msb(value: u64, width: u32) -> bool {
    (value >> (width - 1)) & 1 == 1
}

/// Comparison operators carried by `cmp` instructions and solver atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relop {
    Eq,
    Ne,
    Ult,
    Ule,
    Ugt,
    Uge,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl Relop {
    pub const ALL: [Relop; 10] = [
        Relop::Eq,
        Relop::Ne,
        Relop::Ult,
        Relop::Ule,
        Relop::Ugt,
        Relop::Uge,
        Relop::Slt,
        Relop::Sle,
        Relop::Sgt,
        Relop::Sge,
    ];

    pub fn eval(self, lhs: u64, rhs: u64, width: u32) -> bool {
        let (a, b) = (truncate(lhs, width), truncate(rhs, width));
        let (sa, sb) = (to_signed(a, width), to_signed(b, width));
        match self {
            Relop::Eq => a == b,
            Relop::Ne => a != b,
            Relop::Ult => a < b,
            Relop::Ule => a <= b,
            Relop::Ugt => a > b,
            Relop::Uge => a >= b,
            Relop::Slt => sa < sb,
            Relop::Sle => sa <= sb,
            Relop::Sgt => sa > sb,
            Relop::Sge => sa >= sb,
        }
    }

    /// The relop whose result is always the opposite of `self`.
    pub fn negate(self) -> Relop {
        match self {
            Relop::Eq => Relop::Ne,
            Relop::Ne => Relop::Eq,
            Relop::Ult => Relop::Uge,
            Relop::Ule => Relop::Ugt,
            Relop::Ugt => Relop::Ule,
            Relop::Uge => Relop::Ult,
            Relop::Slt => Relop::Sge,
            Relop::Sle => Relop::Sgt,
            Relop::Sgt => Relop::Sle,
            Relop::Sge => Relop::Slt,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Relop::Eq => "eq",
            Relop::Ne => "ne",
            Relop::Ult => "ult",
            Relop::Ule => "ule",
            Relop::Ugt => "ugt",
            Relop::Uge => "uge",
            Relop::Slt => "slt",
            Relop::Sle => "sle",
            Relop::Sgt => "sgt",
            Relop::Sge => "sge",
        }
    }

    /// Stable one-byte encoding used by the binary logs.
    pub fn code(self) -> u8 {
        Relop::ALL.iter().position(|r| *r == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Relop> {
        Relop::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Relop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Relop {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relop::ALL
            .iter()
            .copied()
            .find(|r| r.mnemonic() == s)
            .ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
    Add,
    Sub,
    Mul,
    Udiv,
    Sdiv,
    Urem,
    Srem,
}

impl BinOp {
    pub const ALL: [BinOp; 13] = [
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Lshr,
        BinOp::Ashr,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Udiv,
        BinOp::Sdiv,
        BinOp::Urem,
        BinOp::Srem,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Lshr => "lshr",
            BinOp::Ashr => "ashr",
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Udiv => "udiv",
            BinOp::Sdiv => "sdiv",
            BinOp::Urem => "urem",
            BinOp::Srem => "srem",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<BinOp> {
        BinOp::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    pub fn eval(self, a: u64, b: u64, width: u32) -> u64 {
        let a = truncate(a, width);
        let b = truncate(b, width);
        let r = match self {
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => {
                if b >= width as u64 {
                    0
                } else {
                    a << b
                }
            }
            BinOp::Lshr => {
                if b >= width as u64 {
                    0
                } else {
                    a >> b
                }
            }
            BinOp::Ashr => {
                let sa = to_signed(a, width);
                if b >= width as u64 {
                    if sa < 0 {
                        u64::MAX
                    } else {
                        0
                    }
                } else {
                    (sa >> b) as u64
                }
            }
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Udiv => udiv(a, b, width),
            BinOp::Urem => urem(a, b),
            BinOp::Sdiv => {
                let (na, nb) = (msb(a, width), msb(b, width));
                let ua = if na { neg(a, width) } else { a };
                let ub = if nb { neg(b, width) } else { b };
                let q = udiv(ua, ub, width);
                if na ^ nb {
                    neg(q, width)
                } else {
                    q
                }
            }
            BinOp::Srem => {
                let (na, nb) = (msb(a, width), msb(b, width));
                let ua = if na { neg(a, width) } else { a };
                let ub = if nb { neg(b, width) } else { b };
                let r = urem(ua, ub);
                if na {
                    neg(r, width)
                } else {
                    r
                }
            }
        };
        truncate(r, width)
    }

    /// Associative-commutative ops where two unknown constants combine into one.
    pub fn is_foldable(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor
        )
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[inline]
fn udiv(a: u64, b: u64, width: u32) -> u64 {
    a.checked_div(b).unwrap_or(mask(width))
}

#[inline]
fn urem(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        a % b
    }
}

#[inline]
fn neg(a: u64, width: u32) -> u64 {
    truncate(a.wrapping_neg(), width)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnOp {
    Not,
    Neg,
}

impl UnOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            UnOp::Not => "not",
            UnOp::Neg => "neg",
        }
    }

    pub fn eval(self, a: u64, width: u32) -> u64 {
        match self {
            UnOp::Not => truncate(!a, width),
            UnOp::Neg => neg(a, width),
        }
    }
}

/// Width conversions. Target width is always given explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CastOp {
    Trunc,
    Zext,
    Sext,
}

impl CastOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CastOp::Trunc => "trunc",
            CastOp::Zext => "zext",
            CastOp::Sext => "sext",
        }
    }

    pub fn eval(self, a: u64, from: u32, to: u32) -> u64 {
        match self {
            CastOp::Trunc => truncate(a, to),
            CastOp::Zext => truncate(a, from),
            CastOp::Sext => sign_extend(a, from, to),
        }
    }
}
