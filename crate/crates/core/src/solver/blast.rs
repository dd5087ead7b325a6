//! Tseitin bit-blasting of bitvector terms onto the SAT core.
//!
//! Gates are hash-consed and constant-folded. Bit vectors are little-endian
//! literal vectors (index 0 is the least significant bit).

use std::collections::HashMap;

use crate::bits::{BinOp, CastOp, Relop, UnOp};

use super::sat::{Lit, Sat};
use super::term::{BvFormula, BvTerm, Node};

type Bits = Vec<Lit>;

pub struct Blaster {
    pub sat: Sat,
    t: Lit,
    and_cache: HashMap<(Lit, Lit), Lit>,
    xor_cache: HashMap<(Lit, Lit), Lit>,
    terms: HashMap<*const (Node, u32), (BvTerm, Bits)>,
    pub vars: HashMap<String, Bits>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidthConflict {
    pub name: String,
    pub first: u32,
    pub second: u32,
}

impl Default for Blaster {
    fn default() -> Self {
        Self::new()
    }
}

impl Blaster {
    pub fn new() -> Blaster {
        let mut sat = Sat::new();
        let t = Lit::new(sat.new_var(), false);
        sat.add_clause(&[t]);
        Blaster {
            sat,
            t,
            and_cache: HashMap::new(),
            xor_cache: HashMap::new(),
            terms: HashMap::new(),
            vars: HashMap::new(),
        }
    }

    pub fn fresh(&mut self) -> Lit {
        Lit::new(self.sat.new_var(), false)
    }

    fn is_true(&self, l: Lit) -> bool {
        l == self.t
    }

    fn is_false(&self, l: Lit) -> bool {
        l == !self.t
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        let f = !self.t;
        if self.is_false(a) || self.is_false(b) || a == !b {
            return f;
        }
        if self.is_true(a) || a == b {
            return b;
        }
        if self.is_true(b) {
            return a;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(g) = self.and_cache.get(&key) {
            return *g;
        }
        let g = self.fresh();
        self.sat.add_clause(&[!g, a]);
        self.sat.add_clause(&[!g, b]);
        self.sat.add_clause(&[g, !a, !b]);
        self.and_cache.insert(key, g);
        g
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        if self.is_false(a) {
            return b;
        }
        if self.is_false(b) {
            return a;
        }
        if self.is_true(a) {
            return !b;
        }
        if self.is_true(b) {
            return !a;
        }
        if a == b {
            return !self.t;
        }
        if a == !b {
            return self.t;
        }
        // Normalize signs: xor(!a, b) = !xor(a, b).
        let flip = a.is_negated() != b.is_negated();
        let (pa, pb) = (Lit::new(a.var(), false), Lit::new(b.var(), false));
        let key = if pa < pb { (pa, pb) } else { (pb, pa) };
        let g = match self.xor_cache.get(&key) {
            Some(g) => *g,
            None => {
                let g = self.fresh();
                let (x, y) = key;
                self.sat.add_clause(&[!g, x, y]);
                self.sat.add_clause(&[!g, !x, !y]);
                self.sat.add_clause(&[g, !x, y]);
                self.sat.add_clause(&[g, x, !y]);
                self.xor_cache.insert(key, g);
                g
            }
        };
        if flip {
            !g
        } else {
            g
        }
    }

    /// `s ? a : b`
    pub fn mux(&mut self, s: Lit, a: Lit, b: Lit) -> Lit {
        if self.is_true(s) || a == b {
            return a;
        }
        if self.is_false(s) {
            return b;
        }
        let x = self.and(s, a);
        let y = self.and(!s, b);
        self.or(x, y)
    }

    fn and_all(&mut self, lits: &[Lit]) -> Lit {
        let mut acc = self.t;
        for &l in lits {
            acc = self.and(acc, l);
        }
        acc
    }

    fn or_all(&mut self, lits: &[Lit]) -> Lit {
        let mut acc = !self.t;
        for &l in lits {
            acc = self.or(acc, l);
        }
        acc
    }

    fn constant(&self, v: u64, w: u32) -> Bits {
        (0..w).map(|i| if v >> i & 1 == 1 { self.t } else { !self.t }).collect()
    }

    fn add_with_carry(&mut self, a: &[Lit], b: &[Lit], mut carry: Lit) -> (Bits, Lit) {
        let mut out = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let axb = self.xor(a[i], b[i]);
            out.push(self.xor(axb, carry));
            let ab = self.and(a[i], b[i]);
            let cx = self.and(carry, axb);
            carry = self.or(ab, cx);
        }
        (out, carry)
    }

    fn add(&mut self, a: &[Lit], b: &[Lit]) -> Bits {
        let f = !self.t;
        self.add_with_carry(a, b, f).0
    }

    fn sub(&mut self, a: &[Lit], b: &[Lit]) -> Bits {
        let nb: Bits = b.iter().map(|l| !*l).collect();
        let t = self.t;
        self.add_with_carry(a, &nb, t).0
    }

    fn neg(&mut self, a: &[Lit]) -> Bits {
        let zero = self.constant(0, a.len() as u32);
        self.sub(&zero, a)
    }

    fn mul(&mut self, a: &[Lit], b: &[Lit]) -> Bits {
        let w = a.len();
        let mut acc = self.constant(0, w as u32);
        for i in 0..w {
            if self.is_false(b[i]) {
                continue;
            }
            let mut partial = vec![!self.t; w];
            for j in 0..w - i {
                partial[i + j] = self.and(a[j], b[i]);
            }
            acc = self.add(&acc, &partial);
        }
        acc
    }

    /// a < b unsigned.
    fn ult(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        // a < b iff a - b borrows, i.e. no carry out of a + !b + 1.
        let nb: Bits = b.iter().map(|l| !*l).collect();
        let t = self.t;
        let (_, carry) = self.add_with_carry(a, &nb, t);
        !carry
    }

    fn slt(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let n = a.len();
        let mut a2 = a.to_vec();
        let mut b2 = b.to_vec();
        a2[n - 1] = !a[n - 1];
        b2[n - 1] = !b[n - 1];
        self.ult(&a2, &b2)
    }

    fn equal(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let eqs: Vec<Lit> = a.iter().zip(b).map(|(x, y)| !self.xor(*x, *y)).collect();
        self.and_all(&eqs)
    }

    /// Restoring division; division by zero yields quotient all-ones and
    /// remainder equal to the dividend.
    fn udivrem(&mut self, a: &[Lit], b: &[Lit]) -> (Bits, Bits) {
        let w = a.len();
        let f = !self.t;
        let mut rem: Bits = vec![f; w];
        let mut q: Bits = vec![f; w];
        let mut bx = b.to_vec();
        bx.push(f);
        for i in (0..w).rev() {
            // rem' = (rem << 1) | a_i, held in w + 1 bits.
            let mut r: Bits = Vec::with_capacity(w + 1);
            r.push(a[i]);
            r.extend_from_slice(&rem);
            let lt = self.ult(&r, &bx);
            let ge = !lt;
            let diff = self.sub(&r, &bx);
            q[i] = ge;
            rem = (0..w).map(|k| self.mux(ge, diff[k], r[k])).collect();
        }
        (q, rem)
    }

    fn mux_bits(&mut self, s: Lit, a: &[Lit], b: &[Lit]) -> Bits {
        a.iter().zip(b).map(|(x, y)| self.mux(s, *x, *y)).collect()
    }

    fn abs(&mut self, a: &[Lit]) -> Bits {
        let n = self.neg(a);
        let sign = a[a.len() - 1];
        self.mux_bits(sign, &n, a)
    }

    fn shift(&mut self, op: BinOp, a: &[Lit], s: &[Lit]) -> Bits {
        let w = a.len();
        let fill = match op {
            BinOp::Ashr => a[w - 1],
            _ => !self.t,
        };
        let stages = (usize::BITS - (w - 1).leading_zeros()) as usize;
        let mut cur = a.to_vec();
        for (k, &sbit) in s.iter().enumerate().take(stages) {
            let amount = 1usize << k;
            let shifted: Bits = (0..w)
                .map(|i| match op {
                    BinOp::Shl => {
                        if i >= amount {
                            cur[i - amount]
                        } else {
                            fill
                        }
                    }
                    _ => {
                        if i + amount < w {
                            cur[i + amount]
                        } else {
                            fill
                        }
                    }
                })
                .collect();
            cur = self.mux_bits(sbit, &shifted, &cur);
        }
        // Any higher amount bit, or a low-bit amount reaching w, overflows.
        let high: Vec<Lit> = s.iter().skip(stages).copied().collect();
        let mut over = self.or_all(&high);
        if !w.is_power_of_two() {
            let wc = self.constant(w as u64, s.len() as u32);
            let lt = self.ult(s, &wc);
            over = self.or(over, !lt);
        }
        let filled = vec![fill; w];
        self.mux_bits(over, &filled, &cur)
    }

    pub fn term(&mut self, t: &BvTerm) -> Result<Bits, WidthConflict> {
        if let Some((_, bits)) = self.terms.get(&t.ptr()) {
            return Ok(bits.clone());
        }
        let w = t.width();
        let bits = match t.node() {
            Node::Var(name) => match self.vars.get(name) {
                Some(b) if b.len() as u32 == w => b.clone(),
                Some(b) => {
                    return Err(WidthConflict {
                        name: name.clone(),
                        first: b.len() as u32,
                        second: w,
                    })
                }
                None => {
                    let b: Bits = (0..w).map(|_| self.fresh()).collect();
                    self.vars.insert(name.clone(), b.clone());
                    b
                }
            },
            Node::Lit(v) => self.constant(*v, w),
            Node::Unary(op, a) => {
                let a = self.term(a)?;
                match op {
                    UnOp::Not => a.iter().map(|l| !*l).collect(),
                    UnOp::Neg => self.neg(&a),
                }
            }
            Node::Binary(op, a, b) => {
                let a = self.term(a)?;
                let b = self.term(b)?;
                match op {
                    BinOp::And => a.iter().zip(&b).map(|(x, y)| self.and(*x, *y)).collect(),
                    BinOp::Or => a.iter().zip(&b).map(|(x, y)| self.or(*x, *y)).collect(),
                    BinOp::Xor => a.iter().zip(&b).map(|(x, y)| self.xor(*x, *y)).collect(),
                    BinOp::Add => self.add(&a, &b),
                    BinOp::Sub => self.sub(&a, &b),
                    BinOp::Mul => self.mul(&a, &b),
                    BinOp::Shl | BinOp::Lshr | BinOp::Ashr => self.shift(*op, &a, &b),
                    BinOp::Udiv => self.udivrem(&a, &b).0,
                    BinOp::Urem => self.udivrem(&a, &b).1,
                    BinOp::Sdiv => {
                        let (ua, ub) = (self.abs(&a), self.abs(&b));
                        let (q, _) = self.udivrem(&ua, &ub);
                        let nq = self.neg(&q);
                        let s = self.xor(a[a.len() - 1], b[b.len() - 1]);
                        self.mux_bits(s, &nq, &q)
                    }
                    BinOp::Srem => {
                        let (ua, ub) = (self.abs(&a), self.abs(&b));
                        let (_, r) = self.udivrem(&ua, &ub);
                        let nr = self.neg(&r);
                        self.mux_bits(a[a.len() - 1], &nr, &r)
                    }
                }
            }
            Node::Cast(op, a) => {
                let a = self.term(a)?;
                match op {
                    CastOp::Trunc => a[..w as usize].to_vec(),
                    CastOp::Zext => {
                        let mut v = a;
                        v.resize(w as usize, !self.t);
                        v
                    }
                    CastOp::Sext => {
                        let top = *a.last().unwrap();
                        let mut v = a;
                        v.resize(w as usize, top);
                        v
                    }
                }
            }
            Node::Extract(a, off) => {
                let a = self.term(a)?;
                a[*off as usize..(*off + w) as usize].to_vec()
            }
            Node::Concat(hi, lo) => {
                let mut v = self.term(lo)?;
                v.extend(self.term(hi)?);
                v
            }
        };
        self.terms.insert(t.ptr(), (t.clone(), bits.clone()));
        Ok(bits)
    }

    pub fn formula(&mut self, f: &BvFormula) -> Result<Lit, WidthConflict> {
        Ok(match f {
            BvFormula::True => self.t,
            BvFormula::False => !self.t,
            BvFormula::Rel(r, a, b) => {
                let a = self.term(a)?;
                let b = self.term(b)?;
                match r {
                    Relop::Eq => self.equal(&a, &b),
                    Relop::Ne => !self.equal(&a, &b),
                    Relop::Ult => self.ult(&a, &b),
                    Relop::Uge => !self.ult(&a, &b),
                    Relop::Ugt => self.ult(&b, &a),
                    Relop::Ule => !self.ult(&b, &a),
                    Relop::Slt => self.slt(&a, &b),
                    Relop::Sge => !self.slt(&a, &b),
                    Relop::Sgt => self.slt(&b, &a),
                    Relop::Sle => !self.slt(&b, &a),
                }
            }
            BvFormula::Not(g) => !self.formula(g)?,
            BvFormula::And(fs) => {
                let ls = fs.iter().map(|g| self.formula(g)).collect::<Result<Vec<_>, _>>()?;
                self.and_all(&ls)
            }
            BvFormula::Or(fs) => {
                let ls = fs.iter().map(|g| self.formula(g)).collect::<Result<Vec<_>, _>>()?;
                self.or_all(&ls)
            }
        })
    }

    pub fn var_value(&self, name: &str) -> Option<u64> {
        self.vars.get(name).map(|bits| {
            bits.iter()
                .enumerate()
                .fold(0u64, |acc, (i, l)| acc | (self.sat.model_value(*l) as u64) << i)
        })
    }
}
