//! Bitvector terms and formulas, their concrete evaluator and SMT-LIB
//! printing. Terms are reference-counted DAGs; identical subterms built
//! once and shared are evaluated and bit-blasted once.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

use crate::bits::{mask, truncate, BinOp, CastOp, Relop, UnOp};

#[derive(Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Var(String),
    Lit(u64),
    Unary(UnOp, BvTerm),
    Binary(BinOp, BvTerm, BvTerm),
    Cast(CastOp, BvTerm),
    /// `width` bits of the operand starting at bit `offset`.
    Extract(BvTerm, u32),
    /// High part first.
    Concat(BvTerm, BvTerm),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BvTerm(Rc<(Node, u32)>);

impl BvTerm {
    fn mk(node: Node, width: u32) -> BvTerm {
        assert!((1..=64).contains(&width), "bitvector width {width} out of range");
        BvTerm(Rc::new((node, width)))
    }

    pub fn var(name: impl Into<String>, width: u32) -> BvTerm {
        BvTerm::mk(Node::Var(name.into()), width)
    }

    pub fn lit(value: u64, width: u32) -> BvTerm {
        BvTerm::mk(Node::Lit(truncate(value, width)), width)
    }

    pub fn unary(op: UnOp, a: BvTerm) -> BvTerm {
        let w = a.width();
        if let Some(v) = a.as_lit() {
            return BvTerm::lit(op.eval(v, w), w);
        }
        BvTerm::mk(Node::Unary(op, a), w)
    }

    pub fn binary(op: BinOp, a: BvTerm, b: BvTerm) -> BvTerm {
        assert_eq!(a.width(), b.width(), "{} operand widths differ", op.mnemonic());
        let w = a.width();
        if let (Some(x), Some(y)) = (a.as_lit(), b.as_lit()) {
            return BvTerm::lit(op.eval(x, y, w), w);
        }
        BvTerm::mk(Node::Binary(op, a, b), w)
    }

    pub fn cast(op: CastOp, a: BvTerm, to: u32) -> BvTerm {
        let from = a.width();
        if to == from {
            return a;
        }
        match op {
            CastOp::Trunc => assert!(to < from, "trunc must narrow"),
            CastOp::Zext | CastOp::Sext => assert!(to > from, "extension must widen"),
        }
        if let Some(v) = a.as_lit() {
            return BvTerm::lit(op.eval(v, from, to), to);
        }
        BvTerm::mk(Node::Cast(op, a), to)
    }

    /// Resize to `to` bits, zero-extending or truncating.
    pub fn resize(a: BvTerm, to: u32) -> BvTerm {
        match a.width().cmp(&to) {
            std::cmp::Ordering::Less => BvTerm::cast(CastOp::Zext, a, to),
            std::cmp::Ordering::Greater => BvTerm::cast(CastOp::Trunc, a, to),
            std::cmp::Ordering::Equal => a,
        }
    }

    pub fn extract(a: BvTerm, offset: u32, width: u32) -> BvTerm {
        assert!(offset + width <= a.width(), "extract out of range");
        if offset == 0 && width == a.width() {
            return a;
        }
        if let Some(v) = a.as_lit() {
            return BvTerm::lit(v >> offset, width);
        }
        BvTerm::mk(Node::Extract(a, offset), width)
    }

    pub fn concat(hi: BvTerm, lo: BvTerm) -> BvTerm {
        let w = hi.width() + lo.width();
        if let (Some(h), Some(l)) = (hi.as_lit(), lo.as_lit()) {
            return BvTerm::lit(h << lo.width() | l, w);
        }
        BvTerm::mk(Node::Concat(hi, lo), w)
    }

    pub fn width(&self) -> u32 {
        self.0 .1
    }

    pub fn node(&self) -> &Node {
        &self.0 .0
    }

    pub fn as_lit(&self) -> Option<u64> {
        match self.node() {
            Node::Lit(v) => Some(*v),
            _ => None,
        }
    }

    pub(crate) fn ptr(&self) -> *const (Node, u32) {
        Rc::as_ptr(&self.0)
    }

    /// Variables with their widths.
    pub fn vars(&self, out: &mut BTreeMap<String, u32>) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.ptr()) {
                continue;
            }
            match t.node() {
                Node::Var(n) => {
                    out.insert(n.clone(), t.width());
                }
                Node::Lit(_) => {}
                Node::Unary(_, a) | Node::Cast(_, a) | Node::Extract(a, _) => stack.push(a.clone()),
                Node::Binary(_, a, b) | Node::Concat(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BvFormula {
    True,
    False,
    Rel(Relop, BvTerm, BvTerm),
    Not(Box<BvFormula>),
    And(Vec<BvFormula>),
    Or(Vec<BvFormula>),
}

impl BvFormula {
    pub fn rel(relop: Relop, a: BvTerm, b: BvTerm) -> BvFormula {
        assert_eq!(a.width(), b.width(), "relop operand widths differ");
        if let (Some(x), Some(y)) = (a.as_lit(), b.as_lit()) {
            return BvFormula::from_bool(relop.eval(x, y, a.width()));
        }
        BvFormula::Rel(relop, a, b)
    }

    pub fn eq(a: BvTerm, b: BvTerm) -> BvFormula {
        BvFormula::rel(Relop::Eq, a, b)
    }

    pub fn from_bool(b: bool) -> BvFormula {
        if b {
            BvFormula::True
        } else {
            BvFormula::False
        }
    }

    pub fn negate(self) -> BvFormula {
        match self {
            BvFormula::True => BvFormula::False,
            BvFormula::False => BvFormula::True,
            BvFormula::Rel(r, a, b) => BvFormula::Rel(r.negate(), a, b),
            BvFormula::Not(f) => *f,
            f => BvFormula::Not(Box::new(f)),
        }
    }

    pub fn vars(&self, out: &mut BTreeMap<String, u32>) {
        match self {
            BvFormula::True | BvFormula::False => {}
            BvFormula::Rel(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            BvFormula::Not(f) => f.vars(out),
            BvFormula::And(fs) | BvFormula::Or(fs) => fs.iter().for_each(|f| f.vars(out)),
        }
    }
}

/// Variable assignment. Variables missing from the map evaluate to 0.
pub type Model = BTreeMap<String, u64>;

/// Concrete evaluator, memoized over shared subterms.
#[derive(Default)]
pub struct Evaluator<'m> {
    model: Option<&'m Model>,
    memo: HashMap<*const (Node, u32), u64>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m Model) -> Self {
        Evaluator {
            model: Some(model),
            memo: HashMap::new(),
        }
    }

    pub fn term(&mut self, t: &BvTerm) -> u64 {
        if let Some(v) = self.memo.get(&t.ptr()) {
            return *v;
        }
        let w = t.width();
        let v = match t.node() {
            Node::Var(n) => truncate(self.model.and_then(|m| m.get(n)).copied().unwrap_or(0), w),
            Node::Lit(v) => *v,
            Node::Unary(op, a) => {
                let x = self.term(a);
                op.eval(x, w)
            }
            Node::Binary(op, a, b) => {
                let (x, y) = (self.term(a), self.term(b));
                op.eval(x, y, w)
            }
            Node::Cast(op, a) => {
                let x = self.term(a);
                op.eval(x, a.width(), w)
            }
            Node::Extract(a, off) => truncate(self.term(a) >> off, w),
            Node::Concat(hi, lo) => {
                let (h, l) = (self.term(hi), self.term(lo));
                (h << lo.width() | l) & mask(w)
            }
        };
        self.memo.insert(t.ptr(), v);
        v
    }

    pub fn formula(&mut self, f: &BvFormula) -> bool {
        match f {
            BvFormula::True => true,
            BvFormula::False => false,
            BvFormula::Rel(r, a, b) => {
                let (x, y) = (self.term(a), self.term(b));
                r.eval(x, y, a.width())
            }
            BvFormula::Not(f) => !self.formula(f),
            BvFormula::And(fs) => fs.iter().all(|f| self.formula(f)),
            BvFormula::Or(fs) => fs.iter().any(|f| self.formula(f)),
        }
    }
}

pub fn eval(t: &BvTerm, model: &Model) -> u64 {
    Evaluator::new(model).term(t)
}

pub fn eval_formula(f: &BvFormula, model: &Model) -> bool {
    Evaluator::new(model).formula(f)
}

fn smt_binop(op: BinOp) -> &'static str {
    match op {
        BinOp::And => "bvand",
        BinOp::Or => "bvor",
        BinOp::Xor => "bvxor",
        BinOp::Shl => "bvshl",
        BinOp::Lshr => "bvlshr",
        BinOp::Ashr => "bvashr",
        BinOp::Add => "bvadd",
        BinOp::Sub => "bvsub",
        BinOp::Mul => "bvmul",
        BinOp::Udiv => "bvudiv",
        BinOp::Sdiv => "bvsdiv",
        BinOp::Urem => "bvurem",
        BinOp::Srem => "bvsrem",
    }
}

fn smt_relop(r: Relop) -> &'static str {
    match r {
        Relop::Eq => "=",
        Relop::Ne => "distinct",
        Relop::Ult => "bvult",
        Relop::Ule => "bvule",
        Relop::Ugt => "bvugt",
        Relop::Uge => "bvuge",
        Relop::Slt => "bvslt",
        Relop::Sle => "bvsle",
        Relop::Sgt => "bvsgt",
        Relop::Sge => "bvsge",
    }
}

pub fn term_to_smtlib(t: &BvTerm, out: &mut String) {
    match t.node() {
        Node::Var(n) => out.push_str(&smt_symbol(n)),
        Node::Lit(v) => {
            let _ = write!(out, "(_ bv{v} {})", t.width());
        }
        Node::Unary(op, a) => {
            out.push_str(match op {
                UnOp::Not => "(bvnot ",
                UnOp::Neg => "(bvneg ",
            });
            term_to_smtlib(a, out);
            out.push(')');
        }
        Node::Binary(op, a, b) => {
            let _ = write!(out, "({} ", smt_binop(*op));
            term_to_smtlib(a, out);
            out.push(' ');
            term_to_smtlib(b, out);
            out.push(')');
        }
        Node::Cast(op, a) => {
            let k = t.width() as i64 - a.width() as i64;
            match op {
                CastOp::Zext => {
                    let _ = write!(out, "((_ zero_extend {k}) ");
                }
                CastOp::Sext => {
                    let _ = write!(out, "((_ sign_extend {k}) ");
                }
                CastOp::Trunc => {
                    let _ = write!(out, "((_ extract {} 0) ", t.width() - 1);
                }
            }
            term_to_smtlib(a, out);
            out.push(')');
        }
        Node::Extract(a, off) => {
            let _ = write!(out, "((_ extract {} {off}) ", off + t.width() - 1);
            term_to_smtlib(a, out);
            out.push(')');
        }
        Node::Concat(hi, lo) => {
            out.push_str("(concat ");
            term_to_smtlib(hi, out);
            out.push(' ');
            term_to_smtlib(lo, out);
            out.push(')');
        }
    }
}

pub fn formula_to_smtlib(f: &BvFormula, out: &mut String) {
    match f {
        BvFormula::True => out.push_str("true"),
        BvFormula::False => out.push_str("false"),
        BvFormula::Rel(r, a, b) => {
            let _ = write!(out, "({} ", smt_relop(*r));
            term_to_smtlib(a, out);
            out.push(' ');
            term_to_smtlib(b, out);
            out.push(')');
        }
        BvFormula::Not(f) => {
            out.push_str("(not ");
            formula_to_smtlib(f, out);
            out.push(')');
        }
        BvFormula::And(fs) | BvFormula::Or(fs) => {
            out.push_str(if matches!(f, BvFormula::And(_)) { "(and" } else { "(or" });
            if fs.is_empty() {
                out.push_str(if matches!(f, BvFormula::And(_)) { " true" } else { " false" });
            }
            for g in fs {
                out.push(' ');
                formula_to_smtlib(g, out);
            }
            out.push(')');
        }
    }
}

fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_.$@!?-".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

/// Declarations plus one `assert` per formula.
pub fn to_smtlib(assertions: &[BvFormula]) -> String {
    let mut vars = BTreeMap::new();
    for f in assertions {
        f.vars(&mut vars);
    }
    let mut out = String::from("(set-logic QF_BV)\n");
    for (n, w) in &vars {
        let _ = writeln!(out, "(declare-fun {} () (_ BitVec {w}))", smt_symbol(n));
    }
    for f in assertions {
        out.push_str("(assert ");
        formula_to_smtlib(f, &mut out);
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    out
}
