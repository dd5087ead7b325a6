use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bits::{BinOp, CastOp, Relop, UnOp};

fn x(w: u32) -> BvTerm {
    BvTerm::var("x", w)
}

fn lit(v: u64, w: u32) -> BvTerm {
    BvTerm::lit(v, w)
}

#[test]
fn masked_high_bit_is_unsat() {
    let mut s = Solver::new();
    let t = BvTerm::binary(BinOp::And, x(8), lit(0x0F, 8));
    s.assert_formula(BvFormula::eq(t, lit(0x1F, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Unsat);
    assert_eq!(s.model(), Err(SolverError::NoModel));
}

#[test]
fn wraparound_add() {
    let mut s = Solver::new();
    let t = BvTerm::binary(BinOp::Add, x(8), lit(1, 8));
    s.assert_formula(BvFormula::eq(t, lit(0, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    assert_eq!(s.model().unwrap()["x"], 0xFF);
}

#[test]
fn simple_models() {
    let mut s = Solver::new();
    s.assert_formula(BvFormula::eq(x(32), lit(5, 32))).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    assert_eq!(s.model().unwrap()["x"], 5);

    let mut s = Solver::new();
    let y = BvTerm::var("y", 16);
    s.assert_formula(BvFormula::eq(BvTerm::binary(BinOp::Xor, x(16), y), lit(0, 16)))
        .unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    let m = s.model().unwrap();
    assert_eq!(m["x"], m["y"]);
}

#[test]
fn true_assertion_changes_nothing() {
    let mut s = Solver::new();
    s.assert_formula(BvFormula::eq(x(8), lit(3, 8))).unwrap();
    s.assert_formula(BvFormula::True).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    assert_eq!(s.model().unwrap()["x"], 3);
}

#[test]
fn contradictory_equalities() {
    let mut s = Solver::new();
    s.assert_formula(BvFormula::eq(x(8), lit(1, 8))).unwrap();
    s.assert_formula(BvFormula::eq(x(8), lit(2, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Unsat);
}

#[test]
fn push_pop_restores() {
    let mut s = Solver::new();
    s.assert_formula(BvFormula::rel(Relop::Ult, x(8), lit(10, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    s.push();
    s.assert_formula(BvFormula::rel(Relop::Ugt, x(8), lit(20, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Unsat);
    s.pop().unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    assert!(s.model().unwrap()["x"] < 10);
    assert_eq!(s.pop(), Err(SolverError::EmptyScope));
}

#[test]
fn nested_scopes_are_lifo() {
    let mut s = Solver::new();
    let results: Vec<CheckResult> = (0..3)
        .map(|i| {
            s.push();
            s.assert_formula(BvFormula::rel(Relop::Uge, x(8), lit(100 * i as u64, 8)))
                .unwrap();
            s.check()
        })
        .collect();
    assert_eq!(results, vec![CheckResult::Sat, CheckResult::Sat, CheckResult::Sat]);
    s.push();
    s.assert_formula(BvFormula::rel(Relop::Ult, x(8), lit(150, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Unsat);
    s.pop().unwrap();
    s.pop().unwrap();
    s.assert_formula(BvFormula::rel(Relop::Ult, x(8), lit(150, 8))).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    assert_eq!(s.scope_depth(), 2);
}

#[test]
fn width_conflict_is_reported() {
    let mut s = Solver::new();
    s.assert_formula(BvFormula::eq(x(8), lit(1, 8))).unwrap();
    let err = s.assert_formula(BvFormula::eq(x(16), lit(1, 16))).unwrap_err();
    assert!(matches!(err, SolverError::WidthConflict { .. }));
}

#[test]
fn division_by_zero_conventions() {
    for (op, a, expect) in [
        (BinOp::Udiv, 7u64, 0xFFu64),
        (BinOp::Urem, 7, 7),
        (BinOp::Sdiv, 7, 0xFF),
        (BinOp::Sdiv, 0xF9, 1),
        (BinOp::Srem, 0xF9, 0xF9),
    ] {
        let mut s = Solver::new();
        let y = BvTerm::var("y", 8);
        let r = BvTerm::var("r", 8);
        s.assert_formula(BvFormula::eq(y.clone(), lit(0, 8))).unwrap();
        s.assert_formula(BvFormula::eq(r, BvTerm::binary(op, lit(a, 8), y))).unwrap();
        assert_eq!(s.check(), CheckResult::Sat);
        assert_eq!(s.model().unwrap()["r"], expect, "{op} {a:#x} / 0");
    }
}

#[test]
fn sixty_four_bit_multiplication() {
    let mut s = Solver::new();
    let t = BvTerm::binary(BinOp::Mul, x(64), lit(0x1_0000_0001, 64));
    s.assert_formula(BvFormula::eq(t, lit(0x1234_5678_1234_5678, 64))).unwrap();
    assert_eq!(s.check(), CheckResult::Sat);
    let m = s.model().unwrap()["x"];
    assert_eq!(m.wrapping_mul(0x1_0000_0001), 0x1234_5678_1234_5678);
}

#[test]
fn smtlib_dump() {
    let mut s = Solver::new();
    let t = BvTerm::cast(CastOp::Zext, BvTerm::extract(x(16), 8, 8), 32);
    s.assert_formula(BvFormula::rel(Relop::Slt, t, lit(3, 32))).unwrap();
    let text = s.to_smtlib();
    assert!(text.contains("(declare-fun x () (_ BitVec 16))"), "{text}");
    assert!(text.contains("(bvslt ((_ zero_extend 24) ((_ extract 15 8) x)) (_ bv3 32))"), "{text}");
}

fn random_term(rng: &mut ChaCha8Rng, vars: &[BvTerm], w: u32, depth: u32) -> BvTerm {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            vars[rng.gen_range(0..vars.len())].clone()
        } else {
            lit(rng.gen(), w)
        };
    }
    match rng.gen_range(0..10) {
        0 => BvTerm::unary(
            if rng.gen() { UnOp::Not } else { UnOp::Neg },
            random_term(rng, vars, w, depth - 1),
        ),
        1 => {
            let inner = random_term(rng, vars, w, depth - 1);
            let op = if rng.gen() { CastOp::Zext } else { CastOp::Sext };
            let wide = BvTerm::cast(op, inner, w + 3);
            BvTerm::extract(wide, rng.gen_range(0..=3), w)
        }
        2 if w >= 2 => {
            let split = rng.gen_range(1..w);
            let a = random_term(rng, vars, w, depth - 1);
            let b = random_term(rng, vars, w, depth - 1);
            BvTerm::concat(BvTerm::extract(a, 0, w - split), BvTerm::extract(b, w - split, split))
        }
        _ => {
            let op = BinOp::ALL[rng.gen_range(0..BinOp::ALL.len())];
            let a = random_term(rng, vars, w, depth - 1);
            let b = random_term(rng, vars, w, depth - 1);
            BvTerm::binary(op, a, b)
        }
    }
}

fn random_formula(rng: &mut ChaCha8Rng, vars: &[BvTerm], w: u32) -> BvFormula {
    let relop = Relop::ALL[rng.gen_range(0..Relop::ALL.len())];
    let a = random_term(rng, vars, w, 3);
    let b = random_term(rng, vars, w, 2);
    let f = BvFormula::rel(relop, a, b);
    if rng.gen_bool(0.2) {
        let g = BvFormula::rel(Relop::Ne, random_term(rng, vars, w, 2), lit(rng.gen(), w));
        if rng.gen() {
            BvFormula::And(vec![f, g])
        } else {
            BvFormula::Or(vec![f, g.negate()])
        }
    } else {
        f
    }
}

fn brute_force(f: &BvFormula, names: &[&str], w: u32) -> bool {
    let n = 1u64 << (w * names.len() as u32);
    (0..n).any(|code| {
        let m: Model = names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.to_string(), (code >> (w * i as u32)) & ((1 << w) - 1)))
            .collect();
        eval_formula(f, &m)
    })
}

fn oracle_round(seed: u64, names: &[&str], w: u32, rounds: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<BvTerm> = names.iter().map(|n| BvTerm::var(*n, w)).collect();
    for _ in 0..rounds {
        let f = random_formula(&mut rng, &vars, w);
        let expect = brute_force(&f, names, w);
        let mut s = Solver::new();
        s.assert_formula(f.clone()).unwrap();
        let got = s.check();
        assert_eq!(got == CheckResult::Sat, expect, "{}", to_smtlib(&[f]));
        if got == CheckResult::Sat {
            assert!(eval_formula(&f, s.model().unwrap()));
        }
    }
}

#[test]
fn agrees_with_exhaustive_oracle_two_vars() {
    oracle_round(1, &["x", "y"], 6, 150);
}

#[test]
fn agrees_with_exhaustive_oracle_eight_bit() {
    oracle_round(2, &["x"], 8, 200);
}

#[test]
fn agrees_with_exhaustive_oracle_twelve_bit() {
    oracle_round(3, &["x"], 12, 60);
}

// Random assert/push/pop traces against a solver rebuilt from scratch.
#[test]
fn incremental_matches_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vars = vec![BvTerm::var("x", 8), BvTerm::var("y", 8)];
    for _ in 0..20 {
        let mut s = Solver::new();
        let mut live: Vec<Vec<BvFormula>> = vec![Vec::new()];
        for _ in 0..12 {
            match rng.gen_range(0..4) {
                0 => {
                    s.push();
                    live.push(Vec::new());
                }
                1 if live.len() > 1 => {
                    s.pop().unwrap();
                    live.pop();
                }
                _ => {
                    let f = random_formula(&mut rng, &vars, 8);
                    s.assert_formula(f.clone()).unwrap();
                    live.last_mut().unwrap().push(f);
                }
            }
            let mut fresh = Solver::new();
            for f in live.iter().flatten() {
                fresh.assert_formula(f.clone()).unwrap();
            }
            assert_eq!(s.check(), fresh.check());
        }
    }
}
