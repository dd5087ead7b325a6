use super::*;
use crate::ir::parse_program;
use crate::taint::{constant_label, TaintConfig, UnionTable, UNTAINTED};
use crate::vm::{Limits, LoadedProgram};

/// The two-byte decoder table: l81 = (zext(c0 & b1) | zext(c1 & b0) << 0).
fn decoder_table() -> (UnionTable, TaintLabel) {
    let mut t = UnionTable::new(32, TaintConfig::default());
    let l_b1 = t.union(TaintOp::And, UNTAINTED, 18, 1).unwrap();
    let l_b0 = t.union(TaintOp::And, UNTAINTED, 17, 1).unwrap();
    let z0 = t.union(TaintOp::Zext, l_b0, 4, 1).unwrap();
    let sh = t.union(TaintOp::Shl, z0, constant_label(0).0, 4).unwrap();
    let z1 = t.union(TaintOp::Zext, l_b1, 4, 1).unwrap();
    let root = t.union(TaintOp::Or, sh, z1.0, 4).unwrap();
    (t, root)
}

#[test]
fn decoder_example_sketch() {
    let (t, root) = decoder_table();
    let s = extract_sketch(&t, root, Relop::Eq, 4, Side::Lhs).unwrap();
    assert_eq!(s.lines.len(), 6);
    assert_eq!(s.args, vec![0, 1]);
    let f = build_symfn(&s).unwrap();
    assert_eq!(f.unknowns, vec![8, 8]);
    assert_eq!(f.width, 32);
    // c0 masks byte 1, c1 masks byte 0.
    let v = f.eval(&|o| [0xC3, 0xA9][o], &[0x3F, 0x1F], 32);
    assert_eq!(v, (0xC3 & 0x1F) | (0xA9 & 0x3F));
}

#[test]
fn identity_sketch() {
    let t = UnionTable::new(4, TaintConfig::default());
    let s = extract_sketch(&t, TaintLabel(17), Relop::Ult, 1, Side::Rhs).unwrap();
    assert!(s.lines.is_empty());
    assert_eq!(s.args, vec![0]);
    let f = build_symfn(&s).unwrap();
    assert!(f.unknowns.is_empty());
    assert_eq!(f.eval(&|_| 0x42, &[], 8), 0x42);
}

#[test]
fn single_add_has_one_unknown() {
    let mut t = UnionTable::new(4, TaintConfig::default());
    let l = t.union(TaintOp::Add, TaintLabel(17), 0, 1).unwrap();
    let f = build_symfn(&extract_sketch(&t, l, Relop::Eq, 1, Side::Lhs).unwrap()).unwrap();
    assert_eq!(f.lines.len(), 1);
    assert_eq!(f.unknowns.len(), 1);
}

#[test]
fn shared_subtree_appears_once() {
    let mut t = UnionTable::new(4, TaintConfig::default());
    let a = t.union(TaintOp::Not, TaintLabel(17), 0, 1).unwrap();
    let b = t.union(TaintOp::Add, a, 18, 1).unwrap();
    let c = t.union(TaintOp::Xor, a, 19, 1).unwrap();
    let d = t.union(TaintOp::Mul, b, c.0, 1).unwrap();
    let s = extract_sketch(&t, d, Relop::Eq, 1, Side::Lhs).unwrap();
    assert_eq!(s.lines.len(), 4);
    assert_eq!(s.lines.iter().filter(|(l, _)| *l == a).count(), 1);
    assert_eq!(s.args, vec![0, 1, 2]);
}

#[test]
fn overread_is_reported() {
    let mut t = UnionTable::new(2, TaintConfig::default());
    let l = t.union(TaintOp::Add, TaintLabel(17), OVERREAD.0, 1).unwrap();
    assert_eq!(l, OVERREAD);
    assert_eq!(
        extract_sketch(&t, l, Relop::Eq, 1, Side::Lhs),
        Err(SynthError::Overread)
    );
}

fn one_op(op: TaintOp) -> SymFn {
    let mut t = UnionTable::new(1, TaintConfig::default());
    let l = t.union(op, TaintLabel(17), 0, 1).unwrap();
    build_symfn(&extract_sketch(&t, l, Relop::Eq, 1, Side::Lhs).unwrap()).unwrap()
}

fn pair(x: u8, lhs: u64) -> IoPair {
    IoPair {
        arg_bytes: vec![x],
        lhs,
        rhs: 0,
        outcome: false,
    }
}

#[test]
fn solve_mask() {
    let f = one_op(TaintOp::And);
    let a = solve_constants(Some(&f), None, &[0], &[pair(0xFF, 0x1F)], 8, true).unwrap();
    assert_eq!(a.lhs, vec![0x1F]);
}

#[test]
fn solve_offset_matches_brute_force() {
    let f = one_op(TaintOp::Add);
    let pairs = [pair(0x10, 0x30), pair(0x00, 0x20)];
    let a = solve_constants(Some(&f), None, &[0], &pairs, 8, true).unwrap();
    let brute: Vec<u64> = (0..256u64)
        .filter(|c| pairs.iter().all(|p| (p.arg_bytes[0] as u64 + c) & 0xFF == p.lhs))
        .collect();
    assert_eq!(brute, vec![0x20]);
    assert_eq!(a.lhs, brute);
}

#[test]
fn optimistic_drops_conflicting_pair() {
    let f = one_op(TaintOp::Xor);
    let mut pairs: Vec<IoPair> = [1u8, 2, 3, 4, 5].iter().map(|x| pair(*x, (*x ^ 0x5A) as u64)).collect();
    pairs.insert(3, pair(9, 0));
    let a = solve_constants(Some(&f), None, &[0], &pairs, 8, true).unwrap();
    assert_eq!(a.lhs, vec![0x5A]);
    assert_eq!(a.dropped, vec![3]);
    assert_eq!(
        solve_constants(Some(&f), None, &[0], &pairs, 8, false),
        Err(SynthError::SketchInconsistent)
    );
}

#[test]
fn inconsistent_first_pair() {
    // x & c can never exceed x.
    let f = one_op(TaintOp::And);
    assert_eq!(
        solve_constants(Some(&f), None, &[0], &[pair(0x0F, 0xF0)], 8, true),
        Err(SynthError::SketchInconsistent)
    );
}

#[test]
fn collect_pairs_on_magic_compare() {
    let p = LoadedProgram::new(parse_program(crate::ir::tests::MAGIC, "t.ir").unwrap());
    let mut vm = Vm::new(&p, Limits::default());
    let base = [0u8; 4];
    let t = vm.run_tainted(&base, TaintConfig::default()).unwrap();
    let target = t.sketches[0].record.id;
    let pairs = collect_io_pairs(&mut vm, &base, target, &[0, 1, 2, 3], 8, 1).unwrap();
    assert!(pairs.len() >= 2);
    assert_eq!(pairs[0].arg_bytes, vec![0, 0, 0, 0]);
    assert!(pairs.iter().all(|p| p.rhs == 0xdeadbeef));

    assert_eq!(
        collect_io_pairs(&mut vm, &base, BranchId(12345), &[0], 8, 1),
        Err(SynthError::InsufficientObservations(0))
    );
}

#[test]
fn one_byte_domain_bound() {
    let src = "fn main {\n  r0 = in 0 1\n  r1 = cmp ult r0 10 8\n  halt\n}\n";
    let p = LoadedProgram::new(parse_program(src, "t.ir").unwrap());
    let mut vm = Vm::new(&p, Limits::default());
    let id = crate::vm::run_plain(&p, &[0], Limits::default()).branch_log[0].id;
    let pairs = collect_io_pairs(&mut vm, &[0], id, &[0], 300, 5).unwrap();
    assert!(pairs.len() <= 256);
    let distinct: HashSet<_> = pairs.iter().map(|p| p.arg_bytes.clone()).collect();
    assert_eq!(distinct.len(), pairs.len());
}
