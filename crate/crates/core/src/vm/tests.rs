use super::*;
use crate::ir::parse_program;
use crate::taint::{TaintOp, UnionEntry};

fn load(src: &str) -> LoadedProgram {
    LoadedProgram::new(parse_program(src, "t.ir").unwrap())
}

fn magic() -> LoadedProgram {
    load(crate::ir::tests::MAGIC)
}

#[test]
fn magic_compare_outcomes() {
    let p = magic();
    let hit = run_plain(&p, &0xdeadbeefu32.to_le_bytes(), Limits::default());
    assert_eq!(hit.exit, Exit::Crashed(1));
    assert_eq!(hit.branch_log.len(), 1);
    assert!(hit.branch_log[0].outcome);

    let miss = run_plain(&p, &[0; 4], Limits::default());
    assert_eq!(miss.exit, Exit::Halted);
    assert!(!miss.branch_log[0].outcome);
    assert_eq!(miss.branch_log[0].rhs, 0xdeadbeef);
    assert!(!miss.coverage.is_empty());
    assert_eq!(miss.overread, None);
}

#[test]
fn overread_zero_fills() {
    let p = load("fn main {\n  r0 = in 0 8\n  r1 = cmp eq r0 0x04030201 64\n  halt\n}\n");
    let r = run_plain(&p, &[1, 2, 3, 4], Limits::default());
    assert_eq!(r.overread, Some(8));
    assert_eq!(r.branch_log[0].lhs, 0x0403_0201);
    assert!(r.branch_log[0].outcome);

    let t = run_tainted(&p, &[1, 2, 3, 4], Limits::default()).unwrap();
    assert_eq!(t.sketches.len(), 1);
    assert!(t.sketches[0].overread());
    assert_eq!(t.run.branch_log, r.branch_log);
}

#[test]
fn magic_sketch() {
    let p = magic();
    let t = run_tainted(&p, &[9, 8, 7, 6], Limits::default()).unwrap();
    assert_eq!(t.sketches.len(), 1);
    let s = t.sketches[0];
    assert_eq!(s.rhs_label, UNTAINTED);
    assert_eq!(s.record.relop, Relop::Eq);
    assert_eq!(s.record.size, 4);
    assert_eq!(
        t.union_table.entry(s.lhs_label),
        Some(&UnionEntry::new(TaintOp::Uload, TaintLabel(17), 4, 4))
    );
}

#[test]
fn switch_cases_are_comparisons() {
    let src = "\
fn main {
  r0 = in 0 1
  switch r0 [ 1 -> @a, 2 -> @b, 3 -> @c ] @d
a:
  crash 1
b:
  crash 2
c:
  crash 3
d:
  halt
}
";
    let p = load(src);
    let t = run_tainted(&p, &[2], Limits::default()).unwrap();
    assert_eq!(t.run.exit, Exit::Crashed(2));
    assert_eq!(t.sketches.len(), 3);
    assert!(t.sketches.iter().all(|s| s.lhs_label == TaintLabel(17)));
    let ids: std::collections::HashSet<_> = t.sketches.iter().map(|s| s.record.id).collect();
    assert_eq!(ids.len(), 3);
    let outcomes: Vec<bool> = t.sketches.iter().map(|s| s.record.outcome).collect();
    assert_eq!(outcomes, vec![false, true, false]);
}

#[test]
fn self_comparison_logs_no_sketch() {
    let p = load("fn main {\n  r0 = in 0 1\n  r1 = cmp eq r0 r0 8\n  halt\n}\n");
    let t = run_tainted(&p, &[5], Limits::default()).unwrap();
    assert!(t.sketches.is_empty());
    assert_eq!(t.run.branch_log.len(), 1);
}

const CONTEXTS: &str = "\
fn check(r0:8) -> 8 {
  r1 = cmp eq r0 0x41 8
  ret r0
}
fn main {
  r0 = in 0 1
  r1 = call check r0
  r2 = call check r0
  halt
}
";

#[test]
fn call_contexts_distinguish_branches() {
    let p = load(CONTEXTS);
    let r = run_plain(&p, &[0x41], Limits::default());
    assert_eq!(r.branch_log.len(), 2);
    assert_ne!(r.branch_log[0].id, r.branch_log[1].id);
    let cmp_sid = p.sites().site[0][0];
    let call1 = p.sites().site[1][1];
    assert_eq!(r.branch_log[0].id, branch_id(Context::EMPTY.update(call1), cmp_sid));
}

#[test]
fn recursion_through_one_callsite_cancels() {
    let src = "\
fn rec(r0:8) {
  r1 = cmp eq r0 0 8
  br r1 @out @more
more:
  r2 = sub r0 1 8
  call rec r2
  ret
out:
  ret
}
fn main {
  r0 = const 2 8
  call rec r0
  halt
}
";
    let p = load(src);
    let r = run_plain(&p, &[], Limits::default());
    // The third activation xors the recursive callsite in twice.
    assert_eq!(r.branch_log.len(), 3);
    let ids: Vec<_> = r.branch_log.iter().map(|b| b.id).collect();
    assert_ne!(ids[0], ids[1]);
    assert_eq!(ids[0], ids[2]);
}

#[test]
fn step_limit() {
    let p = load("fn main {\nloop:\n  jmp @loop\n}\n");
    let r = Vm::new(
        &p,
        Limits {
            max_steps: 1000,
            ..Limits::default()
        },
    )
    .run_plain(&[], false);
    assert_eq!(r.exit, Exit::LimitExceeded);
    assert_eq!(r.steps, 1000);
}

#[test]
fn memory_round_trip_keeps_labels() {
    let src = "\
fn main {
  r0 = in 0 4
  store 100 r0 4
  r1 = load 100 4
  r2 = load 101 1
  r3 = add r1 7 32
  store 200 r3 4
  r4 = load 200 4
  r6 = zext r2 8 32
  r5 = cmp ult r4 r6 32
  halt
}
";
    let p = load(src);
    let t = run_tainted(&p, &[1, 2, 3, 4], Limits::default()).unwrap();
    let s = t.sketches[0];
    let lhs = t.union_table.entry(s.lhs_label).unwrap();
    assert_eq!(lhs.op, TaintOp::Add);
    let rhs = t.union_table.entry(s.rhs_label).unwrap();
    assert_eq!(*rhs, UnionEntry::new(TaintOp::Zext, TaintLabel(18), 4, 1));
    assert_eq!(s.record.lhs, 0x0403_0201 + 7);
}

#[test]
fn plain_and_tainted_agree() {
    let p = load(CONTEXTS);
    for b in 0..=255u8 {
        let plain = run_plain(&p, &[b], Limits::default());
        let tainted = run_tainted(&p, &[b], Limits::default()).unwrap();
        assert_eq!(plain, tainted.run);
    }
}

#[test]
fn capacity_exhaustion_aborts() {
    let p = magic();
    let mut vm = Vm::new(&p, Limits::default());
    let cfg = TaintConfig {
        capacity: 0,
        ..TaintConfig::default()
    };
    assert!(matches!(vm.run_tainted(&[1, 2, 3, 4], cfg), Err(VmError::Taint(_))));
}

#[test]
fn logs_round_trip() {
    let p = magic();
    let t = run_tainted(&p, &[1, 2, 3, 4], Limits::default()).unwrap();
    let bytes = encode_branch_log(&t.run.branch_log);
    assert_eq!(bytes.len(), BRANCH_RECORD_LEN);
    assert_eq!(decode_branch_log(&bytes).unwrap(), t.run.branch_log);

    let sk = encode_sketch_log(&t);
    let decoded = decode_sketch_log(&sk).unwrap();
    assert_eq!(decoded.len(), 1);
    assert_eq!(decoded[0].record, t.sketches[0].record);
    assert_eq!(decoded[0].slice.len(), 1);
    assert!(decode_branch_log(&bytes[..10]).is_err());
}
