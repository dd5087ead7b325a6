use super::*;
use crate::bits::Relop;
use crate::ir::parse_program;
use crate::taint::TaintConfig;
use crate::vm::{Limits, LoadedProgram};

fn load(src: &str) -> LoadedProgram {
    LoadedProgram::new(parse_program(src, "t.ir").unwrap())
}

fn trace(p: &LoadedProgram, input: &[u8]) -> TraceContext {
    let mut vm = Vm::new(p, Limits::default());
    let r = vm.run_tainted(input, TaintConfig::default()).unwrap();
    TraceContext::from_taint_run(&r, input)
}

fn outcome_of(p: &LoadedProgram, input: &[u8], id: BranchId) -> bool {
    let mut vm = Vm::new(p, Limits::default());
    vm.execute(input, true);
    vm.branch_log().iter().find(|r| r.id == id).unwrap().outcome
}

#[test]
fn magic_compare_flips_in_one_iteration() {
    let p = load(crate::ir::tests::MAGIC);
    let mut tc = trace(&p, &[0; 4]);
    assert_eq!(tc.len(), 1);
    let mut vm = Vm::new(&p, Limits::default());
    let o = tc.flip_branch(0, &mut vm, &FlipConfig::default());
    assert_eq!(o.status, FlipStatus::Flipped);
    assert_eq!(o.iterations, 1);
    assert_eq!(o.input.as_deref(), Some(&[0xef, 0xbe, 0xad, 0xde][..]));
    assert_eq!(vm.execute(o.input.as_ref().unwrap(), false).exit, crate::vm::Exit::Crashed(1));
}

#[test]
fn self_comparison_is_not_attempted() {
    let p = load("fn main {\n  r0 = in 0 1\n  r1 = cmp eq r0 r0 8\n  br r1 @a @b\na:\n  halt\nb:\n  halt\n}\n");
    let mut tc = trace(&p, &[7]);
    assert!(tc.is_empty());
    let mut vm = Vm::new(&p, Limits::default());
    assert!(tc.flip_all(&mut vm, &FlipConfig::default(), |_| true).is_empty());
}

const MASK: &str = "\
fn main {
  r0 = in 0 1
  r1 = and r0 0xf0 8
  r2 = cmp eq r1 0x50 8
  br r2 @bug @done
bug:
  crash 2
done:
  halt
}
";

#[test]
fn masked_compare_flips_from_few_pairs() {
    let p = load(MASK);
    for seed in 0..8 {
        let mut tc = trace(&p, &[0]);
        let cfg = FlipConfig { initial_pairs: 2, seed, ..FlipConfig::default() };
        let mut vm = Vm::new(&p, Limits::default());
        let o = tc.flip_branch(0, &mut vm, &cfg);
        assert_eq!(o.status, FlipStatus::Flipped, "seed {seed}");
        assert!(o.iterations <= 10);
        assert!(o.pairs >= 2);
        assert_eq!(o.input.as_ref().unwrap()[0] & 0xf0, 0x50);
    }
}

const NESTED: &str = "\
fn main {
  r0 = in 0 1
  r1 = cmp ult r0 0x60 8
  br r1 @inner @done
inner:
  r2 = cmp ult r0 0x50 8
  br r2 @done @bug
bug:
  crash 3
done:
  halt
}
";

#[test]
fn pinned_prefix_constrains_shared_byte() {
    let p = load(NESTED);
    let mut tc = trace(&p, &[0x41]);
    assert_eq!(tc.len(), 2);
    let mut vm = Vm::new(&p, Limits::default());
    let cfg = FlipConfig::default();
    tc.synthesize(0, &mut vm, &cfg).unwrap();
    assert!(tc.pin_branch(0));
    let o = tc.flip_branch(1, &mut vm, &cfg);
    assert_eq!(o.status, FlipStatus::Flipped);
    assert_eq!(o.diverged_pins, 0);
    let b = o.input.unwrap()[0];
    assert!((0x50..0x60).contains(&b), "{b:#x}");
    assert_eq!(vm.execute(&[b], false).exit, crate::vm::Exit::Crashed(3));
}

#[test]
fn negating_a_pinned_branch_is_unsat() {
    let p = load(NESTED);
    let mut tc = trace(&p, &[0x41]);
    let mut vm = Vm::new(&p, Limits::default());
    let cfg = FlipConfig::default();
    let outcomes = tc.flip_all(&mut vm, &cfg, |_| false);
    assert!(outcomes.iter().all(|o| o.status == FlipStatus::Skipped));
    assert!(tc.branches.iter().all(|b| b.pinned));
    for i in 0..tc.len() {
        let p = tc.predicate(i).unwrap();
        let neg = if tc.branches[i].record.outcome { p.negate() } else { p };
        let s = tc.solver();
        s.push();
        s.assert_formula(neg).unwrap();
        assert_eq!(s.check(), CheckResult::Unsat);
        s.pop().unwrap();
    }
}

const DISJOINT: &str = "\
fn main {
  r0 = in 0 1
  r1 = in 1 1
  r2 = cmp eq r0 0x11 8
  br r2 @second @done
second:
  r3 = cmp eq r1 0x22 8
  br r3 @bug @done
bug:
  crash 4
done:
  halt
}
";

#[test]
fn disjoint_pin_leaves_target_model_alone() {
    let p = load(DISJOINT);
    let base = [0x11, 0x00];
    let flip = |multi_branch: bool| {
        let mut tc = trace(&p, &base);
        let mut vm = Vm::new(&p, Limits::default());
        let cfg = FlipConfig { multi_branch, ..FlipConfig::default() };
        tc.flip_all(&mut vm, &cfg, |r| r.relop == Relop::Eq && !r.outcome)
            .into_iter()
            .find(|o| o.status == FlipStatus::Flipped)
            .unwrap()
    };
    let pinned = flip(true);
    let unpinned = flip(false);
    assert_eq!(pinned.input, unpinned.input);
    assert_eq!(pinned.input.as_deref(), Some(&[0x11, 0x22][..]));
}

#[test]
fn flipped_outcome_is_verified_by_plain_run() {
    let p = load(NESTED);
    let mut tc = trace(&p, &[0x41]);
    let mut vm = Vm::new(&p, Limits::default());
    for o in tc.flip_all(&mut vm, &FlipConfig::default(), |_| true) {
        let base = tc.branches.iter().find(|b| b.record.id == o.id).unwrap().record.outcome;
        if let Some(input) = &o.input {
            assert_ne!(outcome_of(&p, input, o.id), base);
        }
    }
}

#[test]
fn infeasible_flip_is_reported() {
    let src = "fn main {\n  r0 = in 0 1\n  r1 = zext r0 8 16\n  r2 = cmp ult r1 0x100 16\n  br r2 @a @b\na:\n  halt\nb:\n  crash 1\n}\n";
    let p = load(src);
    let mut tc = trace(&p, &[3]);
    let mut vm = Vm::new(&p, Limits::default());
    let o = tc.flip_branch(0, &mut vm, &FlipConfig::default());
    assert_eq!(o.status, FlipStatus::Infeasible);
}

#[test]
fn substitute_examples() {
    let model: Model = (0..4).map(|i| (byte_var(i), (0xdeadbeefu64 >> (8 * i)) & 0xff)).collect();
    assert_eq!(substitute(&[1, 2, 3], &[], &model), vec![1, 2, 3]);
    assert_eq!(substitute(&[0; 6], &[0, 1, 2, 3], &model), vec![0xef, 0xbe, 0xad, 0xde, 0, 0]);
    let m: Model = [(byte_var(7), 9)].into_iter().collect();
    assert_eq!(substitute(&[5; 4], &[7], &m), vec![5, 5, 5, 5, 0, 0, 0, 9]);
}

#[test]
fn report_serializes() {
    let p = load(crate::ir::tests::MAGIC);
    let mut tc = trace(&p, &[0; 4]);
    let mut vm = Vm::new(&p, Limits::default());
    let outs = tc.flip_all(&mut vm, &FlipConfig::default(), |_| true);
    let r = FlipReport::new(&tc, &outs, |_| None);
    let j = serde_json::to_string(&r).unwrap();
    assert!(j.contains("\"status\":\"flipped\""), "{j}");
    assert_eq!(r.branches[0].args, 4);
}
