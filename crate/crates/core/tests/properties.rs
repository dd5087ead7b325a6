use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use taintsynth::bits::{mask, sign_extend, to_signed, truncate, BinOp, Relop};
use taintsynth::mutate::{deterministic, havoc, Stage};
use taintsynth::ir::parse_program;
use taintsynth::gen::{random_program, RandomProgramConfig};
use taintsynth::solver::{eval_formula, BvFormula, BvTerm, CheckResult, Solver};
use taintsynth::taint::TaintConfig;
use taintsynth::vm::{Limits, LoadedProgram, Vm};

fn width() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![1u32, 8, 16, 32, 64])
}

proptest! {
    #[test]
    fn relop_negation_is_complement(r in 0..10usize, a: u64, b: u64, w in width()) {
        let r = Relop::ALL[r];
        let (a, b) = (truncate(a, w), truncate(b, w));
        prop_assert_eq!(r.negate().eval(a, b, w), !r.eval(a, b, w));
        prop_assert_eq!(r.negate().negate(), r);
    }

    #[test]
    fn binops_stay_in_width(op in 0..13usize, a: u64, b: u64, w in width()) {
        let v = BinOp::ALL[op].eval(truncate(a, w), truncate(b, w), w);
        prop_assert_eq!(v & !mask(w), 0);
    }

    #[test]
    fn sign_extension_preserves_signed_value(v: u64, from in width(), to in width()) {
        prop_assume!(from <= to);
        let v = truncate(v, from);
        prop_assert_eq!(to_signed(sign_extend(v, from, to), to), to_signed(v, from));
    }

    #[test]
    fn printed_programs_parse_back(seed: u64, heavy: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RandomProgramConfig { memory_heavy: heavy, ..RandomProgramConfig::default() };
        let p = random_program(&mut rng, cfg);
        let back = parse_program(&p.to_string(), "printed.ir").unwrap();
        prop_assert_eq!(back.without_locations(), p.without_locations());
    }

    #[test]
    fn taint_tracking_is_transparent(seed: u64, input in prop::collection::vec(any::<u8>(), 0..24)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = LoadedProgram::new(random_program(&mut rng, RandomProgramConfig::default()));
        let mut vm = Vm::new(&p, Limits::default());
        let plain = vm.run_plain(&input, true);
        for cfg in [TaintConfig::default(), TaintConfig::unoptimized()] {
            let t = vm.run_tainted(&input, cfg).unwrap();
            prop_assert_eq!(&t.run, &plain);
        }
    }

    #[test]
    fn havoc_respects_length_bounds(seed: u64, input in prop::collection::vec(any::<u8>(), 0..64), max in 1usize..128) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let child = havoc(&input, &mut rng, max);
        prop_assert!(!child.is_empty());
        prop_assert!(child.len() <= max.max(input.len()));
    }

    #[test]
    fn deterministic_children_differ_from_parent(input in prop::collection::vec(any::<u8>(), 1..16)) {
        for stage in Stage::DETERMINISTIC {
            for child in deterministic(&input, stage) {
                prop_assert_ne!(&child, &input);
                prop_assert_eq!(child.len(), input.len());
            }
        }
    }

    #[test]
    fn solved_models_satisfy(op in 0..13usize, r in 0..10usize, k: u64, c: u64, w in prop::sample::select(vec![4u32, 8, 12])) {
        let x = BvTerm::var("x", w);
        let lhs = BvTerm::binary(BinOp::ALL[op], x, BvTerm::lit(truncate(k, w), w));
        let f = BvFormula::rel(Relop::ALL[r], lhs, BvTerm::lit(truncate(c, w), w));
        let mut s = Solver::new();
        s.assert_formula(f.clone()).unwrap();
        let found = (0..1u64 << w).any(|v| {
            let m = [("x".to_string(), v)].into_iter().collect();
            eval_formula(&f, &m)
        });
        match s.check() {
            CheckResult::Sat => {
                prop_assert!(found);
                prop_assert!(eval_formula(&f, s.model().unwrap()));
            }
            CheckResult::Unsat => prop_assert!(!found),
            CheckResult::Unknown => prop_assert!(false, "unknown on a tiny formula"),
        }
    }
}
