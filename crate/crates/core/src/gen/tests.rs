use super::*;
use crate::taint::TaintConfig;
use crate::vm::run_tainted;

#[test]
fn presets_generate_and_self_check() {
    for name in TargetSpec::PRESETS {
        let spec = TargetSpec::preset(name).unwrap();
        let t = generate_target(&spec).unwrap();
        assert_eq!(t.answers.len(), spec.bug_count(), "{name}");
        let p = t.loaded();
        assert_eq!(run_plain(&p, &t.seed(), Limits::default()).exit, Exit::Halted, "{name}");
    }
    assert!(TargetSpec::preset("nope").is_none());
}

#[test]
fn depth_one_eq_four_args_is_magic_compare() {
    let spec = TargetSpec::from_toml(
        "name = \"m\"\nseed = 1\n[[bugs]]\ndepth = 1\nops = [\"add\"]\narg_bytes = 4\nwidth = 32\n",
    )
    .unwrap();
    let t = generate_target(&spec).unwrap();
    assert!(t.source.contains("= in 0 4"), "{}", t.source);
    assert!(t.source.contains("= add "));
    assert!(t.source.contains("= cmp eq "));
    assert_eq!(t.program.functions[0].body.iter().filter(|i| i.inst.opcode() == "cmp").count(), 1);
}

#[test]
fn nesting_puts_guards_on_the_path() {
    let t = generate_target(&TargetSpec::preset("nested3").unwrap()).unwrap();
    let p = t.loaded();
    for a in &t.answers {
        assert_eq!(a.guards, 3);
        let r = run_plain(&p, &a.input, Limits::default());
        // Three guards and the bug predicate, all taken, on the bug's bytes.
        let tail: Vec<bool> = r.branch_log.iter().rev().take(4).map(|b| b.outcome).collect();
        assert_eq!(tail, vec![true; 4]);
        // Breaking any single byte of the bug region stops the crash.
        for &o in &a.offsets {
            let mut broken = a.input.clone();
            broken[o] ^= 0x01;
            assert_ne!(run_plain(&p, &broken, Limits::default()).exit, Exit::Crashed(a.bug));
        }
    }
}

#[test]
fn bad_specs_are_rejected() {
    for (text, frag) in [
        ("name = \"x\"\nseed = 1\nbugs = []\n", "at least one"),
        ("name = \"x\"\nseed = 1\n[[bugs]]\ndepth = 1\nops = [\"add\"]\narg_bytes = 4\nwidth = 12\n", "width"),
        ("name = \"x\"\nseed = 1\n[[bugs]]\ndepth = 1\nops = []\narg_bytes = 4\nwidth = 32\n", "ops"),
        ("name = \"x\"\nseed = 1\n[[bugs]]\ndepth = 0\nops = []\narg_bytes = 9\nwidth = 32\n", "arg_bytes"),
    ] {
        let err = TargetSpec::from_toml(text).unwrap_err().to_string();
        assert!(err.contains(frag), "{err}");
    }
    assert!(matches!(
        TargetSpec::from_toml("name = \"x\"\nseed = 1\n[[bugs]]\ndepth = 1\nops = [\"pow\"]\narg_bytes = 4\nwidth = 32\n"),
        Err(GenError::Toml(_))
    ));
}

#[test]
fn random_programs_parse_and_terminate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..300 {
        let cfg = RandomProgramConfig {
            memory_heavy: i % 3 == 0,
            ..RandomProgramConfig::default()
        };
        let p = LoadedProgram::new(random_program(&mut rng, cfg));
        let input: Vec<u8> = (0..rng.gen_range(0..10)).map(|_| rng.gen()).collect();
        let plain = run_plain(&p, &input, Limits::default());
        assert_ne!(plain.exit, Exit::LimitExceeded);
        let tainted = run_tainted(&p, &input, Limits::default()).unwrap();
        assert_eq!(plain, tainted.run);
    }
}

#[test]
fn memory_heavy_programs_benefit_from_optimizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = RandomProgramConfig {
        memory_heavy: true,
        statements: 30,
        ..RandomProgramConfig::default()
    };
    let p = LoadedProgram::new(random_program(&mut rng, cfg));
    let input: Vec<u8> = (0..8).collect();
    let mut vm = crate::vm::Vm::new(&p, Limits::default());
    let opt = vm.run_tainted(&input, TaintConfig::default()).unwrap();
    let raw = vm.run_tainted(&input, TaintConfig::unoptimized()).unwrap();
    assert_eq!(opt.run, raw.run);
    assert!(opt.union_table.len() < raw.union_table.len());
}
