use super::*;

pub(crate) const MAGIC: &str = "\
fn main {
  r0 = in 0 4          ; read input[0..4), little-endian, width 32
  r1 = const 0xdeadbeef 32
  r2 = cmp eq r0 r1 32
  br r2 @bug @done
bug:
  crash 1              ; bug id 1
done:
  halt
}
";

fn messages(err: IrError) -> Vec<String> {
    err.diagnostics().into_iter().map(|d| d.message).collect()
}

#[test]
fn minimal_program() {
    let p = parse_program("fn main {\n  halt\n}\n", "min.ir").unwrap();
    assert_eq!(p.functions.len(), 1);
    assert_eq!(p.functions[0].body.len(), 1);
    assert_eq!(p.name, "min");
    assert_eq!(p.memory_size, DEFAULT_MEMORY_SIZE);
}

#[test]
fn missing_label_is_reported() {
    let err = parse_program("fn main {\n  jmp @missing\n}\n", "t.ir").unwrap_err();
    let msgs = messages(err);
    assert!(msgs.iter().any(|m| m.contains("@missing")), "{msgs:?}");
}

#[test]
fn magic_compare_structure() {
    let p = parse_program(MAGIC, "t.ir").unwrap();
    let main = &p.functions[0];
    assert_eq!(main.body.len(), 6);
    let cmp = &main.body[2];
    match &cmp.inst {
        Inst::Cmp { relop, width, .. } => {
            assert_eq!(*relop, crate::bits::Relop::Eq);
            assert_eq!(*width, Width::W32);
        }
        other => panic!("expected cmp, got {other:?}"),
    }
    assert_eq!(cmp.loc, Location::new("t.ir", 4, 8));
    assert_eq!(main.labels["bug"], 4);
    assert_eq!(main.labels["done"], 5);
}

#[test]
fn unknown_relop() {
    let src = "fn main {\n  r0 = const 1 8\n  r1 = cmp xx r0 r0 8\n  halt\n}\n";
    let msgs = messages(parse_program(src, "t.ir").unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("unknown relop")), "{msgs:?}");
}

#[test]
fn width_contract() {
    let src = "fn main {\n  r0 = in 0 1\n  r1 = const 1 32\n  r2 = add r0 r1 32\n  halt\n}\n";
    let msgs = messages(parse_program(src, "t.ir").unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("width mismatch")), "{msgs:?}");

    let fixed = "fn main {\n  r0 = in 0 1\n  r3 = zext r0 8 32\n  r1 = const 1 32\n  r2 = add r3 r1 32\n  halt\n}\n";
    parse_program(fixed, "t.ir").unwrap();
}

#[test]
fn diagnostics_are_ordered_by_location() {
    let src = "fn main {\n  jmp @b\n  jmp @a\n}\nfn main {\n  halt\n}\n";
    let diags = parse_program(src, "t.ir").unwrap_err().diagnostics();
    let mut sorted = diags.clone();
    sorted.sort();
    assert_eq!(diags, sorted);
    assert!(diags.iter().any(|d| d.message.contains("duplicate function")));
}

#[test]
fn syntax_errors_carry_position() {
    match parse_program("fn main {\n  r0 = frob 1 2\n}\n", "s.ir") {
        Err(IrError::Syntax { loc, message }) => {
            assert_eq!((loc.line, loc.column), (2, 8));
            assert!(message.contains("frob"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn calls_switch_and_functions() {
    let src = "\
program demo
memory 1024
fn helper(r0:32, r1:8) -> 32 {
  r2 = zext r1 8 32
  r3 = add r0 r2 32
  ret r3
}
fn main {
  r0 = in 0 1
  switch r0 [ 1 -> @one, 0x41 -> @two ] @other
one:
  r1 = const 7 32
  r2 = call helper r1 r0
  store 16 r2 4
  halt
two:
  crash 2
other:
  call noop
  halt
}
fn noop() {
  ret
}
";
    let p = parse_program(src, "demo.ir").unwrap();
    assert_eq!(p.name, "demo");
    assert_eq!(p.memory_size, 1024);
    assert_eq!(p.function("helper").unwrap().params, vec![Width::W32, Width::W8]);
    assert_eq!(p.function("helper").unwrap().num_regs(), 4);

    let printed = p.to_string();
    let again = parse_program(&printed, "demo.ir").unwrap();
    assert_eq!(p.without_locations(), again.without_locations());
}

#[test]
fn call_arity_and_return_checks() {
    let src = "\
fn f(r0:8) -> 8 {
  ret r0
}
fn main {
  r0 = const 1 32
  r1 = call f r0
  call f
  halt
}
";
    let msgs = messages(parse_program(src, "t.ir").unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("expects 8-bit")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("passes 0 arguments")), "{msgs:?}");
}

#[test]
fn negative_immediates_round_trip() {
    let src = "fn main {\n  r0 = const -1 8\n  r1 = add r0 -2 8\n  halt\n}\n";
    let p = parse_program(src, "n.ir").unwrap();
    let again = parse_program(&p.to_string(), "n.ir").unwrap();
    assert_eq!(p.without_locations(), again.without_locations());
}

#[test]
fn must_end_with_terminator() {
    let msgs = messages(parse_program("fn main {\n  r0 = const 1 8\n}\n", "t.ir").unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("terminator")));
}
