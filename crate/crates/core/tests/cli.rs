use std::path::Path;
use std::process::{Command, Output};

const MAGIC: &str = "\
fn main {
  r0 = in 0 4
  r1 = cmp eq r0 0xdeadbeef 32
  br r1 @bug @done
bug:
  crash 1
done:
  halt
}
";

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taintsynth")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(dir: &Path) -> (String, String, String) {
    let prog = dir.join("magic.ir");
    let zero = dir.join("zero.bin");
    let answer = dir.join("answer.bin");
    std::fs::write(&prog, MAGIC).unwrap();
    std::fs::write(&zero, [0u8; 4]).unwrap();
    std::fs::write(&answer, [0xef, 0xbe, 0xad, 0xde]).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    (s(&prog), s(&zero), s(&answer))
}

#[test]
fn run_prints_exit() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, zero, answer) = setup(dir.path());
    let o = cli(&["run", &prog, "--input", &answer]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("crashed(1)"), "{}", stdout(&o));
    let o = cli(&["run", &prog, "--input", &zero]);
    assert!(stdout(&o).contains("halted"), "{}", stdout(&o));
}

#[test]
fn taint_lists_the_branch() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, zero, _) = setup(dir.path());
    let o = cli(&["taint", &prog, "--input", &zero]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("magic.ir:3"), "{out}");
}

#[test]
fn flip_prints_verified_input() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, zero, _) = setup(dir.path());
    let o = cli(&["taint", &prog, "--input", &zero]);
    let id = stdout(&o)
        .split_whitespace()
        .find(|w| w.starts_with("0x"))
        .expect("branch id in taint output")
        .to_string();
    let o = cli(&["flip", &prog, "--seed", &zero, "--branch", &id]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("efbeadde"), "{out}");
    assert!(out.contains("verified"), "{out}");
}

#[test]
fn gen_writes_target_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = cli(&["gen", "--spec", "magic4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["zero.bin", "answers.json", "bug_1.bin"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let answer = out.join("bug_1.bin");
    let prog = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "ir"))
        .unwrap();
    let o = cli(&["run", prog.to_str().unwrap(), "--input", answer.to_str().unwrap()]);
    assert!(stdout(&o).contains("crashed(1)"), "{}", stdout(&o));
}

#[test]
fn fuzz_finds_the_magic_value() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, _, _) = setup(dir.path());
    let o = cli(&["fuzz", &prog, "--budget", "2000x", "--synth", "on"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("bug 1"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (prog, zero, _) = setup(dir.path());
    assert_eq!(cli(&["flip", &prog, "--seed", &zero]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("nope.ir");
    assert_eq!(cli(&["run", missing.to_str().unwrap(), "--input", &zero]).status.code(), Some(2));
    // Unknown branch ids are a usage error.
    assert_eq!(cli(&["flip", &prog, "--seed", &zero, "--branch", "0x1"]).status.code(), Some(1));

    // No input makes an unsigned value less than zero.
    let never = dir.path().join("never.ir");
    std::fs::write(&never, MAGIC.replace("cmp eq r0 0xdeadbeef", "cmp ult r0 0")).unwrap();
    let never = never.to_str().unwrap();
    let o = cli(&["taint", never, "--input", &zero]);
    let id = stdout(&o).split_whitespace().find(|w| w.starts_with("0x")).unwrap().to_string();
    let o = cli(&["flip", never, "--seed", &zero, "--branch", &id]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}
