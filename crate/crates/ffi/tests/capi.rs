use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use taintsynth_ffi::*;

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

fn parse(src: &str) -> *mut TsProgram {
    let src = CString::new(src).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ts_program_parse(src.as_ptr(), ptr::null(), &mut p) }, TsStatus::Ok);
    assert!(!p.is_null());
    p
}

fn take(b: *mut TsBytes) -> Vec<u8> {
    unsafe {
        let v = std::slice::from_raw_parts(ts_bytes_data(b), ts_bytes_len(b)).to_vec();
        ts_bytes_free(b);
        v
    }
}

#[test]
fn run_reports_crash_id() {
    let p = parse(MAGIC);
    let mut exit = TsExit { kind: TsExitKind::Halted, crash_id: 0 };
    let input = [0xef, 0xbe, 0xad, 0xde];
    assert_eq!(unsafe { ts_run(p, input.as_ptr(), 4, &mut exit) }, TsStatus::Ok);
    assert_eq!(exit, TsExit { kind: TsExitKind::Crashed, crash_id: 1 });
    assert_eq!(unsafe { ts_run(p, ptr::null(), 0, &mut exit) }, TsStatus::Ok);
    assert_eq!(exit.kind, TsExitKind::Halted);
    unsafe { ts_program_free(p) };
}

#[test]
fn flip_magic_compare() {
    let p = parse(MAGIC);
    let seed = [0u8; 4];
    let mut count = 0;
    assert_eq!(
        unsafe { ts_tainted_branches(p, seed.as_ptr(), 4, ptr::null_mut(), 0, &mut count) },
        TsStatus::Ok
    );
    assert_eq!(count, 1);
    let mut id = 0u32;
    assert_eq!(unsafe { ts_tainted_branches(p, seed.as_ptr(), 4, &mut id, 1, &mut count) }, TsStatus::Ok);

    let mut status = TsFlipStatus::Skipped;
    let mut out = ptr::null_mut();
    let opts = ts_flip_options_default();
    assert_eq!(opts.max_iter, 10);
    assert_eq!(
        unsafe { ts_flip(p, seed.as_ptr(), 4, id, &opts, &mut status, &mut out) },
        TsStatus::Ok
    );
    assert_eq!(status, TsFlipStatus::Flipped);
    assert_eq!(take(out), vec![0xef, 0xbe, 0xad, 0xde]);

    assert_eq!(
        unsafe { ts_flip(p, seed.as_ptr(), 4, id ^ 1, ptr::null(), &mut status, &mut out) },
        TsStatus::NotFound
    );
    assert!(out.is_null());
    unsafe { ts_program_free(p) };
}

#[test]
fn errors_carry_messages() {
    let bad = CString::new("fn main {\n  r0 = frob 1\n}\n").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ts_program_parse(bad.as_ptr(), ptr::null(), &mut p) }, TsStatus::ParseError);
    assert!(p.is_null());
    let msg = unsafe { CStr::from_ptr(ts_last_error()) }.to_str().unwrap();
    assert!(!msg.is_empty());

    assert_eq!(unsafe { ts_program_parse(ptr::null(), ptr::null(), &mut p) }, TsStatus::NullPointer);
    let mut exit = TsExit { kind: TsExitKind::Halted, crash_id: 0 };
    assert_eq!(unsafe { ts_run(ptr::null(), ptr::null(), 0, &mut exit) }, TsStatus::NullPointer);
    let good = parse(MAGIC);
    assert_eq!(unsafe { ts_run(good, ptr::null(), 3, &mut exit) }, TsStatus::NullPointer);
    assert_eq!(unsafe { ts_run(good, ptr::null(), 0, &mut exit) }, TsStatus::Ok);
    assert!(ts_last_error().is_null());
    unsafe { ts_program_free(good) };
}

#[test]
fn target_answers_crash_with_their_ids() {
    let name = CString::new("magic4").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ts_target_generate(name.as_ptr(), &mut t) }, TsStatus::Ok);
    let n = unsafe { ts_target_bug_count(t) };
    assert_eq!(n, 4);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ts_target_program(t, &mut p) }, TsStatus::Ok);
    for i in 0..n {
        let (mut bug, mut input) = (0u32, ptr::null_mut());
        assert_eq!(unsafe { ts_target_answer(t, i, &mut bug, &mut input) }, TsStatus::Ok);
        let input = take(input);
        let mut exit = TsExit { kind: TsExitKind::Halted, crash_id: 0 };
        assert_eq!(unsafe { ts_run(p, input.as_ptr(), input.len(), &mut exit) }, TsStatus::Ok);
        assert_eq!(exit, TsExit { kind: TsExitKind::Crashed, crash_id: bug });
    }
    let (mut bug, mut input) = (0u32, ptr::null_mut());
    assert_eq!(unsafe { ts_target_answer(t, n, &mut bug, &mut input) }, TsStatus::OutOfRange);

    let mut src = ptr::null_mut();
    assert_eq!(unsafe { ts_target_source(t, &mut src) }, TsStatus::Ok);
    let src = String::from_utf8(take(src)).unwrap();
    assert!(src.contains("crash 4"));
    unsafe {
        ts_program_free(p);
        ts_target_free(t);
    }
}

#[test]
fn fuzz_returns_json_report() {
    let p = parse(MAGIC);
    let mut out = ptr::null_mut();
    let seed = [0u8; 4];
    assert_eq!(
        unsafe { ts_fuzz(p, seed.as_ptr(), 4, 500, 1, true, true, &mut out) },
        TsStatus::Ok
    );
    let report: serde_json::Value = serde_json::from_slice(&take(out)).unwrap();
    assert_eq!(report["bugs"][0]["id"], 1);
    unsafe { ts_program_free(p) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/taintsynth.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ts_program_parse",
        "ts_run",
        "ts_flip",
        "ts_fuzz",
        "ts_target_generate",
        "ts_bytes_free",
        "ts_last_error",
        "typedef struct TsProgram TsProgram",
        "TS_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check the header with a C compiler when one is installed.
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("use.c");
    std::fs::write(
        &c,
        "#include \"taintsynth.h\"\nint main(void) { TsProgram *p = 0; TsExit e; \
         return ts_run(p, 0, 0, &e) == TS_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&c)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler; skipped syntax check"),
    }
}
