//! C ABI over the taintsynth core.
//!
//! Every object crosses the boundary as an opaque handle created and freed
//! by this library. Functions return a [`TsStatus`]; on failure a message is
//! kept per thread and can be read with [`ts_last_error`]. Panics are caught
//! at the boundary and reported as [`TsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use taintsynth::branch::BranchId;
use taintsynth::flip::{FlipConfig, FlipStatus, TraceContext};
use taintsynth::fuzz::{run_campaign, Budget, CampaignConfig};
use taintsynth::gen::{generate_target, Target, TargetSpec};
use taintsynth::ir::parse_program;
use taintsynth::taint::TaintConfig;
use taintsynth::vm::{run_plain, Exit, Limits, LoadedProgram, Vm};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    TargetError = 4,
    NotFound = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// How a plain run ended.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsExitKind {
    Halted = 0,
    Crashed = 1,
    LimitExceeded = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TsExit {
    pub kind: TsExitKind,
    /// Bug id when `kind` is `Crashed`, otherwise 0.
    pub crash_id: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsFlipStatus {
    Flipped = 0,
    Infeasible = 1,
    SynthesisFailed = 2,
    BudgetExhausted = 3,
    Skipped = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TsFlipOptions {
    pub max_iter: u32,
    pub multi_branch: bool,
    pub rng_seed: u64,
}

/// A parsed program ready to run.
pub struct TsProgram(LoadedProgram);

/// A generated benchmark target with its answer key.
pub struct TsTarget(Target);

/// An owned byte buffer.
pub struct TsBytes(Vec<u8>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: TsStatus, msg: impl Into<String>) -> TsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> TsStatus) -> TsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(TsStatus::Panic, "panic inside taintsynth"))
}

/// # Safety
/// `data` must point to `len` readable bytes, or be null with `len == 0`.
unsafe fn bytes<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if data.is_null() {
        return (len == 0).then_some(&[]);
    }
    Some(std::slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, TsStatus> {
    if s.is_null() {
        return Err(fail(TsStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(TsStatus::InvalidUtf8, e.to_string()))
}

fn put<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before doing any work.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parse program text. `name` is used in diagnostics and may be null.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_program_parse(
    source: *const c_char,
    name: *const c_char,
    out: *mut *mut TsProgram,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TsStatus::NullPointer, "null out pointer");
        }
        let src = match text(source) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let name = if name.is_null() {
            "<ffi>"
        } else {
            match text(name) {
                Ok(s) => s,
                Err(s) => return s,
            }
        };
        match parse_program(src, name) {
            Ok(p) => {
                put(out, TsProgram(LoadedProgram::new(p)));
                TsStatus::Ok
            }
            Err(e) => {
                let diags: Vec<String> = e.diagnostics().iter().map(ToString::to_string).collect();
                fail(TsStatus::ParseError, if diags.is_empty() { e.to_string() } else { diags.join("\n") })
            }
        }
    })
}

/// # Safety
/// `program` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_program_free(program: *mut TsProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Run `program` once in plain mode.
///
/// # Safety
/// `program` must be a live handle, `input` must point to `len` bytes and
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_run(
    program: *const TsProgram,
    input: *const u8,
    len: usize,
    out: *mut TsExit,
) -> TsStatus {
    guard(|| {
        let (Some(p), false) = (program.as_ref(), out.is_null()) else {
            return fail(TsStatus::NullPointer, "null program or out pointer");
        };
        let Some(input) = bytes(input, len) else {
            return fail(TsStatus::NullPointer, "null input with nonzero length");
        };
        let r = run_plain(&p.0, input, Limits::default());
        *out = match r.exit {
            Exit::Halted => TsExit { kind: TsExitKind::Halted, crash_id: 0 },
            Exit::Crashed(id) => TsExit { kind: TsExitKind::Crashed, crash_id: id },
            Exit::LimitExceeded => TsExit { kind: TsExitKind::LimitExceeded, crash_id: 0 },
        };
        TsStatus::Ok
    })
}

/// Ids of the tainted branches observed when running `seed`, in first
/// occurrence order. Writes up to `cap` ids to `ids` and the total count to
/// `count`; pass `cap == 0` to query the count.
///
/// # Safety
/// `ids` must have room for `cap` values; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_tainted_branches(
    program: *const TsProgram,
    seed: *const u8,
    len: usize,
    ids: *mut u32,
    cap: usize,
    count: *mut usize,
) -> TsStatus {
    guard(|| {
        let (Some(p), false) = (program.as_ref(), count.is_null()) else {
            return fail(TsStatus::NullPointer, "null program or count pointer");
        };
        let Some(seed) = bytes(seed, len) else {
            return fail(TsStatus::NullPointer, "null seed with nonzero length");
        };
        let mut vm = Vm::new(&p.0, Limits::default());
        let r = match vm.run_tainted(seed, TaintConfig::default()) {
            Ok(r) => r,
            Err(e) => return fail(TsStatus::TargetError, e.to_string()),
        };
        let tc = TraceContext::from_taint_run(&r, seed);
        *count = tc.len();
        if cap > 0 {
            if ids.is_null() {
                return fail(TsStatus::NullPointer, "null ids with nonzero capacity");
            }
            for (i, b) in tc.branches.iter().take(cap).enumerate() {
                *ids.add(i) = b.record.id.0;
            }
        }
        TsStatus::Ok
    })
}

/// Default flip options.
#[no_mangle]
pub extern "C" fn ts_flip_options_default() -> TsFlipOptions {
    let d = FlipConfig::default();
    TsFlipOptions {
        max_iter: d.max_iter,
        multi_branch: d.multi_branch,
        rng_seed: d.seed,
    }
}

/// Try to flip `branch` starting from `seed`. On `TS_FLIP_STATUS_FLIPPED`
/// the verified input is stored in `input_out`; otherwise it is set to null.
/// `options` may be null for defaults.
///
/// # Safety
/// Pointers must be valid; `seed` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_flip(
    program: *const TsProgram,
    seed: *const u8,
    len: usize,
    branch: u32,
    options: *const TsFlipOptions,
    status_out: *mut TsFlipStatus,
    input_out: *mut *mut TsBytes,
) -> TsStatus {
    guard(|| {
        let (Some(p), false, false) = (program.as_ref(), status_out.is_null(), input_out.is_null()) else {
            return fail(TsStatus::NullPointer, "null program or out pointer");
        };
        *input_out = ptr::null_mut();
        let Some(seed) = bytes(seed, len) else {
            return fail(TsStatus::NullPointer, "null seed with nonzero length");
        };
        let opts = options.as_ref().copied().unwrap_or_else(|| ts_flip_options_default());
        let cfg = FlipConfig {
            max_iter: opts.max_iter,
            multi_branch: opts.multi_branch,
            seed: opts.rng_seed,
            ..FlipConfig::default()
        };
        let mut vm = Vm::new(&p.0, Limits::default());
        let r = match vm.run_tainted(seed, TaintConfig::default()) {
            Ok(r) => r,
            Err(e) => return fail(TsStatus::TargetError, e.to_string()),
        };
        let mut tc = TraceContext::from_taint_run(&r, seed);
        let Some(o) = tc.flip_by_id(BranchId(branch), &mut vm, &cfg) else {
            return fail(TsStatus::NotFound, format!("branch {} not tainted on this seed", BranchId(branch)));
        };
        *status_out = match o.status {
            FlipStatus::Flipped => TsFlipStatus::Flipped,
            FlipStatus::Infeasible => TsFlipStatus::Infeasible,
            FlipStatus::SynthesisFailed => TsFlipStatus::SynthesisFailed,
            FlipStatus::BudgetExhausted => TsFlipStatus::BudgetExhausted,
            FlipStatus::Skipped => TsFlipStatus::Skipped,
        };
        if let Some(input) = o.input {
            put(input_out, TsBytes(input));
        }
        TsStatus::Ok
    })
}

/// Run a campaign for `execs` executions and return its report as JSON.
///
/// # Safety
/// Pointers must be valid; `seed` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_fuzz(
    program: *const TsProgram,
    seed: *const u8,
    len: usize,
    execs: u64,
    rng_seed: u64,
    synth: bool,
    multi_branch: bool,
    report_out: *mut *mut TsBytes,
) -> TsStatus {
    guard(|| {
        let (Some(p), false) = (program.as_ref(), report_out.is_null()) else {
            return fail(TsStatus::NullPointer, "null program or out pointer");
        };
        let Some(seed) = bytes(seed, len) else {
            return fail(TsStatus::NullPointer, "null seed with nonzero length");
        };
        let mut cfg = CampaignConfig {
            budget: Budget::Execs(execs),
            rng_seed,
            synth,
            ..CampaignConfig::default()
        };
        cfg.flip.multi_branch = multi_branch;
        match run_campaign(&p.0, &[seed.to_vec()], cfg) {
            Ok(r) => {
                put(report_out, TsBytes(serde_json::to_vec(&r).expect("report serializes")));
                TsStatus::Ok
            }
            Err(e) => fail(TsStatus::TargetError, e.to_string()),
        }
    })
}

/// Generate a target from a bundled spec name or spec text.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_target_generate(spec: *const c_char, out: *mut *mut TsTarget) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TsStatus::NullPointer, "null out pointer");
        }
        let spec = match text(spec) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let spec = match TargetSpec::preset(spec) {
            Some(s) => s,
            None => match TargetSpec::from_toml(spec) {
                Ok(s) => s,
                Err(e) => return fail(TsStatus::ParseError, e.to_string()),
            },
        };
        match generate_target(&spec) {
            Ok(t) => {
                put(out, TsTarget(t));
                TsStatus::Ok
            }
            Err(e) => fail(TsStatus::TargetError, e.to_string()),
        }
    })
}

/// # Safety
/// `target` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_target_free(target: *mut TsTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Number of injected bugs, or 0 for a null handle.
///
/// # Safety
/// `target` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_target_bug_count(target: *const TsTarget) -> usize {
    target.as_ref().map_or(0, |t| t.0.answers.len())
}

/// A new program handle for the target.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_target_program(target: *const TsTarget, out: *mut *mut TsProgram) -> TsStatus {
    guard(|| {
        let (Some(t), false) = (target.as_ref(), out.is_null()) else {
            return fail(TsStatus::NullPointer, "null target or out pointer");
        };
        put(out, TsProgram(t.0.loaded()));
        TsStatus::Ok
    })
}

/// The target's program text, without a trailing NUL.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_target_source(target: *const TsTarget, out: *mut *mut TsBytes) -> TsStatus {
    guard(|| {
        let (Some(t), false) = (target.as_ref(), out.is_null()) else {
            return fail(TsStatus::NullPointer, "null target or out pointer");
        };
        put(out, TsBytes(t.0.source.clone().into_bytes()));
        TsStatus::Ok
    })
}

/// The answer-key input for the `index`-th bug, and that bug's id.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_target_answer(
    target: *const TsTarget,
    index: usize,
    bug_out: *mut u32,
    input_out: *mut *mut TsBytes,
) -> TsStatus {
    guard(|| {
        let (Some(t), false, false) = (target.as_ref(), bug_out.is_null(), input_out.is_null()) else {
            return fail(TsStatus::NullPointer, "null target or out pointer");
        };
        let Some(a) = t.0.answers.get(index) else {
            return fail(TsStatus::OutOfRange, format!("answer {index} of {}", t.0.answers.len()));
        };
        *bug_out = a.bug;
        put(input_out, TsBytes(a.input.clone()));
        TsStatus::Ok
    })
}

/// # Safety
/// `b` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_bytes_len(b: *const TsBytes) -> usize {
    b.as_ref().map_or(0, |b| b.0.len())
}

/// Pointer to the buffer contents, valid until `ts_bytes_free`.
///
/// # Safety
/// `b` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_bytes_data(b: *const TsBytes) -> *const u8 {
    b.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `b` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_bytes_free(b: *mut TsBytes) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}
