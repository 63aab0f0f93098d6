//! C interface to the scenario mining engine.
//!
//! Objects cross the boundary as opaque handles created by `sm_*_new`,
//! `sm_*_parse` or `sm_*_fit` and released with the matching `sm_*_free`.
//! Every fallible call returns an [`SmStatus`]; on failure a message is
//! available from [`sm_last_error`] until the next failing call on the same
//! thread.

use scenario_mining::anomaly::PrimitiveModel;
use scenario_mining::config::PipelineConfig;
use scenario_mining::pipeline::{run_corpus, score_scene, write_scores, ScoreRecord};
use scenario_mining::scenario::{parse_scenario, validate_scenario, Scenario};
use scenario_mining::scoring::FeatureNormalizer;
use scenario_mining::synth::{gen_scenario, SynthKind, SynthParams};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Compute = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmSynthKind {
    LeaderFollower = 0,
    Crossing = 1,
    CutIn = 2,
    StopAndGo = 3,
    RandomMix = 4,
}

impl From<SmSynthKind> for SynthKind {
    fn from(k: SmSynthKind) -> Self {
        match k {
            SmSynthKind::LeaderFollower => SynthKind::LeaderFollower,
            SmSynthKind::Crossing => SynthKind::Crossing,
            SmSynthKind::CutIn => SynthKind::CutIn,
            SmSynthKind::StopAndGo => SynthKind::StopAndGo,
            SmSynthKind::RandomMix => SynthKind::RandomMix,
        }
    }
}

/// Pipeline configuration.
pub struct SmConfig {
    inner: PipelineConfig,
}

/// One parsed scenario.
pub struct SmScenario {
    inner: Scenario,
    id: CString,
}

/// An ordered set of scenarios to fit and score together.
pub struct SmCorpus {
    inner: Vec<Scenario>,
}

/// Fitted anomaly model and normalizer plus the scores of the corpus they
/// were fitted on.
pub struct SmEngine {
    config: PipelineConfig,
    model: PrimitiveModel,
    normalizer: FeatureNormalizer,
    scores: Vec<ScoreRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SmStatus, String);

fn fail<T>(status: SmStatus, msg: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        fail(SmStatus::Panic, msg)
    });
    match outcome {
        Ok(()) => SmStatus::Ok,
        Err(Failure(status, msg)) => {
            let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(SmStatus::NullArgument, "null string argument");
    }
    CStr::from_ptr(p).to_str().or_else(|e| fail(SmStatus::InvalidUtf8, e))
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(SmStatus::NullArgument, "null handle"), Ok)
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(SmStatus::NullArgument, "null output pointer");
    }
    out.write(value);
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the most recent failure on this thread (empty if none). The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defaults overlaid with `toml` (may be null) and then each `section.key=value`
/// entry of `overrides` (may be null when `n_overrides` is 0).
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_config_new(
    toml: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut SmConfig,
) -> SmStatus {
    guard(|| {
        let base = if toml.is_null() { "" } else { text(toml)? };
        let mut sets = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return fail(SmStatus::NullArgument, "null overrides");
            }
            for k in 0..n_overrides {
                sets.push(text(*overrides.add(k))?.to_string());
            }
        }
        let inner = PipelineConfig::from_toml_str(base, &sets).or_else(|e| fail(SmStatus::Config, e))?;
        put(out, Box::into_raw(Box::new(SmConfig { inner })))
    })
}

/// # Safety
/// `cfg` must be null or a live handle from [`sm_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sm_config_free(cfg: *mut SmConfig) {
    release(cfg)
}

/// Parses one scenario document (JSON).
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_parse(json: *const c_char, out: *mut *mut SmScenario) -> SmStatus {
    guard(|| {
        let parsed = parse_scenario(text(json)?).or_else(|e| fail(SmStatus::Parse, e))?;
        put(out, wrap(parsed.scenario))
    })
}

/// Deterministic synthetic scenario of the given kind.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_synth(kind: SmSynthKind, seed: u64, out: *mut *mut SmScenario) -> SmStatus {
    guard(|| put(out, wrap(gen_scenario(&SynthParams::new(kind.into(), seed)))))
}

fn wrap(inner: Scenario) -> *mut SmScenario {
    let id = CString::new(inner.scenario_id.replace('\0', " ")).unwrap_or_default();
    Box::into_raw(Box::new(SmScenario { inner, id }))
}

/// The scenario id, owned by the handle.
///
/// # Safety
/// `s` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_id(s: *const SmScenario) -> *const c_char {
    s.as_ref().map_or(ptr::null(), |s| s.id.as_ptr())
}

/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_agent_count(s: *const SmScenario, out: *mut usize) -> SmStatus {
    guard(|| put(out, get(s)?.inner.agents.len()))
}

/// Number of structural problems found by validation (0 for a clean scene).
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_violation_count(s: *const SmScenario, out: *mut usize) -> SmStatus {
    guard(|| put(out, validate_scenario(&get(s)?.inner).violations.len()))
}

/// # Safety
/// `s` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_free(s: *mut SmScenario) {
    release(s)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_corpus_new(out: *mut *mut SmCorpus) -> SmStatus {
    guard(|| put(out, Box::into_raw(Box::new(SmCorpus { inner: Vec::new() }))))
}

/// Appends a copy of `s`; the caller keeps ownership of `s`.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn sm_corpus_push(c: *mut SmCorpus, s: *const SmScenario) -> SmStatus {
    guard(|| {
        let scenario = get(s)?.inner.clone();
        match c.as_mut() {
            Some(c) => c.inner.push(scenario),
            None => return fail(SmStatus::NullArgument, "null handle"),
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be a live corpus handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_corpus_len(c: *const SmCorpus, out: *mut usize) -> SmStatus {
    guard(|| put(out, get(c)?.inner.len()))
}

/// # Safety
/// `c` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn sm_corpus_free(c: *mut SmCorpus) {
    release(c)
}

/// Fits the anomaly model and normalizer on `corpus` and scores it.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_fit(c: *const SmCorpus, cfg: *const SmConfig, out: *mut *mut SmEngine) -> SmStatus {
    guard(|| {
        let (c, cfg) = (get(c)?, get(cfg)?);
        let run = run_corpus(&c.inner, &cfg.inner).or_else(|e| fail(SmStatus::Compute, e))?;
        let engine = SmEngine {
            config: cfg.inner.clone(),
            model: run.model,
            normalizer: run.normalizer,
            scores: run.scores,
        };
        put(out, Box::into_raw(Box::new(engine)))
    })
}

/// Number of scored scenes from the fitting corpus.
///
/// # Safety
/// `e` must be a live engine handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_scene_count(e: *const SmEngine, out: *mut usize) -> SmStatus {
    guard(|| put(out, get(e)?.scores.len()))
}

/// Scene score of the `index`-th corpus scenario, in insertion order.
///
/// # Safety
/// `e` must be a live engine handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_scene_value(e: *const SmEngine, index: usize, out: *mut f64) -> SmStatus {
    guard(|| match get(e)?.scores.get(index) {
        Some(r) => put(out, r.value),
        None => fail(SmStatus::OutOfRange, format!("scene index {index} out of range")),
    })
}

/// Scores a further scenario against the fitted model and normalizer.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_score(e: *const SmEngine, s: *const SmScenario, out: *mut f64) -> SmStatus {
    guard(|| {
        let e = get(e)?;
        let r = score_scene(&get(s)?.inner, Some(&e.model), &e.normalizer, &e.config).or_else(|err| fail(SmStatus::Compute, err))?;
        put(out, r.value)
    })
}

/// Corpus scores as JSON lines; free the result with [`sm_string_free`].
///
/// # Safety
/// `e` must be a live engine handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_scores_jsonl(e: *const SmEngine, out: *mut *mut c_char) -> SmStatus {
    guard(|| {
        let s = CString::new(write_scores(&get(e)?.scores)).or_else(|err| fail(SmStatus::Compute, err))?;
        put(out, s.into_raw())
    })
}

/// # Safety
/// `e` must be null or a live engine handle.
#[no_mangle]
pub unsafe extern "C" fn sm_engine_free(e: *mut SmEngine) {
    release(e)
}
