use scenario_mining_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sm_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn synth(kind: SmSynthKind, seed: u64) -> *mut SmScenario {
    let mut s = ptr::null_mut();
    assert_eq!(sm_scenario_synth(kind, seed, &mut s), SmStatus::Ok);
    s
}

#[test]
fn fit_score_and_release() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let set = CString::new("interaction.gate_distance=40").unwrap();
        let sets = [set.as_ptr()];
        assert_eq!(sm_config_new(ptr::null(), sets.as_ptr(), 1, &mut cfg), SmStatus::Ok);

        let mut corpus = ptr::null_mut();
        assert_eq!(sm_corpus_new(&mut corpus), SmStatus::Ok);
        for seed in 0..30 {
            let s = synth(SmSynthKind::RandomMix, seed);
            assert_eq!(sm_corpus_push(corpus, s), SmStatus::Ok);
            sm_scenario_free(s);
        }
        let mut n = 0;
        assert_eq!(sm_corpus_len(corpus, &mut n), SmStatus::Ok);
        assert_eq!(n, 30);

        let mut engine = ptr::null_mut();
        assert_eq!(sm_engine_fit(corpus, cfg, &mut engine), SmStatus::Ok);
        assert_eq!(sm_engine_scene_count(engine, &mut n), SmStatus::Ok);
        assert_eq!(n, 30);

        // Rescoring a corpus member reproduces its corpus score.
        let s = synth(SmSynthKind::RandomMix, 4);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(sm_engine_scene_value(engine, 4, &mut a), SmStatus::Ok);
        assert_eq!(sm_engine_score(engine, s, &mut b), SmStatus::Ok);
        assert_eq!(a, b);
        assert!(a.is_finite() && a >= 0.0);

        assert_eq!(sm_engine_scene_value(engine, 30, &mut a), SmStatus::OutOfRange);
        assert!(last_error().contains("out of range"));

        let mut jsonl = ptr::null_mut();
        assert_eq!(sm_engine_scores_jsonl(engine, &mut jsonl), SmStatus::Ok);
        assert_eq!(CStr::from_ptr(jsonl).to_str().unwrap().lines().count(), 30);
        sm_string_free(jsonl);

        sm_scenario_free(s);
        sm_engine_free(engine);
        sm_corpus_free(corpus);
        sm_config_free(cfg);
    }
}

#[test]
fn scenario_round_trip_and_errors() {
    unsafe {
        let s = synth(SmSynthKind::CutIn, 2);
        let mut n = 9;
        assert_eq!(sm_scenario_violation_count(s, &mut n), SmStatus::Ok);
        assert_eq!(n, 0);
        assert_eq!(sm_scenario_agent_count(s, &mut n), SmStatus::Ok);
        assert_eq!(n, 3);
        assert!(!CStr::from_ptr(sm_scenario_id(s)).to_bytes().is_empty());
        sm_scenario_free(s);

        let mut out = ptr::null_mut();
        let bad = CString::new("{\"schema_version\": 1}").unwrap();
        assert_eq!(sm_scenario_parse(bad.as_ptr(), &mut out), SmStatus::Parse);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(sm_scenario_parse(ptr::null(), &mut out), SmStatus::NullArgument);
        let latin1 = [0xe9u8, 0];
        assert_eq!(sm_scenario_parse(latin1.as_ptr().cast(), &mut out), SmStatus::InvalidUtf8);

        let mut cfg = ptr::null_mut();
        let toml = CString::new("[scoring]\nepsilon = -1.0\n").unwrap();
        assert_eq!(sm_config_new(toml.as_ptr(), ptr::null(), 0, &mut cfg), SmStatus::Config);
        assert!(last_error().contains("epsilon"));
        assert_eq!(agent_count_of_null(), SmStatus::NullArgument);

        // Freeing null is a no-op.
        sm_scenario_free(ptr::null_mut());
        sm_engine_free(ptr::null_mut());
        sm_string_free(ptr::null_mut());
    }
}

unsafe fn agent_count_of_null() -> SmStatus {
    let mut n = 0;
    sm_scenario_agent_count(ptr::null(), &mut n)
}

#[test]
fn fitting_an_empty_corpus_reports_compute_error() {
    unsafe {
        let (mut cfg, mut corpus, mut engine) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(sm_config_new(ptr::null(), ptr::null(), 0, &mut cfg), SmStatus::Ok);
        assert_eq!(sm_corpus_new(&mut corpus), SmStatus::Ok);
        assert_eq!(sm_engine_fit(corpus, cfg, &mut engine), SmStatus::Compute);
        assert!(engine.is_null());
        sm_corpus_free(corpus);
        sm_config_free(cfg);
    }
}
