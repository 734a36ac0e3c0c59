//! Exercise the C ABI exactly as a foreign caller would: raw pointers,
//! status codes, and caller-provided buffers.

use mixflow_ffi::*;
use std::ffi::{c_char, CStr};
use std::ptr;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { mixflow_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n <= buf.len());
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_a_static_semver_string() {
    let v = unsafe { CStr::from_ptr(mixflow_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn full_run_round_trip_through_the_abi() {
    let sc = mixflow_scenario_default();
    assert!(!sc.is_null());
    unsafe {
        assert_eq!(
            mixflow_scenario_set_horizon(sc, 120.0, 300.0),
            MixflowStatus::Ok
        );
        assert_eq!(
            mixflow_scenario_set_shares(sc, 0.5, 0.2, 0.2, 0.1),
            MixflowStatus::Ok
        );

        let mut res: *mut MixflowRunResult = ptr::null_mut();
        assert_eq!(
            mixflow_run(sc, 1, &mut res),
            MixflowStatus::Ok,
            "{}",
            last_error()
        );
        assert!(!res.is_null());

        let groups = mixflow_result_group_count(res);
        assert_eq!(groups, 9, "default testbed has nine lane groups");

        let mut name = [0 as c_char; 64];
        assert_eq!(
            mixflow_result_group_id(res, 0, name.as_mut_ptr(), name.len()),
            MixflowStatus::Ok
        );
        let id = CStr::from_ptr(name.as_ptr()).to_str().unwrap();
        assert!(id.starts_with("eb_"), "first group is eastbound, got {id}");

        // Every group answers either with a positive headway or NoValue.
        let mut h = 0.0;
        for i in 0..groups {
            match mixflow_result_group_headway(res, i, &mut h) {
                MixflowStatus::Ok => assert!(h > 0.0, "group {i} headway {h}"),
                MixflowStatus::NoValue => {}
                other => panic!("group {i}: unexpected status {other:?}: {}", last_error()),
            }
        }

        let mut thr = 0.0;
        assert_eq!(
            mixflow_result_intersection_throughput(res, &mut thr),
            MixflowStatus::Ok
        );
        assert!(thr > 500.0, "intersection moved only {thr} veh/h");

        mixflow_result_free(res);
        mixflow_scenario_free(sc);
    }
}

#[test]
fn runs_are_reproducible_through_the_abi() {
    unsafe {
        let sc = mixflow_scenario_default();
        assert_eq!(
            mixflow_scenario_set_horizon(sc, 60.0, 240.0),
            MixflowStatus::Ok
        );

        let headways = |seed: u64| -> Vec<(usize, Option<f64>)> {
            let mut res: *mut MixflowRunResult = ptr::null_mut();
            assert_eq!(mixflow_run(sc, seed, &mut res), MixflowStatus::Ok);
            let out = (0..mixflow_result_group_count(res))
                .map(|i| {
                    let mut h = 0.0;
                    match mixflow_result_group_headway(res, i, &mut h) {
                        MixflowStatus::Ok => (i, Some(h)),
                        _ => (i, None),
                    }
                })
                .collect();
            mixflow_result_free(res);
            out
        };
        assert_eq!(headways(5), headways(5));
        mixflow_scenario_free(sc);
    }
}

#[test]
fn bad_arguments_come_back_as_status_codes() {
    unsafe {
        // Null handles.
        let mut res: *mut MixflowRunResult = ptr::null_mut();
        assert_eq!(
            mixflow_run(ptr::null(), 1, &mut res),
            MixflowStatus::NullArgument
        );
        assert_eq!(mixflow_result_group_count(ptr::null()), 0);

        // Shares off the simplex.
        let sc = mixflow_scenario_default();
        assert_eq!(
            mixflow_scenario_set_shares(sc, 0.9, 0.9, 0.0, 0.0),
            MixflowStatus::Invalid
        );
        assert!(!last_error().is_empty());

        // Bad horizon.
        assert_eq!(
            mixflow_scenario_set_horizon(sc, -1.0, 100.0),
            MixflowStatus::Invalid
        );

        // Missing config file.
        let mut loaded: *mut MixflowScenario = ptr::null_mut();
        let path = c"/definitely/not/here.toml";
        assert_eq!(
            mixflow_scenario_from_toml(path.as_ptr(), &mut loaded),
            MixflowStatus::Config
        );
        assert!(last_error().contains("not/here.toml"));

        // Out-of-range group index.
        assert_eq!(
            mixflow_scenario_set_horizon(sc, 0.0, 120.0),
            MixflowStatus::Ok
        );
        let mut r: *mut MixflowRunResult = ptr::null_mut();
        assert_eq!(mixflow_run(sc, 1, &mut r), MixflowStatus::Ok);
        let mut h = 0.0;
        assert_eq!(
            mixflow_result_group_headway(r, 999, &mut h),
            MixflowStatus::OutOfRange
        );

        // Buffer too small for a group id.
        let mut tiny = [0 as c_char; 2];
        assert_eq!(
            mixflow_result_group_id(r, 0, tiny.as_mut_ptr(), tiny.len()),
            MixflowStatus::BufferTooSmall
        );

        mixflow_result_free(r);
        mixflow_scenario_free(sc);

        // Frees tolerate null.
        mixflow_scenario_free(ptr::null_mut());
        mixflow_result_free(ptr::null_mut());
    }
}

#[test]
fn capacity_and_caf_helpers_match_the_documented_arithmetic() {
    unsafe {
        let mut cap = 0.0;
        assert_eq!(
            mixflow_capacity(2.0, 40.0, 124.0, &mut cap),
            MixflowStatus::Ok
        );
        assert!((cap - 3600.0 / 2.0 * (40.0 / 124.0)).abs() < 1e-9);

        // Degenerate inputs are rejected.
        assert_eq!(
            mixflow_capacity(0.0, 40.0, 124.0, &mut cap),
            MixflowStatus::Invalid
        );
        assert_eq!(
            mixflow_capacity(2.0, 130.0, 124.0, &mut cap),
            MixflowStatus::Invalid
        );

        // The documented example: base 1.95 s, shares (0.15, 0.25, 0.50).
        let mut f = 0.0;
        assert_eq!(
            mixflow_caf_through(1.95, -0.51, 0.56, -0.91, 0.15, 0.25, 0.50, &mut f),
            MixflowStatus::Ok
        );
        assert!((f - 1.95 / 1.5585).abs() < 1e-9);

        // Base mix is the identity.
        assert_eq!(
            mixflow_caf_through(1.95, -0.51, 0.56, -0.91, 0.0, 0.0, 0.0, &mut f),
            MixflowStatus::Ok
        );
        assert!((f - 1.0).abs() < 1e-12);

        // Shares outside the simplex are invalid.
        assert_eq!(
            mixflow_caf_through(1.95, -0.51, 0.56, -0.91, 0.8, 0.8, 0.0, &mut f),
            MixflowStatus::Invalid
        );
    }
}

#[test]
fn generated_header_exists_and_names_the_api() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("mixflow.h");
    let text = std::fs::read_to_string(&header)
        .unwrap_or_else(|e| panic!("{} unreadable: {e}", header.display()));
    for symbol in [
        "MixflowStatus",
        "MixflowScenario",
        "MixflowRunResult",
        "mixflow_scenario_default",
        "mixflow_run",
        "mixflow_result_group_headway",
        "mixflow_caf_through",
        "mixflow_last_error_message",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
