use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cprep_ffi::*;

const MACHINE: &str = "\
SYMBOLS:
    A
    B
STATES: u0, u1, u2
INITIAL: u0
TERMINAL: u2
TRANSITIONS:
    (u0, A) --> next=u1;r=0
    (u1, B) --> next=u2;r=1
";

fn parse(text: &str) -> *mut CprepRewardMachine {
    let text = CString::new(text).unwrap();
    let mut rm = ptr::null_mut();
    assert_eq!(unsafe { cprep_rm_parse(text.as_ptr(), &mut rm) }, CprepStatus::Ok);
    rm
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cprep_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn machine_queries_and_steps() {
    let rm = parse(MACHINE);
    unsafe {
        assert_eq!(cprep_rm_num_states(rm), 3);
        assert_eq!(cprep_rm_num_symbols(rm), 2);
        let mut init = 99;
        assert_eq!(cprep_rm_initial_state(rm, &mut init), CprepStatus::Ok);
        assert_eq!(init, 0);
        let mut term = false;
        assert_eq!(cprep_rm_is_terminal(rm, 2, &mut term), CprepStatus::Ok);
        assert!(term);

        let name = CString::new("B").unwrap();
        let mut idx = 0;
        assert_eq!(cprep_rm_symbol_index(rm, name.as_ptr(), &mut idx), CprepStatus::Ok);
        assert_eq!(idx, 1);
        let name = CString::new("u1").unwrap();
        assert_eq!(cprep_rm_state_index(rm, name.as_ptr(), &mut idx), CprepStatus::Ok);
        assert_eq!(idx, 1);

        let (mut next, mut r) = (0, -1.0);
        let label = [0u8, 1];
        assert_eq!(cprep_rm_step(rm, 1, label.as_ptr(), 2, &mut next, &mut r), CprepStatus::Ok);
        assert_eq!((next, r), (2, 1.0));
        // No matching guard: implicit self-loop with zero reward.
        assert_eq!(cprep_rm_step(rm, 0, label.as_ptr(), 2, &mut next, &mut r), CprepStatus::Ok);
        assert_eq!((next, r), (0, 0.0));
        assert_eq!(
            cprep_rm_step(rm, 2, label.as_ptr(), 2, &mut next, &mut r),
            CprepStatus::Terminated
        );
        assert_eq!(
            cprep_rm_step(rm, 0, label.as_ptr(), 1, &mut next, &mut r),
            CprepStatus::InvalidArgument
        );
        assert!(last_error().contains("symbols"));

        let dot = cprep_rm_to_dot(rm);
        assert!(CStr::from_ptr(dot).to_str().unwrap().contains("digraph"));
        cprep_string_free(dot);

        let text = cprep_rm_serialize(rm);
        let again = parse(CStr::from_ptr(text).to_str().unwrap());
        assert_eq!(cprep_rm_num_states(again), 3);
        cprep_string_free(text);
        cprep_rm_free(again);
        cprep_rm_free(rm);
    }
}

#[test]
fn plan_values_labels_and_shaping() {
    let rm = parse(MACHINE);
    unsafe {
        let mut plan = ptr::null_mut();
        assert_eq!(cprep_plan_new(rm, 0.9, &mut plan), CprepStatus::Ok);
        cprep_rm_free(rm);

        let mut values = [0.0; 3];
        assert_eq!(cprep_plan_values(plan, values.as_mut_ptr(), 3), CprepStatus::Ok);
        assert!((values[0] - 0.9).abs() < 1e-9);
        assert!((values[1] - 1.0).abs() < 1e-9);
        assert_eq!(values[2], 0.0);
        assert_eq!(
            cprep_plan_values(plan, values.as_mut_ptr(), 2),
            CprepStatus::BufferTooSmall
        );

        let mut bits = [9u8; 2];
        assert_eq!(cprep_plan_desired_label(plan, 0, bits.as_mut_ptr(), 2), CprepStatus::Ok);
        assert_eq!(bits, [1, 0]);
        assert_eq!(cprep_plan_desired_label(plan, 2, bits.as_mut_ptr(), 2), CprepStatus::Ok);
        assert_eq!(bits, [0, 0]);

        let mut shaped = 0.0;
        let label = [1u8, 0];
        assert_eq!(
            cprep_plan_shaped_reward(plan, 0, label.as_ptr(), 2, &mut shaped),
            CprepStatus::Ok
        );
        assert!((shaped - (0.9 * 1.0 - 0.9)).abs() < 1e-9);
        cprep_plan_free(plan);
    }
}

#[test]
fn metrics() {
    unsafe {
        let mut out = 0.0;
        let values = [5.0, 1.0, 2.0, 3.0, 4.0, 100.0, -50.0, 3.0];
        assert_eq!(cprep_iqm(values.as_ptr(), values.len(), &mut out), CprepStatus::Ok);
        assert!((out - 3.0).abs() < 1e-12);
        assert_eq!(cprep_iqm(ptr::null(), 0, &mut out), CprepStatus::InvalidArgument);

        let ones = [1.0; 101];
        assert_eq!(cprep_ttt_auc(ones.as_ptr(), 101, 51, &mut out), CprepStatus::Ok);
        assert_eq!(out, 0.0);
        let zeros = [0.0; 101];
        assert_eq!(cprep_ttt_auc(zeros.as_ptr(), 101, 51, &mut out), CprepStatus::Ok);
        assert!((out - 5000.0 / 51.0).abs() < 1e-9);

        let mut inf = false;
        assert_eq!(
            cprep_transfer_ratio(ones.as_ptr(), zeros.as_ptr(), 101, &mut out, &mut inf),
            CprepStatus::Ok
        );
        assert!(inf);
        let halves = [0.5; 101];
        assert_eq!(
            cprep_transfer_ratio(ones.as_ptr(), halves.as_ptr(), 101, &mut out, &mut inf),
            CprepStatus::Ok
        );
        assert!(!inf);
        assert!((out - 1.0).abs() < 1e-9);
    }
}

#[test]
fn task_episode_reaches_goal() {
    let env = CString::new("GN").unwrap();
    let ctx = CString::new(r#"{"space":"EL","payload":[{"row":0,"col":1}]}"#).unwrap();
    unsafe {
        let mut task = ptr::null_mut();
        assert_eq!(cprep_task_new(env.as_ptr(), ctx.as_ptr(), 7, &mut task), CprepStatus::Ok);
        let n = cprep_task_num_actions(task);
        assert!(n >= 4);
        let width = cprep_task_state_width(task);
        assert_eq!(width, 36);

        let (mut r, mut done, mut trunc) = (0.0, false, false);
        assert_eq!(cprep_task_step(task, 0, &mut r, &mut done, &mut trunc), CprepStatus::InvalidArgument);

        let mut cell = 0;
        assert_eq!(cprep_task_reset(task, &mut cell), CprepStatus::Ok);
        let mut features = vec![0.0; width];
        assert_eq!(
            cprep_task_state_features(task, features.as_mut_ptr(), width),
            CprepStatus::Ok
        );
        assert_eq!(features[cell], 1.0);
        assert_eq!(features.iter().sum::<f64>(), 1.0);

        let mut steps = 0;
        while !(done || trunc) {
            assert_eq!(cprep_task_step(task, steps % n, &mut r, &mut done, &mut trunc), CprepStatus::Ok);
            steps += 1;
        }
        assert!(steps <= 200);
        assert_eq!(cprep_task_step(task, 0, &mut r, &mut done, &mut trunc), CprepStatus::Terminated);

        let pic = cprep_task_render(task);
        assert!(!CStr::from_ptr(pic).to_bytes().is_empty());
        cprep_string_free(pic);
        cprep_task_free(task);
    }
}

#[test]
fn bad_inputs_report_status_and_message() {
    unsafe {
        let mut rm = ptr::null_mut();
        let bad = CString::new("STATES: u0\n").unwrap();
        assert_eq!(cprep_rm_parse(bad.as_ptr(), &mut rm), CprepStatus::Parse);
        assert!(rm.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(cprep_rm_parse(ptr::null(), &mut rm), CprepStatus::NullPointer);
        let bytes = [0xffu8, 0];
        assert_eq!(cprep_rm_parse(bytes.as_ptr().cast(), &mut rm), CprepStatus::InvalidUtf8);
        assert_eq!(cprep_rm_num_states(ptr::null()), 0);
        assert!(cprep_rm_to_dot(ptr::null()).is_null());

        let env = CString::new("GN").unwrap();
        let ctx = CString::new(r#"{"space":"PO","payload":[0]}"#).unwrap();
        let mut task = ptr::null_mut();
        assert_eq!(
            cprep_task_new(env.as_ptr(), ctx.as_ptr(), 0, &mut task),
            CprepStatus::InvalidArgument
        );
        assert!(CStr::from_ptr(cprep_version()).to_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cprep.h");
    assert!(header.exists(), "header not generated");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(
        &src,
        "#include \"cprep.h\"\nint main(void) { size_t n = cprep_rm_num_states(NULL); return (int)n; }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(status.success());
}
