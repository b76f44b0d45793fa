use mec_offload_ffi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

const REFERENCE: &str = include_str!("../../../configs/reference.toml");

fn scenario(text: &str) -> *mut MecScenario {
    let toml = CString::new(text).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { mec_scenario_from_toml(toml.as_ptr(), &mut sc) }, MecStatus::Ok);
    assert!(!sc.is_null());
    sc
}

fn last_error() -> String {
    let p = mec_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { mec_string_free(p) };
    s
}

#[test]
fn solve_reference() {
    let sc = scenario(REFERENCE);
    unsafe {
        assert_eq!(mec_scenario_num_devices(sc), 2);
        assert_eq!(mec_scenario_num_servers(sc), 2);
        let mut eq = ptr::null_mut();
        assert_eq!(mec_solve(sc, &mut eq), MecStatus::Ok);
        assert!(mec_equilibrium_converged(eq));
        assert!(mec_equilibrium_residual(eq) <= 1e-4);
        assert!(mec_equilibrium_sweeps(eq) >= 1);

        let mut rates = [0.0; 4];
        assert_eq!(mec_equilibrium_profile(eq, rates.as_mut_ptr(), 4), MecStatus::Ok);
        for i in 0..2 {
            let mut at_eq = 0.0;
            assert_eq!(mec_equilibrium_response_time(eq, i, &mut at_eq), MecStatus::Ok);
            let mut direct = 0.0;
            assert_eq!(mec_response_time(sc, rates.as_ptr(), 4, i, &mut direct), MecStatus::Ok);
            assert!((at_eq - direct).abs() <= 1e-12 * direct, "{at_eq} vs {direct}");

            // No device gains more than the residual by deviating.
            let mut row = [0.0; 2];
            let mut br_time = 0.0;
            assert_eq!(mec_best_response(sc, rates.as_ptr(), 4, i, row.as_mut_ptr(), 2, &mut br_time), MecStatus::Ok);
            assert!(at_eq - br_time <= 1e-4, "device {i}: {at_eq} vs best response {br_time}");
        }
        mec_equilibrium_free(eq);
        mec_scenario_free(sc);
    }
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("not = [valid").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { mec_scenario_from_toml(bad.as_ptr(), &mut sc) }, MecStatus::InvalidConfig);
    assert!(sc.is_null());
    assert!(!last_error().is_empty());

    let negative = REFERENCE.replacen("task_rate = 5.0", "task_rate = -5.0", 1);
    assert_ne!(negative, REFERENCE);
    let text = CString::new(negative).unwrap();
    assert_eq!(unsafe { mec_scenario_from_toml(text.as_ptr(), &mut sc) }, MecStatus::InvalidConfig);
    assert!(last_error().contains("task_rate"));

    assert_eq!(unsafe { mec_scenario_from_toml(ptr::null(), &mut sc) }, MecStatus::NullPointer);
    assert_eq!(unsafe { mec_scenario_from_toml(bad.as_ptr(), ptr::null_mut()) }, MecStatus::NullPointer);

    let sc = scenario(REFERENCE);
    let mut out = 0.0;
    unsafe {
        let rates = [0.0; 4];
        assert_eq!(mec_response_time(sc, rates.as_ptr(), 3, 0, &mut out), MecStatus::OutOfRange);
        assert_eq!(mec_response_time(sc, rates.as_ptr(), 4, 2, &mut out), MecStatus::OutOfRange);
        assert_eq!(mec_response_time(sc, ptr::null(), 4, 0, &mut out), MecStatus::NullPointer);
        let too_much = [100.0, 0.0, 0.0, 0.0];
        assert_eq!(mec_response_time(sc, too_much.as_ptr(), 4, 0, &mut out), MecStatus::Infeasible);
        let mut row = [0.0; 2];
        assert_eq!(
            mec_best_response(sc, rates.as_ptr(), 4, 0, row.as_mut_ptr(), 3, &mut out),
            MecStatus::OutOfRange
        );
        assert_eq!(mec_response_time(ptr::null(), rates.as_ptr(), 4, 0, &mut out), MecStatus::NullPointer);
        mec_scenario_free(sc);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        mec_scenario_free(ptr::null_mut());
        mec_equilibrium_free(ptr::null_mut());
        mec_string_free(ptr::null_mut());
        assert_eq!(mec_scenario_num_devices(ptr::null()), 0);
        assert!(!mec_equilibrium_converged(ptr::null()));
        assert!(mec_equilibrium_residual(ptr::null()).is_nan());
        let mut eq = ptr::null_mut();
        assert_eq!(mec_solve(ptr::null(), &mut eq), MecStatus::NullPointer);
        assert!(eq.is_null());
    }
}

#[test]
fn errors_are_per_thread() {
    let bad = CString::new("x").unwrap();
    let mut sc = ptr::null_mut();
    assert_ne!(unsafe { mec_scenario_from_toml(bad.as_ptr(), &mut sc) }, MecStatus::Ok);
    let other = std::thread::spawn(|| mec_last_error_message().is_null()).join().unwrap();
    assert!(other);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/mec_offload.h")).unwrap();
    let source = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 13);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let probe = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        probe.path(),
        "#include \"mec_offload.h\"\nint main(void) { MecScenario *s = 0; return (int)mec_scenario_num_devices(s); }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(probe.path())
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(e) => eprintln!("no C compiler ({e}); skipped"),
    }
}
