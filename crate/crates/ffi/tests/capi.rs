use std::ffi::{c_char, CStr};
use std::ptr;

use ellipsys_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        el_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn identity_tensor_has_unit_constant() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(el_tensor_identity(2, 2, &mut t), ElStatus::Ok);
        let mut nu = 0.0;
        assert_eq!(el_tensor_ellipticity_constant(t, &mut nu), ElStatus::Ok);
        assert!((nu - 1.0).abs() < 1e-9, "nu = {nu}");
        el_tensor_free(t);
    }
}

#[test]
fn asymmetric_entries_rejected_with_message() {
    let mut e = vec![0.0; 16];
    e[1] = 1.0;
    unsafe {
        let mut t = ptr::null_mut();
        let s = el_tensor_new(2, 2, e.as_ptr(), e.len(), &mut t);
        assert_eq!(s, ElStatus::AsymmetricTensor);
        assert!(t.is_null());
    }
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_reported() {
    unsafe {
        assert_eq!(el_tensor_identity(2, 2, ptr::null_mut()), ElStatus::NullPointer);
        let mut nu = 0.0;
        assert_eq!(el_tensor_ellipticity_constant(ptr::null(), &mut nu), ElStatus::NullPointer);
        el_field_free(ptr::null_mut());
        assert!(el_field_l2_norm(ptr::null()).is_nan());
    }
}

#[test]
fn bad_grid_rejected() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_ne!(el_grid_new(2, 2, 0, 1.0, &mut g), ElStatus::Ok);
        assert!(g.is_null());
    }
}

#[test]
fn linear_round_trip_through_handles() {
    unsafe {
        let (mut t, mut g, mut u, mut f, mut v) =
            (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(el_tensor_identity(2, 2, &mut t), ElStatus::Ok);
        assert_eq!(el_grid_new(2, 2, 16, 1.0, &mut g), ElStatus::Ok);
        assert_eq!(el_field_random(g, 3, 7, &mut u), ElStatus::Ok);
        let mut op = ptr::null_mut();
        assert_eq!(el_operator_new(t, g, 0.0, 1.0, 0.0, &mut op), ElStatus::Ok);
        assert_eq!(el_operator_apply(op, u, &mut f), ElStatus::Ok);
        assert_eq!(el_solve_linear(t, f, 0.0, &mut v), ElStatus::Ok);

        let n = el_grid_field_len(g);
        assert_eq!(n, 2 * 16 * 16);
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(el_field_values(u, a.as_mut_ptr(), n), ElStatus::Ok);
        assert_eq!(el_field_values(v, b.as_mut_ptr(), n), ElStatus::Ok);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");

        assert_eq!(el_field_values(u, a.as_mut_ptr(), n - 1), ElStatus::BufferTooSmall);

        for h in [u, f, v] {
            el_field_free(h);
        }
        el_operator_free(op);
        el_grid_free(g);
        el_tensor_free(t);
    }
}

#[test]
fn field_from_values_round_trips() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(el_grid_new(1, 1, 8, 1.0, &mut g), ElStatus::Ok);
        let vals: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mut f = ptr::null_mut();
        assert_eq!(el_field_from_values(g, vals.as_ptr(), 8, &mut f), ElStatus::Ok);
        let mut back = vec![0.0; 8];
        assert_eq!(el_field_values(f, back.as_mut_ptr(), 8), ElStatus::Ok);
        assert_eq!(vals, back);
        let mut bad = ptr::null_mut();
        assert_eq!(el_field_from_values(g, vals.as_ptr(), 7, &mut bad), ElStatus::DimensionMismatch);
        el_field_free(f);
        el_grid_free(g);
    }
}

#[test]
fn perturbed_solve_converges() {
    unsafe {
        let (mut t, mut g, mut u, mut f) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(el_tensor_identity(2, 2, &mut t), ElStatus::Ok);
        assert_eq!(el_grid_new(2, 2, 16, 1.0, &mut g), ElStatus::Ok);
        let mut op = ptr::null_mut();
        assert_eq!(el_operator_new(t, g, 0.3, 1.0, 0.5, &mut op), ElStatus::Ok);
        let mut cert = ptr::null_mut();
        assert_eq!(el_certificate_fit(op, t, 3, &mut cert), ElStatus::Ok, "{}", last_error());
        let (mut beta, mut gamma) = (0.0, 0.0);
        assert_eq!(el_certificate_constants(cert, ptr::null_mut(), &mut beta, &mut gamma), ElStatus::Ok);
        assert!(beta + gamma < 1.0);

        assert_eq!(el_field_random(g, 3, 11, &mut u), ElStatus::Ok);
        assert_eq!(el_operator_apply(op, u, &mut f), ElStatus::Ok);
        let mut sol = ptr::null_mut();
        let mut iters = 0usize;
        let s = el_solve(t, op, cert, f, 1e-10, 200, &mut sol, &mut iters);
        assert_eq!(s, ElStatus::Ok, "{}", last_error());
        assert!(iters > 0 && iters < 60, "{iters} iterations");

        let n = el_grid_field_len(g);
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        el_field_values(u, a.as_mut_ptr(), n);
        el_field_values(sol, b.as_mut_ptr(), n);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");

        for h in [u, f, sol] {
            el_field_free(h);
        }
        el_certificate_free(cert);
        el_operator_free(op);
        el_grid_free(g);
        el_tensor_free(t);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(el_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ellipsys.h")).unwrap();
    for name in [
        "typedef struct ElTensor ElTensor;",
        "EL_STATUS_NOT_CONVERGED = 8",
        "el_solve(",
        "el_solve_linear(",
        "el_certificate_fit(",
        "el_last_error_message(",
        "el_field_free(",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"ellipsys.h\"\nint main(void) { ElTensor *t = 0; return el_tensor_identity(2, 2, &t) == EL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn example_tensor_range_enforced() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(el_tensor_example2(4.0, 2, &mut t), ElStatus::InvalidInput);
        assert!(t.is_null());
        assert!(last_error().contains("m >= 8"));
        assert_eq!(el_tensor_example2(8.0, 3, &mut t), ElStatus::Ok);
        let mut nu = 0.0;
        assert_eq!(el_tensor_ellipticity_constant(t, &mut nu), ElStatus::Ok);
        assert!(nu > 0.0);
        el_tensor_free(t);
    }
}
