use std::ffi::CStr;
use std::ptr;

use local_regret_ffi::*;

fn last_error() -> String {
    unsafe {
        let need = lr_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; need.max(1)];
        lr_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(lr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn uniform_matrix_round_trip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(lr_matrix_uniform(2, 2, &mut m), LrStatus::Ok);
        assert_eq!(lr_matrix_side(m), 4);
        let mut entries = [0.0; 16];
        assert_eq!(lr_matrix_entries(m, entries.as_mut_ptr(), 16), LrStatus::Ok);
        assert!(entries.iter().all(|&v| v == 0.25));
        let mut ok = false;
        assert_eq!(lr_matrix_is_feasible(m, 0.0, &mut ok), LrStatus::Ok);
        assert!(ok);
        let mut value = 0.0;
        let mut grad = [0.0; 16];
        assert_eq!(lr_regularizer_eval(m, &mut value, grad.as_mut_ptr(), 16), LrStatus::Ok);
        assert!((value - 3f64.ln()).abs() < 1e-12);
        let ones = [1.0; 4];
        let mut q = 0.0;
        assert_eq!(lr_inv_hessian_quadform(m, 0, 1, ones.as_ptr(), 4, &mut q), LrStatus::Ok);
        assert!(q.abs() <= 4.0);
        lr_matrix_free(m);
    }
}

#[test]
fn projection_of_identity_is_feasible() {
    unsafe {
        let mut raw = [0.0; 16];
        for d in 0..4 {
            raw[d * 5] = 1.0;
        }
        let mut m = ptr::null_mut();
        let mut converged = false;
        assert_eq!(
            lr_matrix_project(2, 2, raw.as_ptr(), 16, 0.0, 0, &mut m, &mut converged),
            LrStatus::Ok
        );
        assert!(converged);
        let mut ok = false;
        lr_matrix_is_feasible(m, 0.0, &mut ok);
        assert!(ok);
        lr_matrix_free(m);

        let mut ident = ptr::null_mut();
        assert_eq!(lr_matrix_from_entries(2, 2, raw.as_ptr(), 16, &mut ident), LrStatus::Ok);
        lr_matrix_is_feasible(ident, 1e-8, &mut ok);
        assert!(!ok);
        lr_matrix_free(ident);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(lr_matrix_uniform(0, 2, &mut m), LrStatus::InvalidArgument);
        assert!(last_error().contains("positive"));
        assert_eq!(lr_matrix_uniform(2, 2, ptr::null_mut()), LrStatus::NullPointer);
        let raw = [0.0; 9];
        assert_eq!(
            lr_matrix_from_entries(2, 2, raw.as_ptr(), 9, &mut m),
            LrStatus::DimensionMismatch
        );
        assert!(last_error().contains("expected 16"));
        let mut nu = 0.0;
        assert_eq!(lr_choose_nu(4, 2, 0, &mut nu), LrStatus::InvalidArgument);
        assert_eq!(lr_choose_nu(4, 2, 8, &mut nu), LrStatus::Ok);
        assert!((nu - 0.5).abs() < 1e-15);
        let mut bad = [0.0; 16];
        bad[0] = f64::NAN;
        assert_eq!(
            lr_matrix_from_entries(2, 2, bad.as_ptr(), 16, &mut m),
            LrStatus::NonFinite
        );
        lr_matrix_free(ptr::null_mut());
        lr_learner_free(ptr::null_mut());
    }
}

#[test]
fn learner_concentrates_on_rewarded_labels() {
    unsafe {
        let mut lr = ptr::null_mut();
        assert_eq!(lr_learner_new(2, 2, -1.0, 0, &mut lr), LrStatus::InvalidArgument);
        assert_eq!(lr_learner_new(2, 2, 1.0, 7, &mut lr), LrStatus::Ok);
        let block = [-1.0, 1.0, -1.0, -1.0];
        for _ in 0..20 {
            assert_eq!(lr_learner_update(lr, 0, 1, block.as_ptr(), 4), LrStatus::Ok);
        }
        let mut expected = 0.0;
        assert_eq!(
            lr_learner_expected_payoff(lr, 0, 1, block.as_ptr(), 4, &mut expected),
            LrStatus::Ok
        );
        assert!(expected > 0.8, "{expected}");
        let (mut a, mut b) = (9, 9);
        let mut hits = 0;
        for _ in 0..200 {
            assert_eq!(lr_learner_predict(lr, 0, 1, &mut a, &mut b), LrStatus::Ok);
            hits += usize::from((a, b) == (0, 1));
        }
        assert!(hits >= 180);
        assert_eq!(lr_learner_predict(lr, 0, 0, &mut a, &mut b), LrStatus::InvalidArgument);
        let over = [2.0, 0.0, 0.0, 0.0];
        assert_eq!(lr_learner_update(lr, 0, 1, over.as_ptr(), 4), LrStatus::InvalidArgument);

        let mut cur = ptr::null_mut();
        assert_eq!(lr_learner_copy_current(lr, &mut cur), LrStatus::Ok);
        let mut ok = false;
        lr_matrix_is_feasible(cur, 1e-6, &mut ok);
        assert!(ok);
        lr_matrix_free(cur);
        lr_learner_free(lr);
    }
}
