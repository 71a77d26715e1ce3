use lpbm_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lpbm_last_error()).to_string_lossy().into_owned() }
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    lpbm_string_free(s);
    out
}

#[test]
fn gaussian_mass_and_santalo() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(lpbm_function_gaussian(1, 6.0, 1025, 1.0, &mut f), LpbmStatus::Ok);
        let mut m = 0.0;
        assert_eq!(lpbm_total_mass(f, &mut m), LpbmStatus::Ok);
        assert!((m - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6, "{m}");

        let mut json = ptr::null_mut();
        let mut pass = -1;
        assert_eq!(lpbm_check_santalo(f, &mut json, &mut pass), LpbmStatus::Ok);
        assert_eq!(pass, 1);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["pass"], true);
        lpbm_function_free(f);
    }
}

#[test]
fn json_roundtrip_and_values() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(lpbm_function_box(1, 2.0, 65, 1.0, &mut f), LpbmStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(lpbm_function_to_json(f, &mut s), LpbmStatus::Ok);
        let text = CString::new(take(s)).unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(lpbm_function_from_json(text.as_ptr(), &mut g), LpbmStatus::Ok);
        let mut n = 0usize;
        assert_eq!(lpbm_function_len(g, &mut n), LpbmStatus::Ok);
        assert_eq!(n, 65);
        let mut buf = vec![0.0; n];
        assert_eq!(lpbm_function_values(g, buf.as_mut_ptr(), n), LpbmStatus::Ok);
        assert_eq!(buf[32], 0.0);
        assert!(buf[0].is_infinite());
        assert_eq!(lpbm_function_values(g, buf.as_mut_ptr(), n - 1), LpbmStatus::Validation);
        lpbm_function_free(f);
        lpbm_function_free(g);
    }
}

#[test]
fn sum_of_gaussians() {
    unsafe {
        let (mut f, mut g, mut h) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        lpbm_function_gaussian(1, 8.0, 1025, 1.0, &mut f);
        lpbm_function_gaussian(1, 8.0, 1025, 4.0, &mut g);
        assert_eq!(lpbm_p_sum(f, g, 1.0, 1.0, 2.0, &mut h), LpbmStatus::Ok);
        let mut m = 0.0;
        lpbm_total_mass(h, &mut m);
        // conjugates s|y|^2/2 combine to sqrt(1 + 16)|y|^2/2
        let want = (2.0 * std::f64::consts::PI * 17f64.sqrt()).sqrt();
        assert!((m - want).abs() / want < 1e-3, "{m} vs {want}");
        let mut star = ptr::null_mut();
        assert_eq!(lpbm_conjugate(f, &mut star), LpbmStatus::Ok);
        for x in [f, g, h, star] {
            lpbm_function_free(x);
        }
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(lpbm_function_gaussian(1, 6.0, 1024, 1.0, &mut f), LpbmStatus::Validation);
        assert!(f.is_null());
        assert!(!last_error().is_empty());

        let bad = CString::new("{not json").unwrap();
        assert_ne!(lpbm_function_from_json(bad.as_ptr(), &mut f), LpbmStatus::Ok);

        let mut m = 0.0;
        assert_eq!(lpbm_total_mass(ptr::null(), &mut m), LpbmStatus::NullPointer);
        assert!(last_error().contains("null"));

        lpbm_function_free(ptr::null_mut());
        lpbm_string_free(ptr::null_mut());
    }
}

#[test]
fn measure_and_solve() {
    unsafe {
        let mut f = ptr::null_mut();
        lpbm_function_gaussian(1, 6.0, 1025, 1.0, &mut f);
        let mut mu = ptr::null_mut();
        assert_eq!(lpbm_forward_measure(f, 2.0, 1.0, 0.5, &mut mu), LpbmStatus::Ok);
        let mut n = 0usize;
        lpbm_measure_len(mu, &mut n);
        assert!(n > 0);

        let mut s = ptr::null_mut();
        assert_eq!(lpbm_measure_to_json(mu, &mut s), LpbmStatus::Ok);
        let text = CString::new(take(s)).unwrap();
        let mut mu2 = ptr::null_mut();
        assert_eq!(lpbm_measure_from_json(text.as_ptr(), &mut mu2), LpbmStatus::Ok);

        let cfg = CString::new(
            r#"{"p":2.0,"n_pieces":6,"max_iters":60,"step_init":0.25,"shrink_factor":0.5,"min_step":1e-3,
                "restarts":1,"seed":7,"grid":{"dim":1,"lo":[-6.0],"hi":[6.0],"n_axis":257},"dual_grid":{"dim":1,"lo":[-4.0],"hi":[4.0],"n_axis":513},
                "family":"general","eps_omega":1e-8,"el_tol":0.05}"#,
        )
        .unwrap();
        let mut out = ptr::null_mut();
        let st = lpbm_solve(mu2, cfg.as_ptr(), 2.0, 0, &mut out);
        assert_eq!(st, LpbmStatus::Ok, "{}", last_error());
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert!(v["objective_value"].as_f64().unwrap().is_finite());
        lpbm_measure_free(mu);
        lpbm_measure_free(mu2);
        lpbm_function_free(f);
    }
}
