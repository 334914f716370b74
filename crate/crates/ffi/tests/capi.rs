use std::ffi::CStr;
use std::ptr;

use fpratio_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { fpr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn exact_ratio_and_null_out() {
    let mut v = 0.0;
    assert_eq!(unsafe { fpr_ou_exact_ratio(0.05, 1.0, 0.0, 0.3, 0.5, &mut v) }, FprStatus::Ok);
    assert_eq!(v, fpratio::oracle::ou_exact_ratio(0.05, 1.0, 0.0, 0.3, 0.5).unwrap());
    assert_eq!(last_error(), "");
    assert_eq!(unsafe { fpr_ou_exact_ratio(0.05, 1.0, 0.0, 0.3, 0.5, ptr::null_mut()) }, FprStatus::NullPointer);
    assert!(!last_error().is_empty());
}

#[test]
fn bad_parameters_report_invalid_argument() {
    let mut v = 0.0;
    assert_eq!(unsafe { fpr_ou_exact_ratio(0.05, -1.0, 0.0, 0.3, 0.5, &mut v) }, FprStatus::InvalidArgument);
    assert!(last_error().contains("sigma"), "{}", last_error());
    let mut f: *mut FprField = ptr::null_mut();
    assert_ne!(unsafe { fpr_solve_ou_ratio(0.05, 1.0, 0.0, 1.0, -1.0, 50, 1.0, 50, &mut f) }, FprStatus::Ok);
    assert!(f.is_null());
}

#[test]
fn solved_field_tracks_closed_form() {
    let mut f: *mut FprField = ptr::null_mut();
    assert_eq!(unsafe { fpr_solve_ou_ratio(0.05, 1.0, 0.0, -4.0, 4.0, 200, 1.0, 200, &mut f) }, FprStatus::Ok);
    assert!(!f.is_null());
    for &(x, t) in &[(0.0, 0.5), (1.0, 1.0), (-2.0, 0.25)] {
        let mut v = 0.0;
        assert_eq!(unsafe { fpr_field_eval(f, x, t, &mut v) }, FprStatus::Ok);
        let e = fpratio::oracle::ou_exact_ratio(0.05, 1.0, 0.0, x, t).unwrap();
        assert!((v - e).abs() < 1e-3, "{x} {t}: {v} vs {e}");
    }
    let mut mx = 0.0;
    assert_eq!(unsafe { fpr_field_max(f, &mut mx) }, FprStatus::Ok);
    assert!(mx >= 1.0);
    let mut v = 0.0;
    assert_ne!(unsafe { fpr_field_eval(f, 10.0, 0.5, &mut v) }, FprStatus::Ok);
    unsafe { fpr_field_free(f) };
    unsafe { fpr_field_free(ptr::null_mut()) };
    assert_eq!(unsafe { fpr_field_eval(ptr::null(), 0.0, 0.5, &mut v) }, FprStatus::NullPointer);
}

#[test]
fn sampled_path_matches_core_pipeline() {
    let n = 20;
    let (mut t, mut p, mut r, mut a, mut o) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0u8; n], vec![0.0; n]);
    let bufs = FprPathBuffers {
        times: t.as_mut_ptr(),
        proposal: p.as_mut_ptr(),
        ratio: r.as_mut_ptr(),
        accepted: a.as_mut_ptr(),
        output: o.as_mut_ptr(),
    };
    assert_eq!(unsafe { fpr_sample_ou_path(0.05, 1.0, 0.0, 1.0, n, 7, 3, bufs) }, FprStatus::Ok, "{}", last_error());
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!((t[n - 1] - 1.0).abs() < 1e-12);
    for i in 0..n {
        if a[i] == 1 {
            assert_eq!(o[i], p[i]);
        }
    }

    use fpratio::sampler::*;
    let core = ou_pipeline(&OuSetup {
        beta: 0.05,
        sigma: 1.0,
        x0: 0.0,
        t0: 0.0,
        times: uniform_times(0.0, 1.0, n),
        mode: RatioMode::Exact,
        bound: BoundSpec::Analytic { x_max: None },
        seed: 7,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
        force_identity: false,
    })
    .unwrap()
    .sample_path(3)
    .unwrap();
    assert_eq!(core.proposal[0], p);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&core.output[0]), bits(&o));
}

#[test]
fn sampling_rejects_null_buffers_and_zero_points() {
    let mut t = [0.0; 1];
    let bufs = FprPathBuffers {
        times: t.as_mut_ptr(),
        proposal: ptr::null_mut(),
        ratio: ptr::null_mut(),
        accepted: ptr::null_mut(),
        output: ptr::null_mut(),
    };
    assert_eq!(unsafe { fpr_sample_ou_path(0.05, 1.0, 0.0, 1.0, 1, 1, 0, bufs) }, FprStatus::NullPointer);
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/fpratio.h")).unwrap();
    for name in ["fpr_ou_exact_ratio", "fpr_solve_ou_ratio", "fpr_field_eval", "fpr_field_free", "fpr_sample_ou_path", "fpr_last_error_message", "FPR_STATUS_OK", "typedef struct FprField FprField"] {
        assert!(h.contains(name), "{name}");
    }
}
