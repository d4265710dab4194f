use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pasm_ffi::*;

fn last_error() -> String {
    let p = pasm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn worked_chain_through_the_abi() {
    let zero = [0.0; 3];
    let g = [0.5; 3];
    let mut theta = [0.0; 3];
    let mut lambda = [0.0; 3];
    let mut v = [0.0; 3];
    let mut u = [0.0; 3];
    unsafe {
        assert_eq!(
            pasm_local_update(zero.as_ptr(), zero.as_ptr(), g.as_ptr(), 3, 1000.0, 1.0, theta.as_mut_ptr()),
            PasmStatus::Ok
        );
        assert_eq!(
            pasm_dual_update(zero.as_ptr(), theta.as_ptr(), zero.as_ptr(), 3, 1000.0, lambda.as_mut_ptr()),
            PasmStatus::Ok
        );
        assert_eq!(pasm_second_moment(zero.as_ptr(), lambda.as_ptr(), 1, 3, 0.999, v.as_mut_ptr()), PasmStatus::Ok);
        assert_eq!(
            pasm_upload(theta.as_ptr(), lambda.as_ptr(), v.as_ptr(), 3, 1000.0, 0.01, u.as_mut_ptr()),
            PasmStatus::Ok
        );
    }
    assert_eq!(theta[0], -0.5 / 1001.0);
    assert!((lambda[0] + 0.4995).abs() < 1e-4);
    assert!((v[0] - 2.4950e-4).abs() < 1e-8);
    assert!((u[0] + 1.9863e-2).abs() < 1e-5);
}

#[test]
fn aggregate_rows() {
    let uploads = [1.0, 1.0, 3.0, 3.0];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { pasm_aggregate(uploads.as_ptr(), 2, 2, out.as_mut_ptr()) }, PasmStatus::Ok);
    assert_eq!(out, [2.0, 2.0]);
    assert_eq!(unsafe { pasm_aggregate(uploads.as_ptr(), 0, 2, out.as_mut_ptr()) }, PasmStatus::InvalidArgument);
    assert!(last_error().contains("empty"));
}

#[test]
fn null_and_domain_errors() {
    let x = [0.0; 2];
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(
            pasm_local_update(ptr::null(), x.as_ptr(), x.as_ptr(), 2, 1.0, 1.0, out.as_mut_ptr()),
            PasmStatus::NullPointer
        );
        assert!(last_error().contains("theta_c"));
        assert_eq!(
            pasm_local_update(x.as_ptr(), x.as_ptr(), x.as_ptr(), 2, 1.0, -1.0, out.as_mut_ptr()),
            PasmStatus::InvalidArgument
        );
        assert_eq!(
            pasm_second_moment(x.as_ptr(), x.as_ptr(), 1, 2, 1.5, out.as_mut_ptr()),
            PasmStatus::InvalidArgument
        );
        let mut env = ptr::null_mut();
        assert_eq!(pasm_env_new(3, 0, 0, &mut env), PasmStatus::InvalidConfig);
        assert!(env.is_null());
        assert_eq!(pasm_env_reset(ptr::null_mut()), PasmStatus::NullPointer);
        pasm_env_free(ptr::null_mut());
        pasm_server_free(ptr::null_mut());
    }
}

#[test]
fn environment_episode() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(pasm_env_new(1, 7, 0, &mut env), PasmStatus::Ok);
        let (mut agents, mut actions, mut obs_len, mut horizon) = (0, 0, 0, 0);
        assert_eq!(pasm_env_dims(env, &mut agents, &mut actions, &mut obs_len, &mut horizon), PasmStatus::Ok);
        assert_eq!((agents, actions, obs_len, horizon), (4, 16, 23, 100));
        assert_eq!(pasm_env_reset(env), PasmStatus::Ok);
        let mut obs = vec![0.0; obs_len];
        assert_eq!(pasm_env_observe(env, 0, obs.as_mut_ptr(), obs_len), PasmStatus::Ok);
        assert!(obs.iter().all(|x| x.is_finite()));
        assert_eq!(pasm_env_observe(env, 0, obs.as_mut_ptr(), obs_len - 1), PasmStatus::DimensionMismatch);
        let acts = [0usize, 5, 10, 15];
        let (mut reward, mut done, mut steps) = (0.0, false, 0);
        while !done {
            assert_eq!(pasm_env_step(env, acts.as_ptr(), 4, &mut reward, &mut done), PasmStatus::Ok);
            assert!(reward.is_finite());
            steps += 1;
        }
        assert_eq!(steps, 100);
        assert_eq!(pasm_env_step(env, acts.as_ptr(), 4, &mut reward, &mut done), PasmStatus::EpisodeFinished);
        let mut m = -1.0;
        assert_eq!(pasm_env_episode_metric(env, &mut m), PasmStatus::Ok);
        assert!((0.0..=1.0).contains(&m));
        pasm_env_free(env);
    }
}

#[test]
fn environment_from_toml() {
    let good = CString::new("scenario = 2\nseed = 4\n[env]\nn_v2i = 4\nn_v2v = 8\n").unwrap();
    let bad = CString::new("[env]\nbogus = 1\n").unwrap();
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(pasm_env_new_from_toml(good.as_ptr(), 0, &mut env), PasmStatus::Ok);
        let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
        pasm_env_dims(env, &mut a, &mut b, &mut c, &mut d);
        assert_eq!(a, 8);
        pasm_env_free(env);
        let mut env = ptr::null_mut();
        assert_eq!(pasm_env_new_from_toml(bad.as_ptr(), 0, &mut env), PasmStatus::InvalidConfig);
        assert!(last_error().contains("bogus"));
    }
}

#[test]
fn server_round() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(pasm_server_new([0.0; 2].as_ptr(), 2, 1000.0, 0.01, 0.999, &mut s), PasmStatus::Ok);
        let mut len = 0;
        pasm_server_len(s, &mut len);
        assert_eq!(len, 2);
        let theta = [-0.5 / 1001.0; 2];
        let lambda = [1000.0 * (-0.5 / 1001.0); 2];
        assert_eq!(pasm_server_aggregate(s, theta.as_ptr(), lambda.as_ptr(), 1, 2), PasmStatus::Ok);
        let mut tc = [0.0; 2];
        assert_eq!(pasm_server_theta_c(s, tc.as_mut_ptr(), 2), PasmStatus::Ok);
        assert!((tc[0] + 1.9863e-2).abs() < 1e-5);
        assert_eq!(pasm_server_theta_c(s, tc.as_mut_ptr(), 3), PasmStatus::DimensionMismatch);
        pasm_server_free(s);
        assert_eq!(pasm_server_new([0.0].as_ptr(), 1, 10.0, 2.0, 0.9, &mut s), PasmStatus::InvalidConfig);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pasm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pasm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["pasm_env_new", "pasm_env_step", "pasm_upload", "pasm_server_aggregate", "pasm_last_error"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) =
        Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"]).arg(&header).status()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(status.success());
}
