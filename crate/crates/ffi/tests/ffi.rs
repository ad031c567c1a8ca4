use std::ffi::{CStr, CString};
use std::ptr;

use rmplan::reward::TrainConfig;
use rmplan_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { rmplan_string_free(s) };
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rmplan_last_error()) }.to_str().unwrap().to_string()
}

fn new_game(numbers: &[i64]) -> *mut RmplanGame24 {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { rmplan_game24_new(numbers.as_ptr(), numbers.len(), &mut g) }, RmplanStatus::Ok);
    g
}

fn step(g: *mut RmplanGame24, action: &str) -> (RmplanStatus, Option<String>) {
    let a = CString::new(action).unwrap();
    let mut obs = ptr::null_mut();
    let status = unsafe { rmplan_game24_step(g, a.as_ptr(), &mut obs) };
    (status, (status == RmplanStatus::Ok).then(|| take(obs)))
}

#[test]
fn appendix_episode_reaches_24() {
    let g = new_game(&[12, 10, 8, 4]);
    for a in ["10 - 8 = 2 (left: 2 4 12)", "12 / 2 = 6 (left: 4 6)"] {
        assert_eq!(step(g, a).0, RmplanStatus::Ok);
    }
    let mut terminal = true;
    unsafe { rmplan_game24_is_terminal(g, &mut terminal) };
    assert!(!terminal);
    let mut actions = ptr::null_mut();
    assert_eq!(unsafe { rmplan_game24_valid_actions(g, &mut actions) }, RmplanStatus::Ok);
    let actions: Vec<String> = serde_json::from_str(&take(actions)).unwrap();
    assert!(actions.contains(&"6 * 4 = 24 (left: 24)".to_string()) || actions.contains(&"4 * 6 = 24 (left: 24)".to_string()));
    assert_eq!(step(g, "6 * 4 = 24 (left: 24)").0, RmplanStatus::Ok);
    let mut reward = 0.0;
    unsafe { rmplan_game24_reward(g, &mut reward) };
    assert_eq!(reward, 1.0);
    let (status, _) = step(g, "24 + 0 = 24 (left: 24)");
    assert_eq!(status, RmplanStatus::Terminal);
    assert!(last_error().contains("over"));

    let mut json = ptr::null_mut();
    unsafe { rmplan_game24_trajectory(g, &mut json) };
    let line = CString::new(take(json)).unwrap();
    assert_eq!(unsafe { rmplan_trajectory_validate(line.as_ptr(), 10) }, RmplanStatus::Ok);
    assert_eq!(unsafe { rmplan_trajectory_validate(line.as_ptr(), 2) }, RmplanStatus::InvalidArgument);
    unsafe { rmplan_game24_free(g) };
}

#[test]
fn wrong_step_gets_the_sentinel_and_a_zero_reward() {
    let g = new_game(&[12, 10, 8, 4]);
    let (status, obs) = step(g, "10 - 12 = -2 (left: -2 4 8)");
    assert_eq!(status, RmplanStatus::Ok);
    assert!(!obs.unwrap().is_empty());
    let (_, obs) = step(g, "I am thinking");
    assert_eq!(obs.unwrap(), rmplan::trajectory::INVALID_ACTION_OBSERVATION);
    let mut reward = 1.0;
    unsafe { rmplan_game24_reward(g, &mut reward) };
    assert_eq!(reward, 0.0);
    unsafe { rmplan_game24_free(g) };
}

#[test]
fn solve_reports_witness() {
    let mut solvable = false;
    let mut witness = ptr::null_mut();
    let nums = [3i64, 5, 7, 11];
    assert_eq!(unsafe { rmplan_game24_solve(nums.as_ptr(), 4, &mut solvable, &mut witness) }, RmplanStatus::Ok);
    assert!(solvable);
    let steps: Vec<String> = serde_json::from_str(&take(witness)).unwrap();
    assert_eq!(steps.len(), 3);
    assert!(steps[2].contains("= 24"));

    let nums = [1i64, 1, 1, 1];
    assert_eq!(unsafe { rmplan_game24_solve(nums.as_ptr(), 4, &mut solvable, &mut witness) }, RmplanStatus::Ok);
    assert!(!solvable);
    assert!(witness.is_null());
}

#[test]
fn argument_errors() {
    let mut g = ptr::null_mut();
    let bad = [0i64, 5, 7, 11];
    assert_eq!(unsafe { rmplan_game24_new(bad.as_ptr(), 4, &mut g) }, RmplanStatus::InvalidArgument);
    assert!(last_error().contains("outside"));
    assert_eq!(unsafe { rmplan_game24_new(bad.as_ptr(), 3, &mut g) }, RmplanStatus::InvalidArgument);
    assert_eq!(unsafe { rmplan_game24_new(ptr::null(), 4, &mut g) }, RmplanStatus::NullPointer);
    assert!(g.is_null());
    let mut obs = ptr::null_mut();
    assert_eq!(unsafe { rmplan_game24_step(ptr::null_mut(), c"x".as_ptr(), &mut obs) }, RmplanStatus::NullPointer);
    let invalid = [0xffu8, 0];
    assert_eq!(unsafe { rmplan_trajectory_validate(invalid.as_ptr().cast(), 10) }, RmplanStatus::InvalidUtf8);
    assert_eq!(unsafe { rmplan_trajectory_validate(c"{not json".as_ptr(), 10) }, RmplanStatus::Parse);
    unsafe {
        rmplan_game24_free(ptr::null_mut());
        rmplan_reward_model_free(ptr::null_mut());
        rmplan_string_free(ptr::null_mut());
    }
    let ok = new_game(&[1, 2, 3, 4]);
    assert_eq!(last_error(), "");
    unsafe { rmplan_game24_free(ok) };
}

#[test]
fn reward_model_scores_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = rmplan::reward::benchmark::separable_pairs(50, 0);
    let out = rmplan::reward::train(&pairs, &TrainConfig { dim: 1024, ..TrainConfig::default() }).unwrap();
    let path = dir.path().join("model.json");
    out.params.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rmplan_reward_model_load(cpath.as_ptr(), &mut m) }, RmplanStatus::Ok);
    let mut dim = 0;
    unsafe { rmplan_reward_model_dim(m, &mut dim) };
    assert_eq!(dim, 1024);
    let reference = rmplan::reward::LinearRewardModel::new(out.params.clone());
    for p in &pairs[..5] {
        let line = CString::new(p.positive.to_json_line()).unwrap();
        let mut s = f64::NAN;
        assert_eq!(unsafe { rmplan_reward_model_score(m, line.as_ptr(), &mut s) }, RmplanStatus::Ok);
        assert_eq!(s, reference.score_trajectory(&p.positive).unwrap());
    }
    unsafe { rmplan_reward_model_free(m) };

    let mut tampered: serde_json::Value = serde_json::from_str(&out.params.to_json()).unwrap();
    tampered["bias"] = serde_json::json!(3.0);
    std::fs::write(&path, tampered.to_string()).unwrap();
    let mut m = ptr::null_mut();
    assert_ne!(unsafe { rmplan_reward_model_load(cpath.as_ptr(), &mut m) }, RmplanStatus::Ok);
    let missing = c"/nonexistent/model.json";
    assert_eq!(unsafe { rmplan_reward_model_load(missing.as_ptr(), &mut m) }, RmplanStatus::Io);
}

#[test]
fn pairwise_loss_at_zero_is_ln2() {
    assert!((rmplan_pairwise_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(rmplan_pairwise_loss(50.0) < 1e-20);
    assert!((rmplan_pairwise_loss(-50.0) - 50.0).abs() < 1e-12);
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(rmplan_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rmplan.h\"\nint main(void) {\n  int64_t n[4] = {3, 5, 7, 11};\n  bool ok = false;\n  RmplanStatus s = rmplan_game24_solve(n, 4, &ok, NULL);\n  return s == RMPLAN_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-I", include]).arg(&src).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
