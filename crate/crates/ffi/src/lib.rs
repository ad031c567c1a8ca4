//! C ABI over the Game of 24 environment, trajectory validation and the
//! linear reward model.
//!
//! Functions return an [`RmplanStatus`] and write results through out
//! pointers. On failure `rmplan_last_error()` describes what went wrong on
//! the calling thread. Strings handed out by the library are owned by the
//! caller and released with `rmplan_string_free`; handles are released with
//! their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rmplan::env::game24::{oracle_solve, witness_actions};
use rmplan::env::{Game24Env, Puzzle};
use rmplan::reward::{model::pairwise_loss_from_delta, LinearRewardModel, RewardError};
use rmplan::trajectory::{Action, Environment, Trajectory, DEFAULT_MAX_ACTIONS};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmplanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidAction = 4,
    Terminal = 5,
    Parse = 6,
    Io = 7,
    DimensionMismatch = 8,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: RmplanStatus, msg: impl Into<String>) -> RmplanStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `Panic` so they never cross the boundary.
fn guard(f: impl FnOnce() -> Result<(), (RmplanStatus, String)>) -> RmplanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RmplanStatus::Ok
        }
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(RmplanStatus::Panic, "internal panic"),
    }
}

type Res<T> = Result<T, (RmplanStatus, String)>;

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err((RmplanStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RmplanStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn check_out<T>(p: *mut T, name: &str) -> Res<()> {
    if p.is_null() {
        Err((RmplanStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn reward_status(e: &RewardError) -> RmplanStatus {
    match e {
        RewardError::DimensionMismatch { .. } => RmplanStatus::DimensionMismatch,
        RewardError::Io(_) => RmplanStatus::Io,
        RewardError::Format(_) => RmplanStatus::Parse,
        _ => RmplanStatus::InvalidArgument,
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rmplan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn rmplan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmplan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A Game of 24 episode: the environment plus the trajectory so far.
pub struct RmplanGame24 {
    env: Game24Env,
    trajectory: Trajectory,
}

unsafe fn puzzle_arg(numbers: *const i64, len: usize) -> Res<Puzzle> {
    if numbers.is_null() {
        return Err((RmplanStatus::NullPointer, "numbers is null".into()));
    }
    let slice = std::slice::from_raw_parts(numbers, len);
    Puzzle::new(slice).map_err(|e| (RmplanStatus::InvalidArgument, e.to_string()))
}

/// Starts an episode on the puzzle `numbers[0..len]` (four integers in 1..=13).
///
/// # Safety
/// `numbers` must point to `len` readable integers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_new(numbers: *const i64, len: usize, out: *mut *mut RmplanGame24) -> RmplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let (env, trajectory) = Game24Env::new(puzzle_arg(numbers, len)?).fresh();
        *out = Box::into_raw(Box::new(RmplanGame24 { env, trajectory }));
        Ok(())
    })
}

/// # Safety
/// `game` must be null or a handle from `rmplan_game24_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_free(game: *mut RmplanGame24) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

unsafe fn game<'a>(p: *mut RmplanGame24) -> Res<&'a mut RmplanGame24> {
    p.as_mut().ok_or((RmplanStatus::NullPointer, "game is null".into()))
}

/// Applies `action` and writes the observation to `*observation` (free it
/// with `rmplan_string_free`). Unparseable steps are answered with the
/// invalid-action observation like any other step; only a finished or
/// full-length episode is refused.
///
/// # Safety
/// `game` must be a live handle, `action` a NUL-terminated string and
/// `observation` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_step(
    game_ptr: *mut RmplanGame24,
    action: *const c_char,
    observation: *mut *mut c_char,
) -> RmplanStatus {
    guard(|| {
        let g = game(game_ptr)?;
        check_out(observation, "observation")?;
        let action = Action::new(str_arg(action, "action")?).map_err(|e| (RmplanStatus::InvalidAction, e.to_string()))?;
        if g.trajectory.terminal || g.env.is_terminal() {
            return Err((RmplanStatus::Terminal, "the episode is over".into()));
        }
        if g.trajectory.len() >= DEFAULT_MAX_ACTIONS {
            return Err((RmplanStatus::Terminal, format!("the episode already has {DEFAULT_MAX_ACTIONS} actions")));
        }
        let obs = g.env.step(&action);
        let text = obs.text.clone();
        g.trajectory
            .push(action, obs, DEFAULT_MAX_ACTIONS)
            .map_err(|e| (RmplanStatus::Terminal, e.to_string()))?;
        g.trajectory.terminal = g.env.is_terminal();
        g.trajectory.oracle_reward = g.env.oracle_outcome().map(|o| o.oracle_reward);
        *observation = owned_string(text);
        Ok(())
    })
}

/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_is_terminal(game_ptr: *mut RmplanGame24, out: *mut bool) -> RmplanStatus {
    guard(|| {
        let g = game(game_ptr)?;
        check_out(out, "out")?;
        *out = g.env.is_terminal();
        Ok(())
    })
}

/// Oracle reward of the current state: 1 at 24, 0 otherwise.
///
/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_reward(game_ptr: *mut RmplanGame24, out: *mut f64) -> RmplanStatus {
    guard(|| {
        let g = game(game_ptr)?;
        check_out(out, "out")?;
        *out = g.env.oracle_outcome().map_or(0.0, |o| o.oracle_reward);
        Ok(())
    })
}

/// Legal steps from the current state as a JSON array of strings.
///
/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_valid_actions(game_ptr: *mut RmplanGame24, out: *mut *mut c_char) -> RmplanStatus {
    guard(|| {
        let g = game(game_ptr)?;
        check_out(out, "out")?;
        let actions: Vec<String> = g.env.valid_actions().iter().map(|a| a.as_str().to_string()).collect();
        *out = owned_string(serde_json::to_string(&actions).expect("strings serialize"));
        Ok(())
    })
}

/// The episode so far as one JSON line.
///
/// # Safety
/// `game` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_trajectory(game_ptr: *mut RmplanGame24, out: *mut *mut c_char) -> RmplanStatus {
    guard(|| {
        let g = game(game_ptr)?;
        check_out(out, "out")?;
        *out = owned_string(g.trajectory.to_json_line());
        Ok(())
    })
}

/// Decides solvability. When solvable and `witness` is non-null, writes the
/// three solving steps as a JSON array of strings; otherwise writes null.
///
/// # Safety
/// `numbers` must point to `len` readable integers; `solvable` must be
/// writable; `witness` may be null.
#[no_mangle]
pub unsafe extern "C" fn rmplan_game24_solve(
    numbers: *const i64,
    len: usize,
    solvable: *mut bool,
    witness: *mut *mut c_char,
) -> RmplanStatus {
    guard(|| {
        check_out(solvable, "solvable")?;
        let puzzle = puzzle_arg(numbers, len)?;
        *solvable = oracle_solve(&puzzle).solvable;
        if !witness.is_null() {
            *witness = match witness_actions(&puzzle) {
                Some(steps) => {
                    let steps: Vec<&str> = steps.iter().map(Action::as_str).collect();
                    owned_string(serde_json::to_string(&steps).expect("strings serialize"))
                }
                None => ptr::null_mut(),
            };
        }
        Ok(())
    })
}

/// Checks a trajectory JSON line: it must parse and hold at most
/// `max_actions` steps.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rmplan_trajectory_validate(json: *const c_char, max_actions: usize) -> RmplanStatus {
    guard(|| {
        let t = Trajectory::from_json_line(str_arg(json, "json")?).map_err(|e| (RmplanStatus::Parse, e.to_string()))?;
        t.validate_with_limit(max_actions)
            .map_err(|e| (RmplanStatus::InvalidArgument, e))
    })
}

/// A loaded linear reward model.
pub struct RmplanRewardModel {
    model: LinearRewardModel,
}

/// Loads a model file, verifying its digest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_reward_model_load(path: *const c_char, out: *mut *mut RmplanRewardModel) -> RmplanStatus {
    guard(|| {
        check_out(out, "out")?;
        let model = LinearRewardModel::load(str_arg(path, "path")?).map_err(|e| (reward_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(RmplanRewardModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `rmplan_reward_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmplan_reward_model_free(model: *mut RmplanRewardModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension of the model.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_reward_model_dim(model: *const RmplanRewardModel, out: *mut usize) -> RmplanStatus {
    guard(|| {
        let m = model.as_ref().ok_or((RmplanStatus::NullPointer, "model is null".to_string()))?;
        check_out(out, "out")?;
        *out = m.model.params.dim;
        Ok(())
    })
}

/// Scores a trajectory given as one JSON line.
///
/// # Safety
/// `model` must be a live handle, `trajectory_json` a NUL-terminated string
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rmplan_reward_model_score(
    model: *const RmplanRewardModel,
    trajectory_json: *const c_char,
    out: *mut f64,
) -> RmplanStatus {
    guard(|| {
        let m = model.as_ref().ok_or((RmplanStatus::NullPointer, "model is null".to_string()))?;
        check_out(out, "out")?;
        let t = Trajectory::from_json_line(str_arg(trajectory_json, "trajectory_json")?)
            .map_err(|e| (RmplanStatus::Parse, e.to_string()))?;
        *out = m.model.score_trajectory(&t).map_err(|e| (reward_status(&e), e.to_string()))?;
        Ok(())
    })
}

/// Pairwise loss `-ln σ(delta)` for a score difference `delta = r+ - r-`.
#[no_mangle]
pub extern "C" fn rmplan_pairwise_loss(delta: f64) -> f64 {
    pairwise_loss_from_delta(delta)
}
