//! C ABI over the `cprep` library.
//!
//! Every fallible function returns a [`CprepStatus`]; on failure the message
//! is available from [`cprep_last_error`] on the same thread. Handles are
//! opaque, created by `*_new`/`*_parse` functions and released with the
//! matching `*_free`. Strings returned as `char *` must be released with
//! [`cprep_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cprep::eval::{iqm, threshold_grid, tr, ttt_auc, TrainingHistory, TransferRatio};
use cprep::grid::{Cmdp, Context, EnvKind, Episode, TaskMdp};
use cprep::planning::{desired_label, shaped_reward, DesiredMode, RmPlan};
use cprep::rm::{parse_rm, serialize_rm, to_dot, Label, RewardMachine, StateId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CprepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Planning = 5,
    Terminated = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// A parsed reward machine.
pub struct CprepRewardMachine {
    rm: RewardMachine,
}

/// Optimal values and greedy transitions of a reward machine.
pub struct CprepPlan {
    rm: RewardMachine,
    plan: RmPlan,
}

/// One gridworld task with an episode in progress.
pub struct CprepTask {
    task: TaskMdp,
    episode: Option<Episode>,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (CprepStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guarded<F: FnOnce() -> Result<(), Failure>>(f: F) -> CprepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CprepStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CprepStatus::Internal
        }
    }
}

fn null() -> Failure {
    (CprepStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl ToString) -> Failure {
    (CprepStatus::InvalidArgument, msg.to_string())
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

unsafe fn as_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CprepStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn as_mut_slice<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

fn state(rm: &RewardMachine, index: usize) -> Result<StateId, Failure> {
    if index < rm.num_states() {
        Ok(StateId(index))
    } else {
        Err(invalid(format!("state index {index} out of range")))
    }
}

fn label(rm: &RewardMachine, bits: &[u8]) -> Result<Label, Failure> {
    if bits.len() != rm.vocabulary().len() {
        return Err(invalid(format!(
            "label has {} entries, machine has {} symbols",
            bits.len(),
            rm.vocabulary().len()
        )));
    }
    Ok(Label::from_bits(bits.iter().map(|&b| b != 0).collect()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cprep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cprep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cprep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses reward-machine text into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_parse(text: *const c_char, out: *mut *mut CprepRewardMachine) -> CprepStatus {
    guarded(|| {
        let out = as_mut(out)?;
        let rm = parse_rm(as_str(text)?).map_err(|e| (CprepStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(CprepRewardMachine { rm }));
        Ok(())
    })
}

/// # Safety
/// `rm` must come from [`cprep_rm_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_free(rm: *mut CprepRewardMachine) {
    if !rm.is_null() {
        drop(Box::from_raw(rm));
    }
}

/// Number of states (0 for a null handle).
///
/// # Safety
/// `rm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_num_states(rm: *const CprepRewardMachine) -> usize {
    rm.as_ref().map_or(0, |m| m.rm.num_states())
}

/// Number of propositional symbols (0 for a null handle).
///
/// # Safety
/// `rm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_num_symbols(rm: *const CprepRewardMachine) -> usize {
    rm.as_ref().map_or(0, |m| m.rm.vocabulary().len())
}

/// # Safety
/// `rm` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_initial_state(rm: *const CprepRewardMachine, out: *mut usize) -> CprepStatus {
    guarded(|| {
        *as_mut(out)? = as_ref(rm)?.rm.initial().0;
        Ok(())
    })
}

/// # Safety
/// `rm` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_is_terminal(
    rm: *const CprepRewardMachine,
    state_index: usize,
    out: *mut bool,
) -> CprepStatus {
    guarded(|| {
        let rm = &as_ref(rm)?.rm;
        *as_mut(out)? = rm.is_terminal(state(rm, state_index)?);
        Ok(())
    })
}

/// Index of the state called `name`.
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_state_index(
    rm: *const CprepRewardMachine,
    name: *const c_char,
    out: *mut usize,
) -> CprepStatus {
    guarded(|| {
        let rm = &as_ref(rm)?.rm;
        let name = as_str(name)?;
        *as_mut(out)? = rm
            .state_by_name(name)
            .ok_or_else(|| invalid(format!("unknown state `{name}`")))?
            .0;
        Ok(())
    })
}

/// Index of the symbol called `name`.
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_symbol_index(
    rm: *const CprepRewardMachine,
    name: *const c_char,
    out: *mut usize,
) -> CprepStatus {
    guarded(|| {
        let rm = &as_ref(rm)?.rm;
        let name = as_str(name)?;
        *as_mut(out)? = rm
            .vocabulary()
            .index_of(name)
            .ok_or_else(|| invalid(format!("unknown symbol `{name}`")))?;
        Ok(())
    })
}

/// Applies the first matching transition of `state_index` for a label given
/// as one byte per symbol (non-zero = true).
///
/// # Safety
/// `label` must hold `label_len` bytes; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_step(
    rm: *const CprepRewardMachine,
    state_index: usize,
    label_bits: *const u8,
    label_len: usize,
    out_next: *mut usize,
    out_reward: *mut f64,
) -> CprepStatus {
    guarded(|| {
        let rm = &as_ref(rm)?.rm;
        let u = state(rm, state_index)?;
        let l = label(rm, as_slice(label_bits, label_len)?)?;
        let (next, r) = rm.step(u, &l).map_err(|e| (CprepStatus::Terminated, e.to_string()))?;
        *as_mut(out_next)? = next.0;
        *as_mut(out_reward)? = r;
        Ok(())
    })
}

/// Graphviz DOT text, or null on failure. Free with [`cprep_string_free`].
///
/// # Safety
/// `rm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_to_dot(rm: *const CprepRewardMachine) -> *mut c_char {
    match rm.as_ref() {
        Some(m) => into_c_string(to_dot(&m.rm)),
        None => {
            set_error("null pointer argument");
            ptr::null_mut()
        }
    }
}

/// Canonical text form, or null on failure. Free with [`cprep_string_free`].
///
/// # Safety
/// `rm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_rm_serialize(rm: *const CprepRewardMachine) -> *mut c_char {
    match rm.as_ref() {
        Some(m) => into_c_string(serialize_rm(&m.rm)),
        None => {
            set_error("null pointer argument");
            ptr::null_mut()
        }
    }
}

/// Solves the machine for discount `gamma`. The plan keeps its own copy of
/// the machine.
///
/// # Safety
/// `rm` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cprep_plan_new(
    rm: *const CprepRewardMachine,
    gamma: f64,
    out: *mut *mut CprepPlan,
) -> CprepStatus {
    guarded(|| {
        let out = as_mut(out)?;
        let rm = as_ref(rm)?.rm.clone();
        let plan = RmPlan::new(&rm, gamma).map_err(|e| (CprepStatus::Planning, e.to_string()))?;
        *out = Box::into_raw(Box::new(CprepPlan { rm, plan }));
        Ok(())
    })
}

/// # Safety
/// `plan` must come from [`cprep_plan_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cprep_plan_free(plan: *mut CprepPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Writes the optimal value of every state into `out` (`len` >= states).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cprep_plan_values(plan: *const CprepPlan, out: *mut f64, len: usize) -> CprepStatus {
    guarded(|| {
        let p = as_ref(plan)?;
        let values = &p.plan.table.values;
        if len < values.len() {
            return Err((CprepStatus::BufferTooSmall, format!("need {} values", values.len())));
        }
        as_mut_slice(out, len)?[..values.len()].copy_from_slice(values);
        Ok(())
    })
}

/// Writes the desired label of `state_index` (one byte per symbol) into `out`;
/// the first optimal transition is used, and terminal states give all zeros.
///
/// # Safety
/// `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cprep_plan_desired_label(
    plan: *const CprepPlan,
    state_index: usize,
    out: *mut u8,
    len: usize,
) -> CprepStatus {
    guarded(|| {
        let p = as_ref(plan)?;
        let u = state(&p.rm, state_index)?;
        let width = p.rm.vocabulary().len();
        if len < width {
            return Err((CprepStatus::BufferTooSmall, format!("need {width} bytes")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = desired_label(&p.rm, &p.plan.policy, u, DesiredMode::DeterministicFirst, &mut rng);
        for (o, &b) in as_mut_slice(out, len)?.iter_mut().zip(l.bits()) {
            *o = b as u8;
        }
        Ok(())
    })
}

/// Machine reward plus potential shaping for one step from `state_index`.
///
/// # Safety
/// `label` must hold `label_len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_plan_shaped_reward(
    plan: *const CprepPlan,
    state_index: usize,
    label_bits: *const u8,
    label_len: usize,
    out: *mut f64,
) -> CprepStatus {
    guarded(|| {
        let p = as_ref(plan)?;
        let u = state(&p.rm, state_index)?;
        let l = label(&p.rm, as_slice(label_bits, label_len)?)?;
        *as_mut(out)? = shaped_reward(&p.rm, &p.plan.table, p.plan.table.gamma, u, &l)
            .map_err(|e| (CprepStatus::Terminated, e.to_string()))?;
        Ok(())
    })
}

/// Mean time to threshold of an evenly spaced learning curve over a grid of
/// `threshold_points` thresholds in [0, 1].
///
/// # Safety
/// `returns` must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_ttt_auc(
    returns: *const f64,
    n: usize,
    threshold_points: usize,
    out: *mut f64,
) -> CprepStatus {
    guarded(|| {
        let r = as_slice(returns, n)?;
        if r.len() < 2 || threshold_points < 2 {
            return Err(invalid("need at least 2 returns and 2 thresholds"));
        }
        *as_mut(out)? = ttt_auc(&TrainingHistory::from_returns(r), &threshold_grid(threshold_points));
        Ok(())
    })
}

/// Interquartile mean.
///
/// # Safety
/// `values` must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_iqm(values: *const f64, n: usize, out: *mut f64) -> CprepStatus {
    guarded(|| {
        *as_mut(out)? = iqm(as_slice(values, n)?).map_err(invalid)?;
        Ok(())
    })
}

/// Transfer ratio of two curves of equal length; `out_infinite` is set when
/// the from-scratch curve has zero area (and `out_value` is then 0).
///
/// # Safety
/// Both curves must hold `n` doubles; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_transfer_ratio(
    transferred: *const f64,
    target: *const f64,
    n: usize,
    out_value: *mut f64,
    out_infinite: *mut bool,
) -> CprepStatus {
    guarded(|| {
        let a = TrainingHistory::from_returns(as_slice(transferred, n)?);
        let b = TrainingHistory::from_returns(as_slice(target, n)?);
        let (v, inf) = match tr(&a, &b) {
            TransferRatio::Finite(v) => (v, false),
            TransferRatio::Infinite => (0.0, true),
        };
        *as_mut(out_value)? = v;
        *as_mut(out_infinite)? = inf;
        Ok(())
    })
}

/// Creates a 6x6 task of environment kind `env` ("GN", "MP", "PD", "ON")
/// from a JSON context such as `{"space":"EL","payload":[{"row":5,"col":5}]}`.
/// `seed` drives episode start positions.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_new(
    env: *const c_char,
    context_json: *const c_char,
    seed: u64,
    out: *mut *mut CprepTask,
) -> CprepStatus {
    guarded(|| {
        let out = as_mut(out)?;
        let kind: EnvKind = as_str(env)?.parse().map_err(invalid)?;
        let context: Context = serde_json::from_str(as_str(context_json)?).map_err(invalid)?;
        let entity_count = match (&context, kind) {
            (Context::EL(cells), EnvKind::PD) => cells.len() / 2,
            (Context::EL(cells), _) => cells.len(),
            (Context::PO(order), _) => order.len(),
            (Context::CM(_), k) => k.default_entity_count(),
        };
        let cmdp = Cmdp::with_size(kind, context.space(), 6, 6, entity_count).map_err(invalid)?;
        let task = cmdp.instantiate(&context).map_err(invalid)?;
        *out = Box::into_raw(Box::new(CprepTask {
            task,
            episode: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `task` must come from [`cprep_task_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_free(task: *mut CprepTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Number of discrete actions (0 for a null handle).
///
/// # Safety
/// `task` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_num_actions(task: *const CprepTask) -> usize {
    task.as_ref().map_or(0, |t| t.task.num_actions())
}

/// Length of the state feature vector (0 for a null handle).
///
/// # Safety
/// `task` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_state_width(task: *const CprepTask) -> usize {
    task.as_ref().map_or(0, |t| {
        t.task.map.num_cells() + t.task.env.status_width(t.task.entity_count)
    })
}

/// Starts a new episode at a random non-entity cell; writes the start cell's
/// row-major index.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_reset(task: *mut CprepTask, out_cell: *mut usize) -> CprepStatus {
    guarded(|| {
        let t = as_mut(task)?;
        let s = t.task.reset(&mut t.rng);
        *as_mut(out_cell)? = t.task.map.cell_index(s.agent);
        t.episode = Some(Episode::new(s));
        Ok(())
    })
}

/// Takes action `action` in the current episode.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_step(
    task: *mut CprepTask,
    action: usize,
    out_reward: *mut f64,
    out_done: *mut bool,
    out_truncated: *mut bool,
) -> CprepStatus {
    guarded(|| {
        let t = as_mut(task)?;
        if action >= t.task.num_actions() {
            return Err(invalid(format!("action {action} out of range")));
        }
        let a = t.task.action(action);
        let episode = t
            .episode
            .as_mut()
            .ok_or_else(|| invalid("no episode in progress; call cprep_task_reset"))?;
        let r = episode
            .step(&t.task, a)
            .map_err(|e| (CprepStatus::Terminated, e.to_string()))?;
        *as_mut(out_reward)? = r.reward;
        *as_mut(out_done)? = r.done;
        *as_mut(out_truncated)? = r.truncated;
        Ok(())
    })
}

/// Writes the current state features (cell one-hot then entity status).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_state_features(task: *const CprepTask, out: *mut f64, len: usize) -> CprepStatus {
    guarded(|| {
        let t = as_ref(task)?;
        let episode = t
            .episode
            .as_ref()
            .ok_or_else(|| invalid("no episode in progress; call cprep_task_reset"))?;
        let f = t.task.state_features(&episode.state);
        if len < f.len() {
            return Err((CprepStatus::BufferTooSmall, format!("need {} values", f.len())));
        }
        as_mut_slice(out, len)?[..f.len()].copy_from_slice(&f);
        Ok(())
    })
}

/// ASCII picture of the task with the agent, or null on failure. Free with
/// [`cprep_string_free`].
///
/// # Safety
/// `task` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprep_task_render(task: *const CprepTask) -> *mut c_char {
    match task.as_ref() {
        Some(t) => into_c_string(t.task.render(t.episode.as_ref().map(|e| e.state.agent))),
        None => {
            set_error("null pointer argument");
            ptr::null_mut()
        }
    }
}
