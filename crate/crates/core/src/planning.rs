//! Planning over reward machines: value iteration on abstract states, optimal
//! abstract transitions and potential-based shaping with the optimal values.

use rand::Rng;
use std::fmt::Write as _;

use crate::rm::{Label, RewardMachine, RmError, StateId};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;
pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("state `{0}` is terminal")]
    TerminalState(String),
    #[error(transparent)]
    Rm(#[from] RmError),
}

/// Optimal values over abstract states; also the shaping potential.
#[derive(Debug, Clone, PartialEq)]
pub struct RmValueTable {
    pub values: Vec<f64>,
    pub gamma: f64,
    pub iterations_run: usize,
    pub residual: f64,
}

impl RmValueTable {
    pub fn value(&self, u: StateId) -> f64 {
        self.values[u.0]
    }

    /// Two-column `state value` dump.
    pub fn dump(&self, rm: &RewardMachine) -> String {
        let mut out = String::new();
        for u in rm.state_ids() {
            let _ = writeln!(out, "{}\t{}", rm.state_name(u), self.value(u));
        }
        out
    }
}

fn check_params(gamma: f64, tol: f64) -> Result<(), PlanningError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(PlanningError::InvalidGamma(gamma));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(PlanningError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Synchronous value iteration over the declared transitions of `rm`.
///
/// Starting from zero, each sweep sets `V(u) = max_t [r_t + gamma * V(to_t)]`
/// over `u`'s outgoing transitions and keeps terminal states at zero. Labels
/// that match no guard self-loop with reward 0; that score never beats the
/// fixpoint, so they are left out of the max.
pub fn value_iteration(
    rm: &RewardMachine,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<RmValueTable, PlanningError> {
    check_params(gamma, tol)?;
    let n = rm.num_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        residual = 0.0;
        for u in rm.state_ids() {
            let v = if rm.is_terminal(u) {
                0.0
            } else {
                rm.outgoing(u)
                    .iter()
                    .map(|t| t.reward + gamma * values[t.to.0])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            residual = f64::max(residual, (v - values[u.0]).abs());
            next[u.0] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if residual < tol {
            return Ok(RmValueTable {
                values,
                gamma,
                iterations_run: iterations,
                residual,
            });
        }
    }
    Err(PlanningError::NotConverged {
        iterations,
        residual,
    })
}

pub fn value_iteration_default(rm: &RewardMachine, gamma: f64) -> Result<RmValueTable, PlanningError> {
    value_iteration(rm, gamma, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
}

/// One stochastic outcome of an action: `(next state, probability, reward)`.
pub type Outcome = (usize, f64, f64);

/// A finite MDP with explicit outcome lists; states without actions are
/// worth zero.
#[derive(Debug, Clone, Default)]
pub struct FiniteMdp {
    pub actions: Vec<Vec<Vec<Outcome>>>,
}

#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FiniteMdp {
    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn q_value(&self, s: usize, a: usize, values: &[f64], gamma: f64) -> f64 {
        self.actions[s][a]
            .iter()
            .map(|&(next, p, r)| p * (r + gamma * values[next]))
            .sum()
    }

    /// Standard Bellman-optimality iteration.
    pub fn solve(&self, gamma: f64, tol: f64, max_iters: usize) -> Result<MdpSolution, PlanningError> {
        check_params(gamma, tol)?;
        let n = self.num_states();
        let mut values = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut residual: f64 = f64::INFINITY;
        for iterations in 1..=max_iters {
            residual = 0.0;
            for s in 0..n {
                let v = (0..self.actions[s].len())
                    .map(|a| self.q_value(s, a, &values, gamma))
                    .fold(f64::NEG_INFINITY, f64::max);
                let v = if v.is_finite() { v } else { 0.0 };
                residual = residual.max((v - values[s]).abs());
                next[s] = v;
            }
            std::mem::swap(&mut values, &mut next);
            if residual < tol {
                return Ok(MdpSolution {
                    values,
                    iterations,
                    residual,
                });
            }
        }
        Err(PlanningError::NotConverged {
            iterations: max_iters,
            residual,
        })
    }

    /// Actions whose Q-value lies within `tie_epsilon` of the best.
    pub fn greedy_actions(&self, s: usize, values: &[f64], gamma: f64, tie_epsilon: f64) -> Vec<usize> {
        let q: Vec<f64> = (0..self.actions[s].len())
            .map(|a| self.q_value(s, a, values, gamma))
            .collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..q.len()).filter(|&a| q[a] >= best - tie_epsilon).collect()
    }
}

/// Deterministic MDP over the machine's states whose actions are the declared
/// transitions of each state; terminal states get one absorbing action.
pub fn build_equivalent_mdp(rm: &RewardMachine) -> FiniteMdp {
    FiniteMdp {
        actions: rm
            .state_ids()
            .map(|u| {
                if rm.is_terminal(u) {
                    vec![vec![(u.0, 1.0, 0.0)]]
                } else {
                    rm.outgoing(u)
                        .iter()
                        .map(|t| vec![(t.to.0, 1.0, t.reward)])
                        .collect()
                }
            })
            .collect(),
    }
}

fn transition_score(rm: &RewardMachine, table: &RmValueTable, u: StateId, i: usize) -> f64 {
    let t = &rm.outgoing(u)[i];
    t.reward + table.gamma * table.value(t.to)
}

/// Indices of `u`'s outgoing transitions scoring within `tie_epsilon` of the
/// best, in declaration order.
pub fn greedy_transitions(
    rm: &RewardMachine,
    table: &RmValueTable,
    u: StateId,
    tie_epsilon: f64,
) -> Result<Vec<usize>, PlanningError> {
    if rm.is_terminal(u) {
        return Err(PlanningError::TerminalState(rm.state_name(u).to_string()));
    }
    let scores: Vec<f64> = (0..rm.outgoing(u).len())
        .map(|i| transition_score(rm, table, u, i))
        .collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..scores.len())
        .filter(|&i| scores[i] >= best - tie_epsilon)
        .collect())
}

/// Optimal transition sets for every non-terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct RmGreedyPolicy {
    choices: Vec<Vec<usize>>,
}

impl RmGreedyPolicy {
    pub fn new(rm: &RewardMachine, table: &RmValueTable, tie_epsilon: f64) -> Self {
        let choices = rm
            .state_ids()
            .map(|u| {
                if rm.is_terminal(u) {
                    Vec::new()
                } else {
                    greedy_transitions(rm, table, u, tie_epsilon).expect("non-terminal state")
                }
            })
            .collect();
        Self { choices }
    }

    /// Empty for terminal states.
    pub fn choices(&self, u: StateId) -> &[usize] {
        &self.choices[u.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesiredMode {
    #[default]
    DeterministicFirst,
    UniformSample,
}

/// Label made of the positive literals of an optimal outgoing transition;
/// all-zero at terminal states.
pub fn desired_label<R: Rng + ?Sized>(
    rm: &RewardMachine,
    policy: &RmGreedyPolicy,
    u: StateId,
    mode: DesiredMode,
    rng: &mut R,
) -> Label {
    let width = rm.vocabulary().len();
    let choices = policy.choices(u);
    if rm.is_terminal(u) || choices.is_empty() {
        return Label::empty(width);
    }
    let pick = match mode {
        DesiredMode::DeterministicFirst => choices[0],
        DesiredMode::UniformSample => choices[rng.gen_range(0..choices.len())],
    };
    Label::from_indices(width, rm.outgoing(u)[pick].guard.positives())
}

/// `R(u, label) + gamma * V(u') - V(u)` where `u'` is the machine's successor.
pub fn shaped_reward(
    rm: &RewardMachine,
    table: &RmValueTable,
    gamma: f64,
    u: StateId,
    label: &Label,
) -> Result<f64, PlanningError> {
    let (next, reward) = rm.step(u, label)?;
    Ok(reward + gamma * table.value(next) - table.value(u))
}

/// Value table and greedy policy for one machine, computed once per context.
#[derive(Debug, Clone)]
pub struct RmPlan {
    pub table: RmValueTable,
    pub policy: RmGreedyPolicy,
}

impl RmPlan {
    pub fn new(rm: &RewardMachine, gamma: f64) -> Result<Self, PlanningError> {
        let table = value_iteration_default(rm, gamma)?;
        let policy = RmGreedyPolicy::new(rm, &table, DEFAULT_TIE_EPSILON);
        Ok(Self { table, policy })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::{parse_rm, ORDER2_TEXT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn order2() -> RewardMachine {
        parse_rm(ORDER2_TEXT).unwrap()
    }

    #[test]
    fn order2_fixpoint() {
        let rm = order2();
        let table = value_iteration(&rm, 0.99, 1e-10, 1_000_000).unwrap();
        assert_eq!(table.values[2], 0.0);
        assert!((table.values[1] - 1.0).abs() < 1e-12);
        assert!((table.values[0] - 0.99).abs() < 1e-12);
        assert!(table.residual < 1e-10);
    }

    #[test]
    fn single_terminal_machine() {
        let rm = parse_rm("STATES: g\nINITIAL: g\nTERMINAL: g\n").unwrap();
        let table = value_iteration_default(&rm, 0.9).unwrap();
        assert_eq!(table.values, vec![0.0]);
        let mdp = build_equivalent_mdp(&rm);
        assert_eq!(mdp.num_states(), 1);
        assert_eq!(mdp.solve(0.9, 1e-12, 100).unwrap().values, vec![0.0]);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let err = value_iteration(&order2(), 0.99, 1e-10, 1).unwrap_err();
        assert!(matches!(err, PlanningError::NotConverged { iterations: 1, residual } if residual > 0.0));
        assert!(matches!(value_iteration(&order2(), 1.0, 1e-10, 10), Err(PlanningError::InvalidGamma(_))));
    }

    #[test]
    fn equivalent_mdp_shape() {
        let rm = order2();
        let mdp = build_equivalent_mdp(&rm);
        assert_eq!(mdp.num_states(), 3);
        assert_eq!(mdp.actions[0].len(), 2);
        assert_eq!(mdp.actions[1].len(), 2);
        assert_eq!(mdp.actions[2], vec![vec![(2, 1.0, 0.0)]]);
    }

    #[test]
    fn greedy_picks_progress_edge() {
        let rm = order2();
        let table = value_iteration_default(&rm, 0.99).unwrap();
        assert_eq!(greedy_transitions(&rm, &table, StateId(0), 1e-9).unwrap(), vec![1]);
        assert_eq!(greedy_transitions(&rm, &table, StateId(0), 0.0).unwrap(), vec![1]);
        assert!(greedy_transitions(&rm, &table, StateId(2), 1e-9).is_err());
    }

    #[test]
    fn symmetric_ties_keep_declaration_order() {
        let rm = parse_rm(
            "SYMBOLS:\n A\n B\nSTATES: s, g\nINITIAL: s\nTERMINAL: g\nTRANSITIONS:\n\
             (s, A) --> next=g;r=1\n(s, B) --> next=g;r=1\n",
        )
        .unwrap();
        let table = value_iteration_default(&rm, 0.9).unwrap();
        assert_eq!(greedy_transitions(&rm, &table, StateId(0), 1e-9).unwrap(), vec![0, 1]);
        let policy = RmGreedyPolicy::new(&rm, &table, 1e-9);
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16)
                .map(|_| desired_label(&rm, &policy, StateId(0), DesiredMode::UniformSample, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(pick(7), pick(7));
        let labels = pick(7);
        assert!(labels.contains(&Label::from_indices(2, &[0])) && labels.contains(&Label::from_indices(2, &[1])));
    }

    #[test]
    fn desired_labels_on_order2() {
        let rm = order2();
        let plan = RmPlan::new(&rm, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dtl = desired_label(&rm, &plan.policy, StateId(0), DesiredMode::DeterministicFirst, &mut rng);
        assert_eq!(dtl.bits(), [true, false]);
        let dtl = desired_label(&rm, &plan.policy, StateId(2), DesiredMode::DeterministicFirst, &mut rng);
        assert_eq!(dtl.bits(), [false, false]);
    }

    #[test]
    fn shaping_on_order2() {
        let rm = order2();
        let table = value_iteration_default(&rm, 0.99).unwrap();
        let v = rm.vocabulary();
        let p1 = v.label_of(&["P1"]).unwrap();
        let p2 = v.label_of(&["P2"]).unwrap();
        let none = Label::empty(2);
        assert!(shaped_reward(&rm, &table, 0.99, StateId(0), &p1).unwrap().abs() < 1e-12);
        assert!(shaped_reward(&rm, &table, 0.99, StateId(1), &p2).unwrap().abs() < 1e-12);
        let self_loop = shaped_reward(&rm, &table, 0.99, StateId(0), &none).unwrap();
        assert!((self_loop + 0.0099).abs() < 1e-12, "{self_loop}");
        assert!(shaped_reward(&rm, &table, 0.99, StateId(2), &none).is_err());
    }

    #[test]
    fn dump_lists_every_state() {
        let rm = order2();
        let table = value_iteration_default(&rm, 0.99).unwrap();
        assert_eq!(table.dump(&rm).lines().count(), 3);
    }
}
