//! Exact planning on the product of a task and its reward machine, used as
//! a reference for learned policies and for the shaping-invariance check.

use std::collections::{HashMap, VecDeque};

use crate::generation::GeneratedRm;
use crate::grid::{EnvState, TaskMdp};
use crate::planning::{FiniteMdp, PlanningError, RmValueTable};
use crate::rm::StateId;

use super::AgentError;

pub const MAX_PRODUCT_STATES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductReward {
    /// The environment's own reward.
    Env,
    /// The machine's transition reward.
    RmRaw,
    /// Machine reward plus potential shaping with the given table.
    RmShaped,
}

#[derive(Debug, Clone)]
pub struct ProductSolution {
    /// Reachable `(environment state, machine state)` pairs; the absorbing
    /// end-of-episode node is not listed.
    pub states: Vec<(EnvState, StateId)>,
    pub values: Vec<f64>,
    /// Optimal action indices per listed state.
    pub greedy: Vec<Vec<usize>>,
    /// Indices of the valid episode starts.
    pub initial: Vec<usize>,
}

impl ProductSolution {
    pub fn index_of(&self, s: &EnvState, u: StateId) -> Option<usize> {
        self.states.iter().position(|(es, eu)| es == s && *eu == u)
    }
}

/// Builds the product reachable from every valid start and solves it without
/// the step cap. Completion of the task moves to an absorbing zero-reward node.
pub fn solve_product_mdp(
    task: &TaskMdp,
    machine: &GeneratedRm,
    table: &RmValueTable,
    reward: ProductReward,
    tie_epsilon: f64,
) -> Result<ProductSolution, AgentError> {
    let rm = &machine.rm;
    let gamma = table.gamma;
    let mut index: HashMap<(EnvState, StateId), usize> = HashMap::new();
    let mut states = Vec::new();
    let mut queue = VecDeque::new();
    let mut initial = Vec::new();
    for c in task.start_cells() {
        let s0 = task.initial_state(c);
        let u0 = machine.labeler.initial_state(rm, &s0);
        let key = (s0, u0);
        let i = *index.entry(key.clone()).or_insert_with(|| {
            states.push(key.clone());
            queue.push_back(states.len() - 1);
            states.len() - 1
        });
        initial.push(i);
    }
    // outcomes use usize::MAX as a placeholder for the absorbing node
    let mut actions: Vec<Vec<Vec<(usize, f64, f64)>>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (s, u) = states[i].clone();
        let mut per_action = Vec::with_capacity(task.num_actions());
        for a in 0..task.num_actions() {
            let action = task.action(a);
            let result = task.step(&s, action);
            let label = machine.labeler.label(&s, action, &result.next);
            let (u2, r_rm) = rm.step(u, &label).map_err(PlanningError::from)?;
            if rm.is_terminal(u2) != result.done {
                return Err(AgentError::Config(format!(
                    "machine and task disagree on completion at {:?}",
                    s.agent
                )));
            }
            let r = match reward {
                ProductReward::Env => result.reward,
                ProductReward::RmRaw => r_rm,
                ProductReward::RmShaped => r_rm + gamma * table.value(u2) - table.value(u),
            };
            let next = if result.done {
                usize::MAX
            } else {
                let key = (result.next, u2);
                match index.get(&key) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= MAX_PRODUCT_STATES {
                            return Err(AgentError::Config(format!(
                                "product exceeds {MAX_PRODUCT_STATES} states"
                            )));
                        }
                        states.push(key.clone());
                        index.insert(key, states.len() - 1);
                        queue.push_back(states.len() - 1);
                        states.len() - 1
                    }
                }
            };
            per_action.push(vec![(next, 1.0, r)]);
        }
        if actions.len() <= i {
            actions.resize(i + 1, Vec::new());
        }
        actions[i] = per_action;
    }
    let absorbing = states.len();
    for per_action in &mut actions {
        for outcomes in per_action.iter_mut() {
            for o in outcomes.iter_mut() {
                if o.0 == usize::MAX {
                    o.0 = absorbing;
                }
            }
        }
    }
    actions.push(vec![vec![(absorbing, 1.0, 0.0)]]);
    let mdp = FiniteMdp { actions };
    let solution = mdp.solve(gamma, 1e-12, 1_000_000)?;
    let greedy = (0..states.len())
        .map(|i| mdp.greedy_actions(i, &solution.values, gamma, tie_epsilon))
        .collect();
    let mut values = solution.values;
    values.truncate(states.len());
    Ok(ProductSolution {
        states,
        values,
        greedy,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::generate;
    use crate::grid::{Cell, Cmdp, Context, ContextSpace, EnvKind};
    use crate::planning::RmPlan;

    #[test]
    fn gn_values_follow_manhattan_distance() {
        let cmdp = Cmdp::new(EnvKind::GN, ContextSpace::EL).unwrap();
        let ctx = Context::EL(vec![Cell::new(5, 5)]);
        let task = cmdp.instantiate(&ctx).unwrap();
        let g = generate(&cmdp, &ctx, (2, 2)).unwrap();
        let plan = RmPlan::new(&g.rm, 0.99).unwrap();
        let sol = solve_product_mdp(&task, &g, &plan.table, ProductReward::Env, 1e-9).unwrap();
        for &i in &sol.initial {
            let (s, _) = &sol.states[i];
            // walk to the goal then one `Done`; reward arrives on that last step
            let d = (5 - s.agent.row) + (5 - s.agent.col);
            let expected = 0.99f64.powi(d as i32);
            assert!((sol.values[i] - expected).abs() < 1e-9, "{:?}", s.agent);
        }
    }
}
