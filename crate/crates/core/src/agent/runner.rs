//! Episode driving, the training loop and greedy evaluation.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dqn::{DqnAgent, LinearSchedule};
use super::replay::quantize;
use super::{derive_seed, AgentError};
use crate::eval::{HistoryPoint, TrainingHistory};
use crate::generation::{generate_for_task, GeneratedRm};
use crate::grid::{Cmdp, Context, Episode, TaskMdp};
use crate::planning::{desired_label, DesiredMode, RmPlan};
use crate::repr::{reward_for_agent, ObservationBuilder, ReprConfig};
use crate::rm::{Label, RmRunState};

/// A generated machine together with its value table and greedy policy.
#[derive(Debug, Clone)]
pub struct MachineBundle {
    pub generated: GeneratedRm,
    pub plan: RmPlan,
}

/// One context with its task and, when the representation needs it, its
/// machine. Built once per context and reused across episodes.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub context: Context,
    pub task: TaskMdp,
    pub machine: Option<MachineBundle>,
}

pub fn prepare_tasks(
    cmdp: &Cmdp,
    contexts: &[Context],
    cfg: &ReprConfig,
    sector_size: (usize, usize),
) -> Result<Vec<PreparedTask>, AgentError> {
    contexts
        .iter()
        .map(|context| {
            let task = cmdp.instantiate(context)?;
            let machine = if cfg.needs_rm() {
                let generated = generate_for_task(&task, sector_size)?;
                let plan = RmPlan::new(&generated.rm, cmdp.gamma)?;
                Some(MachineBundle { generated, plan })
            } else {
                None
            };
            Ok(PreparedTask {
                context: context.clone(),
                task,
                machine,
            })
        })
        .collect()
}

/// Vocabulary size shared by every machine of the family.
pub fn family_symbol_width(cmdp: &Cmdp, sample: &Context, sector_size: (usize, usize)) -> Result<usize, AgentError> {
    let task = cmdp.instantiate(sample)?;
    Ok(generate_for_task(&task, sector_size)?.rm.vocabulary().len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverStep {
    pub env_reward: f64,
    pub agent_reward: f64,
    pub done: bool,
    pub truncated: bool,
}

/// Steps one episode of a prepared task, keeping the machine run and the
/// desired label in sync with the environment.
#[derive(Debug, Clone)]
pub struct EpisodeDriver<'a> {
    builder: &'a ObservationBuilder,
    prepared: &'a PreparedTask,
    mode: DesiredMode,
    pub episode: Episode,
    pub run: Option<RmRunState>,
    pub dtl: Option<Label>,
}

impl<'a> EpisodeDriver<'a> {
    pub fn start<R: Rng + ?Sized>(
        builder: &'a ObservationBuilder,
        prepared: &'a PreparedTask,
        mode: DesiredMode,
        rng: &mut R,
    ) -> Self {
        let s0 = prepared.task.reset(rng);
        let mut driver = Self {
            builder,
            prepared,
            mode,
            run: prepared.machine.as_ref().map(|m| {
                let u0 = m.generated.labeler.initial_state(&m.generated.rm, &s0);
                RmRunState::starting_at(&m.generated.rm, u0)
            }),
            episode: Episode::new(s0),
            dtl: None,
        };
        driver.refresh_dtl(rng);
        driver
    }

    fn refresh_dtl<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if let (Some(m), Some(run)) = (&self.prepared.machine, &self.run) {
            self.dtl = Some(desired_label(&m.generated.rm, &m.plan.policy, run.current, self.mode, rng));
        }
    }

    pub fn observation(&self) -> Result<Vec<f64>, AgentError> {
        let mut obs = self.builder.build(
            &self.prepared.task,
            &self.episode.state,
            &self.prepared.context,
            self.run.as_ref(),
            self.dtl.as_ref(),
        )?;
        quantize(&mut obs);
        Ok(obs)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action_index: usize, rng: &mut R) -> Result<DriverStep, AgentError> {
        let task = &self.prepared.task;
        let action = task.action(action_index);
        let before = self.episode.state.clone();
        let result = self.episode.step(task, action)?;
        let agent_reward = match (&self.prepared.machine, &mut self.run) {
            (Some(m), Some(run)) => {
                let rm = &m.generated.rm;
                let label = m.generated.labeler.label(&before, action, &result.next);
                let r = reward_for_agent(
                    &self.builder.cfg,
                    result.reward,
                    Some((rm, &m.plan.table)),
                    run.current,
                    &label,
                )?;
                run.advance(rm, label)?;
                debug_assert_eq!(
                    run.terminated, result.done,
                    "machine and environment disagree on task completion"
                );
                r
            }
            _ => result.reward,
        };
        self.refresh_dtl(rng);
        Ok(DriverStep {
            env_reward: result.reward,
            agent_reward,
            done: result.done,
            truncated: result.truncated,
        })
    }
}

/// Mean discounted environment return of the greedy policy over `episodes`
/// episodes, each on a uniformly drawn task.
pub fn evaluate_policy<R: Rng + ?Sized>(
    agent: &DqnAgent,
    builder: &ObservationBuilder,
    tasks: &[PreparedTask],
    episodes: usize,
    gamma: f64,
    mode: DesiredMode,
    rng: &mut R,
) -> Result<f64, AgentError> {
    if tasks.is_empty() || episodes == 0 {
        return Err(AgentError::Config("evaluation needs tasks and at least one episode".into()));
    }
    let mut total = 0.0;
    let mut visited = HashSet::new();
    for _ in 0..episodes {
        let prepared = &tasks[rng.gen_range(0..tasks.len())];
        let mut driver = EpisodeDriver::start(builder, prepared, mode, rng);
        let mut discount = 1.0;
        visited.clear();
        loop {
            // With a deterministic desired label the greedy rollout is a function
            // of this key, so a repeat means the episode cycles without reward
            // until truncation.
            if mode == DesiredMode::DeterministicFirst
                && !visited.insert((
                    driver.episode.state.clone(),
                    driver.run.as_ref().map(|r| (r.current, r.last_label.clone())),
                ))
            {
                break;
            }
            let a = agent.greedy_action(&driver.observation()?);
            let step = driver.step(a, rng)?;
            total += discount * step.env_reward;
            discount *= gamma;
            if step.done || step.truncated {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

/// Budget and evaluation settings of one training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSettings {
    pub total_steps: u64,
    /// Number of evenly spaced evaluations after the one at step 0.
    pub eval_intervals: u32,
    pub eval_episodes: usize,
    pub desired_mode: DesiredMode,
    pub seed: u64,
}

/// Runs the deep Q-learning loop on `train` for `settings.total_steps`
/// environment steps. The greedy policy is evaluated at step 0 and after
/// each interval on every entry of `eval_sets`; one history per entry is
/// returned.
pub fn train_phase(
    agent: &mut DqnAgent,
    builder: &ObservationBuilder,
    train: &[PreparedTask],
    eval_sets: &[&[PreparedTask]],
    settings: &PhaseSettings,
) -> Result<Vec<TrainingHistory>, AgentError> {
    if train.is_empty() {
        return Err(AgentError::Config("training needs at least one task".into()));
    }
    let cfg = agent.config.clone();
    let gamma = builder.cmdp().gamma;
    let total = settings.total_steps;
    let intervals = settings.eval_intervals.max(1) as u64;
    let eps = LinearSchedule::new(
        cfg.exploration_initial_eps,
        cfg.exploration_final_eps,
        cfg.exploration_fraction,
        total,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, 1));
    let mut histories = vec![TrainingHistory::default(); eval_sets.len()];
    let mut evaluate = |agent: &DqnAgent, k: u64, steps: u64| -> Result<(), AgentError> {
        for (i, (set, history)) in eval_sets.iter().zip(histories.iter_mut()).enumerate() {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, 1000 + (i as u64) * 100_003 + k));
            let mean_return = evaluate_policy(
                agent,
                builder,
                set,
                settings.eval_episodes,
                gamma,
                settings.desired_mode,
                &mut eval_rng,
            )?;
            history.points.push(HistoryPoint {
                progress_percent: 100.0 * k as f64 / intervals as f64,
                env_steps: steps,
                mean_return,
            });
        }
        Ok(())
    };
    evaluate(agent, 0, 0)?;
    let mut next_eval = 1u64;
    let mut t = 0u64;
    while t < total {
        let prepared = &train[rng.gen_range(0..train.len())];
        let mut driver = EpisodeDriver::start(builder, prepared, settings.desired_mode, &mut rng);
        let mut obs = driver.observation()?;
        loop {
            let a = agent.act(&obs, eps.value(t), &mut rng);
            let step = driver.step(a, &mut rng)?;
            let next_obs = driver.observation()?;
            // truncation still bootstraps, only true termination does not
            agent.buffer.push(&obs, a, step.agent_reward, &next_obs, step.done);
            obs = next_obs;
            t += 1;
            if t > cfg.learning_starts && t.is_multiple_of(cfg.train_freq) {
                for _ in 0..cfg.gradient_steps {
                    agent.train_step(&mut rng);
                }
            }
            if t.is_multiple_of(cfg.target_update_interval) {
                agent.sync_target();
            }
            while next_eval <= intervals && t >= (next_eval * total).div_ceil(intervals) {
                evaluate(agent, next_eval, t)?;
                next_eval += 1;
            }
            if step.done || step.truncated || t >= total {
                break;
            }
        }
    }
    // zero-step budgets still report a full curve
    while next_eval <= intervals {
        evaluate(agent, next_eval, t)?;
        next_eval += 1;
    }
    Ok(histories)
}
