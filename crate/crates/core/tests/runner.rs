use cprep::agent::{
    evaluate_policy, prepare_tasks, train_phase, DqnAgent, DqnConfig, EpisodeDriver, PhaseSettings, PreparedTask,
};
use cprep::grid::{Cmdp, ContextSpace, EnvKind};
use cprep::planning::DesiredMode;
use cprep::repr::{ObservationBuilder, ReprConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(env: EnvKind, space: ContextSpace, repr: &str, n: usize, seed: u64) -> (ObservationBuilder, Vec<PreparedTask>) {
    let cmdp = Cmdp::new(env, space).unwrap();
    let repr: ReprConfig = repr.parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (contexts, _) = cmdp.sample_contexts(n, 0, &mut rng).unwrap();
    let tasks = prepare_tasks(&cmdp, &contexts, &repr, (2, 2)).unwrap();
    let width = tasks[0].machine.as_ref().map_or(0, |m| m.generated.rm.vocabulary().len());
    let builder = ObservationBuilder::new(repr, &cmdp, None, width).unwrap();
    (builder, tasks)
}

/// Reference evaluation that always plays to the end of the episode.
fn full_rollout_return(
    agent: &DqnAgent,
    builder: &ObservationBuilder,
    tasks: &[PreparedTask],
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let gamma = builder.cmdp().gamma;
    let mut total = 0.0;
    for _ in 0..episodes {
        let prepared = &tasks[rng.gen_range(0..tasks.len())];
        let mut driver = EpisodeDriver::start(builder, prepared, DesiredMode::DeterministicFirst, rng);
        let mut discount = 1.0;
        loop {
            let a = agent.greedy_action(&driver.observation().unwrap());
            let step = driver.step(a, rng).unwrap();
            total += discount * step.env_reward;
            discount *= gamma;
            if step.done || step.truncated {
                break;
            }
        }
    }
    total / episodes as f64
}

#[test]
fn cycle_cut_off_matches_full_rollouts() {
    for (env, space, repr) in [
        (EnvKind::GN, ContextSpace::EL, "CTL+C-PREP"),
        (EnvKind::MP, ContextSpace::EL, "CTL+LTL"),
        (EnvKind::ON, ContextSpace::PO, "CTL+DTL"),
        (EnvKind::PD, ContextSpace::EL, "CTL"),
    ] {
        let (builder, tasks) = setup(env, space, repr, 5, 1);
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let agent = DqnAgent::new(DqnConfig::default(), builder.width(), env.num_actions(), &mut rng);
            let gamma = builder.cmdp().gamma;
            let fast = evaluate_policy(
                &agent,
                &builder,
                &tasks,
                20,
                gamma,
                DesiredMode::DeterministicFirst,
                &mut ChaCha8Rng::seed_from_u64(100 + seed),
            )
            .unwrap();
            let slow = full_rollout_return(&agent, &builder, &tasks, 20, &mut ChaCha8Rng::seed_from_u64(100 + seed));
            assert_eq!(fast, slow, "{env:?} {repr} seed {seed}");
        }
    }
}

#[test]
fn every_step_lands_in_replay_and_curve_is_complete() {
    let (builder, tasks) = setup(EnvKind::GN, ContextSpace::EL, "CTL+C-PREP", 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agent = DqnAgent::new(DqnConfig::default(), builder.width(), EnvKind::GN.num_actions(), &mut rng);
    let settings = PhaseSettings {
        total_steps: 10,
        eval_intervals: 4,
        eval_episodes: 2,
        desired_mode: DesiredMode::DeterministicFirst,
        seed: 9,
    };
    let h = train_phase(&mut agent, &builder, &tasks, &[&tasks, &tasks[..1]], &settings).unwrap();
    assert_eq!(agent.buffer.len(), 10);
    assert_eq!(agent.gradient_updates, 0, "no updates before learning_starts");
    assert_eq!(h.len(), 2);
    for history in &h {
        assert_eq!(history.progress(), vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        assert_eq!(history.points.last().unwrap().env_steps, 10);
    }
}

#[test]
fn training_updates_start_after_warmup() {
    let (builder, tasks) = setup(EnvKind::GN, ContextSpace::EL, "CTL", 2, 3);
    let cfg = DqnConfig {
        learning_starts: 100,
        ..DqnConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agent = DqnAgent::new(cfg, builder.width(), EnvKind::GN.num_actions(), &mut rng);
    let settings = PhaseSettings {
        total_steps: 200,
        eval_intervals: 1,
        eval_episodes: 1,
        desired_mode: DesiredMode::DeterministicFirst,
        seed: 1,
    };
    train_phase(&mut agent, &builder, &tasks, &[&tasks], &settings).unwrap();
    // steps 104, 108, ..., 200 each run four gradient steps
    assert_eq!(agent.gradient_updates, 25 * 4);
}

#[test]
fn shaped_episode_return_telescopes_on_order_task() {
    let cmdp = Cmdp::with_size(EnvKind::ON, ContextSpace::PO, 6, 6, 2).unwrap();
    let repr: ReprConfig = "CTL+C-PREP".parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (contexts, _) = cmdp.sample_contexts(2, 0, &mut rng).unwrap();
    let tasks = prepare_tasks(&cmdp, &contexts, &repr, (2, 2)).unwrap();
    let builder = ObservationBuilder::new(repr, &cmdp, None, 2).unwrap();
    let gamma = cmdp.gamma;
    for prepared in &tasks {
        let table = &prepared.machine.as_ref().unwrap().plan.table;
        for _ in 0..20 {
            let mut driver = EpisodeDriver::start(&builder, prepared, DesiredMode::DeterministicFirst, &mut rng);
            let u0 = driver.run.as_ref().unwrap().current;
            let (mut env_ret, mut shaped_ret, mut discount) = (0.0, 0.0, 1.0);
            loop {
                let step = driver.step(rng.gen_range(0..cmdp.env.num_actions()), &mut rng).unwrap();
                env_ret += discount * step.env_reward;
                shaped_ret += discount * step.agent_reward;
                discount *= gamma;
                if step.done || step.truncated {
                    break;
                }
            }
            let u_t = driver.run.as_ref().unwrap().current;
            let expected = env_ret - table.value(u0) + discount * table.value(u_t);
            assert!((shaped_ret - expected).abs() < 1e-9, "{shaped_ret} vs {expected}");
        }
    }
}
