//! One transfer session: source training, parameter transfer to the target
//! contexts, and the from-scratch target baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    derive_seed, family_symbol_width, prepare_tasks, train_phase, AgentError, DqnAgent, DqnConfig, PhaseSettings,
    QNetwork,
};
use crate::eval::TrainingHistory;
use crate::generation::DEFAULT_SECTOR_SIZE;
use crate::grid::{Cmdp, Context};
use crate::planning::DesiredMode;
use crate::repr::{BaseRepr, ObservationBuilder, PcgEncoder, ReprConfig};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub cmdp: Cmdp,
    pub repr: ReprConfig,
    pub dqn: DqnConfig,
    pub n_src: usize,
    pub n_tgt: usize,
    pub steps_src: u64,
    pub steps_tgt: u64,
    pub eval_episodes: usize,
    pub eval_intervals: u32,
    pub sector_size: (usize, usize),
    pub desired_mode: DesiredMode,
    /// Also record the source policy's returns on the target contexts.
    pub source_on_target: bool,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(cmdp: Cmdp, repr: ReprConfig, seed: u64) -> Self {
        Self {
            cmdp,
            repr,
            dqn: DqnConfig::default(),
            n_src: 100,
            n_tgt: 200,
            steps_src: 100_000,
            steps_tgt: 100_000,
            eval_episodes: 50,
            eval_intervals: 100,
            sector_size: DEFAULT_SECTOR_SIZE,
            desired_mode: DesiredMode::DeterministicFirst,
            source_on_target: true,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub network: QNetwork,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub seed: u64,
    pub src_contexts: Vec<Context>,
    pub tgt_contexts: Vec<Context>,
    pub source: TrainingHistory,
    pub transferred: TrainingHistory,
    pub target: TrainingHistory,
    pub source_on_target: Option<TrainingHistory>,
    pub source_policy: TrainedPolicy,
    pub transferred_policy: TrainedPolicy,
    pub target_policy: TrainedPolicy,
}

// stream ids for derive_seed
const CONTEXTS: u64 = 10;
const PCG: u64 = 11;
const SOURCE_INIT: u64 = 20;
const SOURCE_TRAIN: u64 = 21;
const TRANSFER_TRAIN: u64 = 31;
const TARGET_INIT: u64 = 40;
const TARGET_TRAIN: u64 = 41;

pub fn run_session(cfg: &SessionConfig) -> Result<SessionResult, AgentError> {
    if cfg.steps_src == 0 || cfg.steps_tgt == 0 {
        return Err(AgentError::Config("training budgets must be positive".into()));
    }
    cfg.dqn.validate().map_err(AgentError::Config)?;
    let mut ctx_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, CONTEXTS));
    let (src, tgt) = cfg.cmdp.sample_contexts(cfg.n_src, cfg.n_tgt, &mut ctx_rng)?;

    let pcg = match cfg.repr.base {
        BaseRepr::Pcg => {
            let all: Vec<Context> = src.iter().chain(&tgt).cloned().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, PCG));
            Some(PcgEncoder::new(&all, all.len(), &mut rng)?)
        }
        _ => None,
    };
    let symbol_width = if cfg.repr.needs_rm() {
        family_symbol_width(&cfg.cmdp, &src[0], cfg.sector_size)?
    } else {
        0
    };
    let builder = ObservationBuilder::new(cfg.repr, &cfg.cmdp, pcg, symbol_width)?;
    let src_tasks = prepare_tasks(&cfg.cmdp, &src, &cfg.repr, cfg.sector_size)?;
    let tgt_tasks = prepare_tasks(&cfg.cmdp, &tgt, &cfg.repr, cfg.sector_size)?;
    let num_actions = cfg.cmdp.env.num_actions();
    let settings = |steps, stream| PhaseSettings {
        total_steps: steps,
        eval_intervals: cfg.eval_intervals,
        eval_episodes: cfg.eval_episodes,
        desired_mode: cfg.desired_mode,
        seed: derive_seed(cfg.seed, stream),
    };

    let source_and_transfer = || -> Result<_, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SOURCE_INIT));
        let mut agent = DqnAgent::new(cfg.dqn.clone(), builder.width(), num_actions, &mut rng);
        let eval_sets: Vec<&[_]> = if cfg.source_on_target {
            vec![&src_tasks, &tgt_tasks]
        } else {
            vec![&src_tasks]
        };
        let mut source_hist = train_phase(&mut agent, &builder, &src_tasks, &eval_sets, &settings(cfg.steps_src, SOURCE_TRAIN))?;
        let source_on_target = if cfg.source_on_target { source_hist.pop() } else { None };
        let source = source_hist.pop().expect("one history per evaluation set");
        let source_net = agent.online.clone();

        let mut agent = DqnAgent::from_network(cfg.dqn.clone(), source_net.clone());
        let transferred = train_phase(&mut agent, &builder, &tgt_tasks, &[&tgt_tasks], &settings(cfg.steps_tgt, TRANSFER_TRAIN))?
            .pop()
            .expect("one history");
        Ok((source, source_on_target, source_net, transferred, agent.online))
    };
    let target_from_scratch = || -> Result<_, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TARGET_INIT));
        let mut agent = DqnAgent::new(cfg.dqn.clone(), builder.width(), num_actions, &mut rng);
        let target = train_phase(&mut agent, &builder, &tgt_tasks, &[&tgt_tasks], &settings(cfg.steps_tgt, TARGET_TRAIN))?
            .pop()
            .expect("one history");
        Ok((target, agent.online))
    };
    let (left, right) = rayon::join(source_and_transfer, target_from_scratch);
    let (source, source_on_target, source_net, transferred, transferred_net) = left?;
    let (target, target_net) = right?;

    Ok(SessionResult {
        seed: cfg.seed,
        src_contexts: src,
        tgt_contexts: tgt,
        source,
        transferred,
        target,
        source_on_target,
        source_policy: TrainedPolicy {
            network: source_net,
            steps: cfg.steps_src,
        },
        transferred_policy: TrainedPolicy {
            network: transferred_net,
            steps: cfg.steps_src + cfg.steps_tgt,
        },
        target_policy: TrainedPolicy {
            network: target_net,
            steps: cfg.steps_tgt,
        },
    })
}
