//! Deep Q-learning agent.

pub mod checkpoint;
pub mod dqn;
pub mod net;
pub mod oracle;
pub mod replay;
pub mod runner;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use dqn::{td_loss_and_grad, DqnAgent, DqnConfig, LinearSchedule};
pub use net::{argmax, AdamConfig, ForwardCache, NetError, OptimizerState, QNetwork};
pub use oracle::{solve_product_mdp, ProductReward, ProductSolution};
pub use replay::{ReplayBuffer, TransitionRef};
pub use runner::{
    evaluate_policy, family_symbol_width, prepare_tasks, train_phase, DriverStep, EpisodeDriver, MachineBundle,
    PhaseSettings, PreparedTask,
};

use crate::generation::GenerationError;
use crate::grid::GridError;
use crate::planning::PlanningError;
use crate::repr::ReprError;
use crate::rm::RmError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Rm(#[from] RmError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Derives an independent stream seed from a run seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
