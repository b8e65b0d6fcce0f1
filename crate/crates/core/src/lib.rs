pub mod agent;
pub mod cli;
pub mod eval;
pub mod generation;
pub mod grid;
pub mod planning;
pub mod repr;
pub mod rm;
pub mod session;
