use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{argmax, AdamConfig, ForwardCache, OptimizerState, QNetwork};
use super::replay::{ReplayBuffer, TransitionRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub hidden_layers: Vec<usize>,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub train_freq: u64,
    pub gradient_steps: usize,
    pub target_update_interval: u64,
    pub learning_starts: u64,
    pub exploration_initial_eps: f64,
    pub exploration_final_eps: f64,
    pub exploration_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            hidden_layers: vec![64, 64],
            buffer_size: 1_000_000,
            batch_size: 32,
            gamma: 0.99,
            train_freq: 4,
            gradient_steps: 4,
            target_update_interval: 10_000,
            learning_starts: 1000,
            exploration_initial_eps: 1.0,
            exploration_final_eps: 0.05,
            exploration_fraction: 0.5,
        }
    }
}

impl DqnConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn layer_dims(&self, obs_dim: usize, num_actions: usize) -> Vec<usize> {
        let mut dims = vec![obs_dim];
        dims.extend(&self.hidden_layers);
        dims.push(num_actions);
        dims
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            ((0.0..1.0).contains(&self.adam_beta1), "adam_beta1 must be in [0, 1)"),
            ((0.0..1.0).contains(&self.adam_beta2), "adam_beta2 must be in [0, 1)"),
            (self.adam_epsilon > 0.0, "adam_epsilon must be positive"),
            (self.hidden_layers.iter().all(|&h| h > 0), "hidden layer widths must be positive"),
            (self.buffer_size > 0, "buffer_size must be positive"),
            (self.batch_size > 0, "batch_size must be positive"),
            (self.gamma > 0.0 && self.gamma < 1.0, "gamma must be in (0, 1)"),
            (self.train_freq > 0, "train_freq must be positive"),
            (self.target_update_interval > 0, "target_update_interval must be positive"),
            (
                (0.0..=1.0).contains(&self.exploration_initial_eps) && (0.0..=1.0).contains(&self.exploration_final_eps),
                "exploration rates must be in [0, 1]",
            ),
            (
                self.exploration_fraction > 0.0 && self.exploration_fraction <= 1.0,
                "exploration_fraction must be in (0, 1]",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

/// Linear interpolation from `start` to `end` over the first `fraction` of
/// `total` steps, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: f64,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, fraction: f64, total: u64) -> Self {
        Self {
            start,
            end,
            horizon: fraction * total as f64,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.horizon <= 0.0 {
            return self.end;
        }
        let p = (step as f64 / self.horizon).min(1.0);
        self.start + p * (self.end - self.start)
    }
}

/// Mean squared TD error over `batch` and its gradient, accumulated into `grads`.
///
/// Targets are `r + gamma * max_a' Q_target(s', a')`, with no bootstrap on
/// terminal transitions.
pub fn td_loss_and_grad(
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    batch: &[TransitionRef<'_>],
    grads: &mut [f64],
) -> f64 {
    td_loss_and_grad_with(online, target, gamma, batch, grads, &mut TdScratch::default())
}

/// Buffers reused across [`td_loss_and_grad_with`] calls.
#[derive(Debug, Clone, Default)]
pub struct TdScratch {
    online: ForwardCache,
    target: ForwardCache,
    input: Vec<f64>,
    d_out: Vec<f64>,
}

pub fn td_loss_and_grad_with(
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    batch: &[TransitionRef<'_>],
    grads: &mut [f64],
    scratch: &mut TdScratch,
) -> f64 {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    scratch.d_out.clear();
    scratch.d_out.resize(online.num_outputs(), 0.0);
    for t in batch {
        let y = if t.terminal {
            t.reward
        } else {
            scratch.input.clear();
            scratch.input.extend(t.next_obs.iter().map(|&x| x as f64));
            target
                .forward_cached(&scratch.input, &mut scratch.target)
                .expect("replay width matches network");
            let next_q = scratch.target.output();
            t.reward + gamma * next_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        scratch.input.clear();
        scratch.input.extend(t.obs.iter().map(|&x| x as f64));
        online
            .forward_cached(&scratch.input, &mut scratch.online)
            .expect("replay width matches network");
        let err = scratch.online.output()[t.action] - y;
        loss += err * err / n;
        scratch.d_out.iter_mut().for_each(|d| *d = 0.0);
        scratch.d_out[t.action] = 2.0 * err / n;
        online.backward(&mut scratch.online, &scratch.d_out, grads);
    }
    loss
}

/// Online and target networks, optimiser and replay memory of one learner.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
    pub gradient_updates: u64,
    grads: Vec<f64>,
    scratch: TdScratch,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(config: DqnConfig, obs_dim: usize, num_actions: usize, rng: &mut R) -> Self {
        let net = QNetwork::new(&config.layer_dims(obs_dim, num_actions), rng);
        Self::from_network(config, net)
    }

    /// Starts a learner from existing weights with a fresh optimiser and an
    /// empty replay buffer; the target network is a copy of the weights.
    pub fn from_network(config: DqnConfig, net: QNetwork) -> Self {
        let n = net.params().len();
        let obs_dim = net.input_width();
        Self {
            optimizer: OptimizerState::new(config.adam(), n),
            buffer: ReplayBuffer::new(config.buffer_size, obs_dim),
            target: net.clone(),
            online: net,
            gradient_updates: 0,
            grads: vec![0.0; n],
            scratch: TdScratch::default(),
            config,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.online.num_outputs()
    }

    pub fn greedy_action(&self, obs: &[f64]) -> usize {
        argmax(&self.online.forward(obs).expect("observation width matches network"))
    }

    /// Epsilon-greedy action: uniform with probability `eps`, greedy otherwise.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], eps: f64, rng: &mut R) -> usize {
        if rng.gen::<f64>() < eps {
            rng.gen_range(0..self.num_actions())
        } else {
            self.greedy_action(obs)
        }
    }

    /// One gradient step on a uniformly sampled minibatch; returns the loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        if self.buffer.is_empty() {
            return None;
        }
        let idx = self.buffer.sample_indices(self.config.batch_size, rng);
        let batch: Vec<_> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let loss = td_loss_and_grad_with(
            &self.online,
            &self.target,
            self.config.gamma,
            &batch,
            &mut self.grads,
            &mut self.scratch,
        );
        self.optimizer.apply(self.online.params_mut(), &self.grads);
        self.gradient_updates += 1;
        Some(loss)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }
}
