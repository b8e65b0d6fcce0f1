use rand::seq::index;
use rand::Rng;

/// Fixed-capacity ring buffer of transitions. Observations are stored as
/// `f32` to halve memory; the learner rounds its inputs the same way.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    head: usize,
}

/// Borrowed view of one stored transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRef<'a> {
    pub obs: &'a [f32],
    pub action: usize,
    pub reward: f64,
    pub next_obs: &'a [f32],
    pub terminal: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.next_obs.clear();
        self.actions.clear();
        self.rewards.clear();
        self.terminals.clear();
        self.head = 0;
    }

    /// Appends a transition, overwriting the oldest one when full.
    pub fn push(&mut self, obs: &[f64], action: usize, reward: f64, next_obs: &[f64], terminal: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        if self.len() < self.capacity {
            self.obs.extend(obs.iter().map(|&x| x as f32));
            self.next_obs.extend(next_obs.iter().map(|&x| x as f32));
            self.actions.push(action);
            self.rewards.push(reward);
            self.terminals.push(terminal);
        } else {
            let d = self.obs_dim;
            let i = self.head;
            for (dst, &x) in self.obs[i * d..(i + 1) * d].iter_mut().zip(obs) {
                *dst = x as f32;
            }
            for (dst, &x) in self.next_obs[i * d..(i + 1) * d].iter_mut().zip(next_obs) {
                *dst = x as f32;
            }
            self.actions[i] = action;
            self.rewards[i] = reward;
            self.terminals[i] = terminal;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> TransitionRef<'_> {
        let d = self.obs_dim;
        TransitionRef {
            obs: &self.obs[i * d..(i + 1) * d],
            action: self.actions[i],
            reward: self.rewards[i],
            next_obs: &self.next_obs[i * d..(i + 1) * d],
            terminal: self.terminals[i],
        }
    }

    /// Indices of a minibatch drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        index::sample(rng, self.len(), batch.min(self.len())).into_vec()
    }
}

/// Rounds an observation to the precision the buffer stores.
pub fn quantize(obs: &mut [f64]) {
    for x in obs {
        *x = *x as f32 as f64;
    }
}
