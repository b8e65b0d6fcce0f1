//! Fully connected Q-network with hand-written backpropagation and Adam.

use rand::Rng;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input width {got} does not match network input width {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("parameter count {got} does not match layout ({expected})")]
    ParamCount { expected: usize, got: usize },
}

/// Multilayer perceptron with ReLU hidden layers and a linear output.
///
/// All parameters live in one flat vector: for each layer, the `in x out`
/// weight matrix stored input-major (the `out` weights leaving input 0, then
/// input 1, ...) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    dims: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

impl QNetwork {
    /// Uniform fan-in initialisation: every weight and bias of a layer with
    /// `n` inputs is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "bad layer dims {dims:?}");
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        }
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self, NetError> {
        let expected = param_count(dims);
        if params.len() != expected {
            return Err(NetError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn num_outputs(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn copy_from(&mut self, other: &QNetwork) {
        self.params.copy_from_slice(&other.params);
    }

    fn check_input(&self, obs: &[f64]) -> Result<(), NetError> {
        if obs.len() != self.input_width() {
            return Err(NetError::InputWidth {
                expected: self.input_width(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(obs, &mut cache)?;
        Ok(cache.activations.pop().unwrap())
    }

    pub fn forward_cached(&self, obs: &[f64], cache: &mut ForwardCache) -> Result<(), NetError> {
        self.check_input(obs)?;
        let layers = self.dims.len() - 1;
        cache.activations.resize(layers + 1, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(obs);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let (before, after) = cache.activations.split_at_mut(l + 1);
            let out = &mut after[0];
            out.clear();
            out.extend_from_slice(biases);
            // zero inputs (one-hot features, inactive units) contribute nothing
            for (&x, w) in before[l].iter().zip(weights.chunks_exact(n_out)) {
                if x != 0.0 {
                    axpy(out, x, w);
                }
            }
            if l + 1 < layers {
                out.iter_mut().for_each(|z| *z = z.max(0.0));
            }
        }
        Ok(())
    }

    /// Accumulates into `grads` the gradient of a scalar loss whose gradient
    /// with respect to the outputs of the cached pass is `d_out`.
    pub fn backward(&self, cache: &mut ForwardCache, d_out: &[f64], grads: &mut [f64]) {
        let layers = self.dims.len() - 1;
        let mut offset = self.params.len();
        let mut delta = std::mem::take(&mut cache.delta);
        let mut prev = std::mem::take(&mut cache.prev);
        delta.clear();
        delta.extend_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &cache.activations[l];
            let (gw, gb) = grads[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            axpy(gb, 1.0, &delta);
            for (&x, g) in input.iter().zip(gw.chunks_exact_mut(n_out)) {
                if x != 0.0 {
                    axpy(g, x, &delta);
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[offset..offset + n_in * n_out];
            prev.clear();
            // hidden inputs are ReLU outputs: zero means the unit was inactive
            prev.extend(
                input
                    .iter()
                    .zip(weights.chunks_exact(n_out))
                    .map(|(&a, w)| if a > 0.0 { dot(w, &delta) } else { 0.0 }),
            );
            std::mem::swap(&mut delta, &mut prev);
        }
        cache.delta = delta;
        cache.prev = prev;
    }
}

// four independent accumulators so the loop vectorises; the summation
// order is fixed, so results stay bit-reproducible
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    /// One bias-corrected Adam update (descent direction).
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}
