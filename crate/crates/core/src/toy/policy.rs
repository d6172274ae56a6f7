use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tabular softmax policy: one logit row per slot, tokens sampled
/// independently per slot with `p = softmax(logits / temperature)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    logits: Vec<Vec<f64>>,
    temperature: f64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("temperature must be finite and > 0, got {0}")]
    BadTemperature(f64),
    #[error("slot {0} has no tokens")]
    EmptySlot(usize),
    #[error("logit [{slot}][{token}] is not finite")]
    NonFinite { slot: usize, token: usize },
}

impl SoftmaxPolicy {
    pub fn from_logits(
        logits: Vec<Vec<f64>>,
        temperature: f64,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PolicyError::BadTemperature(temperature));
        }
        for (slot, row) in logits.iter().enumerate() {
            if row.is_empty() {
                return Err(PolicyError::EmptySlot(slot));
            }
            if let Some(token) = row.iter().position(|x| !x.is_finite()) {
                return Err(PolicyError::NonFinite { slot, token });
            }
        }
        Ok(Self {
            logits,
            temperature,
            seed,
        })
    }

    /// All-zero logits: uniform over each slot.
    pub fn uniform(shape: &[usize], temperature: f64) -> Result<Self, PolicyError> {
        Self::from_logits(
            shape.iter().map(|&n| vec![0.0; n]).collect(),
            temperature,
            0,
        )
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random(
        shape: &[usize],
        scale: f64,
        temperature: f64,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = shape
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        Self::from_logits(logits, temperature, seed)
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> Vec<usize> {
        self.logits.iter().map(Vec::len).collect()
    }

    pub fn num_params(&self) -> usize {
        self.logits.iter().map(Vec::len).sum()
    }

    pub fn probs(&self, slot: usize) -> Vec<f64> {
        let row = &self.logits[slot];
        let scaled: Vec<f64> = row.iter().map(|x| x / self.temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn log_prob(&self, slot: usize, token: usize) -> f64 {
        let row = &self.logits[slot];
        let scaled: Vec<f64> = row.iter().map(|x| x / self.temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scaled.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        (scaled[token] - log_z).min(0.0)
    }

    /// `log π(sequence)`, the sum of per-slot log-probabilities.
    pub fn sequence_logp(&self, tokens: &[usize]) -> f64 {
        tokens
            .iter()
            .enumerate()
            .map(|(slot, &tok)| self.log_prob(slot, tok))
            .sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        (0..self.logits.len())
            .map(|slot| {
                let probs = self.probs(slot);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (tok, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return tok;
                    }
                }
                // u landed in the rounding gap above the cumulative sum
                probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
            })
            .collect()
    }

    /// `∂ log π(sequence) / ∂ logits`, accumulated into `grad` with `scale`.
    pub fn accumulate_logp_grad(&self, tokens: &[usize], scale: f64, grad: &mut [Vec<f64>]) {
        for (slot, &tok) in tokens.iter().enumerate() {
            let probs = self.probs(slot);
            for (j, p) in probs.iter().enumerate() {
                let indicator = if j == tok { 1.0 } else { 0.0 };
                grad[slot][j] += scale * (indicator - p) / self.temperature;
            }
        }
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|r| vec![0.0; r.len()]).collect()
    }

    /// `logits += step * direction`.
    pub fn ascend(&mut self, direction: &[Vec<f64>], step: f64) {
        for (row, drow) in self.logits.iter_mut().zip(direction) {
            for (x, d) in row.iter_mut().zip(drow) {
                *x += step * d;
            }
        }
    }

    pub fn logits_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.logits
    }
}
