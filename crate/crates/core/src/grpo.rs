//! Group-relative advantages and the clipped-surrogate GRPO objective.
//!
//! ```text
//! A_i = (r_i - mean(r)) / (popstd(r) + ε_adv)
//! J   = 1/G Σ min(ρ_i A_i, clip(ρ_i, 1-ε, 1+ε) A_i) - c_kl · KL
//! ρ_i = exp(log π(o_i) - log π_old(o_i))
//! KL  = 1/G Σ exp(Δ_i) - Δ_i - 1,   Δ_i = log π_ref(o_i) - log π(o_i)
//! ```
//!
//! Ratios are taken at whole-output granularity from summed token
//! log-probabilities.

use serde::{Deserialize, Serialize};

use crate::reward::exact_sum;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("group has {0} outputs; at least 2 are required")]
    GroupTooSmall(usize),
    #[error("advantage epsilon must be finite and >= 0, got {0}")]
    BadAdvantageEpsilon(f64),
    #[error("reward {index} is not finite")]
    NonFiniteReward { index: usize },
    #[error("log-probability of output {index} must be finite and <= 0 ({which} = {value})")]
    BadLogProb {
        index: usize,
        which: &'static str,
        value: f64,
    },
    #[error("{len} advantages for a group of {group}")]
    LengthMismatch { len: usize, group: usize },
    #[error("importance ratio of output {index} is not finite")]
    NonFiniteRatio { index: usize },
    #[error("KL term of output {index} is not finite")]
    NonFiniteKl { index: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

/// One sampled output `o_i` with its reward and sequence log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub reward: f64,
    pub logp_new: f64,
    pub logp_old: f64,
    pub logp_ref: f64,
}

/// The `G` outputs sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGroup {
    pub prompt_id: String,
    outputs: Vec<GroupSample>,
}

impl PolicyGroup {
    pub fn new(prompt_id: impl Into<String>, outputs: Vec<GroupSample>) -> Result<Self, GrpoError> {
        if outputs.len() < 2 {
            return Err(GrpoError::GroupTooSmall(outputs.len()));
        }
        for (index, o) in outputs.iter().enumerate() {
            if !o.reward.is_finite() {
                return Err(GrpoError::NonFiniteReward { index });
            }
            for (which, value) in [
                ("logp_new", o.logp_new),
                ("logp_old", o.logp_old),
                ("logp_ref", o.logp_ref),
            ] {
                if !(value.is_finite() && value <= 0.0) {
                    return Err(GrpoError::BadLogProb {
                        index,
                        which,
                        value,
                    });
                }
            }
        }
        Ok(Self {
            prompt_id: prompt_id.into(),
            outputs,
        })
    }

    pub fn outputs(&self) -> &[GroupSample] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.reward).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    /// Half-width of the ratio clip band.
    pub clip_epsilon: f64,
    /// Multiplier of the KL penalty.
    pub kl_coefficient: f64,
    /// Added to the standard deviation in the advantage denominator.
    pub advantage_epsilon: f64,
    pub group_size: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            kl_coefficient: 0.04,
            advantage_epsilon: 1e-8,
            group_size: 4,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::Config(format!(
                "grpo.clip_epsilon must be in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.kl_coefficient.is_finite() && self.kl_coefficient >= 0.0) {
            return Err(GrpoError::Config(format!(
                "grpo.kl_coefficient must be finite and >= 0, got {}",
                self.kl_coefficient
            )));
        }
        if !(self.advantage_epsilon.is_finite() && self.advantage_epsilon > 0.0) {
            return Err(GrpoError::Config(format!(
                "grpo.advantage_epsilon must be finite and > 0, got {}",
                self.advantage_epsilon
            )));
        }
        if self.group_size < 2 {
            return Err(GrpoError::Config(format!(
                "grpo.group_size must be >= 2, got {}",
                self.group_size
            )));
        }
        Ok(())
    }
}

/// Standardizes rewards within a group using the population standard
/// deviation. A group whose denominator is exactly zero (all rewards equal
/// with `advantage_epsilon = 0`) gets all-zero advantages.
pub fn group_advantages(rewards: &[f64], advantage_epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if !(advantage_epsilon.is_finite() && advantage_epsilon >= 0.0) {
        return Err(GrpoError::BadAdvantageEpsilon(advantage_epsilon));
    }
    if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward { index });
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let g = rewards.len() as f64;
    // `r_i - mean` as one correctly rounded sum of `G·r_i - Σr`, so nearly
    // equal rewards do not lose their difference to cancellation.
    let mut terms = Vec::with_capacity(2 * rewards.len());
    let deviations: Vec<f64> = rewards
        .iter()
        .map(|&r| {
            terms.clear();
            terms.extend(std::iter::repeat_n(r, rewards.len()));
            terms.extend(rewards.iter().map(|x| -x));
            exact_sum(&terms) / g
        })
        .collect();
    let squares: Vec<f64> = deviations.iter().map(|d| d * d).collect();
    let std = (exact_sum(&squares) / g).sqrt();
    let denom = std + advantage_epsilon;
    if denom == 0.0 || deviations.iter().all(|&d| d == 0.0) {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(deviations.into_iter().map(|d| d / denom).collect())
}

fn ratio(sample: &GroupSample, index: usize) -> Result<f64, GrpoError> {
    let rho = (sample.logp_new - sample.logp_old).exp();
    if rho.is_finite() {
        Ok(rho)
    } else {
        Err(GrpoError::NonFiniteRatio { index })
    }
}

/// `1/G Σ min(ρ_i A_i, clip(ρ_i, 1-ε, 1+ε) A_i)` over any non-empty slice.
pub fn clipped_surrogate(
    samples: &[GroupSample],
    advantages: &[f64],
    clip_epsilon: f64,
) -> Result<f64, GrpoError> {
    surrogate(samples, advantages, Some(clip_epsilon))
}

/// `1/G Σ ρ_i A_i`, the surrogate without clipping.
pub fn unclipped_surrogate(samples: &[GroupSample], advantages: &[f64]) -> Result<f64, GrpoError> {
    surrogate(samples, advantages, None)
}

fn surrogate(
    samples: &[GroupSample],
    advantages: &[f64],
    clip_epsilon: Option<f64>,
) -> Result<f64, GrpoError> {
    if samples.len() != advantages.len() {
        return Err(GrpoError::LengthMismatch {
            len: advantages.len(),
            group: samples.len(),
        });
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (index, (sample, &adv)) in samples.iter().zip(advantages).enumerate() {
        let rho = ratio(sample, index)?;
        total += match clip_epsilon {
            Some(eps) => (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv),
            None => rho * adv,
        };
    }
    Ok(total / samples.len() as f64)
}

/// Per-sample `exp(Δ) - Δ - 1` with `Δ = logp_ref - logp_new`.
///
/// Small gaps use the Taylor series, where `exp_m1(Δ) - Δ` would cancel to
/// zero; the result is then positive for every `Δ ≠ 0` down to the
/// underflow of `Δ²/2` near `1e-154`.
pub fn kl_term(logp_new: f64, logp_ref: f64) -> f64 {
    let delta = logp_ref - logp_new;
    if delta.abs() < 1e-3 {
        let d = delta;
        d * d * (0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d * (1.0 / 120.0 + d / 720.0))))
    } else {
        (delta.exp_m1() - delta).max(0.0)
    }
}

/// Group mean of the non-negative KL estimator against the reference policy.
pub fn kl_penalty(samples: &[GroupSample]) -> Result<f64, GrpoError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (index, s) in samples.iter().enumerate() {
        let k = kl_term(s.logp_new, s.logp_ref);
        if !k.is_finite() {
            return Err(GrpoError::NonFiniteKl { index });
        }
        total += k;
    }
    Ok(total / samples.len() as f64)
}

/// Objective value together with its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub advantages: Vec<f64>,
    pub surrogate: f64,
    pub kl: f64,
    pub objective: f64,
}

pub fn grpo_breakdown(
    group: &PolicyGroup,
    config: &GrpoConfig,
) -> Result<ObjectiveBreakdown, GrpoError> {
    let advantages = group_advantages(&group.rewards(), config.advantage_epsilon)?;
    let surrogate = clipped_surrogate(group.outputs(), &advantages, config.clip_epsilon)?;
    let kl = kl_penalty(group.outputs())?;
    Ok(ObjectiveBreakdown {
        objective: surrogate - config.kl_coefficient * kl,
        advantages,
        surrogate,
        kl,
    })
}

pub fn grpo_objective(group: &PolicyGroup, config: &GrpoConfig) -> Result<f64, GrpoError> {
    grpo_breakdown(group, config).map(|b| b.objective)
}

/// `∂J/∂ log π(o_i)` for each output, holding advantages fixed.
///
/// Zero where the clipped branch is strictly active; at ties the unclipped
/// branch is used.
pub fn logp_sensitivities(
    samples: &[GroupSample],
    advantages: &[f64],
    clip_epsilon: f64,
    kl_coefficient: f64,
) -> Result<Vec<f64>, GrpoError> {
    if samples.len() != advantages.len() {
        return Err(GrpoError::LengthMismatch {
            len: advantages.len(),
            group: samples.len(),
        });
    }
    let g = samples.len() as f64;
    samples
        .iter()
        .zip(advantages)
        .enumerate()
        .map(|(index, (s, &adv))| {
            let rho = ratio(s, index)?;
            let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
            let surrogate_grad = if rho * adv <= clipped * adv {
                rho * adv
            } else {
                0.0
            };
            // d/dlogp_new of exp(ref - new) - (ref - new) - 1
            let kl_grad = 1.0 - (s.logp_ref - s.logp_new).exp();
            Ok((surrogate_grad - kl_coefficient * kl_grad) / g)
        })
        .collect()
}
