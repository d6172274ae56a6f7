//! WebAssembly entry points for the static page in `www/`.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively too; the `#[wasm_bindgen]` wrappers only turn
//! their errors into JS exceptions.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use cotreward::batch::ReferenceFields;
use cotreward::grpo::grpo_breakdown;
use cotreward::toy::{train, ToyConfig, TrainSettings};
use cotreward::{GroupSample, GrpoConfig, PolicyGroup, RewardWeights, Scorer, TagSet};

fn parse_weights(weights: &str) -> Result<RewardWeights, String> {
    if weights.trim().is_empty() {
        return Ok(RewardWeights::default());
    }
    weights.parse()
}

/// Scores one raw output. `reference` is
/// `{"language", "text_segments", "objects", "answer"}`; `weights` is
/// `"a,b,c,d"` or empty for the defaults.
pub fn score_output_json(output: &str, reference: &str, weights: &str) -> Result<String, String> {
    let fields: ReferenceFields =
        serde_json::from_str(reference).map_err(|e| format!("reference: {e}"))?;
    let target = fields.to_target()?;
    let scorer = Scorer::new(parse_weights(weights)?, TagSet::default());
    let report = scorer.score(output, &target);
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupInput {
    rewards: Vec<f64>,
    logp_new: Vec<f64>,
    logp_old: Vec<f64>,
    logp_ref: Vec<f64>,
    #[serde(default)]
    config: Option<GrpoConfig>,
}

/// Advantages, clipped surrogate, KL and objective for one group given as
/// parallel arrays.
pub fn group_objective_json(group: &str) -> Result<String, String> {
    let input: GroupInput = serde_json::from_str(group).map_err(|e| format!("group: {e}"))?;
    let n = input.rewards.len();
    if [&input.logp_new, &input.logp_old, &input.logp_ref]
        .iter()
        .any(|v| v.len() != n)
    {
        return Err(format!(
            "rewards and log-probability arrays differ in length ({n}, {}, {}, {})",
            input.logp_new.len(),
            input.logp_old.len(),
            input.logp_ref.len()
        ));
    }
    let samples = (0..n)
        .map(|i| GroupSample {
            reward: input.rewards[i],
            logp_new: input.logp_new[i],
            logp_old: input.logp_old[i],
            logp_ref: input.logp_ref[i],
        })
        .collect();
    let config = input.config.unwrap_or_default();
    config.validate().map_err(|e| e.to_string())?;
    let group = PolicyGroup::new("demo", samples).map_err(|e| e.to_string())?;
    let breakdown = grpo_breakdown(&group, &config).map_err(|e| e.to_string())?;
    serde_json::to_string(&breakdown).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Curves {
    steps: usize,
    window: usize,
    total: Vec<f64>,
    eval_total: Vec<f64>,
    lang: Vec<f64>,
    count: Vec<f64>,
    answer: Vec<f64>,
    format: Vec<f64>,
    /// Most probable output under the trained policy.
    sample: String,
}

/// Trains the toy policy and returns smoothed reward curves.
pub fn train_toy_json(weights: &str, steps: usize, seed: u64) -> Result<String, String> {
    let config = ToyConfig {
        weights: parse_weights(weights)?,
        train: TrainSettings {
            steps,
            seed,
            ..TrainSettings::default()
        },
        ..ToyConfig::default()
    };
    let (metrics, policy) = train(&config).map_err(|e| e.to_string())?;
    let task = cotreward::toy::ToyTask::structured(&config.task)?;
    let greedy: Vec<usize> = (0..task.slots.len())
        .map(|slot| {
            let probs = policy.probs(slot);
            (0..probs.len())
                .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
                .unwrap_or(0)
        })
        .collect();
    let curves = Curves {
        steps: metrics.rows.len(),
        window: metrics.window,
        total: metrics.smoothed(|r| r.total),
        eval_total: metrics.smoothed(|r| r.eval_total),
        lang: metrics.smoothed(|r| r.lang),
        count: metrics.smoothed(|r| r.count),
        answer: metrics.smoothed(|r| r.answer),
        format: metrics.smoothed(|r| r.format),
        sample: task.render(&greedy),
    };
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn score_output(output: &str, reference: &str, weights: &str) -> Result<String, JsError> {
    score_output_json(output, reference, weights).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn group_objective(group: &str) -> Result<String, JsError> {
    group_objective_json(group).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn train_toy(weights: &str, steps: usize, seed: u64) -> Result<String, JsError> {
    train_toy_json(weights, steps, seed).map_err(|e| JsError::new(&e))
}
