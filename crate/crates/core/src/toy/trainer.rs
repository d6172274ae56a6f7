use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{PolicyError, SoftmaxPolicy};
use super::task::{TaskSettings, ToyTask};
use crate::grpo::{
    clipped_surrogate, group_advantages, kl_penalty, logp_sensitivities, GroupSample, GrpoConfig,
    GrpoError, PolicyGroup,
};
use crate::reward::{exact_sum, RewardReport, RewardWeights, Scorer};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("non-finite gradient at step {step}; policy state: {state}")]
    NonFiniteGradient { step: usize, state: String },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub steps: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
    pub smoothing_window: usize,
    /// Initial logits are uniform in `[-init_scale, init_scale]`; 0 gives a
    /// uniform policy.
    pub init_scale: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            steps: 3000,
            learning_rate: 0.1,
            temperature: 1.0,
            seed: 7,
            smoothing_window: 10,
            init_scale: 0.0,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.steps == 0 {
            return bad("toy.steps must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "toy.learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!(
                "toy.temperature must be > 0, got {}",
                self.temperature
            ));
        }
        if self.smoothing_window == 0 {
            return bad("toy.smoothing_window must be >= 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!(
                "toy.init_scale must be >= 0, got {}",
                self.init_scale
            ));
        }
        Ok(())
    }
}

/// Everything one toy run needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToyConfig {
    pub weights: RewardWeights,
    pub grpo: GrpoConfig,
    pub train: TrainSettings,
    pub task: TaskSettings,
}

/// `G` outputs of one prompt with their texts and reward reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroup {
    pub group: PolicyGroup,
    pub sequences: Vec<Vec<usize>>,
    pub texts: Vec<String>,
    pub reports: Vec<RewardReport>,
}

/// Samples `group_size` outputs from `policy` and scores them. The old
/// policy is `policy` itself (refreshed before every sample); reference
/// log-probabilities come from `reference`.
pub fn sample_group(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    task: &ToyTask,
    scorer: &Scorer,
    group_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledGroup, GrpoError> {
    let mut sequences = Vec::with_capacity(group_size);
    let mut texts = Vec::with_capacity(group_size);
    let mut reports = Vec::with_capacity(group_size);
    let mut outputs = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let tokens = policy.sample(rng);
        let text = task.render(&tokens);
        let report = scorer.score(&text, &task.target);
        let logp = policy.sequence_logp(&tokens);
        outputs.push(GroupSample {
            reward: report.total,
            logp_new: logp,
            logp_old: logp,
            logp_ref: reference.sequence_logp(&tokens),
        });
        sequences.push(tokens);
        texts.push(text);
        reports.push(report);
    }
    Ok(SampledGroup {
        group: PolicyGroup::new("toy", outputs)?,
        sequences,
        texts,
        reports,
    })
}

fn samples_for(
    policy: &SoftmaxPolicy,
    sequences: &[Vec<usize>],
    logp_old: &[f64],
    logp_ref: &[f64],
) -> Vec<GroupSample> {
    sequences
        .iter()
        .zip(logp_old.iter().zip(logp_ref))
        .map(|(seq, (&old, &reference))| GroupSample {
            reward: 0.0,
            logp_new: policy.sequence_logp(seq),
            logp_old: old,
            logp_ref: reference,
        })
        .collect()
}

/// GRPO objective of `policy` on a fixed sampled group, advantages held
/// constant.
pub fn fixed_group_objective(
    policy: &SoftmaxPolicy,
    sequences: &[Vec<usize>],
    advantages: &[f64],
    logp_old: &[f64],
    logp_ref: &[f64],
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    let samples = samples_for(policy, sequences, logp_old, logp_ref);
    Ok(
        clipped_surrogate(&samples, advantages, config.clip_epsilon)?
            - config.kl_coefficient * kl_penalty(&samples)?,
    )
}

/// Analytic gradient of [`fixed_group_objective`] with respect to the
/// policy logits.
pub fn fixed_group_gradient(
    policy: &SoftmaxPolicy,
    sequences: &[Vec<usize>],
    advantages: &[f64],
    logp_old: &[f64],
    logp_ref: &[f64],
    config: &GrpoConfig,
) -> Result<Vec<Vec<f64>>, GrpoError> {
    let samples = samples_for(policy, sequences, logp_old, logp_ref);
    let weights = logp_sensitivities(
        &samples,
        advantages,
        config.clip_epsilon,
        config.kl_coefficient,
    )?;
    let mut grad = policy.zeros_like();
    for (seq, w) in sequences.iter().zip(weights) {
        policy.accumulate_logp_grad(seq, w, &mut grad);
    }
    Ok(grad)
}

/// One row of training metrics. Component columns are group means of the
/// weighted components, so each is bounded by its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub step: usize,
    pub lang: f64,
    pub count: f64,
    pub answer: f64,
    pub format: f64,
    pub total: f64,
    /// Group mean total under balanced `(0.25, 0.25, 0.25, 0.25)` weights,
    /// a common yardstick across weight configurations.
    pub eval_total: f64,
    pub kl: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub weights: RewardWeights,
    pub window: usize,
    pub rows: Vec<TrainRow>,
}

/// Trailing moving average; the first `window - 1` points average what is
/// available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

impl TrainMetrics {
    pub fn series(&self, f: impl Fn(&TrainRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn smoothed(&self, f: impl Fn(&TrainRow) -> f64) -> Vec<f64> {
        moving_average(&self.series(f), self.window)
    }

    /// First step at which the smoothed series reaches `level`.
    pub fn first_reaching(&self, f: impl Fn(&TrainRow) -> f64, level: f64) -> Option<usize> {
        self.smoothed(f).iter().position(|&v| v >= level)
    }

    pub fn to_csv(&self) -> String {
        let smoothed_total = self.smoothed(|r| r.total);
        let smoothed_eval = self.smoothed(|r| r.eval_total);
        let mut out = String::from(
            "step,lang,count,answer,format,total,eval_total,kl,objective,smoothed_total,smoothed_eval_total\n",
        );
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.lang,
                r.count,
                r.answer,
                r.format,
                r.total,
                r.eval_total,
                r.kl,
                r.objective,
                smoothed_total[i],
                smoothed_eval[i]
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }
}

pub struct ToyTrainer {
    policy: SoftmaxPolicy,
    reference: SoftmaxPolicy,
    task: ToyTask,
    scorer: Scorer,
    balanced: RewardWeights,
    grpo: GrpoConfig,
    learning_rate: f64,
    rng: ChaCha8Rng,
    step: usize,
}

impl ToyTrainer {
    pub fn new(config: &ToyConfig) -> Result<Self, TrainError> {
        let task = ToyTask::structured(&config.task).map_err(TrainError::Config)?;
        Self::with_task(task, config)
    }

    pub fn with_task(task: ToyTask, config: &ToyConfig) -> Result<Self, TrainError> {
        config.train.validate()?;
        config.grpo.validate()?;
        config
            .weights
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let shape = task.shape();
        let policy = if config.train.init_scale > 0.0 {
            SoftmaxPolicy::random(
                &shape,
                config.train.init_scale,
                config.train.temperature,
                config.train.seed,
            )?
        } else {
            SoftmaxPolicy::uniform(&shape, config.train.temperature)?
        };
        Ok(Self {
            reference: policy.clone(),
            policy,
            task,
            scorer: Scorer {
                weights: config.weights,
                ..Scorer::default()
            },
            balanced: RewardWeights::default(),
            grpo: config.grpo,
            learning_rate: config.train.learning_rate,
            rng: ChaCha8Rng::seed_from_u64(config.train.seed),
            step: 0,
        })
    }

    pub fn policy(&self) -> &SoftmaxPolicy {
        &self.policy
    }

    pub fn task(&self) -> &ToyTask {
        &self.task
    }

    /// Samples a group, scores it and takes one gradient-ascent step on the
    /// GRPO objective.
    pub fn train_step(&mut self) -> Result<TrainRow, TrainError> {
        let sampled = sample_group(
            &self.policy,
            &self.reference,
            &self.task,
            &self.scorer,
            self.grpo.group_size,
            &mut self.rng,
        )?;
        let outputs = sampled.group.outputs();
        let advantages = group_advantages(&sampled.group.rewards(), self.grpo.advantage_epsilon)?;
        let logp_old: Vec<f64> = outputs.iter().map(|o| o.logp_old).collect();
        let logp_ref: Vec<f64> = outputs.iter().map(|o| o.logp_ref).collect();

        let surrogate = clipped_surrogate(outputs, &advantages, self.grpo.clip_epsilon)?;
        let kl = kl_penalty(outputs)?;
        let grad = fixed_group_gradient(
            &self.policy,
            &sampled.sequences,
            &advantages,
            &logp_old,
            &logp_ref,
            &self.grpo,
        )?;
        if grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                step: self.step,
                state: serde_json::to_string(&self.policy).unwrap_or_default(),
            });
        }
        self.policy.ascend(&grad, self.learning_rate);

        let g = sampled.reports.len() as f64;
        let mean =
            |f: &dyn Fn(&RewardReport) -> f64| sampled.reports.iter().map(f).sum::<f64>() / g;
        let balanced = self.balanced;
        let row = TrainRow {
            step: self.step,
            lang: mean(&|r| r.weighted_components()[0]),
            count: mean(&|r| r.weighted_components()[1]),
            answer: mean(&|r| r.weighted_components()[2]),
            format: mean(&|r| r.weighted_components()[3]),
            total: mean(&|r| r.total),
            eval_total: mean(&|r| {
                let c = r.components();
                exact_sum(&[
                    balanced.alpha * c[0],
                    balanced.beta * c[1],
                    balanced.gamma * c[2],
                    balanced.delta * c[3],
                ])
            }),
            kl,
            objective: surrogate - self.grpo.kl_coefficient * kl,
        };
        self.step += 1;
        Ok(row)
    }
}

/// Runs `config.train.steps` training steps.
pub fn train(config: &ToyConfig) -> Result<(TrainMetrics, SoftmaxPolicy), TrainError> {
    let mut trainer = ToyTrainer::new(config)?;
    let rows = (0..config.train.steps)
        .map(|_| trainer.train_step())
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        TrainMetrics {
            weights: config.weights,
            window: config.train.smoothing_window,
            rows,
        },
        trainer.policy,
    ))
}

/// Reward-weight configurations of the ratio ablation grid.
pub const ABLATION_GRID: [[f64; 4]; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.5, 0.5],
    [0.0, 0.33, 0.33, 0.33],
    [0.25, 0.25, 0.25, 0.25],
];

pub fn metrics_stem(weights: &RewardWeights) -> String {
    let [a, b, c, d] = weights.as_array();
    format!("metrics_w{a}_{b}_{c}_{d}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), TrainError> {
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)
}

/// Trains once and writes `<stem>.csv` and `<stem>.jsonl` into `out_dir`.
pub fn run_training(
    config: &ToyConfig,
    out_dir: &Path,
) -> Result<(TrainMetrics, Vec<PathBuf>), TrainError> {
    std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let (metrics, _) = train(config)?;
    let stem = metrics_stem(&config.weights);
    let csv = out_dir.join(format!("{stem}.csv"));
    let jsonl = out_dir.join(format!("{stem}.jsonl"));
    write_file(&csv, &metrics.to_csv())?;
    write_file(&jsonl, &metrics.to_jsonl())?;
    Ok((metrics, vec![csv, jsonl]))
}

/// Runs every configuration of [`ABLATION_GRID`] with otherwise identical
/// settings.
pub fn run_training_grid(
    config: &ToyConfig,
    out_dir: &Path,
) -> Result<Vec<(TrainMetrics, Vec<PathBuf>)>, TrainError> {
    ABLATION_GRID
        .iter()
        .map(|&[a, b, c, d]| {
            let weights = RewardWeights::new(a, b, c, d).expect("grid weights are valid");
            run_training(
                &ToyConfig {
                    weights,
                    ..config.clone()
                },
                out_dir,
            )
        })
        .collect()
}
