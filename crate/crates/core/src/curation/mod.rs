//! Verified chain-of-thought curation.
//!
//! For each `⟨image, question, answer⟩` sample a generator drafts a step
//! sequence, an evaluator scores every step, and any step scoring below the
//! threshold goes through locate → correct → re-evaluate cycles until it
//! passes or the cycle budget runs out. Every cycle is recorded as a
//! character-level edit so the final chain can be replayed from the draft.

mod client;
#[cfg(not(target_arch = "wasm32"))]
pub mod http;
pub mod mock;
pub mod prompts;
mod runner;

use serde::{Deserialize, Serialize};

pub use client::{
    parse_evaluation, parse_steps, ClientError, Clients, CorrectionRequest, EndpointConfig,
    Evaluation, EvaluationRequest, EvaluatorClient, GeneratorClient,
};
pub use runner::{
    read_samples, rejects_path, run_curation, CurationError, CurationStats, RunOptions,
};

use crate::document::{count_segment_entries, object_count_tag};
use crate::language::LanguageCode;
use crate::reward::CountPair;

/// One input triple plus its language label. `image_ref` is forwarded to
/// clients untouched and never opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub answer: String,
    pub language_label: LanguageCode,
}

impl RawSample {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("sample id is empty".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("sample {}: question is empty", self.id));
        }
        if self.answer.trim().is_empty() {
            return Err(format!("sample {}: answer is empty", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTStep {
    /// 1-based.
    pub index: usize,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifiedCoT {
    pub steps: Vec<CoTStep>,
}

impl VerifiedCoT {
    /// Steps joined by newlines.
    pub fn text(&self) -> String {
        self.steps
            .iter()
            .map(|s| s.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn min_score(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.score).reduce(f64::min)
    }
}

/// Half-open range of `char` offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn clamp_to(self, len: usize) -> Span {
        let end = self.end.min(len);
        let start = self.start.min(end);
        Span { start, end }
    }
}

/// Replace chars `start..end` of the old text with `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEdit {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

impl TextEdit {
    /// Smallest single edit turning `before` into `after`, found by
    /// stripping the common prefix and suffix.
    pub fn between(before: &str, after: &str) -> Self {
        let a: Vec<char> = before.chars().collect();
        let b: Vec<char> = after.chars().collect();
        let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
        let max_suffix = a.len().min(b.len()) - prefix;
        let suffix = a
            .iter()
            .rev()
            .zip(b.iter().rev())
            .take(max_suffix)
            .take_while(|(x, y)| x == y)
            .count();
        Self {
            start: prefix,
            end: a.len() - suffix,
            replacement: b[prefix..b.len() - suffix].iter().collect(),
        }
    }

    pub fn apply(&self, text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let end = self.end.min(chars.len());
        let start = self.start.min(end);
        let mut out: String = chars[..start].iter().collect();
        out.push_str(&self.replacement);
        out.extend(&chars[end..]);
        out
    }
}

/// One locate → correct → re-evaluate round on a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionCycle {
    pub cycle: usize,
    pub score_before: f64,
    pub located: Span,
    pub critique: String,
    pub edit: TextEdit,
    pub score_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub index: usize,
    pub initial_score: f64,
    pub cycles: Vec<CorrectionCycle>,
    pub outcome: StepOutcome,
}

/// Audit trail of one sample's curation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationTrace {
    /// The generator's draft, step by step.
    pub initial_steps: Vec<String>,
    pub steps: Vec<StepAudit>,
}

impl CurationTrace {
    pub fn total_cycles(&self) -> usize {
        self.steps.iter().map(|s| s.cycles.len()).sum()
    }

    /// Re-applies every recorded edit to the draft.
    pub fn replay(&self) -> Vec<String> {
        let mut steps = self.initial_steps.clone();
        for audit in &self.steps {
            let Some(slot) = audit.index.checked_sub(1).and_then(|i| steps.get_mut(i)) else {
                continue;
            };
            for cycle in &audit.cycles {
                *slot = cycle.edit.apply(slot);
            }
        }
        steps
    }
}

/// A curated sample: `⟨I, Q, T, A⟩` plus the counts used as count-reward
/// references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub sample: RawSample,
    #[serde(default)]
    pub cot: VerifiedCoT,
    #[serde(default)]
    pub reference_counts: CountPair,
    #[serde(default)]
    pub trace: CurationTrace,
}

impl ReferenceRecord {
    pub fn id(&self) -> &str {
        &self.sample.id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    Transport { message: String },
    InvalidResponse { message: String, raw: String },
    StepRejected { index: usize, cycles: usize },
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::Transport { .. } => "transport",
            RejectReason::InvalidResponse { .. } => "invalid_response",
            RejectReason::StepRejected { .. } => "step_rejected",
        }
    }

    /// Transport failures are worth another attempt on resume; the rest
    /// are final.
    pub fn retryable(&self) -> bool {
        matches!(self, RejectReason::Transport { .. })
    }
}

impl From<ClientError> for RejectReason {
    fn from(err: ClientError) -> Self {
        match err {
            ClientError::Transport(message) => RejectReason::Transport { message },
            ClientError::InvalidResponse { message, raw } => {
                RejectReason::InvalidResponse { message, raw }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub id: String,
    pub reason: RejectReason,
    pub retryable: bool,
    pub trace: CurationTrace,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid curation config: {0}")]
pub struct InvalidCurationConfig(pub String);

/// Threshold and loop bounds. Client endpoints are configured separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    /// τ: a step is verified once its score reaches this value.
    pub threshold: f64,
    pub max_correction_iters: usize,
    /// Samples curated concurrently.
    pub concurrency: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            max_correction_iters: 5,
            concurrency: 4,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), InvalidCurationConfig> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(InvalidCurationConfig(format!(
                "curation.threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.max_correction_iters == 0 {
            return Err(InvalidCurationConfig(
                "curation.max_correction_iters must be >= 1".into(),
            ));
        }
        if self.concurrency == 0 {
            return Err(InvalidCurationConfig(
                "curation.concurrency must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of refining one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Refined {
    Passed {
        step: CoTStep,
        cycles: Vec<CorrectionCycle>,
    },
    Rejected {
        step: CoTStep,
        cycles: Vec<CorrectionCycle>,
    },
}

impl Refined {
    pub fn cycles(&self) -> &[CorrectionCycle] {
        match self {
            Refined::Passed { cycles, .. } | Refined::Rejected { cycles, .. } => cycles,
        }
    }
}

fn evaluate(
    clients: Clients<'_>,
    sample: &RawSample,
    steps: &[CoTStep],
    position: usize,
) -> Result<Evaluation, ClientError> {
    let eval = clients.evaluator.evaluate(&EvaluationRequest {
        sample,
        steps,
        position,
    })?;
    client::check_score(eval.score).map_err(|message| ClientError::InvalidResponse {
        message,
        raw: format!("{eval:?}"),
    })?;
    Ok(eval)
}

/// Runs locate → correct → re-evaluate on `steps[position]` until it scores
/// at least `config.threshold` or `config.max_correction_iters` cycles have
/// been spent. `evaluation` is the step's latest verdict; a step that
/// already passes is returned unchanged with no cycles.
pub fn refine_step(
    steps: &mut [CoTStep],
    position: usize,
    evaluation: Evaluation,
    sample: &RawSample,
    clients: Clients<'_>,
    config: &CurationConfig,
) -> Result<Refined, ClientError> {
    let mut current = evaluation;
    steps[position].score = Some(current.score);
    let mut cycles = Vec::new();
    while current.score < config.threshold {
        if cycles.len() == config.max_correction_iters {
            return Ok(Refined::Rejected {
                step: steps[position].clone(),
                cycles,
            });
        }
        let before = steps[position].content.clone();
        let len = before.chars().count();
        let located = current
            .error_span
            .unwrap_or(Span { start: 0, end: len })
            .clamp_to(len);
        let corrected = clients.generator.correct(&CorrectionRequest {
            sample,
            steps,
            position,
            span: located,
            critique: &current.critique,
            cycle: cycles.len() + 1,
        })?;
        let corrected = crate::document::nfc(corrected.trim());
        if corrected.is_empty() {
            return Err(ClientError::InvalidResponse {
                message: format!("empty correction for step {}", position + 1),
                raw: corrected,
            });
        }
        let edit = TextEdit::between(&before, &corrected);
        steps[position].content = corrected;
        let next = evaluate(clients, sample, steps, position)?;
        steps[position].score = Some(next.score);
        cycles.push(CorrectionCycle {
            cycle: cycles.len() + 1,
            score_before: current.score,
            located,
            critique: current.critique.clone(),
            edit,
            score_after: next.score,
        });
        current = next;
    }
    Ok(Refined::Passed {
        step: steps[position].clone(),
        cycles,
    })
}

/// Counts implied by a chain's stage content: bbox lines of the first
/// `<segments>` block and the `\obj{}` value (0 when absent).
pub fn counts_from_cot(cot: &VerifiedCoT) -> CountPair {
    let text = cot.text();
    CountPair::new(
        u32::try_from(count_segment_entries(&text)).unwrap_or(u32::MAX),
        object_count_tag(&text).unwrap_or(0),
    )
}

/// Curates one sample end to end.
#[allow(clippy::result_large_err)]
pub fn curate_sample(
    sample: &RawSample,
    clients: Clients<'_>,
    config: &CurationConfig,
) -> Result<ReferenceRecord, RejectedSample> {
    let mut trace = CurationTrace::default();
    let reject = |reason: RejectReason, trace: CurationTrace| RejectedSample {
        id: sample.id.clone(),
        retryable: reason.retryable(),
        reason,
        trace,
    };

    let draft = match clients
        .generator
        .generate(sample)
        .and_then(|raw| parse_steps(&raw))
    {
        Ok(steps) => steps,
        Err(err) => return Err(reject(err.into(), trace)),
    };
    trace.initial_steps = draft.iter().map(|s| s.content.clone()).collect();
    let mut steps = draft;

    for position in 0..steps.len() {
        let evaluation = match evaluate(clients, sample, &steps, position) {
            Ok(e) => e,
            Err(err) => return Err(reject(err.into(), trace)),
        };
        let initial_score = evaluation.score;
        match refine_step(&mut steps, position, evaluation, sample, clients, config) {
            Ok(Refined::Passed { step, cycles }) => {
                steps[position] = step;
                trace.steps.push(StepAudit {
                    index: position + 1,
                    initial_score,
                    cycles,
                    outcome: StepOutcome::Accepted,
                });
            }
            Ok(Refined::Rejected { cycles, .. }) => {
                let n = cycles.len();
                trace.steps.push(StepAudit {
                    index: position + 1,
                    initial_score,
                    cycles,
                    outcome: StepOutcome::Rejected,
                });
                return Err(reject(
                    RejectReason::StepRejected {
                        index: position + 1,
                        cycles: n,
                    },
                    trace,
                ));
            }
            Err(err) => return Err(reject(err.into(), trace)),
        }
    }

    let cot = VerifiedCoT { steps };
    Ok(ReferenceRecord {
        sample: sample.clone(),
        reference_counts: counts_from_cot(&cot),
        cot,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::mock::{MockScript, SampleScript, ScriptedClient};
    use super::*;

    fn sample(id: &str) -> RawSample {
        RawSample {
            id: id.into(),
            image_ref: format!("images/{id}.jpg"),
            question: "How many items are on sale?".into(),
            answer: "3".into(),
            language_label: LanguageCode::En,
        }
    }

    fn client_with(id: &str, script: SampleScript) -> ScriptedClient {
        let mut s = MockScript::default();
        s.samples.insert(id.into(), script);
        ScriptedClient::new(s)
    }

    fn scores(entries: &[(usize, &[f64])]) -> SampleScript {
        SampleScript {
            scores: entries.iter().map(|(k, v)| (*k, v.to_vec())).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn text_edit_minimal_and_replayable() {
        let e = TextEdit::between("there are 4 cars", "there are 5 cars");
        assert_eq!((e.start, e.end, e.replacement.as_str()), (10, 11, "5"));
        assert_eq!(e.apply("there are 4 cars"), "there are 5 cars");
        let e = TextEdit::between("aaa", "aa");
        assert_eq!(e.apply("aaa"), "aa");
        let e = TextEdit::between("", "ข้อความ");
        assert_eq!(e.apply(""), "ข้อความ");
    }

    #[test]
    fn refine_one_cycle() {
        let client = client_with("s", scores(&[(1, &[0.5, 0.9])]));
        let s = sample("s");
        let clients = client.clients();
        let mut steps = parse_steps(&client.generate(&s).unwrap()).unwrap();
        let first = evaluate(clients, &s, &steps, 0).unwrap();
        assert_eq!(first.score, 0.5);
        let out = refine_step(
            &mut steps,
            0,
            first,
            &s,
            clients,
            &CurationConfig::default(),
        )
        .unwrap();
        match out {
            Refined::Passed { step, cycles } => {
                assert_eq!(cycles.len(), 1);
                assert_eq!(step.score, Some(0.9));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refine_rejects_after_budget() {
        let client = client_with("s", scores(&[(1, &[0.5])]));
        let s = sample("s");
        let clients = client.clients();
        let mut steps = parse_steps(&client.generate(&s).unwrap()).unwrap();
        let first = evaluate(clients, &s, &steps, 0).unwrap();
        let config = CurationConfig {
            max_correction_iters: 3,
            ..Default::default()
        };
        let out = refine_step(&mut steps, 0, first, &s, clients, &config).unwrap();
        assert!(matches!(out, Refined::Rejected { .. }));
        assert_eq!(out.cycles().len(), 3);
    }

    #[test]
    fn refine_passing_step_untouched() {
        let client = client_with("s", SampleScript::default());
        let s = sample("s");
        let clients = client.clients();
        let mut steps = parse_steps(&client.generate(&s).unwrap()).unwrap();
        let before = steps[0].content.clone();
        let first = evaluate(clients, &s, &steps, 0).unwrap();
        let out = refine_step(
            &mut steps,
            0,
            first,
            &s,
            clients,
            &CurationConfig::default(),
        )
        .unwrap();
        match out {
            Refined::Passed { step, cycles } => {
                assert!(cycles.is_empty());
                assert_eq!(step.content, before);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn curate_all_pass() {
        let client = client_with("s", SampleScript::default());
        let record =
            curate_sample(&sample("s"), client.clients(), &CurationConfig::default()).unwrap();
        assert_eq!(record.trace.total_cycles(), 0);
        assert_eq!(record.cot.steps.len(), 4);
        assert!(record.cot.steps.iter().all(|s| s.score.unwrap() >= 0.7));
        assert_eq!(record.reference_counts, CountPair::new(1, 1));
    }

    #[test]
    fn curate_two_cycles_and_replay() {
        let client = client_with("s", scores(&[(3, &[0.2, 0.6, 0.95])]));
        let record =
            curate_sample(&sample("s"), client.clients(), &CurationConfig::default()).unwrap();
        let audit = &record.trace.steps[2];
        assert_eq!(audit.cycles.len(), 2);
        assert_eq!(record.trace.total_cycles(), 2);
        let replayed = record.trace.replay();
        let final_steps: Vec<String> = record.cot.steps.iter().map(|s| s.content.clone()).collect();
        assert_eq!(replayed, final_steps);
    }

    #[test]
    fn curate_transport_failure() {
        let client = client_with(
            "s",
            SampleScript {
                transport_failure: true,
                ..Default::default()
            },
        );
        let rejected =
            curate_sample(&sample("s"), client.clients(), &CurationConfig::default()).unwrap_err();
        assert_eq!(rejected.reason.label(), "transport");
        assert!(rejected.retryable);
    }

    #[test]
    fn curate_incorrigible_step() {
        let client = client_with("s", scores(&[(2, &[0.1])]));
        let config = CurationConfig {
            max_correction_iters: 4,
            ..Default::default()
        };
        let rejected = curate_sample(&sample("s"), client.clients(), &config).unwrap_err();
        assert_eq!(
            rejected.reason,
            RejectReason::StepRejected {
                index: 2,
                cycles: 4
            }
        );
        assert!(!rejected.retryable);
        assert_eq!(rejected.trace.steps.len(), 2);
    }

    #[test]
    fn config_validation_names_field() {
        let bad = CurationConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("curation.threshold"));
    }
}
