use serde::{Deserialize, Serialize};

use super::{CoTStep, RawSample, Span};

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    500
}

/// Chat endpoint settings: base URL, model, bearer-token variable, timeout
/// and retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after a transport failure or a 429/5xx reply.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            token_env: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum ClientError {
    /// The endpoint could not be reached or kept failing after retries.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The endpoint answered, but not with something usable.
    #[error("invalid response: {message}")]
    InvalidResponse { message: String, raw: String },
}

/// Evaluator verdict on one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// In `[0, 1]`.
    pub score: f64,
    /// Character span of the erroneous part; `None` means the whole step.
    #[serde(default)]
    pub error_span: Option<Span>,
    #[serde(default)]
    pub critique: String,
}

#[derive(Debug, Clone, Copy)]
pub struct EvaluationRequest<'a> {
    pub sample: &'a RawSample,
    pub steps: &'a [CoTStep],
    /// Zero-based position of the step being judged.
    pub position: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CorrectionRequest<'a> {
    pub sample: &'a RawSample,
    pub steps: &'a [CoTStep],
    pub position: usize,
    pub span: Span,
    pub critique: &'a str,
    /// 1-based correction cycle for this step.
    pub cycle: usize,
}

/// `f_gen`: drafts the initial chain and rewrites located errors.
pub trait GeneratorClient: Send + Sync {
    /// Raw response containing `<step>...</step>` blocks.
    fn generate(&self, sample: &RawSample) -> Result<String, ClientError>;

    /// Full replacement text for the step at `request.position`.
    fn correct(&self, request: &CorrectionRequest<'_>) -> Result<String, ClientError>;
}

/// `f_eval`: scores a step and locates its error.
pub trait EvaluatorClient: Send + Sync {
    fn evaluate(&self, request: &EvaluationRequest<'_>) -> Result<Evaluation, ClientError>;
}

/// Borrowed generator/evaluator pair used by the pipeline.
#[derive(Clone, Copy)]
pub struct Clients<'a> {
    pub generator: &'a dyn GeneratorClient,
    pub evaluator: &'a dyn EvaluatorClient,
}

/// Splits a generator response into steps. Steps are `<step>...</step>`
/// blocks; indices are assigned 1..n in order of appearance.
pub fn parse_steps(response: &str) -> Result<Vec<CoTStep>, ClientError> {
    let invalid = |message: &str| ClientError::InvalidResponse {
        message: message.to_string(),
        raw: response.to_string(),
    };
    if response.trim().is_empty() {
        return Err(invalid("empty response body"));
    }
    let mut steps = Vec::new();
    let mut rest = response;
    while let Some(open) = rest.find("<step>") {
        let body = &rest[open + "<step>".len()..];
        let Some(close) = body.find("</step>") else {
            return Err(invalid("unclosed <step> block"));
        };
        let content = body[..close].trim();
        if !content.is_empty() {
            steps.push(CoTStep {
                index: steps.len() + 1,
                content: crate::document::nfc(content),
                score: None,
            });
        }
        rest = &body[close + "</step>".len()..];
    }
    if steps.is_empty() {
        return Err(invalid("no <step> blocks in response"));
    }
    Ok(steps)
}

/// Pulls the first `{...}` object out of a chat reply and reads it as an
/// [`Evaluation`].
pub fn parse_evaluation(reply: &str) -> Result<Evaluation, ClientError> {
    let invalid = |message: String| ClientError::InvalidResponse {
        message,
        raw: reply.to_string(),
    };
    let (Some(start), Some(end)) = (reply.find('{'), reply.rfind('}')) else {
        return Err(invalid("no JSON object in evaluator reply".into()));
    };
    if end < start {
        return Err(invalid("no JSON object in evaluator reply".into()));
    }
    let eval: Evaluation = serde_json::from_str(&reply[start..=end])
        .map_err(|e| invalid(format!("evaluator JSON: {e}")))?;
    check_score(eval.score).map_err(invalid)?;
    Ok(eval)
}

pub(crate) fn check_score(score: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(format!("evaluator score {score} outside [0, 1]"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_get_sequential_indices() {
        let steps =
            parse_steps("<step>a</step>\n<step> b </step><step></step><step>c\nd</step>").unwrap();
        let got: Vec<_> = steps
            .iter()
            .map(|s| (s.index, s.content.as_str()))
            .collect();
        assert_eq!(got, vec![(1, "a"), (2, "b"), (3, "c\nd")]);
    }

    #[test]
    fn empty_and_unstructured_responses_fail() {
        assert!(matches!(
            parse_steps("   "),
            Err(ClientError::InvalidResponse { .. })
        ));
        match parse_steps("just prose") {
            Err(ClientError::InvalidResponse { raw, .. }) => assert_eq!(raw, "just prose"),
            other => panic!("{other:?}"),
        }
        assert!(parse_steps("<step>open").is_err());
    }

    #[test]
    fn evaluation_json_in_prose() {
        let e = parse_evaluation("Sure: {\"score\": 0.4, \"error_span\": {\"start\": 2, \"end\": 5}, \"critique\": \"wrong count\"} done").unwrap();
        assert_eq!(e.score, 0.4);
        assert_eq!(e.error_span, Some(Span { start: 2, end: 5 }));
        assert!(parse_evaluation("{\"score\": 1.5}").is_err());
        assert!(parse_evaluation("no json").is_err());
    }
}
