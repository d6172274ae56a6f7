//! Chat-completion style HTTP client.
//!
//! Requests are `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role", "content"}], "temperature"}` and the reply
//! text is read from `choices[0].message.content`. The bearer token comes
//! from the environment variable named in the endpoint config.

use std::time::Duration;

use serde_json::{json, Value};

use super::prompts;
use super::{
    parse_evaluation, ClientError, CorrectionRequest, EndpointConfig, Evaluation,
    EvaluationRequest, EvaluatorClient, GeneratorClient, RawSample,
};

pub struct ChatEndpoint {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for ChatEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatEndpoint")
            .field("config", &self.config)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl ChatEndpoint {
    /// Reads the token variable now; a named but unset variable is an error.
    pub fn new(config: EndpointConfig) -> Result<Self, String> {
        let token = match &config.token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            token,
            agent,
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// Sends one system+user exchange and returns the reply text.
    pub fn chat(&self, system: &str, user: &str) -> Result<String, ClientError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms * u64::from(attempt),
                ));
            }
            match self.send(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Retry(msg)) => last = msg,
                Err(Attempt::Fatal(err)) => return Err(err),
            }
        }
        Err(ClientError::Transport(format!(
            "{} after {} attempts: {last}",
            self.url(),
            self.config.retries + 1
        )))
    }

    fn send(&self, body: &Value) -> Result<String, Attempt> {
        let mut request = self.agent.post(&self.url());
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let response = request
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(ClientError::InvalidResponse {
                message: format!("HTTP {status}"),
                raw: text,
            }));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(ClientError::InvalidResponse {
                message: format!("reply is not JSON: {e}"),
                raw: text.clone(),
            })
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                Attempt::Fatal(ClientError::InvalidResponse {
                    message: "missing choices[0].message.content".into(),
                    raw: text,
                })
            })
    }
}

enum Attempt {
    Retry(String),
    Fatal(ClientError),
}

impl GeneratorClient for ChatEndpoint {
    fn generate(&self, sample: &RawSample) -> Result<String, ClientError> {
        self.chat(
            prompts::GENERATOR_SYSTEM,
            &prompts::generation_prompt(sample),
        )
    }

    fn correct(&self, request: &CorrectionRequest<'_>) -> Result<String, ClientError> {
        self.chat(
            prompts::GENERATOR_SYSTEM,
            &prompts::correction_prompt(request),
        )
    }
}

impl EvaluatorClient for ChatEndpoint {
    fn evaluate(&self, request: &EvaluationRequest<'_>) -> Result<Evaluation, ClientError> {
        let reply = self.chat(
            prompts::EVALUATOR_SYSTEM,
            &prompts::evaluation_prompt(request),
        )?;
        parse_evaluation(&reply)
    }
}
