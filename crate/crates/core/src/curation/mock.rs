//! Deterministic scripted generator/evaluator.
//!
//! Responses depend only on `(sample id, step index, call number)`, never on
//! scheduling order, so concurrent runs produce identical records.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    ClientError, Clients, CorrectionRequest, Evaluation, EvaluationRequest, EvaluatorClient,
    GeneratorClient, RawSample,
};

fn default_score() -> f64 {
    0.9
}

/// Script file contents (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    /// Score for any evaluation the script does not pin.
    #[serde(default = "default_score")]
    pub default_score: f64,
    #[serde(default)]
    pub samples: BTreeMap<String, SampleScript>,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            default_score: default_score(),
            samples: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleScript {
    /// Raw generator response; a four-step draft is synthesized when absent.
    pub response: Option<String>,
    /// Every call for this sample fails at the transport level.
    pub transport_failure: bool,
    /// 1-based step index → successive evaluation scores. The last entry
    /// repeats once the list is exhausted.
    pub scores: BTreeMap<usize, Vec<f64>>,
    /// 1-based step index → replacement text per correction cycle.
    pub corrections: BTreeMap<usize, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallKind {
    Generate,
    Evaluate { step: usize },
    Correct { step: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub sample_id: String,
    pub kind: CallKind,
}

#[derive(Debug, Default)]
pub struct ScriptedClient {
    script: MockScript,
    evaluations: Mutex<HashMap<(String, usize), usize>>,
    calls: Mutex<Vec<CallRecord>>,
}

impl ScriptedClient {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Default::default()
        }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    pub fn clients(&self) -> Clients<'_> {
        Clients {
            generator: self,
            evaluator: self,
        }
    }

    /// Every call received so far, in arrival order.
    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    /// Distinct sample ids that reached the generator.
    pub fn generated_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .calls()
            .into_iter()
            .filter(|c| c.kind == CallKind::Generate)
            .map(|c| c.sample_id)
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    fn log(&self, sample_id: &str, kind: CallKind) {
        self.calls
            .lock()
            .expect("call log poisoned")
            .push(CallRecord {
                sample_id: sample_id.to_string(),
                kind,
            });
    }

    fn sample_script(&self, id: &str) -> Option<&SampleScript> {
        self.script.samples.get(id)
    }

    fn check_transport(&self, id: &str) -> Result<(), ClientError> {
        match self.sample_script(id) {
            Some(s) if s.transport_failure => Err(ClientError::Transport(format!(
                "scripted: endpoint unreachable for {id}"
            ))),
            _ => Ok(()),
        }
    }

    /// The draft produced for samples without a scripted response.
    pub fn default_draft(sample: &RawSample) -> String {
        format!(
            "<step><segments>\n[10,10,200,60] {q}\n</segments></step>\n\
             <step>\\lang{{{lang}}}</step>\n\
             <step>\\obj{{1}} The main object sits in the centre of the image.</step>\n\
             <step>The question asks: {q} The visible evidence supports the answer {a}.</step>",
            q = sample.question.trim(),
            lang = sample.language_label,
            a = sample.answer.trim(),
        )
    }
}

impl GeneratorClient for ScriptedClient {
    fn generate(&self, sample: &RawSample) -> Result<String, ClientError> {
        self.log(&sample.id, CallKind::Generate);
        self.check_transport(&sample.id)?;
        Ok(self
            .sample_script(&sample.id)
            .and_then(|s| s.response.clone())
            .unwrap_or_else(|| Self::default_draft(sample)))
    }

    fn correct(&self, request: &CorrectionRequest<'_>) -> Result<String, ClientError> {
        let step = request.position + 1;
        self.log(&request.sample.id, CallKind::Correct { step });
        self.check_transport(&request.sample.id)?;
        let scripted = self
            .sample_script(&request.sample.id)
            .and_then(|s| s.corrections.get(&step))
            .and_then(|list| list.get(request.cycle - 1));
        Ok(match scripted {
            Some(text) => text.clone(),
            None => format!(
                "{} [revised {}]",
                request.steps[request.position].content, request.cycle
            ),
        })
    }
}

impl EvaluatorClient for ScriptedClient {
    fn evaluate(&self, request: &EvaluationRequest<'_>) -> Result<Evaluation, ClientError> {
        let step = request.position + 1;
        let id = &request.sample.id;
        self.log(id, CallKind::Evaluate { step });
        self.check_transport(id)?;
        let call = {
            let mut counts = self
                .evaluations
                .lock()
                .expect("evaluation counter poisoned");
            let n = counts.entry((id.clone(), step)).or_insert(0);
            *n += 1;
            *n - 1
        };
        let score = self
            .sample_script(id)
            .and_then(|s| s.scores.get(&step))
            .and_then(|list| list.get(call).or(list.last()).copied())
            .unwrap_or(self.script.default_score);
        Ok(Evaluation {
            score,
            error_span: None,
            critique: format!("scripted critique for step {step}, evaluation {}", call + 1),
        })
    }
}
