//! Batch scoring and advantage computation shared by the CLI and the
//! native bindings, so both produce bit-identical numbers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::curation::ReferenceRecord;
use crate::grpo::{group_advantages, GrpoError};
use crate::language::LanguageCode;
use crate::reward::{CountPair, RewardReport, Scorer, ScoringTarget};

/// One model output to score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub output: String,
}

/// One line of `score` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReportLine {
    pub id: String,
    pub r_lang: f64,
    pub r_count: f64,
    pub r_answer: f64,
    pub r_format: f64,
    pub total: f64,
    pub diagnostics: Vec<String>,
}

impl RewardReportLine {
    pub fn new(id: impl Into<String>, report: RewardReport) -> Self {
        Self {
            id: id.into(),
            r_lang: report.r_lang,
            r_count: report.r_count,
            r_answer: report.r_answer,
            r_format: report.r_format,
            total: report.total,
            diagnostics: report.diagnostics,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub scored: usize,
    pub mean_r_lang: f64,
    pub mean_r_count: f64,
    pub mean_r_answer: f64,
    pub mean_r_format: f64,
    pub mean_total: f64,
    /// Prediction ids with no matching reference.
    pub rejects: Vec<String>,
}

impl ScoreSummary {
    pub fn from_lines(lines: &[RewardReportLine], rejects: Vec<String>) -> Self {
        let n = lines.len();
        let mean = |f: fn(&RewardReportLine) -> f64| {
            if n == 0 {
                0.0
            } else {
                lines.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            scored: n,
            mean_r_lang: mean(|l| l.r_lang),
            mean_r_count: mean(|l| l.r_count),
            mean_r_answer: mean(|l| l.r_answer),
            mean_r_format: mean(|l| l.r_format),
            mean_total: mean(|l| l.total),
            rejects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reference id {0} appears more than once")]
pub struct DuplicateReference(pub String);

pub fn index_references(
    references: &[ReferenceRecord],
) -> Result<HashMap<&str, &ReferenceRecord>, DuplicateReference> {
    let mut index = HashMap::with_capacity(references.len());
    for r in references {
        if index.insert(r.id(), r).is_some() {
            return Err(DuplicateReference(r.id().to_string()));
        }
    }
    Ok(index)
}

/// Scores predictions in input order. Unmatched ids are returned as rejects
/// instead of report lines.
pub fn score_predictions(
    scorer: &Scorer,
    predictions: &[PredictionRecord],
    references: &HashMap<&str, &ReferenceRecord>,
) -> (Vec<RewardReportLine>, Vec<String>) {
    let mut lines = Vec::with_capacity(predictions.len());
    let mut rejects = Vec::new();
    for p in predictions {
        match references.get(p.id.as_str()) {
            Some(reference) => {
                let report = scorer.score(&p.output, &ScoringTarget::from(*reference));
                lines.push(RewardReportLine::new(&p.id, report));
            }
            None => rejects.push(p.id.clone()),
        }
    }
    (lines, rejects)
}

/// Loosely typed reference fields as they arrive from a foreign caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFields {
    pub language: String,
    pub text_segments: i64,
    pub objects: i64,
    pub answer: String,
}

impl ReferenceFields {
    pub fn to_target(&self) -> Result<ScoringTarget, String> {
        let language = LanguageCode::normalize(&self.language)
            .ok_or_else(|| format!("unknown language code {:?}", self.language))?;
        let count = |name: &str, v: i64| {
            u32::try_from(v)
                .map_err(|_| format!("{name} must be a non-negative 32-bit count, got {v}"))
        };
        Ok(ScoringTarget {
            language,
            counts: CountPair::new(
                count("text_segments", self.text_segments)?,
                count("objects", self.objects)?,
            ),
            answer: self.answer.clone(),
        })
    }
}

/// Scores `(output, reference)` pairs; a malformed reference yields an
/// error entry for that item only.
pub fn score_batch(
    scorer: &Scorer,
    items: &[(String, ReferenceFields)],
) -> Vec<Result<RewardReport, String>> {
    items
        .iter()
        .map(|(output, fields)| fields.to_target().map(|t| scorer.score(output, &t)))
        .collect()
}

/// Input line of the `advantage` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGroup {
    #[serde(default)]
    pub id: Option<String>,
    pub rewards: Vec<f64>,
}

/// Output line of the `advantage` command: advantages or an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn group_advantages_batch(
    groups: &[Vec<f64>],
    advantage_epsilon: f64,
) -> Vec<Result<Vec<f64>, GrpoError>> {
    groups
        .iter()
        .map(|g| group_advantages(g, advantage_epsilon))
        .collect()
}

pub fn advantage_lines(groups: &[RewardGroup], advantage_epsilon: f64) -> Vec<AdvantageLine> {
    groups
        .iter()
        .map(|g| match group_advantages(&g.rewards, advantage_epsilon) {
            Ok(a) => AdvantageLine {
                id: g.id.clone(),
                advantages: Some(a),
                error: None,
            },
            Err(e) => AdvantageLine {
                id: g.id.clone(),
                advantages: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}
