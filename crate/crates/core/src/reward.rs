//! Verifiable multi-aspect rewards.
//!
//! Four components, each in `[0, 1]`:
//!
//! * language: `1` iff the `\lang{}` tag equals the labelled language;
//! * count: `1 - |N_ts - N̂_ts + N_obj - N̂_obj| / (N_ts + N_obj)`, clamped;
//! * answer: `1 - D(Y, Ŷ) / max(|Y|, |Ŷ|)` with `D` the Levenshtein distance;
//! * format: `1` iff every required tag pair is present (and ordered, in
//!   strict mode).
//!
//! The total is `α·lang + β·count + γ·answer + δ·format`, summed with a
//! correctly rounded summation so the result does not depend on term order.

use serde::{Deserialize, Serialize};

use crate::curation::ReferenceRecord;
use crate::document::{self, check_format, nfc, parse_document, FormatMode, TagSet};
use crate::language::LanguageCode;
use crate::levenshtein::edit_distance;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvalidWeights {
    #[error("weight `{name}` must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

/// Coefficients `(α, β, γ, δ)` of the language, count, answer and format
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::uniform(0.25)
    }
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self, InvalidWeights> {
        let w = Self {
            alpha,
            beta,
            gamma,
            delta,
        };
        w.validate()?;
        Ok(w)
    }

    pub const fn uniform(w: f64) -> Self {
        Self {
            alpha: w,
            beta: w,
            gamma: w,
            delta: w,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidWeights> {
        for (name, value) in self.named() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(InvalidWeights::Negative { name, value });
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn sum(&self) -> f64 {
        exact_sum(&self.as_array())
    }

    fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ]
    }
}

impl std::str::FromStr for RewardWeights {
    type Err = String;

    /// Parses `a,b,c,d`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [a, b, c, d] = parts[..] else {
            return Err(format!(
                "expected four comma-separated weights, got {}",
                parts.len()
            ));
        };
        RewardWeights::new(a, b, c, d).map_err(|e| e.to_string())
    }
}

/// Text-segment and object counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountPair {
    pub text_segments: u32,
    pub objects: u32,
}

impl CountPair {
    pub const fn new(text_segments: u32, objects: u32) -> Self {
        Self {
            text_segments,
            objects,
        }
    }
}

/// How the count numerator combines the two errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// `|ΔN_ts + ΔN_obj|`: opposite-sign errors cancel.
    #[default]
    Literal,
    /// `|ΔN_ts| + |ΔN_obj|`, for ablations.
    AbsoluteSum,
}

/// What a prediction is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringTarget {
    pub language: LanguageCode,
    pub counts: CountPair,
    pub answer: String,
}

impl From<&ReferenceRecord> for ScoringTarget {
    fn from(record: &ReferenceRecord) -> Self {
        Self {
            language: record.sample.language_label,
            counts: record.reference_counts,
            answer: record.sample.answer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub r_lang: f64,
    pub r_count: f64,
    pub r_answer: f64,
    pub r_format: f64,
    pub total: f64,
    pub weights: RewardWeights,
    pub diagnostics: Vec<String>,
}

impl RewardReport {
    pub fn components(&self) -> [f64; 4] {
        [self.r_lang, self.r_count, self.r_answer, self.r_format]
    }

    /// Each component multiplied by its weight.
    pub fn weighted_components(&self) -> [f64; 4] {
        let w = self.weights.as_array();
        let c = self.components();
        [w[0] * c[0], w[1] * c[1], w[2] * c[2], w[3] * c[3]]
    }
}

pub fn language_reward(label: LanguageCode, predicted: Option<LanguageCode>) -> f64 {
    if predicted == Some(label) {
        1.0
    } else {
        0.0
    }
}

pub fn count_reward(reference: CountPair, predicted: CountPair, mode: CountMode) -> f64 {
    let denom = u64::from(reference.text_segments) + u64::from(reference.objects);
    if denom == 0 {
        return if predicted == CountPair::default() {
            1.0
        } else {
            0.0
        };
    }
    let d_ts = i64::from(reference.text_segments) - i64::from(predicted.text_segments);
    let d_obj = i64::from(reference.objects) - i64::from(predicted.objects);
    let numer = match mode {
        CountMode::Literal => (d_ts + d_obj).unsigned_abs(),
        CountMode::AbsoluteSum => d_ts.unsigned_abs() + d_obj.unsigned_abs(),
    };
    (1.0 - numer as f64 / denom as f64).clamp(0.0, 1.0)
}

/// `1 - D(reference, prediction) / max(len)`, lengths in `char`s. Two empty
/// strings score 1.
pub fn answer_reward(reference: &str, prediction: &str) -> f64 {
    let reference: Vec<char> = nfc(reference).chars().collect();
    let prediction: Vec<char> = nfc(prediction).chars().collect();
    let longest = reference.len().max(prediction.len());
    if longest == 0 {
        return 1.0;
    }
    let d = crate::levenshtein::edit_distance_chars(&reference, &prediction);
    // One rounding: the correctly rounded value of 1 - d/longest.
    (longest - d) as f64 / longest as f64
}

pub fn format_reward(text: &str, tags: &TagSet, mode: FormatMode) -> f64 {
    if check_format(text, tags, mode) {
        1.0
    } else {
        0.0
    }
}

/// Correctly rounded sum of finite values (Shewchuk / `math.fsum`).
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::with_capacity(values.len());
    for &value in values {
        let mut x = value;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half-even across the remaining partials.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Weights, tag set and scoring modes bundled together. Immutable once built
/// and safe to share between threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub weights: RewardWeights,
    pub tags: TagSet,
    #[serde(default)]
    pub format_mode: FormatMode,
    #[serde(default)]
    pub count_mode: CountMode,
}

impl Default for Scorer {
    fn default() -> Self {
        Self::new(RewardWeights::default(), TagSet::default())
    }
}

impl Scorer {
    pub fn new(weights: RewardWeights, tags: TagSet) -> Self {
        Self {
            weights,
            tags,
            format_mode: FormatMode::Strict,
            count_mode: CountMode::Literal,
        }
    }

    /// Scores one raw output. Never fails: anything that cannot be read from
    /// the prediction scores 0 on the affected component and leaves a note
    /// in `diagnostics`.
    pub fn score(&self, prediction: &str, target: &ScoringTarget) -> RewardReport {
        let mut diagnostics = Vec::new();
        let r_format = format_reward(prediction, &self.tags, self.format_mode);
        if r_format == 0.0 {
            diagnostics.push("required tags missing or out of order".to_string());
        }
        let reference_answer = nfc(target.answer.trim());

        let (r_lang, r_count, r_answer) = match parse_document(prediction) {
            Ok(doc) => {
                diagnostics.extend(doc.warnings.iter().cloned());
                if doc.language.is_none() {
                    diagnostics.push("no usable \\lang{} tag".to_string());
                }
                let r_count = match doc.object_count {
                    Some(objects) => {
                        let predicted = CountPair::new(
                            u32::try_from(doc.segments.len()).unwrap_or(u32::MAX),
                            objects,
                        );
                        count_reward(target.counts, predicted, self.count_mode)
                    }
                    None => {
                        diagnostics.push("no usable \\obj{} tag; count scored 0".to_string());
                        0.0
                    }
                };
                (
                    language_reward(target.language, doc.language),
                    r_count,
                    answer_reward(&reference_answer, &doc.final_answer),
                )
            }
            Err(failure) => {
                diagnostics.push(format!(
                    "parse failure: {failure}; language and count scored 0"
                ));
                let r_answer = match document::answer_span(prediction) {
                    Some(span) => answer_reward(&reference_answer, &span),
                    None => 0.0,
                };
                (0.0, 0.0, r_answer)
            }
        };

        let w = self.weights;
        let total = exact_sum(&[
            w.alpha * r_lang,
            w.beta * r_count,
            w.gamma * r_answer,
            w.delta * r_format,
        ]);
        RewardReport {
            r_lang,
            r_count,
            r_answer,
            r_format,
            total,
            weights: w,
            diagnostics,
        }
    }
}

/// Scores `prediction` against a curated reference with strict formatting
/// and the literal count formula.
pub fn score_record(
    prediction: &str,
    reference: &ReferenceRecord,
    weights: RewardWeights,
    tags: &TagSet,
) -> RewardReport {
    Scorer::new(weights, tags.clone()).score(prediction, &ScoringTarget::from(reference))
}

/// Unnormalized distance re-exported for callers that only need `D`.
pub fn answer_distance(reference: &str, prediction: &str) -> usize {
    edit_distance(&nfc(reference), &nfc(prediction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> ScoringTarget {
        ScoringTarget {
            language: LanguageCode::Ar,
            counts: CountPair::new(3, 2),
            answer: "cat".into(),
        }
    }

    fn prediction(lang: &str, segments: usize, objects: u32, answer: &str) -> String {
        let mut s = String::from("<segments>\n");
        for i in 0..segments {
            s.push_str(&format!("[0,0,{i},{i}] region {i}\n"));
        }
        s.push_str(&format!(
            "</segments>\n\\lang{{{lang}}}\n\\obj{{{objects}}}\n<think>\nr\n</think>\n<answer>{answer}</answer>"
        ));
        s
    }

    #[test]
    fn language_examples() {
        assert_eq!(
            language_reward(LanguageCode::Ar, Some(LanguageCode::Ar)),
            1.0
        );
        assert_eq!(
            language_reward(LanguageCode::Ar, Some(LanguageCode::En)),
            0.0
        );
        assert_eq!(language_reward(LanguageCode::Th, None), 0.0);
    }

    #[test]
    fn count_examples() {
        let lit = CountMode::Literal;
        assert_eq!(
            count_reward(CountPair::new(3, 2), CountPair::new(3, 2), lit),
            1.0
        );
        // errors of opposite sign cancel inside the absolute value
        assert_eq!(
            count_reward(CountPair::new(3, 2), CountPair::new(2, 3), lit),
            1.0
        );
        // 1 - |-6|/3 = -1, clamped
        assert_eq!(
            count_reward(CountPair::new(2, 1), CountPair::new(8, 1), lit),
            0.0
        );
        assert_eq!(
            count_reward(
                CountPair::new(3, 2),
                CountPair::new(2, 3),
                CountMode::AbsoluteSum
            ),
            1.0 - 2.0 / 5.0
        );
    }

    #[test]
    fn count_zero_denominator() {
        let zero = CountPair::default();
        assert_eq!(count_reward(zero, zero, CountMode::Literal), 1.0);
        assert_eq!(
            count_reward(zero, CountPair::new(0, 1), CountMode::Literal),
            0.0
        );
    }

    #[test]
    fn answer_examples() {
        assert_eq!(answer_reward("cat", "cat"), 1.0);
        assert_eq!(answer_reward("cat", "cut"), 2.0 / 3.0);
        assert_eq!(answer_reward("", ""), 1.0);
        assert_eq!(answer_reward("", "abc"), 0.0);
        assert_eq!(answer_distance("cat", "cut"), 1);
    }

    #[test]
    fn format_examples() {
        let tags = TagSet::default();
        let good = "<think>x</think><answer>y</answer>";
        assert_eq!(format_reward(good, &tags, FormatMode::Strict), 1.0);
        assert_eq!(
            format_reward("<think>x</think><answer>y", &tags, FormatMode::Strict),
            0.0
        );
        let swapped = "</think>x<think></answer>y<answer>";
        assert_eq!(format_reward(swapped, &tags, FormatMode::Strict), 0.0);
        assert_eq!(format_reward(swapped, &tags, FormatMode::Containment), 1.0);
    }

    #[test]
    fn composition_examples() {
        let scorer = Scorer::default();
        let perfect = scorer.score(&prediction("ar", 3, 2, "cat"), &target());
        assert_eq!(perfect.components(), [1.0; 4]);
        assert_eq!(perfect.total, 1.0);

        let wrong_lang = scorer.score(&prediction("en", 3, 2, "cat"), &target());
        assert_eq!(wrong_lang.total, 0.75);

        let cut = scorer.score(&prediction("ar", 3, 2, "cut"), &target());
        assert_eq!(cut.total, 0.75 + 0.25 * (2.0 / 3.0));
    }

    #[test]
    fn parse_failure_keeps_answer_and_format() {
        let scorer = Scorer::default();
        // unclosed segments block breaks parsing; answer span is still readable
        let text =
            "<segments>\n[0,0,1,1] a\n\\lang{ar}\\obj{2}<think>t</think><answer>cat</answer>";
        let report = scorer.score(text, &target());
        assert_eq!(report.r_lang, 0.0);
        assert_eq!(report.r_count, 0.0);
        assert_eq!(report.r_answer, 1.0);
        assert_eq!(report.r_format, 1.0);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.contains("parse failure")));
    }

    #[test]
    fn missing_object_tag_scores_zero_count() {
        let text = "<segments>\n[0,0,1,1] a\n[0,0,1,1] b\n[0,0,1,1] c\n</segments>\\lang{ar}<think>t</think><answer>cat</answer>";
        let report = Scorer::default().score(text, &target());
        assert_eq!(report.r_count, 0.0);
        assert_eq!(report.total, 0.75);
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        assert_eq!(exact_sum(&[]), 0.0);
        assert_eq!(exact_sum(&[0.1, 0.2, 0.3]), 0.6);
        assert_eq!(exact_sum(&[1e100, 1.0, -1e100, 1e-100]), 1.0);
        assert_eq!(
            exact_sum(&[0.25, 0.25, 0.25 * (2.0 / 3.0), 0.25]),
            0.75 + 0.25 * (2.0 / 3.0)
        );
    }

    #[test]
    fn weights_parse_and_validate() {
        let w: RewardWeights = "0,0.33, 0.33,0.33".parse().unwrap();
        assert_eq!(w.as_array(), [0.0, 0.33, 0.33, 0.33]);
        assert!("1,2,3".parse::<RewardWeights>().is_err());
        assert!("1,2,3,-1".parse::<RewardWeights>().is_err());
        assert!(RewardWeights::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
    }
}
