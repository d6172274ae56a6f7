use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::document::{LANG_TAG, OBJ_TAG};
use crate::language::LanguageCode;
use crate::reward::{CountPair, ScoringTarget};

/// One decision position: fixed `prefix` text followed by the chosen
/// fragment. An empty fragment means "emit nothing here".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    #[serde(default)]
    pub prefix: String,
    pub options: Vec<String>,
}

impl Slot {
    fn new(name: impl Into<String>, prefix: impl Into<String>, options: Vec<String>) -> Self {
        Self {
            name: name.into(),
            prefix: prefix.into(),
            options,
        }
    }
}

/// Stand-in environment: an output is one token per slot, rendered to text
/// and scored with the real reward engine against `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub slots: Vec<Slot>,
    #[serde(default)]
    pub suffix: String,
    pub target: ScoringTarget,
}

/// Knobs for the structured task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSettings {
    pub language: LanguageCode,
    pub text_segments: u32,
    pub objects: u32,
    pub answer: String,
    /// Optional bbox lines; the episode can emit 0..=segment_slots segments.
    pub segment_slots: usize,
    /// Answer characters to choose from, target characters included.
    pub answer_alphabet: usize,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self {
            language: LanguageCode::Ar,
            text_segments: 3,
            objects: 5,
            answer: "٤٢٧".into(),
            segment_slots: 5,
            answer_alphabet: 10,
        }
    }
}

const DISTRACTOR_POOL: &str = "٠١٢٣٤٥٦٧٨٩0123456789abcdefghij";

impl ToyTask {
    /// The four-stage format as a slot sequence, ordered from easiest to
    /// hardest to get right by chance:
    ///
    /// * format: four binary open/close tag slots;
    /// * language: one 14-way slot (13 codes or nothing);
    /// * counts: `segment_slots` binary bbox slots plus an 11-way `\obj{}`
    ///   slot;
    /// * answer: one slot per answer character, each choosing among
    ///   `answer_alphabet` characters or nothing.
    pub fn structured(settings: &TaskSettings) -> Result<Self, String> {
        let answer: Vec<char> = settings.answer.trim().chars().collect();
        if answer.is_empty() {
            return Err("toy.answer must not be empty".into());
        }
        if settings.objects > 9 {
            return Err("toy.objects must be <= 9 (one digit token)".into());
        }
        if settings.text_segments as usize > settings.segment_slots {
            return Err("toy.text_segments must be <= toy.segment_slots".into());
        }
        let mut alphabet: Vec<char> = Vec::new();
        for c in answer.iter().copied().chain(DISTRACTOR_POOL.chars()) {
            if alphabet.len() >= settings.answer_alphabet.max(answer.len()) {
                break;
            }
            if !alphabet.contains(&c) {
                alphabet.push(c);
            }
        }
        alphabet.sort_unstable();

        let mut slots = Vec::new();
        for k in 0..settings.segment_slots {
            let prefix = if k == 0 { "<segments>\n" } else { "" };
            let line = format!(
                "[{},{},{},{}] region {}\n",
                10 * k,
                10 * k,
                10 * k + 40,
                10 * k + 20,
                k + 1
            );
            slots.push(Slot::new(
                format!("segment_{}", k + 1),
                prefix,
                vec![String::new(), line],
            ));
        }
        let lang_prefix = if settings.segment_slots > 0 {
            "</segments>\n"
        } else {
            ""
        };
        let mut lang_options = vec![String::new()];
        lang_options.extend(
            LanguageCode::ALL
                .iter()
                .map(|c| format!("{LANG_TAG}{c}}}\n")),
        );
        slots.push(Slot::new("language", lang_prefix, lang_options));

        let mut obj_options = vec![String::new()];
        obj_options.extend((0..=9).map(|d| format!("{OBJ_TAG}{d}}}\n")));
        slots.push(Slot::new("objects", "", obj_options));

        let binary = |tag: &str| vec![String::new(), tag.to_string()];
        slots.push(Slot::new(
            "think_open",
            "objects arranged from left to right\n",
            binary("<think>\n"),
        ));
        slots.push(Slot::new(
            "think_close",
            "compare the regions with the question\n",
            binary("</think>\n"),
        ));
        slots.push(Slot::new("answer_open", "", binary("<answer>")));
        for k in 0..answer.len() {
            let mut options = vec![String::new()];
            options.extend(alphabet.iter().map(|c| c.to_string()));
            slots.push(Slot::new(format!("answer_{}", k + 1), "", options));
        }
        slots.push(Slot::new("answer_close", "", binary("</answer>")));

        Ok(Self {
            slots,
            suffix: String::new(),
            target: ScoringTarget {
                language: settings.language,
                counts: CountPair::new(settings.text_segments, settings.objects),
                answer: answer.iter().collect(),
            },
        })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.options.len()).collect()
    }

    /// Episode length cap: one token per slot.
    pub fn episode_len(&self) -> usize {
        self.slots.len()
    }

    /// Every distinct non-empty fragment any slot can emit.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.slots
            .iter()
            .flat_map(|s| s.options.iter().map(String::as_str))
            .filter(|t| !t.is_empty())
            .collect()
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        let mut out = String::new();
        for (slot, &tok) in self.slots.iter().zip(tokens) {
            out.push_str(&slot.prefix);
            out.push_str(&slot.options[tok]);
        }
        out.push_str(&self.suffix);
        out
    }

    /// Tokens rendering the reference output, if the vocabulary allows it.
    pub fn perfect_tokens(&self) -> Option<Vec<usize>> {
        let target = &self.target;
        let answer: Vec<String> = target.answer.chars().map(|c| c.to_string()).collect();
        let mut segments_left = target.counts.text_segments;
        let mut answer_pos = 0;
        self.slots
            .iter()
            .map(|slot| {
                let want: String = match slot.name.as_str() {
                    n if n.starts_with("segment_") => {
                        if segments_left > 0 {
                            segments_left -= 1;
                            return slot.options.iter().position(|o| !o.is_empty());
                        }
                        String::new()
                    }
                    "language" => format!("{LANG_TAG}{}}}\n", target.language),
                    "objects" => format!("{OBJ_TAG}{}}}\n", target.counts.objects),
                    n if n.starts_with("answer_") && n != "answer_open" && n != "answer_close" => {
                        answer_pos += 1;
                        answer.get(answer_pos - 1).cloned().unwrap_or_default()
                    }
                    _ => return slot.options.iter().position(|o| !o.is_empty()),
                };
                slot.options.iter().position(|o| *o == want)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::Scorer;

    #[test]
    fn vocabulary_covers_a_perfect_output() {
        let task = ToyTask::structured(&TaskSettings::default()).unwrap();
        let tokens = task.perfect_tokens().expect("perfect output reachable");
        let text = task.render(&tokens);
        let report = Scorer::default().score(&text, &task.target);
        assert_eq!(
            report.components(),
            [1.0; 4],
            "{text}\n{:?}",
            report.diagnostics
        );
        assert_eq!(report.total, 1.0);

        let vocab = task.vocabulary();
        assert!(vocab.contains("<think>\n"));
        assert!(vocab.contains("\\lang{ar}\n"));
        assert!(vocab.contains("\\obj{5}\n"));
        assert!(vocab.contains("٤"));
    }

    #[test]
    fn empty_output_scores_zero() {
        let task = ToyTask::structured(&TaskSettings::default()).unwrap();
        let zeros = vec![0; task.episode_len()];
        let report = Scorer::default().score(&task.render(&zeros), &task.target);
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn settings_validation() {
        let bad = TaskSettings {
            objects: 12,
            ..Default::default()
        };
        assert!(ToyTask::structured(&bad).is_err());
        let bad = TaskSettings {
            answer: " ".into(),
            ..Default::default()
        };
        assert!(ToyTask::structured(&bad).is_err());
    }
}
