//! Four-stage structured reasoning documents.
//!
//! The surface syntax is line oriented:
//!
//! ```text
//! <segments>
//! [12,40,220,88] summary of a text region
//! [12,96,220,130] another region
//! </segments>
//! \lang{ar}
//! \obj{5}
//! caption describing objects and their positions
//! <think>
//! step-by-step reasoning
//! </think>
//! <answer>final answer</answer>
//! ```
//!
//! Only the answer span is mandatory. Everything is NFC-normalized before
//! scanning so comparisons are stable across Arabic, Thai and CJK input.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::language::LanguageCode;

pub const SEGMENTS_OPEN: &str = "<segments>";
pub const SEGMENTS_CLOSE: &str = "</segments>";
pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const LANG_TAG: &str = "\\lang{";
pub const OBJ_TAG: &str = "\\obj{";

/// Markers that may not appear inside free-text fields of a serializable
/// document.
pub const RESERVED_MARKERS: [&str; 8] = [
    SEGMENTS_OPEN,
    SEGMENTS_CLOSE,
    THINK_OPEN,
    THINK_CLOSE,
    ANSWER_OPEN,
    ANSWER_CLOSE,
    LANG_TAG,
    OBJ_TAG,
];

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Pixel-space box, `(x_min, y_min, x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Option<Self> {
        (x_min <= x_max && y_min <= y_max).then_some(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{},{},{}]",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Stage (a) entry: a text region and its short summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBoxSegment {
    pub bbox: BBox,
    pub summary: String,
}

impl BBoxSegment {
    /// Parses one `[x1,y1,x2,y2] summary` line.
    pub fn parse_line(line: &str) -> Option<Self> {
        let line = line.trim();
        let rest = line.strip_prefix('[')?;
        let close = rest.find(']')?;
        let coords: Vec<u32> = rest[..close]
            .split(',')
            .map(|c| c.trim().parse::<u32>())
            .collect::<Result<_, _>>()
            .ok()?;
        let [x_min, y_min, x_max, y_max] = coords[..] else {
            return None;
        };
        let summary = rest[close + 1..].trim();
        if summary.is_empty() {
            return None;
        }
        Some(Self {
            bbox: BBox::new(x_min, y_min, x_max, y_max)?,
            summary: summary.to_string(),
        })
    }
}

/// Why a raw output could not be parsed at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ParseFailure {
    #[error("answer span missing: no `<answer>` tag")]
    MissingAnswer,
    #[error("unclosed `<{tag}>` tag")]
    UnclosedTag { tag: String },
}

/// A parsed structured reasoning output.
///
/// Equality compares the extracted content only. `raw` and `warnings`
/// describe where the document came from and are ignored by `==`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CoTDocument {
    pub segments: Vec<BBoxSegment>,
    pub language: Option<LanguageCode>,
    pub object_count: Option<u32>,
    pub caption: String,
    pub reasoning: String,
    pub final_answer: String,
    #[serde(default)]
    pub raw: String,
    /// Recoverable problems seen while parsing (bad bbox lines, unknown
    /// language codes, non-numeric object counts).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PartialEq for CoTDocument {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments
            && self.language == other.language
            && self.object_count == other.object_count
            && self.caption == other.caption
            && self.reasoning == other.reasoning
            && self.final_answer == other.final_answer
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidDocument {
    #[error("field `{field}` contains reserved marker `{marker}`")]
    ReservedMarker { field: String, marker: &'static str },
    #[error("field `{0}` is not trimmed")]
    Untrimmed(String),
    #[error("field `{0}` is not NFC-normalized")]
    NotNfc(String),
    #[error("segment {0} has an empty or multi-line summary")]
    BadSummary(usize),
}

impl CoTDocument {
    /// Checks the invariants under which `parse_document(serialize_document(d)) == d`.
    pub fn validate(&self) -> Result<(), InvalidDocument> {
        let mut fields: Vec<(String, &str)> = vec![
            ("caption".into(), &self.caption),
            ("reasoning".into(), &self.reasoning),
            ("final_answer".into(), &self.final_answer),
        ];
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.summary.is_empty() || seg.summary.contains(['\n', '\r']) {
                return Err(InvalidDocument::BadSummary(i));
            }
            fields.push((format!("segments[{i}].summary"), &seg.summary));
        }
        for (name, value) in fields {
            if let Some(marker) = RESERVED_MARKERS.iter().find(|m| value.contains(*m)) {
                return Err(InvalidDocument::ReservedMarker {
                    field: name,
                    marker,
                });
            }
            if value.trim() != value {
                return Err(InvalidDocument::Untrimmed(name));
            }
            if nfc(value) != value {
                return Err(InvalidDocument::NotNfc(name));
            }
        }
        Ok(())
    }
}

/// Finds `open ... close` with `close` searched after `open`. Returns the
/// byte range of the open tag start and the close tag end, plus the inner
/// range.
fn find_block(text: &str, open: &str, close: &str) -> Option<Result<Block, ()>> {
    let start = text.find(open)?;
    let inner_start = start + open.len();
    match text[inner_start..].find(close) {
        Some(rel) => Some(Ok(Block {
            start,
            inner: inner_start..inner_start + rel,
            end: inner_start + rel + close.len(),
        })),
        None => Some(Err(())),
    }
}

#[derive(Debug, Clone)]
struct Block {
    start: usize,
    inner: std::ops::Range<usize>,
    end: usize,
}

/// Returns the content of the first `\name{...}` tag in `text` and its
/// byte range, or `None` when the tag is absent. An unterminated tag yields
/// `Some(Err(()))`.
fn find_inline_tag<'a>(
    text: &'a str,
    tag: &str,
) -> Option<Result<(&'a str, std::ops::Range<usize>), ()>> {
    let start = text.find(tag)?;
    let body = start + tag.len();
    match text[body..].find('}') {
        Some(rel) => Some(Ok((&text[body..body + rel], start..body + rel + 1))),
        None => Some(Err(())),
    }
}

fn strip_inline_tags(text: &str, tag: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find(tag) {
        out.push_str(&rest[..start]);
        let after = &rest[start + tag.len()..];
        match after.find('}') {
            Some(close) => rest = &after[close + 1..],
            None => {
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn parse_segment_block(inner: &str, warnings: &mut Vec<String>) -> Vec<BBoxSegment> {
    let mut segments = Vec::new();
    for (lineno, line) in inner.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match BBoxSegment::parse_line(line) {
            Some(seg) => segments.push(seg),
            None => warnings.push(format!(
                "segment line {} is not `[x1,y1,x2,y2] summary`: {:?}",
                lineno + 1,
                line.trim()
            )),
        }
    }
    segments
}

/// Parses a raw model output into its four stages.
///
/// Missing optional stages leave their fields empty. Fails only when the
/// answer span is absent or one of the block tags is left open.
pub fn parse_document(text: &str) -> Result<CoTDocument, ParseFailure> {
    let text = nfc(text);
    let mut warnings = Vec::new();

    let answer = match find_block(&text, ANSWER_OPEN, ANSWER_CLOSE) {
        None => return Err(ParseFailure::MissingAnswer),
        Some(Err(())) => {
            return Err(ParseFailure::UnclosedTag {
                tag: "answer".into(),
            })
        }
        Some(Ok(block)) => block,
    };
    // Everything the stages (a)-(d) may occupy lies before the answer.
    let head = &text[..answer.start];

    let think = match find_block(head, THINK_OPEN, THINK_CLOSE) {
        None => None,
        Some(Err(())) => {
            return Err(ParseFailure::UnclosedTag {
                tag: "think".into(),
            })
        }
        Some(Ok(block)) => Some(block),
    };
    if think.is_none() && head.contains(THINK_CLOSE) {
        warnings.push("stray `</think>` without an opening tag".to_string());
    }
    let preamble_end = think.as_ref().map_or(head.len(), |b| b.start);
    let preamble = &head[..preamble_end];

    let mut segments = Vec::new();
    let mut caption_region = preamble.to_string();
    match find_block(preamble, SEGMENTS_OPEN, SEGMENTS_CLOSE) {
        None => {}
        Some(Err(())) => {
            return Err(ParseFailure::UnclosedTag {
                tag: "segments".into(),
            })
        }
        Some(Ok(block)) => {
            segments = parse_segment_block(&preamble[block.inner.clone()], &mut warnings);
            caption_region = format!("{}{}", &preamble[..block.start], &preamble[block.end..]);
        }
    }

    let language = match find_inline_tag(head, LANG_TAG) {
        None => None,
        Some(Err(())) => {
            warnings.push("unterminated `\\lang{` tag".to_string());
            None
        }
        Some(Ok((body, _))) => {
            let code = LanguageCode::normalize(body);
            if code.is_none() {
                warnings.push(format!("unknown language code {:?}", body.trim()));
            }
            code
        }
    };

    let object_count = match find_inline_tag(head, OBJ_TAG) {
        None => None,
        Some(Err(())) => {
            warnings.push("unterminated `\\obj{` tag".to_string());
            None
        }
        Some(Ok((body, _))) => match body.trim().parse::<u32>() {
            Ok(n) => Some(n),
            Err(_) => {
                warnings.push(format!(
                    "object count {:?} is not a non-negative integer",
                    body.trim()
                ));
                None
            }
        },
    };

    let caption = strip_inline_tags(&strip_inline_tags(&caption_region, LANG_TAG), OBJ_TAG);
    let reasoning = think
        .map(|b| head[b.inner].trim().to_string())
        .unwrap_or_default();

    Ok(CoTDocument {
        segments,
        language,
        object_count,
        caption: caption.trim().to_string(),
        reasoning,
        final_answer: text[answer.inner].trim().to_string(),
        warnings,
        raw: text,
    })
}

/// Emits the canonical text form of a document.
pub fn serialize_document(doc: &CoTDocument) -> String {
    let mut out = String::new();
    if !doc.segments.is_empty() {
        out.push_str(SEGMENTS_OPEN);
        out.push('\n');
        for seg in &doc.segments {
            out.push_str(&format!("{} {}\n", seg.bbox, seg.summary));
        }
        out.push_str(SEGMENTS_CLOSE);
        out.push('\n');
    }
    if let Some(lang) = doc.language {
        out.push_str(&format!("{LANG_TAG}{lang}}}\n"));
    }
    if let Some(n) = doc.object_count {
        out.push_str(&format!("{OBJ_TAG}{n}}}\n"));
    }
    if !doc.caption.is_empty() {
        out.push_str(&doc.caption);
        out.push('\n');
    }
    out.push_str(THINK_OPEN);
    out.push('\n');
    if !doc.reasoning.is_empty() {
        out.push_str(&doc.reasoning);
        out.push('\n');
    }
    out.push_str(THINK_CLOSE);
    out.push('\n');
    out.push_str(ANSWER_OPEN);
    out.push_str(&doc.final_answer);
    out.push_str(ANSWER_CLOSE);
    out
}

/// The trimmed content of the first answer span, if one is closed.
pub fn answer_span(text: &str) -> Option<String> {
    let text = nfc(text);
    match find_block(&text, ANSWER_OPEN, ANSWER_CLOSE)? {
        Ok(block) => Some(text[block.inner].trim().to_string()),
        Err(()) => None,
    }
}

/// Counts well-formed bbox lines in the first closed `<segments>` block.
pub fn count_segment_entries(text: &str) -> usize {
    match find_block(text, SEGMENTS_OPEN, SEGMENTS_CLOSE) {
        Some(Ok(block)) => parse_segment_block(&text[block.inner], &mut Vec::new()).len(),
        _ => 0,
    }
}

/// The integer inside the first `\obj{..}` tag, if well formed.
pub fn object_count_tag(text: &str) -> Option<u32> {
    match find_inline_tag(text, OBJ_TAG)? {
        Ok((body, _)) => body.trim().parse().ok(),
        Err(()) => None,
    }
}

/// One required open/close tag pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagPair {
    pub open: String,
    pub close: String,
}

impl TagPair {
    /// `TagPair::named("think")` is `<think>` / `</think>`.
    pub fn named(name: &str) -> Self {
        Self {
            open: format!("<{name}>"),
            close: format!("</{name}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidTagSet {
    #[error("tag set is empty")]
    Empty,
    #[error("tag pair {0} has an empty or identical open/close tag")]
    BadPair(usize),
}

/// Tags a well-formatted output must contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TagPair>", into = "Vec<TagPair>")]
pub struct TagSet {
    pairs: Vec<TagPair>,
}

impl TagSet {
    pub fn new(pairs: Vec<TagPair>) -> Result<Self, InvalidTagSet> {
        if pairs.is_empty() {
            return Err(InvalidTagSet::Empty);
        }
        for (i, p) in pairs.iter().enumerate() {
            if p.open.is_empty() || p.close.is_empty() || p.open == p.close {
                return Err(InvalidTagSet::BadPair(i));
            }
        }
        Ok(Self { pairs })
    }

    /// Builds a set from bare names, e.g. `["think", "answer"]`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, InvalidTagSet> {
        Self::new(
            names
                .iter()
                .map(|n| TagPair::named(n.as_ref().trim()))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[TagPair] {
        &self.pairs
    }
}

impl Default for TagSet {
    fn default() -> Self {
        Self {
            pairs: vec![TagPair::named("think"), TagPair::named("answer")],
        }
    }
}

impl TryFrom<Vec<TagPair>> for TagSet {
    type Error = InvalidTagSet;
    fn try_from(pairs: Vec<TagPair>) -> Result<Self, Self::Error> {
        Self::new(pairs)
    }
}

impl From<TagSet> for Vec<TagPair> {
    fn from(set: TagSet) -> Self {
        set.pairs
    }
}

/// How strictly [`check_format`] reads the tag set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatMode {
    /// Every tag present and each open tag occurs before a matching close.
    #[default]
    Strict,
    /// Every tag present anywhere in the text.
    Containment,
}

/// True iff every tag of `tags` appears in `text`; in strict mode the first
/// occurrence of each open tag must also precede an occurrence of its close
/// tag.
pub fn check_format(text: &str, tags: &TagSet, mode: FormatMode) -> bool {
    tags.pairs.iter().all(|pair| match mode {
        FormatMode::Containment => text.contains(&pair.open) && text.contains(&pair.close),
        FormatMode::Strict => match text.find(&pair.open) {
            Some(open) => text[open + pair.open.len()..].contains(&pair.close),
            None => false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "<segments>\n[0,0,10,10] مرحبا\n[5,5,20,20] سعر\n[1,2,3,4] خصم\n</segments>\n\\lang{ar}\n\\obj{5}\nخمسة أشياء على الطاولة\n<think>\nنحسب المجموع\n</think>\n<answer>٤٢</answer>";

    #[test]
    fn extracts_all_stages() {
        let doc = parse_document(FULL).unwrap();
        assert_eq!(doc.segments.len(), 3);
        assert_eq!(doc.language, Some(LanguageCode::Ar));
        assert_eq!(doc.object_count, Some(5));
        assert_eq!(doc.caption, "خمسة أشياء على الطاولة");
        assert_eq!(doc.reasoning, "نحسب المجموع");
        assert_eq!(doc.final_answer, "٤٢");
        assert!(doc.warnings.is_empty());
    }

    #[test]
    fn minimal_answer_only() {
        let doc = parse_document("<answer>42</answer>").unwrap();
        assert!(doc.segments.is_empty());
        assert_eq!(doc.language, None);
        assert_eq!(doc.object_count, None);
        assert_eq!(doc.final_answer, "42");
    }

    #[test]
    fn unclosed_think_fails() {
        let err = parse_document("<think>reasoning<answer>1</answer>").unwrap_err();
        assert_eq!(
            err,
            ParseFailure::UnclosedTag {
                tag: "think".into()
            }
        );
    }

    #[test]
    fn missing_or_unclosed_answer() {
        assert_eq!(
            parse_document("<think>x</think>").unwrap_err(),
            ParseFailure::MissingAnswer
        );
        assert_eq!(
            parse_document("<answer>x").unwrap_err(),
            ParseFailure::UnclosedTag {
                tag: "answer".into()
            }
        );
        assert_eq!(
            parse_document("<segments>\n[0,0,1,1] a\n<answer>x</answer>").unwrap_err(),
            ParseFailure::UnclosedTag {
                tag: "segments".into()
            }
        );
    }

    #[test]
    fn recoverable_problems_become_warnings() {
        let text = "<segments>\n[0,0,1,1] ok\n[5,5,1,1] inverted\nnot a box\n</segments>\n\\lang{klingon}\\obj{many}<answer>a</answer>";
        let doc = parse_document(text).unwrap();
        assert_eq!(doc.segments.len(), 1);
        assert_eq!(doc.language, None);
        assert_eq!(doc.object_count, None);
        assert_eq!(doc.warnings.len(), 4);
    }

    #[test]
    fn language_alias_and_case() {
        let doc = parse_document("\\lang{ ZH-cn }<answer>x</answer>").unwrap();
        assert_eq!(doc.language, Some(LanguageCode::Zh));
    }

    #[test]
    fn nfc_applied_at_parse() {
        // "é" as e + combining acute
        let doc = parse_document("<answer>cafe\u{301}</answer>").unwrap();
        assert_eq!(doc.final_answer, "caf\u{e9}");
    }

    #[test]
    fn serialize_examples() {
        let doc = CoTDocument {
            final_answer: "x".into(),
            ..Default::default()
        };
        assert!(serialize_document(&doc).contains("<answer>x</answer>"));

        let doc = CoTDocument {
            language: Some(LanguageCode::Th),
            final_answer: "ค".into(),
            ..Default::default()
        };
        let text = serialize_document(&doc);
        assert!(text.contains("\\lang{th}"));
        assert_eq!(parse_document(&text).unwrap(), doc);
    }

    #[test]
    fn full_document_round_trips() {
        let doc = parse_document(FULL).unwrap();
        doc.validate().unwrap();
        let again = parse_document(&serialize_document(&doc)).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn validate_rejects_reserved_markers() {
        let doc = CoTDocument {
            reasoning: "a </think> b".into(),
            final_answer: "x".into(),
            ..Default::default()
        };
        assert!(matches!(
            doc.validate(),
            Err(InvalidDocument::ReservedMarker { .. })
        ));
    }

    #[test]
    fn check_format_cases() {
        let tags = TagSet::default();
        assert!(check_format(
            "<think>a</think><answer>b</answer>",
            &tags,
            FormatMode::Strict
        ));
        assert!(!check_format("<think>a</think>", &tags, FormatMode::Strict));

        let think = TagSet::from_names(&["think"]).unwrap();
        // open at byte 9, close only at byte 0: no close follows the open.
        assert!(!check_format(
            "</think>x<think>",
            &think,
            FormatMode::Strict
        ));
        assert!(check_format(
            "</think>x<think>",
            &think,
            FormatMode::Containment
        ));
        assert!(check_format(
            "</think><think>x</think>",
            &think,
            FormatMode::Strict
        ));
    }

    #[test]
    fn tag_set_validation() {
        assert_eq!(TagSet::new(vec![]).unwrap_err(), InvalidTagSet::Empty);
        let bad = TagPair {
            open: "<a>".into(),
            close: "<a>".into(),
        };
        assert_eq!(
            TagSet::new(vec![bad]).unwrap_err(),
            InvalidTagSet::BadPair(0)
        );
    }

    #[test]
    fn bbox_line_parsing() {
        let seg = BBoxSegment::parse_line(" [1, 2, 30, 40]  hello world ").unwrap();
        assert_eq!(seg.bbox, BBox::new(1, 2, 30, 40).unwrap());
        assert_eq!(seg.summary, "hello world");
        assert!(BBoxSegment::parse_line("[1,2,3] x").is_none());
        assert!(BBoxSegment::parse_line("[1,2,3,4]").is_none());
        assert!(BBoxSegment::parse_line("[-1,2,3,4] x").is_none());
    }
}
