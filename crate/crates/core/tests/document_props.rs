use proptest::prelude::*;

use cotreward::document::{
    check_format, parse_document, serialize_document, BBox, BBoxSegment, CoTDocument,
};
use cotreward::{FormatMode, LanguageCode, Scorer, ScoringTarget, TagSet};

const TEXT_CHARS: &str = "abcxyz019 .,:?!()[]{}éüßçЖжя中文答案日本語한국어ภาษาไทยعربيĐường";

fn text(max: usize) -> impl Strategy<Value = String> {
    let chars: Vec<char> = TEXT_CHARS.chars().collect();
    proptest::collection::vec(proptest::sample::select(chars), 0..max)
        .prop_map(|v| v.into_iter().collect::<String>().trim().to_string())
}

fn line(max: usize) -> impl Strategy<Value = String> {
    text(max).prop_filter("non-empty", |s| !s.is_empty())
}

fn multiline(max: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(text(max), 0..4).prop_map(|lines| lines.join("\n").trim().to_string())
}

fn segment() -> impl Strategy<Value = BBoxSegment> {
    (0u32..2000, 0u32..2000, 0u32..500, 0u32..500, line(20)).prop_map(|(x, y, w, h, summary)| {
        BBoxSegment {
            bbox: BBox::new(x, y, x + w, y + h).unwrap(),
            summary,
        }
    })
}

fn document() -> impl Strategy<Value = CoTDocument> {
    (
        proptest::collection::vec(segment(), 0..5),
        proptest::option::of(proptest::sample::select(LanguageCode::ALL.to_vec())),
        proptest::option::of(0u32..1000),
        multiline(30),
        multiline(40),
        text(20),
    )
        .prop_map(
            |(segments, language, object_count, caption, reasoning, final_answer)| CoTDocument {
                segments,
                language,
                object_count,
                caption,
                reasoning,
                final_answer,
                ..Default::default()
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialize_then_parse_is_identity(doc in document()) {
        prop_assume!(doc.validate().is_ok());
        let text = serialize_document(&doc);
        let parsed = parse_document(&text).unwrap();
        prop_assert_eq!(&parsed, &doc);
        prop_assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        prop_assert_eq!(serialize_document(&parsed), text);
    }

    #[test]
    fn canonical_output_is_well_formatted(doc in document()) {
        let text = serialize_document(&doc);
        prop_assert!(check_format(&text, &TagSet::default(), FormatMode::Strict));
    }

    #[test]
    fn arbitrary_text_never_panics(input in "\\PC{0,200}") {
        let _ = parse_document(&input);
        let target = ScoringTarget {
            language: LanguageCode::En,
            counts: Default::default(),
            answer: "x".into(),
        };
        let report = Scorer::default().score(&input, &target);
        prop_assert!((0.0..=1.0).contains(&report.total));
    }

    #[test]
    fn tag_soup_never_panics(pieces in proptest::collection::vec(
        proptest::sample::select(vec![
            "<segments>", "</segments>", "<think>", "</think>", "<answer>", "</answer>",
            "\\lang{", "\\obj{", "}", "[1,2,3,4] a\n", "\n", "x", "é",
        ]),
        0..16,
    )) {
        let input: String = pieces.concat();
        if let Ok(doc) = parse_document(&input) {
            // Whatever was extracted must itself survive a round trip.
            if doc.validate().is_ok() {
                prop_assert_eq!(parse_document(&serialize_document(&doc)).unwrap(), doc);
            }
        }
    }
}
