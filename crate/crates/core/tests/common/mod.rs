//! Oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use serde::Deserialize;
use unicode_normalization::UnicodeNormalization;

/// Full `(n+1) × (m+1)` table Levenshtein distance, written independently of
/// the library's two-row implementation.
pub fn dp_levenshtein(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in table[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let substitution = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = substitution
                .min(table[i - 1][j] + 1)
                .min(table[i][j - 1] + 1);
        }
    }
    table[n][m]
}

pub fn nfc_chars(s: &str) -> Vec<char> {
    s.nfc().collect()
}

/// Characters from the scripts of all supported languages, plus a few
/// combining marks so NFC has work to do.
pub const ALPHABET: &[char] = &[
    'a', 'b', 'e', 'z', 'A', '7', ' ', 'é', 'ü', 'ç', 'ã', 'ß', 'ı', 'İ', 'ğ', 'д', 'ж', 'я', 'Ё',
    '中', '文', '答', '案', 'ع', 'ر', 'ب', '٤', '٢', 'あ', 'ン', '日', '한', '국', '어', 'ก', 'ไ',
    '่', 'ệ', 'ư', 'ơ', 'đ', '\u{301}', '\u{308}', '\u{303}', '😀', '∑',
];

pub fn random_string(rng: &mut impl Rng, max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoldenDoc {
    pub id: String,
    pub language: String,
    pub text_segments: u32,
    pub objects: Option<u32>,
    pub segments: Vec<([u32; 4], String)>,
    pub caption: String,
    pub reasoning: String,
    pub answer: String,
    pub raw: String,
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn golden_corpus() -> Vec<GoldenDoc> {
    let text =
        std::fs::read_to_string(data_path("golden_corpus.jsonl")).expect("golden corpus present");
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("golden line parses"))
        .collect()
}
