//! Levenshtein distance over Unicode scalar values.

use unicode_normalization::UnicodeNormalization;

/// Minimum number of single-`char` insertions, deletions and substitutions
/// turning `a` into `b`, both taken in NFC.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.nfc().collect();
    let b: Vec<char> = b.nfc().collect();
    edit_distance_chars(&a, &b)
}

/// Distance between `char` sequences as given, without normalization.
pub fn edit_distance_chars(a: &[char], b: &[char]) -> usize {
    // Keep the shorter sequence on the row axis.
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let prefix = long.iter().zip(short).take_while(|(x, y)| x == y).count();
    let (long, short) = (&long[prefix..], &short[prefix..]);
    let suffix = long
        .iter()
        .rev()
        .zip(short.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (long, short) = (&long[..long.len() - suffix], &short[..short.len() - suffix]);
    if short.is_empty() {
        return long.len();
    }

    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(lc != sc);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}
