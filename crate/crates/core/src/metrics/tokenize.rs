//! Caption tokenization and the light stemmer used by METEOR-lite.
//!
//! Tokenization is deliberately simple so scores are reproducible from the
//! documented rule alone: lowercase, replace every non-alphanumeric
//! character with a space, split on whitespace.

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(|w| w.to_string())
        .collect()
}

/// Suffix-stripping stemmer (Porter-style, heavily reduced). Rules are
/// applied repeatedly (at most three passes) so "buildings" and "building"
/// both reduce to "build". Exact+stem matching is all METEOR-lite does;
/// there is no lexical database behind it.
pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    for _ in 0..3 {
        let before = w.len();
        if let Some(base) = w.strip_suffix("ies") {
            if base.len() >= 2 {
                w = format!("{base}y");
            }
        } else if let Some(base) = w.strip_suffix("sses") {
            w = format!("{base}ss");
        } else if w.ends_with('s') && !w.ends_with("ss") && w.len() >= 4 {
            w.truncate(w.len() - 1);
        } else if let Some(base) = w.strip_suffix("ing") {
            if base.len() >= 3 {
                w = base.to_string();
            }
        } else if let Some(base) = w.strip_suffix("ed") {
            if base.len() >= 3 {
                w = base.to_string();
            }
        } else if let Some(base) = w.strip_suffix("ly") {
            if base.len() >= 3 {
                w = base.to_string();
            }
        } else if w.ends_with('e') && !w.ends_with("ee") && w.len() >= 5 {
            // final-e drop so "removes" -> "remove" -> "remov" meets
            // "removed" -> "remov"
            w.truncate(w.len() - 1);
        }
        if w.len() == before {
            break;
        }
    }
    w
}
