//! Rule-based noun lemmatizer.
//!
//! Lookup order: the exception table, then suffix rules on words longer
//! than three characters:
//!
//! | suffix                    | becomes       | example            |
//! |---------------------------|---------------|--------------------|
//! | `ies`                     | `y`           | families → family  |
//! | `sses`                    | `ss`          | classes → class    |
//! | `ss`, `us`, `is`          | unchanged     | crisis             |
//! | `xes` `ches` `shes` `zes` | drop `es`     | churches → church  |
//! | `s`                       | drop `s`      | parents → parent   |
//!
//! Verb inflections other than the listed irregulars are left alone.

use std::collections::HashMap;
use std::sync::OnceLock;

const EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.tsv");

fn exceptions() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        EXCEPTIONS
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| l.split_once('\t'))
            .collect()
    })
}

/// Lemma of one lowercase word token.
pub fn lemmatize(word: &str) -> String {
    if let Some(l) = exceptions().get(word) {
        return l.to_string();
    }
    if word.chars().count() <= 3 || !word.ends_with('s') {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_string();
    }
    for suffix in ["xes", "ches", "shes", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    word[..word.len() - 1].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_and_exceptions() {
        for (w, l) in [
            ("children", "child"),
            ("parents", "parent"),
            ("families", "family"),
            ("churches", "church"),
            ("classes", "class"),
            ("crisis", "crisis"),
            ("bus", "bus"),
            ("was", "be"),
            ("child", "child"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }
}
