//! Answer-string metrics in the usual reading-comprehension style.

use std::collections::HashMap;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, turns every non-alphanumeric character into a space, drops
/// the articles a/an/the, and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let spaced: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    spaced
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, answers: &[String]) -> bool {
    let p = normalize(prediction);
    answers.iter().any(|a| normalize(a) == p)
}

fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize(prediction);
    let g = normalize(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if pt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(n) = counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token-multiset F1 over the gold answers.
pub fn f1(prediction: &str, answers: &[String]) -> f64 {
    answers.iter().map(|a| token_f1(prediction, a)).fold(0.0, f64::max)
}

/// Whether some normalized gold answer occurs inside the normalized prediction.
pub fn recall_substring(prediction: &str, answers: &[String]) -> bool {
    let p = normalize(prediction);
    answers.iter().any(|a| p.contains(normalize(a).as_str()))
}
