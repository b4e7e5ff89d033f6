use std::collections::HashMap;

/// Substituted for a zero clipped n-gram count.
pub const SMOOTHING_EPSILON: f64 = 1e-4;

const MAX_ORDER: usize = 4;

/// Whitespace split, then `{ } ( ) . , ; ?` become tokens of their own.
pub fn bleu_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if matches!(c, '{' | '}' | '(' | ')' | '.' | ',' | ';' | '?') {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + 1]);
                start = i + 1;
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 on a 0..100 scale: uniform weights, brevity penalty,
/// add-epsilon smoothing of zero match counts.
pub fn bleu(predicted: &str, gold: &str) -> f64 {
    let hyp = bleu_tokens(predicted);
    let reference = bleu_tokens(gold);
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let total = hyp.len().saturating_sub(n - 1);
        if total == 0 {
            // hypothesis shorter than n: treat as one smoothed miss
            log_sum += SMOOTHING_EPSILON.ln();
            continue;
        }
        let hyp_counts = ngram_counts(&hyp, n);
        let ref_counts = ngram_counts(&reference, n);
        let matched: usize = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let numerator = if matched == 0 {
            SMOOTHING_EPSILON
        } else {
            matched as f64
        };
        log_sum += (numerator / total as f64).ln();
    }
    let precision = (log_sum / MAX_ORDER as f64).exp();
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    (100.0 * brevity * precision).clamp(0.0, 100.0)
}
