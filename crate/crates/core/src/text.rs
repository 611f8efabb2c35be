//! String normalization, fuzzy similarity and feature hashing shared by the
//! NER, linking and parsing stages.

use std::hash::Hasher;

use fnv::FnvHasher;

/// Normalizes a surface string for gazetteer lookup and exact-match tests:
/// lowercase, collapse internal whitespace, strip outer punctuation.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Normalized surface of a token range.
pub fn span_surface(tokens: &[String], start: usize, end: usize) -> String {
    normalize(&tokens[start..end].join(" "))
}

/// `1 - normalized Levenshtein distance` over normalized strings.
pub fn fuzzy_score(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&normalize(a), &normalize(b))
}

/// Best fuzzy score of `target` against any contiguous window of `tokens`.
///
/// Windows range over every length, so a short cell compared with a long
/// question is scored against its best-aligned phrase rather than the whole
/// question.
pub fn window_fuzzy_score(tokens: &[String], target: &str) -> f64 {
    let target = normalize(target);
    let mut best: f64 = if tokens.is_empty() && target.is_empty() {
        1.0
    } else {
        0.0
    };
    for start in 0..tokens.len() {
        for end in start + 1..=tokens.len() {
            let window = normalize(&tokens[start..end].join(" "));
            let score = strsim::normalized_levenshtein(&window, &target);
            if score > best {
                best = score;
            }
        }
    }
    best
}

/// Lowercased word tokens of a (possibly multi-word) string.
pub fn words(s: &str) -> Vec<String> {
    normalize(s)
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_' || c == '/')
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token-set Jaccard similarity.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let mut wa = words(a);
    let mut wb = words(b);
    wa.sort();
    wa.dedup();
    wb.sort();
    wb.dedup();
    if wa.is_empty() && wb.is_empty() {
        return 1.0;
    }
    let inter = wa.iter().filter(|w| wb.contains(w)).count();
    let union = wa.len() + wb.len() - inter;
    inter as f64 / union as f64
}

/// Initial letters of a name, also counting inner capitals
/// (`"LeBron James"` gives `"lbj"`).
pub fn acronym(s: &str) -> String {
    let mut out = String::new();
    for word in s.split(|c: char| c.is_whitespace() || c == '-' || c == '.') {
        for (i, c) in word.chars().enumerate() {
            if !c.is_alphanumeric() {
                continue;
            }
            if i == 0 || c.is_uppercase() {
                out.extend(c.to_lowercase());
            }
        }
    }
    out
}

/// Deterministic 64-bit hash of a sequence of string parts.
pub fn hash_parts(parts: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(p.as_bytes());
        h.write_u8(0x1f);
    }
    h.finish()
}

/// Hashes a feature into `0..buckets`.
pub fn bucket(parts: &[&str], buckets: usize) -> usize {
    (hash_parts(parts) % buckets as u64) as usize
}

/// Parses a finite decimal (`-?digits[.digits]`), the only numeric literal
/// form the toolkit recognizes.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Canonical text of a decimal: no leading `+`, no redundant leading zeros,
/// no trailing fractional zeros.
pub fn canonical_decimal(s: &str) -> Option<String> {
    parse_decimal(s)?;
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let frac = frac.trim_end_matches('0');
    let mut out = String::new();
    if neg && !(int == "0" && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Some(out)
}

/// Trailing-zero-free rendering of a float.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let s = format!("{v}");
    canonical_decimal(&s).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize("  LeBron   James. "), "lebron james");
        assert_eq!(normalize("\"Thriller\""), "thriller");
        assert_eq!(normalize("U.S."), "u.s");
    }

    #[test]
    fn acronyms_use_inner_capitals() {
        assert_eq!(acronym("LeBron James"), "lbj");
        assert_eq!(acronym("kevin love"), "kl");
    }

    #[test]
    fn decimals() {
        assert_eq!(canonical_decimal("1.50").as_deref(), Some("1.5"));
        assert_eq!(canonical_decimal("007").as_deref(), Some("7"));
        assert_eq!(canonical_decimal("-0.0").as_deref(), Some("0"));
        assert_eq!(canonical_decimal("3.").as_deref(), None);
        assert_eq!(canonical_decimal("abc"), None);
        assert_eq!(canonical_decimal("1e5"), None);
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(2.5), "2.5");
    }

    #[test]
    fn window_fuzzy_prefers_aligned_phrase() {
        let q: Vec<String> = "how many points did lebron james score"
            .split(' ')
            .map(String::from)
            .collect();
        assert_eq!(window_fuzzy_score(&q, "LeBron James"), 1.0);
        assert!(window_fuzzy_score(&q, "Kevin Love") < 0.6);
    }
}
