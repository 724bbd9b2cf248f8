//! Small string helpers shared by the parser, graph builder and grader.

/// Lowercase, split on whitespace, and strip punctuation. Commas and
/// semicolons survive as their own `","` token because they coordinate
/// noun phrases.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let mut word = String::new();
        let mut trailing_comma = false;
        for ch in lower.chars() {
            if ch.is_alphanumeric() || ch == '-' || ch == '\'' {
                word.push(ch);
            } else if ch == ',' || ch == ';' {
                trailing_comma = true;
            }
        }
        let word = word.trim_matches(|c| c == '-' || c == '\'').to_string();
        if !word.is_empty() {
            out.push(word);
        }
        if trailing_comma {
            out.push(",".to_string());
        }
    }
    out
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_phrase(s: &str) -> String {
    tokenize(s)
        .into_iter()
        .filter(|t| t != ",")
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)`, in [0, 1]; two empty strings score 1.
pub fn similarity(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / n as f64
}

/// Crude inflection stripper for verbs outside the relation table:
/// `chases`/`chasing` → `chas`, `hugging` → `hug`, `carries` → `carry`.
pub fn verb_stem(word: &str) -> String {
    let w = word;
    if w.len() > 5 {
        if let Some(stem) = w.strip_suffix("ing") {
            return undouble(stem);
        }
    }
    if w.len() > 4 {
        if let Some(stem) = w.strip_suffix("ies") {
            return format!("{stem}y");
        }
        if let Some(stem) = w.strip_suffix("es") {
            return stem.to_string();
        }
    }
    if w.len() > 3 && !w.ends_with("ss") {
        if let Some(stem) = w.strip_suffix('s') {
            return stem.to_string();
        }
    }
    w.to_string()
}

fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !b"aeiouls".contains(&b[n - 1]) {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Indefinite article for a noun.
pub fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// True when `needle` (a space-joined phrase) occurs on word boundaries
/// inside the token list.
pub fn contains_phrase(tokens: &[String], needle: &str) -> bool {
    let n: Vec<&str> = needle.split_whitespace().collect();
    if n.is_empty() || n.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(n.len())
        .any(|w| w.iter().zip(&n).all(|(a, b)| a == b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_keeps_commas() {
        assert_eq!(
            tokenize("A red Cat, a dog."),
            vec!["a", "red", "cat", ",", "a", "dog"]
        );
        assert_eq!(tokenize("heart-shaped box"), vec!["heart-shaped", "box"]);
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("cat", "cats"), 1);
        assert!((similarity("cat", "cats") - 0.75).abs() < 1e-12);
        assert_eq!(similarity("sofa", "sofa"), 1.0);
    }

    #[test]
    fn stems() {
        assert_eq!(verb_stem("chasing"), verb_stem("chases"));
        assert_eq!(verb_stem("hugging"), verb_stem("hugs"));
        assert_eq!(verb_stem("running"), "run");
        assert_eq!(verb_stem("carries"), "carry");
        assert_eq!(verb_stem("carrying"), "carry");
        assert_eq!(verb_stem("holding"), "hold");
        assert_eq!(verb_stem("rolling"), "roll");
    }

    #[test]
    fn phrase_search() {
        let t = tokenize("a black cat sits on a sofa");
        assert!(contains_phrase(&t, "black"));
        assert!(contains_phrase(&t, "sits on"));
        assert!(!contains_phrase(&t, "on the top of"));
    }
}
