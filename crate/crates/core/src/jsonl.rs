//! One JSON value per line.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::prompt::FormatError;

pub fn to_string<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record types serialize"));
        out.push('\n');
    }
    out
}

/// Parse JSONL; blank lines are skipped, errors carry the 1-based line.
pub fn from_str<T: DeserializeOwned>(s: &str) -> Result<Vec<T>, FormatError> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| FormatError::at(i + 1, e.to_string())))
        .collect()
}
