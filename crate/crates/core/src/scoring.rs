//! Per-image hallucination reports and the 7-tier rubric.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptSpec;
use crate::qa::QAResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Attribute,
    Relation,
    Omission,
    Extraneous,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [Self::Attribute, Self::Relation, Self::Omission, Self::Extraneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Attribute => "attribute",
            Self::Relation => "relation",
            Self::Omission => "omission",
            Self::Extraneous => "extraneous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s.trim())
    }
}

impl std::fmt::Display for ErrorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub error_type: ErrorType,
    /// Lemma, `lemma.kind`, `head/tail`, or a detected label.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub attribute: u32,
    pub relation: u32,
    pub omission: u32,
    pub extraneous: u32,
}

impl Counts {
    pub fn get(&self, t: ErrorType) -> u32 {
        match t {
            ErrorType::Attribute => self.attribute,
            ErrorType::Relation => self.relation,
            ErrorType::Omission => self.omission,
            ErrorType::Extraneous => self.extraneous,
        }
    }

    fn bump(&mut self, t: ErrorType) {
        match t {
            ErrorType::Attribute => self.attribute += 1,
            ErrorType::Relation => self.relation += 1,
            ErrorType::Omission => self.omission += 1,
            ErrorType::Extraneous => self.extraneous += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.attribute + self.relation + self.omission + self.extraneous
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub image_id: String,
    pub counts: Counts,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("image {image_id}: no QA result for {}", missing.join(", "))]
    MissingResults { image_id: String, missing: Vec<String> },
}

/// Tally errors from QA results and extraneous findings. Findings sharing
/// (type, target) collapse to the first one, so repeated errors on the same
/// object type count once.
pub fn build_report(
    image_id: &str,
    question_ids: &[String],
    results: &[QAResult],
    extraneous: &[Finding],
) -> Result<HallucinationReport, ScoringError> {
    let answered: BTreeSet<&str> = results.iter().map(|r| r.question_id.as_str()).collect();
    let missing: Vec<String> = question_ids
        .iter()
        .filter(|q| !answered.contains(q.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ScoringError::MissingResults { image_id: image_id.to_string(), missing });
    }
    let from_qa = results.iter().filter_map(|r| {
        let t = r.error_type?;
        Some(Finding {
            error_type: t,
            target: r.target.clone().unwrap_or_default(),
            question_id: Some(r.question_id.clone()),
            detail: format!("{:?}, predicted {:?}", r.verdict, r.predicted).to_lowercase(),
        })
    });
    Ok(report_from_findings(image_id, from_qa.chain(extraneous.iter().cloned())))
}

/// Deduplicate and count.
pub fn report_from_findings(image_id: &str, findings: impl IntoIterator<Item = Finding>) -> HallucinationReport {
    let mut seen = BTreeSet::new();
    let mut counts = Counts::default();
    let mut kept = Vec::new();
    for f in findings {
        if seen.insert((f.error_type, f.target.clone())) {
            counts.bump(f.error_type);
            kept.push(f);
        }
    }
    HallucinationReport { image_id: image_id.to_string(), counts, findings: kept }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub points: u8,
    pub normalized: f64,
}

impl Score {
    pub fn from_points(points: u8) -> Self {
        Self { points, normalized: (f64::from(points) - 1.0) / 6.0 }
    }
}

/// Rubric over the report, with the prompt's distinct object count.
pub fn score(report: &HallucinationReport, spec: &PromptSpec) -> Score {
    score_counts(&report.counts, spec.distinct_lemmas().len())
}

/// First matching tier wins, from most to least severe.
pub fn score_counts(c: &Counts, n_objects: usize) -> Score {
    let (a, r, m, e) = (c.attribute, c.relation, c.omission, c.extraneous);
    let points = if m as usize == n_objects {
        1
    } else if m + r > 2 {
        2
    } else if m + r >= 1 {
        3
    } else if a > 2 {
        4
    } else if a >= 1 {
        5
    } else if e >= 1 {
        6
    } else {
        7
    };
    Score::from_points(points)
}

pub fn normalize_batch(scores: &[Score]) -> Vec<f64> {
    scores.iter().map(|s| s.normalized).collect()
}

/// Per-image output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub prompt_id: String,
    pub model_name: String,
    pub counts: Counts,
    pub findings: Vec<Finding>,
    pub points: u8,
    pub normalized: f64,
}

impl ImageReport {
    pub fn new(report: HallucinationReport, score: Score, prompt_id: &str, model_name: &str) -> Self {
        Self {
            image_id: report.image_id,
            prompt_id: prompt_id.to_string(),
            model_name: model_name.to_string(),
            counts: report.counts,
            findings: report.findings,
            points: score.points,
            normalized: score.normalized,
        }
    }

    pub fn score(&self) -> Score {
        Score::from_points(self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::Verdict;
    use proptest::prelude::*;

    fn counts(a: u32, r: u32, m: u32, e: u32) -> Counts {
        Counts { attribute: a, relation: r, omission: m, extraneous: e }
    }

    fn result(id: &str, err: Option<(ErrorType, &str)>) -> QAResult {
        QAResult {
            question_id: id.into(),
            predicted: "x".into(),
            verdict: if err.is_some() { Verdict::Incorrect } else { Verdict::Correct },
            error_type: err.map(|e| e.0),
            target: err.map(|e| e.1.to_string()),
            memory_size: 1,
            client_failed: false,
        }
    }

    fn extra(label: &str) -> Finding {
        Finding { error_type: ErrorType::Extraneous, target: label.into(), question_id: None, detail: String::new() }
    }

    #[test]
    fn tally_and_dedup() {
        let ids: Vec<String> = vec!["q1".into(), "q2".into(), "q3".into()];
        let clean = [result("q1", None), result("q2", None), result("q3", None)];
        assert_eq!(build_report("i", &ids, &clean, &[]).unwrap().counts, Counts::default());

        let rs = [result("q1", Some((ErrorType::Attribute, "cat.color"))), result("q2", None), result("q3", None)];
        assert_eq!(build_report("i", &ids, &rs, &[extra("chair")]).unwrap().counts, counts(1, 0, 0, 1));

        let rs = [
            result("q1", Some((ErrorType::Attribute, "cat.color"))),
            result("q2", Some((ErrorType::Attribute, "cat.color"))),
            result("q3", None),
        ];
        let rep = build_report("i", &ids, &rs, &[]).unwrap();
        assert_eq!(rep.counts.attribute, 1);
        assert_eq!(report_from_findings("i", rep.findings.clone()), rep);

        let err = build_report("i", &ids, &clean[..2], &[]).unwrap_err();
        assert_eq!(err, ScoringError::MissingResults { image_id: "i".into(), missing: vec!["q3".into()] });
    }

    #[test]
    fn rubric_examples() {
        assert_eq!(score_counts(&counts(0, 0, 0, 0), 2), Score { points: 7, normalized: 1.0 });
        assert_eq!(score_counts(&counts(0, 0, 3, 0), 4).points, 2);
        assert_eq!(score_counts(&counts(1, 0, 0, 1), 2).points, 5);
        assert_eq!(score_counts(&counts(0, 0, 2, 0), 2).points, 1);
        assert_eq!(normalize_batch(&[Score::from_points(7), Score::from_points(1)]), [1.0, 0.0]);
        assert_eq!(normalize_batch(&[Score::from_points(4)]), [0.5]);
        assert!(normalize_batch(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn seven_iff_clean(a in 0u32..6, r in 0u32..6, m in 0u32..6, e in 0u32..6, n in 1usize..6) {
            let s = score_counts(&counts(a, r, m, e), n);
            prop_assert!((1..=7).contains(&s.points));
            prop_assert!((s.normalized - (f64::from(s.points) - 1.0) / 6.0).abs() < 1e-12);
            prop_assert_eq!(s.points == 7, a + r + m + e == 0);
        }

        #[test]
        fn more_structural_errors_never_help(a in 0u32..6, r in 0u32..6, m in 0u32..3, e in 0u32..6) {
            // n = 10 keeps the total-omission tier out of reach.
            let base = score_counts(&counts(a, r, m, e), 10).points;
            prop_assert!(score_counts(&counts(a, r + 1, m, e), 10).points <= base);
            prop_assert!(score_counts(&counts(a, r, m + 1, e), 10).points <= base);
            let clean = score_counts(&counts(a, 0, 0, e), 10).points;
            prop_assert!(score_counts(&counts(a + 1, 0, 0, e), 10).points <= clean);
        }
    }
}
