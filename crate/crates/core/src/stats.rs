//! Correlations against human ratings and per-type precision/recall/F1.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::SynonymTable;
use crate::scoring::{ErrorType, ImageReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("no human score for {}", .0.join(", "))]
    MissingHumanScore(Vec<String>),
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
}

fn check(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput("length mismatch"));
    }
    if x.len() < 2 {
        return Err(StatsError::DegenerateInput("fewer than two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateInput("non-finite value"));
    }
    Ok(())
}

/// Sample Pearson correlation (two-pass).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort `v` in place, returning the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b, O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x, y)?;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as u64;
    let n0 = n * (n - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tie_pairs(&xs);
    let mut n3 = 0;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);
    if n0 == n1 || n0 == n2 {
        return Err(StatsError::DegenerateInput("all ties"));
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Ok((s / denom).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson over mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x, y)?;
    pearson(&mid_ranks(x), &mid_ranks(y)).map_err(|e| match e {
        StatsError::DegenerateInput("zero variance") => StatsError::DegenerateInput("all ties"),
        other => other,
    })
}

/// One finding keyed for F1 matching.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledFinding {
    pub image_id: String,
    pub error_type: ErrorType,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Some ratio had a zero denominator and was reported as 0.
    pub zero_denominator: bool,
}

impl F1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f = match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            precision: p.unwrap_or(0.0),
            recall: r.unwrap_or(0.0),
            f1: f.unwrap_or(0.0),
            tp,
            fp,
            fn_,
            zero_denominator: p.is_none() || r.is_none(),
        }
    }
}

/// Canonical form of a finding target: nouns and attribute values mapped
/// onto their synonym class representatives.
pub fn normalize_target(t: &str, syn: &SynonymTable) -> String {
    t.split('/')
        .map(|part| {
            let part = part.trim().to_lowercase();
            match part.split_once('.') {
                Some((noun, rest)) => format!("{}.{}", syn.canonical_noun(noun), syn.canonical_attribute(rest)),
                None => syn.canonical_noun(&part).to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("/")
}

/// Precision/recall/F1 per error type, matching on (image, type, target).
pub fn f1_by_type(
    predicted: &[LabeledFinding],
    gold: &[LabeledFinding],
    syn: &SynonymTable,
) -> BTreeMap<ErrorType, F1> {
    let key = |f: &LabeledFinding| (f.image_id.clone(), f.error_type, normalize_target(&f.target, syn));
    let p: BTreeSet<_> = predicted.iter().map(key).collect();
    let g: BTreeSet<_> = gold.iter().map(key).collect();
    ErrorType::ALL
        .into_iter()
        .map(|t| {
            let pt: BTreeSet<_> = p.iter().filter(|k| k.1 == t).collect();
            let gt: BTreeSet<_> = g.iter().filter(|k| k.1 == t).collect();
            let tp = pt.intersection(&gt).count();
            (t, F1::from_counts(tp, pt.len() - tp, gt.len() - tp))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScoreRecord {
    pub image_id: String,
    pub prompt_id: String,
    pub points: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
}

fn csv_err(file: &str) -> impl Fn(csv::Error) -> StatsError + '_ {
    move |e| StatsError::Csv { file: file.to_string(), message: e.to_string() }
}

/// `image_id,prompt_id,points[,annotator_id]`.
pub fn read_human_scores(r: impl Read, file: &str) -> Result<Vec<HumanScoreRecord>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<HumanScoreRecord>().enumerate() {
        let mut rec = rec.map_err(csv_err(file))?;
        if !(1..=7).contains(&rec.points) {
            return Err(StatsError::Csv {
                file: file.to_string(),
                message: format!("row {}: points {} outside 1..=7", i + 2, rec.points),
            });
        }
        if rec.annotator_id.as_deref() == Some("") {
            rec.annotator_id = None;
        }
        out.push(rec);
    }
    Ok(out)
}

/// `image_id,error_type,target`.
pub fn read_gold_labels(r: impl Read, file: &str) -> Result<Vec<LabeledFinding>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rdr.deserialize().map(|rec| rec.map_err(csv_err(file))).collect()
}

/// How per-image pairs are grouped before correlating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One correlation over all of a model's images.
    #[default]
    Pooled,
    /// Mean of per-prompt correlations (prompts with undefined ones skipped).
    PerPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model_name: String,
    pub images: usize,
    pub mean_normalized: f64,
    pub mean_human_normalized: Option<f64>,
    pub grouping: Grouping,
    pub pearson: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub f1_by_type: Option<BTreeMap<ErrorType, F1>>,
}

/// Human points averaged per image, on the normalized scale.
pub fn human_means(human: &[HumanScoreRecord]) -> BTreeMap<&str, f64> {
    let mut acc: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for h in human {
        let e = acc.entry(h.image_id.as_str()).or_default();
        e.0 += (f64::from(h.points) - 1.0) / 6.0;
        e.1 += 1.0;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n)).collect()
}

type Corr = fn(&[f64], &[f64]) -> Result<f64, StatsError>;

fn grouped(x: &[f64], y: &[f64], groups: &[&str], grouping: Grouping, f: Corr) -> Option<f64> {
    match grouping {
        Grouping::Pooled => f(x, y).ok(),
        Grouping::PerPrompt => {
            let mut by: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for ((a, b), g) in x.iter().zip(y).zip(groups) {
                let e = by.entry(g).or_default();
                e.0.push(*a);
                e.1.push(*b);
            }
            let vals: Vec<f64> = by.values().filter_map(|(a, b)| f(a, b).ok()).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Mean score, correlations with human ratings (when given), and F1
/// against gold labels (when given). Correlations that are undefined on
/// this data are `None`.
pub fn aggregate_run(
    model_name: &str,
    reports: &[ImageReport],
    human: Option<&[HumanScoreRecord]>,
    gold: Option<&[LabeledFinding]>,
    grouping: Grouping,
    syn: &SynonymTable,
) -> Result<EvalRun, StatsError> {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let ours: Vec<f64> = reports.iter().map(|r| r.normalized).collect();
    let mut run = EvalRun {
        model_name: model_name.to_string(),
        images: reports.len(),
        mean_normalized: mean(&ours),
        mean_human_normalized: None,
        grouping,
        pearson: None,
        kendall_tau: None,
        spearman_rho: None,
        f1_by_type: None,
    };
    if let Some(human) = human {
        let means = human_means(human);
        let missing: Vec<String> = reports
            .iter()
            .filter(|r| !means.contains_key(r.image_id.as_str()))
            .map(|r| r.image_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(StatsError::MissingHumanScore(missing));
        }
        let theirs: Vec<f64> = reports.iter().map(|r| means[r.image_id.as_str()]).collect();
        let groups: Vec<&str> = reports.iter().map(|r| r.prompt_id.as_str()).collect();
        run.mean_human_normalized = Some(mean(&theirs));
        run.pearson = grouped(&ours, &theirs, &groups, grouping, pearson);
        run.kendall_tau = grouped(&ours, &theirs, &groups, grouping, kendall_tau);
        run.spearman_rho = grouped(&ours, &theirs, &groups, grouping, spearman_rho);
    }
    if let Some(gold) = gold {
        let images: BTreeSet<&str> = reports.iter().map(|r| r.image_id.as_str()).collect();
        let predicted: Vec<LabeledFinding> = reports
            .iter()
            .flat_map(|r| {
                r.findings.iter().map(|f| LabeledFinding {
                    image_id: r.image_id.clone(),
                    error_type: f.error_type,
                    target: f.target.clone(),
                })
            })
            .collect();
        let gold: Vec<LabeledFinding> = gold.iter().filter(|g| images.contains(g.image_id.as_str())).cloned().collect();
        run.f1_by_type = Some(f1_by_type(&predicted, &gold, syn));
    }
    Ok(run)
}
