//! Model-level tables: scores and correlations, and per-type F1.

use crate::scoring::ErrorType;
use crate::stats::EvalRun;

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn csv_of(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Left-aligned first column, right-aligned numbers.
fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                s.push_str(&format!("{c:<w$}"));
            } else {
                s.push_str(&format!("  {c:>w$}"));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn sorted(models: &[EvalRun]) -> Vec<&EvalRun> {
    let mut v: Vec<&EvalRun> = models.iter().collect();
    v.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    v
}

pub fn scores_table(models: &[EvalRun]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["model", "images", "mean_score", "mean_human", "pearson", "kendall_tau", "spearman_rho"]
        .map(String::from)
        .to_vec();
    let rows = sorted(models)
        .into_iter()
        .map(|m| {
            vec![
                m.model_name.clone(),
                m.images.to_string(),
                num(Some(m.mean_normalized)),
                num(m.mean_human_normalized),
                num(m.pearson),
                num(m.kendall_tau),
                num(m.spearman_rho),
            ]
        })
        .collect();
    (header, rows)
}

/// One row per model that has gold labels.
pub fn f1_table(models: &[EvalRun]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["model".to_string()];
    for t in ErrorType::ALL {
        header.extend(["precision", "recall", "f1"].map(|m| format!("{t}_{m}")));
    }
    let rows = sorted(models)
        .into_iter()
        .filter_map(|m| {
            let f1 = m.f1_by_type.as_ref()?;
            let mut row = vec![m.model_name.clone()];
            for t in ErrorType::ALL {
                match f1.get(&t) {
                    Some(s) if !s.zero_denominator => {
                        row.extend([s.precision, s.recall, s.f1].map(|v| num(Some(v))));
                    }
                    _ => row.extend(std::iter::repeat_n("n/a".to_string(), 3)),
                }
            }
            Some(row)
        })
        .collect();
    (header, rows)
}

/// `(file name, contents)` for the scores and F1 tables as CSV and text.
pub fn render_tables(models: &[EvalRun]) -> Vec<(String, String)> {
    let (h1, r1) = scores_table(models);
    let mut out = vec![("table_scores.csv".to_string(), csv_of(&h1, &r1)), ("table_scores.txt".to_string(), aligned(&h1, &r1))];
    let (h2, r2) = f1_table(models);
    if !r2.is_empty() {
        out.push(("table_f1.csv".to_string(), csv_of(&h2, &r2)));
        out.push(("table_f1.txt".to_string(), aligned(&h2, &r2)));
    }
    out
}
