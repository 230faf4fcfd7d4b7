//! Aggregation of result rows across seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ResultRow;
use crate::error::{Error, Result};

/// Mean and sample standard deviation over seeds for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub class: u8,
    pub pct: u32,
    pub epsilon: f64,
    pub n: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub auroc_mean: f64,
    pub auroc_std: f64,
}

/// One curve of a metric against the attack radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub method: String,
    pub class: u8,
    pub pct: u32,
    pub epsilon: Vec<f64>,
    pub f1: Vec<f64>,
    pub auroc: Vec<f64>,
    pub auroc_std: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

/// Group by `(method, class, pct, epsilon)` in first-appearance order of
/// methods and ascending order otherwise.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut method_order: Vec<&str> = Vec::new();
    for r in rows {
        if !method_order.contains(&r.method.as_str()) {
            method_order.push(&r.method);
        }
    }
    let mut groups: BTreeMap<(usize, u8, u32, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let m = method_order.iter().position(|&m| m == r.method).unwrap();
        // Non-negative floats order like their bit patterns.
        groups.entry((m, r.class, r.pct, r.epsilon.to_bits())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let col = |f: fn(&ResultRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (pm, ps) = col(|r| r.precision);
            let (rm, rs) = col(|r| r.recall);
            let (fm, fs) = col(|r| r.f1);
            let (am, as_) = col(|r| r.auroc);
            SummaryRow {
                method: g[0].method.clone(),
                class: g[0].class,
                pct: g[0].pct,
                epsilon: g[0].epsilon,
                n: g.len(),
                precision_mean: pm,
                precision_std: ps,
                recall_mean: rm,
                recall_std: rs,
                f1_mean: fm,
                f1_std: fs,
                auroc_mean: am,
                auroc_std: as_,
            }
        })
        .collect()
}

pub fn series(summary: &[SummaryRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for s in summary {
        let pos = out.iter().position(|c| c.method == s.method && c.class == s.class && c.pct == s.pct);
        let curve = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(Series {
                    method: s.method.clone(),
                    class: s.class,
                    pct: s.pct,
                    epsilon: Vec::new(),
                    f1: Vec::new(),
                    auroc: Vec::new(),
                    auroc_std: Vec::new(),
                });
                out.last_mut().unwrap()
            }
        };
        curve.epsilon.push(s.epsilon);
        curve.f1.push(s.f1_mean);
        curve.auroc.push(s.auroc_mean);
        curve.auroc_std.push(s.auroc_std);
    }
    out
}

/// Write `summary.csv` and `plot.json` into `out_dir`.
pub fn write_report(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let summary = summarize(rows);
    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for s in &summary {
        w.serialize(s).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let plot = serde_json::json!({ "series": series(&summary) });
    let path = out_dir.join("plot.json");
    let text = serde_json::to_string_pretty(&plot).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalcli::experiment::Cell;
    use crate::evalcli::metrics::Metrics;

    fn row(method: &str, seed: u64, eps: f64, auroc: f64) -> ResultRow {
        let m = Metrics { precision: 0.5, recall: 0.5, f1: 0.5, auroc };
        ResultRow::new(method, Cell { class: 0, pct: 50, seed }, eps, m)
    }

    #[test]
    fn groups_over_seeds() {
        let rows = vec![
            row("baseline", 0, 0.0, 0.9),
            row("baseline", 1, 0.0, 0.7),
            row("baseline", 0, 2.0, 0.5),
            row("rlnd", 0, 0.0, 1.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].n, 2);
        assert!((s[0].auroc_mean - 0.8).abs() < 1e-12);
        assert!((s[0].auroc_std - 0.02f64.sqrt()).abs() < 1e-12);
        let curves = series(&s);
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].epsilon, vec![0.0, 2.0]);
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write_report(&[row("baseline", 0, 0.0, 0.9)], dir.path()).unwrap();
        assert!(dir.path().join("summary.csv").exists());
        let plot: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("plot.json")).unwrap()).unwrap();
        assert_eq!(plot["series"][0]["auroc"][0], 0.9);
    }
}
