//! Aggregation of result rows into mean ± std tables and plot series.
//!
//! Standard deviations are population values (divide by n).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{RunRow, RESULTS_FILE};
use super::Mode;
use crate::behavior::BehaviorKind;
use crate::error::{Error, Result};
use crate::prompt::PromptVariant;

/// Reads the rows of a `runrec/1` file, or of `results.jsonl` inside a directory.
pub fn read_results(path: &Path) -> Result<Vec<RunRow>> {
    let file = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Invalid(format!("no results at {}", file.display())),
        _ => Error::io(format!("reading {}", file.display()), e),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.contains("\"runrec/1\"") => {}
        _ => return Err(Error::parse(&file, 1, "expected a runrec/1 header")),
    }
    let rows = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(&file, i + 1, e.to_string())))
        .collect::<Result<Vec<RunRow>>>()?;
    if rows.is_empty() {
        return Err(Error::Invalid(format!("{} holds no result rows", file.display())));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mode: Mode,
    pub lambda: f64,
    pub variant: PromptVariant,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub behavior: String,
    pub cells: Vec<AggregateCell>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

type GroupKey = (Mode, u64, PromptVariant, String);

/// Mean and population std per (mode, λ, variant, metric). Error rows and
/// missing values are skipped; groups left empty are dropped with a warning.
pub fn aggregate_report(rows: &[RunRow], behavior: &str) -> Result<ReportTable> {
    if rows.is_empty() {
        return Err(Error::Invalid("no result rows to aggregate".into()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    let mut seen: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for row in rows {
        for &mode in &row.modes {
            for (metric, value) in &row.metrics {
                let key = (mode, (row.lambda + 0.0).to_bits(), row.variant, metric.clone());
                *seen.entry(key.clone()).or_insert(0) += 1;
                if let Some(v) = value {
                    groups.entry(key).or_default().push(*v);
                }
            }
        }
    }
    for key in seen.keys() {
        if !groups.contains_key(key) {
            log::warn!("no values for {} at {} λ={} {}; omitted", key.3, key.0, f64::from_bits(key.1), key.2);
        }
    }
    let mut cells: Vec<AggregateCell> = groups
        .into_iter()
        .map(|((mode, bits, variant, metric), values)| {
            let (mean, std) = mean_std(&values);
            AggregateCell {
                mode,
                lambda: f64::from_bits(bits),
                variant,
                metric,
                n: values.len(),
                mean,
                std,
            }
        })
        .collect();
    cells.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(a.mode.cmp(&b.mode))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.variant.cmp(&b.variant))
    });
    if cells.is_empty() {
        return Err(Error::Invalid("result rows contain no metric values".into()));
    }
    Ok(ReportTable {
        behavior: behavior.to_string(),
        cells,
    })
}

/// Column layout of the comparison table: steering strengths around the
/// three prompt variants.
pub const WIDE_COLUMNS: [(&str, Mode, f64, PromptVariant); 7] = [
    ("lambda=-2", Mode::Steer, -2.0, PromptVariant::Neutral),
    ("lambda=-1", Mode::Steer, -1.0, PromptVariant::Neutral),
    ("Discourage", Mode::Prompt, 0.0, PromptVariant::Discourage),
    ("Neutral", Mode::Prompt, 0.0, PromptVariant::Neutral),
    ("Encourage", Mode::Prompt, 0.0, PromptVariant::Encourage),
    ("lambda=1", Mode::Steer, 1.0, PromptVariant::Neutral),
    ("lambda=2", Mode::Steer, 2.0, PromptVariant::Neutral),
];

impl ReportTable {
    pub fn find(&self, metric: &str, mode: Mode, lambda: f64, variant: PromptVariant) -> Option<&AggregateCell> {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.mode == mode && c.lambda == lambda && c.variant == variant)
    }

    pub fn metrics(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.cells.iter().map(|c| c.metric.as_str()).collect();
        m.dedup();
        m
    }

    pub fn to_long_tsv(&self) -> String {
        let mut out = String::from("behavior\tmetric\tmode\tlambda\tvariant\tn\tmean\tstd\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\n",
                self.behavior, c.metric, c.mode, c.lambda, c.variant, c.n, c.mean, c.std
            ));
        }
        out
    }

    /// Behaviors × the seven comparison columns, `mean ± std (n=…)` per cell,
    /// `NA` where the sweep has no such condition.
    pub fn to_wide_tsv(&self) -> String {
        let mut out = String::from("behavior\tmetric");
        for (name, ..) in WIDE_COLUMNS {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for metric in self.metrics() {
            out.push_str(&format!("{}\t{metric}", self.behavior));
            for (_, mode, lambda, variant) in WIDE_COLUMNS {
                out.push('\t');
                match self.find(metric, mode, lambda, variant) {
                    Some(c) => out.push_str(&format!("{:.4} ± {:.4} (n={})", c.mean, c.std, c.n)),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `report_long.tsv` and `report_table.tsv` into `dir`.
pub fn write_report(table: &ReportTable, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let long = dir.join("report_long.tsv");
    let wide = dir.join("report_table.tsv");
    fs::write(&long, table.to_long_tsv()).map_err(|e| Error::io(format!("writing {}", long.display()), e))?;
    fs::write(&wide, table.to_wide_tsv()).map_err(|e| Error::io(format!("writing {}", wide.display()), e))?;
    Ok((long, wide))
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tied ranks averaged; `None` when either
/// side is constant or has fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub metric: String,
    pub mode: Mode,
    pub points: Vec<(f64, f64, f64, usize)>,
    pub spearman: Option<f64>,
    pub path: PathBuf,
}

fn metric_prefix(kind: BehaviorKind) -> &'static str {
    match kind {
        BehaviorKind::Topic => "topic_",
        BehaviorKind::Sentiment => "sentiment_",
        BehaviorKind::Toxicity => "toxicity_",
        BehaviorKind::Readability => "readability_",
    }
}

fn variant_sign(v: PromptVariant) -> f64 {
    match v {
        PromptVariant::Discourage => -1.0,
        PromptVariant::Neutral => 0.0,
        PromptVariant::Encourage => 1.0,
    }
}

/// One `(x, mean, std, n)` table per metric and mode under `dir/series/`,
/// plus `summary.tsv` with the Spearman correlation of mean against x. For
/// steer and combined modes x is λ; for prompt mode it is −1/0/1 for
/// discourage/neutral/encourage. `property = None` keeps every metric.
pub fn emit_plot_series(rows: &[RunRow], property: Option<BehaviorKind>, dir: &Path) -> Result<Vec<SeriesSummary>> {
    let table = aggregate_report(rows, "series")?;
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir).map_err(|e| Error::io(format!("creating {}", series_dir.display()), e))?;
    // (x, mean, std, n) per point.
    type Points = Vec<(f64, f64, f64, usize)>;
    let mut by_series: BTreeMap<(String, Mode), Points> = BTreeMap::new();
    for c in &table.cells {
        if property.is_some_and(|p| !c.metric.starts_with(metric_prefix(p))) {
            continue;
        }
        let x = if c.mode == Mode::Prompt { variant_sign(c.variant) } else { c.lambda };
        by_series
            .entry((c.metric.clone(), c.mode))
            .or_default()
            .push((x, c.mean, c.std, c.n));
    }
    let mut summaries = Vec::new();
    let mut summary_tsv = String::from("metric\tmode\tpoints\tspearman\n");
    for ((metric, mode), mut points) in by_series {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let rho = spearman(&xs, &ys);
        let path = series_dir.join(format!("{metric}.{mode}.tsv"));
        let x_name = if mode == Mode::Prompt { "variant_sign" } else { "lambda" };
        let mut body = format!("{x_name}\tmean\tstd\tn\n");
        for (x, m, s, n) in &points {
            body.push_str(&format!("{x}\t{m:?}\t{s:?}\t{n}\n"));
        }
        fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        summary_tsv.push_str(&format!(
            "{metric}\t{mode}\t{}\t{}\n",
            points.len(),
            rho.map_or("undefined".to_string(), |r| format!("{r:?}"))
        ));
        summaries.push(SeriesSummary {
            metric,
            mode,
            points,
            spearman: rho,
            path,
        });
    }
    let sp = series_dir.join("summary.tsv");
    fs::write(&sp, summary_tsv).map_err(|e| Error::io(format!("writing {}", sp.display()), e))?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lambda: f64, v: f64) -> RunRow {
        RunRow {
            article_id: "a".into(),
            cell: 0,
            lambda,
            variant: PromptVariant::Neutral,
            modes: vec![Mode::Steer],
            summary: Some(String::new()),
            tokens: Some(0),
            metrics: [("m".to_string(), Some(v))].into_iter().collect(),
            flags: vec![],
            error: None,
        }
    }

    #[test]
    fn mean_and_population_std() {
        let t = aggregate_report(&[row(0.0, 0.2), row(0.0, 0.4)], "b").unwrap();
        let c = &t.cells[0];
        assert!((c.mean - 0.3).abs() < 1e-12 && (c.std - 0.1).abs() < 1e-12);
        let single = aggregate_report(&[row(1.0, 0.7)], "b").unwrap();
        assert_eq!((single.cells[0].mean, single.cells[0].std), (0.7, 0.0));
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]), None);
    }

    #[test]
    fn wide_table_has_seven_columns() {
        let t = aggregate_report(&[row(-2.0, 0.1), row(2.0, 0.9)], "sentiment").unwrap();
        let wide = t.to_wide_tsv();
        let mut lines = wide.lines();
        assert_eq!(lines.next().unwrap().split('\t').count(), 9);
        let data: Vec<&str> = lines.next().unwrap().split('\t').collect();
        assert_eq!(data[2], "0.1000 ± 0.0000 (n=1)");
        assert_eq!(data[5], "NA");
    }
}
