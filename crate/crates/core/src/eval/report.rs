use std::fmt::Write as _;

use crate::corpus::{Corpus, CORPUS_HEADER};

use super::{AblationReport, EvalReport, SplitScores};

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.digits$}"))
}

const COLUMNS: [&str; 10] = [
    "method",
    "test_mae",
    "test_mae_series",
    "test_mape",
    "test_mape_excluded",
    "val_mae",
    "val_mae_series",
    "val_mape",
    "val_mape_excluded",
    "points",
];

fn split_cells(s: &SplitScores) -> [String; 4] {
    [
        format!("{:.6}", s.mae),
        format!("{:.6}", s.mae_series_mean),
        opt(s.mape, 4),
        s.mape_excluded.to_string(),
    ]
}

impl EvalReport {
    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .scores
            .iter()
            .map(|m| {
                let mut row = vec![m.method.clone()];
                row.extend(split_cells(&m.test));
                row.extend(split_cells(&m.validation));
                row.push(m.test.points.to_string());
                row
            })
            .collect();
        if let Some(imp) = self.improvement {
            let mut row = vec!["Improvement(%)".to_string(), format!("{:.2}", imp.mae_pct)];
            row.push(String::new());
            row.push(opt(imp.mape_pct, 2));
            row.resize(COLUMNS.len(), String::new());
            rows.push(row);
        }
        rows
    }

    /// Tab-separated score table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = COLUMNS.join("\t");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Human-readable table with a short preamble.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "setting {} (T={}, T'={}); {} series evaluated, {} skipped\n{}\n",
            self.setting,
            self.setting.input_len(),
            self.setting.horizon(),
            self.evaluated_series,
            self.skipped.len(),
            self.split,
        );
        out.push_str(&aligned(&COLUMNS.map(String::from), &self.rows()));
        for s in &self.skipped {
            let _ = writeln!(
                out,
                "skipped {} ({}): {}",
                s.label,
                s.method.as_deref().unwrap_or("all"),
                s.reason
            );
        }
        out
    }

    /// Observed windows and every forecast in corpus line format, with an
    /// extra trailing `observed` / `forecast:<method>` column.
    pub fn forecast_dump(&self, corpus: &Corpus) -> String {
        let mut out = format!("{CORPUS_HEADER},marker\n");
        for f in &self.forecasts {
            let g = &corpus.groups[f.group];
            let e = &corpus.elements[f.element];
            let prefix = format!(
                "{},{},{},{},{},{}",
                corpus.cities[g.city], g.age_band, g.gender, e.name, e.kind, corpus.grid_period
            );
            let observed: Vec<f64> = f.input.iter().chain(&f.truth).copied().collect();
            let _ = writeln!(out, "{prefix},{},{},observed", f.start_index, join(&observed));
            let fc_start = f.start_index + f.input.len();
            for (method, pred) in &f.predictions {
                let _ = writeln!(out, "{prefix},{fc_start},{},forecast:{method}", join(pred));
            }
        }
        out
    }
}

impl AblationReport {
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.variant.name().to_string()];
                row.extend(split_cells(&r.test));
                row.push(format!("{:.6}", r.validation.mae));
                row.push(format!("{:.6}", r.final_loss));
                row
            })
            .collect()
    }

    const COLUMNS: [&'static str; 7] = [
        "variant",
        "test_mae",
        "test_mae_series",
        "test_mape",
        "test_mape_excluded",
        "val_mae",
        "final_loss",
    ];

    pub fn to_tsv(&self) -> String {
        let mut out = Self::COLUMNS.join("\t");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "ablation on {} ({} iterations, seed {})\n",
            self.setting, self.config.iterations, self.config.seed
        );
        out.push_str(&aligned(&Self::COLUMNS.map(String::from), &self.rows()));
        out
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

fn aligned<const N: usize>(header: &[String; N], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header);
    for row in rows {
        line(row);
    }
    out
}
