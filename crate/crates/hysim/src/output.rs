//! CSV tables, SVG line plots and the JSON report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::xval::XvalReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Seventeen significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Numeric columns of equal length.
    pub fn from_columns(name: impl Into<String>, columns: &[(&str, &[f64])]) -> Self {
        let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
        let mut t = Table::new(name, &header);
        let len = columns.first().map_or(0, |c| c.1.len());
        for i in 0..len {
            t.push(columns.iter().map(|c| num(c.1[i])).collect());
        }
        t
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: &[f64], y: &[f64]) -> Self {
        Self {
            label: label.into(),
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 400.0);
        let (ml, mr, mt, mb) = (70.0, 150.0, 40.0, 50.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.x.iter().zip(&s.y).map(|(&x, &y)| (tx(x), y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= 1e-12 * lo.abs().max(1.0) {
                (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
        let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
        let px = |x: f64| ml + (tx(x) - x0) / (x1 - x0) * (w - ml - mr);
        let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - ml - mr,
            h - mt - mb
        );
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, (w - mr + ml) / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (w - mr + ml) / 2.0, h - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (h - mb + mt) / 2.0,
            (h - mb + mt) / 2.0,
            escape(&self.y_label)
        );
        let xt = |v: f64| if self.log_x { 10f64.powf(v) } else { v };
        for (v, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{:.4}</text>"#, ml + (v - x0) / (x1 - x0) * (w - ml - mr), h - mb + 16.0, xt(v));
        }
        for v in [y0, y1] {
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.4}</text>"#, ml - 4.0, py(v) + 4.0, v);
        }
        for (k, ser) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let path: Vec<String> = ser
                .x
                .iter()
                .zip(&ser.y)
                .filter(|(x, y)| tx(**x).is_finite() && y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            let ly = mt + 16.0 * k as f64 + 8.0;
            let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - mr + 10.0, w - mr + 30.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - mr + 34.0, ly + 4.0, escape(&ser.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub reference: Option<f64>,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, value: f64, reference: Option<f64>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            reference,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
    pub scalars: Vec<Scalar>,
    pub checks: Vec<Check>,
    pub xval: Option<XvalReport>,
    pub artifacts: Vec<String>,
    pub verdict: bool,
}

/// One row per scalar, check and cross-validation probe.
pub fn summary_table(report: &Report) -> Table {
    let mut t = Table::new(
        "summary",
        &["record", "name", "probe", "value", "reference", "std_error", "z_score", "passed"],
    );
    for s in &report.scalars {
        t.push(vec!["scalar".into(), s.name.clone(), String::new(), num(s.value), String::new(), String::new(), String::new(), String::new()]);
    }
    for c in &report.checks {
        t.push(vec![
            "check".into(),
            c.name.clone(),
            c.detail.clone(),
            num(c.value),
            c.reference.map(num).unwrap_or_default(),
            String::new(),
            String::new(),
            c.passed.to_string(),
        ]);
    }
    if let Some(x) = &report.xval {
        for r in &x.rows {
            t.push(vec![
                "xval".into(),
                r.statistic.clone(),
                r.probe.clone(),
                num(r.mc),
                num(r.bvp),
                num(r.std_error),
                num(r.z),
                r.passed.to_string(),
            ]);
        }
    }
    t
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
