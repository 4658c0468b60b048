//! CSV, JSON and SVG emission.
//!
//! Floats are written with 17 significant digits so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt17(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// `v` with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Named table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Points `(x, y, error)` of one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// Line plot written as `<name>.svg`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    /// Horizontal reference line.
    pub reference: Option<(String, f64)>,
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes `table` after a `#` comment line carrying `header`.
pub fn write_csv(path: &Path, header: &str, table: &Table) -> Result<()> {
    let mut buf = format!("# {header}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns).map_err(io)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    fs::write(path, buf).map_err(io)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io)?;
    s.push('\n');
    fs::write(path, s).map_err(io)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Self-contained SVG: axes with end ticks, one polyline per series, error
/// bars and an optional dashed reference line.
pub fn render_svg(plot: &Plot) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let tx = |x: f64| if plot.log_x { x.ln() } else { x };
    let pts: Vec<(f64, f64, f64)> = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let mut xs = pts.iter().map(|p| tx(p.0)).filter(|v| v.is_finite());
    let first = xs.next().unwrap_or(0.0);
    let (mut x0, mut x1) = xs.fold((first, first), |(a, b), v| (a.min(v), b.max(v)));
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for p in &pts {
        let e = if p.2.is_finite() { p.2 } else { 0.0 };
        y0 = y0.min(p.1 - e);
        y1 = y1.max(p.1 + e);
    }
    if let Some((_, r)) = &plot.reference {
        y0 = y0.min(*r);
        y1 = y1.max(*r);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        (x0, x1) = (x0 - 1.0, x1 + 1.0);
    }
    let pad = 0.08 * (y1 - y0).max(1e-12 * y1.abs().max(1.0));
    (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| m + (tx(x) - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        t = m,
        b = h - m,
        r = w - m
    );
    let xl = |v: f64| if plot.log_x { v.exp() } else { v };
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let px = m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="{anchor}">{:.4}</text>"#,
            h - m + 16.0,
            xl(v)
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.4}</text>"#,
            m - 4.0,
            sy(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 16.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(&plot.y_label),
        y = h / 2.0
    );
    if let Some((label, r)) = &plot.reference {
        let _ = writeln!(
            s,
            r##"<line x1="{m}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{:.1}" text-anchor="end" fill="#555">{}</text>"##,
            w - m,
            w - m,
            sy(*r) - 4.0,
            escape(label),
            y = sy(*r)
        );
    }
    for (i, series) in plot.series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in &series.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#,
                sx(p.0),
                sy(p.1)
            );
            if p.2 > 0.0 && p.2.is_finite() {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{colour}"/>"#,
                    sy(p.1 - p.2),
                    sy(p.1 + p.2),
                    x = sx(p.0)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#,
            m + 10.0,
            m + 16.0 * (i + 1) as f64,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes every table, plot and the summary into `dir`; returns the paths.
pub fn write_all(
    dir: &Path,
    header: &str,
    tables: &[Table],
    plots: &[Plot],
    summary: &impl Serialize,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    for t in tables {
        let p = dir.join(format!("{}.csv", t.name));
        write_csv(&p, header, t)?;
        written.push(p);
    }
    for plot in plots {
        let p = dir.join(format!("{}.svg", plot.name));
        fs::write(&p, render_svg(plot)).map_err(io)?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    write_json(&p, summary)?;
    written.push(p);
    Ok(written)
}
