//! CSV, JSON and SVG emission.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::str::FromStr;

use maghelm_core::{EstimateReport, Sign};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(CliError::UnknownFormat(other.to_string())),
        }
    }
}

/// Full-precision decimal with 17 significant digits.
pub fn number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// A CSV table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::with_capacity(32 * self.columns.len() * (self.rows.len() + 1));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&c.render());
            }
            out.push('\n');
        }
        out.into_bytes()
    }
}

fn sign_str(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}

/// Canonical report order: kind, then parameters, then values.
pub fn report_order(a: &EstimateReport, b: &EstimateReport) -> Ordering {
    let (p, q) = (&a.params, &b.params);
    a.kind
        .cmp(&b.kind)
        .then(p.d.cmp(&q.d))
        .then(p.lambda.total_cmp(&q.lambda))
        .then(p.epsilon.total_cmp(&q.epsilon))
        .then(sign_str(p.sign).cmp(sign_str(q.sign)))
        .then(p.r_min.total_cmp(&q.r_min))
        .then(p.r_max.total_cmp(&q.r_max))
        .then(p.mode_cutoff.cmp(&q.mode_cutoff))
        .then(a.mesh_nodes.cmp(&b.mesh_nodes))
        .then(a.solver.as_str().cmp(b.solver.as_str()))
        .then(a.lhs.total_cmp(&b.lhs))
        .then(a.rhs.total_cmp(&b.rhs))
        .then(a.notes.cmp(&b.notes))
}

/// Sorts reports into the canonical emission order.
pub fn canonical_sort(reports: &mut [EstimateReport]) {
    reports.sort_by(report_order);
}

pub const REPORT_COLUMNS: [&str; 16] = [
    "kind", "d", "lambda", "epsilon", "sign", "r_min", "r_max", "mode_cutoff", "lhs", "rhs", "ratio", "mesh_nodes",
    "solver", "spec_hash", "source", "notes",
];

/// One row per report, tagged with the spec hash and a source label.
pub fn report_table(reports: &[(String, EstimateReport)], spec_hash: &str) -> Table {
    let mut t = Table::new(&REPORT_COLUMNS);
    for (source, r) in reports {
        let p = &r.params;
        t.push(vec![
            r.kind.as_str().into(),
            (p.d as usize).into(),
            p.lambda.into(),
            p.epsilon.into(),
            sign_str(p.sign).into(),
            p.r_min.into(),
            p.r_max.into(),
            (p.mode_cutoff as usize).into(),
            r.lhs.into(),
            r.rhs.into(),
            r.ratio.into(),
            r.mesh_nodes.into(),
            r.solver.as_str().into(),
            spec_hash.into(),
            source.as_str().into(),
            r.notes.as_str().into(),
        ]);
    }
    t
}

/// Pretty JSON with struct field order preserved and a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("summary serializes");
    out.push(b'\n');
    out
}

/// Reports in canonical order as CSV, JSON or an SVG of ratio against λ per kind.
pub fn emit_report(reports: &[EstimateReport], format: Format, spec_hash: &str) -> Result<Vec<u8>, CliError> {
    let mut sorted = reports.to_vec();
    canonical_sort(&mut sorted);
    Ok(match format {
        Format::Csv => {
            let tagged: Vec<(String, EstimateReport)> = sorted.into_iter().map(|r| (String::new(), r)).collect();
            report_table(&tagged, spec_hash).to_csv()
        }
        Format::Json => json_bytes(&sorted),
        Format::Svg => {
            let mut plot = LinePlot::new("ratio against lambda", "lambda", "lhs / rhs");
            plot.log_x = true;
            plot.log_y = true;
            let mut kinds: Vec<&str> = sorted.iter().map(|r| r.kind.as_str()).collect();
            kinds.dedup();
            for k in kinds {
                let pts = sorted.iter().filter(|r| r.kind == k).map(|r| (r.params.lambda, r.ratio)).collect();
                plot.series.push(Series { name: k.to_string(), points: pts });
            }
            plot.to_svg().into_bytes()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// A self-contained line plot with axes, ticks and a legend.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        Axis { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|j| {
                let t = self.lo + (self.hi - self.lo) * j as f64 / 4.0;
                let label = if self.log { format!("1e{t:.1}") } else { format!("{t:.3e}") };
                (j as f64 / 4.0, label)
            })
            .collect()
    }
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LinePlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    fn usable(&self, p: &(f64, f64)) -> bool {
        p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0) && (!self.log_y || p.1 > 0.0)
    }

    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter()).filter(|p| self.usable(p));
        let ax = Axis::fit(pts().map(|p| p.0), self.log_x);
        let ay = Axis::fit(pts().map(|p| p.1), self.log_y);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let sx = |x: f64| LEFT + ax.frac(x) * pw;
        let sy = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (f, label) in ax.ticks() {
            let x = LEFT + f * pw;
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
        }
        for (f, label) in ay.ticks() {
            let y = TOP + (1.0 - f) * ph;
            let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (j, series) in self.series.iter().enumerate() {
            let color = PALETTE[j % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|p| self.usable(p))
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !path.is_empty() {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            let ly = TOP + 10.0 + 18.0 * j as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}
