use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::runner::RunRecord;
use crate::error::{Error, Result};
use crate::layout::LayoutKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Final error against the single swept parameter.
    Sensitivity,
    /// Evaluation error against training step, one line per grid point.
    LearningCurve,
    /// Final error per batch layout as bars.
    LayoutAblation,
}

impl PlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Sensitivity => "sensitivity",
            PlotKind::LearningCurve => "learning-curve",
            PlotKind::LayoutAblation => "layout-ablation",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [PlotKind::Sensitivity, PlotKind::LearningCurve, PlotKind::LayoutAblation]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown plot kind {s:?}")))
    }
}

/// One row of a plot's data file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub kind: PlotKind,
    pub series: String,
    /// Name of the x quantity.
    pub x_name: String,
    pub x: String,
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
}

/// Flatten records into the rows a plot of `kind` draws.
pub fn plot_rows(records: &[RunRecord], kind: PlotKind) -> Result<Vec<PlotRow>> {
    if records.is_empty() {
        return Err(Error::data("no records to plot"));
    }
    let row = |series: String, x_name: &str, x: String, s: &super::runner::Summary| {
        let b = s.bounds();
        PlotRow {
            kind,
            series,
            x_name: x_name.to_string(),
            x,
            mean: s.mean,
            ci_low: b.map(|b| b.0),
            ci_high: b.map(|b| b.1),
            n: s.n,
        }
    };
    let mut rows = Vec::new();
    match kind {
        PlotKind::Sensitivity => {
            let mut keys: Vec<&String> = records.iter().flat_map(|r| r.point.keys()).collect();
            keys.sort();
            keys.dedup();
            let key = match keys.as_slice() {
                [] => None,
                [k] => Some(k.as_str()),
                _ => {
                    return Err(Error::config(format!(
                        "a sensitivity plot needs one swept parameter, found {}",
                        keys.len()
                    )))
                }
            };
            for r in records {
                let x = match key {
                    Some(k) => match r.point.get(k) {
                        Some(toml::Value::Float(v)) => v.to_string(),
                        Some(toml::Value::Integer(v)) => v.to_string(),
                        Some(v) => return Err(Error::config(format!("{k} = {v} is not numeric"))),
                        None => return Err(Error::data(format!("record {} lacks {k}", r.label))),
                    },
                    None => "0".to_string(),
                };
                rows.push(row(String::new(), key.unwrap_or("point"), x, &r.final_error));
            }
            rows.sort_by(|a, b| {
                a.x.parse::<f64>()
                    .unwrap_or(0.0)
                    .total_cmp(&b.x.parse::<f64>().unwrap_or(0.0))
            });
        }
        PlotKind::LearningCurve => {
            for r in records {
                for c in &r.curve {
                    rows.push(row(r.label.clone(), "step", c.step.to_string(), &c.error));
                }
            }
            if rows.is_empty() {
                return Err(Error::data("records carry no evaluation curve"));
            }
        }
        PlotKind::LayoutAblation => {
            let mut rs: Vec<&RunRecord> = records.iter().collect();
            rs.sort_by_key(|r| LayoutKind::ALL.iter().position(|k| *k == r.config.layout));
            for r in rs {
                rows.push(row(
                    String::new(),
                    "layout",
                    r.config.layout.as_str().to_string(),
                    &r.final_error,
                ));
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[PlotRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<PlotRow>, _>>()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Error::data(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        let span = (self.y_hi - self.y_lo).max(1e-12);
        TOP + (H - TOP - BOTTOM) * (1.0 - (v - self.y_lo) / span)
    }
}

fn nice_frame(rows: &[PlotRow], zero: bool) -> Frame {
    let lo = rows
        .iter()
        .map(|r| r.ci_low.unwrap_or(r.mean))
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.ci_high.unwrap_or(r.mean))
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.01);
    Frame {
        y_lo: if zero { 0.0f64.min(lo) } else { (lo - pad).max(0.0) },
        y_hi: hi + pad,
    }
}

fn axes(svg: &mut String, f: &Frame, x_name: &str, title: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=5 {
        let v = f.y_lo + (f.y_hi - f.y_lo) * i as f64 / 5.0;
        let y = f.y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#,
            x0 - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11">{:.3}</text>"#,
            x0 - 6.0,
            y + 4.0,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0,
        esc(x_name)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {})">test error</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn x_tick(svg: &mut String, x: f64, label: &str) {
    let y = H - BOTTOM;
    let _ = writeln!(
        svg,
        r#"<line x1="{x:.2}" y1="{y}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
        y + 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
        y + 18.0,
        esc(label)
    );
}

fn lines(svg: &mut String, rows: &[PlotRow]) {
    let f = nice_frame(rows, false);
    let numeric: Option<Vec<f64>> = rows.iter().map(|r| r.x.parse::<f64>().ok()).collect();
    let mut xs: Vec<String> = Vec::new();
    for r in rows {
        if !xs.contains(&r.x) {
            xs.push(r.x.clone());
        }
    }
    let (x_lo, x_hi) = match &numeric {
        Some(v) => (
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        None => (0.0, (xs.len() - 1) as f64),
    };
    let px = |r: &PlotRow| -> f64 {
        let v = match &numeric {
            Some(_) => r.x.parse::<f64>().unwrap_or(0.0),
            None => xs.iter().position(|x| *x == r.x).unwrap_or(0) as f64,
        };
        if x_hi > x_lo {
            LEFT + 20.0 + (W - LEFT - RIGHT - 40.0) * (v - x_lo) / (x_hi - x_lo)
        } else {
            (LEFT + W - RIGHT) / 2.0
        }
    };
    axes(svg, &f, &rows[0].x_name, &rows[0].kind.to_string());
    let mut ticks: Vec<(f64, &str)> = rows.iter().map(|r| (px(r), r.x.as_str())).collect();
    ticks.sort_by(|a, b| a.0.total_cmp(&b.0));
    ticks.dedup_by(|a, b| a.1 == b.1);
    let max_ticks = 12;
    let stride = ticks.len().div_ceil(max_ticks).max(1);
    for (x, l) in ticks.iter().step_by(stride) {
        x_tick(svg, *x, l);
    }

    let mut series: Vec<&str> = Vec::new();
    for r in rows {
        if !series.contains(&r.series.as_str()) {
            series.push(&r.series);
        }
    }
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let pts: Vec<&PlotRow> = rows.iter().filter(|r| r.series == *s).collect();
        let banded: Option<Vec<(f64, f64, f64)>> = pts.iter().map(|r| Some((px(r), r.ci_low?, r.ci_high?))).collect();
        if let Some(b) = banded.filter(|b| b.len() > 1) {
            let mut poly: Vec<String> = b.iter().map(|(x, _, hi)| format!("{x:.2},{:.2}", f.y(*hi))).collect();
            poly.extend(b.iter().rev().map(|(x, lo, _)| format!("{x:.2},{:.2}", f.y(*lo))));
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(r), f.y(r.mean))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for r in &pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-series="{}" data-x="{}" data-value="{}"/>"#,
                px(r),
                f.y(r.mean),
                esc(&r.series),
                esc(&r.x),
                r.mean
            );
        }
        if !s.is_empty() {
            let ly = TOP + 14.0 * si as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{ly:.2}" text-anchor="end" font-size="11" fill="{color}">{}</text>"#,
                W - RIGHT,
                esc(s)
            );
        }
    }
}

fn bars(svg: &mut String, rows: &[PlotRow]) {
    let f = nice_frame(rows, true);
    axes(svg, &f, &rows[0].x_name, &rows[0].kind.to_string());
    let slot = (W - LEFT - RIGHT) / rows.len() as f64;
    for (i, r) in rows.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let cx = LEFT + slot * (i as f64 + 0.5);
        let bw = slot * 0.6;
        let (y_top, y_base) = (f.y(r.mean), f.y(f.y_lo));
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{y_top:.2}" width="{bw:.2}" height="{:.2}" fill="{color}" data-x="{}" data-value="{}"/>"#,
            cx - bw / 2.0,
            (y_base - y_top).max(0.0),
            esc(&r.x),
            r.mean
        );
        if let (Some(lo), Some(hi)) = (r.ci_low, r.ci_high) {
            let _ = writeln!(
                svg,
                r#"<line class="ci" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                f.y(lo),
                f.y(hi)
            );
        }
        x_tick(svg, cx, &r.x);
    }
}

/// Render rows as a standalone SVG document. The output depends only on
/// the rows.
pub fn render_svg(rows: &[PlotRow]) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::data("no rows to plot"))?;
    if rows.iter().any(|r| r.kind != first.kind) {
        return Err(Error::data("rows mix plot kinds"));
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    match first.kind {
        PlotKind::LayoutAblation => bars(&mut svg, rows),
        _ => lines(&mut svg, rows),
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Regenerate the SVG beside a data file written by [`emit_plots`].
pub fn replot(csv_path: &Path) -> Result<PathBuf> {
    let svg = render_svg(&read_csv(csv_path)?)?;
    let out = csv_path.with_extension("svg");
    fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

/// Write `<kind>.csv` and `<kind>.svg` into `out_dir`; the image is drawn
/// from the data file as written. Returns `(svg, csv)`.
pub fn emit_plots(records: &[RunRecord], kind: PlotKind, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let rows = plot_rows(records, kind)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join(format!("{kind}.csv"));
    write_csv(&rows, &csv_path)?;
    let svg_path = replot(&csv_path)?;
    Ok((svg_path, csv_path))
}
