//! Line charts of the CSV outputs, written as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dualrank::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 210.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Which columns to draw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    /// Rows are split into one series per distinct value of these columns.
    pub group: Vec<String>,
}

/// Column choices for the files this tool writes; otherwise the first
/// column against every other numeric column.
pub fn default_spec(header: &[String]) -> PlotSpec {
    let has = |c: &str| header.iter().any(|h| h == c);
    let spec = |x: &str, ys: &[&str], group: &[&str]| PlotSpec {
        x: x.into(),
        ys: ys.iter().map(|s| s.to_string()).collect(),
        group: group.iter().map(|s| s.to_string()).collect(),
    };
    if has("step") && has("lambda") {
        spec("step", &["lambda", "mean_s_qual"], &[])
    } else if has("epoch") && has("loss") {
        spec("epoch", &["loss", "pref_train_bce", "qual_train_bce", "pref_val_bce"], &[])
    } else if has("jaccard_mean") {
        spec("k", &["jaccard_mean", "contain_a_in_b", "contain_b_in_a"], &[])
    } else if has("epsilon") && has("metric") {
        spec("epsilon", &["value"], &["task", "K", "metric"])
    } else if has("rank1_s_qual_aligned") {
        spec("epsilon", &["rank1_s_qual_reference", "rank1_s_qual_aligned"], &[])
    } else {
        PlotSpec { x: header.first().cloned().unwrap_or_default(), ys: header.iter().skip(1).cloned().collect(), group: vec![] }
    }
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Validation(format!("no column `{name}` (have {})", header.join(", "))))
}

/// Reads the CSV and collects (x, y) points per series. Rows whose x or y
/// is empty or non-numeric are skipped.
pub fn collect_series(path: &Path, spec: Option<PlotSpec>) -> Result<(PlotSpec, Series)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let spec = spec.unwrap_or_else(|| default_spec(&header));
    let xi = column(&header, &spec.x)?;
    let yis = spec.ys.iter().map(|y| column(&header, y)).collect::<Result<Vec<_>>>()?;
    let gis = spec.group.iter().map(|g| column(&header, g)).collect::<Result<Vec<_>>>()?;
    let mut series = Series::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { path: path.to_path_buf(), line: line + 2, message: e.to_string() })?;
        let num = |i: usize| record.get(i).and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        let Some(x) = num(xi) else { continue };
        let group: Vec<String> =
            spec.group.iter().zip(&gis).map(|(g, &i)| format!("{g}={}", record.get(i).unwrap_or(""))).collect();
        for (y, &yi) in spec.ys.iter().zip(&yis) {
            if let Some(v) = num(yi) {
                let mut label = group.join(" ");
                if spec.ys.len() > 1 || label.is_empty() {
                    label = if label.is_empty() { y.clone() } else { format!("{label} {y}") };
                }
                series.entry(label).or_default().push((x, v));
            }
        }
    }
    if series.is_empty() {
        return Err(Error::Validation(format!("{}: nothing to plot", path.display())));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok((spec, series))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(title: &str, spec: &PlotSpec, series: &Series) -> String {
    let (x0, x1) = range(series.values().flatten().map(|p| p.0));
    let (y0, y1) = range(series.values().flatten().map(|p| p.1));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN_L}" y="22" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{MARGIN_T}" x2="{px:.1}" y2="{:.1}" stroke="#eee"/>"##, MARGIN_T + ph);
        let _ = writeln!(out, r##"<line x1="{MARGIN_L}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#eee"/>"##, MARGIN_L + pw);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.4}</text>"#, MARGIN_T + ph + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.4}</text>"#, MARGIN_L - 6.0, py + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x)
    );
    for (i, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        if points.len() <= 30 {
            for &(x, y) in points {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
        let ly = MARGIN_T + 10.0 + 16.0 * i as f64;
        let lx = MARGIN_L + pw + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

/// Plots `input` into `output` (default: alongside, with an `.svg` extension).
pub fn plot_file(input: &Path, output: Option<&Path>, spec: Option<PlotSpec>) -> Result<std::path::PathBuf> {
    if !input.is_file() {
        return Err(Error::Validation(format!("no file at {}", input.display())));
    }
    let (spec, series) = collect_series(input, spec)?;
    let title = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("svg"));
    dualrank::io::write_text(&out, &render_svg(&title, &spec, &series))?;
    Ok(out)
}
