//! CSV and SVG rendering of a [`RunReport`].

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{ArrayView2, Axis};

use super::runner::RunReport;
use crate::error::{Result, RtkError};

pub const CSV_HEADER: &str = "method,nfe,seed,marginal_accuracy,second_moment,accept_rate,wall_ms";

pub const PLOT_WIDTH: f64 = 800.0;
pub const PLOT_HEIGHT: f64 = 500.0;

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let accept = r.accept_rate.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.method),
            r.nfe,
            r.seed,
            r.marginal_accuracy,
            r.second_moment,
            accept,
            r.wall_ms
        )
        .unwrap();
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| RtkError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn emit_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_file(path, &render_csv(report))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Marginal accuracy against NFE, one polyline per method (seeds averaged).
/// The NFE axis is logarithmic.
pub fn render_svg(report: &RunReport) -> String {
    let (w, h) = (PLOT_WIDTH, PLOT_HEIGHT);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let mut methods: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let series: Vec<Vec<(f64, f64)>> = methods
        .iter()
        .map(|m| {
            let mut pts: Vec<(u64, f64, usize)> = Vec::new();
            for r in report.rows.iter().filter(|r| r.method == *m) {
                match pts.iter_mut().find(|p| p.0 == r.nfe) {
                    Some(p) => {
                        p.1 += r.marginal_accuracy;
                        p.2 += 1;
                    }
                    None => pts.push((r.nfe, r.marginal_accuracy, 1)),
                }
            }
            pts.iter().map(|p| (p.0.max(1) as f64, p.1 / p.2 as f64)).collect()
        })
        .collect();

    let all: Vec<(f64, f64)> = series.iter().flatten().copied().collect();
    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0.log10()), b.max(p.0.log10())));
    let (mut y0, mut y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.5, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.05;
        y1 += 0.05;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |nfe: f64| left + (nfe.log10() - x0) / (x1 - x0) * pw;
    let sy = |acc: f64| top + (y1 - acc) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    let mut budgets: Vec<u64> = report.rows.iter().map(|r| r.nfe).collect();
    budgets.sort_unstable();
    budgets.dedup();
    for b in &budgets {
        let x = sx((*b).max(1) as f64);
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            top + ph,
            top + ph + 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{b}</text>"#,
            top + ph + 20.0
        )
        .unwrap();
    }
    for i in 0..=5 {
        let v = y0 + (y1 - y0) * i as f64 / 5.0;
        let y = sy(v);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#,
            left - 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{v:.3}</text>"#,
            left - 8.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">NFE</text>"#,
        left + pw / 2.0,
        h - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">marginal accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();

    for (i, (m, pts)) in methods.iter().zip(&series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|(n, a)| format!("{:.2},{:.2}", sx(*n), sy(*a))).collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        let ly = top + 15.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            xml_escape(m)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_plot(report: &RunReport, path: &Path) -> Result<()> {
    write_file(path, &render_svg(report))
}

/// Rows of `samples` as headerless CSV.
pub fn render_samples(samples: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in samples.axis_iter(Axis(0)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `results.csv`, `accuracy.svg` and, for the largest budget and
/// first seed, `samples_<method>.csv` into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| RtkError::Io {
        path: dir.to_owned(),
        source,
    })?;
    emit_csv(report, &dir.join("results.csv"))?;
    emit_plot(report, &dir.join("accuracy.svg"))?;
    let largest = report.config.nfe_budgets.last().copied();
    let first_seed = report.config.seeds().first().copied();
    for s in &report.samples {
        if Some(s.nfe) == largest && Some(s.seed) == first_seed {
            let name: String = s
                .method
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            write_file(&dir.join(format!("samples_{name}.csv")), &render_samples(s.samples.view()))?;
        }
    }
    Ok(())
}
