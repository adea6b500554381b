//! Normalized cost versus sensor noise, as a standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed sweep table: {0}")]
    Malformed(String),
    #[error("need at least 2 complete rows to plot, found {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub sigma_v: f64,
    pub sc: f64,
    pub irr_ol: f64,
    pub lqg: f64,
}

/// Reads the complete rows of a sweep CSV; rows with an error are skipped.
pub fn read_table(text: &str) -> Result<Vec<PlotRow>, PlotError> {
    let data: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(data.as_bytes());
    let headers = rdr.headers().map_err(|e| PlotError::Malformed(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::Malformed(format!("missing column {name}")))
    };
    let idx = [col("sigma_v")?, col("norm_sc")?, col("norm_irr_ol")?, col("norm_lqg")?];
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PlotError::Malformed(e.to_string()))?;
        let vals: Vec<Option<f64>> = idx.iter().map(|&i| rec.get(i).and_then(|s| s.parse().ok())).collect();
        if let [Some(sigma_v), Some(sc), Some(irr_ol), Some(lqg)] = vals[..] {
            if [sigma_v, sc, irr_ol, lqg].iter().all(|v| v.is_finite()) && sigma_v > 0.0 {
                rows.push(PlotRow { sigma_v, sc, irr_ol, lqg });
            }
        }
    }
    Ok(rows)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// SVG document for the given rows. Output is a pure function of the input.
pub fn render_svg(rows: &[PlotRow]) -> Result<String, PlotError> {
    if rows.len() < 2 {
        return Err(PlotError::TooFewRows(rows.len()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.sigma_v.total_cmp(&b.sigma_v));

    let (mut x0, mut x1) = (rows[0].sigma_v.log10(), rows[rows.len() - 1].sigma_v.log10());
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let ys = rows.iter().flat_map(|r| [r.sc, r.irr_ol, r.lqg]);
    let (mut y0, mut y1) = ys.fold((1.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = if y1 - y0 < 1e-9 { 0.5 } else { 0.06 * (y1 - y0) };
    y0 -= pad;
    y1 += pad;

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |s: f64| LEFT + (s.log10() - x0) / (x1 - x0) * pw;
    let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );

    // decade ticks on the noise axis
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
            TOP + ph + 18.0
        );
    }
    let step = nice_step(y1 - y0);
    let mut v = (y0 / step).ceil() * step;
    while v <= y1 + 1e-12 {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eeeeee"/>"##,
            LEFT + pw
        );
        let label = if v.abs() < step * 1e-6 { 0.0 } else { v };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label:.2}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
        v += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sensor noise σ_v</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">cost / open-loop cost</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let y_ref = py(1.0);
    let _ = writeln!(
        s,
        r##"<line id="open-loop" x1="{LEFT:.2}" y1="{y_ref:.2}" x2="{:.2}" y2="{y_ref:.2}" stroke="#555555" stroke-dasharray="6 4"/>"##,
        LEFT + pw
    );

    let series: [(&str, &str, &str, fn(&PlotRow) -> f64); 3] = [
        ("sc", "self-consistent", "#1f77b4", |r| r.sc),
        ("ol-mi", "open-loop MI", "#d62728", |r| r.irr_ol),
        ("lqg", "LQG", "#2ca02c", |r| r.lqg),
    ];
    for (id, _, color, get) in series.iter() {
        let pts: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", px(r.sigma_v), py(get(r)))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" id="{id}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for r in &rows {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(r.sigma_v),
                py(get(r))
            );
        }
    }

    // lower right: every series approaches 1 at high noise
    let lx = LEFT + pw - 150.0;
    let box_h = 4.0 * 18.0 + 8.0;
    let box_top = TOP + ph - box_h - 6.0;
    let entries: Vec<(&str, &str, &str)> = series
        .iter()
        .map(|(_, name, color, _)| (*name, *color, ""))
        .chain([("open loop", "#555555", "6 4")])
        .collect();
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="142" height="{:.2}" fill="white" stroke="#999999"/>"##,
        lx - 6.0,
        box_top,
        box_h
    );
    for (k, (name, color, dash)) in entries.iter().enumerate() {
        let y = box_top + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, lx + 30.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_file(csv_path: &Path, out: &Path) -> Result<(), PlotError> {
    let text = fs::read_to_string(csv_path).map_err(|source| PlotError::Io {
        path: csv_path.to_owned(),
        source,
    })?;
    let svg = render_svg(&read_table(&text)?)?;
    fs::write(out, svg).map_err(|source| PlotError::Io {
        path: out.to_owned(),
        source,
    })
}
