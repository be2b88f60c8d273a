//! Hand-written SVG emission for experiment outputs: attractor scatter plots
//! of predicted against true states, and per-coordinate time-series overlays
//! with chunk boundaries marked. Output bytes are deterministic functions of
//! the inputs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::atomic_write;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 54.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_extents(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut f = Frame { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY };
        for v in xs {
            f.x_min = f.x_min.min(v);
            f.x_max = f.x_max.max(v);
        }
        for v in ys {
            f.y_min = f.y_min.min(v);
            f.y_max = f.y_max.max(v);
        }
        if !f.x_min.is_finite() || f.x_max <= f.x_min {
            f.x_min -= 1.0;
            f.x_max = f.x_min + 2.0;
        }
        if !f.y_min.is_finite() || f.y_max <= f.y_min {
            f.y_min -= 1.0;
            f.y_max = f.y_min + 2.0;
        }
        let (px, py) = (0.05 * (f.x_max - f.x_min), 0.05 * (f.y_max - f.y_min));
        f.x_min -= px;
        f.x_max += px;
        f.y_min -= py;
        f.y_max += py;
        f
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut out = format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    out.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\">{:.3}</text>\n",
        HEIGHT - MARGIN + 16.0,
        frame.x_min
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">{:.3}</text>\n",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        frame.x_max
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">{:.3}</text>\n",
        MARGIN - 4.0,
        HEIGHT - MARGIN,
        frame.y_min
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">{:.3}</text>\n",
        MARGIN - 4.0,
        MARGIN + 10.0,
        frame.y_max
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" \
transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    ));
    out
}

fn legend(entries: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        out.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"{color}\"/>\n\
<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN - 150.0,
            WIDTH - MARGIN - 140.0,
            y + 4.0,
            escape(label)
        ));
    }
    out
}

/// Phase-plane scatter of true and predicted states.
pub fn scatter_svg(
    title: &str,
    actual: &[(f64, f64)],
    predicted: &[(f64, f64)],
    x_label: &str,
    y_label: &str,
) -> String {
    let frame = Frame::from_extents(
        actual.iter().chain(predicted.iter()).map(|p| p.0).filter(|v| v.is_finite()),
        actual.iter().chain(predicted.iter()).map(|p| p.1).filter(|v| v.is_finite()),
    );
    let mut out = header(title);
    out.push_str(&axes(&frame, x_label, y_label));
    for &(x, y) in actual.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        out.push_str(&format!(
            "<circle class=\"actual\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n",
            frame.x(x),
            frame.y(y)
        ));
    }
    for &(x, y) in predicted.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        out.push_str(&format!(
            "<circle class=\"predicted\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#d62728\" fill-opacity=\"0.7\"/>\n",
            frame.x(x),
            frame.y(y)
        ));
    }
    out.push_str(&legend(&[("actual", "#1f77b4"), ("predicted", "#d62728")]));
    out.push_str("</svg>\n");
    out
}

/// One coordinate of the test series against its forecast, with vertical
/// lines at chunk starts.
pub fn overlay_svg(
    title: &str,
    times: &[f64],
    actual: &[f64],
    predicted: &[f64],
    boundaries: &[f64],
    y_label: &str,
) -> String {
    let frame = Frame::from_extents(
        times.iter().copied(),
        actual.iter().chain(predicted.iter()).copied().filter(|v| v.is_finite()),
    );
    let mut out = header(title);
    out.push_str(&axes(&frame, "t", y_label));
    for &b in boundaries {
        out.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{MARGIN}\" x2=\"{0:.2}\" y2=\"{1:.1}\" stroke=\"#bbbbbb\" stroke-dasharray=\"3,3\"/>\n",
            frame.x(b),
            HEIGHT - MARGIN
        ));
    }
    for (class, series, color) in
        [("actual", actual, "#1f77b4"), ("predicted", predicted, "#d62728")]
    {
        let points: Vec<String> = times
            .iter()
            .zip(series.iter())
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| format!("{:.2},{:.2}", frame.x(*t), frame.y(*v)))
            .collect();
        out.push_str(&format!(
            "<polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
            points.join(" ")
        ));
    }
    out.push_str(&legend(&[("actual", "#1f77b4"), ("predicted", "#d62728")]));
    out.push_str("</svg>\n");
    out
}

/// Rows of a predictions_*.csv file.
pub struct Predictions {
    pub times: Vec<f64>,
    pub chunk: Vec<usize>,
    pub actual: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
}

pub fn parse_predictions(text: &str) -> Result<Predictions> {
    let mut lines = text.lines();
    let headline = lines.next().ok_or_else(|| Error::Input("empty predictions file".into()))?;
    let cols: Vec<&str> = headline.split(',').collect();
    if cols.len() < 5 || cols[0] != "index" || cols[1] != "t" || cols[2] != "chunk" {
        return Err(Error::Input(format!("bad predictions header: {headline}")));
    }
    let d = (cols.len() - 3) / 2;
    let mut p = Predictions { times: vec![], chunk: vec![], actual: vec![], predicted: vec![] };
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 + 2 * d {
            return Err(Error::Input("ragged predictions row".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Input(format!("bad number {s:?}")));
        p.times.push(num(f[1])?);
        p.chunk.push(f[2].parse::<usize>().map_err(|_| Error::Input("bad chunk id".into()))?);
        p.actual.push(f[3..3 + d].iter().map(|s| num(s)).collect::<Result<_>>()?);
        p.predicted.push(f[3 + d..].iter().map(|s| num(s)).collect::<Result<_>>()?);
    }
    Ok(p)
}

/// Renders every predictions_*.csv in the directory to SVG: an attractor
/// scatter (the (x,z) plane for 3-dimensional states, (x,y) otherwise) and
/// one time-series overlay per coordinate.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("predictions_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(Error::Input(format!("no predictions_*.csv files in {}", dir.display())));
    }
    let mut written = Vec::new();
    for path in inputs {
        let text =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let p = parse_predictions(&text)?;
        if p.times.is_empty() {
            continue;
        }
        let d = p.actual[0].len();
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("predictions")
            .trim_start_matches("predictions_")
            .to_string();
        let (cx, cy) = if d >= 3 { (0, 2) } else { (0, 1.min(d - 1)) };
        let actual_pts: Vec<(f64, f64)> = p.actual.iter().map(|r| (r[cx], r[cy])).collect();
        let pred_pts: Vec<(f64, f64)> = p.predicted.iter().map(|r| (r[cx], r[cy])).collect();
        let scatter = scatter_svg(
            &format!("{stem} attractor"),
            &actual_pts,
            &pred_pts,
            &format!("x{}", cx + 1),
            &format!("x{}", cy + 1),
        );
        let scatter_path = dir.join(format!("{stem}_attractor.svg"));
        atomic_write(&scatter_path, scatter.as_bytes())?;
        written.push(scatter_path);

        let mut boundaries = Vec::new();
        for (i, &c) in p.chunk.iter().enumerate() {
            if i == 0 || c != p.chunk[i - 1] {
                boundaries.push(p.times[i]);
            }
        }
        for c in 0..d {
            let actual: Vec<f64> = p.actual.iter().map(|r| r[c]).collect();
            let predicted: Vec<f64> = p.predicted.iter().map(|r| r[c]).collect();
            let svg = overlay_svg(
                &format!("{stem} x{}", c + 1),
                &p.times,
                &actual,
                &predicted,
                &boundaries,
                &format!("x{}", c + 1),
            );
            let out = dir.join(format!("{stem}_series_x{}.svg", c + 1));
            atomic_write(&out, svg.as_bytes())?;
            written.push(out);
        }
    }
    Ok(written)
}
