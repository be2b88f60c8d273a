//! Dataset persistence: CSV with a `t,x1,...,xd` header, one row per
//! observation, values printed with 17 significant digits so a written
//! series reads back exactly.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use crate::embedding::TimeSeries;
use crate::error::{Error, Result};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a unique temporary name and renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    let tag = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp.{}.{tag}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(display.clone(), e))?;
        f.write_all(bytes).map_err(|e| Error::io(display.clone(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(display, e))?;
    Ok(())
}

/// 17 significant digits; enough to reproduce any f64 exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn series_to_csv(ts: &TimeSeries) -> String {
    let d = ts.dim();
    let mut out = String::from("t");
    for c in 1..=d {
        out.push_str(&format!(",x{c}"));
    }
    out.push('\n');
    for k in 0..ts.len() {
        out.push_str(&format_f64(ts.times()[k]));
        for c in 0..d {
            out.push(',');
            out.push_str(&format_f64(ts.states()[[k, c]]));
        }
        out.push('\n');
    }
    out
}

pub fn write_series(path: &Path, ts: &TimeSeries) -> Result<()> {
    atomic_write(path, series_to_csv(ts).as_bytes())
}

pub fn series_from_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Input("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(Error::Input(format!("bad dataset header: {header}")));
    }
    let d = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Input(format!(
                "row {}: expected {} fields, found {}",
                lineno + 2,
                d + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("row {}: bad number {s:?}", lineno + 2)))
        };
        times.push(parse(fields[0])?);
        for f in &fields[1..] {
            values.push(parse(f)?);
        }
    }
    let n = times.len();
    let states = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Input(format!("bad dataset shape: {e}")))?;
    TimeSeries::new(times, states)
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    series_from_csv(&text)
}
