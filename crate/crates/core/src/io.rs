//! File formats.
//!
//! A series file holds one non-negative integer per line; blank lines are
//! ignored and a CSV file with a single column headed `x` is also accepted.
//! Metadata for a series lives in a sidecar `<file>.meta.json`. Transition
//! tables are written as CSV with header `state,0,1,...,J,tail_mass`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::process::{Series, SeriesMeta, TransitionTable};

/// Path of the metadata sidecar for a series file.
pub fn meta_path(series_path: &Path) -> PathBuf {
    let mut name = series_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn parse_series(text: &str) -> Result<Vec<u64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    if lines.peek() == Some(&"x") {
        lines.next();
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            line.parse::<u64>()
                .map_err(|_| Error::Parse(format!("entry {}: `{line}` is not a non-negative integer", k + 1)))
        })
        .collect()
}

pub fn format_series(values: &[u64]) -> String {
    let mut out = String::with_capacity(values.len() * 3);
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

/// Reads a series and, if present, its sidecar metadata.
pub fn read_series(path: &Path) -> Result<Series> {
    let values = parse_series(&fs::read_to_string(path)?)?;
    let sidecar = meta_path(path);
    let meta = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar)?;
        Some(serde_json::from_str::<SeriesMeta>(&text).map_err(|e| Error::Parse(e.to_string()))?)
    } else {
        None
    };
    Ok(Series { values, meta })
}

/// Writes the series and, when it carries metadata, the sidecar.
pub fn write_series(path: &Path, series: &Series) -> Result<()> {
    fs::write(path, format_series(&series.values))?;
    if let Some(meta) = &series.meta {
        fs::write(meta_path(path), serde_json::to_string_pretty(meta)? + "\n")?;
    }
    Ok(())
}

pub fn write_table<W: Write>(table: &TransitionTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["state".to_string()];
    header.extend((0..=table.max_state).map(|j| j.to_string()));
    header.push("tail_mass".into());
    w.write_record(&header)?;
    for (i, row) in table.probs.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|p| format_prob(*p)));
        record.push(format_prob(table.tail_mass[i]));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_table`].
pub fn read_table(path: &Path, h: u32) -> Result<TransitionTable> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 3 {
        return Err(Error::Parse("table needs state, probability and tail_mass columns".into()));
    }
    let mut probs = Vec::new();
    let mut tail_mass = Vec::new();
    for record in r.records() {
        let record = record?;
        let nums: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{f}`"))))
            .collect::<Result<_>>()?;
        let (tail, row) = nums.split_last().expect("width checked");
        tail_mass.push(*tail);
        probs.push(row.to_vec());
    }
    Ok(TransitionTable { h, max_state: width - 3, probs, tail_mass })
}

/// Probability rounded to 15 significant digits and printed in its
/// shortest form, with an exponent for very small values.
pub fn format_prob(p: f64) -> String {
    let rounded: f64 = format!("{p:.14e}").parse().unwrap_or(p);
    if rounded == 0.0 || rounded.abs() >= 1e-5 {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}
