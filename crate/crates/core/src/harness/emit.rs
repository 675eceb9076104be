use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::scenario::ResultRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["scenario", "method", "pt", "snr_db", "rate_mean", "rate_sem", "trials", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?}, expected csv or json"))),
        }
    }
}

/// Nine significant digits; fixed notation for moderate magnitudes.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..9).contains(&e) {
        format!("{:.*}", (8 - e).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

fn round9(x: f64) -> f64 {
    fmt_sig9(x).parse().unwrap_or(x)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.method.clone(),
            fmt_sig9(r.pt),
            fmt_sig9(r.snr_db),
            fmt_sig9(r.rate_mean),
            fmt_sig9(r.rate_sem),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {:?}", rd.headers()?)));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Same fields and values as the CSV, rounded to nine significant digits.
pub fn write_json<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let rounded: Vec<ResultRow> = rows
        .iter()
        .map(|r| ResultRow {
            pt: round9(r.pt),
            snr_db: round9(r.snr_db),
            rate_mean: round9(r.rate_mean),
            rate_sem: round9(r.rate_sem),
            ..r.clone()
        })
        .collect();
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &rounded)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    Ok(serde_json::from_reader(r)?)
}

pub fn emit(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(rows, w),
        Format::Json => write_json(rows, w),
    }
}
