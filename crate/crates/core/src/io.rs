//! CSV and metadata serialization.
//!
//! Floats are written with 17 significant digits so that every value
//! round-trips exactly.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::lock::LockedSolution;
use crate::periodic::PeriodicWaveform;

/// Round-trip exact decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
}

/// Writes `theta,v0,...,v{dim-1}` with one row per grid point.
pub fn write_waveform<W: Write>(w: &PeriodicWaveform, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["theta".to_string()];
    header.extend((0..w.dim()).map(|d| format!("v{d}")));
    wtr.write_record(&header)?;
    for (k, row) in w.samples().enumerate() {
        let mut rec = vec![fmt_f64(w.grid_phase(k))];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a waveform block written by [`write_waveform`]. The theta column is
/// checked against the uniform grid.
pub fn read_waveform<R: Read>(input: R) -> Result<PeriodicWaveform> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("theta") || headers.len() < 2 {
        return Err(Error::InvalidWaveform(
            "expected header `theta,v0,...`".into(),
        ));
    }
    let dim = headers.len() - 1;
    let mut thetas = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        thetas.push(parse_f64(&rec[0])?);
        for d in 0..dim {
            flat.push(parse_f64(&rec[d + 1])?);
        }
    }
    let n = thetas.len();
    for (k, th) in thetas.iter().enumerate() {
        if (th - k as f64 / n as f64).abs() > 1e-12 {
            return Err(Error::InvalidWaveform(format!(
                "row {k} has theta {th}, expected uniform grid"
            )));
        }
    }
    PeriodicWaveform::from_flat(n, dim, flat)
}

/// Writes a time series with the given column names (first is time).
pub fn write_series<W: Write>(
    columns: &[String],
    t: &[f64],
    rows: &[Vec<f64>],
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(columns)?;
    for (ti, row) in t.iter().zip(rows) {
        let mut rec = vec![fmt_f64(*ti)];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a header plus rows of already-formatted fields.
pub fn write_table<W: Write>(columns: &[&str], rows: &[Vec<String>], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(columns)?;
    for r in rows {
        wtr.write_record(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `key = value` lines.
pub fn write_meta<W: Write>(entries: &[(&str, String)], mut out: W) -> Result<()> {
    for (k, v) in entries {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

pub fn read_meta<R: BufRead>(input: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed metadata line `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Metadata record of a lock.
pub fn lock_meta(sol: &LockedSolution) -> Vec<(&'static str, String)> {
    vec![
        ("f_star", fmt_f64(sol.f_star())),
        ("t_star", fmt_f64(sol.t_star())),
        ("residual_norm", fmt_f64(sol.residual_norm)),
        ("anchor_shift", fmt_f64(sol.anchor_shift)),
        ("iterations", sol.iterations.to_string()),
        ("unstable_hint", sol.unstable_hint.to_string()),
        ("used_fallback", sol.used_fallback.to_string()),
    ]
}

/// Rebuilds a lock from its sample block and metadata.
pub fn read_lock<R: Read, M: BufRead>(samples: R, meta: M) -> Result<LockedSolution> {
    let dphi = read_waveform(samples)?;
    let meta = read_meta(meta)?;
    let get = |key: &str| {
        meta.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Config(format!("lock metadata lacks `{key}`")))
    };
    let mut sol = LockedSolution::from_parts(parse_f64(&get("f_star")?)?, dphi)?;
    sol.residual_norm = parse_f64(&get("residual_norm")?)?;
    sol.anchor_shift = parse_f64(&get("anchor_shift")?)?;
    Ok(sol)
}
