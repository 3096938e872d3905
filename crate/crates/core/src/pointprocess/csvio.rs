//! Event CSV files.
//!
//! The header names the coordinates: `x1,…,xd`, or `lon,lat` (optionally
//! followed by `t`) for events on the 2-sphere. Longitude `θ` and latitude `φ`
//! are in degrees and are converted once, at ingestion, with
//! `θ.to_radians()`, `φ.to_radians()` and
//! `(x, y, z) = (cos φ cos θ, cos φ sin θ, sin φ)`.
//! Lines starting with `#` are comments.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{Domain, EventSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordinateStyle {
    /// `x1,…,xd`.
    Cartesian,
    /// `lon,lat[,t]` in degrees.
    LonLatDegrees,
}

pub fn lonlat_to_unit(lon_deg: f64, lat_deg: f64) -> [f64; 3] {
    let (th, ph) = (lon_deg.to_radians(), lat_deg.to_radians());
    [ph.cos() * th.cos(), ph.cos() * th.sin(), ph.sin()]
}

pub fn unit_to_lonlat(x: &[f64]) -> (f64, f64) {
    (x[1].atan2(x[0]).to_degrees(), x[2].clamp(-1.0, 1.0).asin().to_degrees())
}

/// Reads events and checks them against `domain`.
pub fn read_events_csv<R: Read>(reader: R, domain: &Domain) -> Result<(EventSet, CoordinateStyle)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_lowercase).collect();
    let style = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["lon", "lat"] | ["lon", "lat", "t"] => CoordinateStyle::LonLatDegrees,
        cols if cols.iter().enumerate().all(|(i, c)| *c == format!("x{}", i + 1)) && !cols.is_empty() => {
            CoordinateStyle::Cartesian
        }
        _ => {
            return Err(Error::Format(format!(
                "header must be x1..xd or lon,lat[,t], found '{}'",
                header.join(",")
            )))
        }
    };
    let out_dim = match style {
        CoordinateStyle::Cartesian => header.len(),
        CoordinateStyle::LonLatDegrees => header.len() + 1,
    };
    if out_dim != domain.dim() {
        return Err(Error::Format(format!("CSV gives {out_dim}-dimensional points, domain has dimension {}", domain.dim())));
    }
    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Format(format!("line {line}, column '{}': '{v}' is not a finite number", header[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        match style {
            CoordinateStyle::Cartesian => points.extend_from_slice(&vals),
            CoordinateStyle::LonLatDegrees => {
                points.extend_from_slice(&lonlat_to_unit(vals[0], vals[1]));
                points.extend_from_slice(&vals[2..]);
            }
        }
    }
    Ok((EventSet::new(points, domain.clone())?, style))
}

/// Writes events with `#`-prefixed header comment lines.
pub fn write_events_csv<W: Write>(mut w: W, events: &EventSet, style: CoordinateStyle, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let d = events.dim();
    let header: Vec<String> = match style {
        CoordinateStyle::Cartesian => (1..=d).map(|i| format!("x{i}")).collect(),
        CoordinateStyle::LonLatDegrees => {
            if d != 3 && d != 4 {
                return Err(Error::invalid("lon/lat output needs points on the 2-sphere"));
            }
            let mut h = vec!["lon".to_string(), "lat".to_string()];
            if d == 4 {
                h.push("t".into());
            }
            h
        }
    };
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(&header)?;
    for x in events.iter() {
        let row: Vec<String> = match style {
            CoordinateStyle::Cartesian => x.iter().map(|v| v.to_string()).collect(),
            CoordinateStyle::LonLatDegrees => {
                let (lon, lat) = unit_to_lonlat(&x[..3]);
                std::iter::once(lon).chain(std::iter::once(lat)).chain(x[3..].iter().copied()).map(|v| v.to_string()).collect()
            }
        };
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
