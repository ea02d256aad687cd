//! CSV writers and the JSON metadata sidecar.
//!
//! Column layouts are fixed:
//!
//! | file         | columns                                              |
//! |--------------|------------------------------------------------------|
//! | series       | `t,value`                                            |
//! | distribution | `n,beta,prob`                                        |
//! | portrait     | `q,p`                                                |
//! | scan         | `axis1,axis2,rate,r_squared,bucket`                  |
//! | rates        | `mode,slope,intercept,r_squared,window_start,window_end` |
//!
//! Missing scan cells are written as `NA`; a one-axis scan has `NA` in
//! `axis2`. In a scan with `observable = "final_value"` the `rate` column
//! carries the final value and `r_squared` is `NA`.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::{RateEstimate, SeriesKind};
use crate::config::RunConfig;
use crate::sweep::{Bucket, RateGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MISSING: &str = "NA";

/// Shortest round-trip float text; switches to exponent form for very
/// large or small magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_string(), num)
}

pub fn write_series<W: Write>(mut w: W, values: &[f64]) -> io::Result<()> {
    writeln!(w, "t,value")?;
    for (t, v) in values.iter().enumerate() {
        writeln!(w, "{t},{}", num(*v))?;
    }
    w.flush()
}

pub fn write_distribution<W: Write>(mut w: W, dist: &[(i64, f64)], beta: f64) -> io::Result<()> {
    writeln!(w, "n,beta,prob")?;
    for (n, prob) in dist {
        writeln!(w, "{n},{},{}", num(beta), num(*prob))?;
    }
    w.flush()
}

pub fn write_portrait<W: Write>(mut w: W, points: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "q,p")?;
    for (q, p) in points {
        writeln!(w, "{},{}", num(*q), num(*p))?;
    }
    w.flush()
}

pub fn write_rate_grid<W: Write>(mut w: W, grid: &RateGrid) -> io::Result<()> {
    writeln!(w, "axis1,axis2,rate,r_squared,bucket")?;
    let (rows, cols) = grid.shape();
    for i in 0..rows {
        for j in 0..cols {
            let cell = grid.cell(i, j);
            let a2 = grid.axes.get(1).map(|a| a.1[j]);
            let bucket = cell
                .value
                .and_then(Bucket::of)
                .map_or_else(|| MISSING.to_string(), |b| b.to_string());
            writeln!(
                w,
                "{},{},{},{},{}",
                num(grid.axes[0].1[i]),
                opt(a2),
                opt(cell.value),
                opt(cell.r_squared),
                bucket
            )?;
        }
    }
    w.flush()
}

pub fn write_rates<W: Write>(mut w: W, rates: &[(SeriesKind, RateEstimate)]) -> io::Result<()> {
    writeln!(w, "mode,slope,intercept,r_squared,window_start,window_end")?;
    for (kind, r) in rates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            kind_name(*kind),
            num(r.slope),
            num(r.intercept),
            num(r.r_squared),
            r.window.start,
            r.window.end
        )?;
    }
    w.flush()
}

pub fn kind_name(kind: SeriesKind) -> &'static str {
    match kind {
        SeriesKind::Quantum => "quantum",
        SeriesKind::Classical => "classical",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingPoint {
    pub mode: SeriesKind,
    pub axis1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis2: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRecord {
    pub mode: SeriesKind,
    #[serde(flatten)]
    pub estimate: RateEstimate,
}

/// JSON sidecar written next to every output. Its `config` object is a
/// complete config: feeding the file back reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub seed: u64,
    /// Seconds.
    pub wall_time: f64,
    pub warnings: Vec<String>,
    /// Largest momentum ladder used by a quantum run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_size: Option<usize>,
    /// `(β_k, weight_k)` of a quasi-momentum average.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<RateRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<MissingPoint>,
    /// Data files written alongside, relative names.
    pub files: Vec<String>,
}

impl Metadata {
    pub fn new(config: &RunConfig) -> Self {
        Metadata {
            version: VERSION,
            command: config.command.name(),
            config: config.clone(),
            seed: config.seed,
            wall_time: 0.0,
            warnings: Vec::new(),
            basis_size: None,
            quadrature_nodes: None,
            rates: Vec::new(),
            missing: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()
    }
}
