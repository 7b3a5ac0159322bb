//! CSV emission. Every writer emits its header row, `,` separators, `.`
//! decimals and LF line endings; infinite values are written as `inf`.

use std::io::Write;

use cssa::solver::{EncodeDiagnostics, Structure};
use cssa::MetricReport;

use crate::error::Result;

/// Shortest round-trip decimal form, with `inf` / `-inf` / `NaN` literals.
pub fn format_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// One cell of the structure x weight sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub structure: Structure,
    pub lambda: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub sparsity: f64,
    pub common_support_pct: f64,
    pub approx_error: f64,
    pub iterations: usize,
}

pub const TABLE1_HEADER: [&str; 8] = [
    "structure",
    "lambda",
    "gamma1",
    "gamma2",
    "sparsity",
    "common_support_pct",
    "approx_error",
    "iterations",
];

pub fn write_table1<W: Write>(rows: &[Table1Row], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(TABLE1_HEADER)?;
    for r in rows {
        w.write_record([
            r.structure.name().to_string(),
            format_f64(r.lambda),
            format_f64(r.gamma1),
            format_f64(r.gamma2),
            format_f64(r.sparsity),
            format_f64(r.common_support_pct),
            format_f64(r.approx_error),
            r.iterations.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 6] = ["image", "en", "psnr", "ssim", "sf", "ei"];

pub fn write_metrics<W: Write>(rows: &[(String, MetricReport)], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(METRICS_HEADER)?;
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            format_f64(m.en),
            format_f64(m.psnr),
            format_f64(m.ssim),
            format_f64(m.sf),
            format_f64(m.ei),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const ENCODE_HEADER: [&str; 9] = [
    "structure",
    "lambda",
    "gamma1",
    "gamma2",
    "sparsity",
    "common_support_pct",
    "approx_error",
    "iterations",
    "converged",
];

pub fn write_encode<W: Write>(row: &Table1Row, diag: &EncodeDiagnostics, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(ENCODE_HEADER)?;
    w.write_record([
        row.structure.name().to_string(),
        format_f64(row.lambda),
        format_f64(row.gamma1),
        format_f64(row.gamma2),
        format_f64(row.sparsity),
        format_f64(row.common_support_pct),
        format_f64(row.approx_error),
        row.iterations.to_string(),
        diag.converged.to_string(),
    ])?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_objective<W: Write>(objective: &[f64], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["iteration", "objective"])?;
    for (i, v) in objective.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format_f64(*v)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
