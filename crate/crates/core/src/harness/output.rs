//! CSV writers and readers. Floats use Rust's shortest round-trip formatting,
//! so reading a file back reproduces every value exactly.

use std::io::Write;
use std::path::Path;

use super::fit::RateFit;
use super::replicate::SummaryRow;
use super::run::RunRecord;
use super::sweep::SweepTable;
use crate::error::{OaisError, Result};

fn f(x: f64) -> String {
    format!("{x}")
}

fn writer_for(out: impl Write) -> csv::Writer<impl Write> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn run_header(dim_theta: usize, phi_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = vec!["run_id".into(), "seed".into(), "k".into()];
    h.extend((0..dim_theta).map(|i| format!("theta_{i}")));
    h.extend(["rho_hat", "r_hat", "z_hat", "ess"].map(String::from));
    h.extend(phi_names.iter().map(|n| format!("est_{n}")));
    h.push("wall_ms".into());
    h
}

pub fn summary_header(phi_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = vec!["k".into()];
    h.extend(phi_names.iter().map(|n| format!("mse_{n}")));
    h.extend(phi_names.iter().map(|n| format!("bias_{n}")));
    h.extend(["mean_rho_hat", "mean_R_quad", "n_ok"].map(String::from));
    h
}

pub fn sweep_header(phi_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = vec!["alpha".into(), "eta".into(), "n".into()];
    h.extend(phi_names.iter().map(|n| format!("plateau_mse_{n}")));
    h.extend(phi_names.iter().map(|n| format!("plateau_se_{n}")));
    h.push("n_ok".into());
    h
}

pub const SLOPE_HEADER: [&str; 7] = ["alpha", "test_function", "slope", "lo", "hi", "confidence", "points"];
pub const FIT_HEADER: [&str; 7] = ["column", "eta", "points", "c0_hat", "c1_hat", "offset_hat", "residual"];

/// Per-iteration rows of every record, in record order.
pub fn write_runs(
    out: impl Write,
    records: &[RunRecord],
    dim_theta: usize,
    phi_names: &[String],
) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(run_header(dim_theta, phi_names))?;
    for rec in records {
        for row in &rec.rows {
            let mut fields = vec![rec.run_id.to_string(), rec.seed.to_string(), row.k.to_string()];
            fields.extend(row.theta.iter().copied().map(f));
            fields.extend([row.rho_hat, row.r_hat, row.z_hat, row.ess].map(f));
            fields.extend(row.estimates.iter().copied().map(f));
            fields.push(f(row.wall_ms));
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(out: impl Write, rows: &[SummaryRow], phi_names: &[String]) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(summary_header(phi_names))?;
    for r in rows {
        let mut fields = vec![r.k.to_string()];
        fields.extend(r.mse.iter().copied().map(f));
        fields.extend(r.bias.iter().copied().map(f));
        fields.push(f(r.mean_rho_hat));
        fields.push(f(r.mean_r_quad));
        fields.push(r.n_ok.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(out: impl Write, table: &SweepTable) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(sweep_header(&table.test_functions))?;
    for c in &table.cells {
        let mut fields = vec![f(c.alpha), f(c.eta), c.n.to_string()];
        fields.extend(c.plateau_mse.iter().copied().map(f));
        fields.extend(c.plateau_se.iter().copied().map(f));
        fields.push(c.n_ok.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_slopes(out: impl Write, table: &SweepTable) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(SLOPE_HEADER)?;
    for s in &table.slopes {
        w.write_record([
            f(s.alpha),
            s.test_function.clone(),
            f(s.slope),
            f(s.lo),
            f(s.hi),
            f(super::sweep::SLOPE_CONFIDENCE),
            s.points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fit(out: impl Write, column: &str, eta: f64, points: usize, fit: &RateFit) -> Result<()> {
    let mut w = writer_for(out);
    w.write_record(FIT_HEADER)?;
    w.write_record([
        column.to_string(),
        f(eta),
        points.to_string(),
        f(fit.c0_hat),
        f(fit.c1_hat),
        f(fit.offset_hat),
        f(fit.residual),
    ])?;
    w.flush()?;
    Ok(())
}

/// Writes through `body` into `path`, creating or truncating it.
pub fn write_file<F>(path: impl AsRef<Path>, body: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let mut buf = std::io::BufWriter::new(std::fs::File::create(path)?);
    body(&mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Header and string fields of a CSV file.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// `(k, column)` pairs, skipping rows whose value is not finite.
pub fn read_curve(path: impl AsRef<Path>, column: &str) -> Result<Vec<(f64, f64)>> {
    let (header, rows) = read_table(path)?;
    let idx = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OaisError::InvalidArgument(format!("column `{name}` not found")))
    };
    let (ik, iv) = (idx("k")?, idx(column)?);
    let parse = |s: &str, row: usize| {
        s.parse::<f64>()
            .map_err(|_| OaisError::InvalidArgument(format!("row {row}: `{s}` is not a number")))
    };
    let mut curve = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let k = parse(&row[ik], i)?;
        let v = parse(&row[iv], i)?;
        if v.is_finite() {
            curve.push((k, v));
        }
    }
    Ok(curve)
}
