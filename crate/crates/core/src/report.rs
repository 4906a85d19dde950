//! Versioned CSV and JSON reports.
//!
//! Every CSV starts with a header row whose first column is `schema`; every
//! data row repeats the schema tag so that concatenated or truncated files
//! can still be checked. Downstream tools should reject unknown tags.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::{LevelStats, MomentSet};

pub const CONVERGENCE_SCHEMA: &str = "vkconv-v1";
pub const MOMENTS_SCHEMA: &str = "vkmom-v1";
pub const TRACE_SCHEMA: &str = "vktrace-v1";

pub const CONVERGENCE_COLUMNS: [&str; 11] = [
    "schema",
    "eps",
    "nu",
    "h",
    "e_scaled",
    "e_limit",
    "gap_abs",
    "gap_rel",
    "max_dist",
    "i_over_h4",
    "wall_ms",
];
pub const MOMENTS_COLUMNS: [&str; 7] = ["schema", "eps", "nu", "h", "phi", "gap", "limit_norm"];
pub const TRACE_COLUMNS: [&str; 3] = ["schema", "iter", "energy"];

/// One sweep level; diagnostics that were not computed are empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub schema: String,
    pub eps: f64,
    pub nu: usize,
    pub h: f64,
    pub e_scaled: f64,
    pub e_limit: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_dist: Option<f64>,
    pub i_over_h4: Option<f64>,
    pub wall_ms: f64,
}

impl From<&LevelStats> for ReportRow {
    fn from(s: &LevelStats) -> Self {
        ReportRow {
            schema: CONVERGENCE_SCHEMA.into(),
            eps: s.eps,
            nu: s.nu,
            h: s.h,
            e_scaled: s.e_scaled,
            e_limit: s.e_limit,
            gap_abs: s.gap_abs,
            gap_rel: s.gap_rel,
            max_dist: s.max_dist,
            i_over_h4: s.i_over_h4,
            wall_ms: s.wall_ms,
        }
    }
}

/// Moment gap of one test function at one sweep level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub schema: String,
    pub eps: f64,
    pub nu: usize,
    pub h: f64,
    pub phi: String,
    pub gap: f64,
    pub limit_norm: f64,
}

impl MomentRow {
    /// Rows for every test function of a level.
    pub fn from_sets(eps: f64, nu: usize, h: f64, discrete: &MomentSet, limit: &MomentSet) -> Result<Vec<MomentRow>> {
        discrete.max_gap(limit)?;
        Ok(discrete
            .labels
            .iter()
            .zip(discrete.values.iter().zip(&limit.values))
            .map(|(phi, (a, b))| MomentRow {
                schema: MOMENTS_SCHEMA.into(),
                eps,
                nu,
                h,
                phi: phi.clone(),
                gap: (a - b).norm(),
                limit_norm: b.norm(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub schema: String,
    pub iter: usize,
    pub energy: f64,
}

impl TraceRow {
    pub fn from_trace(trace: &[f64]) -> Vec<TraceRow> {
        trace
            .iter()
            .enumerate()
            .map(|(iter, &energy)| TraceRow {
                schema: TRACE_SCHEMA.into(),
                iter,
                energy,
            })
            .collect()
    }
}

trait Tagged {
    const SCHEMA: &'static str;
    const COLUMNS: &'static [&'static str];
    fn tag(&self) -> &str;
    fn finite(&self) -> bool;
}

impl Tagged for ReportRow {
    const SCHEMA: &'static str = CONVERGENCE_SCHEMA;
    const COLUMNS: &'static [&'static str] = &CONVERGENCE_COLUMNS;
    fn tag(&self) -> &str {
        &self.schema
    }
    fn finite(&self) -> bool {
        [
            self.eps,
            self.h,
            self.e_scaled,
            self.e_limit,
            self.gap_abs,
            self.gap_rel,
            self.wall_ms,
        ]
        .iter()
        .chain(self.max_dist.iter())
        .chain(self.i_over_h4.iter())
        .all(|x| x.is_finite())
    }
}

impl Tagged for MomentRow {
    const SCHEMA: &'static str = MOMENTS_SCHEMA;
    const COLUMNS: &'static [&'static str] = &MOMENTS_COLUMNS;
    fn tag(&self) -> &str {
        &self.schema
    }
    fn finite(&self) -> bool {
        [self.eps, self.h, self.gap, self.limit_norm]
            .iter()
            .all(|x| x.is_finite())
    }
}

impl Tagged for TraceRow {
    const SCHEMA: &'static str = TRACE_SCHEMA;
    const COLUMNS: &'static [&'static str] = &TRACE_COLUMNS;
    fn tag(&self) -> &str {
        &self.schema
    }
    fn finite(&self) -> bool {
        self.energy.is_finite()
    }
}

fn check_rows<T: Tagged>(rows: &[T]) -> Result<()> {
    for (n, r) in rows.iter().enumerate() {
        if r.tag() != T::SCHEMA {
            return Err(Error::Config(format!(
                "row {n}: schema {:?}, expected {:?}",
                r.tag(),
                T::SCHEMA
            )));
        }
        if !r.finite() {
            return Err(Error::Numeric(format!(
                "row {n} of {} has non-finite entries",
                T::SCHEMA
            )));
        }
    }
    Ok(())
}

fn write_csv<T: Tagged + Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    check_rows(rows)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: Tagged + DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != T::COLUMNS {
        return Err(Error::Config(format!(
            "{} header mismatch: got [{}], expected [{}]",
            T::SCHEMA,
            header.join(","),
            T::COLUMNS.join(",")
        )));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    check_rows(&rows)?;
    Ok(rows)
}

fn write_json<T: Tagged + Serialize, W: Write>(mut out: W, rows: &[T]) -> Result<()> {
    check_rows(rows)?;
    serde_json::to_writer_pretty(&mut out, rows)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_convergence_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    write_csv(out, rows)
}

pub fn read_convergence_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    read_csv(input)
}

pub fn write_convergence_json<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    write_json(out, rows)
}

pub fn write_moments_csv<W: Write>(out: W, rows: &[MomentRow]) -> Result<()> {
    write_csv(out, rows)
}

pub fn read_moments_csv<R: Read>(input: R) -> Result<Vec<MomentRow>> {
    read_csv(input)
}

pub fn write_moments_json<W: Write>(out: W, rows: &[MomentRow]) -> Result<()> {
    write_json(out, rows)
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    write_csv(out, rows)
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    read_csv(input)
}

pub fn write_trace_json<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    write_json(out, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64) -> ReportRow {
        ReportRow::from(&LevelStats {
            eps,
            nu: 3,
            h: 2.0 * eps,
            e_scaled: 1.5,
            e_limit: 1.25,
            gap_abs: 0.25,
            gap_rel: 0.2,
            max_dist: Some(0.1),
            i_over_h4: None,
            wall_ms: 0.0,
        })
    }

    #[test]
    fn convergence_round_trip() {
        let rows = vec![row(0.125), row(0.0625)];
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CONVERGENCE_COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "vkconv-v1,0.125,3,0.25,1.5,1.25,0.25,0.2,0.1,,0.0"
        );
        assert_eq!(read_convergence_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_schemas_and_columns() {
        let mut bad = row(0.5);
        bad.schema = "vkconv-v0".into();
        assert!(write_convergence_csv(Vec::new(), &[bad]).is_err());
        let text = "schema,eps,nu\nvkconv-v1,0.5,3\n";
        assert!(matches!(read_convergence_csv(text.as_bytes()), Err(Error::Config(_))));
        let mut nan = row(0.5);
        nan.gap_abs = f64::NAN;
        assert!(matches!(
            write_convergence_csv(Vec::new(), &[nan]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn trace_and_json() {
        let rows = TraceRow::from_trace(&[3.0, 1.0, 0.5]);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), rows);
        let mut js = Vec::new();
        write_trace_json(&mut js, &rows).unwrap();
        let back: Vec<TraceRow> = serde_json::from_slice(&js).unwrap();
        assert_eq!(back, rows);
    }
}
