//! CSV and JSON encodings of estimate reports.
//!
//! CSV files carry the report metadata as leading `# key: value` lines and
//! write floats with 17 significant digits, so parsing a file back yields the
//! same bits. JSON mirrors the same fields.

use std::io::{BufRead, BufReader, Read, Write};

use anyhow::{bail, Context, Result};
use gmf_core::network::{Comparison, Report, ReportRow};

pub const CSV_COLUMNS: [&str; 10] = [
    "ids",
    "value",
    "lower",
    "upper",
    "iterations",
    "residual",
    "approach",
    "function",
    "param",
    "converged",
];

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number `{s}`"))?))
    }
}

pub fn write_csv(report: &Report, mut out: impl Write) -> Result<()> {
    writeln!(out, "# quantity: {}", report.quantity)?;
    writeln!(out, "# tol: {}", fmt_f64(report.tol))?;
    writeln!(out, "# max_steps: {}", report.max_steps)?;
    for note in &report.notes {
        writeln!(out, "# note: {note}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.ids.clone(),
            fmt_f64(r.value),
            fmt_opt(r.lower),
            fmt_opt(r.upper),
            r.iterations.to_string(),
            fmt_opt(r.residual),
            r.approach.clone(),
            r.function.clone(),
            fmt_opt(r.param),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Report> {
    let mut reader = BufReader::new(input);
    let mut report = Report {
        quantity: String::new(),
        tol: f64::NAN,
        max_steps: 0,
        notes: Vec::new(),
        rows: Vec::new(),
    };
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let Some(meta) = line.strip_prefix("# ") else {
            body.push_str(&line);
            break;
        };
        let (key, value) = meta.trim_end_matches(['\n', '\r']).split_once(": ").context("malformed metadata line")?;
        match key {
            "quantity" => report.quantity = value.to_string(),
            "tol" => report.tol = value.parse()?,
            "max_steps" => report.max_steps = value.parse()?,
            "note" => report.notes.push(value.to_string()),
            other => bail!("unknown metadata key `{other}`"),
        }
    }
    reader.read_to_string(&mut body)?;

    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        bail!("unexpected columns {:?}", headers);
    }
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let row = (|| -> Result<ReportRow> {
            Ok(ReportRow {
                ids: field(0).to_string(),
                value: field(1).parse()?,
                lower: parse_opt(field(2))?,
                upper: parse_opt(field(3))?,
                iterations: field(4).parse()?,
                residual: parse_opt(field(5))?,
                approach: field(6).to_string(),
                function: field(7).to_string(),
                param: parse_opt(field(8))?,
                converged: field(9).parse()?,
            })
        })()
        .with_context(|| format!("record {}", k + 1))?;
        report.rows.push(row);
    }
    Ok(report)
}

pub fn write_json(report: &Report, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

pub fn read_json(input: impl Read) -> Result<Report> {
    Ok(serde_json::from_reader(input)?)
}

pub fn write_comparison_csv(c: &Comparison, mut out: impl Write) -> Result<()> {
    writeln!(out, "# quantity: {}", c.quantity)?;
    writeln!(out, "# tol: {}", fmt_f64(c.tol))?;
    writeln!(out, "# oracle: {}", if c.oracle_used { "dense" } else { "omitted" })?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["approach", "ids", "iterations", "estimate", "relative_error", "history"])?;
    for r in &c.rows {
        let history: Vec<String> = r.history.iter().map(|&x| fmt_f64(x)).collect();
        w.write_record([
            r.approach.clone(),
            r.ids.clone(),
            r.iterations.to_string(),
            fmt_f64(r.estimate),
            fmt_opt(r.relative_error),
            history.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
