//! Result rows and their CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use exceedmc_core::estimators::EstimateReport;
use serde::{Deserialize, Deserializer, Serialize};

use crate::config::Format;

/// One line of a results table. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub method: String,
    pub n_or_c: f64,
    #[serde(deserialize_with = "nullable")]
    pub estimate: f64,
    #[serde(deserialize_with = "nullable")]
    pub std_error: f64,
    pub runs: u64,
    pub seconds: f64,
    /// `E_Q[L^2 1_A] / p^2`, with `p` the reference estimate of the row's group.
    #[serde(deserialize_with = "nullable")]
    pub second_moment_ratio: f64,
    pub truncations: u64,
    pub seed: u64,
    pub display: String,
}

// JSON has no NaN; failed rows are written with nulls.
fn nullable<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl ResultRow {
    pub fn from_report(experiment_id: &str, n_or_c: f64, report: &EstimateReport, reference_p: f64) -> Self {
        let ratio = if reference_p > 0.0 {
            report.second_moment / (reference_p * reference_p)
        } else {
            f64::NAN
        };
        Self {
            experiment_id: experiment_id.into(),
            method: report.method.clone(),
            n_or_c,
            estimate: report.estimate,
            std_error: report.std_error,
            runs: report.runs,
            seconds: report.seconds,
            second_moment_ratio: ratio,
            truncations: report.truncations,
            seed: report.seed,
            display: display(report.estimate, report.std_error),
        }
    }

    /// A row whose computation failed; the message goes in `display`.
    pub fn failed(experiment_id: &str, method: &str, n_or_c: f64, seed: u64, err: &dyn std::fmt::Display) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            method: method.into(),
            n_or_c,
            estimate: f64::NAN,
            std_error: f64::NAN,
            runs: 0,
            seconds: 0.0,
            second_moment_ratio: f64::NAN,
            truncations: 0,
            seed,
            display: format!("failed: {err}"),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.display.starts_with("failed:")
    }
}

fn superscript(k: i32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    let mut s = String::new();
    if k < 0 {
        s.push('⁻');
    }
    for c in k.unsigned_abs().to_string().chars() {
        s.push(DIGITS[c.to_digit(10).unwrap() as usize]);
    }
    s
}

/// `mantissa(s.e.)×10^k` with a shared exponent, e.g. `3.19(0.05)×10⁻²`.
/// Decimals follow the leading digit of the standard error.
pub fn display(estimate: f64, std_error: f64) -> String {
    if !estimate.is_finite() || !std_error.is_finite() {
        return "n/a".into();
    }
    let scale = if estimate != 0.0 { estimate.abs() } else { std_error.abs() };
    if scale == 0.0 {
        return "0(0)".into();
    }
    let mut k = scale.log10().floor() as i32;
    let decimals = |k: i32| {
        let se = std_error / 10f64.powi(k);
        if se > 0.0 {
            (-(se.log10().floor()) as i32).clamp(0, 4) as usize
        } else {
            2
        }
    };
    let mut d = decimals(k);
    // rounding can carry the mantissa to 10
    if (estimate.abs() / 10f64.powi(k) * 10f64.powi(d as i32)).round() >= 10f64.powi(d as i32 + 1) {
        k += 1;
        d = decimals(k);
    }
    let p = 10f64.powi(k);
    let body = format!("{:.d$}({:.d$})", estimate / p, std_error / p);
    if k == 0 {
        body
    } else {
        format!("{body}×10{}", superscript(k))
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            if rows.is_empty() {
                w.write_record(HEADER)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub const HEADER: [&str; 11] = [
    "experiment_id",
    "method",
    "n_or_c",
    "estimate",
    "std_error",
    "runs",
    "seconds",
    "second_moment_ratio",
    "truncations",
    "seed",
    "display",
];

/// Writes the rows to `path`, or to stdout when `path` is `None`.
pub fn emit_report(rows: &[ResultRow], format: Format, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_rows(rows, format, std::io::BufWriter::new(f)).with_context(|| format!("writing {}", p.display()))
        }
        None => write_rows(rows, format, std::io::stdout().lock()),
    }
}

pub fn read_rows(text: &str, format: Format) -> Result<Vec<ResultRow>> {
    Ok(match format {
        Format::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()?,
        Format::Json => serde_json::from_str(text)?,
    })
}

/// `<path>.<suffix>`, e.g. `out.csv` to `out.csv.config.json`.
pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    s.into()
}
