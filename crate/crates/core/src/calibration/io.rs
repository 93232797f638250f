//! Text formats for calibration sets and fitted calibrators.
//!
//! Calibration sets are line-delimited `raw_score,label` records (`label` is
//! `0` or `1`). Blank lines, `#` comments and a `raw_score,label` header are
//! ignored; whitespace also works as the separator.
//!
//! Fitted calibrators are TOML documents:
//!
//! ```toml
//! kind = "dbs"
//! a = 2.01234567
//! b = 0.987654321
//!
//! [fit]
//! iterations = 412
//! initial_loss = 0.52
//! final_loss = 0.47
//! converged = true
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CalibrationError, CalibrationSample, Calibrator, CalibratorKind, FitStats, Fitted};
use crate::numfmt::{fmt_sig9, round_sig9};

pub fn parse_samples(text: &str) -> Result<Vec<CalibrationSample>, CalibrationError> {
    read_samples(text.as_bytes())
}

pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("raw_score") {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parse_err = |message: String| CalibrationError::Parse { line: line_no, message };
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let score: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("invalid raw_score `{}`", fields[0])))?;
        let label = match fields[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("label must be 0 or 1, got `{other}`"))),
        };
        out.push(CalibrationSample::new(score, label).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_samples<W: Write>(mut w: W, samples: &[CalibrationSample]) -> std::io::Result<()> {
    writeln!(w, "raw_score,label")?;
    for s in samples {
        writeln!(w, "{},{}", fmt_sig9(s.raw_score), u8::from(s.label))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorDocument {
    pub kind: CalibratorKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitStats>,
}

impl CalibratorDocument {
    pub fn from_calibrator(cal: &Calibrator, fit: Option<FitStats>) -> Self {
        Self {
            kind: cal.kind(),
            a: round_sig9(cal.a()),
            b: round_sig9(cal.b()),
            fit: fit.map(|s| FitStats {
                initial_loss: round_sig9(s.initial_loss),
                final_loss: round_sig9(s.final_loss),
                ..s
            }),
        }
    }

    pub fn from_fitted(f: &Fitted) -> Self {
        Self::from_calibrator(&f.calibrator, Some(f.stats))
    }

    pub fn calibrator(&self) -> Result<Calibrator, CalibrationError> {
        match self.kind {
            CalibratorKind::Identity => Ok(Calibrator::identity()),
            kind => Calibrator::new(kind, self.a, self.b),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibrator document serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CalibrationError> {
        toml::from_str(text).map_err(|e| CalibrationError::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}
