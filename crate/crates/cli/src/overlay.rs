//! Externally computed curves passed through to phase-diagram output.

use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// `None` for a two-column file.
    pub label: Option<String>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayError {
    pub path: String,
    /// 1-based line in the file; `None` for errors not tied to a line.
    pub line: Option<u64>,
    pub reason: String,
}

impl fmt::Display for OverlayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}: line {l}: {}", self.path, self.reason),
            None => write!(f, "{}: {}", self.path, self.reason),
        }
    }
}

impl std::error::Error for OverlayError {}

/// Reads a CSV file with header `x,y` or `x,y,label`. Curves keep the
/// order in which their labels first appear.
pub fn overlay_import(path: &Path) -> Result<Vec<Curve>, OverlayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OverlayError { path: path.display().to_string(), line: None, reason: e.to_string() })?;
    parse_overlay(&text).map_err(|(line, reason)| OverlayError { path: path.display().to_string(), line, reason })
}

pub fn parse_overlay(text: &str) -> Result<Vec<Curve>, (Option<u64>, String)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| (Some(1), e.to_string()))?.clone();
    let labeled = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["x", "y"] => false,
        ["x", "y", "label"] => true,
        other => return Err((Some(1), format!("header must be `x,y` or `x,y,label`, got `{}`", other.join(",")))),
    };
    let mut curves: Vec<Curve> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| (e.position().map(|p| p.line()), e.to_string()))?;
        let line = record.position().map(|p| p.line());
        let number = |i: usize, name: &str| -> Result<f64, (Option<u64>, String)> {
            record[i].parse::<f64>().map_err(|_| (line, format!("{name} value `{}` is not a number", &record[i])))
        };
        let point = (number(0, "x")?, number(1, "y")?);
        let label = labeled.then(|| record[2].to_owned());
        match curves.iter_mut().find(|c| c.label == label) {
            Some(c) => c.points.push(point),
            None => curves.push(Curve { label, points: vec![point] }),
        }
    }
    Ok(curves)
}
