//! Plain CSV output with full-precision floats.

use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Minimal CSV writer: a header line, then comma-separated rows.
pub struct Csv<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> Csv<W> {
    pub fn new<S: AsRef<str>>(mut out: W, header: &[S]) -> Result<Self> {
        let line: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
        writeln!(out, "{}", line.join(","))?;
        Ok(Self { out, columns: header.len() })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        let line: Vec<&str> = fields.iter().map(|s| s.as_ref()).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn floats(&mut self, fields: &[f64]) -> Result<()> {
        let line: Vec<String> = fields.iter().map(|x| fmt_f64(*x)).collect();
        self.row(&line)
    }
}

/// Splits a CSV line into exactly `expected` fields.
pub fn parse_row(line: &str, expected: usize) -> Result<Vec<String>> {
    let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
    if fields.len() != expected {
        return Err(Error::Parse(format!("expected {expected} fields in {line:?}")));
    }
    Ok(fields)
}

/// Reads a numeric CSV with a header into rows of floats.
pub fn read_float_rows<R: BufRead>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Parse("empty file".into())),
    };
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(&line, header.len())?
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
