//! Minimal CSV tables of floats with `# key=value` metadata lines.
//!
//! Values are written in shortest round-trip form, so a reload reproduces
//! every number bit for bit.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { meta: Vec::new(), header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(file)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut meta = Vec::new();
        let mut body = String::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse(format!("bad metadata line `{line}`")))?;
                meta.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let header = csv.headers().map_err(csv_err)?.iter().map(str::to_string).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in csv.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { meta, header, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut t = Table::new(["x", "y"]).with_meta("c", 0.1);
        t.push(vec![0.1, 1.0 / 3.0]);
        t.push(vec![-1e-300, f64::MAX]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = Table::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.meta_value("c"), Some("0.1"));
    }
}
