//! Plot-ready tables: a `# key: value` header block, then comma-separated
//! columns.
//!
//! ```text
//! # radcool table
//! # quantity: output noise spectrum
//! # units: quanta
//! # column detuning_hz [Hz]: offset from center_hz
//! # column psd [quanta]: symmetrized output PSD
//! detuning_hz,psd
//! -6165000,0.5210
//! ```

use std::fs;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub description: String,
}

impl Column {
    pub fn new(name: &str, unit: &str, description: &str) -> Self {
        Column {
            name: name.into(),
            unit: unit.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Header metadata in output order.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Table {
            meta: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# radcool table\n");
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        for c in &self.columns {
            out.push_str(&format!("# column {} [{}]: {}\n", c.name, c.unit, c.description));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v}"))).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("ascii"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        fs::write(path, self.to_text()).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn parse(text: &str, path: &str) -> Result<Table, TableError> {
        let fmt_err = |line: usize, message: String| TableError::Format {
            path: path.to_string(),
            line,
            message,
        };
        let mut meta = Vec::new();
        let mut described: Vec<Column> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else { continue };
            let rest = rest.trim();
            if rest == "radcool table" || rest.is_empty() {
                continue;
            }
            if let Some(col) = rest.strip_prefix("column ") {
                let parsed = col.split_once(" [").and_then(|(name, tail)| {
                    let (unit, desc) = tail.split_once("]:")?;
                    Some(Column::new(name.trim(), unit.trim(), desc.trim()))
                });
                described.push(parsed.ok_or_else(|| fmt_err(i + 1, format!("malformed column line `{line}`")))?);
                continue;
            }
            let (k, v) = rest
                .split_once(':')
                .ok_or_else(|| fmt_err(i + 1, format!("malformed header line `{line}`")))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
        }

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| fmt_err(0, e.to_string()))?
            .clone();
        let columns: Vec<Column> = header
            .iter()
            .map(|name| {
                described
                    .iter()
                    .find(|c| c.name == name)
                    .cloned()
                    .unwrap_or_else(|| Column::new(name, "", ""))
            })
            .collect();
        if columns.is_empty() {
            return Err(fmt_err(0, "no columns".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                fmt_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| fmt_err(line, format!("`{s}` is not a number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if row.len() != columns.len() {
                return Err(fmt_err(line, format!("expected {} fields, got {}", columns.len(), row.len())));
            }
            rows.push(row);
        }
        Ok(Table { meta, columns, rows })
    }

    pub fn read(path: &Path) -> Result<Table, TableError> {
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Table::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = Table::new(vec![
            Column::new("detuning_hz", "Hz", "offset from center_hz"),
            Column::new("psd", "quanta", "symmetrized output PSD"),
        ])
        .meta("units", "quanta")
        .meta("center_hz", 10.53e9);
        t.push(vec![-1.5e6, 0.521]);
        t.push(vec![0.0, 1.7479581123456789]);
        let text = t.to_text();
        let back = Table::parse(&text, "mem").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get_meta("center_hz"), Some("10530000000"));
    }

    #[test]
    fn bad_number_names_line() {
        let text = "# radcool table\nx,y\n1,2\n3,abc\n";
        let e = Table::parse(text, "f.csv").unwrap_err().to_string();
        assert!(e.starts_with("f.csv:4:"), "{e}");
    }
}
