//! CSV and JSON writers. Files are written to a temporary sibling and
//! renamed into place, so a failed run never leaves a partial file.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

/// Shortest decimal text that parses back to the same `f64`;
/// unbounded values print as `inf` / `-inf`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Parse text written by [`format_float`].
pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text preceded by a `# ...` provenance line.
    pub fn to_csv(&self, provenance: &str) -> std::io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# {provenance}")?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Read a CSV written by [`Table::to_csv`], skipping the provenance line.
pub fn read_csv(text: &str) -> Result<Table, csv::Error> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let mut table = Table::new(&header.iter().collect::<Vec<_>>());
    for rec in r.records() {
        table.rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(table)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
