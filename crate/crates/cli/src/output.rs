use std::fs;
use std::path::{Path, PathBuf};

use probtaylor::io::format_real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Collects the files an experiment writes, relative to the output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    pub fn write_table(&mut self, rel: impl AsRef<Path>, table: &Table) -> CliResult<()> {
        let bytes = table.to_csv().map_err(|e| CliError::io(self.root.join(rel.as_ref()), e))?;
        self.write(rel, &bytes)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn extend(&mut self, files: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(files);
    }

    pub fn hashes(&self) -> CliResult<Vec<FileEntry>> {
        let mut out: Vec<FileEntry> = self
            .files
            .iter()
            .map(|rel| {
                let path = self.root.join(rel);
                let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                Ok(FileEntry {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<CliResult<_>>()?;
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(
            row.into_iter()
                .map(|c| match c {
                    Cell::Num(v) => format_real(v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(s) => s,
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn numbers_round_trip_through_csv() {
        let mut t = Table::new(["x", "label"]);
        let xs = [0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        for &x in &xs {
            t.push(vec![x.into(), "a,b".into()]);
        }
        let bytes = t.to_csv().unwrap();
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let back: Vec<(f64, String)> = r.deserialize().map(|r| r.unwrap()).collect();
        for (x, (y, s)) in xs.iter().zip(back) {
            assert_eq!(*x, y);
            assert_eq!(s, "a,b");
        }
    }
}
