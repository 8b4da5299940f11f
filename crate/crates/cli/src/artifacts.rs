//! In-memory output files, written only once the whole pipeline succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gnslab::functionals::format_float;

use crate::failure::Failure;

/// Relative path → file bytes, ordered by path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// JSON number, `null` when not finite.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// A CSV table assembled row by row.
pub struct Table {
    text: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            width: header.len(),
        }
    }

    /// Appends a row of preformatted cells.
    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.width, "row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn cell(x: f64) -> String {
    format_float(x)
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(path.into(), bytes);
    }

    pub fn add_json(&mut self, path: impl Into<String>, v: &Value) {
        self.add(path, json_bytes(v));
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(|v| v.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// `[{path, bytes, sha256}]` of every file so far.
    pub fn listing(&self) -> Value {
        Value::Array(
            self.files
                .iter()
                .map(|(p, b)| json!({ "path": p, "bytes": b.len(), "sha256": sha256_hex(b) }))
                .collect(),
        )
    }

    /// Writes every file below `dir`, creating directories as needed.
    pub fn write_all(&self, dir: &Path) -> Result<(), Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, &e))?;
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, &e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| Failure::io(&path, &e))?;
        }
        Ok(())
    }
}

/// Fails if `dir` cannot become an output directory; creates nothing.
pub fn check_output_dir(dir: &Path) -> Result<(), Failure> {
    let bad = |msg: &str| Failure::Validation {
        field: Some("output.dir".into()),
        message: format!("{}: {msg}", dir.display()),
    };
    if dir.as_os_str().is_empty() {
        return Err(bad("output directory is empty"));
    }
    let mut probe: PathBuf = dir.to_path_buf();
    loop {
        match std::fs::metadata(&probe) {
            Ok(meta) => {
                if !meta.is_dir() {
                    return Err(bad("output path is not a directory"));
                }
                if meta.permissions().readonly() {
                    return Err(bad("output directory is not writable"));
                }
                return Ok(());
            }
            Err(_) => match probe.parent() {
                Some(p) if !p.as_os_str().is_empty() => probe = p.to_path_buf(),
                // relative path whose first component does not exist yet
                _ => return Ok(()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_and_listing_are_stable() {
        let mut t = Table::new(&["a", "b"]);
        t.row(vec![cell(1.0), cell(f64::NAN)]);
        let mut a = Artifacts::default();
        a.add("x/t.csv", t.into_bytes());
        a.add_json("s.json", &json!({"probes": []}));
        assert_eq!(a.get("x/t.csv").unwrap(), b"a,b\n1.0,nan\n");
        assert_eq!(a.paths().collect::<Vec<_>>(), vec!["s.json", "x/t.csv"]);
        assert_eq!(a.listing()[1]["bytes"], 12);
    }

    #[test]
    fn files_under_a_regular_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("plain");
        std::fs::write(&f, b"").unwrap();
        assert!(check_output_dir(&f.join("sub")).is_err());
        assert!(check_output_dir(&dir.path().join("new/deeper")).is_ok());
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(num(f64::INFINITY), Value::Null);
        assert_eq!(num(0.5), json!(0.5));
    }
}
