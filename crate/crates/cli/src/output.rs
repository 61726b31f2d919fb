//! CSV files and the sha256 manifest of an output directory.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct Output {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        let digest = Sha256::digest(contents.as_bytes());
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), format!("{digest:x}")));
        Ok(())
    }

    /// Write `manifest.txt`: one `sha256  name` line per file, sorted by name.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.files.sort();
        let mut manifest = String::new();
        for (name, digest) in &self.files {
            let _ = writeln!(manifest, "{digest}  {name}");
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Comma-separated table with a header row and 17 significant digits.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Table { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell<'a> {
    F(f64),
    I(usize),
    S(&'a str),
    B(bool),
    Empty,
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:.16e}"),
            Cell::I(v) => v.to_string(),
            Cell::S(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn opt(v: Option<f64>) -> Cell<'static> {
    v.map_or(Cell::Empty, Cell::F)
}
