use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rumheat::{Grids, Scalar, SpaceTimeField};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Fixed 17-significant-digit formatting.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Single writer for one run directory; records a checksum per file.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: contents.len(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

/// `name,value` rows in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    rows: Vec<(String, f64)>,
}

impl Summary {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.rows.push((name.into(), value));
    }

    pub fn flag(&mut self, name: impl Into<String>, value: bool) {
        self.push(name, if value { 1.0 } else { 0.0 });
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == name).map(|r| r.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value\n");
        for (name, value) in &self.rows {
            let _ = writeln!(s, "{name},{}", num(*value));
        }
        s
    }
}

/// `t,x,value_re,value_im`, one row per node.
pub fn field_csv<S: Scalar>(field: &SpaceTimeField<S>, grids: &Grids) -> String {
    let mut s = String::with_capacity(field.data().len() * 96);
    s.push_str("t,x,value_re,value_im\n");
    for j in 0..field.rows() {
        let t = num(grids.time.t(j));
        for i in 0..field.cols() {
            let v = field.get(j, i);
            let _ = writeln!(
                s,
                "{t},{},{},{}",
                num(grids.space.x(i)),
                num(v.re()),
                num(v.im())
            );
        }
    }
    s
}
