//! All-or-nothing output: every file is rendered in memory first, written to a
//! temporary name, and renamed into place only once all writes succeeded.

use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, String)>,
}

impl Bundle {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn commit(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        if self.files.is_empty() {
            return Ok(Vec::new());
        }
        fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            if let Err(e) = fs::write(&tmp, contents) {
                staged.push(tmp);
                cleanup(&staged);
                return Err(e);
            }
            staged.push(tmp);
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, (name, _)) in staged.iter().zip(&self.files) {
            let dest = dir.join(name);
            if let Err(e) = fs::rename(tmp, &dest) {
                cleanup(&staged);
                return Err(e);
            }
            written.push(dest);
        }
        Ok(written)
    }
}

fn cleanup(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}
