//! All-or-nothing output: files are written into a staging directory and
//! moved into the output directory only when the command succeeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct Staging {
    tmp: PathBuf,
    out: PathBuf,
    header: String,
    /// The output directory did not exist before this command.
    created_out: bool,
}

impl Staging {
    pub fn new(out: &Path, command: &str, config_hash: &str) -> Result<Self> {
        let created_out = !out.exists();
        let tmp = out.join(format!(".staging-{command}"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).with_context(|| format!("clearing {}", tmp.display()))?;
        }
        fs::create_dir_all(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self {
            tmp,
            out: out.to_path_buf(),
            header: format!("# cogload {} config {}", env!("CARGO_PKG_VERSION"), config_hash),
            created_out,
        })
    }

    /// Path inside the staging area.
    pub fn path(&self, rel: &str) -> PathBuf {
        self.tmp.join(rel)
    }

    /// Write a text report prefixed with the header line.
    pub fn write_text(&self, rel: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header)?;
        body(&mut buf)?;
        self.write_raw(rel, &buf)
    }

    pub fn write_raw(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    /// Move every staged top-level entry into the output directory, replacing
    /// what was there.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&self.tmp)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let dest = self.out.join(e.file_name());
            if dest.is_dir() {
                fs::remove_dir_all(&dest)?;
            } else if dest.exists() {
                fs::remove_file(&dest)?;
            }
            fs::rename(e.path(), &dest).with_context(|| format!("moving output to {}", dest.display()))?;
            moved.push(dest);
        }
        fs::remove_dir(&self.tmp)?;
        self.created_out = false;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            let _ = fs::remove_dir_all(&self.tmp);
        }
        if self.created_out {
            // Only succeeds if nothing else was written there.
            let _ = fs::remove_dir(&self.out);
        }
    }
}
