use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flowdub::numkernel::tensor_io::{load_matrix, save_matrix};
use flowdub::numkernel::Dtype;
use flowdub::Matrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::usage(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> CliResult<()> {
        let mut buf = Vec::new();
        writeln!(buf, "{header}")?;
        for row in rows {
            writeln!(buf, "{row}")?;
        }
        fs::write(self.path(name), buf)?;
        Ok(())
    }

    pub fn matrix(&self, name: &str, m: &Matrix) -> CliResult<()> {
        save_matrix(self.path(name), m, Dtype::F64)?;
        Ok(())
    }

    /// Spectrogram snapshot: time runs left to right, bin 0 at the bottom.
    pub fn pgm(&self, name: &str, mel: &Matrix) -> CliResult<()> {
        fs::write(self.path(name), pgm_bytes(mel))?;
        Ok(())
    }
}

/// Binary 8-bit PGM of a `frames × bins` matrix, min-max scaled.
pub fn pgm_bytes(mel: &Matrix) -> Vec<u8> {
    let (frames, bins) = mel.shape();
    let lo = mel.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mel.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    for y in 0..bins {
        let bin = bins - 1 - y;
        for t in 0..frames {
            let v = if span > 0.0 { (mel.get(t, bin) - lo) / span } else { 0.0 };
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    load_matrix(path).map_err(|e| match e {
        flowdub::Error::Io(io) => CliError::input(path, io),
        flowdub::Error::Format(f) => CliError::input(path, f),
        other => other.into(),
    })
}

pub fn ensure_exists(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(path, "no such file"))
    }
}
