//! CSV tables and the JSON run manifest.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde::Serialize;

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "re_x", "im_x", "re_v", "im_v"];
pub const CURVE_HEADER: [&str; 3] = ["re_E", "im_E", "residual"];

/// 17 significant digits, enough to read back the same f64.
fn field(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(
    path: &Path,
    rows: impl IntoIterator<Item = (f64, Complex64, Complex64)>,
) -> Result<()> {
    let mut out = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    out.write_record(TRAJECTORY_HEADER)?;
    for (t, x, v) in rows {
        out.write_record([field(t), field(x.re), field(x.im), field(v.re), field(v.im)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve_csv(
    path: &Path,
    rows: impl IntoIterator<Item = (Complex64, f64)>,
) -> Result<()> {
    let mut out = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    out.write_record(CURVE_HEADER)?;
    for (e, residual) in rows {
        out.write_record([field(e.re), field(e.im), field(residual)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// `dir/stem.csv` -> `dir/stem<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<P: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub parameters: P,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<serde_json::Value>,
}

impl<P: Serialize> RunManifest<P> {
    pub fn new(command: &'static str, parameters: P) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            parameters,
            wall_time_s: 0.0,
            outputs: Vec::new(),
            status: None,
        }
    }

    /// Writes the manifest to `path`, listing it among the outputs.
    pub fn finish(mut self, path: &Path, elapsed: Duration) -> Result<()> {
        self.wall_time_s = elapsed.as_secs_f64();
        self.outputs.push(path.to_path_buf());
        write_json(path, &self)
    }
}
