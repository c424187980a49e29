//! Output files: atomic writes, config echoes, version stamps and sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn output_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[derive(Serialize)]
struct Versions {
    hawkes_core: &'static str,
    hawkes_cli: &'static str,
    rng: &'static str,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    args: Vec<String>,
    created_at: String,
}

/// Writes `<out>.config.json` (resolved configuration), `<out>.meta.json`
/// (command line and wall-clock timestamp) and `versions.json` next to
/// `out`. Everything except the meta sidecar is deterministic.
pub fn describe_run<C: Serialize + ?Sized>(out: &Path, command: &str, config: &C) -> Result<()> {
    write_json(&with_suffix(out, ".config.json"), config)?;
    write_json(
        &with_suffix(out, ".meta.json"),
        &Meta {
            command,
            args: std::env::args().collect(),
            created_at: chrono::Utc::now().to_rfc3339(),
        },
    )?;
    write_json(
        &output_dir(out).join("versions.json"),
        &Versions {
            hawkes_core: hawkes_core::VERSION,
            hawkes_cli: env!("CARGO_PKG_VERSION"),
            rng: hawkes_core::simulator::RNG_ALGORITHM,
        },
    )
}
