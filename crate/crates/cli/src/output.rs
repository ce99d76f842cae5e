//! Output files: atomic writes and provenance stamps.

use std::io::Write;
use std::path::{Path, PathBuf};

use diffcal::simulator::{wav, Recording};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, config_toml: &str, seed: u64) -> Self {
        let digest = Sha256::digest(config_toml.as_bytes());
        Self {
            tool: "diffcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_string(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    /// `#` comment line placed above CSV headers.
    pub fn csv_comment(&self) -> String {
        format!(
            "# {} {} {} config_sha256={} seed={}\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn write_csv(path: &Path, prov: &Provenance, body: &str) -> std::io::Result<()> {
    write_atomic(path, format!("{}{body}", prov.csv_comment()).as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> diffcal::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn write_wav_atomic(path: &Path, rec: &Recording) -> diffcal::Result<()> {
    let tmp = temp_path(path);
    let result = wav::write_wav(&tmp, rec).and_then(|()| Ok(std::fs::rename(&tmp, path)?));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Path of the JSON sidecar that accompanies a WAV file.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn provenance_digest_tracks_config() {
        let a = Provenance::new("theory", "seed = 1", 1);
        let b = Provenance::new("theory", "seed = 2", 1);
        assert_eq!(a.config_sha256.len(), 64);
        assert_ne!(a.config_sha256, b.config_sha256);
        assert!(a.csv_comment().starts_with("# diffcal "));
    }
}
