pub mod analyze;
pub mod calibrate;
pub mod simulate;
pub mod theory;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::output::Provenance;

pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub prov: Provenance,
}

impl Context {
    pub fn new(cfg: RunConfig, out_dir: PathBuf, command: &str) -> Self {
        // The output location does not change results, so it is not hashed.
        let hashed = RunConfig {
            out_dir: None,
            ..cfg.clone()
        };
        let prov = Provenance::new(command, &hashed.to_toml(), cfg.seed);
        Self { cfg, out_dir, prov }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn report(&self, what: &str, path: &Path) {
        println!("wrote {what}: {}", path.display());
    }
}
