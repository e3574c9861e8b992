//! Run configuration: JSON config file, flag resolution, and the run
//! directory keyed by the hash of the resolved parameters.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use glossy_core::continuous::UnivariateDist;
use glossy_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Flat JSON config shared by all subcommands; explicit flags override any
/// value given here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lik: Option<PathBuf>,
    pub prior: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub max_iters: Option<usize>,
    pub gap_tol: Option<f64>,
    pub prune_tol: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub evidence: Option<String>,
    pub iwae_k: Option<usize>,
    pub mode: Option<String>,
    pub target_cov: Option<PathBuf>,
    pub n_mc: Option<usize>,
    pub source_dists: Option<Vec<UnivariateDist>>,
    pub target_dists: Option<Vec<UnivariateDist>>,
    pub n_templates: Option<usize>,
    pub dim: Option<usize>,
    pub flip_prob: Option<f64>,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    pub templates: Option<PathBuf>,
    pub distractors: Option<usize>,
    pub omit_template: Option<usize>,
    pub skewed_init: Option<bool>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Report metadata attached to every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// A prepared run directory named by the resolved-config hash. Nothing in an
/// existing run directory is overwritten unless forced.
pub struct RunCtx {
    pub dir: PathBuf,
    pub metadata: Metadata,
}

impl RunCtx {
    pub fn prepare<T: Serialize>(
        out_base: &Path,
        resolved: &T,
        seed: Option<u64>,
        force: bool,
        no_timestamp: bool,
    ) -> Result<Self> {
        let canonical = serde_json::to_string(resolved)?;
        let digest = Sha256::digest(canonical.as_bytes());
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let short = &hash[..12];
        let dir = out_base.join(short);
        if dir.exists()
            && dir
                .read_dir()
                .map(|mut d| d.next().is_some())
                .unwrap_or(false)
            && !force
        {
            return Err(Error::InvalidConfig(format!(
                "run directory {} already has artifacts; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::create_dir_all(&dir)?;
        let timestamp = if no_timestamp {
            None
        } else {
            Some(chrono::Utc::now().to_rfc3339())
        };
        Ok(Self {
            dir,
            metadata: Metadata {
                seed,
                config_hash: short.to_string(),
                timestamp,
            },
        })
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, value)?;
        writeln!(file)?;
        Ok(path)
    }

    pub fn create(&self, name: &str) -> Result<fs::File> {
        Ok(fs::File::create(self.dir.join(name))?)
    }
}
