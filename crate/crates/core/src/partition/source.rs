use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{generate_blobs, load_idx, PartitionError};
use crate::trainer::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where a node's full dataset comes from. Every process regenerates or
/// reloads the same rows and then selects its own partition.
///
/// Textual form (used on command lines):
/// `blobs:classes=5,per_class=400,dim=16,sep=5,seed=1`,
/// `idx:<images>,<labels>`, or a bare IDX image path whose label file is
/// found by replacing `images-idx3` with `labels-idx1` in the file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Blobs(BlobsSpec),
    Idx { images: PathBuf, labels: PathBuf },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset, PartitionError> {
        match self {
            DataSource::Blobs(b) => {
                generate_blobs(b.classes, b.per_class, b.feature_dim, b.separation, b.seed)
            }
            DataSource::Idx { images, labels } => load_idx(images, labels),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Blobs(b) => write!(
                f,
                "blobs:classes={},per_class={},dim={},sep={},seed={}",
                b.classes, b.per_class, b.feature_dim, b.separation, b.seed
            ),
            DataSource::Idx { images, labels } => {
                write!(f, "idx:{},{}", images.display(), labels.display())
            }
        }
    }
}

impl FromStr for DataSource {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| PartitionError::InvalidArgument(msg);
        if let Some(rest) = s.strip_prefix("blobs:") {
            let mut spec = BlobsSpec {
                classes: 0,
                per_class: 0,
                feature_dim: 0,
                separation: 0.0,
                seed: 0,
            };
            let mut seen_sep = false;
            for kv in rest.split(',').filter(|p| !p.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(format!("expected key=value, got `{kv}`")))?;
                let int = || {
                    v.parse::<u64>()
                        .map_err(|_| bad(format!("bad value for {k}: `{v}`")))
                };
                match k {
                    "classes" => spec.classes = int()? as usize,
                    "per_class" => spec.per_class = int()? as usize,
                    "dim" => spec.feature_dim = int()? as usize,
                    "seed" => spec.seed = int()?,
                    "sep" => {
                        spec.separation = v
                            .parse()
                            .map_err(|_| bad(format!("bad separation `{v}`")))?;
                        seen_sep = true;
                    }
                    other => return Err(bad(format!("unknown blobs key `{other}`"))),
                }
            }
            if spec.classes == 0 || spec.feature_dim == 0 || !seen_sep {
                return Err(bad(format!("blobs spec needs classes, dim and sep: `{s}`")));
            }
            return Ok(DataSource::Blobs(spec));
        }
        if let Some(rest) = s.strip_prefix("idx:") {
            let (images, labels) = rest
                .split_once(',')
                .ok_or_else(|| bad(format!("expected idx:<images>,<labels>, got `{s}`")))?;
            return Ok(DataSource::Idx {
                images: images.into(),
                labels: labels.into(),
            });
        }
        let images = PathBuf::from(s);
        let name = images
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if !name.contains("images-idx3") {
            return Err(bad(format!(
                "cannot infer label file for `{s}`; use idx:<images>,<labels>"
            )));
        }
        let labels = images.with_file_name(name.replace("images-idx3", "labels-idx1"));
        Ok(DataSource::Idx { images, labels })
    }
}
