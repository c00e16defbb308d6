//! Batch manifests: a list of token files plus shared settings.
//!
//! ```json
//! {
//!   "images": [{"id": "img0", "path": "tokens/img0.tokm"}],
//!   "config": {"alpha": 32.0, "seed": 0, "dynamic": true, "min_budget": 16}
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Format;
use crate::error::{Error, Result};
use crate::pipeline::SimilaritySource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestConfig {
    pub avg_budget: Option<usize>,
    pub alpha: Option<f64>,
    pub groups: Option<usize>,
    pub seed: Option<u64>,
    pub similarity: Option<SimilaritySource>,
    #[serde(default)]
    pub dynamic: bool,
    pub min_budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub images: Vec<ManifestEntry>,
    #[serde(default)]
    pub config: ManifestConfig,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Reads the manifest and resolves entry paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.images {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::InvalidInput("manifest lists no images".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.images {
            if e.id.is_empty() || e.id.contains(['/', '\\']) || e.id == "." || e.id == ".." {
                return Err(Error::InvalidInput(format!(
                    "image id {:?} is not usable as a file name",
                    e.id
                )));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate image id {:?}",
                    e.id
                )));
            }
        }
        Ok(())
    }

    /// Format of an entry, explicit or by extension (`.csv` is CSV, anything
    /// else TOKM).
    pub fn format_of(entry: &ManifestEntry) -> Format {
        entry
            .format
            .unwrap_or_else(|| Format::from_path(&entry.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"images": [{"id": "a", "path": "a.tokm"}, {"id": "b", "path": "/abs/b.csv"}],
                "config": {"dynamic": true, "min_budget": 8}}"#,
        )
        .unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.images[0].path, dir.path().join("a.tokm"));
        assert_eq!(m.images[1].path, PathBuf::from("/abs/b.csv"));
        assert_eq!(Manifest::format_of(&m.images[1]), Format::Csv);
        assert_eq!(Manifest::format_of(&m.images[0]), Format::Tokm);
        assert!(m.config.dynamic);
        assert_eq!(m.config.min_budget, Some(8));
    }

    #[test]
    fn rejects_bad_manifests() {
        let p = Path::new("m.json");
        assert!(matches!(
            Manifest::parse(r#"{"images": []}"#, p),
            Err(Error::InvalidInput(_))
        ));
        let dup = r#"{"images": [{"id": "a", "path": "x"}, {"id": "a", "path": "y"}]}"#;
        assert!(Manifest::parse(dup, p)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let sep = r#"{"images": [{"id": "../a", "path": "x"}]}"#;
        assert!(Manifest::parse(sep, p).is_err());
        assert!(matches!(Manifest::parse("{", p), Err(Error::Parse { .. })));
        let unknown = r#"{"images": [{"id": "a", "path": "x"}], "config": {"budget": 3}}"#;
        assert!(Manifest::parse(unknown, p).is_err());
    }
}
