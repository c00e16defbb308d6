//! File formats and reports.

mod csv_format;
pub mod manifest;
pub mod report;
pub mod tokm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use csv_format::{read_csv, write_csv};
pub use manifest::{Manifest, ManifestConfig, ManifestEntry};
pub use report::{
    canonicalize, to_canonical_json, write_canonical_json, write_selection_report, ConfigEcho,
    SelectionReport,
};
pub use tokm::{read_tokm, write_tokm, TokenFileHeader};

use crate::error::Result;
use crate::tensor::TokenMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tokm,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tokm,
        }
    }
}

pub fn read_token_matrix(path: &Path, format: Format) -> Result<TokenMatrix> {
    match format {
        Format::Tokm => read_tokm(path),
        Format::Csv => read_csv(path),
    }
}

pub fn write_token_matrix(x: &TokenMatrix, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Tokm => write_tokm(x, path),
        Format::Csv => write_csv(x, path),
    }
}
