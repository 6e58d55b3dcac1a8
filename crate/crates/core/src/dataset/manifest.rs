use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, QueryType};
use crate::geometry::ply::DEFAULT_LABEL_PROPERTY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstruction {
    pub query: String,
    pub query_type: QueryType,
    /// Ground-truth part id the query refers to.
    pub category: i32,
}

/// One object of a split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectManifest {
    pub object_id: String,
    pub object_category: String,
    /// Relative paths are taken from the manifest's directory.
    pub ply_path: PathBuf,
    pub instructions: Vec<ManifestInstruction>,
    #[serde(default = "default_label_property")]
    pub label_property: String,
    /// Optional human-readable part names, keyed by part id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub part_names: BTreeMap<i32, String>,
}

fn default_label_property() -> String {
    DEFAULT_LABEL_PROPERTY.to_string()
}

impl ObjectManifest {
    pub fn resolve_ply(&self, manifest_dir: &Path) -> PathBuf {
        if self.ply_path.is_absolute() {
            self.ply_path.clone()
        } else {
            manifest_dir.join(&self.ply_path)
        }
    }
}

/// Reads a split file: either an array of object documents or a single one.
pub fn load_manifest(path: &Path) -> Result<Vec<ObjectManifest>, DatasetError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

pub fn save_manifest(objects: &[ObjectManifest], path: &Path) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(objects)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
