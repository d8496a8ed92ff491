//! Raw little-endian `f64` dumps with a JSON header next to them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SpectralField, TorusDomain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub domain: TorusDomain,
    pub components: usize,
    pub shape: Vec<usize>,
    pub axis_order: String,
    pub dtype: String,
    pub layout: String,
}

fn header_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Writes `<path>` (component-major raw values) and `<path>.json`.
pub fn write_field(field: &SpectralField, path: &Path) -> Result<()> {
    let dom = *field.domain();
    let header = FieldHeader {
        domain: dom,
        components: field.components(),
        shape: vec![dom.n_grid; dom.d],
        axis_order: "x fastest".into(),
        dtype: "f64 little-endian".into(),
        layout: "component-major".into(),
    };
    let mut bytes = Vec::with_capacity(8 * dom.len() * field.components());
    for comp in field.values() {
        for v in comp {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    fs::write(header_path(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<SpectralField> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(header_path(path))?)?;
    let bytes = fs::read(path)?;
    let len = header.domain.len();
    if bytes.len() != 8 * len * header.components {
        return Err(Error::Data(format!(
            "raw file has {} bytes, header implies {}",
            bytes.len(),
            8 * len * header.components
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let comps = values.chunks(len).map(|c| c.to_vec()).collect();
    Ok(SpectralField::new(header.domain, comps))
}
