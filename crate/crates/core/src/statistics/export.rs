use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub abscissa: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// CSV with columns `abscissa,value,stderr,n_samples` plus a JSON sidecar
/// (`<path>.json`) holding `metadata`.
pub fn write_rows(rows: &[EstimateRow], metadata: &serde_json::Value, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(metadata)?)?;
    Ok(())
}
