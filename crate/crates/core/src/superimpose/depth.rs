//! Soft-tissue depth table: per anthropometric id, a depth and a match threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FaceModel;

/// Match threshold used when a table row omits one.
pub const DEFAULT_ETA: f64 = 2.5;

/// Id of the forehead landmark whose depth defines the definite-region offset.
pub const FOREHEAD_ID: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueDepth {
    pub depth: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TissueDepthTable {
    pub entries: BTreeMap<u32, TissueDepth>,
}

impl TissueDepthTable {
    pub fn new(entries: BTreeMap<u32, TissueDepth>) -> Result<Self> {
        for (id, e) in &entries {
            if !(e.depth > 0.0 && e.depth.is_finite()) || !(e.eta > 0.0 && e.eta.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "tissue depth {id}: depth and threshold must be positive, got {} and {}",
                    e.depth, e.eta
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Placeholder depths for the synthetic 18-landmark inventory.
    ///
    /// These are SYNTHETIC values in a plausible adult range, not a published
    /// forensic table.
    pub fn synthetic() -> Self {
        let depths = [
            4.5, 5.5, 6.5, 3.0, 11.0, 12.0, 13.0, 11.0, 11.5, 7.5, 6.0, 6.0, 6.5, 6.5, 13.0, 13.0, 12.0, 12.0,
        ];
        let entries = depths
            .iter()
            .enumerate()
            .map(|(i, &depth)| (i as u32 + 1, TissueDepth { depth, eta: DEFAULT_ETA }))
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<TissueDepth> {
        self.entries.get(&id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    /// Depth of the forehead landmark.
    pub fn forehead_depth(&self) -> Result<f64> {
        self.get(FOREHEAD_ID)
            .map(|e| e.depth)
            .ok_or(Error::MissingIds { ids: vec![FOREHEAD_ID] })
    }

    /// Same table with every threshold replaced.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.entries.iter().map(|(&id, e)| (id, TissueDepth { depth: e.depth, eta })).collect())
    }

    /// Errors if any id is not an anthropometric landmark of `model`.
    pub fn check_ids(&self, model: &FaceModel) -> Result<()> {
        let ids: Vec<u32> = self.ids().filter(|id| !model.anthropometric_map.contains_key(id)).collect();
        if ids.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingIds { ids })
        }
    }

    /// Parses `id,depth_mm[,eta_mm]` rows. Blank lines, `#` comments and a
    /// header row starting with `id` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.to_ascii_lowercase().starts_with("id") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(Error::parse(path, k + 1, format!("expected id,depth_mm[,eta_mm], got {line:?}")));
            }
            let id: u32 = cols[0].parse().map_err(|_| Error::parse(path, k + 1, format!("bad id {:?}", cols[0])))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(path, k + 1, format!("bad number {s:?}")));
            let depth = num(cols[1])?;
            let eta = if cols.len() == 3 { num(cols[2])? } else { DEFAULT_ETA };
            if !(depth > 0.0 && depth.is_finite()) || !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::parse(path, k + 1, "depth and threshold must be positive"));
            }
            if entries.insert(id, TissueDepth { depth, eta }).is_some() {
                return Err(Error::parse(path, k + 1, format!("id {id} appears twice")));
            }
        }
        if entries.is_empty() {
            return Err(Error::parse(path, 0, "no tissue depth rows"));
        }
        Self::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,depth_mm,eta_mm\n");
        for (id, e) in &self.entries {
            let _ = writeln!(out, "{id},{},{}", e.depth, e.eta);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_default_eta() {
        let t = TissueDepthTable::parse("id,depth_mm,eta_mm\n1,4.5\n2, 6.0, 1.5 # nasion-ish\n", Path::new("d.csv")).unwrap();
        assert_eq!(t.get(1), Some(TissueDepth { depth: 4.5, eta: DEFAULT_ETA }));
        assert_eq!(t.get(2), Some(TissueDepth { depth: 6.0, eta: 1.5 }));
        let back = TissueDepthTable::parse(&t.to_csv(), Path::new("d.csv")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn zero_depth_rejected_with_line() {
        let err = TissueDepthTable::parse("1,4\n2,0\n", Path::new("d.csv")).unwrap_err();
        assert!(err.to_string().contains("d.csv:2"), "{err}");
        let mut m = BTreeMap::new();
        m.insert(3, TissueDepth { depth: 0.0, eta: 1.0 });
        assert!(TissueDepthTable::new(m).is_err());
    }

    #[test]
    fn synthetic_table_is_valid() {
        let t = TissueDepthTable::synthetic();
        assert_eq!(t.len(), 18);
        assert!(TissueDepthTable::new(t.entries.clone()).is_ok());
        assert_eq!(t.forehead_depth().unwrap(), 4.5);
    }
}
