//! Face regions on the template topology and the choice of regions to redo.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::model::synth::HEAD_RADII;
use crate::model::FaceModel;
use crate::superimpose::definite::{is_back_of_head, is_forehead};
use crate::superimpose::SuperimpositionResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    /// Tissue depth treated as constant here.
    pub definite: bool,
    pub landmarks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub topology_id: String,
    pub regions: Vec<Region>,
    /// Region index of every vertex.
    pub labels: Vec<usize>,
}

/// When a region counts as poorly matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionPolicy {
    /// At least one associated landmark is unmatched.
    #[default]
    Any,
    /// More than half of the associated landmarks are unmatched.
    Majority,
}

impl std::str::FromStr for RegionPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(Self::Any),
            "majority" => Ok(Self::Majority),
            other => Err(Error::Config(format!("unknown region policy {other:?} (any|majority)"))),
        }
    }
}

pub const REGION_NAMES: [&str; 9] = [
    "forehead",
    "cranium",
    "nose",
    "mouth",
    "chin",
    "orbit_left",
    "orbit_right",
    "cheek_left",
    "cheek_right",
];

/// Region of a point on the mean head.
fn synthetic_region(p: &Point3) -> usize {
    let u = p.x / HEAD_RADII[0];
    let v = p.y / HEAD_RADII[1];
    let side = usize::from(u >= 0.0);
    if is_back_of_head(p) {
        1
    } else if is_forehead(p) {
        0
    } else if u.abs() < 0.2 && v < 0.15 {
        2
    } else if v >= 0.62 || (u.abs() >= 0.6 && v >= 0.3) {
        4
    } else if u.abs() < 0.45 && v >= 0.15 {
        3
    } else if v < -0.05 {
        5 + side
    } else {
        7 + side
    }
}

impl Segmentation {
    /// Checks label range and that every landmark sits in exactly one region.
    pub fn new(topology_id: impl Into<String>, regions: Vec<Region>, labels: Vec<usize>) -> Result<Self> {
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= regions.len()) {
            return Err(Error::InvalidInput(format!("vertex {v} has region {l}, only {} regions", regions.len())));
        }
        let mut seen = BTreeSet::new();
        for r in &regions {
            for id in &r.landmarks {
                if !seen.insert(*id) {
                    return Err(Error::InvalidInput(format!("landmark {id} is listed in more than one region")));
                }
            }
        }
        Ok(Self {
            topology_id: topology_id.into(),
            regions,
            labels,
        })
    }

    /// Nine-region segmentation of the synthetic head, with each
    /// anthropometric landmark assigned to the region of its vertex.
    pub fn synthetic(model: &FaceModel) -> Self {
        let labels: Vec<usize> = model.mean.vertices.iter().map(synthetic_region).collect();
        let mut regions: Vec<Region> = REGION_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| Region {
                name: name.to_string(),
                definite: k < 2,
                landmarks: Vec::new(),
            })
            .collect();
        for (&id, &v) in &model.anthropometric_map {
            regions[labels[v]].landmarks.push(id);
        }
        Self::new(model.topology_id(), regions, labels).expect("synthetic segmentation is consistent")
    }

    pub fn region_of_landmark(&self, id: u32) -> Option<usize> {
        self.regions.iter().position(|r| r.landmarks.contains(&id))
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    /// Vertices of the given regions.
    pub fn vertices_in(&self, regions: &BTreeSet<usize>) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| regions.contains(l))
            .map(|(v, _)| v)
            .collect()
    }

    /// Vertices of definite regions, minus `exclude`.
    pub fn definite_vertices(&self, exclude: &BTreeSet<usize>) -> Vec<usize> {
        let definite: BTreeSet<usize> = (0..self.regions.len()).filter(|&r| self.regions[r].definite).collect();
        self.vertices_in(&definite).into_iter().filter(|v| !exclude.contains(v)).collect()
    }

    /// Text form: `region <name> [definite] [landmarks=1,2]` lines in index
    /// order, then `labels <count>` and one label per vertex.
    pub fn to_text(&self) -> String {
        let mut out = format!("topology {}\n", self.topology_id);
        for r in &self.regions {
            let _ = write!(out, "region {}", r.name);
            if r.definite {
                out.push_str(" definite");
            }
            if !r.landmarks.is_empty() {
                let ids: Vec<String> = r.landmarks.iter().map(u32::to_string).collect();
                let _ = write!(out, " landmarks={}", ids.join(","));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "labels {}", self.labels.len());
        for chunk in self.labels.chunks(32) {
            let row: Vec<String> = chunk.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut topology = None;
        let mut regions = Vec::new();
        let mut labels: Option<(usize, Vec<usize>)> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(path, k + 1, m);
            if let Some((expected, ref mut out)) = labels {
                for tok in line.split_whitespace() {
                    out.push(tok.parse().map_err(|_| err(format!("bad label {tok:?}")))?);
                }
                if out.len() > expected {
                    return Err(err(format!("more than {expected} labels")));
                }
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next() {
                Some("topology") => topology = words.next().map(str::to_string),
                Some("region") => {
                    let name = words.next().ok_or_else(|| err("region without a name".into()))?.to_string();
                    let mut region = Region {
                        name,
                        definite: false,
                        landmarks: Vec::new(),
                    };
                    for w in words {
                        if w == "definite" {
                            region.definite = true;
                        } else if let Some(list) = w.strip_prefix("landmarks=") {
                            for id in list.split(',').filter(|s| !s.is_empty()) {
                                region.landmarks.push(id.parse().map_err(|_| err(format!("bad landmark id {id:?}")))?);
                            }
                        } else {
                            return Err(err(format!("unexpected token {w:?}")));
                        }
                    }
                    regions.push(region);
                }
                Some("labels") => {
                    let n = words
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("labels needs a vertex count".into()))?;
                    labels = Some((n, Vec::with_capacity(n)));
                }
                Some(other) => return Err(err(format!("unknown directive {other:?}"))),
                None => {}
            }
        }
        let (n, labels) = labels.ok_or_else(|| Error::parse(path, 0, "missing labels section"))?;
        if labels.len() != n {
            return Err(Error::parse(path, 0, format!("expected {n} labels, got {}", labels.len())));
        }
        let topology = topology.ok_or_else(|| Error::parse(path, 0, "missing topology line"))?;
        Self::new(topology, regions, labels).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Regions whose landmarks match poorly under `policy`.
pub fn select_unmatched_regions(
    seg: &Segmentation,
    sup: &SuperimpositionResult,
    policy: RegionPolicy,
) -> Result<BTreeSet<usize>> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut unmapped = Vec::new();
    for l in &sup.landmarks {
        match seg.region_of_landmark(l.id) {
            Some(r) => {
                let c = counts.entry(r).or_default();
                c.0 += 1;
                c.1 += usize::from(!l.matched);
            }
            None => unmapped.push(l.id),
        }
    }
    if !unmapped.is_empty() {
        return Err(Error::MissingIds { ids: unmapped });
    }
    Ok(counts
        .into_iter()
        .filter(|(_, (total, bad))| match policy {
            RegionPolicy::Any => *bad >= 1,
            RegionPolicy::Majority => 2 * bad > *total,
        })
        .map(|(r, _)| r)
        .collect())
}
