//! Segmented cells and per-section tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One segmented cross-section of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    /// Planar centroid, µm.
    pub x: f64,
    pub y: f64,
    /// Section depth, µm.
    pub z: f64,
    /// Cross-section area, µm².
    pub area: f64,
    #[serde(rename = "type")]
    pub type_label: String,
    #[serde(rename = "section")]
    pub section_index: i64,
    /// Identity of the biological cell, when known (reference stacks only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_volume_id: Option<String>,
}

impl CellRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cell {} has non-finite coordinates",
                self.cell_id
            )));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cell {} has non-positive area {}",
                self.cell_id, self.area
            )));
        }
        Ok(())
    }

    /// Radius of the disc with the same area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area / std::f64::consts::PI).sqrt()
    }

    pub fn planar_distance(&self, other: &CellRecord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTable {
    pub section_index: i64,
    pub z: f64,
    pub cells: Vec<CellRecord>,
}

impl SectionTable {
    pub fn new(section_index: i64, z: f64, cells: Vec<CellRecord>) -> Result<Self> {
        for c in &cells {
            c.validate()?;
            if c.section_index != section_index || c.z != z {
                return Err(Error::InvalidInput(format!(
                    "cell {} belongs to section {} at z={}, not section {section_index} at z={z}",
                    c.cell_id, c.section_index, c.z
                )));
            }
        }
        Ok(Self {
            section_index,
            z,
            cells,
        })
    }

    pub fn count_type(&self, type_label: &str) -> usize {
        self.cells.iter().filter(|c| c.type_label == type_label).count()
    }
}

/// Groups cells into sections ordered by depth.
///
/// Cell ids must be unique and every section index must map to one depth.
pub fn group_into_sections(cells: Vec<CellRecord>) -> Result<Vec<SectionTable>> {
    let mut seen = std::collections::HashSet::with_capacity(cells.len());
    let mut by_index: BTreeMap<i64, (f64, Vec<CellRecord>)> = BTreeMap::new();
    for c in cells {
        c.validate()?;
        if !seen.insert(c.cell_id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate cell_id {}", c.cell_id)));
        }
        let entry = by_index.entry(c.section_index).or_insert((c.z, Vec::new()));
        if entry.0 != c.z {
            return Err(Error::InvalidInput(format!(
                "section {} has cells at z={} and z={}",
                c.section_index, entry.0, c.z
            )));
        }
        entry.1.push(c);
    }
    let mut out: Vec<SectionTable> = by_index
        .into_iter()
        .map(|(idx, (z, cells))| SectionTable {
            section_index: idx,
            z,
            cells,
        })
        .collect();
    out.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.section_index.cmp(&b.section_index)));
    Ok(out)
}

/// All cells of all sections, in section order.
pub fn flatten(sections: &[SectionTable]) -> Vec<CellRecord> {
    sections.iter().flat_map(|s| s.cells.iter().cloned()).collect()
}

/// Sorted distinct type labels.
pub fn type_labels<'a>(cells: impl IntoIterator<Item = &'a CellRecord>) -> Vec<String> {
    let mut t: Vec<String> = cells.into_iter().map(|c| c.type_label.clone()).collect();
    t.sort();
    t.dedup();
    t
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
pub(crate) fn cell(id: &str, x: f64, y: f64, z: f64, area: f64, t: &str, section: i64) -> CellRecord {
    CellRecord {
        cell_id: id.to_string(),
        x,
        y,
        z,
        area,
        type_label: t.to_string(),
        section_index: section,
        true_volume_id: None,
    }
}
