//! Section-level statistics: abundance, detectability under repeated
//! section draws, and neighbourhood enrichment against a label-permutation
//! null.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{percentile_sorted, CellRecord, SectionTable};
use crate::error::{Error, Result};
use crate::lattice::LabelVolume;
use crate::rng;
use crate::spatial_index::GridIndex;

/// Fraction of cells of each type.
pub fn abundance<'a>(cells: impl IntoIterator<Item = &'a CellRecord>) -> Result<BTreeMap<String, f64>> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0usize;
    for c in cells {
        *counts.entry(c.type_label.clone()).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("abundance of an empty cell set".into()));
    }
    Ok(counts
        .into_iter()
        .map(|(t, c)| (t, c as f64 / n as f64))
        .collect())
}

/// Fraction of trials in which `m` sections drawn without replacement
/// contain at least `k` cells of `type_label` between them.
///
/// Trial `t` shuffles the section order with its own stream
/// (`derive_seed(seed, t)`) and takes the first `m`, so draws for
/// different `m` or `k` with the same seed are nested.
pub fn detectability(
    sections: &[SectionTable],
    type_label: &str,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("detectability needs trials >= 1".into()));
    }
    if m == 0 || m > sections.len() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {m} sections from {}",
            sections.len()
        )));
    }
    let counts: Vec<usize> = sections.iter().map(|s| s.count_type(type_label)).collect();
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut order: Vec<usize> = (0..counts.len()).collect();
            order.shuffle(&mut rng::child_stream(seed, t as u64));
            order[..m].iter().map(|&i| counts[i]).sum::<usize>() >= k
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub target_type: String,
    pub partner_type: String,
    pub z_score: f64,
    pub observed_count: usize,
    pub null_mean: f64,
    pub null_std: f64,
    pub radius: f64,
    pub n_permutations: usize,
    /// Null had zero spread; `z_score` is reported as 0.
    pub degenerate_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentOutcome {
    pub section_index: i64,
    pub results: Vec<EnrichmentResult>,
    /// The section had no cell of the target type.
    pub no_target: bool,
}

/// Directed `(anchor, neighbour)` pairs within `radius`, self excluded.
fn radius_pairs(cells: &[CellRecord], radius: f64) -> Vec<(u32, u32)> {
    let index = GridIndex::planar(cells.iter().map(|c| (c.x, c.y)), radius);
    let mut pairs = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        index.for_each_within([c.x, c.y, 0.0], radius, |j, _| {
            if j != i {
                pairs.push((i as u32, j as u32));
            }
        });
    }
    pairs.sort_unstable();
    pairs
}

fn count_pairs(pairs: &[(u32, u32)], labels: &[u32], target: u32, out: &mut [usize]) {
    out.iter_mut().for_each(|v| *v = 0);
    for &(i, j) in pairs {
        if labels[i as usize] == target {
            out[labels[j as usize] as usize] += 1;
        }
    }
}

/// Enrichment of every partner type around `target_type` within `radius`.
///
/// The observed statistic for partner `p` counts pairs anchored at target
/// cells with a `p` cell within `radius` (planar, inclusive). The null
/// shuffles all type labels over the fixed positions; permutation `r` uses
/// stream `derive_seed(seed, r)`. Partners are every type present in the
/// section, the target included.
pub fn neighborhood_enrichment(
    section: &SectionTable,
    target_type: &str,
    radius: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<EnrichmentOutcome> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("radius must be > 0, got {radius}")));
    }
    if n_permutations < 2 {
        return Err(Error::InvalidInput("need at least 2 permutations".into()));
    }
    let types = crate::cells::type_labels(&section.cells);
    let Some(target) = types.iter().position(|t| t == target_type) else {
        return Ok(EnrichmentOutcome {
            section_index: section.section_index,
            results: Vec::new(),
            no_target: true,
        });
    };
    let labels: Vec<u32> = section
        .cells
        .iter()
        .map(|c| types.binary_search(&c.type_label).unwrap() as u32)
        .collect();
    let pairs = radius_pairs(&section.cells, radius);
    let nt = types.len();
    let target = target as u32;

    let mut observed = vec![0usize; nt];
    count_pairs(&pairs, &labels, target, &mut observed);

    let null: Vec<Vec<usize>> = (0..n_permutations)
        .into_par_iter()
        .map(|r| {
            let mut perm = labels.clone();
            perm.shuffle(&mut rng::child_stream(seed, r as u64));
            let mut c = vec![0usize; nt];
            count_pairs(&pairs, &perm, target, &mut c);
            c
        })
        .collect();

    let results = (0..nt)
        .map(|p| {
            let n = n_permutations as f64;
            let mean = null.iter().map(|c| c[p] as f64).sum::<f64>() / n;
            let var = null
                .iter()
                .map(|c| (c[p] as f64 - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            let std = var.sqrt();
            let degenerate = !(std > 0.0);
            EnrichmentResult {
                target_type: target_type.to_string(),
                partner_type: types[p].clone(),
                z_score: if degenerate {
                    0.0
                } else {
                    (observed[p] as f64 - mean) / std
                },
                observed_count: observed[p],
                null_mean: mean,
                null_std: std,
                radius,
                n_permutations,
                degenerate_null: degenerate,
            }
        })
        .collect();
    Ok(EnrichmentOutcome {
        section_index: section.section_index,
        results,
        no_target: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerStability {
    pub partner_type: String,
    /// Indexed like the input sections; `None` where the section has no
    /// target cell or lacks the partner type.
    pub z_by_section: Vec<Option<f64>>,
    /// Interquartile range of the defined z-scores.
    pub iqr: Option<f64>,
    pub frac_abs_z_above_2: Option<f64>,
    /// Fewer than two sections gave a z-score.
    pub spread_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub target_type: String,
    pub section_indices: Vec<i64>,
    pub partners: Vec<PartnerStability>,
}

impl StabilityProfile {
    /// Median over partners of the per-partner IQR.
    pub fn median_iqr(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.partners.iter().filter_map(|p| p.iqr).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(percentile_sorted(&v, 0.5))
    }
}

/// Per-section enrichment z-scores and their spread across sections.
///
/// Every section is scored with the same permutation seed, so identical
/// sections produce identical z-scores.
pub fn section_stability_profile(
    sections: &[SectionTable],
    target_type: &str,
    radius: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<StabilityProfile> {
    let outcomes = sections
        .iter()
        .map(|s| neighborhood_enrichment(s, target_type, radius, n_permutations, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(stability_from_outcomes(target_type, &outcomes))
}

/// Spread of per-section enrichment outcomes already computed for one target.
pub fn stability_from_outcomes(target_type: &str, outcomes: &[EnrichmentOutcome]) -> StabilityProfile {
    let mut partners: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.results.iter().map(|r| r.partner_type.clone()))
        .collect();
    partners.sort();
    partners.dedup();

    let partners = partners
        .into_iter()
        .map(|p| {
            let z_by_section: Vec<Option<f64>> = outcomes
                .iter()
                .map(|o| o.results.iter().find(|r| r.partner_type == p).map(|r| r.z_score))
                .collect();
            let mut defined: Vec<f64> = z_by_section.iter().flatten().copied().collect();
            defined.sort_by(f64::total_cmp);
            let spread_undefined = defined.len() < 2;
            let (iqr, frac) = if spread_undefined {
                (None, None)
            } else {
                let iqr = percentile_sorted(&defined, 0.75) - percentile_sorted(&defined, 0.25);
                let frac = defined.iter().filter(|z| z.abs() > 2.0).count() as f64 / defined.len() as f64;
                (Some(iqr), Some(frac))
            };
            PartnerStability {
                partner_type: p,
                z_by_section,
                iqr,
                frac_abs_z_above_2: frac,
                spread_undefined,
            }
        })
        .collect();
    StabilityProfile {
        target_type: target_type.to_string(),
        section_indices: outcomes.iter().map(|o| o.section_index).collect(),
        partners,
    }
}

/// Treats each `z`-plane of a label volume as a section of cells on a
/// square grid with pitch `voxel_um`. Types are named `"1"..="K"`.
pub fn sections_from_volume(volume: &LabelVolume, voxel_um: f64) -> Vec<SectionTable> {
    let spec = volume.spec();
    let [nx, ny, nz] = spec.dims;
    (0..nz)
        .map(|k| {
            let z = k as f64 * voxel_um;
            let cells = (0..ny)
                .flat_map(|j| (0..nx).map(move |i| (i, j)))
                .map(|(i, j)| CellRecord {
                    cell_id: format!("v{}", spec.index([i, j, k])),
                    x: i as f64 * voxel_um,
                    y: j as f64 * voxel_um,
                    z,
                    area: voxel_um * voxel_um,
                    type_label: (volume.label([i, j, k]) + 1).to_string(),
                    section_index: k as i64,
                    true_volume_id: None,
                })
                .collect();
            SectionTable {
                section_index: k as i64,
                z,
                cells,
            }
        })
        .collect()
}
