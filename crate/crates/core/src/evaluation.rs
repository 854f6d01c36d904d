//! Subsampling a dense reference stack and scoring the reconstruction.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{percentile_sorted, CellRecord, SectionTable};
use crate::error::{Error, Result};
use crate::matching::{reconstruct, MatchingConfig, Provenance};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereType {
    pub type_label: String,
    pub r_min: f64,
    pub r_max: f64,
    /// Relative frequency.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereStackConfig {
    pub n_cells: usize,
    pub types: Vec<SphereType>,
    /// Extent in µm; sections span `z` in `[0, dims[2]]`.
    pub volume_dims: [f64; 3],
    pub base_dz: f64,
    pub seed: u64,
    /// Minimum centre distance as a multiple of the summed radii.
    #[serde(default = "one")]
    pub min_separation: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub id: String,
    pub center: [f64; 3],
    pub radius: f64,
    pub type_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStack {
    pub base_dz: f64,
    /// Every section on the base grid, empty ones included, by depth.
    pub sections: Vec<SectionTable>,
    /// Reference centroid per true id.
    pub centroids: BTreeMap<String, [f64; 3]>,
    /// Generated objects that no base section intersects.
    pub unsectioned: usize,
}

impl ReferenceStack {
    /// Builds a reference from cross-sections carrying `true_volume_id`.
    ///
    /// Without explicit centroids, each id's centroid is the area-weighted
    /// mean of its cross-sections.
    pub fn from_cells(
        cells: Vec<CellRecord>,
        base_dz: f64,
        centroids: Option<BTreeMap<String, [f64; 3]>>,
    ) -> Result<Self> {
        if !(base_dz > 0.0 && base_dz.is_finite()) {
            return Err(Error::InvalidInput(format!("base_dz must be positive, got {base_dz}")));
        }
        let mut acc: BTreeMap<String, [f64; 4]> = BTreeMap::new();
        for c in &cells {
            let id = c.true_volume_id.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("reference cell {} lacks true_volume_id", c.cell_id))
            })?;
            let e = acc.entry(id.clone()).or_insert([0.0; 4]);
            e[0] += c.area * c.x;
            e[1] += c.area * c.y;
            e[2] += c.area * c.z;
            e[3] += c.area;
        }
        let centroids = match centroids {
            Some(m) => {
                if let Some(id) = acc.keys().find(|id| !m.contains_key(*id)) {
                    return Err(Error::InvalidInput(format!("no reference centroid for id {id}")));
                }
                m.into_iter().filter(|(id, _)| acc.contains_key(id)).collect()
            }
            None => acc
                .into_iter()
                .map(|(id, e)| (id, [e[0] / e[3], e[1] / e[3], e[2] / e[3]]))
                .collect(),
        };
        let mut sections = crate::cells::group_into_sections(cells)?;
        if let (Some(first), Some(last)) = (sections.first(), sections.last()) {
            // fill empty planes so the stack sits on a regular grid
            let (z0, z1) = (first.z, last.z);
            let n = ((z1 - z0) / base_dz).round() as i64;
            let mut by_step: BTreeMap<i64, SectionTable> = BTreeMap::new();
            for s in sections.drain(..) {
                let k = (s.z - z0) / base_dz;
                if (k - k.round()).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "section at z={} is off the {base_dz} grid",
                        s.z
                    )));
                }
                by_step.insert(k.round() as i64, s);
            }
            let max_index = by_step.values().map(|s| s.section_index).max().unwrap_or(0);
            let mut next_index = max_index + 1;
            for k in 0..=n {
                let s = by_step.remove(&k).unwrap_or_else(|| {
                    next_index += 1;
                    SectionTable {
                        section_index: next_index - 1,
                        z: z0 + k as f64 * base_dz,
                        cells: Vec::new(),
                    }
                });
                sections.push(s);
            }
        }
        Ok(Self {
            base_dz,
            sections,
            centroids,
            unsectioned: 0,
        })
    }

    pub fn reference_ids(&self) -> impl Iterator<Item = &String> {
        self.centroids.keys()
    }

    pub fn cells(&self) -> Vec<CellRecord> {
        crate::cells::flatten(&self.sections)
    }
}

/// Random non-overlapping spheres sliced every `base_dz`.
///
/// Reference ids are the spheres cut by at least one base section, so the
/// dense stack covers its own reference set completely.
pub fn synth_sphere_stack(config: &SphereStackConfig) -> Result<(ReferenceStack, Vec<Sphere>)> {
    let [dx, dy, dz] = config.volume_dims;
    if !(config.base_dz > 0.0 && dx > 0.0 && dy > 0.0 && dz >= 0.0) {
        return Err(Error::InvalidInput("sphere stack needs positive extents and base_dz".into()));
    }
    if config.types.is_empty() {
        return Err(Error::InvalidInput("sphere stack needs at least one type".into()));
    }
    for t in &config.types {
        if !(t.r_min > 0.0 && t.r_min <= t.r_max && t.weight > 0.0) {
            return Err(Error::InvalidInput(format!("bad radius range for type {}", t.type_label)));
        }
    }
    let total_w: f64 = config.types.iter().map(|t| t.weight).sum();
    let mut rng = rng::stream(config.seed);
    let mut spheres: Vec<Sphere> = Vec::with_capacity(config.n_cells);
    let mut attempts = 0;
    while spheres.len() < config.n_cells {
        attempts += 1;
        if attempts > config.max_attempts {
            return Err(Error::InvalidInput(format!(
                "placed only {} of {} spheres after {} attempts",
                spheres.len(),
                config.n_cells,
                config.max_attempts
            )));
        }
        let mut u = rng.random_range(0.0..total_w);
        let t = config
            .types
            .iter()
            .find(|t| {
                u -= t.weight;
                u < 0.0
            })
            .unwrap_or(&config.types[config.types.len() - 1]);
        let r = if t.r_max > t.r_min {
            rng.random_range(t.r_min..t.r_max)
        } else {
            t.r_min
        };
        let c = [
            rng.random_range(0.0..dx),
            rng.random_range(0.0..dy),
            rng.random_range(0.0..dz.max(f64::MIN_POSITIVE)),
        ];
        let clear = spheres.iter().all(|s| {
            crate::spatial_index::dist(&s.center, &c) >= config.min_separation * (s.radius + r)
        });
        if clear {
            spheres.push(Sphere {
                id: format!("c{}", spheres.len()),
                center: c,
                radius: r,
                type_label: t.type_label.clone(),
            });
        }
    }

    let stack = slice_spheres(&spheres, dz, config.base_dz)?;
    Ok((stack, spheres))
}

/// Cross-sections of `spheres` on planes `z = k * base_dz` spanning `[0, depth]`.
pub fn slice_spheres(spheres: &[Sphere], depth: f64, base_dz: f64) -> Result<ReferenceStack> {
    if !(base_dz > 0.0 && depth >= 0.0) {
        return Err(Error::InvalidInput("slicing needs base_dz > 0 and depth >= 0".into()));
    }
    let n_planes = (depth / base_dz).floor() as i64 + 1;
    let mut sections: Vec<SectionTable> = (0..n_planes)
        .map(|k| SectionTable {
            section_index: k,
            z: k as f64 * base_dz,
            cells: Vec::new(),
        })
        .collect();
    let mut centroids = BTreeMap::new();
    let mut unsectioned = 0;
    for s in spheres {
        let mut cut = false;
        let lo = ((s.center[2] - s.radius) / base_dz).ceil().max(0.0) as i64;
        let hi = ((s.center[2] + s.radius) / base_dz).floor().min((n_planes - 1) as f64) as i64;
        for k in lo..=hi {
            let z = k as f64 * base_dz;
            let d = z - s.center[2];
            let r2 = s.radius * s.radius - d * d;
            if r2 <= 0.0 {
                continue;
            }
            cut = true;
            sections[k as usize].cells.push(CellRecord {
                cell_id: format!("{}_s{k}", s.id),
                x: s.center[0],
                y: s.center[1],
                z,
                area: std::f64::consts::PI * r2,
                type_label: s.type_label.clone(),
                section_index: k,
                true_volume_id: Some(s.id.clone()),
            });
        }
        if cut {
            centroids.insert(s.id.clone(), s.center);
        } else {
            unsectioned += 1;
        }
    }
    Ok(ReferenceStack {
        base_dz,
        sections,
        centroids,
        unsectioned,
    })
}

fn steps(value: f64, base: f64, what: &str) -> Result<usize> {
    let k = value / base;
    if !(k.is_finite() && k >= 0.0 && (k - k.round()).abs() <= 1e-9 * k.max(1.0)) {
        return Err(Error::InvalidInput(format!(
            "{what} {value} is not a multiple of the base spacing {base}"
        )));
    }
    Ok(k.round() as usize)
}

/// Every admissible offset for `delta_z`: `0, base, ..., delta_z - base`.
pub fn all_offsets(base_dz: f64, delta_z: f64) -> Result<Vec<f64>> {
    let n = steps(delta_z, base_dz, "delta_z")?;
    Ok((0..n).map(|k| k as f64 * base_dz).collect())
}

/// Sections whose base-grid position is congruent to `offset` modulo
/// `delta_z`, measured from the first section.
pub fn subsample_stack(reference: &ReferenceStack, delta_z: f64, offset: f64) -> Result<Vec<SectionTable>> {
    let base = reference.base_dz;
    let step = steps(delta_z, base, "delta_z")?;
    if step == 0 {
        return Err(Error::InvalidInput("delta_z must be positive".into()));
    }
    let off = steps(offset, base, "offset")?;
    if off >= step {
        return Err(Error::InvalidInput(format!(
            "offset {offset} must be smaller than delta_z {delta_z}"
        )));
    }
    Ok(reference
        .sections
        .iter()
        .enumerate()
        .filter(|(k, _)| k % step == off)
        .map(|(_, s)| s.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl LocalizationSummary {
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self {
                n: 0,
                mean: f64::NAN,
                std: f64::NAN,
                p50: f64::NAN,
                p90: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = errors.len();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut s = errors.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            n,
            mean,
            std,
            p50: percentile_sorted(&s, 0.5),
            p90: percentile_sorted(&s, 0.9),
            max: s[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub delta_z: f64,
    /// `None` for the pooled report.
    pub offset: Option<f64>,
    pub sampled_cells: usize,
    pub sc_cells: usize,
    pub lc_cells: usize,
    pub sc_fraction: f64,
    pub lc_fraction: f64,
    pub total_ids: usize,
    pub captured: usize,
    pub missed: usize,
    pub captured_fraction: f64,
    pub missed_fraction: f64,
    pub chains: usize,
    /// Chains whose members belong to more than one true id.
    pub link_errors: usize,
    pub localization: LocalizationSummary,
    /// Per-chain 3D centroid errors, µm.
    pub errors: Vec<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl CoverageReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        delta_z: f64,
        offset: Option<f64>,
        sc_cells: usize,
        lc_cells: usize,
        total_ids: usize,
        captured: usize,
        chains: usize,
        link_errors: usize,
        errors: Vec<f64>,
    ) -> Self {
        let sampled = sc_cells + lc_cells;
        let missed = total_ids - captured;
        Self {
            delta_z,
            offset,
            sampled_cells: sampled,
            sc_cells,
            lc_cells,
            sc_fraction: ratio(sc_cells, sampled),
            lc_fraction: if sampled == 0 { 0.0 } else { 1.0 - ratio(sc_cells, sampled) },
            total_ids,
            captured,
            missed,
            captured_fraction: ratio(captured, total_ids),
            missed_fraction: if total_ids == 0 { 0.0 } else { 1.0 - ratio(captured, total_ids) },
            chains,
            link_errors,
            localization: LocalizationSummary::from_errors(&errors),
            errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_offset: Vec<CoverageReport>,
    pub pooled: CoverageReport,
}

/// Majority true id of a chain; ties go to the largest-area member's id.
fn attribute(members: &[CellRecord]) -> Option<(&str, bool)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in members {
        *counts.entry(m.true_volume_id.as_deref()?).or_default() += 1;
    }
    let best = *counts.values().max()?;
    let tied: BTreeSet<&str> = counts.iter().filter(|(_, &c)| c == best).map(|(id, _)| *id).collect();
    let id = if tied.len() == 1 {
        *tied.iter().next()?
    } else {
        members
            .iter()
            .filter(|m| tied.contains(m.true_volume_id.as_deref().unwrap_or("")))
            .max_by(|a, b| a.area.total_cmp(&b.area))?
            .true_volume_id
            .as_deref()?
    };
    Some((id, counts.len() > 1))
}

pub fn evaluate_offset(
    reference: &ReferenceStack,
    delta_z: f64,
    offset: f64,
    config: &MatchingConfig,
) -> Result<CoverageReport> {
    let stack = subsample_stack(reference, delta_z, offset)?;
    let total_ids = reference.centroids.len();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for s in &stack {
        for c in &s.cells {
            if let Some(id) = c.true_volume_id.as_deref() {
                if reference.centroids.contains_key(id) {
                    seen.insert(id);
                }
            }
        }
    }
    let captured = seen.len();
    let (sc, lc, chains, link_errors, errors) = if stack.iter().all(|s| s.cells.is_empty()) {
        (0, 0, 0, 0, Vec::new())
    } else {
        let rec = reconstruct(&stack, delta_z, config)?;
        let (mut sc, mut lc, mut link_errors) = (0, 0, 0);
        let mut errors = Vec::new();
        for (chain, p) in rec.chains.iter().zip(&rec.points) {
            match chain.provenance() {
                Provenance::SC => sc += chain.len(),
                Provenance::LC => lc += chain.len(),
            }
            match attribute(&chain.members) {
                Some((_, true)) => link_errors += 1,
                Some((id, false)) => {
                    if let Some(c) = reference.centroids.get(id) {
                        errors.push(crate::spatial_index::dist(&[p.x, p.y, p.z], c));
                    }
                }
                None => {}
            }
        }
        (sc, lc, rec.chains.len(), link_errors, errors)
    };
    Ok(CoverageReport::build(
        delta_z,
        Some(offset),
        sc,
        lc,
        total_ids,
        captured,
        chains,
        link_errors,
        errors,
    ))
}

/// Coverage and localization per offset, plus a pooled report from summed
/// counts and concatenated errors.
pub fn evaluate(
    reference: &ReferenceStack,
    delta_z: f64,
    offsets: &[f64],
    config: &MatchingConfig,
) -> Result<Evaluation> {
    if offsets.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one offset".into()));
    }
    let per_offset: Vec<CoverageReport> = offsets
        .par_iter()
        .map(|&o| evaluate_offset(reference, delta_z, o, config))
        .collect::<Result<_>>()?;
    let sum = |f: fn(&CoverageReport) -> usize| per_offset.iter().map(f).sum::<usize>();
    let errors: Vec<f64> = per_offset.iter().flat_map(|r| r.errors.iter().copied()).collect();
    let pooled = CoverageReport::build(
        delta_z,
        None,
        sum(|r| r.sc_cells),
        sum(|r| r.lc_cells),
        sum(|r| r.total_ids),
        sum(|r| r.captured),
        sum(|r| r.chains),
        sum(|r| r.link_errors),
        errors,
    );
    Ok(Evaluation { per_offset, pooled })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width histogram from 0 up to the largest value.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {bin_width}")));
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let n = ((max / bin_width).floor() as usize + 1).max(1);
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|k| HistogramBin {
            lo: k as f64 * bin_width,
            hi: (k + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &v in values {
        let k = ((v.max(0.0) / bin_width).floor() as usize).min(n - 1);
        bins[k].count += 1;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_type(r_min: f64, r_max: f64) -> Vec<SphereType> {
        vec![SphereType {
            type_label: "A".into(),
            r_min,
            r_max,
            weight: 1.0,
        }]
    }

    fn single_sphere(r: f64, z: f64) -> ReferenceStack {
        let cells: Vec<CellRecord> = (0..=10)
            .filter_map(|k| {
                let zk = 2.0 * k as f64;
                let r2 = r * r - (zk - z).powi(2);
                (r2 > 0.0).then(|| CellRecord {
                    cell_id: format!("s{k}"),
                    x: 5.0,
                    y: 5.0,
                    z: zk,
                    area: std::f64::consts::PI * r2,
                    type_label: "A".into(),
                    section_index: k,
                    true_volume_id: Some("c0".into()),
                })
            })
            .collect();
        let mut centroids = BTreeMap::new();
        centroids.insert("c0".to_string(), [5.0, 5.0, z]);
        ReferenceStack::from_cells(cells, 2.0, Some(centroids)).unwrap()
    }

    #[test]
    fn one_sphere_slices() {
        let s = single_sphere(5.0, 10.0);
        let zs: Vec<f64> = s.sections.iter().map(|t| t.z).collect();
        assert_eq!(zs, vec![6.0, 8.0, 10.0, 12.0, 14.0]);
        let areas: Vec<f64> = s.sections.iter().map(|t| t.cells[0].area).collect();
        let imax = (0..5).max_by(|&a, &b| areas[a].total_cmp(&areas[b])).unwrap();
        assert_eq!(zs[imax], 10.0);
    }

    fn config(n: usize, types: Vec<SphereType>, seed: u64) -> SphereStackConfig {
        SphereStackConfig {
            n_cells: n,
            types,
            volume_dims: [120.0, 120.0, 40.0],
            base_dz: 2.0,
            seed,
            min_separation: 1.0,
            max_attempts: 200_000,
        }
    }

    #[test]
    fn cross_section_count_matches_per_sphere_enumeration() {
        let (stack, spheres) = synth_sphere_stack(&config(60, one_type(0.6, 6.0), 4)).unwrap();
        let mut expected = 0;
        let mut unsectioned = 0;
        for s in &spheres {
            // brute force over every plane of the grid
            let n = (0..=20)
                .filter(|k| (2.0 * *k as f64 - s.center[2]).abs() < s.radius)
                .count();
            expected += n;
            if n == 0 {
                unsectioned += 1;
            }
        }
        let got: usize = stack.sections.iter().map(|s| s.cells.len()).sum();
        assert_eq!(got, expected);
        assert_eq!(stack.unsectioned, unsectioned);
        assert_eq!(stack.centroids.len() + unsectioned, 60);
        for c in stack.cells() {
            assert!(stack.centroids.contains_key(c.true_volume_id.as_ref().unwrap()));
        }
    }

    #[test]
    fn small_sphere_between_planes_is_unsectioned() {
        let sphere = |id: &str, z: f64, r: f64| Sphere {
            id: id.into(),
            center: [5.0, 5.0, z],
            radius: r,
            type_label: "A".into(),
        };
        let stack = slice_spheres(&[sphere("a", 3.0, 0.5), sphere("b", 10.0, 5.0)], 20.0, 2.0).unwrap();
        assert_eq!(stack.unsectioned, 1);
        assert_eq!(stack.centroids.keys().collect::<Vec<_>>(), vec!["b"]);
        assert_eq!(stack.sections.len(), 11);
        let zs: Vec<f64> = stack.cells().iter().map(|c| c.z).collect();
        assert_eq!(zs, vec![6.0, 8.0, 10.0, 12.0, 14.0]);
    }

    #[test]
    fn subsample_partitions_sections() {
        let (stack, _) = synth_sphere_stack(&config(40, one_type(2.0, 5.0), 1)).unwrap();
        let n = stack.sections.len();
        assert_eq!(subsample_stack(&stack, 2.0, 0.0).unwrap(), stack.sections);
        let a = subsample_stack(&stack, 4.0, 0.0).unwrap();
        let b = subsample_stack(&stack, 4.0, 2.0).unwrap();
        assert_eq!(a.len() + b.len(), n);
        let mut zs: Vec<f64> = a.iter().chain(&b).map(|s| s.z).collect();
        zs.sort_by(f64::total_cmp);
        assert_eq!(zs, stack.sections.iter().map(|s| s.z).collect::<Vec<_>>());
        for step in 1..=5usize {
            for off in 0..step {
                let got = subsample_stack(&stack, 2.0 * step as f64, 2.0 * off as f64).unwrap().len();
                assert_eq!(got, (n - off).div_ceil(step));
            }
        }
        assert!(subsample_stack(&stack, 3.0, 0.0).is_err());
        assert!(subsample_stack(&stack, 4.0, 4.0).is_err());
    }

    #[test]
    fn dense_sampling_covers_everything() {
        let (stack, _) = synth_sphere_stack(&config(80, one_type(3.0, 7.0), 2)).unwrap();
        let ev = evaluate(&stack, 2.0, &[0.0], &MatchingConfig::default()).unwrap();
        let r = &ev.per_offset[0];
        assert_eq!(r.captured_fraction, 1.0);
        assert_eq!(r.missed, 0);
        assert!((r.sc_fraction + r.lc_fraction - 1.0).abs() < 1e-12);
        assert!(r.localization.mean < 1.0, "{:?}", r.localization);
    }

    #[test]
    fn coverage_nonincreasing_in_spacing() {
        let types = vec![
            SphereType {
                type_label: "S".into(),
                r_min: 0.8,
                r_max: 2.5,
                weight: 1.0,
            },
            SphereType {
                type_label: "L".into(),
                r_min: 3.0,
                r_max: 7.0,
                weight: 1.0,
            },
        ];
        let (stack, _) = synth_sphere_stack(&config(150, types, 5)).unwrap();
        let mut prev = f64::INFINITY;
        for mult in [1.0, 2.0, 3.0, 5.0] {
            let dz = 2.0 * mult;
            let ev = evaluate(&stack, dz, &all_offsets(2.0, dz).unwrap(), &MatchingConfig::default()).unwrap();
            for r in ev.per_offset.iter().chain([&ev.pooled]) {
                assert_eq!(r.captured + r.missed, r.total_ids);
            }
            assert!(ev.pooled.captured_fraction <= prev);
            prev = ev.pooled.captured_fraction;
        }
    }

    #[test]
    fn attribution_majority_and_ties() {
        let mk = |id: &str, t: &str, area: f64| CellRecord {
            cell_id: id.into(),
            x: 0.0,
            y: 0.0,
            z: 0.0,
            area,
            type_label: "A".into(),
            section_index: 0,
            true_volume_id: Some(t.into()),
        };
        assert_eq!(attribute(&[mk("1", "p", 1.0), mk("2", "p", 1.0)]), Some(("p", false)));
        assert_eq!(
            attribute(&[mk("1", "p", 1.0), mk("2", "q", 1.0), mk("3", "q", 1.0)]),
            Some(("q", true))
        );
        assert_eq!(attribute(&[mk("1", "p", 1.0), mk("2", "q", 3.0)]), Some(("q", true)));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.4, 1.0, 2.5], 1.0).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 1, 1]);
        assert_eq!(histogram(&[], 1.0).unwrap().len(), 1);
        assert!(histogram(&[1.0], 0.0).is_err());
    }
}
