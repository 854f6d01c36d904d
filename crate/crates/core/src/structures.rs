//! Depth-aware analyses on a reconstructed point cloud: connected 3D
//! structures, 2D-versus-3D distances and profiles along a structure axis.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cells::SectionTable;
use crate::error::{Error, Result};
use crate::matching::{Point3D, SizeStats};
use crate::spatial_index::{dist, GridIndex};
use crate::union_find::DisjointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure3D {
    pub structure_id: usize,
    pub member_ids: Vec<String>,
    /// Types admitted when the structure was built; empty means all.
    pub type_filter: Vec<String>,
    /// Member centroid.
    pub origin: [f64; 3],
    /// Unit principal axis.
    pub axis: [f64; 3],
    /// Range of member projections onto the axis, relative to `origin`.
    pub extent: [f64; 2],
    /// Fewer than two distinct member positions; the axis is a placeholder.
    pub degenerate_axis: bool,
}

impl Structure3D {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn project(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|d| (p[d] - self.origin[d]) * self.axis[d]).sum()
    }

    /// Distance from `p` to the axis line.
    pub fn radial_distance(&self, p: [f64; 3]) -> f64 {
        let t = self.project(p);
        let foot = [
            self.origin[0] + t * self.axis[0],
            self.origin[1] + t * self.axis[1],
            self.origin[2] + t * self.axis[2],
        ];
        dist(&p, &foot)
    }
}

/// Default linking reach for a structural type: twice its median radius.
pub fn default_link_radius(stats: &SizeStats, type_label: &str) -> f64 {
    2.0 * stats.get(type_label).radius
}

fn admitted(type_filter: &[String], t: &str) -> bool {
    type_filter.is_empty() || type_filter.iter().any(|f| f == t)
}

/// Principal axis of a point set. The sign is fixed so the projections have
/// non-negative third moment, which keeps the axis covariant under rigid
/// motions.
fn principal_axis(pts: &[[f64; 3]]) -> ([f64; 3], [f64; 3], bool) {
    let n = pts.len() as f64;
    let mut c = [0.0; 3];
    for p in pts {
        for d in 0..3 {
            c[d] += p[d] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in pts {
        let v = Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += v * v.transpose();
    }
    let scale = cov.abs().max();
    if pts.len() < 2 || scale == 0.0 {
        return (c, [0.0, 0.0, 1.0], true);
    }
    let eig = SymmetricEigen::new(cov / scale);
    let k = eig.eigenvalues.imax();
    let mut axis: Vector3<f64> = eig.eigenvectors.column(k).normalize();
    let skew: f64 = pts
        .iter()
        .map(|p| ((p[0] - c[0]) * axis[0] + (p[1] - c[1]) * axis[1] + (p[2] - c[2]) * axis[2]).powi(3))
        .sum();
    let tiny = 1e-9 * (scale / n).powf(1.5) * n;
    let flip = if skew.abs() > tiny {
        skew < 0.0
    } else {
        // symmetric spread: fall back to the dominant component's sign
        let i = axis.iamax();
        axis[i] < 0.0
    };
    if flip {
        axis = -axis;
    }
    (c, [axis[0], axis[1], axis[2]], false)
}

fn structures_from_points(
    ids: &[String],
    pts: &[[f64; 3]],
    type_filter: &[String],
    link_radius: f64,
    first_id: usize,
) -> Vec<Structure3D> {
    let index = GridIndex::new(pts.to_vec(), link_radius);
    let mut ds = DisjointSet::new(pts.len());
    for (i, p) in pts.iter().enumerate() {
        index.for_each_within(*p, link_radius, |j, _| {
            if j > i {
                ds.union(i, j);
            }
        });
    }
    ds.groups()
        .into_iter()
        .enumerate()
        .map(|(k, group)| {
            let member_pts: Vec<[f64; 3]> = group.iter().map(|&i| pts[i]).collect();
            let (origin, axis, degenerate_axis) = principal_axis(&member_pts);
            let mut s = Structure3D {
                structure_id: first_id + k,
                member_ids: group.iter().map(|&i| ids[i].clone()).collect(),
                type_filter: type_filter.to_vec(),
                origin,
                axis,
                extent: [0.0, 0.0],
                degenerate_axis,
            };
            let proj: Vec<f64> = member_pts.iter().map(|p| s.project(*p)).collect();
            s.extent = [
                proj.iter().cloned().fold(f64::INFINITY, f64::min),
                proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ];
            s
        })
        .collect()
}

fn check_radius(link_radius: f64) -> Result<()> {
    if !(link_radius > 0.0 && link_radius.is_finite()) {
        return Err(Error::InvalidInput(format!("link_radius must be positive, got {link_radius}")));
    }
    Ok(())
}

/// Connected components of the `link_radius` graph over admitted points.
pub fn build_structures(cloud: &[Point3D], type_filter: &[String], link_radius: f64) -> Result<Vec<Structure3D>> {
    check_radius(link_radius)?;
    let kept: Vec<&Point3D> = cloud.iter().filter(|p| admitted(type_filter, &p.type_label)).collect();
    let ids: Vec<String> = kept.iter().map(|p| p.cell_id.clone()).collect();
    let pts: Vec<[f64; 3]> = kept.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok(structures_from_points(&ids, &pts, type_filter, link_radius, 0))
}

/// The same construction restricted to each section on its own, as a
/// single-section analysis would see it.
pub fn build_section_structures(
    sections: &[SectionTable],
    type_filter: &[String],
    link_radius: f64,
) -> Result<Vec<Structure3D>> {
    check_radius(link_radius)?;
    let mut out = Vec::new();
    for s in sections {
        let kept: Vec<_> = s.cells.iter().filter(|c| admitted(type_filter, &c.type_label)).collect();
        let ids: Vec<String> = kept.iter().map(|c| c.cell_id.clone()).collect();
        let pts: Vec<[f64; 3]> = kept.iter().map(|c| [c.x, c.y, c.z]).collect();
        let next = out.len();
        out.extend(structures_from_points(&ids, &pts, type_filter, link_radius, next));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTarget {
    Type(String),
    /// Members of a structure.
    Structure(Structure3D),
}

impl DistanceTarget {
    pub fn describe(&self) -> String {
        match self {
            DistanceTarget::Type(t) => format!("type:{t}"),
            DistanceTarget::Structure(s) => format!("structure:{}", s.structure_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDistance {
    pub cell_id: String,
    pub section_index: i64,
    /// Nearest same-section target, planar; `None` when the section has none.
    pub d2d: Option<f64>,
    /// Nearest target anywhere in the reconstructed volume.
    pub d3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceComparison {
    pub query: String,
    pub cells: Vec<CellDistance>,
    /// Cells with both distances defined.
    pub n_both: usize,
    pub mean_d2d: f64,
    pub mean_d3d: f64,
    /// Source cells without a same-section target.
    pub n_flagged: usize,
}

/// Per source cross-section, the nearest target within its own section
/// (2D) and in the reconstructed volume (3D).
///
/// The 3D candidates are every target cross-section placed at its section
/// depth plus every target centroid, excluding the source's own chain.
/// They include the same-section candidates, so `d3d <= d2d` holds exactly.
pub fn compare_distances(
    cloud: &[Point3D],
    sections: &[SectionTable],
    source_type: &str,
    target: &DistanceTarget,
) -> Result<DistanceComparison> {
    // cross-section id -> owning point
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (k, p) in cloud.iter().enumerate() {
        for m in &p.member_ids {
            owner.insert(m.as_str(), k);
        }
    }
    let is_target_point: Vec<bool> = match target {
        DistanceTarget::Type(t) => cloud.iter().map(|p| &p.type_label == t).collect(),
        DistanceTarget::Structure(s) => {
            let members: std::collections::HashSet<&str> = s.member_ids.iter().map(|m| m.as_str()).collect();
            cloud.iter().map(|p| members.contains(p.cell_id.as_str())).collect()
        }
    };
    let record_is_target = |c: &crate::cells::CellRecord| match target {
        DistanceTarget::Type(t) => &c.type_label == t,
        DistanceTarget::Structure(_) => owner.get(c.cell_id.as_str()).is_some_and(|&k| is_target_point[k]),
    };

    // 3D candidates with their owning point (usize::MAX if none) and
    // cross-section id (None for centroids)
    let mut cand_pts: Vec<[f64; 3]> = Vec::new();
    let mut cand_owner: Vec<usize> = Vec::new();
    let mut cand_record: Vec<Option<&str>> = Vec::new();
    let mut per_section: Vec<Vec<usize>> = vec![Vec::new(); sections.len()];
    for (si, s) in sections.iter().enumerate() {
        for c in &s.cells {
            if record_is_target(c) {
                per_section[si].push(cand_pts.len());
                cand_pts.push([c.x, c.y, s.z]);
                cand_owner.push(owner.get(c.cell_id.as_str()).copied().unwrap_or(usize::MAX));
                cand_record.push(Some(c.cell_id.as_str()));
            }
        }
    }
    for (k, p) in cloud.iter().enumerate() {
        if is_target_point[k] {
            cand_pts.push([p.x, p.y, p.z]);
            cand_owner.push(k);
            cand_record.push(None);
        }
    }
    let any_source = sections.iter().any(|s| s.cells.iter().any(|c| c.type_label == source_type));
    if !any_source {
        return Err(Error::InvalidInput(format!("no cells of source type {source_type}")));
    }
    if cand_pts.is_empty() {
        return Err(Error::InvalidInput(format!("no target cells for {}", target.describe())));
    }
    let spacing = crate::matching::infer_delta_z(sections).unwrap_or(1.0);
    let index = GridIndex::new(cand_pts.clone(), spacing.max(1e-6));

    let mut cells = Vec::new();
    for (si, s) in sections.iter().enumerate() {
        for c in s.cells.iter().filter(|c| c.type_label == source_type) {
            let q = [c.x, c.y, s.z];
            let own = owner.get(c.cell_id.as_str()).copied();
            let foreign = |i: usize| match own {
                Some(k) => cand_owner[i] != k,
                None => cand_record[i] != Some(c.cell_id.as_str()),
            };
            let d2d = per_section[si]
                .iter()
                .filter(|&&i| foreign(i))
                .map(|&i| dist(&q, &cand_pts[i]))
                .min_by(f64::total_cmp);
            let d3d = index.nearest(q, foreign).map(|(_, d)| d);
            cells.push(CellDistance {
                cell_id: c.cell_id.clone(),
                section_index: s.section_index,
                d2d,
                d3d,
            });
        }
    }
    let both: Vec<&CellDistance> = cells.iter().filter(|c| c.d2d.is_some() && c.d3d.is_some()).collect();
    let n_both = both.len();
    let mean = |f: fn(&CellDistance) -> f64| {
        if n_both == 0 {
            f64::NAN
        } else {
            both.iter().map(|c| f(c)).sum::<f64>() / n_both as f64
        }
    };
    Ok(DistanceComparison {
        query: format!("{source_type}->{}", target.describe()),
        n_both,
        mean_d2d: mean(|c| c.d2d.unwrap_or(f64::NAN)),
        mean_d3d: mean(|c| c.d3d.unwrap_or(f64::NAN)),
        n_flagged: cells.iter().filter(|c| c.d2d.is_none()).count(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileValue {
    /// Type fractions per bin.
    Composition,
    /// Cells per unit band volume, by type.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub bin: usize,
    pub arc_lo: f64,
    pub arc_hi: f64,
    /// Bin centre.
    pub arc_coord: f64,
    pub count: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub structure_id: usize,
    pub value: ProfileValue,
    pub types: Vec<String>,
    pub bins: Vec<ProfileBin>,
}

/// Bins cells within `band_radius` of the structure axis by their arc
/// coordinate over the structure's extent.
pub fn along_structure_profile(
    structure: &Structure3D,
    cloud: &[Point3D],
    band_radius: f64,
    bins: usize,
    value: ProfileValue,
) -> Result<Profile> {
    if structure.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "profile needs a structure with >= 3 members, got {}",
            structure.len()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidInput(format!("profile needs >= 2 bins, got {bins}")));
    }
    if !(band_radius > 0.0 && band_radius.is_finite()) {
        return Err(Error::InvalidInput(format!("band_radius must be positive, got {band_radius}")));
    }
    let [lo, hi] = structure.extent;
    if structure.degenerate_axis || hi <= lo {
        return Err(Error::InvalidInput(format!(
            "structure {} has no extent along its axis",
            structure.structure_id
        )));
    }
    let width = (hi - lo) / bins as f64;
    let mut types: Vec<String> = cloud.iter().map(|p| p.type_label.clone()).collect();
    types.sort();
    types.dedup();
    let mut counts = vec![BTreeMap::<String, usize>::new(); bins];
    for p in cloud {
        let q = [p.x, p.y, p.z];
        let t = structure.project(q);
        if t < lo || t > hi || structure.radial_distance(q) > band_radius {
            continue;
        }
        let b = (((t - lo) / width).floor() as usize).min(bins - 1);
        *counts[b].entry(p.type_label.clone()).or_default() += 1;
    }
    let band_volume = width * std::f64::consts::PI * band_radius * band_radius;
    let out = counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let total: usize = c.values().sum();
            let values = types
                .iter()
                .map(|t| {
                    let n = c.get(t).copied().unwrap_or(0) as f64;
                    let v = match value {
                        ProfileValue::Composition if total > 0 => n / total as f64,
                        ProfileValue::Composition => 0.0,
                        ProfileValue::Density => n / band_volume,
                    };
                    (t.clone(), v)
                })
                .collect();
            let arc_lo = lo + b as f64 * width;
            ProfileBin {
                bin: b,
                arc_lo,
                arc_hi: arc_lo + width,
                arc_coord: arc_lo + width / 2.0,
                count: total,
                values,
            }
        })
        .collect();
    Ok(Profile {
        structure_id: structure.structure_id,
        value,
        types,
        bins: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::cell;
    use crate::matching::Provenance;
    use rand::{Rng, SeedableRng};

    fn point(id: &str, x: f64, y: f64, z: f64, t: &str) -> Point3D {
        Point3D {
            cell_id: id.into(),
            x,
            y,
            z,
            type_label: t.into(),
            provenance: Provenance::LC,
            depth_interval: [z - 1.0, z + 1.0],
            chain_len: 1,
            member_ids: vec![id.into()],
            clamped: false,
            split: false,
        }
    }

    #[test]
    fn fragments_join_across_planes() {
        // two planar fragments in adjacent sections, overlapping in projection
        let mut cloud = Vec::new();
        let mut sections = Vec::new();
        for (s, (x0, z)) in [(0.0, 0.0), (2.0, 3.0)].iter().enumerate() {
            let mut cells = Vec::new();
            for k in 0..4 {
                let id = format!("f{s}_{k}");
                let x = x0 + 4.0 * k as f64 * if s == 0 { -1.0 } else { 1.0 };
                cloud.push(point(&id, x, 0.0, *z, "duct"));
                cells.push(cell(&id, x, 0.0, *z, 10.0, "duct", s as i64));
            }
            sections.push(SectionTable::new(s as i64, *z, cells).unwrap());
        }
        let filter = vec!["duct".to_string()];
        let three_d = build_structures(&cloud, &filter, 4.5).unwrap();
        assert_eq!(three_d.len(), 1);
        assert_eq!(three_d[0].len(), 8);
        let two_d = build_section_structures(&sections, &filter, 4.5).unwrap();
        assert_eq!(two_d.len(), 2);
    }

    #[test]
    fn isolated_points_are_singletons() {
        let cloud: Vec<_> = (0..5).map(|i| point(&i.to_string(), 10.0 * i as f64, 0.0, 0.0, "a")).collect();
        let s = build_structures(&cloud, &[], 3.0).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|x| x.len() == 1 && x.degenerate_axis));
        assert!(build_structures(&cloud, &[], 0.0).is_err());
    }

    #[test]
    fn axis_follows_a_line() {
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let cloud: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64 * 1.5;
                point(&i.to_string(), 3.0 + t * dir[0], -1.0 + t * dir[1], 7.0 + t * dir[2], "a")
            })
            .collect();
        let s = build_structures(&cloud, &[], 2.0).unwrap();
        assert_eq!(s.len(), 1);
        let a = Vector3::from(s[0].axis);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.dot(&dir).abs() > 0.999);
    }

    #[test]
    fn components_are_maximal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let cloud: Vec<_> = (0..150)
            .map(|i| {
                point(
                    &i.to_string(),
                    rng.random_range(0.0..60.0),
                    rng.random_range(0.0..60.0),
                    rng.random_range(0.0..20.0),
                    "a",
                )
            })
            .collect();
        let s = build_structures(&cloud, &[], 5.0).unwrap();
        let comp: HashMap<&str, usize> = s
            .iter()
            .flat_map(|x| x.member_ids.iter().map(move |m| (m.as_str(), x.structure_id)))
            .collect();
        assert_eq!(comp.len(), 150);
        for a in &cloud {
            for b in &cloud {
                if dist(&[a.x, a.y, a.z], &[b.x, b.y, b.z]) <= 5.0 {
                    assert_eq!(comp[a.cell_id.as_str()], comp[b.cell_id.as_str()]);
                }
            }
        }
    }

    fn one_section_cloud(cells: &[(&str, f64, f64, &str)], z: f64, section: i64) -> (Vec<Point3D>, SectionTable) {
        let pts = cells.iter().map(|&(id, x, y, t)| point(id, x, y, z, t)).collect();
        let recs = cells.iter().map(|&(id, x, y, t)| cell(id, x, y, z, 10.0, t, section)).collect();
        (pts, SectionTable::new(section, z, recs).unwrap())
    }

    #[test]
    fn single_plane_distances_agree() {
        let (cloud, sec) = one_section_cloud(
            &[("s1", 0.0, 0.0, "S"), ("s2", 5.0, 5.0, "S"), ("t1", 3.0, 4.0, "T"), ("t2", 9.0, 1.0, "T")],
            4.0,
            0,
        );
        let d = compare_distances(&cloud, &[sec], "S", &DistanceTarget::Type("T".into())).unwrap();
        for c in &d.cells {
            assert_eq!(c.d2d, c.d3d);
        }
        assert_eq!(d.cells[0].d2d, Some(5.0));
    }

    #[test]
    fn adjacent_section_target() {
        let (mut cloud, s0) = one_section_cloud(&[("s", 2.0, 2.0, "S")], 0.0, 0);
        let (c1, s1) = one_section_cloud(&[("t", 2.0, 2.0, "T")], 4.0, 1);
        cloud.extend(c1);
        let d = compare_distances(&cloud, &[s0, s1], "S", &DistanceTarget::Type("T".into())).unwrap();
        assert_eq!(d.cells[0].d2d, None);
        assert_eq!(d.cells[0].d3d, Some(4.0));
        assert_eq!(d.n_flagged, 1);
    }

    #[test]
    fn self_is_not_a_target() {
        let (cloud, sec) = one_section_cloud(&[("a", 0.0, 0.0, "A"), ("b", 3.0, 0.0, "A")], 0.0, 0);
        let d = compare_distances(&cloud, &[sec], "A", &DistanceTarget::Type("A".into())).unwrap();
        assert_eq!(d.cells[0].d2d, Some(3.0));
        assert_eq!(d.cells[0].d3d, Some(3.0));
    }

    fn tube(n: usize, seed: u64) -> Vec<Point3D> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t = rng.random_range(0.0..100.0);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let r = 2.0 * rng.random::<f64>().sqrt();
                let ty = if i % 4 == 0 { "b" } else { "a" };
                point(&format!("p{i}"), r * a.cos(), r * a.sin(), t, ty)
            })
            .collect()
    }

    #[test]
    fn uniform_tube_has_flat_profile() {
        let cloud = tube(4000, 1);
        let s = &build_structures(&cloud, &[], 3.0).unwrap()[0];
        assert_eq!(s.len(), 4000);
        let p = along_structure_profile(s, &cloud, 2.5, 10, ProfileValue::Density).unwrap();
        let counts: Vec<f64> = p.bins.iter().map(|b| b.count as f64).collect();
        let mean = counts.iter().sum::<f64>() / 10.0;
        for c in &counts {
            assert!((c - mean).abs() < 4.0 * mean.sqrt(), "{counts:?}");
        }
        let comp = along_structure_profile(s, &cloud, 2.5, 10, ProfileValue::Composition).unwrap();
        for b in comp.bins.iter().filter(|b| b.count > 0) {
            assert!((b.values.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_preconditions() {
        let cloud = vec![point("a", 0.0, 0.0, 0.0, "a"), point("b", 1.0, 0.0, 0.0, "a")];
        let s = &build_structures(&cloud, &[], 2.0).unwrap()[0];
        assert!(along_structure_profile(s, &cloud, 1.0, 4, ProfileValue::Composition).is_err());
        let cloud = tube(50, 2);
        let s = &build_structures(&cloud, &[], 10.0).unwrap()[0];
        assert!(along_structure_profile(s, &cloud, 1.0, 1, ProfileValue::Composition).is_err());
    }

    #[test]
    fn profile_invariant_under_rigid_motion() {
        // denser at one end so the axis orientation is well defined
        let mut cloud = tube(600, 3);
        for p in cloud.iter_mut() {
            p.z = p.z * p.z / 100.0;
        }
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vector3::new(10.0, -4.0, 25.0);
        let moved: Vec<Point3D> = cloud
            .iter()
            .map(|p| {
                let v = rot * Vector3::new(p.x, p.y, p.z) + shift;
                Point3D {
                    x: v[0],
                    y: v[1],
                    z: v[2],
                    ..p.clone()
                }
            })
            .collect();
        let a = &build_structures(&cloud, &[], 4.0).unwrap()[0];
        let b = &build_structures(&moved, &[], 4.0).unwrap()[0];
        let pa = along_structure_profile(a, &cloud, 2.5, 8, ProfileValue::Composition).unwrap();
        let pb = along_structure_profile(b, &moved, 2.5, 8, ProfileValue::Composition).unwrap();
        for (x, y) in pa.bins.iter().zip(&pb.bins) {
            assert_eq!(x.count, y.count);
            assert!((x.arc_coord - y.arc_coord).abs() < 1e-9);
        }
    }
}
