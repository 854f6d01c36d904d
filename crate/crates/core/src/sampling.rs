//! Matched-budget observation geometries over a label volume.
//!
//! All geometries observe whole `z`-planes, so the voxel budget is always a
//! multiple of `nx * ny` and two geometries with the same plane count
//! observe exactly the same number of voxels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LabelVolume, LatticeSpec, Site};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Independently analysed planar sections.
    Independent2D,
    /// A contiguous stack of serial sections at fixed spacing.
    Serial3D,
    /// Every voxel of the volume.
    FullVolume,
}

impl Geometry {
    pub fn as_str(self) -> &'static str {
        match self {
            Geometry::Independent2D => "independent2d",
            Geometry::Serial3D => "serial3d",
            Geometry::FullVolume => "fullvolume",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "independent2d" => Ok(Geometry::Independent2D),
            "serial3d" => Ok(Geometry::Serial3D),
            "fullvolume" | "full" => Ok(Geometry::FullVolume),
            other => Err(Error::InvalidInput(format!("unknown geometry '{other}'"))),
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub geometry: Geometry,
    /// Sites ordered plane by plane, raster order within a plane.
    pub observed_sites: Vec<Site>,
    /// Sorted observed plane depths.
    pub plane_zs: Vec<usize>,
    /// Plane spacing in voxels; `Serial3D` only.
    pub delta_z: Option<usize>,
    pub budget: usize,
}

impl ObservationSet {
    fn from_planes(
        spec: &LatticeSpec,
        geometry: Geometry,
        mut plane_zs: Vec<usize>,
        delta_z: Option<usize>,
    ) -> Self {
        plane_zs.sort_unstable();
        let [nx, ny, _] = spec.dims;
        let mut observed_sites = Vec::with_capacity(plane_zs.len() * nx * ny);
        for &z in &plane_zs {
            for j in 0..ny {
                for i in 0..nx {
                    observed_sites.push([i, j, z]);
                }
            }
        }
        let budget = observed_sites.len();
        Self {
            geometry,
            observed_sites,
            plane_zs,
            delta_z,
            budget,
        }
    }

    /// Whole-plane observation at the given depths.
    pub fn from_plane_list(
        spec: &LatticeSpec,
        geometry: Geometry,
        plane_zs: Vec<usize>,
        delta_z: Option<usize>,
    ) -> Result<Self> {
        if let Some(&z) = plane_zs.iter().find(|&&z| z >= spec.dims[2]) {
            return Err(Error::InvalidInput(format!(
                "plane {z} outside a volume of depth {}",
                spec.dims[2]
            )));
        }
        let mut sorted = plane_zs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != plane_zs.len() {
            return Err(Error::InvalidInput("repeated observation plane".into()));
        }
        Ok(Self::from_planes(spec, geometry, plane_zs, delta_z))
    }

    pub fn is_observed(&self, site: Site) -> bool {
        self.plane_zs.binary_search(&site[2]).is_ok()
    }

    /// Per-voxel observation mask in lattice index order.
    pub fn mask(&self, spec: &LatticeSpec) -> Vec<bool> {
        let mut m = vec![false; spec.len()];
        for &s in &self.observed_sites {
            m[spec.index(s)] = true;
        }
        m
    }
}

/// The whole volume as an observation set.
pub fn full_volume(volume: &LabelVolume) -> ObservationSet {
    let spec = volume.spec();
    ObservationSet::from_planes(spec, Geometry::FullVolume, (0..spec.dims[2]).collect(), None)
}

/// `m` distinct planes, one drawn uniformly from each of `m` equal depth bins.
///
/// Bin `b` covers `[floor(b*nz/m), floor((b+1)*nz/m))`.
pub fn sample_independent_planes(volume: &LabelVolume, m: usize, seed: u64) -> Result<ObservationSet> {
    let spec = volume.spec();
    let nz = spec.dims[2];
    if m == 0 || m > nz {
        return Err(Error::InvalidBudget(format!(
            "cannot draw {m} planes from a volume of depth {nz}"
        )));
    }
    let mut rng = rng::stream(seed);
    let planes = (0..m)
        .map(|b| {
            let lo = b * nz / m;
            let hi = (b + 1) * nz / m;
            rng.random_range(lo..hi)
        })
        .collect();
    Ok(ObservationSet::from_planes(spec, Geometry::Independent2D, planes, None))
}

/// Planes `z0, z0 + delta_z, ..., z0 + (count - 1) * delta_z`.
pub fn sample_serial_stack(
    volume: &LabelVolume,
    z0: usize,
    delta_z: usize,
    count: usize,
) -> Result<ObservationSet> {
    let nz = volume.spec().dims[2];
    if count == 0 || delta_z == 0 {
        return Err(Error::InvalidBudget(
            "serial stack needs count >= 1 and delta_z >= 1".into(),
        ));
    }
    let last = z0 + (count - 1) * delta_z;
    if last >= nz {
        return Err(Error::InvalidBudget(format!(
            "serial stack reaches plane {last} but volume depth is {nz}"
        )));
    }
    let planes = (0..count).map(|c| z0 + c * delta_z).collect();
    Ok(ObservationSet::from_planes(
        volume.spec(),
        Geometry::Serial3D,
        planes,
        Some(delta_z),
    ))
}

/// Serial stack with the start plane drawn uniformly from all valid offsets.
pub fn sample_serial_stack_random(
    volume: &LabelVolume,
    delta_z: usize,
    count: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let nz = volume.spec().dims[2];
    let span = count.saturating_sub(1) * delta_z;
    if count == 0 || delta_z == 0 || span >= nz {
        return Err(Error::InvalidBudget(format!(
            "serial stack of {count} planes at spacing {delta_z} does not fit depth {nz}"
        )));
    }
    let z0 = rng::stream(seed).random_range(0..nz - span);
    sample_serial_stack(volume, z0, delta_z, count)
}

/// Lattice neighbours of `site` that the observation actually sees.
///
/// `Independent2D` planes are separate sections, so only in-plane
/// neighbours are returned. The other geometries return every observed
/// lattice neighbour, which for serial stacks with spacing >= 2 is again
/// in-plane only.
pub fn restricted_neighbors(obs: &ObservationSet, spec: &LatticeSpec, site: Site) -> Result<Vec<Site>> {
    spec.check_site(site)?;
    if !obs.is_observed(site) {
        return Err(Error::ContractViolation(format!("site {site:?} is not observed")));
    }
    let mut out = Vec::with_capacity(26);
    let offsets = observed_offsets(obs, spec);
    spec.for_each_neighbor(&offsets, site, |n| {
        if obs.is_observed(n) {
            out.push(n);
        }
    });
    Ok(out)
}

pub(crate) fn observed_offsets(obs: &ObservationSet, spec: &LatticeSpec) -> Vec<[isize; 3]> {
    let offsets = spec.neighborhood.offsets();
    match obs.geometry {
        Geometry::Independent2D => offsets.into_iter().filter(|o| o[2] == 0).collect(),
        _ => offsets,
    }
}
