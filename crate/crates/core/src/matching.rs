//! Cross-section correspondence and 3D centroid estimation.
//!
//! Adjacent sections are matched by a one-to-one assignment that minimises
//! total planar displacement, with type-conditional distance tolerances and
//! a per-cell penalty for staying unmatched. Matches are merged into chains
//! and each chain is lifted to a 3D point with a sphere depth model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{percentile_sorted, CellRecord, SectionTable};
use crate::error::{Error, Result};
use crate::spatial_index::GridIndex;
use crate::union_find::DisjointSet;

pub const DEFAULT_MIN_TYPE_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSize {
    pub n: usize,
    pub median_area: f64,
    pub p10_area: f64,
    pub p90_area: f64,
    /// `sqrt(median_area / pi)`
    pub radius: f64,
    /// `sqrt(p90_area / pi)`
    pub max_radius: f64,
    /// Too few cells; the pooled statistics are used instead.
    pub low_confidence: bool,
}

impl TypeSize {
    fn from_areas(areas: &mut [f64]) -> Self {
        areas.sort_by(f64::total_cmp);
        let median_area = percentile_sorted(areas, 0.5);
        let p90_area = percentile_sorted(areas, 0.9);
        Self {
            n: areas.len(),
            median_area,
            p10_area: percentile_sorted(areas, 0.1),
            p90_area,
            radius: (median_area / std::f64::consts::PI).sqrt(),
            max_radius: (p90_area / std::f64::consts::PI).sqrt(),
            low_confidence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub per_type: BTreeMap<String, TypeSize>,
    pub pooled: TypeSize,
}

impl SizeStats {
    /// Statistics for `type_label`, falling back to the pooled ones for
    /// unknown types.
    pub fn get(&self, type_label: &str) -> &TypeSize {
        self.per_type.get(type_label).unwrap_or(&self.pooled)
    }
}

pub fn compute_size_stats(cells: &[CellRecord]) -> Result<SizeStats> {
    compute_size_stats_with(cells, DEFAULT_MIN_TYPE_COUNT)
}

/// Percentile area statistics per type. Types with fewer than `min_count`
/// cells are flagged and carry the pooled statistics (with their own `n`).
pub fn compute_size_stats_with(cells: &[CellRecord], min_count: usize) -> Result<SizeStats> {
    if cells.is_empty() {
        return Err(Error::InvalidInput("size statistics need at least one cell".into()));
    }
    let mut by_type: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::with_capacity(cells.len());
    for c in cells {
        c.validate()?;
        by_type.entry(c.type_label.clone()).or_default().push(c.area);
        all.push(c.area);
    }
    let pooled = TypeSize::from_areas(&mut all);
    let per_type = by_type
        .into_iter()
        .map(|(t, mut areas)| {
            let s = if areas.len() < min_count {
                TypeSize {
                    n: areas.len(),
                    low_confidence: true,
                    ..pooled.clone()
                }
            } else {
                TypeSize::from_areas(&mut areas)
            };
            (t, s)
        })
        .collect();
    Ok(SizeStats { per_type, pooled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    /// Tolerance multiplier.
    pub kappa: f64,
    pub min_type_count: usize,
    pub split_long_chains: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            min_type_count: DEFAULT_MIN_TYPE_COUNT,
            split_long_chains: true,
        }
    }
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Matching reach for a type: `kappa * max(R_max, delta_z)`.
pub fn tolerance(stats: &SizeStats, type_label: &str, delta_z: f64, kappa: f64) -> f64 {
    kappa * stats.get(type_label).max_radius.max(delta_z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

/// Sparse cost structure between two sections. Cells are held in ascending
/// id order; candidate indices refer to that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostStructure {
    pub a_ids: Vec<String>,
    pub b_ids: Vec<String>,
    /// Unmatched penalty per cell (its type tolerance).
    pub a_penalty: Vec<f64>,
    pub b_penalty: Vec<f64>,
    /// Sorted by `(a, b)`.
    pub candidates: Vec<Candidate>,
    pub delta_z: f64,
}

impl CostStructure {
    pub fn candidates_of_a(&self, a: usize) -> impl Iterator<Item = &Candidate> {
        let lo = self.candidates.partition_point(|c| c.a < a);
        self.candidates[lo..].iter().take_while(move |c| c.a == a)
    }

    pub fn candidates_of_b(&self, b: usize) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(move |c| c.b == b)
    }

    pub fn cost(&self, a: usize, b: usize) -> Option<f64> {
        self.candidates_of_a(a).find(|c| c.b == b).map(|c| c.cost)
    }
}

fn sorted_by_id(cells: &[CellRecord]) -> Vec<&CellRecord> {
    let mut v: Vec<&CellRecord> = cells.iter().collect();
    v.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    v
}

pub fn build_cost_matrix(
    section_a: &SectionTable,
    section_b: &SectionTable,
    stats: &SizeStats,
    delta_z: f64,
    kappa: f64,
) -> Result<CostStructure> {
    if !(delta_z > 0.0 && delta_z.is_finite()) {
        return Err(Error::InvalidInput(format!("delta_z must be positive, got {delta_z}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    let a = sorted_by_id(&section_a.cells);
    let b = sorted_by_id(&section_b.cells);
    let tol = |c: &CellRecord| tolerance(stats, &c.type_label, delta_z, kappa);
    let a_penalty: Vec<f64> = a.iter().map(|c| tol(c)).collect();
    let b_penalty: Vec<f64> = b.iter().map(|c| tol(c)).collect();
    let reach = a_penalty.iter().cloned().fold(0.0, f64::max);
    let index = GridIndex::planar(b.iter().map(|c| (c.x, c.y)), reach);
    let mut candidates = Vec::new();
    for (i, ca) in a.iter().enumerate() {
        let mut row: Vec<Candidate> = Vec::new();
        index.for_each_within([ca.x, ca.y, 0.0], a_penalty[i], |j, _| {
            let cb = b[j];
            if cb.type_label == ca.type_label {
                row.push(Candidate {
                    a: i,
                    b: j,
                    cost: ca.planar_distance(cb),
                });
            }
        });
        row.sort_by_key(|c| c.b);
        candidates.extend(row);
    }
    Ok(CostStructure {
        a_ids: a.iter().map(|c| c.cell_id.clone()).collect(),
        b_ids: b.iter().map(|c| c.cell_id.clone()).collect(),
        a_penalty,
        b_penalty,
        candidates,
        delta_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub a_id: String,
    pub b_id: String,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_a: Vec<String>,
    pub unmatched_b: Vec<String>,
    pub delta_z: f64,
    /// Pair costs plus penalties of unmatched cells.
    pub objective: f64,
}

/// Minimum-cost assignment on a dense square matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based arrays; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Optimal one-to-one assignment with unmatched penalties.
///
/// Each connected component of the candidate graph is solved exactly as a
/// square problem augmented with one dummy row per `B` cell and one dummy
/// column per `A` cell.
pub fn solve_assignment(costs: &CostStructure) -> MatchResult {
    let (na, nb) = (costs.a_ids.len(), costs.b_ids.len());
    let mut ds = DisjointSet::new(na + nb);
    for c in &costs.candidates {
        ds.union(c.a, na + c.b);
    }
    let mut a_match: Vec<Option<(usize, f64)>> = vec![None; na];
    for group in ds.groups() {
        let rows: Vec<usize> = group.iter().copied().filter(|&x| x < na).collect();
        let cols: Vec<usize> = group.iter().filter(|&&x| x >= na).map(|&x| x - na).collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let (r, c) = (rows.len(), cols.len());
        let n = r + c;
        let col_pos: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(k, &j)| (j, k)).collect();
        let mut finite_total = 0.0;
        let mut entries = Vec::new();
        for (ri, &i) in rows.iter().enumerate() {
            finite_total += costs.a_penalty[i];
            for cand in costs.candidates_of_a(i) {
                entries.push((ri, col_pos[&cand.b], cand.cost));
                finite_total += cand.cost;
            }
        }
        for &j in &cols {
            finite_total += costs.b_penalty[j];
        }
        // exceeds any feasible assignment's total, so never chosen
        let forbid = 2.0 * finite_total + 1.0;
        let mut m = vec![forbid; n * n];
        for (ri, ci, cost) in entries {
            m[ri * n + ci] = cost;
        }
        for (ri, &i) in rows.iter().enumerate() {
            m[ri * n + c + ri] = costs.a_penalty[i];
        }
        for (ci, &j) in cols.iter().enumerate() {
            m[(r + ci) * n + ci] = costs.b_penalty[j];
            for ri in 0..r {
                m[(r + ci) * n + c + ri] = 0.0;
            }
        }
        let assign = hungarian(&m, n);
        for (ri, &i) in rows.iter().enumerate() {
            let col = assign[ri];
            if col < c {
                a_match[i] = Some((cols[col], m[ri * n + col]));
            }
        }
    }

    let mut b_used = vec![false; nb];
    let mut pairs = Vec::new();
    let mut unmatched_a = Vec::new();
    let mut objective = 0.0;
    for (i, m) in a_match.iter().enumerate() {
        match m {
            Some((j, cost)) => {
                b_used[*j] = true;
                objective += cost;
                pairs.push(MatchPair {
                    a_id: costs.a_ids[i].clone(),
                    b_id: costs.b_ids[*j].clone(),
                    cost: *cost,
                });
            }
            None => {
                objective += costs.a_penalty[i];
                unmatched_a.push(costs.a_ids[i].clone());
            }
        }
    }
    let mut unmatched_b = Vec::new();
    for j in 0..nb {
        if !b_used[j] {
            objective += costs.b_penalty[j];
            unmatched_b.push(costs.b_ids[j].clone());
        }
    }
    MatchResult {
        pairs,
        unmatched_a,
        unmatched_b,
        delta_z: costs.delta_z,
        objective,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Shared cell: seen in two or more adjacent sections.
    SC,
    /// Lone cell: seen in a single section.
    LC,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::SC => "SC",
            Provenance::LC => "LC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellChain {
    /// Cross-sections in depth order.
    pub members: Vec<CellRecord>,
    /// Cost of each link, `members.len() - 1` entries.
    pub link_costs: Vec<f64>,
    /// Produced by splitting an implausibly long chain.
    pub split: bool,
}

impl CellChain {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        if self.members.len() >= 2 {
            Provenance::SC
        } else {
            Provenance::LC
        }
    }

    pub fn type_label(&self) -> &str {
        &self.members[0].type_label
    }
}

/// Smallest positive gap between consecutive section depths.
pub fn infer_delta_z(stack: &[SectionTable]) -> Option<f64> {
    stack
        .windows(2)
        .map(|w| w[1].z - w[0].z)
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
}

/// Longest plausible chain for a type: `ceil(2 R_max / delta_z) + 1`.
pub fn max_chain_len(stats: &SizeStats, type_label: &str, delta_z: f64) -> usize {
    (2.0 * stats.get(type_label).max_radius / delta_z).ceil() as usize + 1
}

fn check_spacing(stack: &[SectionTable], delta_z: f64) -> Result<Vec<bool>> {
    if !(delta_z > 0.0 && delta_z.is_finite()) {
        return Err(Error::InvalidInput(format!("delta_z must be positive, got {delta_z}")));
    }
    let tol = 1e-6 * delta_z.max(1.0);
    stack
        .windows(2)
        .map(|w| {
            let gap = w[1].z - w[0].z;
            let steps = (gap / delta_z).round();
            if steps < 1.0 || (gap - steps * delta_z).abs() > tol {
                Err(Error::InvalidInput(format!(
                    "sections at z={} and z={} are not on a {delta_z} grid in increasing order",
                    w[0].z, w[1].z
                )))
            } else {
                Ok(steps == 1.0)
            }
        })
        .collect()
}

/// Matches every adjacent pair and merges matches into chains.
///
/// Sections must be sorted by depth on a `delta_z` grid; a gap of several
/// steps (an empty section) breaks chains.
pub fn link_chains(
    stack: &[SectionTable],
    stats: &SizeStats,
    delta_z: f64,
    config: &MatchingConfig,
) -> Result<Vec<CellChain>> {
    Ok(link_chains_with_matches(stack, stats, delta_z, config)?.0)
}

pub fn link_chains_with_matches(
    stack: &[SectionTable],
    stats: &SizeStats,
    delta_z: f64,
    config: &MatchingConfig,
) -> Result<(Vec<CellChain>, Vec<MatchResult>)> {
    config.validate()?;
    let adjacent = check_spacing(stack, delta_z)?;
    let matches: Vec<MatchResult> = (0..stack.len().saturating_sub(1))
        .into_par_iter()
        .map(|s| {
            if adjacent[s] {
                let costs = build_cost_matrix(&stack[s], &stack[s + 1], stats, delta_z, config.kappa)?;
                Ok(solve_assignment(&costs))
            } else {
                Ok(MatchResult {
                    pairs: Vec::new(),
                    unmatched_a: stack[s].cells.iter().map(|c| c.cell_id.clone()).collect(),
                    unmatched_b: stack[s + 1].cells.iter().map(|c| c.cell_id.clone()).collect(),
                    delta_z,
                    objective: 0.0,
                })
            }
        })
        .collect::<Result<_>>()?;

    // global node order: section by section, ids ascending within a section
    let mut nodes: Vec<&CellRecord> = Vec::new();
    let mut node_of: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    for (s, sec) in stack.iter().enumerate() {
        for c in sorted_by_id(&sec.cells) {
            if node_of.insert((s, c.cell_id.as_str()), nodes.len()).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate cell_id {} in section {}",
                    c.cell_id, sec.section_index
                )));
            }
            nodes.push(c);
        }
    }
    let mut ds = DisjointSet::new(nodes.len());
    let mut link_cost = vec![f64::NAN; nodes.len()];
    for (s, m) in matches.iter().enumerate() {
        for p in &m.pairs {
            let a = node_of[&(s, p.a_id.as_str())];
            let b = node_of[&(s + 1, p.b_id.as_str())];
            ds.union(a, b);
            link_cost[a] = p.cost;
        }
    }
    let mut chains = Vec::new();
    for group in ds.groups() {
        // node order is depth order, so each group is already a path
        let members: Vec<CellRecord> = group.iter().map(|&n| nodes[n].clone()).collect();
        let link_costs: Vec<f64> = group[..group.len() - 1].iter().map(|&n| link_cost[n]).collect();
        let chain = CellChain {
            members,
            link_costs,
            split: false,
        };
        if config.split_long_chains {
            let limit = max_chain_len(stats, chain.type_label(), delta_z);
            split_chain(chain, limit, &mut chains);
        } else {
            chains.push(chain);
        }
    }
    Ok((chains, matches))
}

fn split_chain(chain: CellChain, limit: usize, out: &mut Vec<CellChain>) {
    if chain.len() <= limit {
        out.push(chain);
        return;
    }
    let mut cut = 0;
    for (k, &c) in chain.link_costs.iter().enumerate() {
        if c > chain.link_costs[cut] {
            cut = k;
        }
    }
    let CellChain {
        mut members,
        mut link_costs,
        ..
    } = chain;
    let tail_members = members.split_off(cut + 1);
    let tail_links = link_costs.split_off(cut + 1);
    link_costs.pop();
    split_chain(
        CellChain {
            members,
            link_costs,
            split: true,
        },
        limit,
        out,
    );
    split_chain(
        CellChain {
            members: tail_members,
            link_costs: tail_links,
            split: true,
        },
        limit,
        out,
    );
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    /// First chain member's id.
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub type_label: String,
    pub provenance: Provenance,
    pub depth_interval: [f64; 2],
    pub chain_len: usize,
    pub member_ids: Vec<String>,
    /// The sphere fit fell outside the depth interval and was clamped.
    pub clamped: bool,
    pub split: bool,
}

/// Sphere-model depth and area-weighted planar position of a chain.
///
/// With section radii `r_m = sqrt(area_m / pi)` at depths `z_m`, the model
/// `r_m^2 = R^2 - (z_m - z_c)^2` is linear in `z_m` after moving `z_m^2`
/// to the left, and is fitted by least squares.
pub fn estimate_centroid(chain: &CellChain, delta_z: f64) -> Result<Point3D> {
    let first = chain
        .members
        .first()
        .ok_or_else(|| Error::InvalidInput("empty chain".into()))?;
    if !(delta_z > 0.0 && delta_z.is_finite()) {
        return Err(Error::InvalidInput(format!("delta_z must be positive, got {delta_z}")));
    }
    for c in &chain.members {
        if !(c.area > 0.0 && c.area.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cell {} has non-positive area {}",
                c.cell_id, c.area
            )));
        }
    }
    let total_area: f64 = chain.members.iter().map(|c| c.area).sum();
    let x = chain.members.iter().map(|c| c.area * c.x).sum::<f64>() / total_area;
    let y = chain.members.iter().map(|c| c.area * c.y).sum::<f64>() / total_area;
    let z_min = chain.members.iter().map(|c| c.z).fold(f64::INFINITY, f64::min);
    let z_max = chain.members.iter().map(|c| c.z).fold(f64::NEG_INFINITY, f64::max);
    let interval = [z_min - delta_z / 2.0, z_max + delta_z / 2.0];

    let (z, clamped) = if chain.members.len() == 1 {
        (first.z, false)
    } else {
        let n = chain.members.len() as f64;
        let zbar = chain.members.iter().map(|c| c.z).sum::<f64>() / n;
        // y_m = r_m^2 + u_m^2 = (R^2 - w^2) + 2 w u_m, u = z - zbar, w = z_c - zbar
        let pts: Vec<(f64, f64)> = chain
            .members
            .iter()
            .map(|c| {
                let u = c.z - zbar;
                (u, c.area / std::f64::consts::PI + u * u)
            })
            .collect();
        let ubar = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - ubar) * (p.1 - ybar)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - ubar).powi(2)).sum();
        if sxx <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "chain starting at {} has all members at one depth",
                first.cell_id
            )));
        }
        let zc = zbar + 0.5 * sxy / sxx;
        if zc < interval[0] || zc > interval[1] || !zc.is_finite() {
            (zc.clamp(interval[0], interval[1]), true)
        } else {
            (zc, false)
        }
    };
    Ok(Point3D {
        cell_id: first.cell_id.clone(),
        x,
        y,
        z,
        type_label: first.type_label.clone(),
        provenance: chain.provenance(),
        depth_interval: interval,
        chain_len: chain.len(),
        member_ids: chain.members.iter().map(|c| c.cell_id.clone()).collect(),
        clamped,
        split: chain.split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub delta_z: f64,
    pub stats: SizeStats,
    pub matches: Vec<MatchResult>,
    pub chains: Vec<CellChain>,
    pub points: Vec<Point3D>,
}

/// Size statistics, matching, chaining and centroid estimation in one pass.
pub fn reconstruct(stack: &[SectionTable], delta_z: f64, config: &MatchingConfig) -> Result<Reconstruction> {
    let cells: Vec<CellRecord> = crate::cells::flatten(stack);
    let stats = compute_size_stats_with(&cells, config.min_type_count)?;
    let (chains, matches) = link_chains_with_matches(stack, &stats, delta_z, config)?;
    let points = chains
        .iter()
        .map(|c| estimate_centroid(c, delta_z))
        .collect::<Result<_>>()?;
    Ok(Reconstruction {
        delta_z,
        stats,
        matches,
        chains,
        points,
    })
}
