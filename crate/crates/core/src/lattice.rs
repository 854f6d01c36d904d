//! Pairwise Markov random field on a 3D voxel lattice.
//!
//! A configuration assigns one of `K` cell types to each voxel. Its
//! unnormalised log-density is `sum_i alpha[x_i] + sum_{(i,j) in E} B[x_i, x_j]`
//! where `E` joins lattice neighbours (6- or 26-connectivity, free
//! boundaries). Labels are 0-based in memory and 1-based on disk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Voxel coordinate `(i, j, k)`, `k` being depth.
pub type Site = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// Face neighbours only.
    N6,
    /// Faces, edges and corners.
    #[default]
    N26,
}

impl Neighborhood {
    /// Offsets `(di, dj, dk)` of the neighbourhood, excluding the origin.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dk in -1isize..=1 {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let manhattan = di.abs() + dj.abs() + dk.abs();
                    let keep = match self {
                        Neighborhood::N6 => manhattan == 1,
                        Neighborhood::N26 => manhattan > 0,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dims: [usize; 3],
    pub neighborhood: Neighborhood,
}

impl LatticeSpec {
    pub fn new(dims: [usize; 3], neighborhood: Neighborhood) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "lattice dims must be positive, got {dims:?}"
            )));
        }
        Ok(Self { dims, neighborhood })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn contains(&self, site: Site) -> bool {
        site.iter().zip(self.dims.iter()).all(|(&s, &d)| s < d)
    }

    /// Linear index with `i` varying fastest.
    #[inline]
    pub fn index(&self, site: Site) -> usize {
        site[0] + self.dims[0] * (site[1] + self.dims[1] * site[2])
    }

    #[inline]
    pub fn site(&self, index: usize) -> Site {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub(crate) fn check_site(&self, site: Site) -> Result<()> {
        if self.contains(site) {
            Ok(())
        } else {
            Err(Error::ContractViolation(format!(
                "site {site:?} outside lattice {:?}",
                self.dims
            )))
        }
    }

    /// Calls `f` for every in-bounds neighbour of `site` (unchecked site).
    #[inline]
    pub(crate) fn for_each_neighbor(
        &self,
        offsets: &[[isize; 3]],
        site: Site,
        mut f: impl FnMut(Site),
    ) {
        for off in offsets {
            let mut n = [0usize; 3];
            let mut inside = true;
            for axis in 0..3 {
                let v = site[axis] as isize + off[axis];
                if v < 0 || v >= self.dims[axis] as isize {
                    inside = false;
                    break;
                }
                n[axis] = v as usize;
            }
            if inside {
                f(n);
            }
        }
    }
}

/// All in-bounds lattice neighbours of `site`.
pub fn neighbor_sites(spec: &LatticeSpec, site: Site) -> Result<Vec<Site>> {
    spec.check_site(site)?;
    let mut out = Vec::with_capacity(26);
    spec.for_each_neighbor(&spec.neighborhood.offsets(), site, |n| out.push(n));
    Ok(out)
}

/// Unary fields `alpha`, symmetric pairwise affinities `b` (row-major
/// `K x K`) and the ridge weight `lambda` used during estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrfParams {
    alpha: Vec<f64>,
    b: Vec<f64>,
    lambda: f64,
}

pub const MAX_TYPES: usize = 255;

impl MrfParams {
    /// Builds parameters from `alpha` and a square matrix `b`.
    ///
    /// `b` must be symmetric up to `1e-12` relative; it is stored exactly
    /// symmetrised.
    pub fn new(alpha: Vec<f64>, b: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        let k = alpha.len();
        if b.len() != k || b.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidInput(format!(
                "B must be {k}x{k} to match alpha"
            )));
        }
        Self::from_flat(alpha, b.into_iter().flatten().collect(), lambda)
    }

    pub fn from_flat(alpha: Vec<f64>, b: Vec<f64>, lambda: f64) -> Result<Self> {
        let k = alpha.len();
        if !(2..=MAX_TYPES).contains(&k) {
            return Err(Error::InvalidInput(format!(
                "number of types must be in 2..={MAX_TYPES}, got {k}"
            )));
        }
        if b.len() != k * k {
            return Err(Error::InvalidInput(format!(
                "B has {} entries, expected {}",
                b.len(),
                k * k
            )));
        }
        if alpha.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("alpha and B must be finite".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut sym = b;
        for a in 0..k {
            for c in (a + 1)..k {
                let (u, l) = (sym[a * k + c], sym[c * k + a]);
                let scale = u.abs().max(l.abs()).max(1.0);
                if (u - l).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "B is not symmetric at ({a},{c}): {u} vs {l}"
                    )));
                }
                let m = 0.5 * (u + l);
                sym[a * k + c] = m;
                sym[c * k + a] = m;
            }
        }
        Ok(Self {
            alpha,
            b: sym,
            lambda,
        })
    }

    /// Zero affinities, zero fields.
    pub fn zeros(k: usize, lambda: f64) -> Result<Self> {
        Self::from_flat(vec![0.0; k], vec![0.0; k * k], lambda)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Row-major `K x K`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    #[inline]
    pub fn b_at(&self, a: usize, c: usize) -> f64 {
        self.b[a * self.k() + c]
    }

    pub fn b_rows(&self) -> Vec<Vec<f64>> {
        self.b.chunks(self.k()).map(<[f64]>::to_vec).collect()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// Copy with `alpha` shifted so its last entry is zero.
    pub fn gauge_fixed(&self) -> Self {
        let last = *self.alpha.last().expect("K >= 2");
        let mut out = self.clone();
        for a in out.alpha.iter_mut() {
            *a -= last;
        }
        // exact zero regardless of rounding
        *out.alpha.last_mut().unwrap() = 0.0;
        out
    }

    /// Conditional type probabilities for a site with neighbour type counts
    /// `counts`, written into `out`.
    ///
    /// Max-subtracted softmax of `alpha[a] + sum_c B[a,c] * counts[c]`.
    #[inline]
    pub(crate) fn conditional_from_counts<C: Copy + Into<f64>>(&self, counts: &[C], out: &mut [f64]) {
        let k = self.k();
        let mut max = f64::NEG_INFINITY;
        for a in 0..k {
            let row = &self.b[a * k..(a + 1) * k];
            let mut s = self.alpha[a];
            for (bc, &n) in row.iter().zip(counts) {
                let n: f64 = n.into();
                if n != 0.0 {
                    s += bc * n;
                }
            }
            out[a] = s;
            if s > max {
                max = s;
            }
        }
        let mut z = 0.0;
        for v in out.iter_mut().take(k) {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in out.iter_mut().take(k) {
            *v /= z;
        }
    }
}

/// Dense label array over a lattice. Labels are 0-based (`0..K`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    spec: LatticeSpec,
    k: usize,
    labels: Vec<u8>,
    seed: u64,
}

impl LabelVolume {
    pub fn new(spec: LatticeSpec, k: usize, labels: Vec<u8>, seed: u64) -> Result<Self> {
        if !(2..=MAX_TYPES).contains(&k) {
            return Err(Error::InvalidInput(format!("K must be in 2..={MAX_TYPES}")));
        }
        if labels.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "label array has {} entries, lattice has {}",
                labels.len(),
                spec.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidInput(format!(
                "label {} outside 0..{k}",
                bad
            )));
        }
        Ok(Self {
            spec,
            k,
            labels,
            seed,
        })
    }

    /// Builds from 1-based labels as found in external files.
    pub fn from_one_based(spec: LatticeSpec, k: usize, labels: &[u8], seed: u64) -> Result<Self> {
        if labels.iter().any(|&l| l == 0) {
            return Err(Error::InvalidInput("external labels are 1-based; found 0".into()));
        }
        Self::new(spec, k, labels.iter().map(|&l| l - 1).collect(), seed)
    }

    pub fn to_one_based(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l + 1).collect()
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn label(&self, site: Site) -> u8 {
        self.labels[self.spec.index(site)]
    }

    /// Type frequencies over the whole volume.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        let n = self.labels.len() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    fn neighbor_counts(&self, offsets: &[[isize; 3]], site: Site, counts: &mut [u16]) {
        counts.iter_mut().for_each(|c| *c = 0);
        self.spec.for_each_neighbor(offsets, site, |n| {
            counts[self.labels[self.spec.index(n)] as usize] += 1;
        });
    }
}

fn check_k(volume: &LabelVolume, params: &MrfParams) -> Result<()> {
    if volume.k() != params.k() {
        return Err(Error::ContractViolation(format!(
            "volume has K={} but params have K={}",
            volume.k(),
            params.k()
        )));
    }
    Ok(())
}

/// Probability of each type at `site` given its neighbours' labels.
pub fn conditional_distribution(
    volume: &LabelVolume,
    site: Site,
    params: &MrfParams,
) -> Result<Vec<f64>> {
    check_k(volume, params)?;
    volume.spec.check_site(site)?;
    let mut counts = vec![0u16; params.k()];
    volume.neighbor_counts(&volume.spec.neighborhood.offsets(), site, &mut counts);
    let mut out = vec![0.0; params.k()];
    params.conditional_from_counts(&counts, &mut out);
    Ok(out)
}

/// Gibbs exponent of `volume`, each undirected edge counted once.
pub fn log_unnormalized_density(volume: &LabelVolume, params: &MrfParams) -> Result<f64> {
    check_k(volume, params)?;
    let spec = volume.spec;
    let offsets = spec.neighborhood.offsets();
    let mut total = 0.0;
    for idx in 0..spec.len() {
        let a = volume.labels[idx] as usize;
        total += params.alpha[a];
        let site = spec.site(idx);
        spec.for_each_neighbor(&offsets, site, |n| {
            let j = spec.index(n);
            if j > idx {
                total += params.b_at(a, volume.labels[j] as usize);
            }
        });
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub enum GibbsInit<'a> {
    UniformRandom,
    Given(&'a LabelVolume),
}

/// Site visiting order of one sweep.
///
/// N26 admits no two-colouring, so it is visited in raster order. N6 is
/// bipartite and is visited colour by colour (even parity first), each in
/// raster order.
fn sweep_order(spec: &LatticeSpec) -> Vec<u32> {
    let n = spec.len();
    match spec.neighborhood {
        Neighborhood::N26 => (0..n as u32).collect(),
        Neighborhood::N6 => {
            let mut order = Vec::with_capacity(n);
            for parity in 0..2 {
                for idx in 0..n {
                    let [i, j, k] = spec.site(idx);
                    if (i + j + k) % 2 == parity {
                        order.push(idx as u32);
                    }
                }
            }
            order
        }
    }
}

/// Runs `sweeps` single-site Gibbs sweeps.
///
/// Deterministic for a fixed `(spec, params, sweeps, seed, init)`: a
/// uniform initial configuration and then one uniform variate per site
/// update are drawn from a ChaCha8 stream seeded with `seed`.
pub fn gibbs_sample(
    spec: &LatticeSpec,
    params: &MrfParams,
    sweeps: usize,
    seed: u64,
    init: GibbsInit<'_>,
) -> Result<LabelVolume> {
    let k = params.k();
    let mut rng = rng::stream(seed);
    let mut volume = match init {
        GibbsInit::Given(v) => {
            if v.spec != *spec {
                return Err(Error::ContractViolation(
                    "initial volume lattice differs from requested lattice".into(),
                ));
            }
            check_k(v, params)?;
            v.clone()
        }
        GibbsInit::UniformRandom => {
            let labels = (0..spec.len())
                .map(|_| rng.random_range(0..k) as u8)
                .collect();
            LabelVolume::new(*spec, k, labels, seed)?
        }
    };
    volume.seed = seed;
    if sweeps == 0 {
        return Ok(volume);
    }

    let offsets = spec.neighborhood.offsets();
    let order = sweep_order(spec);
    let mut counts = vec![0u16; k];
    let mut probs = vec![0.0; k];
    for _ in 0..sweeps {
        for &idx in &order {
            let idx = idx as usize;
            volume.neighbor_counts(&offsets, spec.site(idx), &mut counts);
            params.conditional_from_counts(&counts, &mut probs);
            let u: f64 = rng.random();
            volume.labels[idx] = draw_categorical(&probs, u) as u8;
        }
    }
    Ok(volume)
}

/// Inverse-CDF draw; `u` in `[0, 1)`.
#[inline]
fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // rounding left acc slightly below 1; take the last type with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Mean fraction of a site's neighbours that share its label.
pub fn same_label_neighbor_fraction(volume: &LabelVolume) -> f64 {
    let spec = volume.spec;
    let offsets = spec.neighborhood.offsets();
    let mut same = 0usize;
    let mut total = 0usize;
    for idx in 0..spec.len() {
        let l = volume.labels[idx];
        spec.for_each_neighbor(&offsets, spec.site(idx), |n| {
            total += 1;
            if volume.labels[spec.index(n)] == l {
                same += 1;
            }
        });
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}
