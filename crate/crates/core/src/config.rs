//! TOML experiment configuration.
//!
//! One file holds a block per subcommand. Unknown keys are rejected and
//! every numeric parameter is checked at load time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advise::AdviseThresholds;
use crate::error::{Error, Result};
use crate::evaluation::SphereStackConfig;
use crate::lattice::{MrfParams, Neighborhood};
use crate::matching::MatchingConfig;
use crate::mple::MpleConfig;
use crate::sampling::Geometry;
use crate::structures::ProfileValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for every stochastic step not seeded per trial.
    pub seed: u64,
    pub simulation: Option<SimulationConfig>,
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub estimation: MpleConfig,
    pub stats: Option<StatsConfig>,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    pub evaluation: Option<EvaluationConfig>,
    pub structures: Option<StructuresConfig>,
    #[serde(default)]
    pub advise: AdviseThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dims: [usize; 3],
    pub k: usize,
    #[serde(default)]
    pub neighborhood: Neighborhood,
    pub alpha: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub sweeps: usize,
    /// One volume per trial seed.
    pub seeds: Vec<u64>,
}

impl SimulationConfig {
    pub fn params(&self) -> Result<MrfParams> {
        MrfParams::new(self.alpha.clone(), self.b.clone(), 0.0).map_err(|e| Error::Config(e.to_string()))
    }
}

fn default_geometries() -> Vec<Geometry> {
    vec![Geometry::Independent2D, Geometry::Serial3D, Geometry::FullVolume]
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Planes per geometry.
    pub planes: usize,
    /// Serial-stack spacing in voxels.
    #[serde(default = "one_usize")]
    pub serial_delta_z: usize,
    #[serde(default = "default_geometries")]
    pub geometries: Vec<Geometry>,
    /// Optional voxel budget; must equal `planes * nx * ny` when given.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub target_type: Option<String>,
    pub radius: f64,
    pub n_permutations: usize,
    /// Sections per detectability draw.
    pub m: usize,
    /// Cells needed for a detection.
    pub k: usize,
    pub trials: usize,
    /// Pitch used when simulated volume planes stand in for sections.
    pub voxel_um: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            target_type: None,
            radius: 30.0,
            n_permutations: 1000,
            m: 20,
            k: 100,
            trials: 1000,
            voxel_um: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    /// Section spacing; inferred from the data when absent.
    pub delta_z: Option<f64>,
}

fn default_bin() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub delta_z: Vec<f64>,
    /// Offsets to evaluate; every residue when absent.
    pub offsets: Option<Vec<f64>>,
    /// Base spacing of an external reference stack.
    pub base_dz: Option<f64>,
    /// Generate the reference instead of reading one.
    pub synthetic: Option<SphereStackConfig>,
    #[serde(default = "default_bin")]
    pub histogram_bin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceQueryConfig {
    pub source: String,
    /// A type label, or `"structure"` for the largest structure.
    pub target: String,
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuresConfig {
    #[serde(default)]
    pub type_filter: Vec<String>,
    /// Defaults to twice the median radius of the first filtered type.
    pub link_radius: Option<f64>,
    pub band_radius: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_value")]
    pub value: ProfileValue,
    #[serde(default)]
    pub queries: Vec<DistanceQueryConfig>,
}

fn default_value() -> ProfileValue {
    ProfileValue::Composition
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parsed config and the SHA-256 of its text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, crate::io::sha256_hex(text.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        self.estimation.validate()?;
        self.matching.validate()?;
        self.advise.validate()?;
        if let Some(s) = &self.simulation {
            if s.k != s.alpha.len() {
                return Err(Error::Config(format!(
                    "simulation.k = {} but alpha has {} entries",
                    s.k,
                    s.alpha.len()
                )));
            }
            s.params()?;
            if s.dims.iter().any(|&d| d == 0) {
                return Err(Error::Config("simulation.dims must be positive".into()));
            }
            if s.seeds.is_empty() {
                return Err(Error::Config("simulation.seeds must not be empty".into()));
            }
        }
        if let Some(s) = &self.sampling {
            if s.planes == 0 || s.serial_delta_z == 0 {
                return Err(Error::Config("sampling.planes and serial_delta_z must be >= 1".into()));
            }
            if s.geometries.is_empty() {
                return Err(Error::Config("sampling.geometries must not be empty".into()));
            }
            if let (Some(b), Some(sim)) = (s.budget, &self.simulation) {
                let expected = s.planes * sim.dims[0] * sim.dims[1];
                if b != expected {
                    return Err(Error::Config(format!(
                        "sampling.budget = {b} but {} planes of {}x{} hold {expected} voxels",
                        s.planes, sim.dims[0], sim.dims[1]
                    )));
                }
            }
        }
        if let Some(s) = &self.stats {
            positive("stats.radius", s.radius)?;
            positive("stats.voxel_um", s.voxel_um)?;
            if s.n_permutations < 2 || s.trials == 0 || s.m == 0 {
                return Err(Error::Config(
                    "stats needs n_permutations >= 2, trials >= 1 and m >= 1".into(),
                ));
            }
        }
        if let Some(dz) = self.reconstruct.delta_z {
            positive("reconstruct.delta_z", dz)?;
        }
        if let Some(e) = &self.evaluation {
            if e.delta_z.is_empty() {
                return Err(Error::Config("evaluation.delta_z must not be empty".into()));
            }
            for &dz in &e.delta_z {
                positive("evaluation.delta_z", dz)?;
            }
            positive("evaluation.histogram_bin", e.histogram_bin)?;
            if let Some(b) = e.base_dz {
                positive("evaluation.base_dz", b)?;
            }
            if e.synthetic.is_none() && e.base_dz.is_none() {
                return Err(Error::Config(
                    "evaluation needs either a synthetic block or base_dz for an input stack".into(),
                ));
            }
        }
        if let Some(s) = &self.structures {
            positive("structures.band_radius", s.band_radius)?;
            if let Some(r) = s.link_radius {
                positive("structures.link_radius", r)?;
            }
            if s.bins < 2 {
                return Err(Error::Config("structures.bins must be >= 2".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 1\n";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.estimation, MpleConfig::default());
        assert_eq!(c.matching.kappa, 1.0);
        assert!(c.simulation.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e = ExperimentConfig::parse("seed = 1\n\n[estimation]\nlamda = 0.1\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Config(_)));
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("lamda"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn numeric_checks() {
        let bad_lambda = "seed = 1\n[estimation]\nlambda = -1.0\n";
        assert!(matches!(ExperimentConfig::parse(bad_lambda), Err(Error::Config(_))));
        let bad_k = r#"
seed = 1
[simulation]
dims = [4, 4, 4]
k = 3
alpha = [0.0, 0.0]
b = [[0.0, 0.0], [0.0, 0.0]]
sweeps = 2
seeds = [1]
"#;
        assert!(matches!(ExperimentConfig::parse(bad_k), Err(Error::Config(_))));
        let asym = bad_k.replace("k = 3", "k = 2").replace("[[0.0, 0.0], [0.0, 0.0]]", "[[0.0, 1.0], [0.0, 0.0]]");
        assert!(matches!(ExperimentConfig::parse(&asym), Err(Error::Config(_))));
        let budget = bad_k.replace("k = 3", "k = 2") + "[sampling]\nplanes = 2\nbudget = 31\n";
        assert!(matches!(ExperimentConfig::parse(&budget), Err(Error::Config(_))));
        let ok = bad_k.replace("k = 3", "k = 2") + "[sampling]\nplanes = 2\nbudget = 32\n";
        ExperimentConfig::parse(&ok).unwrap();
    }
}
