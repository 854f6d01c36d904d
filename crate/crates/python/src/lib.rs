//! Python bindings for the `sectionstack` core.
//!
//! Cells cross the boundary as `(cell_id, x, y, z, area, type, section)`
//! tuples; results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sectionstack::cells::{group_into_sections, CellRecord};
use sectionstack::config::ExperimentConfig;
use sectionstack::lattice::{self, GibbsInit, LabelVolume, LatticeSpec, MrfParams, Neighborhood};
use sectionstack::matching::{self, MatchingConfig};
use sectionstack::mple::{self, MpleConfig};
use sectionstack::pipeline::{self, Command, RunOptions};
use sectionstack::sampling::{self, Geometry};
use sectionstack::{spatial_stats, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::InvalidBudget(_) | Error::Schema(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn neighborhood(s: &str) -> PyResult<Neighborhood> {
    match s {
        "n6" => Ok(Neighborhood::N6),
        "n26" => Ok(Neighborhood::N26),
        other => Err(PyValueError::new_err(format!("neighborhood must be 'n6' or 'n26', got '{other}'"))),
    }
}

type CellTuple = (String, f64, f64, f64, f64, String, i64);

fn cells_from(tuples: Vec<CellTuple>) -> Vec<CellRecord> {
    tuples
        .into_iter()
        .map(|(cell_id, x, y, z, area, type_label, section_index)| CellRecord {
            cell_id,
            x,
            y,
            z,
            area,
            type_label,
            section_index,
            true_volume_id: None,
        })
        .collect()
}

/// Unary fields `alpha` and symmetric pairwise affinities `b`.
#[pyclass(name = "MrfParams", module = "sectionstack_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMrfParams {
    inner: MrfParams,
}

#[pymethods]
impl PyMrfParams {
    #[new]
    #[pyo3(signature = (alpha, b, lam = 0.0))]
    fn new(alpha: Vec<f64>, b: Vec<Vec<f64>>, lam: f64) -> PyResult<Self> {
        Ok(Self {
            inner: MrfParams::new(alpha, b, lam).map_err(to_py)?,
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        self.inner.b_rows()
    }

    fn __repr__(&self) -> String {
        format!("MrfParams(alpha={:?}, b={:?})", self.inner.alpha(), self.inner.b_rows())
    }
}

/// A label volume; labels are 0-based.
#[pyclass(name = "LabelVolume", module = "sectionstack_py", skip_from_py_object)]
struct PyLabelVolume {
    inner: LabelVolume,
}

#[pymethods]
impl PyLabelVolume {
    #[new]
    #[pyo3(signature = (dims, k, labels, neighborhood = "n26"))]
    fn new(dims: [usize; 3], k: usize, labels: Vec<u8>, neighborhood: &str) -> PyResult<Self> {
        let spec = LatticeSpec::new(dims, self::neighborhood(neighborhood)?).map_err(to_py)?;
        Ok(Self {
            inner: LabelVolume::new(spec, k, labels, 0).map_err(to_py)?,
        })
    }

    /// Gibbs-samples a volume from a uniform random start.
    #[staticmethod]
    #[pyo3(signature = (dims, params, sweeps, seed, neighborhood = "n26"))]
    fn simulate(
        py: Python<'_>,
        dims: [usize; 3],
        params: &PyMrfParams,
        sweeps: usize,
        seed: u64,
        neighborhood: &str,
    ) -> PyResult<Self> {
        let spec = LatticeSpec::new(dims, self::neighborhood(neighborhood)?).map_err(to_py)?;
        let p = params.inner.clone();
        let inner = py
            .detach(|| lattice::gibbs_sample(&spec, &p, sweeps, seed, GibbsInit::UniformRandom))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.spec().dims
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    /// Labels in lattice order, `x` fastest.
    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    fn label(&self, site: [usize; 3]) -> PyResult<u8> {
        if !self.inner.spec().contains(site) {
            return Err(PyValueError::new_err(format!("site {site:?} outside the volume")));
        }
        Ok(self.inner.label(site))
    }

    fn conditional(&self, site: [usize; 3], params: &PyMrfParams) -> PyResult<Vec<f64>> {
        lattice::conditional_distribution(&self.inner, site, &params.inner).map_err(to_py)
    }

    fn frequencies(&self) -> Vec<f64> {
        self.inner.frequencies()
    }
}

/// Observes `volume` under a geometry and fits it by pseudo-likelihood.
#[pyfunction]
#[pyo3(signature = (volume, geometry, planes = 6, seed = 0, serial_delta_z = 1, lam = 1e-3, max_iters = 500))]
#[allow(clippy::too_many_arguments)]
fn fit_mple<'py>(
    py: Python<'py>,
    volume: &PyLabelVolume,
    geometry: &str,
    planes: usize,
    seed: u64,
    serial_delta_z: usize,
    lam: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let g = Geometry::parse(geometry).map_err(to_py)?;
    let v = &volume.inner;
    let cfg = MpleConfig {
        lambda: lam,
        max_iters,
        ..MpleConfig::default()
    };
    let (obs, fitted) = py
        .detach(|| {
            let obs = match g {
                Geometry::Independent2D => sampling::sample_independent_planes(v, planes, seed)?,
                Geometry::Serial3D => sampling::sample_serial_stack_random(v, serial_delta_z, planes, seed)?,
                Geometry::FullVolume => sampling::full_volume(v),
            };
            let fitted = mple::fit(&obs, v, v.k(), &cfg)?;
            Ok::<_, Error>((obs, fitted))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("params", PyMrfParams { inner: fitted.params })?;
    d.set_item("converged", fitted.converged)?;
    d.set_item("iterations", fitted.iterations)?;
    d.set_item("objective", fitted.objective)?;
    d.set_item("plane_zs", obs.plane_zs)?;
    d.set_item("budget", obs.budget)?;
    Ok(d)
}

/// Gauge-fixed MAE and RMSE of an estimate against the truth.
#[pyfunction]
fn recovery_error<'py>(py: Python<'py>, estimate: &PyMrfParams, truth: &PyMrfParams) -> PyResult<Bound<'py, PyDict>> {
    let r = mple::recovery_error(&estimate.inner, &truth.inner).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mae_alpha", r.mae_alpha)?;
    d.set_item("rmse_alpha", r.rmse_alpha)?;
    d.set_item("mae_b", r.mae_b)?;
    d.set_item("rmse_b", r.rmse_b)?;
    Ok(d)
}

/// Minimum-cost perfect assignment of a square cost matrix; returns the
/// column chosen for each row.
#[pyfunction]
fn linear_assignment(cost: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("cost matrix must be square"));
    }
    let flat: Vec<f64> = cost.into_iter().flatten().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(PyValueError::new_err("costs must be finite"));
    }
    Ok(matching::hungarian(&flat, n))
}

/// Links cross-sections across sections and returns one 3D point per chain.
#[pyfunction]
#[pyo3(signature = (cells, delta_z = None, kappa = 1.0))]
fn reconstruct<'py>(
    py: Python<'py>,
    cells: Vec<CellTuple>,
    delta_z: Option<f64>,
    kappa: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = MatchingConfig {
        kappa,
        ..MatchingConfig::default()
    };
    let rec = py
        .detach(|| {
            let sections = group_into_sections(cells_from(cells))?;
            let dz = match delta_z {
                Some(d) => d,
                None => matching::infer_delta_z(&sections)
                    .ok_or_else(|| Error::InvalidInput("cannot infer spacing from one section".into()))?,
            };
            matching::reconstruct(&sections, dz, &config)
        })
        .map_err(to_py)?;
    rec.points
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("cell_id", &p.cell_id)?;
            d.set_item("x", p.x)?;
            d.set_item("y", p.y)?;
            d.set_item("z", p.z)?;
            d.set_item("type", &p.type_label)?;
            d.set_item("provenance", p.provenance.as_str())?;
            d.set_item("depth_interval", p.depth_interval)?;
            d.set_item("member_ids", &p.member_ids)?;
            d.set_item("clamped", p.clamped)?;
            Ok(d)
        })
        .collect()
}

/// Permutation z-scores of every partner type around `target` in one section.
#[pyfunction]
#[pyo3(signature = (cells, target, radius, n_permutations = 1000, seed = 0))]
fn neighborhood_enrichment<'py>(
    py: Python<'py>,
    cells: Vec<CellTuple>,
    target: &str,
    radius: f64,
    n_permutations: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let outcome = py
        .detach(|| {
            let mut sections = group_into_sections(cells_from(cells))?;
            if sections.len() != 1 {
                return Err(Error::InvalidInput(format!("expected one section, got {}", sections.len())));
            }
            spatial_stats::neighborhood_enrichment(&sections.remove(0), target, radius, n_permutations, seed)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    for r in &outcome.results {
        d.set_item(&r.partner_type, r.z_score)?;
    }
    Ok(d)
}

/// Probability that `m` random sections hold at least `k` cells of a type.
#[pyfunction]
#[pyo3(signature = (cells, type_label, m, k, trials = 1000, seed = 0))]
fn detectability(
    py: Python<'_>,
    cells: Vec<CellTuple>,
    type_label: &str,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> PyResult<f64> {
    py.detach(|| {
        let sections = group_into_sections(cells_from(cells))?;
        spatial_stats::detectability(&sections, type_label, m, k, trials, seed)
    })
    .map_err(to_py)
}

/// Runs one CLI subcommand; returns the written output paths.
#[pyfunction]
#[pyo3(signature = (command, config, out_dir, inputs = Vec::new(), cells = None))]
fn run_pipeline(
    py: Python<'_>,
    command: &str,
    config: PathBuf,
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    cells: Option<PathBuf>,
) -> PyResult<Vec<String>> {
    let command: Command = serde_json::from_value(serde_json::Value::String(command.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown subcommand '{command}'")))?;
    let report = py
        .detach(|| {
            let (config, config_hash) = ExperimentConfig::load(&config)?;
            pipeline::run_pipeline(&RunOptions {
                command,
                config,
                config_hash,
                out_dir,
                inputs,
                cells,
            })
        })
        .map_err(to_py)?;
    Ok(report.outputs.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn sectionstack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMrfParams>()?;
    m.add_class::<PyLabelVolume>()?;
    m.add_function(wrap_pyfunction!(fit_mple, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_error, m)?)?;
    m.add_function(wrap_pyfunction!(linear_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(neighborhood_enrichment, m)?)?;
    m.add_function(wrap_pyfunction!(detectability, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
