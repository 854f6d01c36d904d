//! Matched-budget parameter-recovery study.
//!
//! Each trial simulates a fresh volume, observes it as `M` independent
//! planes, as an `M`-plane serial stack and in full, fits all three by
//! pseudo-likelihood and scores the estimates against the truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::percentile_sorted;
use crate::error::{Error, Result};
use crate::lattice::{gibbs_sample, GibbsInit, LabelVolume, LatticeSpec, MrfParams, Neighborhood};
use crate::mple::{fit, recovery_error, FitResult, MpleConfig, RecoveryReport};
use crate::rng::derive_seed;
use crate::sampling::{
    full_volume, sample_independent_planes, sample_serial_stack_random, Geometry, ObservationSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStudy {
    pub dims: [usize; 3],
    pub neighborhood: Neighborhood,
    pub truth: MrfParams,
    pub sweeps: usize,
    /// Planes per geometry (independent planes and serial stack alike).
    pub planes: usize,
    /// Serial-stack spacing in voxels.
    pub serial_delta_z: usize,
    pub seeds: Vec<u64>,
    pub mple: MpleConfig,
    pub geometries: Vec<Geometry>,
}

/// Child-stream ids derived from a trial seed.
pub mod streams {
    pub const VOLUME: u64 = 0;
    pub const PLANES: u64 = 1;
    pub const SERIAL: u64 = 2;
}

pub fn simulate_volume(study: &RecoveryStudy, seed: u64) -> Result<LabelVolume> {
    let spec = LatticeSpec::new(study.dims, study.neighborhood)?;
    gibbs_sample(
        &spec,
        &study.truth,
        study.sweeps,
        derive_seed(seed, streams::VOLUME),
        GibbsInit::UniformRandom,
    )
}

pub fn observe(
    study: &RecoveryStudy,
    volume: &LabelVolume,
    geometry: Geometry,
    seed: u64,
) -> Result<ObservationSet> {
    match geometry {
        Geometry::Independent2D => {
            sample_independent_planes(volume, study.planes, derive_seed(seed, streams::PLANES))
        }
        Geometry::Serial3D => sample_serial_stack_random(
            volume,
            study.serial_delta_z,
            study.planes,
            derive_seed(seed, streams::SERIAL),
        ),
        Geometry::FullVolume => Ok(full_volume(volume)),
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub report: RecoveryReport,
    pub fit: FitResult,
    pub plane_zs: Vec<usize>,
}

/// Fits one observation of `volume` and scores it.
pub fn fit_and_score(
    study: &RecoveryStudy,
    volume: &LabelVolume,
    obs: &ObservationSet,
    seed: u64,
) -> Result<TrialOutcome> {
    let fitted = fit(obs, volume, study.truth.k(), &study.mple)?;
    let report = recovery_error(&fitted.params, &study.truth)?.for_trial(obs.geometry, seed, obs.budget);
    Ok(TrialOutcome {
        report,
        fit: fitted,
        plane_zs: obs.plane_zs.clone(),
    })
}

pub fn run_trial(study: &RecoveryStudy, seed: u64) -> Result<Vec<TrialOutcome>> {
    let volume = simulate_volume(study, seed)?;
    study
        .geometries
        .iter()
        .map(|&g| {
            let obs = observe(study, &volume, g, seed)?;
            fit_and_score(study, &volume, &obs, seed)
        })
        .collect()
}

/// All trials, ordered by seed then geometry.
pub fn run_study(study: &RecoveryStudy) -> Result<Vec<TrialOutcome>> {
    if study.seeds.is_empty() {
        return Err(Error::InvalidInput("recovery study needs at least one seed".into()));
    }
    let per_seed: Vec<Vec<TrialOutcome>> = study
        .seeds
        .par_iter()
        .map(|&s| run_trial(study, s))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub geometry: Geometry,
    pub trials: usize,
    pub median_mae_alpha: f64,
    pub median_mae_b: f64,
    pub iqr_mae_b: f64,
    pub var_mae_b: f64,
    pub mean_rmse_alpha: f64,
    pub mean_rmse_b: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    percentile_sorted(v, 0.5)
}

fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Per-geometry summary in first-appearance order.
pub fn summarize(reports: &[RecoveryReport]) -> Vec<GeometrySummary> {
    let mut geoms: Vec<Geometry> = Vec::new();
    for r in reports {
        if let Some(g) = r.geometry {
            if !geoms.contains(&g) {
                geoms.push(g);
            }
        }
    }
    geoms
        .into_iter()
        .map(|g| {
            let rows: Vec<&RecoveryReport> = reports.iter().filter(|r| r.geometry == Some(g)).collect();
            let mut a: Vec<f64> = rows.iter().map(|r| r.mae_alpha).collect();
            let mut b: Vec<f64> = rows.iter().map(|r| r.mae_b).collect();
            let var_b = variance(&b);
            let med_b = median(&mut b);
            let iqr = percentile_sorted(&b, 0.75) - percentile_sorted(&b, 0.25);
            GeometrySummary {
                geometry: g,
                trials: rows.len(),
                median_mae_alpha: median(&mut a),
                median_mae_b: med_b,
                iqr_mae_b: iqr,
                var_mae_b: var_b,
                mean_rmse_alpha: rows.iter().map(|r| r.rmse_alpha).sum::<f64>() / rows.len() as f64,
                mean_rmse_b: rows.iter().map(|r| r.rmse_b).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

/// One-sided exact sign test: probability of at least `wins` successes in
/// `n` fair coin flips (ties dropped by the caller).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // sum_{i >= wins} C(n, i) / 2^n, accumulated in log space for large n
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut total = 0.0;
    for i in wins..=n {
        total += (ln_choose(n, i) - ln2n).exp();
    }
    total.min(1.0)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Paired comparison of `larger` vs `smaller` geometry by seed: number of
/// seeds where `larger` has the strictly greater `MAE(B)` and the number of
/// untied pairs.
pub fn paired_wins(reports: &[RecoveryReport], larger: Geometry, smaller: Geometry) -> (usize, usize) {
    let mut wins = 0;
    let mut n = 0;
    for r in reports.iter().filter(|r| r.geometry == Some(larger)) {
        if let Some(o) = reports
            .iter()
            .find(|o| o.geometry == Some(smaller) && o.seed == r.seed)
        {
            if r.mae_b != o.mae_b {
                n += 1;
                if r.mae_b > o.mae_b {
                    wins += 1;
                }
            }
        }
    }
    (wins, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        // P(X >= 15 | n = 20) = 21700 / 2^20
        assert!((sign_test_p(15, 20) - 21700.0 / 1048576.0).abs() < 1e-12);
        assert!((sign_test_p(0, 5) - 1.0).abs() < 1e-12);
        assert!((sign_test_p(5, 5) - 1.0 / 32.0).abs() < 1e-12);
        assert_eq!(sign_test_p(0, 0), 1.0);
    }

    #[test]
    fn trial_is_deterministic() {
        let study = RecoveryStudy {
            dims: [8, 8, 8],
            neighborhood: Neighborhood::N26,
            truth: MrfParams::new(vec![0.1, 0.0], vec![vec![0.1, 0.0], vec![0.0, 0.05]], 0.0).unwrap(),
            sweeps: 5,
            planes: 3,
            serial_delta_z: 1,
            seeds: vec![1, 2],
            mple: MpleConfig::default(),
            geometries: vec![Geometry::Independent2D, Geometry::Serial3D, Geometry::FullVolume],
        };
        let a = run_study(&study).unwrap();
        let b = run_study(&study).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.report, y.report);
        }
        let reports: Vec<_> = a.iter().map(|t| t.report.clone()).collect();
        let s = summarize(&reports);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].geometry, Geometry::Independent2D);
        assert_eq!(a[0].report.budget, a[1].report.budget);
    }
}
