//! Regularised maximum pseudo-likelihood for the lattice MRF.
//!
//! The objective is `sum_{i in obs} log p(x_i | observed neighbours) - lambda * ||B||_F^2`.
//! Each observed site only contributes its label and the type counts of
//! the neighbours the observation geometry exposes, so sites are first
//! compressed into distinct `(label, counts)` patterns with multiplicities.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LabelVolume, MrfParams};
use crate::optim::{self, OptimOptions, Optimizer};
use crate::sampling::{observed_offsets, Geometry, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// `alpha[K-1] = 0`, applied by subtraction after optimisation.
    #[default]
    AlphaLastZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpleConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Tolerance on the infinity norm of the per-site (objective / |obs|) gradient.
    pub grad_tolerance: f64,
    pub gauge: Gauge,
    pub optimizer: Optimizer,
    /// Box on every `alpha` entry during optimisation.
    pub alpha_bound: f64,
}

impl Default for MpleConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            max_iters: 500,
            grad_tolerance: 1e-7,
            gauge: Gauge::AlphaLastZero,
            optimizer: Optimizer::LbfgsLike,
            alpha_bound: 30.0,
        }
    }
}

impl MpleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::Config("grad_tolerance must be > 0".into()));
        }
        if !(self.alpha_bound > 0.0) {
            return Err(Error::Config("alpha_bound must be > 0".into()));
        }
        Ok(())
    }
}

/// Observed sites compressed to `(label, neighbour counts)` patterns.
#[derive(Debug, Clone)]
pub struct SiteFeatures {
    k: usize,
    labels: Vec<u8>,
    /// `patterns x K`
    counts: Vec<f64>,
    weights: Vec<f64>,
    n_sites: usize,
}

impl SiteFeatures {
    pub fn from_observation(obs: &ObservationSet, volume: &LabelVolume) -> Result<Self> {
        if obs.observed_sites.is_empty() {
            return Err(Error::InvalidInput("observation set is empty".into()));
        }
        let spec = volume.spec();
        let k = volume.k();
        let mask = obs.mask(spec);
        let offsets = observed_offsets(obs, spec);
        let mut patterns: HashMap<(u8, Vec<u16>), usize> = HashMap::new();
        let mut order: Vec<(u8, Vec<u16>)> = Vec::new();
        let mut counts = vec![0u16; k];
        for &site in &obs.observed_sites {
            spec.check_site(site)?;
            counts.iter_mut().for_each(|c| *c = 0);
            spec.for_each_neighbor(&offsets, site, |n| {
                let j = spec.index(n);
                if mask[j] {
                    counts[volume.labels()[j] as usize] += 1;
                }
            });
            let key = (volume.label(site), counts.clone());
            match patterns.get_mut(&key) {
                Some(w) => *w += 1,
                None => {
                    patterns.insert(key.clone(), 1);
                    order.push(key);
                }
            }
        }
        let mut labels = Vec::with_capacity(order.len());
        let mut flat = Vec::with_capacity(order.len() * k);
        let mut weights = Vec::with_capacity(order.len());
        for key in order {
            weights.push(patterns[&key] as f64);
            labels.push(key.0);
            flat.extend(key.1.iter().map(|&c| c as f64));
        }
        Ok(Self {
            k,
            labels,
            counts: flat,
            weights,
            n_sites: obs.observed_sites.len(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_patterns(&self) -> usize {
        self.labels.len()
    }

    /// Empirical type frequencies over the observed sites.
    pub fn type_frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.k];
        for (l, w) in self.labels.iter().zip(&self.weights) {
            f[*l as usize] += w;
        }
        f.iter_mut().for_each(|v| *v /= self.n_sites as f64);
        f
    }

    /// Penalised pseudo-log-likelihood and, optionally, its raw gradient
    /// parts `(d/d alpha, G)` with `G[a][c] = sum_i (1{x_i=a} - p_ia) n_ic`.
    fn evaluate(&self, params: &MrfParams, mut grad: Option<(&mut [f64], &mut [f64])>) -> f64 {
        let k = self.k;
        let mut probs = vec![0.0; k];
        let mut total = 0.0;
        if let Some((ga, gb)) = grad.as_mut() {
            ga.iter_mut().for_each(|v| *v = 0.0);
            gb.iter_mut().for_each(|v| *v = 0.0);
        }
        for (p, (&label, &w)) in self.labels.iter().zip(&self.weights).enumerate() {
            let counts = &self.counts[p * k..(p + 1) * k];
            params.conditional_from_counts(counts, &mut probs);
            let x = label as usize;
            total += w * probs[x].ln();
            if let Some((ga, gb)) = grad.as_mut() {
                for a in 0..k {
                    let resid = w * (if a == x { 1.0 } else { 0.0 } - probs[a]);
                    ga[a] += resid;
                    let row = &mut gb[a * k..(a + 1) * k];
                    for (g, &n) in row.iter_mut().zip(counts) {
                        *g += resid * n;
                    }
                }
            }
        }
        // log p underflows to -inf only when a probability is exactly zero
        if total == f64::NEG_INFINITY {
            total = f64::MIN;
        }
        let frob: f64 = params.b().iter().map(|v| v * v).sum();
        total - params.lambda() * frob
    }
}

/// Gradient of the penalised pseudo-log-likelihood.
///
/// `b` is the Frobenius gradient restricted to symmetric matrices:
/// `(G + G^T) / 2 - 2 * lambda * B`. Perturbing the pair `B[a][c], B[c][a]`
/// together by `h` changes the objective by `2 h b[a][c]` (off-diagonal) or
/// `h b[a][a]` (diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct MrfGradient {
    pub alpha: Vec<f64>,
    /// Row-major `K x K`, symmetric.
    pub b: Vec<f64>,
}

fn check_params(volume: &LabelVolume, params: &MrfParams) -> Result<()> {
    if volume.k() != params.k() {
        return Err(Error::InvalidInput(format!(
            "volume K={} differs from params K={}",
            volume.k(),
            params.k()
        )));
    }
    Ok(())
}

pub fn pseudo_log_likelihood(
    obs: &ObservationSet,
    volume: &LabelVolume,
    params: &MrfParams,
) -> Result<f64> {
    check_params(volume, params)?;
    let feats = SiteFeatures::from_observation(obs, volume)?;
    Ok(feats.evaluate(params, None))
}

pub fn pseudo_ll_gradient(
    obs: &ObservationSet,
    volume: &LabelVolume,
    params: &MrfParams,
) -> Result<MrfGradient> {
    check_params(volume, params)?;
    let feats = SiteFeatures::from_observation(obs, volume)?;
    Ok(gradient_from_features(&feats, params))
}

fn gradient_from_features(feats: &SiteFeatures, params: &MrfParams) -> MrfGradient {
    let k = feats.k;
    let mut ga = vec![0.0; k];
    let mut g = vec![0.0; k * k];
    feats.evaluate(params, Some((&mut ga, &mut g)));
    MrfGradient {
        alpha: ga,
        b: symmetrized_b_gradient(&g, params),
    }
}

fn symmetrized_b_gradient(g: &[f64], params: &MrfParams) -> Vec<f64> {
    let k = params.k();
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        for c in 0..k {
            out[a * k + c] =
                0.5 * (g[a * k + c] + g[c * k + a]) - 2.0 * params.lambda() * params.b_at(a, c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Gauge-fixed estimate (`alpha[K-1] == 0`).
    pub params: MrfParams,
    pub converged: bool,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    /// Penalised pseudo-log-likelihood at the estimate.
    pub objective: f64,
    /// Penalised objective after every accepted optimiser step.
    pub objective_trace: Vec<f64>,
}

fn upper_len(k: usize) -> usize {
    k * (k + 1) / 2
}

fn unpack(theta: &[f64], k: usize, lambda: f64) -> MrfParams {
    let alpha = theta[..k].to_vec();
    let mut b = vec![0.0; k * k];
    let mut t = k;
    for a in 0..k {
        for c in a..k {
            b[a * k + c] = theta[t];
            b[c * k + a] = theta[t];
            t += 1;
        }
    }
    MrfParams::from_flat(alpha, b, lambda).expect("finite unpacked parameters")
}

/// Fits `(alpha, B)` by maximising the penalised pseudo-likelihood.
///
/// Non-convergence within `max_iters` is reported through
/// [`FitResult::converged`], not as an error.
pub fn fit(obs: &ObservationSet, volume: &LabelVolume, k: usize, config: &MpleConfig) -> Result<FitResult> {
    config.validate()?;
    if volume.k() != k {
        return Err(Error::InvalidInput(format!(
            "volume has K={} but fit requested K={k}",
            volume.k()
        )));
    }
    let feats = SiteFeatures::from_observation(obs, volume)?;
    fit_features(&feats, config)
}

pub fn fit_features(feats: &SiteFeatures, config: &MpleConfig) -> Result<FitResult> {
    config.validate()?;
    let k = feats.k;
    let dim = k + upper_len(k);
    let scale = 1.0 / feats.n_sites as f64;
    let lambda = config.lambda;

    let mut ga = vec![0.0; k];
    let mut gfull = vec![0.0; k * k];
    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let params = unpack(theta, k, lambda);
        let value = feats.evaluate(&params, Some((&mut ga, &mut gfull)));
        let gb = symmetrized_b_gradient(&gfull, &params);
        for a in 0..k {
            grad[a] = -ga[a] * scale;
        }
        let mut t = k;
        for a in 0..k {
            for c in a..k {
                let factor = if a == c { 1.0 } else { 2.0 };
                grad[t] = -factor * gb[a * k + c] * scale;
                t += 1;
            }
        }
        -value * scale
    };

    let mut bounds = vec![None; dim];
    for b in bounds.iter_mut().take(k) {
        *b = Some((-config.alpha_bound, config.alpha_bound));
    }
    let opts = OptimOptions {
        max_iters: config.max_iters,
        grad_tolerance: config.grad_tolerance,
        method: config.optimizer,
        ..Default::default()
    };
    let res = optim::minimize(objective, &vec![0.0; dim], &bounds, &opts);
    if !res.value.is_finite() {
        return Err(Error::Numeric("pseudo-likelihood became non-finite".into()));
    }
    let params = unpack(&res.x, k, lambda).gauge_fixed();
    let n = feats.n_sites as f64;
    Ok(FitResult {
        objective: feats.evaluate(&params, None),
        params,
        converged: res.converged,
        iterations: res.iterations,
        grad_inf_norm: res.grad_inf_norm,
        objective_trace: res.trace.iter().map(|v| -v * n).collect(),
    })
}

/// Parameter recovery errors for one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub geometry: Option<Geometry>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub mae_alpha: f64,
    pub rmse_alpha: f64,
    pub mae_b: f64,
    pub rmse_b: f64,
}

impl RecoveryReport {
    pub fn for_trial(mut self, geometry: Geometry, seed: u64, budget: usize) -> Self {
        self.geometry = Some(geometry);
        self.seed = Some(seed);
        self.budget = Some(budget);
        self
    }
}

fn mae_rmse(diffs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for d in diffs {
        abs += d.abs();
        sq += d * d;
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (abs / n as f64, (sq / n as f64).sqrt())
    }
}

/// Blockwise MAE/RMSE between gauge-fixed estimate and truth.
///
/// `alpha` is compared on its `K-1` free entries after both sides are
/// shifted to `alpha[K-1] = 0`; `B` on the upper triangle including the
/// diagonal.
pub fn recovery_error(est: &MrfParams, truth: &MrfParams) -> Result<RecoveryReport> {
    let k = truth.k();
    if est.k() != k {
        return Err(Error::InvalidInput(format!(
            "estimate K={} differs from truth K={k}",
            est.k()
        )));
    }
    let (e, t) = (est.gauge_fixed(), truth.gauge_fixed());
    let (mae_alpha, rmse_alpha) =
        mae_rmse(e.alpha()[..k - 1].iter().zip(&t.alpha()[..k - 1]).map(|(a, b)| a - b));
    let (mae_b, rmse_b) = mae_rmse(
        (0..k).flat_map(|a| (a..k).map(move |c| (a, c))).map(|(a, c)| e.b_at(a, c) - t.b_at(a, c)),
    );
    Ok(RecoveryReport {
        geometry: None,
        seed: None,
        budget: None,
        mae_alpha,
        rmse_alpha,
        mae_b,
        rmse_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{gibbs_sample, GibbsInit, LatticeSpec, Neighborhood};
    use crate::sampling::{full_volume, sample_independent_planes};
    use rand::Rng;

    fn random_params(rng: &mut impl Rng, k: usize, lambda: f64) -> MrfParams {
        let alpha = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; k * k];
        for a in 0..k {
            for c in a..k {
                let v = rng.random_range(-0.4..0.4);
                b[a * k + c] = v;
                b[c * k + a] = v;
            }
        }
        MrfParams::from_flat(alpha, b, lambda).unwrap()
    }

    #[test]
    fn two_by_two_objective_matches_hand_enumeration() {
        let spec = LatticeSpec::new([2, 2, 1], Neighborhood::N26).unwrap();
        let v = LabelVolume::new(spec, 2, vec![0, 1, 1, 0], 0).unwrap();
        let p = MrfParams::new(vec![0.3, -0.2], vec![vec![0.5, -0.4], vec![-0.4, 0.2]], 0.01)
            .unwrap();
        // every site sees the other three
        let mut want = 0.0;
        for idx in 0..4 {
            let x = v.labels()[idx] as usize;
            let mut counts = [0.0; 2];
            for j in 0..4 {
                if j != idx {
                    counts[v.labels()[j] as usize] += 1.0;
                }
            }
            let logits: Vec<f64> = (0..2)
                .map(|a| p.alpha()[a] + p.b_at(a, 0) * counts[0] + p.b_at(a, 1) * counts[1])
                .collect();
            let lse = (logits[0].exp() + logits[1].exp()).ln();
            want += logits[x] - lse;
        }
        want -= 0.01 * (0.25 + 0.16 + 0.16 + 0.04);
        let got = pseudo_log_likelihood(&full_volume(&v), &v, &p).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn ridge_term_enters_gradient_exactly() {
        let spec = LatticeSpec::new([3, 3, 2], Neighborhood::N26).unwrap();
        let mut rng = crate::rng::stream(3);
        let p0 = random_params(&mut rng, 3, 0.0);
        let v = gibbs_sample(&spec, &p0, 2, 1, GibbsInit::UniformRandom).unwrap();
        let obs = full_volume(&v);
        let lam = 0.7;
        let g0 = pseudo_ll_gradient(&obs, &v, &p0).unwrap();
        let g1 = pseudo_ll_gradient(&obs, &v, &p0.clone().with_lambda(lam).unwrap()).unwrap();
        assert_eq!(g0.alpha, g1.alpha);
        for (i, (a, b)) in g0.b.iter().zip(&g1.b).enumerate() {
            assert!((a - 2.0 * lam * p0.b()[i] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let spec = LatticeSpec::new([5, 4, 3], Neighborhood::N26).unwrap();
        let mut rng = crate::rng::stream(17);
        let truth = random_params(&mut rng, 3, 0.0);
        let v = gibbs_sample(&spec, &truth, 3, 2, GibbsInit::UniformRandom).unwrap();
        let obs = sample_independent_planes(&v, 2, 4).unwrap();
        let p = random_params(&mut rng, 3, 0.05);
        let g = pseudo_ll_gradient(&obs, &v, &p).unwrap();
        let h = 1e-5;
        let f = |q: &MrfParams| pseudo_log_likelihood(&obs, &v, q).unwrap();
        for a in 0..3 {
            let mut up = p.alpha().to_vec();
            let mut dn = p.alpha().to_vec();
            up[a] += h;
            dn[a] -= h;
            let fd = (f(&MrfParams::from_flat(up, p.b().to_vec(), 0.05).unwrap())
                - f(&MrfParams::from_flat(dn, p.b().to_vec(), 0.05).unwrap()))
                / (2.0 * h);
            assert!((fd - g.alpha[a]).abs() < 1e-6 * fd.abs().max(1.0));
        }
        for a in 0..3 {
            for c in a..3 {
                let mut up = p.b().to_vec();
                let mut dn = p.b().to_vec();
                for (i, j) in [(a, c), (c, a)] {
                    up[i * 3 + j] = p.b()[i * 3 + j] + h;
                    dn[i * 3 + j] = p.b()[i * 3 + j] - h;
                }
                let fd = (f(&MrfParams::from_flat(p.alpha().to_vec(), up, 0.05).unwrap())
                    - f(&MrfParams::from_flat(p.alpha().to_vec(), dn, 0.05).unwrap()))
                    / (2.0 * h);
                let analytic = if a == c { g.b[a * 3 + c] } else { 2.0 * g.b[a * 3 + c] };
                assert!((fd - analytic).abs() < 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_interaction_fit_recovers_empirical_log_odds() {
        let spec = LatticeSpec::new([12, 12, 12], Neighborhood::N26).unwrap();
        let truth = MrfParams::from_flat(vec![0.5, 0.0, -0.5], vec![0.0; 9], 0.0).unwrap();
        let v = gibbs_sample(&spec, &truth, 1, 8, GibbsInit::UniformRandom).unwrap();
        let obs = full_volume(&v);
        // alpha-only problem: ridge infinitely heavy pins B at zero
        let cfg = MpleConfig {
            lambda: 1e9,
            grad_tolerance: 1e-10,
            ..Default::default()
        };
        let fitres = fit(&obs, &v, 3, &cfg).unwrap();
        let freq = v.frequencies();
        for a in 0..3 {
            let want = (freq[a] / freq[2]).ln();
            assert!((fitres.params.alpha()[a] - want).abs() < 1e-5);
        }
        assert!(fitres.params.b().iter().all(|b| b.abs() < 1e-6));
        assert_eq!(fitres.params.alpha()[2], 0.0);

        // stationarity at the multinomial optimum with lambda = 0
        let opt = MrfParams::from_flat(
            freq.iter().map(|f| f.ln()).collect(),
            vec![0.0; 9],
            0.0,
        )
        .unwrap();
        let g = pseudo_ll_gradient(&obs, &v, &opt).unwrap();
        assert!(g.alpha.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn absent_type_stays_finite() {
        let spec = LatticeSpec::new([10, 10, 3], Neighborhood::N26).unwrap();
        let labels: Vec<u8> = (0..spec.len()).map(|i| (i % 2) as u8).collect();
        let v = LabelVolume::new(spec, 3, labels, 0).unwrap();
        let obs = sample_independent_planes(&v, 1, 0).unwrap();
        let r = fit(&obs, &v, 3, &MpleConfig::default()).unwrap();
        let alpha = r.params.alpha();
        assert!(alpha.iter().all(|a| a.is_finite()));
        // type index 2 never appears; its field is pushed against the box
        assert!(alpha[0] - alpha[2] > 5.0 || alpha[2] == 0.0);
        assert!(r.params.alpha()[0] > 5.0);
        assert!(r.objective.is_finite());
    }

    #[test]
    fn optimizer_steps_never_decrease_objective() {
        let spec = LatticeSpec::new([8, 8, 4], Neighborhood::N26).unwrap();
        let mut rng = crate::rng::stream(21);
        let truth = random_params(&mut rng, 3, 0.0);
        let v = gibbs_sample(&spec, &truth, 5, 3, GibbsInit::UniformRandom).unwrap();
        for optimizer in [Optimizer::LbfgsLike, Optimizer::GradientDescent] {
            let cfg = MpleConfig {
                optimizer,
                max_iters: 200,
                ..Default::default()
            };
            let r = fit(&full_volume(&v), &v, 3, &cfg).unwrap();
            assert!(r.objective_trace.windows(2).all(|w| w[1] >= w[0]));
            let b = r.params.b();
            for a in 0..3 {
                for c in 0..3 {
                    assert_eq!(b[a * 3 + c], b[c * 3 + a]);
                }
            }
        }
    }

    #[test]
    fn lbfgs_and_gradient_descent_agree() {
        let spec = LatticeSpec::new([10, 10, 5], Neighborhood::N26).unwrap();
        let truth = MrfParams::new(
            vec![0.2, 0.0],
            vec![vec![0.1, -0.05], vec![-0.05, 0.08]],
            0.0,
        )
        .unwrap();
        let v = gibbs_sample(&spec, &truth, 10, 5, GibbsInit::UniformRandom).unwrap();
        let obs = full_volume(&v);
        // a heavier ridge keeps the problem well conditioned for plain descent
        let base = MpleConfig {
            lambda: 0.5,
            grad_tolerance: 1e-7,
            max_iters: 100_000,
            ..Default::default()
        };
        let a = fit(&obs, &v, 2, &base).unwrap();
        let b = fit(
            &obs,
            &v,
            2,
            &MpleConfig {
                optimizer: Optimizer::GradientDescent,
                ..base
            },
        )
        .unwrap();
        assert!(a.converged, "{} {}", a.iterations, a.grad_inf_norm);
        assert!(b.converged, "{} {}", b.iterations, b.grad_inf_norm);
        let rep = recovery_error(&a.params, &b.params).unwrap();
        assert!(rep.mae_alpha < 1e-3 && rep.mae_b < 1e-3, "{rep:?}");
    }

    #[test]
    fn recovery_error_examples() {
        let t = MrfParams::new(
            vec![0.4, 0.1, -0.3],
            vec![vec![0.2, 0.0, -0.1], vec![0.0, 0.3, 0.05], vec![-0.1, 0.05, 0.1]],
            0.0,
        )
        .unwrap();
        let zero = recovery_error(&t, &t).unwrap();
        assert_eq!((zero.mae_alpha, zero.rmse_alpha, zero.mae_b, zero.rmse_b), (0.0, 0.0, 0.0, 0.0));

        let shifted = MrfParams::from_flat(
            t.alpha().iter().map(|a| a + 2.5).collect(),
            t.b().to_vec(),
            0.0,
        )
        .unwrap();
        let r = recovery_error(&shifted, &t).unwrap();
        assert!(r.mae_alpha < 1e-15 && r.rmse_alpha < 1e-15);

        let two = MrfParams::zeros(2, 0.0).unwrap();
        assert!(recovery_error(&two, &t).is_err());
    }

    #[test]
    fn recovery_error_matches_direct_formula() {
        let mut rng = crate::rng::stream(99);
        for _ in 0..50 {
            let k = rng.random_range(2..5);
            let e = random_params(&mut rng, k, 0.0);
            let t = random_params(&mut rng, k, 0.0);
            let r = recovery_error(&e, &t).unwrap();
            let da: Vec<f64> = (0..k - 1)
                .map(|a| (e.alpha()[a] - e.alpha()[k - 1]) - (t.alpha()[a] - t.alpha()[k - 1]))
                .collect();
            let mut db = Vec::new();
            for a in 0..k {
                for c in a..k {
                    db.push(e.b()[a * k + c] - t.b()[a * k + c]);
                }
            }
            let mae = |d: &[f64]| d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64;
            let rmse = |d: &[f64]| (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
            assert!((r.mae_alpha - mae(&da)).abs() < 1e-12);
            assert!((r.rmse_alpha - rmse(&da)).abs() < 1e-12);
            assert!((r.mae_b - mae(&db)).abs() < 1e-12);
            assert!((r.rmse_b - rmse(&db)).abs() < 1e-12);
            assert!(r.rmse_alpha >= r.mae_alpha && r.rmse_b >= r.mae_b);
        }
    }
}
