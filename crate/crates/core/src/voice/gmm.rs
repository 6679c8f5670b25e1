//! Diagonal-covariance Gaussian mixtures: log-likelihood, EM fitting and
//! AIC/BIC model selection.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::VoiceError;

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Components whose responsibility mass drops below this are re-seeded.
const EMPTY_COMPONENT_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self, VoiceError> {
        let m = Self { weights, means, variances };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), VoiceError> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(VoiceError::InvalidModel("component arrays differ in length".into()));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(VoiceError::InvalidModel("inconsistent dimension".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(VoiceError::InvalidModel("negative or non-finite weight".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(VoiceError::InvalidModel("weights do not sum to 1".into()));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VoiceError::InvalidModel("non-finite mean".into()));
        }
        if self.variances.iter().flatten().any(|v| !(v.is_finite() && *v >= VARIANCE_FLOOR)) {
            return Err(VoiceError::InvalidModel("variance below floor".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log π_k + log N(x | μ_k, diag σ_k²)` for every component.
    pub fn component_log_densities(&self, x: &[f64]) -> Result<Vec<f64>, VoiceError> {
        if x.len() != self.dim() {
            return Err(VoiceError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), var)| {
                let mut acc = 0.0;
                for ((xi, m), v) in x.iter().zip(mu).zip(var) {
                    acc += (2.0 * PI * v).ln() + (xi - m) * (xi - m) / v;
                }
                w.ln() - 0.5 * acc
            })
            .collect())
    }

    /// `log Σ_k π_k N(x | μ_k, σ_k²)` via log-sum-exp.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64, VoiceError> {
        Ok(log_sum_exp(&self.component_log_densities(x)?))
    }

    /// Number of free parameters: `(K − 1) + K·d + K·d`.
    pub fn parameter_count(k: usize, d: usize) -> usize {
        (k - 1) + 2 * k * d
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-point posterior responsibilities; each row sums to 1.
pub fn responsibilities(model: &GmmModel, data: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), VoiceError> {
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(data.len());
    for x in data {
        let logs = model.component_log_densities(x)?;
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return Err(VoiceError::InvalidModel("zero likelihood for a data point".into()));
        }
        total += lse;
        let mut r: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
        rows.push(r);
    }
    Ok((rows, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once total log-likelihood improves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, seed: 0 }
    }
}

/// State handed to an EM observer after every E-step.
#[derive(Debug)]
pub struct EmStep<'a> {
    /// 0 for the initial model, then one per M-step.
    pub iteration: usize,
    pub model: &'a GmmModel,
    pub responsibilities: &'a [Vec<f64>],
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_data(data: &[Vec<f64>], k: usize) -> Result<usize, VoiceError> {
    if k == 0 {
        return Err(VoiceError::InvalidConfig("K must be at least 1".into()));
    }
    if data.len() < k {
        return Err(VoiceError::TooFewPoints { got: data.len(), need: k });
    }
    let d = data[0].len();
    if d == 0 {
        return Err(VoiceError::InvalidConfig("zero-dimensional data".into()));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != d) {
        return Err(VoiceError::DimensionMismatch { expected: d, got: bad.len() });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(VoiceError::InvalidConfig("non-finite data".into()));
    }
    Ok(d)
}

fn global_variance(data: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = data.len() as f64;
    (0..d)
        .map(|j| {
            let mean = data.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            var.max(VARIANCE_FLOOR)
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-point seeding over a seeded shuffle of the data.
fn initial_model(data: &[Vec<f64>], k: usize, d: usize, rng: &mut ChaCha20Rng) -> GmmModel {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut centers = vec![order[0]];
    let mut nearest: Vec<f64> = order.iter().map(|&i| sq_dist(&data[i], &data[order[0]])).collect();
    while centers.len() < k {
        let (pos, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (p, &v)| if v > best.1 { (p, v) } else { best });
        let c = order[pos];
        centers.push(c);
        for (slot, &i) in nearest.iter_mut().zip(&order) {
            *slot = slot.min(sq_dist(&data[i], &data[c]));
        }
    }
    let var = global_variance(data, d);
    GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().map(|&c| data[c].clone()).collect(),
        variances: vec![var; k],
    }
}

fn m_step(data: &[Vec<f64>], resp: &[Vec<f64>], k: usize, d: usize, rng: &mut ChaCha20Rng) -> GmmModel {
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    let mut fallback_var: Option<Vec<f64>> = None;
    for c in 0..k {
        let mass: f64 = resp.iter().map(|r| r[c]).sum();
        weights.push(mass / n);
        if mass < EMPTY_COMPONENT_MASS {
            let pick = rng.gen_range(0..data.len());
            means.push(data[pick].clone());
            variances.push(fallback_var.get_or_insert_with(|| global_variance(data, d)).clone());
            continue;
        }
        let mut mu = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for (m, xi) in mu.iter_mut().zip(x) {
                *m += r[c] * xi;
            }
        }
        mu.iter_mut().for_each(|m| *m /= mass);
        let mut var = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for ((v, xi), m) in var.iter_mut().zip(x).zip(&mu) {
                *v += r[c] * (xi - m) * (xi - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / mass).max(VARIANCE_FLOOR));
        means.push(mu);
        variances.push(var);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel { weights, means, variances }
}

/// EM fit reporting every step to `observer`.
pub fn em_fit_observed(
    data: &[Vec<f64>],
    k: usize,
    opts: &EmOptions,
    mut observer: impl FnMut(&EmStep<'_>),
) -> Result<GmmFit, VoiceError> {
    let d = check_data(data, k)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut model = initial_model(data, k, d, &mut rng);
    let (mut resp, mut ll) = responsibilities(&model, data)?;
    observer(&EmStep { iteration: 0, model: &model, responsibilities: &resp, log_likelihood: ll });
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let next = m_step(data, &resp, k, d, &mut rng);
        let (next_resp, next_ll) = responsibilities(&next, data)?;
        observer(&EmStep { iteration: iterations, model: &next, responsibilities: &next_resp, log_likelihood: next_ll });
        let gain = next_ll - ll;
        model = next;
        resp = next_resp;
        ll = next_ll;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(GmmFit { model, log_likelihood: ll, iterations, converged })
}

pub fn em_fit(data: &[Vec<f64>], k: usize, opts: &EmOptions) -> Result<GmmFit, VoiceError> {
    em_fit_observed(data, k, opts, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn value(self, log_likelihood: f64, k: usize, d: usize, n: usize) -> f64 {
        let p = GmmModel::parameter_count(k, d) as f64;
        match self {
            Criterion::Aic => 2.0 * p - 2.0 * log_likelihood,
            Criterion::Bic => p * (n as f64).ln() - 2.0 * log_likelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: usize,
    pub fit: GmmFit,
    /// `(K, criterion value)` for every candidate, in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Fits every candidate K with the same options and keeps the one with the
/// smallest criterion value (earliest candidate on ties).
pub fn select_k(data: &[Vec<f64>], candidates: &[usize], criterion: Criterion, opts: &EmOptions) -> Result<Selection, VoiceError> {
    if candidates.is_empty() {
        return Err(VoiceError::InvalidConfig("no K candidates".into()));
    }
    let d = check_data(data, 1)?;
    let mut best: Option<(f64, usize, GmmFit)> = None;
    let mut scores = Vec::new();
    for &k in candidates {
        let fit = em_fit(data, k, opts)?;
        let value = criterion.value(fit.log_likelihood, k, d, data.len());
        scores.push((k, value));
        if best.as_ref().map_or(true, |(b, _, _)| value < *b) {
            best = Some((value, k, fit));
        }
    }
    let (_, k, fit) = best.expect("at least one candidate");
    Ok(Selection { k, fit, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Box–Muller standard normal.
    fn normal(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    fn one_d(mu: f64, var: f64) -> GmmModel {
        GmmModel::new(vec![1.0], vec![vec![mu]], vec![vec![var]]).unwrap()
    }

    #[test]
    fn standard_normal_at_zero() {
        let ll = one_d(0.0, 1.0).log_likelihood(&[0.0]).unwrap();
        assert!((ll - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_components() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]).unwrap();
        let expected = one_d(1.0, 1.0).log_likelihood(&[0.0]).unwrap();
        assert!((m.log_likelihood(&[0.0]).unwrap() - expected).abs() < 1e-12);
        let (r, _) = responsibilities(&m, &[vec![0.0]]).unwrap();
        assert_eq!(r[0], vec![0.5, 0.5]);
    }

    #[test]
    fn zero_weight_component_changes_nothing() {
        let base = one_d(0.3, 2.0);
        let padded = GmmModel::new(vec![1.0, 0.0], vec![vec![0.3], vec![9.0]], vec![vec![2.0], vec![1.0]]).unwrap();
        for x in [-3.0, 0.0, 0.3, 7.5] {
            assert_eq!(base.log_likelihood(&[x]).unwrap(), padded.log_likelihood(&[x]).unwrap());
        }
        assert!(matches!(base.log_likelihood(&[1.0, 2.0]), Err(VoiceError::DimensionMismatch { .. })));
    }

    #[test]
    fn single_component_is_closed_form() {
        let data: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 7.0].iter().map(|&v| vec![v]).collect();
        let fit = em_fit(&data, 1, &EmOptions::default()).unwrap();
        assert!((fit.model.means[0][0] - 3.5).abs() < 1e-12);
        assert!((fit.model.variances[0][0] - 5.25).abs() < 1e-12);
    }

    #[test]
    fn parameter_count_example() {
        assert_eq!(GmmModel::parameter_count(1, 1), 2);
        assert_eq!(GmmModel::parameter_count(3, 39), 2 + 6 * 39);
    }

    #[test]
    fn single_cluster_prefers_k1() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let data: Vec<Vec<f64>> = (0..500).map(|_| vec![normal(&mut rng)]).collect();
        let sel = select_k(&data, &[1, 2, 3], Criterion::Bic, &EmOptions::default()).unwrap();
        assert_eq!(sel.k, 1, "{:?}", sel.scores);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(em_fit(&[vec![1.0]], 2, &EmOptions::default()), Err(VoiceError::TooFewPoints { .. })));
    }

    #[test]
    fn duplicate_points_reseed_without_error() {
        let data = vec![vec![1.0]; 20];
        let fit = em_fit(&data, 3, &EmOptions::default()).unwrap();
        fit.model.validate().unwrap();
    }
}
