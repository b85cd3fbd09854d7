//! Factorial mixture model: `X_n = sum_k Z_nk mu_k + eps_n` with
//! `Z_nk ~ Bern(pi)`, `mu_k ~ N(0, s_mu^2 I)` and `eps_n ~ N(0, s_n^2 I)`.
//!
//! The variational family is `q(Z_nk) = Bern(nu_nk)` and
//! `q(mu_k) = N(m_k, s2_k I)`. Temperatures scale the Gaussian exponent and
//! the Bernoulli prior on activations; the Gaussian normalizing constant is
//! treated as an untempered base measure, which is the convention under
//! which the tempered log-partition function has the closed form of
//! [`fmm_log_partition`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::natural_gradient_step;
use crate::error::{Error, Result};
use crate::numeric::{bernoulli_entropy, logsumexp, sigmoid, substream};
use crate::objective::{ConjugateModel, LocalLogNormalizer};
use crate::partition::{PartitionMeta, PartitionMethod, PartitionSignature, PartitionTable};
use crate::tempering::TemperatureGrid;

const TOY_FEATURES: &str = include_str!("../assets/fmm_toy_features.txt");

/// Whether `sigma_n` and `sigma_mu` are variances or standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceConvention {
    Variance,
    #[default]
    StdDev,
}

impl fmt::Display for VarianceConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceConvention::Variance => "variance",
            VarianceConvention::StdDev => "stddev",
        })
    }
}

impl FromStr for VarianceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(Self::Variance),
            "stddev" => Ok(Self::StdDev),
            other => Err(Error::InvalidArgument(format!("unknown variance convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmmConfig {
    pub k: usize,
    pub d: usize,
    pub pi: f64,
    pub sigma_n: f64,
    pub sigma_mu: f64,
    pub convention: VarianceConvention,
}

impl FmmConfig {
    /// The toy study: eight 4x4 features, `pi = 0.3`, noise 0.1, prior 0.35.
    pub fn toy() -> Self {
        Self {
            k: 8,
            d: 16,
            pi: 0.3,
            sigma_n: 0.1,
            sigma_mu: 0.35,
            convention: VarianceConvention::StdDev,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("K and D must be at least 1".into()));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidArgument(format!("pi = {} outside (0, 1)", self.pi)));
        }
        if !(self.sigma_n > 0.0 && self.sigma_mu > 0.0) {
            return Err(Error::InvalidArgument("noise and prior scales must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        match self.convention {
            VarianceConvention::Variance => self.sigma_n,
            VarianceConvention::StdDev => self.sigma_n * self.sigma_n,
        }
    }

    pub fn prior_var(&self) -> f64 {
        match self.convention {
            VarianceConvention::Variance => self.sigma_mu,
            VarianceConvention::StdDev => self.sigma_mu * self.sigma_mu,
        }
    }

    /// `log (2 pi s_n^2)^(-D/2)`.
    pub fn log_base_measure(&self) -> f64 {
        -0.5 * self.d as f64 * (2.0 * PI * self.noise_var()).ln()
    }

    pub fn partition_params(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("K".to_string(), self.k.to_string()),
            ("D".to_string(), self.d.to_string()),
            ("pi".to_string(), self.pi.to_string()),
        ])
    }
}

/// Posterior means (`K x D`, row-major) and per-component isotropic
/// variances of `q(mu_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmGlobal {
    pub k: usize,
    pub d: usize,
    pub m: Vec<f64>,
    pub s2: Vec<f64>,
}

impl FmmGlobal {
    pub fn mean(&self, k: usize) -> &[f64] {
        &self.m[k * self.d..(k + 1) * self.d]
    }
}

/// Activation probabilities `nu_nk` of one data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmLocal {
    pub nu: Vec<f64>,
}

pub struct FmmCache {
    global: FmmGlobal,
    sq_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Fmm {
    pub config: FmmConfig,
    /// Largest change in any activation below which a local fit stops.
    pub local_tol: f64,
    pub local_max_iter: usize,
    /// Data-set size used to size the initial posterior variances.
    pub init_count: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Fmm {
    pub fn new(config: FmmConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            local_tol: 1e-6,
            local_max_iter: 100,
            init_count: 1.0,
        })
    }

    pub fn with_init_count(mut self, n: usize) -> Self {
        self.init_count = n.max(1) as f64;
        self
    }

    /// `x - sum_k nu_k m_k`.
    fn residual(&self, x: &[f64], global: &FmmGlobal, nu: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for (k, &n) in nu.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(global.mean(k)) {
                *o -= n * m;
            }
        }
        out
    }

    /// `E_q ||x - sum_k Z_k mu_k||^2`.
    fn expected_sq_residual(&self, x: &[f64], nu: &[f64], cache: &FmmCache) -> f64 {
        let d = self.config.d as f64;
        let r = self.residual(x, &cache.global, nu);
        let mut total = dot(&r, &r);
        for (k, &n) in nu.iter().enumerate() {
            total += n * (cache.sq_norms[k] + d * cache.global.s2[k]) - n * n * cache.sq_norms[k];
        }
        total
    }

    /// Global parameters from explicit means and variances.
    pub fn global_from_parts(&self, m: Vec<f64>, s2: Vec<f64>) -> Result<FmmGlobal> {
        let g = FmmGlobal {
            k: self.config.k,
            d: self.config.d,
            m,
            s2,
        };
        self.check_global(&g)?;
        Ok(g)
    }
}

/// `E_q[log N(x; sum_k Z_k mu_k, s_n^2 I)] + E_q[log p(Z | pi)]`, including
/// the Gaussian normalizing constant.
pub fn fmm_expected_loglik(
    x: &[f64],
    local: &FmmLocal,
    global: &FmmGlobal,
    config: &FmmConfig,
) -> Result<f64> {
    let model = Fmm::new(*config)?;
    let cache = model.prepare(global);
    Ok(model.expected_log_lik(&x.to_vec(), local, &cache) + config.log_base_measure())
}

impl ConjugateModel for Fmm {
    type Datum = Vec<f64>;
    type Global = FmmGlobal;
    type Local = FmmLocal;
    type Cache = FmmCache;

    fn model_id(&self) -> &'static str {
        "fmm"
    }

    fn init_global(&self, rng: &mut ChaCha8Rng) -> FmmGlobal {
        let c = &self.config;
        let normal = Normal::new(0.0, c.prior_var().sqrt()).expect("positive scale");
        let m = (0..c.k * c.d).map(|_| normal.sample(rng)).collect();
        let s2 = 1.0 / (1.0 / c.prior_var() + c.pi * self.init_count / c.noise_var());
        FmmGlobal {
            k: c.k,
            d: c.d,
            m,
            s2: vec![s2; c.k],
        }
    }

    fn prepare(&self, global: &FmmGlobal) -> FmmCache {
        FmmCache {
            global: global.clone(),
            sq_norms: (0..global.k).map(|k| dot(global.mean(k), global.mean(k))).collect(),
        }
    }

    /// Sequential sweeps over components of
    /// `logit nu_k = inv_t [logit pi + (m_k . r_k - (|m_k|^2 + D s2_k)/2) / s_n^2]`,
    /// `r_k = x - sum_{j != k} nu_j m_j`.
    fn local_step(&self, x: &Vec<f64>, cache: &FmmCache, inv_t: f64, warm: Option<&FmmLocal>) -> FmmLocal {
        let c = &self.config;
        let g = &cache.global;
        let prior_logit = (c.pi / (1.0 - c.pi)).ln();
        let noise_var = c.noise_var();
        let d = c.d as f64;
        let mut nu = match warm {
            Some(l) if l.nu.len() == c.k => l.nu.clone(),
            _ => vec![c.pi; c.k],
        };
        let mut r = self.residual(x, g, &nu);
        for _ in 0..self.local_max_iter {
            let mut max_change: f64 = 0.0;
            for k in 0..c.k {
                let mk = g.mean(k);
                for (ri, m) in r.iter_mut().zip(mk) {
                    *ri += nu[k] * m;
                }
                let fit = dot(mk, &r) - 0.5 * (cache.sq_norms[k] + d * g.s2[k]);
                let next = sigmoid(inv_t * (prior_logit + fit / noise_var));
                for (ri, m) in r.iter_mut().zip(mk) {
                    *ri -= next * m;
                }
                max_change = max_change.max((next - nu[k]).abs());
                nu[k] = next;
            }
            if max_change <= self.local_tol {
                break;
            }
        }
        FmmLocal { nu }
    }

    /// Gauss-Seidel pass over components in natural parameters
    /// `(1/s2_k, m_k/s2_k)` with prior `(1/s_mu^2, 0)` and statistics
    /// `(nu_nk / s_n^2, nu_nk (x_n - sum_{j != k} nu_nj m_j) / s_n^2)`.
    fn global_step(
        &self,
        global: &FmmGlobal,
        _cache: &FmmCache,
        batch: &[&Vec<f64>],
        locals: &[FmmLocal],
        weights: &[f64],
        scale: f64,
        rho: f64,
    ) -> Result<FmmGlobal> {
        if batch.len() != locals.len() || batch.len() != weights.len() {
            return Err(Error::InvalidArgument("batch, locals and weights differ in length".into()));
        }
        let c = &self.config;
        let dd = c.d;
        let noise_var = c.noise_var();
        let mut next = global.clone();
        let mut residuals: Vec<Vec<f64>> = batch
            .iter()
            .zip(locals)
            .map(|(x, l)| self.residual(x, global, &l.nu))
            .collect();
        let mut prior = vec![0.0; dd + 1];
        prior[0] = 1.0 / c.prior_var();
        for k in 0..c.k {
            let mut stats = vec![0.0; dd + 1];
            for ((r, l), &w) in residuals.iter_mut().zip(locals).zip(weights) {
                let nk = l.nu[k];
                let mk = &next.m[k * dd..(k + 1) * dd];
                for (ri, m) in r.iter_mut().zip(mk) {
                    *ri += nk * m;
                }
                stats[0] += w * (nk / noise_var);
                for (s, ri) in stats[1..].iter_mut().zip(r.iter()) {
                    *s += w * (nk * ri / noise_var);
                }
            }
            let mut current = vec![0.0; dd + 1];
            let precision = 1.0 / next.s2[k];
            current[0] = precision;
            for (cur, m) in current[1..].iter_mut().zip(&next.m[k * dd..(k + 1) * dd]) {
                *cur = m * precision;
            }
            let blended = natural_gradient_step(&prior, &stats, scale, rho, &current)?;
            let precision = blended[0];
            if !(precision > 0.0) || !precision.is_finite() {
                return Err(Error::InvalidState(format!(
                    "component {k} has posterior precision {precision}"
                )));
            }
            next.s2[k] = 1.0 / precision;
            for (m, h) in next.m[k * dd..(k + 1) * dd].iter_mut().zip(&blended[1..]) {
                *m = h / precision;
            }
            let mk = &next.m[k * dd..(k + 1) * dd];
            for (r, l) in residuals.iter_mut().zip(locals) {
                for (ri, m) in r.iter_mut().zip(mk) {
                    *ri -= l.nu[k] * m;
                }
            }
        }
        self.check_global(&next)?;
        Ok(next)
    }

    /// Gaussian exponent plus Bernoulli prior, without the Gaussian
    /// normalizing constant.
    fn expected_log_lik(&self, x: &Vec<f64>, local: &FmmLocal, cache: &FmmCache) -> f64 {
        let c = &self.config;
        let gauss = -0.5 * self.expected_sq_residual(x, &local.nu, cache) / c.noise_var();
        let (lp, lq) = (c.pi.ln(), (1.0 - c.pi).ln());
        let bern: f64 = local.nu.iter().map(|&n| n * lp + (1.0 - n) * lq).sum();
        gauss + bern
    }

    fn local_term(&self, _x: &Vec<f64>, local: &FmmLocal, _cache: &FmmCache) -> f64 {
        local.nu.iter().map(|&p| bernoulli_entropy(p)).sum::<f64>() + self.config.log_base_measure()
    }

    fn global_term(&self, global: &FmmGlobal, cache: &FmmCache) -> f64 {
        let d = self.config.d as f64;
        let prior_var = self.config.prior_var();
        (0..global.k)
            .map(|k| {
                let s2 = global.s2[k];
                -0.5 * d * (2.0 * PI * prior_var).ln() - (cache.sq_norms[k] + d * s2) / (2.0 * prior_var)
                    + 0.5 * d * (2.0 * PI * std::f64::consts::E * s2).ln()
            })
            .sum()
    }

    /// `ell / T - (D/2) log T - K log(pi^(1/T) + (1 - pi)^(1/T))`, the
    /// expected log-likelihood under the renormalized tempered model.
    fn tempered_log_lik(&self, x: &Vec<f64>, local: &FmmLocal, cache: &FmmCache, temps: &[f64]) -> Vec<f64> {
        let ell = self.expected_log_lik(x, local, cache);
        temps
            .iter()
            .map(|&t| ell / t - fmm_log_partition_value(&self.config, 1.0, t))
            .collect()
    }

    fn check_global(&self, global: &FmmGlobal) -> Result<()> {
        let c = &self.config;
        if global.k != c.k || global.d != c.d || global.m.len() != c.k * c.d || global.s2.len() != c.k {
            return Err(Error::InvalidState("feature matrix has the wrong shape".into()));
        }
        if global.m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("feature means are not finite".into()));
        }
        if global.s2.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidState("feature variances must be positive".into()));
        }
        Ok(())
    }

    fn check_local(&self, local: &FmmLocal) -> Result<()> {
        if local.nu.len() != self.config.k || local.nu.iter().any(|&n| !(0.0..=1.0).contains(&n)) {
            return Err(Error::InvalidState("activation probabilities outside [0, 1]".into()));
        }
        Ok(())
    }

    fn partition_signature(&self, data: &[Vec<f64>]) -> PartitionSignature {
        PartitionSignature {
            model: "fmm".into(),
            data_count: data.len() as f64,
            params: self.config.partition_params(),
        }
    }
}

/// `(D/2) N log T + N K log(pi^(1/T) + (1 - pi)^(1/T))`.
pub fn fmm_log_partition_value(config: &FmmConfig, n: f64, t: f64) -> f64 {
    if t == 1.0 {
        return 0.0;
    }
    let inv = 1.0 / t;
    let bern = (inv * config.pi.ln()).exp() + (inv * (1.0 - config.pi).ln()).exp();
    0.5 * n * config.d as f64 * t.ln() + n * config.k as f64 * bern.ln()
}

/// Closed-form tempered log-partition table; standard errors are zero.
pub fn fmm_log_partition(config: &FmmConfig, n: f64, grid: &TemperatureGrid) -> Result<PartitionTable> {
    config.validate()?;
    let log_c = grid.temps().iter().map(|&t| fmm_log_partition_value(config, n, t)).collect();
    let meta = PartitionMeta::new("fmm", n, PartitionMethod::Analytic).with_params(config.partition_params());
    PartitionTable::new(grid.clone(), log_c, vec![0.0; grid.len()], meta)
}

/// Log-normalizer of `p(x, z | mu)` in the natural parameters
/// `[a_k; b_jk (j < k); c_k (K x D); d]` of the statistics
/// `z_k, z_j z_k, z_k x, |x|^2`, with the Gaussian constant as base measure.
/// Enumerates all `2^K` activation patterns.
pub struct FmmNormalizer {
    pub config: FmmConfig,
}

impl FmmNormalizer {
    fn n_pairs(&self) -> usize {
        self.config.k * (self.config.k - 1) / 2
    }

    fn len(&self) -> usize {
        self.config.k + self.n_pairs() + self.config.k * self.config.d + 1
    }

    /// Natural parameters at feature means `mu` (`K x D`).
    pub fn natural_from_features(&self, mu: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let var = c.noise_var();
        let logit = (c.pi / (1.0 - c.pi)).ln();
        let row = |k: usize| &mu[k * c.d..(k + 1) * c.d];
        let mut out = Vec::with_capacity(self.len());
        for k in 0..c.k {
            out.push(logit - dot(row(k), row(k)) / (2.0 * var));
        }
        for j in 0..c.k {
            for k in j + 1..c.k {
                out.push(-dot(row(j), row(k)) / var);
            }
        }
        for k in 0..c.k {
            out.extend(row(k).iter().map(|m| m / var));
        }
        out.push(-1.0 / (2.0 * var));
        out
    }
}

impl LocalLogNormalizer for FmmNormalizer {
    fn model_id(&self) -> &str {
        "fmm"
    }

    fn log_normalizer(&self, natural: &[f64]) -> f64 {
        let c = &self.config;
        let (kk, dd) = (c.k, c.d);
        let a = &natural[..kk];
        let b = &natural[kk..kk + self.n_pairs()];
        let cc = &natural[kk + self.n_pairs()..kk + self.n_pairs() + kk * dd];
        let d = natural[self.len() - 1];
        if !(d < 0.0) {
            return f64::INFINITY;
        }
        let mut terms = Vec::with_capacity(1 << kk);
        let mut s = vec![0.0; dd];
        for pattern in 0u64..(1u64 << kk) {
            let on = |k: usize| pattern >> k & 1 == 1;
            let mut e = 0.0;
            let mut p = 0;
            for j in 0..kk {
                if on(j) {
                    e += a[j];
                }
                for k in j + 1..kk {
                    if on(j) && on(k) {
                        e += b[p];
                    }
                    p += 1;
                }
            }
            s.iter_mut().for_each(|x| *x = 0.0);
            for k in (0..kk).filter(|&k| on(k)) {
                for (si, ci) in s.iter_mut().zip(&cc[k * dd..(k + 1) * dd]) {
                    *si += ci;
                }
            }
            e -= dot(&s, &s) / (4.0 * d);
            terms.push(e);
        }
        logsumexp(&terms) + 0.5 * dd as f64 * (PI / -d).ln() + c.log_base_measure()
    }

    fn sample_prior_natural(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let c = &self.config;
        let normal = Normal::new(0.0, c.prior_var().sqrt()).expect("positive scale");
        let mu: Vec<f64> = (0..c.k * c.d).map(|_| normal.sample(rng)).collect();
        self.natural_from_features(&mu)
    }

    fn natural_in_domain(&self, natural: &[f64]) -> bool {
        natural.len() == self.len()
            && natural.iter().all(|x| x.is_finite())
            && natural[self.len() - 1] < 0.0
    }

    fn partition_params(&self) -> BTreeMap<String, String> {
        self.config.partition_params()
    }
}

/// The eight 4x4 binary masks of the toy study, `K x D` row-major.
pub fn toy_masks() -> Vec<Vec<f64>> {
    TOY_FEATURES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.chars().map(|ch| if ch == '1' { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Toy features: each mask scaled by its own uniform draw from `[0.5, 1]`.
pub fn toy_features(seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, u64::MAX);
    toy_masks()
        .into_iter()
        .flat_map(|mask| {
            let w: f64 = rng.random_range(0.5..=1.0);
            mask.into_iter().map(move |b| b * w)
        })
        .collect()
}

/// Samples `n` data points from the model with the given features.
pub fn fmm_generate(config: &FmmConfig, features: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if features.len() != config.k * config.d {
        return Err(Error::InvalidArgument(format!(
            "{} feature values for K={} and D={}",
            features.len(),
            config.k,
            config.d
        )));
    }
    if !(0.0..=1.0).contains(&config.pi) || !(config.sigma_n >= 0.0) {
        return Err(Error::InvalidArgument("pi must lie in [0, 1] and noise must be nonnegative".into()));
    }
    let mut rng = substream(seed, 0);
    let noise = Normal::new(0.0, config.noise_var().sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let out = (0..n)
        .map(|_| {
            let mut x: Vec<f64> = (0..config.d).map(|_| noise.sample(&mut rng)).collect();
            for k in 0..config.k {
                if rng.random::<f64>() < config.pi {
                    for (xi, f) in x.iter_mut().zip(&features[k * config.d..(k + 1) * config.d]) {
                        *xi += f;
                    }
                }
            }
            x
        })
        .collect();
    Ok(out)
}

/// Root-mean-square error between learned and true features under the best
/// one-to-one matching of components.
pub fn feature_rmse(learned: &[f64], truth: &[f64], k: usize) -> Result<f64> {
    if learned.len() != truth.len() || k == 0 || truth.len() % k != 0 {
        return Err(Error::InvalidArgument("feature matrices differ in shape".into()));
    }
    if k > 10 {
        return Err(Error::InvalidArgument("matching is exhaustive and limited to K <= 10".into()));
    }
    let d = truth.len() / k;
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let a = &learned[i * d..(i + 1) * d];
                    let b = &truth[j * d..(j + 1) * d];
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
                })
                .collect()
        })
        .collect();
    let best = (0..k)
        .permutations(k)
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok((best / truth.len() as f64).sqrt())
}

/// Reads a data set of one comma-separated row per line.
pub fn parse_matrix_csv(text: &str, path: &std::path::Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(path, i + 1, format!("expected {w} columns, found {}", row.len())))
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn matrix_to_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
