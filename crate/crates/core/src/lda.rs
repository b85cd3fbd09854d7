//! Latent Dirichlet allocation under tempering.
//!
//! Responsibilities are kept per word type with counts, so a document's
//! local state has one row of `K` probabilities per distinct word.
//! Temperatures scale the assignment and word terms; the Dirichlet prior on
//! the topic proportions stays untempered.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::engine::natural_gradient_step;
use crate::error::{Error, Result};
use crate::numeric::{dirichlet_expectation, dirichlet_log_normalizer, logsumexp, softmax, xlogx};
use crate::objective::ConjugateModel;
use crate::partition::{LdaPriors, PartitionSignature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub v: usize,
    pub alpha: f64,
    pub eta: f64,
}

impl LdaConfig {
    /// `alpha = eta = 1/K`.
    pub fn with_default_priors(k: usize, v: usize) -> Self {
        Self {
            k,
            v,
            alpha: 1.0 / k as f64,
            eta: 1.0 / k as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.v == 0 {
            return Err(Error::InvalidArgument("K and V must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument("alpha and eta must be positive".into()));
        }
        Ok(())
    }

    pub fn priors(&self) -> LdaPriors {
        LdaPriors {
            k: self.k,
            v: self.v,
            alpha: self.alpha,
            eta: self.eta,
        }
    }
}

/// Dirichlet parameters of `q(beta_k)`, stored row-major as `K x V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaGlobal {
    pub k: usize,
    pub v: usize,
    pub lambda: Vec<f64>,
}

impl LdaGlobal {
    pub fn topic(&self, k: usize) -> &[f64] {
        &self.lambda[k * self.v..(k + 1) * self.v]
    }

    /// Posterior-mean topics `E[beta_kv]`, row-major.
    pub fn expected_topics(&self) -> Vec<f64> {
        let mut out = self.lambda.clone();
        for row in out.chunks_mut(self.v) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        out
    }
}

/// Fitted local factors of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaLocal {
    /// Dirichlet parameters of `q(theta_d)`.
    pub gamma: Vec<f64>,
    /// Responsibilities, one row of `K` per word type of the document.
    pub phi: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub struct LdaCache {
    elog_beta: Vec<f64>,
    log_mean_beta: Vec<f64>,
    // log sum_v E[beta_kv]^(1/T_m), laid out M x K, computed on first use
    tempered_norms: OnceLock<(Vec<f64>, Vec<f64>)>,
}

impl LdaCache {
    pub fn elog_beta(&self) -> &[f64] {
        &self.elog_beta
    }
}

#[derive(Debug, Clone)]
pub struct Lda {
    pub config: LdaConfig,
    /// Relative change in `gamma` below which a local fit stops.
    pub local_tol: f64,
    pub local_max_iter: usize,
    /// Shape of the Gamma draws that initialize `lambda` (mean one).
    pub init_shape: f64,
}

impl Lda {
    pub fn new(config: LdaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            local_tol: 1e-6,
            local_max_iter: 100,
            init_shape: 100.0,
        })
    }

    pub fn global_from_lambda(&self, lambda: Vec<f64>) -> Result<LdaGlobal> {
        let g = LdaGlobal {
            k: self.config.k,
            v: self.config.v,
            lambda,
        };
        self.check_global(&g)?;
        Ok(g)
    }

    /// Expected sufficient statistics of one document, `n_dv phi_dvk`, added
    /// into a dense `K x V` accumulator with weight `w`.
    pub fn accumulate_stats(&self, doc: &Document, local: &LdaLocal, w: f64, acc: &mut [f64]) {
        let k = self.config.k;
        let v = self.config.v;
        for (j, (&word, &n)) in doc.words.iter().zip(&doc.counts).enumerate() {
            let n = n as f64;
            for kk in 0..k {
                acc[kk * v + word] += w * (n * local.phi[j * k + kk]);
            }
        }
    }

    fn prior_local(&self) -> LdaLocal {
        LdaLocal {
            gamma: vec![self.config.alpha; self.config.k],
            phi: Vec::new(),
            iterations: 0,
            converged: true,
        }
    }
}

/// Tempered responsibilities `softmax(inv_t * logits)` of one word.
pub fn tempered_responsibilities(logits: &[f64], inv_t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|x| inv_t * x).collect();
    softmax(&scaled)
}

/// `psi(param_k) - psi(sum params)`, rejecting nonpositive parameters.
pub fn dirichlet_expected_log(params: &[f64]) -> Result<Vec<f64>> {
    if params.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("Dirichlet parameters must be positive".into()));
    }
    Ok(dirichlet_expectation(params))
}

impl ConjugateModel for Lda {
    type Datum = Document;
    type Global = LdaGlobal;
    type Local = LdaLocal;
    type Cache = LdaCache;

    fn model_id(&self) -> &'static str {
        "lda"
    }

    fn init_global(&self, rng: &mut ChaCha8Rng) -> LdaGlobal {
        let gamma = Gamma::new(self.init_shape, 1.0 / self.init_shape).expect("positive shape");
        let lambda = (0..self.config.k * self.config.v)
            .map(|_| gamma.sample(rng))
            .collect();
        LdaGlobal {
            k: self.config.k,
            v: self.config.v,
            lambda,
        }
    }

    fn prepare(&self, global: &LdaGlobal) -> LdaCache {
        let mut elog_beta = Vec::with_capacity(global.lambda.len());
        let mut log_mean_beta = Vec::with_capacity(global.lambda.len());
        for row in global.lambda.chunks(global.v) {
            elog_beta.extend(dirichlet_expectation(row));
            let log_total = row.iter().sum::<f64>().ln();
            log_mean_beta.extend(row.iter().map(|x| x.ln() - log_total));
        }
        LdaCache {
            elog_beta,
            log_mean_beta,
            tempered_norms: OnceLock::new(),
        }
    }

    fn local_step(
        &self,
        doc: &Document,
        cache: &LdaCache,
        inv_t: f64,
        warm: Option<&LdaLocal>,
    ) -> LdaLocal {
        let k = self.config.k;
        let v = self.config.v;
        let alpha = self.config.alpha;
        if doc.is_empty() {
            return self.prior_local();
        }
        let n_types = doc.num_types();
        let mut word_logits = vec![0.0; n_types * k];
        for (j, &w) in doc.words.iter().enumerate() {
            for kk in 0..k {
                word_logits[j * k + kk] = inv_t * cache.elog_beta[kk * v + w];
            }
        }
        // per-word max subtraction keeps the exponentials representable
        let mut word_weights = word_logits.clone();
        for row in word_weights.chunks_mut(k) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x = (*x - max).exp());
        }

        let total_words = doc.len() as f64;
        let mut gamma = match warm {
            Some(l) if l.gamma.len() == k => l.gamma.clone(),
            _ => vec![alpha + inv_t * total_words / k as f64; k],
        };
        let mut phi = vec![0.0; n_types * k];
        let mut theta_weights = vec![0.0; k];
        let mut new_gamma = vec![0.0; k];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.local_max_iter {
            iterations += 1;
            let elog_theta = dirichlet_expectation(&gamma);
            let max = elog_theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (w, e) in theta_weights.iter_mut().zip(&elog_theta) {
                *w = (inv_t * (e - max)).exp();
            }
            new_gamma.iter_mut().for_each(|g| *g = alpha);
            for (j, &n) in doc.counts.iter().enumerate() {
                let row = &mut phi[j * k..(j + 1) * k];
                let ww = &word_weights[j * k..(j + 1) * k];
                let mut norm = 0.0;
                for kk in 0..k {
                    row[kk] = theta_weights[kk] * ww[kk];
                    norm += row[kk];
                }
                if norm > 0.0 && norm.is_finite() {
                    row.iter_mut().for_each(|x| *x /= norm);
                } else {
                    let logits: Vec<f64> = (0..k)
                        .map(|kk| inv_t * elog_theta[kk] + word_logits[j * k + kk])
                        .collect();
                    row.copy_from_slice(&softmax(&logits));
                }
                let n = n as f64;
                for kk in 0..k {
                    new_gamma[kk] += inv_t * (n * row[kk]);
                }
            }
            let change: f64 = gamma.iter().zip(&new_gamma).map(|(a, b)| (a - b).abs()).sum();
            let scale: f64 = new_gamma.iter().sum();
            std::mem::swap(&mut gamma, &mut new_gamma);
            if change <= self.local_tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            log::debug!("local fit stopped after {iterations} iterations without converging");
        }
        LdaLocal {
            gamma,
            phi,
            iterations,
            converged,
        }
    }

    fn global_step(
        &self,
        global: &LdaGlobal,
        _cache: &LdaCache,
        batch: &[&Document],
        locals: &[LdaLocal],
        weights: &[f64],
        scale: f64,
        rho: f64,
    ) -> Result<LdaGlobal> {
        if batch.len() != locals.len() || batch.len() != weights.len() {
            return Err(Error::InvalidArgument("batch, locals and weights differ in length".into()));
        }
        let mut stats = vec![0.0; global.lambda.len()];
        for ((doc, local), &w) in batch.iter().zip(locals).zip(weights) {
            self.accumulate_stats(doc, local, w, &mut stats);
        }
        let prior = vec![self.config.eta; global.lambda.len()];
        let lambda = natural_gradient_step(&prior, &stats, scale, rho, &global.lambda)?;
        let next = LdaGlobal {
            k: global.k,
            v: global.v,
            lambda,
        };
        self.check_global(&next)?;
        Ok(next)
    }

    fn expected_log_lik(&self, doc: &Document, local: &LdaLocal, cache: &LdaCache) -> f64 {
        if doc.is_empty() {
            return 0.0;
        }
        let k = self.config.k;
        let v = self.config.v;
        let elog_theta = dirichlet_expectation(&local.gamma);
        let mut total = 0.0;
        for (j, (&w, &n)) in doc.words.iter().zip(&doc.counts).enumerate() {
            let mut word = 0.0;
            for kk in 0..k {
                word += local.phi[j * k + kk] * (elog_theta[kk] + cache.elog_beta[kk * v + w]);
            }
            total += n as f64 * word;
        }
        total
    }

    fn local_term(&self, doc: &Document, local: &LdaLocal, _cache: &LdaCache) -> f64 {
        let k = self.config.k;
        let alpha = self.config.alpha;
        let elog_theta = dirichlet_expectation(&local.gamma);
        let mut term = dirichlet_log_normalizer(&local.gamma)
            - dirichlet_log_normalizer(&vec![alpha; k]);
        for (g, e) in local.gamma.iter().zip(&elog_theta) {
            term += (alpha - g) * e;
        }
        let mut entropy = 0.0;
        for (j, &n) in doc.counts.iter().enumerate() {
            let h: f64 = local.phi[j * k..(j + 1) * k].iter().map(|&p| xlogx(p)).sum();
            entropy -= n as f64 * h;
        }
        term + entropy
    }

    fn global_term(&self, global: &LdaGlobal, cache: &LdaCache) -> f64 {
        let v = self.config.v;
        let eta = self.config.eta;
        let prior_norm = dirichlet_log_normalizer(&vec![eta; v]);
        let mut total = 0.0;
        for (kk, row) in global.lambda.chunks(v).enumerate() {
            let elog = &cache.elog_beta[kk * v..(kk + 1) * v];
            let mut t = dirichlet_log_normalizer(row) - prior_norm;
            for (l, e) in row.iter().zip(elog) {
                t += (eta - l) * e;
            }
            total += t;
        }
        total
    }

    /// `ell / T_m - N_d log sum_k sum_v (E[theta_k] E[beta_kv])^(1/T_m)`: the
    /// assignment-level statistic scaled by `1/T_m`, renormalized over
    /// (topic, word) pairs at the posterior means. Zero correction at `T = 1`.
    fn tempered_log_lik(
        &self,
        doc: &Document,
        local: &LdaLocal,
        cache: &LdaCache,
        temps: &[f64],
    ) -> Vec<f64> {
        let k = self.config.k;
        let v = self.config.v;
        let ell = self.expected_log_lik(doc, local, cache);
        let (cached_temps, norms) = cache.tempered_norms.get_or_init(|| {
            let mut norms = Vec::with_capacity(temps.len() * k);
            let mut scaled = vec![0.0; v];
            for &t in temps {
                for kk in 0..k {
                    let row = &cache.log_mean_beta[kk * v..(kk + 1) * v];
                    for (s, lb) in scaled.iter_mut().zip(row) {
                        *s = lb / t;
                    }
                    norms.push(logsumexp(&scaled));
                }
            }
            (temps.to_vec(), norms)
        });
        debug_assert_eq!(cached_temps.as_slice(), temps);
        let n_words = doc.len() as f64;
        let total_gamma: f64 = local.gamma.iter().sum();
        let log_mean_theta: Vec<f64> = local.gamma.iter().map(|g| (g / total_gamma).ln()).collect();
        let mut terms = vec![0.0; k];
        temps
            .iter()
            .enumerate()
            .map(|(m, &t)| {
                if t == 1.0 || n_words == 0.0 {
                    return ell / t;
                }
                for kk in 0..k {
                    terms[kk] = log_mean_theta[kk] / t + norms[m * k + kk];
                }
                ell / t - n_words * logsumexp(&terms)
            })
            .collect()
    }

    fn check_global(&self, global: &LdaGlobal) -> Result<()> {
        if global.k != self.config.k
            || global.v != self.config.v
            || global.lambda.len() != self.config.k * self.config.v
        {
            return Err(Error::InvalidState("topic matrix has the wrong shape".into()));
        }
        if let Some(bad) = global.lambda.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidState(format!("topic parameter {bad} is not positive")));
        }
        Ok(())
    }

    fn check_local(&self, local: &LdaLocal) -> Result<()> {
        let k = self.config.k;
        if local.gamma.len() != k || local.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidState("document proportions must be positive".into()));
        }
        for row in local.phi.chunks(k) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidState("responsibilities are not normalized".into()));
            }
        }
        Ok(())
    }

    fn partition_signature(&self, data: &[Document]) -> PartitionSignature {
        let words: u64 = data.iter().map(Document::len).sum();
        let docs = data.len().max(1) as f64;
        let mut params: BTreeMap<String, String> = self.config.priors().params();
        params.insert("D".into(), docs.to_string());
        PartitionSignature {
            model: "lda".into(),
            data_count: words as f64 / docs,
            params,
        }
    }
}
