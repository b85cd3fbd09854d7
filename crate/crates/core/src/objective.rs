//! The conditionally conjugate model abstraction and the three variational
//! objectives evaluated as diagnostics: the ELBO, the annealed ELBO and the
//! tempered ELBO over a temperature ladder.
//!
//! Every objective splits a data set's bound into
//! `global_term + sum_i (inv_T * ell_i + local_i)`, where `ell_i` is the
//! expected log-likelihood that temperatures divide and `local_i` collects
//! the per-datum terms that stay untempered.

use std::collections::BTreeMap;
use std::fmt::Debug;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::partition::{PartitionSignature, PartitionTable};
use crate::tempering::{expected_inverse_temperature, TemperaturePosterior};

/// Log-normalizer of a model's local conditional `p(x_i, z_i | beta)` as a
/// function of the global natural parameter, with a prior sampler for
/// `beta`. This is all the generic partition estimators need.
pub trait LocalLogNormalizer: Sync {
    fn model_id(&self) -> &str;
    fn log_normalizer(&self, natural: &[f64]) -> f64;
    fn sample_prior_natural(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn natural_in_domain(&self, natural: &[f64]) -> bool;
    /// Hyperparameters recorded in partition-table metadata.
    fn partition_params(&self) -> BTreeMap<String, String>;
}

/// A conditionally conjugate exponential-family model with mean-field
/// variational factors `q(beta | lambda)` and `q(z_i | phi_i)`.
pub trait ConjugateModel: Sync {
    type Datum: Sync;
    type Global: Clone + Debug + Send + Sync + Serialize + DeserializeOwned;
    type Local: Clone + Debug + Send + Sync + Serialize + DeserializeOwned;
    /// Quantities derived from the global parameters once per iteration.
    type Cache: Sync;

    fn model_id(&self) -> &'static str;

    /// Random initial global parameters.
    fn init_global(&self, rng: &mut ChaCha8Rng) -> Self::Global;

    fn prepare(&self, global: &Self::Global) -> Self::Cache;

    /// Fits the local factors of one datum with natural parameters scaled by
    /// `inv_t`, optionally starting from a previous fit.
    fn local_step(
        &self,
        datum: &Self::Datum,
        cache: &Self::Cache,
        inv_t: f64,
        warm: Option<&Self::Local>,
    ) -> Self::Local;

    /// One natural-gradient step
    /// `lambda' = (1 - rho) lambda + rho (alpha + scale sum_i w_i E[t(x_i, z_i)])`,
    /// where `w_i` is the expected inverse temperature applied to datum `i`.
    #[allow(clippy::too_many_arguments)]
    fn global_step(
        &self,
        global: &Self::Global,
        cache: &Self::Cache,
        batch: &[&Self::Datum],
        locals: &[Self::Local],
        weights: &[f64],
        scale: f64,
        rho: f64,
    ) -> Result<Self::Global>;

    /// The tempered part of one datum's expected log joint.
    fn expected_log_lik(&self, datum: &Self::Datum, local: &Self::Local, cache: &Self::Cache) -> f64;

    /// The untempered per-datum terms: local priors that temperatures leave
    /// alone and the entropy of the local factors.
    fn local_term(&self, datum: &Self::Datum, local: &Self::Local, cache: &Self::Cache) -> f64;

    /// `E_q[log p(beta)] - E_q[log q(beta)]`.
    fn global_term(&self, global: &Self::Global, cache: &Self::Cache) -> f64;

    /// `E_q[log p(x_i, z_i | beta / T_m)]` for every temperature, the
    /// statistic of the per-datum temperature update.
    fn tempered_log_lik(
        &self,
        datum: &Self::Datum,
        local: &Self::Local,
        cache: &Self::Cache,
        temps: &[f64],
    ) -> Vec<f64>;

    fn check_global(&self, global: &Self::Global) -> Result<()>;

    fn check_local(&self, local: &Self::Local) -> Result<()>;

    /// What a partition table for this model and data set must match.
    fn partition_signature(&self, data: &[Self::Datum]) -> PartitionSignature;
}

/// Objective components summed over a data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub global: f64,
    pub expected_log_lik: f64,
    pub local: f64,
}

fn checked_terms<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
) -> Result<(M::Cache, Vec<(f64, f64)>)> {
    if data.len() != locals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} data points but {} local states",
            data.len(),
            locals.len()
        )));
    }
    model
        .check_global(global)
        .map_err(|e| Error::InvalidState(e.to_string()))?;
    for local in locals {
        model
            .check_local(local)
            .map_err(|e| Error::InvalidState(e.to_string()))?;
    }
    let cache = model.prepare(global);
    let per_datum: Vec<(f64, f64)> = data
        .par_iter()
        .zip(locals.par_iter())
        .map(|(x, l)| (model.expected_log_lik(x, l, &cache), model.local_term(x, l, &cache)))
        .collect();
    Ok((cache, per_datum))
}

/// Sums of the objective components, reduced in data order.
pub fn objective_terms<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
) -> Result<ObjectiveTerms> {
    let (cache, per_datum) = checked_terms(model, data, global, locals)?;
    let mut ell = 0.0;
    let mut local = 0.0;
    for (e, l) in per_datum {
        ell += e;
        local += l;
    }
    Ok(ObjectiveTerms {
        global: model.global_term(global, &cache),
        expected_log_lik: ell,
        local,
    })
}

fn annealed_with_inverse<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
    inv_t: f64,
) -> Result<f64> {
    let (cache, per_datum) = checked_terms(model, data, global, locals)?;
    let mut total = model.global_term(global, &cache);
    for (e, l) in per_datum {
        total += if inv_t == 0.0 { l } else { inv_t * e + l };
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {total}")));
    }
    Ok(total)
}

/// `E_q[log p(beta, z, x)] - E_q[log q(beta, z)]`.
pub fn elbo<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
) -> Result<f64> {
    annealed_elbo(model, data, global, locals, 1.0)
}

/// The ELBO with every datum's expected log-likelihood divided by `t`.
/// `t = inf` is accepted and drops the likelihood entirely.
pub fn annealed_elbo<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
    t: f64,
) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!("temperature {t} is below 1")));
    }
    annealed_with_inverse(model, data, global, locals, 1.0 / t)
}

/// The tempered ELBO for a temperature posterior `r` with prior weights `pi`.
pub fn tempered_elbo<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    global: &M::Global,
    locals: &[M::Local],
    r: &TemperaturePosterior,
    table: &PartitionTable,
    pi: &[f64],
) -> Result<f64> {
    if !r.grid().same_temps(table.grid()) {
        return Err(Error::Config(
            "temperature posterior and partition table use different grids".into(),
        ));
    }
    if pi.len() != r.weights().len() {
        return Err(Error::InvalidArgument(format!(
            "{} prior weights for {} temperatures",
            pi.len(),
            r.weights().len()
        )));
    }
    let core = annealed_with_inverse(model, data, global, locals, expected_inverse_temperature(r))?;
    let mut temp_terms = 0.0;
    for ((&w, &lc), &p) in r.weights().iter().zip(table.log_c()).zip(pi) {
        if w > 0.0 {
            temp_terms += w * (p.ln() - lc - w.ln());
        }
    }
    Ok(core + temp_terms)
}
