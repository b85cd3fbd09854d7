//! Tempered log-partition functions `log C(T)` over a temperature ladder.
//!
//! For conditionally conjugate models the integral over data and local
//! variables collapses, leaving
//! `C(T) = E_{beta ~ p(beta)} exp{ -N a_l(beta)/T + N a_l(beta/T) }`,
//! which is estimated here by Monte Carlo with common random numbers across
//! the ladder, or approximated at a single point `beta*`. LDA gets a nested
//! estimator over topics and document proportions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::{log_mean_exp, log_mean_exp_with_se, logsumexp, sample_log_dirichlet, substream};
use crate::objective::LocalLogNormalizer;
use crate::tempering::{GridSpacing, TemperatureGrid};

/// Default Monte Carlo sample count per temperature.
pub const DEFAULT_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMethod {
    Mc,
    Map,
    Analytic,
    LdaNested,
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMethod::Mc => "mc",
            PartitionMethod::Map => "map",
            PartitionMethod::Analytic => "analytic",
            PartitionMethod::LdaNested => "lda-nested",
        })
    }
}

impl FromStr for PartitionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(PartitionMethod::Mc),
            "map" => Ok(PartitionMethod::Map),
            "analytic" => Ok(PartitionMethod::Analytic),
            "lda-nested" => Ok(PartitionMethod::LdaNested),
            other => Err(Error::InvalidArgument(format!("unknown partition method `{other}`"))),
        }
    }
}

/// Provenance of a partition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub model: String,
    /// Number of data points `N` the table was computed for (words per
    /// document for LDA).
    pub data_count: f64,
    pub method: PartitionMethod,
    pub seed: Option<u64>,
    pub samples: Option<String>,
    /// Model hyperparameters, formatted with round-trip precision.
    pub params: BTreeMap<String, String>,
}

impl PartitionMeta {
    pub fn new(model: impl Into<String>, data_count: f64, method: PartitionMethod) -> Self {
        Self {
            model: model.into(),
            data_count,
            method,
            seed: None,
            samples: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_params(mut self, params: BTreeMap<String, String>) -> Self {
        self.params.extend(params);
        self
    }

    fn header_lines(&self, spacing: GridSpacing) -> Vec<String> {
        let mut lines = vec![
            format!("model={}", self.model),
            format!("method={}", self.method),
            format!("N={}", self.data_count),
            format!("spacing={spacing}"),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed={seed}"));
        }
        if let Some(samples) = &self.samples {
            lines.push(format!("samples={samples}"));
        }
        for (k, v) in &self.params {
            lines.push(format!("param.{k}={v}"));
        }
        lines
    }

    /// Content hash of the metadata, used to key persisted tables.
    pub fn fingerprint(&self, spacing: GridSpacing) -> String {
        let mut hasher = Sha256::new();
        for line in self.header_lines(spacing) {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// `(T_m, log C(T_m), standard error)` triples with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTable {
    grid: TemperatureGrid,
    log_c: Vec<f64>,
    std_err: Vec<f64>,
    pub meta: PartitionMeta,
}

impl PartitionTable {
    pub fn new(
        grid: TemperatureGrid,
        log_c: Vec<f64>,
        std_err: Vec<f64>,
        meta: PartitionMeta,
    ) -> Result<Self> {
        if log_c.len() != grid.len() || std_err.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "table has {} values and {} errors for {} temperatures",
                log_c.len(),
                std_err.len(),
                grid.len()
            )));
        }
        if log_c.iter().chain(&std_err).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("partition table entries must be finite".into()));
        }
        if log_c[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "log C(1) must be exactly 0, got {}",
                log_c[0]
            )));
        }
        Ok(Self {
            grid,
            log_c,
            std_err,
            meta,
        })
    }

    pub fn grid(&self) -> &TemperatureGrid {
        &self.grid
    }

    pub fn log_c(&self) -> &[f64] {
        &self.log_c
    }

    pub fn std_err(&self) -> &[f64] {
        &self.std_err
    }

    pub fn fingerprint(&self) -> String {
        self.meta.fingerprint(self.grid.spacing())
    }

    /// Checks that the table was produced for the given model signature.
    pub fn check_signature(&self, signature: &PartitionSignature) -> Result<()> {
        if self.meta.model != signature.model {
            return Err(Error::Config(format!(
                "partition table is for model `{}`, run uses `{}`",
                self.meta.model, signature.model
            )));
        }
        if self.meta.data_count.to_bits() != signature.data_count.to_bits() {
            return Err(Error::Config(format!(
                "partition table was computed for N={}, run has N={}",
                self.meta.data_count, signature.data_count
            )));
        }
        for (k, v) in &signature.params {
            match self.meta.params.get(k) {
                Some(t) if t == v => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "partition table has {k}={t}, run has {k}={v}"
                    )))
                }
                None => {
                    return Err(Error::Config(format!("partition table does not record `{k}`")))
                }
            }
        }
        Ok(())
    }

    /// Text form: `# key=value` header lines, a column header, then one
    /// `T,log_c,std_err` row per temperature with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let spacing = self.grid.spacing();
        for line in self.meta.header_lines(spacing) {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!("# hash={}\n", self.fingerprint()));
        out.push_str("T,log_c,std_err\n");
        for ((t, c), e) in self.grid.temps().iter().zip(&self.log_c).zip(&self.std_err) {
            out.push_str(&format!("{t:.16e},{c:.16e},{e:.16e}\n"));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut params = BTreeMap::new();
        let mut temps = Vec::new();
        let mut log_c = Vec::new();
        let mut std_err = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(path, lineno, "header line is not key=value"))?;
                if let Some(p) = k.strip_prefix("param.") {
                    params.insert(p.to_string(), v.to_string());
                } else {
                    header.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if line.starts_with("T,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, lineno, "expected three comma-separated values"));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad number `{s}`: {e}")))
            };
            temps.push(parse(fields[0])?);
            log_c.push(parse(fields[1])?);
            std_err.push(parse(fields[2])?);
        }
        let take = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("partition table lacks `{k}` header")))
        };
        let model = take("model")?;
        let method: PartitionMethod = take("method")?.parse()?;
        let data_count: f64 = take("N")?
            .parse()
            .map_err(|_| Error::Validation("partition table has a non-numeric N".into()))?;
        let spacing: GridSpacing = take("spacing")?.parse()?;
        let seed = match header.get("seed") {
            Some(s) => Some(
                s.parse()
                    .map_err(|_| Error::Validation(format!("bad seed `{s}`")))?,
            ),
            None => None,
        };
        let meta = PartitionMeta {
            model,
            data_count,
            method,
            seed,
            samples: header.get("samples").cloned(),
            params,
        };
        if let Some(stored) = header.get("hash") {
            let actual = meta.fingerprint(spacing);
            if *stored != actual {
                return Err(Error::Validation(format!(
                    "partition table hash {stored} does not match its metadata ({actual})"
                )));
            }
        }
        let grid = TemperatureGrid::new(temps, spacing)?;
        Self::new(grid, log_c, std_err, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// What a training run expects a partition table to have been computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSignature {
    pub model: String,
    pub data_count: f64,
    pub params: BTreeMap<String, String>,
}

/// Monte Carlo estimate of `log C(T)` from prior draws of the global
/// natural parameter. The same draws serve every temperature.
pub fn mc_log_partition(
    model: &dyn LocalLogNormalizer,
    data_count: f64,
    grid: &TemperatureGrid,
    n_samples: usize,
    seed: u64,
) -> Result<PartitionTable> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let temps = grid.temps();
    // exponents[s][m]
    let exponents: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, s as u64);
            let beta = model.sample_prior_natural(&mut rng);
            let a = model.log_normalizer(&beta);
            temps
                .iter()
                .map(|&t| {
                    let scaled: Vec<f64> = beta.iter().map(|b| b / t).collect();
                    -data_count * a / t + data_count * model.log_normalizer(&scaled)
                })
                .collect()
        })
        .collect();

    let mut log_c = Vec::with_capacity(temps.len());
    let mut std_err = Vec::with_capacity(temps.len());
    for (m, &t) in temps.iter().enumerate() {
        if t == 1.0 {
            log_c.push(0.0);
            std_err.push(0.0);
            continue;
        }
        let column: Vec<f64> = exponents.iter().map(|row| row[m]).collect();
        if column.iter().any(|x| x.is_nan()) || column.iter().all(|&x| x == f64::NEG_INFINITY) {
            return Err(Error::EstimationFailed(format!(
                "every Monte Carlo exponent at T={t} is -inf or NaN"
            )));
        }
        let (v, se) = log_mean_exp_with_se(&column);
        if !v.is_finite() {
            return Err(Error::EstimationFailed(format!("log C({t}) estimate is {v}")));
        }
        log_c.push(v);
        std_err.push(if se.is_finite() { se } else { 0.0 });
    }
    let mut meta = PartitionMeta::new(model.model_id(), data_count, PartitionMethod::Mc)
        .with_params(model.partition_params());
    meta.seed = Some(seed);
    meta.samples = Some(n_samples.to_string());
    PartitionTable::new(grid.clone(), log_c, std_err, meta)
}

/// Point approximation `log C(T) ≈ N (a_l(beta*/T) - a_l(beta*)/T)`, the
/// Monte Carlo integrand's exponent evaluated at `beta_star`.
pub fn map_log_partition(
    model: &dyn LocalLogNormalizer,
    data_count: f64,
    grid: &TemperatureGrid,
    beta_star: &[f64],
) -> Result<PartitionTable> {
    if !model.natural_in_domain(beta_star) {
        return Err(Error::InvalidArgument(
            "beta* lies outside the model's natural-parameter domain".into(),
        ));
    }
    let a = model.log_normalizer(beta_star);
    let mut log_c = Vec::with_capacity(grid.len());
    for &t in grid.temps() {
        if t == 1.0 {
            log_c.push(0.0);
            continue;
        }
        let scaled: Vec<f64> = beta_star.iter().map(|b| b / t).collect();
        let v = data_count * (model.log_normalizer(&scaled) - a / t);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("MAP log C({t}) is {v}")));
        }
        log_c.push(v);
    }
    let mut meta = PartitionMeta::new(model.model_id(), data_count, PartitionMethod::Map)
        .with_params(model.partition_params());
    meta.params.insert(
        "beta_star".into(),
        beta_star.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(";"),
    );
    PartitionTable::new(grid.clone(), log_c, vec![0.0; grid.len()], meta)
}

/// Dirichlet hyperparameters of an LDA model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaPriors {
    pub k: usize,
    pub v: usize,
    pub alpha: f64,
    pub eta: f64,
}

impl LdaPriors {
    fn check(&self) -> Result<()> {
        if self.k == 0 || self.v == 0 {
            return Err(Error::InvalidArgument("K and V must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidArgument("alpha and eta must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("K".to_string(), self.k.to_string()),
            ("V".to_string(), self.v.to_string()),
            ("alpha".to_string(), self.alpha.to_string()),
            ("eta".to_string(), self.eta.to_string()),
        ])
    }
}

/// `log sum_v (sum_k theta_k beta_kv)^(1/T)` for every temperature, per
/// `(beta draw, theta draw)` pair: `out[b][j][m]`.
fn lda_log_tempered_sums(
    priors: &LdaPriors,
    temps: &[f64],
    n_beta: usize,
    n_theta: usize,
    seed: u64,
) -> Vec<Vec<Vec<f64>>> {
    let LdaPriors { k, v, alpha, eta } = *priors;
    (0..n_beta)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let eta_vec = vec![eta; v];
            let alpha_vec = vec![alpha; k];
            let log_beta: Vec<Vec<f64>> =
                (0..k).map(|_| sample_log_dirichlet(&mut rng, &eta_vec)).collect();
            let mut word_logp = vec![0.0; v];
            let mut terms = vec![0.0; k];
            let mut scaled = vec![0.0; v];
            (0..n_theta)
                .map(|_| {
                    let log_theta = sample_log_dirichlet(&mut rng, &alpha_vec);
                    for (w, lp) in word_logp.iter_mut().enumerate() {
                        for (kk, term) in terms.iter_mut().enumerate() {
                            *term = log_theta[kk] + log_beta[kk][w];
                        }
                        *lp = logsumexp(&terms);
                    }
                    temps
                        .iter()
                        .map(|&t| {
                            if t == 1.0 {
                                return 0.0;
                            }
                            let inv = 1.0 / t;
                            for (s, lp) in scaled.iter_mut().zip(&word_logp) {
                                *s = lp * inv;
                            }
                            logsumexp(&scaled)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Nested Monte Carlo estimate of the LDA tempered log-partition function,
/// with documents of `words_per_doc = W/D` words each.
pub fn lda_log_partition(
    priors: &LdaPriors,
    words_per_doc: f64,
    docs: f64,
    grid: &TemperatureGrid,
    n_beta: usize,
    n_theta: usize,
    seed: u64,
) -> Result<PartitionTable> {
    priors.check()?;
    if n_beta == 0 || n_theta == 0 || !(words_per_doc > 0.0) || !(docs >= 1.0) {
        return Err(Error::InvalidArgument(
            "sample counts, words per document and document count must be positive".into(),
        ));
    }
    let temps = grid.temps();
    let sums = lda_log_tempered_sums(priors, temps, n_beta, n_theta, seed);
    let mut log_c = Vec::with_capacity(temps.len());
    let mut std_err = Vec::with_capacity(temps.len());
    for (m, &t) in temps.iter().enumerate() {
        if t == 1.0 {
            log_c.push(0.0);
            std_err.push(0.0);
            continue;
        }
        let outer: Vec<f64> = sums
            .iter()
            .map(|per_theta| {
                let inner: Vec<f64> = per_theta.iter().map(|s| words_per_doc * s[m]).collect();
                docs * log_mean_exp(&inner)
            })
            .collect();
        let (v, se) = log_mean_exp_with_se(&outer);
        if !v.is_finite() {
            return Err(Error::EstimationFailed(format!("LDA log C({t}) estimate is {v}")));
        }
        log_c.push(v);
        std_err.push(if se.is_finite() { se } else { 0.0 });
    }
    let mut meta = PartitionMeta::new("lda", words_per_doc, PartitionMethod::LdaNested)
        .with_params(priors.params());
    meta.params.insert("D".into(), docs.to_string());
    meta.seed = Some(seed);
    meta.samples = Some(format!("beta={n_beta};theta={n_theta}"));
    PartitionTable::new(grid.clone(), log_c, std_err, meta)
}

/// Lower and upper values of the two-sided Jensen construction for the LDA
/// tempered log-partition function, with standard errors across topic draws.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_se: Vec<f64>,
    pub upper_se: Vec<f64>,
}

/// `lower = N D E[log X_T]` and `upper = N D log E[X_T]` with
/// `X_T = sum_v (sum_k theta_k beta_kv)^(1/T)`, estimated on the same draws
/// `lda_log_partition` uses for the same seed and sample counts.
pub fn lda_jensen_bounds(
    priors: &LdaPriors,
    words_per_doc: f64,
    docs: f64,
    grid: &TemperatureGrid,
    n_beta: usize,
    n_theta: usize,
    seed: u64,
) -> Result<JensenBounds> {
    priors.check()?;
    if n_beta == 0 || n_theta == 0 {
        return Err(Error::InvalidArgument("sample counts must be positive".into()));
    }
    let temps = grid.temps();
    let sums = lda_log_tempered_sums(priors, temps, n_beta, n_theta, seed);
    let scale = words_per_doc * docs;
    let mut out = JensenBounds {
        lower: Vec::with_capacity(temps.len()),
        upper: Vec::with_capacity(temps.len()),
        lower_se: Vec::with_capacity(temps.len()),
        upper_se: Vec::with_capacity(temps.len()),
    };
    let nb = n_beta as f64;
    for m in 0..temps.len() {
        let all: Vec<f64> = sums.iter().flatten().map(|s| s[m]).collect();
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::EstimationFailed("non-finite tempered word sum".into()));
        }
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let upper = log_mean_exp(&all);

        // standard errors over topic draws, the independent units
        let per_beta_mean: Vec<f64> = sums
            .iter()
            .map(|row| row.iter().map(|s| s[m]).sum::<f64>() / row.len() as f64)
            .collect();
        let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let per_beta_exp: Vec<f64> = sums
            .iter()
            .map(|row| row.iter().map(|s| (s[m] - max).exp()).sum::<f64>() / row.len() as f64)
            .collect();
        let sd = |xs: &[f64]| {
            if xs.len() < 2 {
                return 0.0;
            }
            let mu = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        };
        let exp_mean = per_beta_exp.iter().sum::<f64>() / nb;
        out.lower.push(scale * mean);
        out.upper.push(scale * upper);
        out.lower_se.push(scale * sd(&per_beta_mean) / nb.sqrt());
        out.upper_se.push(scale * sd(&per_beta_exp) / nb.sqrt() / exp_mean);
    }
    Ok(out)
}
