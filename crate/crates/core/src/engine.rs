//! The optimizer: stochastic (or batch) natural-gradient variational
//! inference in four modes.
//!
//! * `svi`: plain stochastic variational inference at `T = 1`.
//! * `avi`: annealing along a deterministic linear schedule.
//! * `vt`: a global latent temperature whose posterior is refreshed from the
//!   data fit and the tempered log-partition table.
//! * `lvt`: one latent temperature per data point, fitted together with the
//!   local variables each time the point is sampled.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::objective::{elbo, ConjugateModel};
use crate::partition::PartitionTable;
use crate::tempering::{
    expected_inverse_temperature, schedule_temperature, uniform_prior, update_global_temperature,
    update_local_temperature, AnnealSchedule, GridSpacing, LocalTemperatureForm, TemperatureGrid,
    TemperaturePosterior,
};

/// `rho_t = (tau + t)^(-kappa)`.
pub fn robbins_monro_rate(tau: f64, kappa: f64, t: u64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("delay tau = {tau} is negative")));
    }
    let base = tau + t as f64;
    if base == 0.0 {
        return Err(Error::InvalidArgument("tau + t must be positive".into()));
    }
    // through log2 so that power-of-two bases give exact results
    Ok((-kappa * base.log2()).exp2())
}

/// `(1 - rho) current + rho (prior + scale * stats)`, elementwise.
pub fn natural_gradient_step(
    prior: &[f64],
    stats: &[f64],
    scale: f64,
    rho: f64,
    current: &[f64],
) -> Result<Vec<f64>> {
    if prior.len() != stats.len() || prior.len() != current.len() {
        return Err(Error::InvalidArgument(format!(
            "prior, statistics and current parameters have lengths {}, {} and {}",
            prior.len(),
            stats.len(),
            current.len()
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("step size {rho} outside [0, 1]")));
    }
    Ok(prior
        .iter()
        .zip(stats)
        .zip(current)
        .map(|((a, s), c)| (1.0 - rho) * c + rho * (a + scale * s))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Svi,
    Avi,
    Vt,
    Lvt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Svi => "svi",
            Mode::Avi => "avi",
            Mode::Vt => "vt",
            Mode::Lvt => "lvt",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svi" => Ok(Mode::Svi),
            "avi" => Ok(Mode::Avi),
            "vt" => Ok(Mode::Vt),
            "lvt" => Ok(Mode::Lvt),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the temperature ladder is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub spacing: GridSpacing,
    pub size: usize,
    pub t_max: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<TemperatureGrid> {
        match self.spacing {
            GridSpacing::Exponential => TemperatureGrid::exponential(self.size, 1.0, self.t_max),
            GridSpacing::Linear => TemperatureGrid::linear(self.size, 1.0, self.t_max),
            GridSpacing::InverseLinear => TemperatureGrid::inverse_linear(self.size),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            spacing: GridSpacing::Exponential,
            size: 100,
            t_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Minibatch size; `None` runs batch updates over all data with `rho = 1`.
    pub batch_size: Option<usize>,
    pub tau: f64,
    pub kappa: f64,
    pub grid: GridConfig,
    /// Initial annealing temperature; defaults to the grid's mean temperature.
    pub anneal_t0: Option<f64>,
    /// Annealing schedule length in effective passes.
    pub anneal_passes: f64,
    pub anneal_update_every: usize,
    /// Iterations between refreshes of the global temperature posterior.
    pub temp_update_every: usize,
    /// Weight of the newest statistic in an exponential moving average of
    /// the global temperature statistic; `None` uses the newest alone.
    pub temp_ema: Option<f64>,
    pub lvt_form: LocalTemperatureForm,
    /// Alternations between local variables and local temperatures.
    pub lvt_rounds: usize,
    pub max_passes: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Report the batch ELBO at `T = 1` with each metrics row.
    pub track_elbo: bool,
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Svi,
            batch_size: Some(100),
            tau: 1024.0,
            kappa: 0.7,
            grid: GridConfig::default(),
            anneal_t0: None,
            anneal_passes: 1.0,
            anneal_update_every: 1000,
            temp_update_every: 1000,
            temp_ema: None,
            lvt_form: LocalTemperatureForm::default(),
            lvt_rounds: 5,
            max_passes: 1.0,
            seed: 0,
            eval_every: 100,
            track_elbo: false,
            record_wallclock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.batch_size.is_some() {
            if !(self.kappa > 0.5 && self.kappa <= 1.0) {
                return Err(Error::Config(format!("kappa = {} outside (0.5, 1]", self.kappa)));
            }
            if !(self.tau >= 0.0) {
                return Err(Error::Config(format!("tau = {} is negative", self.tau)));
            }
        }
        if self.temp_update_every == 0 || self.anneal_update_every == 0 || self.eval_every == 0 {
            return Err(Error::Config("update and evaluation intervals must be at least 1".into()));
        }
        if !(self.max_passes > 0.0) {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        if let Some(w) = self.temp_ema {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Config(format!("temperature EMA weight {w} outside (0, 1]")));
            }
        }
        if self.mode == Mode::Lvt && self.lvt_rounds == 0 {
            return Err(Error::Config("lvt needs at least one round".into()));
        }
        Ok(())
    }

    /// Short content hash stored in checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Temperature state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureState {
    /// A single known temperature (svi, avi).
    Fixed(f64),
    /// Global posterior weights over the grid (vt).
    Global(Vec<f64>),
    /// Mean expected temperature over the last minibatch (lvt).
    Local(f64),
}

/// Everything needed to resume a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<G, L> {
    pub iteration: u64,
    pub global: G,
    /// Retained local factors in batch mode, used as warm starts.
    pub locals: Vec<Option<L>>,
    pub temperature: TemperatureState,
    pub temp_statistic: Option<f64>,
    pub rng: ChaCha8Rng,
    pub config_hash: String,
}

impl<G, L> Checkpoint<G, L>
where
    G: Serialize + serde::de::DeserializeOwned,
    L: Serialize + serde::de::DeserializeOwned,
{
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub rate: f64,
    pub expected_t: f64,
}

pub struct Trainer<'a, M: ConjugateModel> {
    model: &'a M,
    data: &'a [M::Datum],
    config: TrainConfig,
    grid: Arc<TemperatureGrid>,
    pi: Vec<f64>,
    table: Option<PartitionTable>,
    schedule: Option<AnnealSchedule>,
    global: M::Global,
    temp: TemperatureState,
    temp_statistic: Option<f64>,
    posterior: Option<TemperaturePosterior>,
    locals: Vec<Option<M::Local>>,
    rng: ChaCha8Rng,
    t: u64,
}

impl<'a, M: ConjugateModel> Trainer<'a, M> {
    pub fn new(
        model: &'a M,
        data: &'a [M::Datum],
        config: TrainConfig,
        table: Option<PartitionTable>,
    ) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Config("training data is empty".into()));
        }
        if let Some(b) = config.batch_size {
            if b > data.len() {
                return Err(Error::Config(format!(
                    "batch size {b} exceeds the {} available data points",
                    data.len()
                )));
            }
        }
        let grid = Arc::new(config.grid.build()?);
        let pi = uniform_prior(grid.len());
        let mut schedule = None;
        let mut posterior = None;
        let temp = match config.mode {
            Mode::Svi => TemperatureState::Fixed(1.0),
            Mode::Avi => {
                let t0 = config.anneal_t0.unwrap_or_else(|| grid.mean_temperature());
                let s = AnnealSchedule::new(t0, config.anneal_passes, config.anneal_update_every)
                    .map_err(|e| Error::Config(e.to_string()))?;
                schedule = Some(s);
                TemperatureState::Fixed(t0)
            }
            Mode::Vt => {
                let table = table.as_ref().ok_or_else(|| {
                    Error::Config("mode vt requires a partition table (--partition-table)".into())
                })?;
                if !table.grid().same_temps(&grid) {
                    return Err(Error::Config(
                        "partition table was computed on a different temperature grid".into(),
                    ));
                }
                table.check_signature(&model.partition_signature(data))?;
                let q = TemperaturePosterior::uniform(grid.clone());
                let state = TemperatureState::Global(q.weights().to_vec());
                posterior = Some(q);
                state
            }
            Mode::Lvt => TemperatureState::Local(grid.mean_temperature()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let global = model.init_global(&mut rng);
        let locals = if config.batch_size.is_none() {
            vec![None; data.len()]
        } else {
            Vec::new()
        };
        Ok(Self {
            model,
            data,
            config,
            grid,
            pi,
            table,
            schedule,
            global,
            temp,
            temp_statistic: None,
            posterior,
            locals,
            rng,
            t: 0,
        })
    }

    pub fn global(&self) -> &M::Global {
        &self.global
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<TemperatureGrid> {
        &self.grid
    }

    pub fn temperature(&self) -> &TemperatureState {
        &self.temp
    }

    /// Global temperature posterior in vt mode.
    pub fn temperature_posterior(&self) -> Option<&TemperaturePosterior> {
        self.posterior.as_ref()
    }

    fn batch_len(&self) -> usize {
        self.config.batch_size.unwrap_or(self.data.len())
    }

    /// Minibatches per effective pass through the data.
    pub fn iters_per_pass(&self) -> f64 {
        self.data.len() as f64 / self.batch_len() as f64
    }

    pub fn max_iterations(&self) -> u64 {
        (self.config.max_passes * self.iters_per_pass()).ceil() as u64
    }

    pub fn effective_passes(&self) -> f64 {
        self.t as f64 * self.batch_len() as f64 / self.data.len() as f64
    }

    /// `E[T]` of the current temperature state.
    pub fn expected_temperature(&self) -> f64 {
        match &self.temp {
            TemperatureState::Fixed(t) | TemperatureState::Local(t) => *t,
            TemperatureState::Global(_) => self
                .posterior
                .as_ref()
                .map_or(1.0, TemperaturePosterior::expected_temperature),
        }
    }

    /// Runs one iteration: sample, fit locals, refresh temperatures, blend.
    pub fn step(&mut self) -> Result<StepInfo> {
        let n = self.data.len();
        let b = self.batch_len();
        let rho = match self.config.batch_size {
            None => 1.0,
            Some(_) => robbins_monro_rate(self.config.tau, self.config.kappa, self.t)?,
        };
        let idx: Vec<usize> = match self.config.batch_size {
            None => (0..n).collect(),
            Some(b) => rand::seq::index::sample(&mut self.rng, n, b).into_vec(),
        };
        let cache = self.model.prepare(&self.global);
        let model = self.model;
        let data = self.data;
        let warm_locals = &self.locals;
        let warm = |i: usize| warm_locals.get(i).and_then(Option::as_ref);

        let (locals, weights) = match self.config.mode {
            Mode::Svi | Mode::Avi | Mode::Vt => {
                let mut inv_t = match self.config.mode {
                    Mode::Svi => 1.0,
                    Mode::Avi => {
                        let s = self.schedule.as_ref().expect("avi has a schedule");
                        let t = schedule_temperature(s, self.t, self.iters_per_pass());
                        self.temp = TemperatureState::Fixed(t);
                        1.0 / t
                    }
                    _ => expected_inverse_temperature(self.posterior.as_ref().expect("vt posterior")),
                };
                let locals: Vec<M::Local> = idx
                    .par_iter()
                    .map(|&i| model.local_step(&data[i], &cache, inv_t, warm(i)))
                    .collect();
                // q(T) starts uniform and is first refreshed after one full interval
                let every = self.config.temp_update_every as u64;
                if self.config.mode == Mode::Vt && self.t > 0 && self.t % every == 0 {
                    inv_t = self.refresh_global_temperature(&idx, &locals, &cache)?;
                }
                (locals, vec![inv_t; idx.len()])
            }
            Mode::Lvt => {
                let grid = self.grid.clone();
                let pi = &self.pi;
                let form = self.config.lvt_form;
                let rounds = self.config.lvt_rounds;
                let fitted: Vec<(M::Local, f64, f64)> = idx
                    .par_iter()
                    .map(|&i| fit_local_temperature(model, &data[i], &cache, &grid, pi, form, rounds, warm(i)))
                    .collect::<Result<_>>()?;
                let mean_t = fitted.iter().map(|f| f.2).sum::<f64>() / fitted.len() as f64;
                self.temp = TemperatureState::Local(mean_t);
                let mut locals = Vec::with_capacity(fitted.len());
                let mut weights = Vec::with_capacity(fitted.len());
                for (l, w, _) in fitted {
                    locals.push(l);
                    weights.push(w);
                }
                (locals, weights)
            }
        };

        let batch: Vec<&M::Datum> = idx.iter().map(|&i| &data[i]).collect();
        let scale = n as f64 / b as f64;
        let next = self
            .model
            .global_step(&self.global, &cache, &batch, &locals, &weights, scale, rho)?;
        self.model.check_global(&next)?;
        self.global = next;
        if self.config.batch_size.is_none() {
            for (&i, l) in idx.iter().zip(locals) {
                self.locals[i] = Some(l);
            }
        }
        self.t += 1;
        Ok(StepInfo {
            rate: rho,
            expected_t: self.expected_temperature(),
        })
    }

    fn refresh_global_temperature(
        &mut self,
        idx: &[usize],
        locals: &[M::Local],
        cache: &M::Cache,
    ) -> Result<f64> {
        let lls: Vec<f64> = idx
            .par_iter()
            .zip(locals.par_iter())
            .map(|(&i, l)| self.model.expected_log_lik(&self.data[i], l, cache))
            .collect();
        let mean = lls.iter().sum::<f64>() / lls.len() as f64;
        let mut stat = self.data.len() as f64 * mean;
        if let (Some(w), Some(prev)) = (self.config.temp_ema, self.temp_statistic) {
            stat = (1.0 - w) * prev + w * stat;
        }
        self.temp_statistic = Some(stat);
        let table = self.table.as_ref().expect("vt has a table");
        let q = update_global_temperature(stat, &self.grid, &self.pi, table)?;
        let inv = expected_inverse_temperature(&q);
        self.temp = TemperatureState::Global(q.weights().to_vec());
        self.posterior = Some(q);
        Ok(inv)
    }

    /// Refits every local factor at `T = 1` (warm-started from the last batch
    /// fit when available) and evaluates the ELBO.
    pub fn elbo_at_unit_temperature(&self) -> Result<f64> {
        let cache = self.model.prepare(&self.global);
        let model = self.model;
        let locals: Vec<M::Local> = self
            .data
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let warm = self.locals.get(i).and_then(Option::as_ref);
                model.local_step(x, &cache, 1.0, warm)
            })
            .collect();
        elbo(self.model, self.data, &self.global, &locals)
    }

    pub fn checkpoint(&self) -> Checkpoint<M::Global, M::Local> {
        Checkpoint {
            iteration: self.t,
            global: self.global.clone(),
            locals: self.locals.clone(),
            temperature: self.temp.clone(),
            temp_statistic: self.temp_statistic,
            rng: self.rng.clone(),
            config_hash: self.config.hash(),
        }
    }

    /// Resumes from a checkpoint written by a run with the same configuration.
    pub fn restore(&mut self, cp: Checkpoint<M::Global, M::Local>) -> Result<()> {
        if cp.config_hash != self.config.hash() {
            return Err(Error::Config(format!(
                "checkpoint was written by configuration {}, this run is {}",
                cp.config_hash,
                self.config.hash()
            )));
        }
        self.model.check_global(&cp.global)?;
        if let TemperatureState::Global(r) = &cp.temperature {
            self.posterior = Some(TemperaturePosterior::new(r.clone(), self.grid.clone())?);
        }
        if cp.locals.len() != self.locals.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} local states, this run keeps {}",
                cp.locals.len(),
                self.locals.len()
            )));
        }
        for local in cp.locals.iter().flatten() {
            self.model.check_local(local)?;
        }
        self.t = cp.iteration;
        self.global = cp.global;
        self.locals = cp.locals;
        self.temp = cp.temperature;
        self.temp_statistic = cp.temp_statistic;
        self.rng = cp.rng;
        Ok(())
    }

    fn metrics_row(
        &self,
        info: StepInfo,
        heldout: Option<&(dyn Fn(&M::Global) -> Result<f64> + '_)>,
        started: Instant,
    ) -> Result<MetricsRow> {
        let elbo_t1 = if self.config.track_elbo && self.config.batch_size.is_none() {
            Some(self.elbo_at_unit_temperature()?)
        } else {
            None
        };
        let heldout = heldout.map(|f| f(&self.global)).transpose()?;
        Ok(MetricsRow {
            iteration: self.t,
            effective_passes: self.effective_passes(),
            elbo_t1,
            heldout,
            expected_t: info.expected_t,
            rate: info.rate,
            wallclock_s: self
                .config
                .record_wallclock
                .then(|| started.elapsed().as_secs_f64()),
        })
    }

    /// Trains until `max_passes`, calling `on_row` with a metrics row every
    /// `eval_every` iterations and after the last one. On failure the state
    /// before the failing step is checkpointed to `checkpoint` if given.
    pub fn run(
        &mut self,
        heldout: Option<&(dyn Fn(&M::Global) -> Result<f64> + '_)>,
        checkpoint: Option<&Path>,
        mut on_row: impl FnMut(&MetricsRow),
    ) -> Result<Vec<MetricsRow>> {
        let started = Instant::now();
        let max = self.max_iterations();
        let mut rows = Vec::new();
        while self.t < max {
            let before = checkpoint.map(|_| self.checkpoint());
            let info = match self.step() {
                Ok(info) => info,
                Err(e) => {
                    if let (Some(path), Some(cp)) = (checkpoint, before) {
                        cp.save(path)?;
                        log::error!("step {} failed; state saved to {}", self.t, path.display());
                    }
                    return Err(e);
                }
            };
            if self.t % self.config.eval_every as u64 == 0 || self.t == max {
                let row = self.metrics_row(info, heldout, started)?;
                on_row(&row);
                rows.push(row);
            }
        }
        if let Some(path) = checkpoint {
            self.checkpoint().save(path)?;
        }
        Ok(rows)
    }
}

/// Alternates local fits and per-datum temperature updates, starting from a
/// uniform temperature posterior, until `E[1/T]` moves by less than `1e-4`.
/// Returns the local fit, `E[1/T]` and `E[T]`.
#[allow(clippy::too_many_arguments)]
pub fn fit_local_temperature<M: ConjugateModel>(
    model: &M,
    datum: &M::Datum,
    cache: &M::Cache,
    grid: &Arc<TemperatureGrid>,
    pi: &[f64],
    form: LocalTemperatureForm,
    rounds: usize,
    warm: Option<&M::Local>,
) -> Result<(M::Local, f64, f64)> {
    let mut q = TemperaturePosterior::uniform(grid.clone());
    let mut inv = expected_inverse_temperature(&q);
    let mut local = model.local_step(datum, cache, inv, warm);
    for _ in 0..rounds {
        let stats = model.tempered_log_lik(datum, &local, cache, grid.temps());
        q = update_local_temperature(&stats, grid, pi, form)?;
        let next = expected_inverse_temperature(&q);
        if next == inv {
            break;
        }
        let settled = (next - inv).abs() < 1e-4;
        inv = next;
        local = model.local_step(datum, cache, inv, Some(&local));
        if settled {
            break;
        }
    }
    Ok((local, inv, q.expected_temperature()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rate_examples() {
        assert_eq!(robbins_monro_rate(0.0, 1.0, 1).unwrap(), 1.0);
        assert_eq!(robbins_monro_rate(1024.0, 0.7, 0).unwrap(), 0.0078125);
        assert_relative_eq!(robbins_monro_rate(1024.0, 0.7, 1024).unwrap(), 2f64.powf(-7.7), max_relative = 1e-15);
        assert_relative_eq!(robbins_monro_rate(1024.0, 0.7, 1024).unwrap(), 0.00480916, epsilon = 1e-7);
        assert!(robbins_monro_rate(0.0, 0.7, 0).is_err());
        let mut prev = f64::INFINITY;
        for t in 0..100 {
            let r = robbins_monro_rate(3.0, 0.6, t).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn blend_examples() {
        let hat = natural_gradient_step(&[1.0], &[4.0], 0.5, 1.0, &[2.0]).unwrap();
        assert_eq!(hat, vec![3.0]);
        assert_eq!(natural_gradient_step(&[1.0], &[4.0], 0.5, 0.0, &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(natural_gradient_step(&[1.0], &[4.0], 0.5, 0.5, &[2.0]).unwrap(), vec![2.5]);
        // two data points with E[1/T] = [1, 0.5] and E[t] = [2, 4]: scale N/B = 1
        let weighted = 1.0 * 2.0 + 0.5 * 4.0;
        assert_eq!(natural_gradient_step(&[0.0], &[weighted], 1.0, 1.0, &[9.0]).unwrap(), vec![4.0]);
        assert!(natural_gradient_step(&[0.0], &[1.0, 2.0], 1.0, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.kappa = 0.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.kappa = 0.7;
        c.batch_size = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Svi, Mode::Avi, Mode::Vt, Mode::Lvt] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
    }
}
