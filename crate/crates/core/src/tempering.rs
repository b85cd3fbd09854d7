//! Temperature ladders, deterministic annealing schedules and the
//! variational updates of the temperature posteriors.
//!
//! A ladder always starts at `T = 1` so the untempered model is one of its
//! rungs. The global posterior `q(y)` reweights rungs by how well the whole
//! data set is explained at each temperature, penalized by the tempered
//! log-partition function; the per-datum posteriors do the same for one
//! observation without a partition term.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::softmax_in_place;
use crate::partition::PartitionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSpacing {
    Exponential,
    Linear,
    InverseLinear,
}

impl fmt::Display for GridSpacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridSpacing::Exponential => "exponential",
            GridSpacing::Linear => "linear",
            GridSpacing::InverseLinear => "inverse-linear",
        })
    }
}

impl FromStr for GridSpacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(GridSpacing::Exponential),
            "linear" => Ok(GridSpacing::Linear),
            "inverse-linear" => Ok(GridSpacing::InverseLinear),
            other => Err(Error::InvalidArgument(format!("unknown grid spacing `{other}`"))),
        }
    }
}

/// Increasing ladder of temperatures `1 = T_1 < T_2 < ... < T_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    temps: Vec<f64>,
    spacing: GridSpacing,
}

impl TemperatureGrid {
    /// Validates an explicit ladder.
    pub fn new(temps: Vec<f64>, spacing: GridSpacing) -> Result<Self> {
        if temps.is_empty() {
            return Err(Error::InvalidArgument("temperature grid is empty".into()));
        }
        if temps[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "first temperature must be exactly 1, got {}",
                temps[0]
            )));
        }
        if temps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("temperatures must be finite".into()));
        }
        if temps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "temperatures must be strictly increasing".into(),
            ));
        }
        Ok(Self { temps, spacing })
    }

    /// `m` temperatures on a geometric progression from `t_min` to `t_max`.
    pub fn exponential(m: usize, t_min: f64, t_max: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one temperature".into()));
        }
        if t_min != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "lowest temperature must be 1 to recover the untempered model, got {t_min}"
            )));
        }
        if !(t_max >= t_min) {
            return Err(Error::InvalidArgument(format!("t_max {t_max} below t_min {t_min}")));
        }
        if m == 1 {
            return Self::new(vec![1.0], GridSpacing::Exponential);
        }
        let log_ratio = (t_max / t_min).ln();
        let mut temps: Vec<f64> = (0..m)
            .map(|i| t_min * (log_ratio * i as f64 / (m - 1) as f64).exp())
            .collect();
        temps[m - 1] = t_max;
        Self::new(temps, GridSpacing::Exponential)
    }

    /// `m` evenly spaced temperatures from `t_min` to `t_max`.
    pub fn linear(m: usize, t_min: f64, t_max: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one temperature".into()));
        }
        if t_min != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "lowest temperature must be 1 to recover the untempered model, got {t_min}"
            )));
        }
        if m == 1 {
            return Self::new(vec![1.0], GridSpacing::Linear);
        }
        let step = (t_max - t_min) / (m - 1) as f64;
        let mut temps: Vec<f64> = (0..m).map(|i| t_min + step * i as f64).collect();
        temps[m - 1] = t_max;
        Self::new(temps, GridSpacing::Linear)
    }

    /// Inverse temperatures `m/M` for `m = 1..M`; zero (infinite temperature)
    /// is excluded and one is included.
    pub fn inverse_linear(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one temperature".into()));
        }
        let temps = (1..=m).rev().map(|j| m as f64 / j as f64).collect();
        Self::new(temps, GridSpacing::InverseLinear)
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn inverse_temps(&self) -> Vec<f64> {
        self.temps.iter().map(|t| 1.0 / t).collect()
    }

    pub fn spacing(&self) -> GridSpacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    /// Mean temperature under a uniform distribution over the rungs.
    pub fn mean_temperature(&self) -> f64 {
        self.temps.iter().sum::<f64>() / self.temps.len() as f64
    }

    /// True when both ladders hold bit-identical temperatures.
    pub fn same_temps(&self, other: &TemperatureGrid) -> bool {
        self.temps.len() == other.temps.len()
            && self
                .temps
                .iter()
                .zip(&other.temps)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Uniform prior weights `1/M`.
pub fn uniform_prior(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

fn check_prior(pi: &[f64], m: usize) -> Result<()> {
    if pi.len() != m {
        return Err(Error::InvalidArgument(format!(
            "prior has {} weights for {m} temperatures",
            pi.len()
        )));
    }
    if pi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("prior weights must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Variational multinomial `q(y | r)` over the rungs of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperaturePosterior {
    r: Vec<f64>,
    grid: Arc<TemperatureGrid>,
}

impl TemperaturePosterior {
    pub fn new(r: Vec<f64>, grid: Arc<TemperatureGrid>) -> Result<Self> {
        if r.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for a grid of {} temperatures",
                r.len(),
                grid.len()
            )));
        }
        if r.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("temperature weights must be nonnegative".into()));
        }
        let total: f64 = r.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "temperature weights sum to {total}, not 1"
            )));
        }
        Ok(Self { r, grid })
    }

    pub fn uniform(grid: Arc<TemperatureGrid>) -> Self {
        let r = uniform_prior(grid.len());
        Self { r, grid }
    }

    /// All mass on rung `m`.
    pub fn degenerate(grid: Arc<TemperatureGrid>, m: usize) -> Self {
        let mut r = vec![0.0; grid.len()];
        r[m] = 1.0;
        Self { r, grid }
    }

    pub fn weights(&self) -> &[f64] {
        &self.r
    }

    pub fn grid(&self) -> &Arc<TemperatureGrid> {
        &self.grid
    }

    /// `E_q[T]`.
    pub fn expected_temperature(&self) -> f64 {
        self.r.iter().zip(self.grid.temps()).map(|(r, t)| r * t).sum()
    }

    /// `E_q[log q(y)]` with `0 log 0 = 0`.
    pub fn neg_entropy(&self) -> f64 {
        self.r.iter().map(|&r| crate::numeric::xlogx(r)).sum()
    }

    fn from_logits(mut logits: Vec<f64>, grid: Arc<TemperatureGrid>) -> Self {
        softmax_in_place(&mut logits);
        Self { r: logits, grid }
    }
}

/// `E_q[1/T_y] = sum_m r_m / T_m`.
pub fn expected_inverse_temperature(q: &TemperaturePosterior) -> f64 {
    q.r.iter().zip(q.grid.temps()).map(|(r, t)| r / t).sum()
}

/// Linear cooling from `t0` to one over `passes` effective passes through the
/// data, refreshed every `update_every` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub passes: f64,
    pub update_every: usize,
}

impl AnnealSchedule {
    pub fn new(t0: f64, passes: f64, update_every: usize) -> Result<Self> {
        if !(t0 >= 1.0) || !t0.is_finite() {
            return Err(Error::InvalidArgument(format!("initial temperature {t0} below 1")));
        }
        if !(passes > 0.0) {
            return Err(Error::InvalidArgument(format!("schedule length {passes} must be positive")));
        }
        if update_every == 0 {
            return Err(Error::InvalidArgument("update_every must be at least 1".into()));
        }
        Ok(Self {
            t0,
            passes,
            update_every,
        })
    }
}

/// Temperature emitted by `schedule` at iteration `t`.
pub fn schedule_temperature(schedule: &AnnealSchedule, t: u64, iters_per_pass: f64) -> f64 {
    let every = schedule.update_every.max(1) as u64;
    let refreshed_at = (t / every) * every;
    let end = schedule.passes * iters_per_pass;
    let frac = refreshed_at as f64 / end;
    if !(frac < 1.0) {
        return 1.0;
    }
    (schedule.t0 + (1.0 - schedule.t0) * frac).max(1.0)
}

/// Refreshes the global temperature posterior:
/// `r_m ∝ exp{ s / T_m + log pi_m - log C(T_m) }` where `s` is the summed
/// expected complete-data log-likelihood over the whole data set.
pub fn update_global_temperature(
    sum_expected_loglik: f64,
    grid: &Arc<TemperatureGrid>,
    pi: &[f64],
    table: &PartitionTable,
) -> Result<TemperaturePosterior> {
    if !sum_expected_loglik.is_finite() {
        return Err(Error::Numeric(format!(
            "log-likelihood statistic is {sum_expected_loglik}"
        )));
    }
    check_prior(pi, grid.len())?;
    if !table.grid().same_temps(grid) {
        return Err(Error::Config(
            "partition table was computed on a different temperature grid".into(),
        ));
    }
    let logits: Vec<f64> = grid
        .temps()
        .iter()
        .zip(pi)
        .zip(table.log_c())
        .map(|((t, p), lc)| sum_expected_loglik / t + p.ln() - lc)
        .collect();
    if logits.iter().any(|x| x.is_nan()) || logits.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(Error::Numeric("temperature logits are not finite".into()));
    }
    Ok(TemperaturePosterior::from_logits(logits, grid.clone()))
}

/// How the prior weight enters the per-datum temperature update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTemperatureForm {
    /// `(1/T_m) (E[log p(x_i, z_i | beta/T_m)] + log pi_m)`.
    #[default]
    PriorInsideBracket,
    /// `(1/T_m) E[log p(x_i, z_i | beta/T_m)] + log pi_m`.
    PriorOutsideBracket,
    /// `E[log p(x_i, z_i | beta/T_m)] + log pi_m`, the plain mean-field
    /// update for a multinomial latent temperature.
    MeanField,
}

impl fmt::Display for LocalTemperatureForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalTemperatureForm::PriorInsideBracket => "prior-inside-bracket",
            LocalTemperatureForm::PriorOutsideBracket => "prior-outside-bracket",
            LocalTemperatureForm::MeanField => "mean-field",
        })
    }
}

impl FromStr for LocalTemperatureForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior-inside-bracket" => Ok(Self::PriorInsideBracket),
            "prior-outside-bracket" => Ok(Self::PriorOutsideBracket),
            "mean-field" => Ok(Self::MeanField),
            other => Err(Error::InvalidArgument(format!("unknown local temperature form `{other}`"))),
        }
    }
}

/// Per-datum temperature update. `tempered_loglik[m]` holds
/// `E_q[log p(x_i, z_i | beta / T_m)]`.
pub fn update_local_temperature(
    tempered_loglik: &[f64],
    grid: &Arc<TemperatureGrid>,
    pi: &[f64],
    form: LocalTemperatureForm,
) -> Result<TemperaturePosterior> {
    if tempered_loglik.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} log-likelihoods for {} temperatures",
            tempered_loglik.len(),
            grid.len()
        )));
    }
    check_prior(pi, grid.len())?;
    let logits: Vec<f64> = tempered_loglik
        .iter()
        .zip(grid.temps())
        .zip(pi)
        .map(|((l, t), p)| match form {
            LocalTemperatureForm::PriorInsideBracket => (l + p.ln()) / t,
            LocalTemperatureForm::PriorOutsideBracket => l / t + p.ln(),
            LocalTemperatureForm::MeanField => l + p.ln(),
        })
        .collect();
    if logits.iter().any(|x| x.is_nan()) || logits.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(Error::Numeric("local temperature logits are not finite".into()));
    }
    Ok(TemperaturePosterior::from_logits(logits, grid.clone()))
}
