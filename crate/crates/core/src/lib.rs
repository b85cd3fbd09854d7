//! Stochastic variational inference with annealing and variational
//! tempering for conditionally conjugate exponential-family models.
//!
//! The pieces:
//!
//! * [`objective`]: the model abstraction and the ELBO, annealed ELBO and
//!   tempered ELBO.
//! * [`tempering`]: temperature ladders, annealing schedules and the
//!   temperature-posterior updates.
//! * [`partition`]: tempered log-partition tables (Monte Carlo, point
//!   approximation, nested LDA estimator) and their file format.
//! * [`engine`]: the optimizer in `svi`, `avi`, `vt` and `lvt` modes.
//! * [`lda`] and [`fmm`]: latent Dirichlet allocation and the factorial
//!   mixture model.
//! * [`corpus`], [`eval`], [`metrics`], [`synth`]: data, held-out scoring,
//!   diagnostics and synthetic data.

pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fmm;
pub mod lda;
pub mod metrics;
pub mod numeric;
pub mod objective;
pub mod partition;
pub mod synth;
pub mod tempering;

pub use corpus::{Corpus, Document};
pub use engine::{robbins_monro_rate, Checkpoint, GridConfig, Mode, TrainConfig, Trainer};
pub use error::{Error, Result};
pub use fmm::{Fmm, FmmConfig, FmmGlobal, FmmLocal};
pub use lda::{Lda, LdaConfig, LdaGlobal, LdaLocal};
pub use metrics::MetricsRow;
pub use objective::{annealed_elbo, elbo, tempered_elbo, ConjugateModel, LocalLogNormalizer};
pub use partition::{PartitionMeta, PartitionMethod, PartitionTable};
pub use tempering::{GridSpacing, TemperatureGrid, TemperaturePosterior};
