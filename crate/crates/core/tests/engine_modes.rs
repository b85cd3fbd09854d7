//! Training-loop behaviour: mode degeneracies, resumption, determinism,
//! convergence and monotone coordinate ascent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tempervi::engine::GridConfig;
use tempervi::fmm::{fmm_generate, fmm_log_partition, VarianceConvention};
use tempervi::objective::ConjugateModel;
use tempervi::partition::lda_log_partition;
use tempervi::synth::{generate_lda_corpus, SyntheticLdaConfig};
use tempervi::{
    annealed_elbo, Document, Fmm, FmmConfig, Lda, LdaConfig, Mode, PartitionTable, TrainConfig, Trainer,
};

fn corpus(docs: usize, seed: u64) -> Vec<Document> {
    generate_lda_corpus(&SyntheticLdaConfig {
        docs,
        vocab: 20,
        topics: 3,
        alpha: 0.3,
        eta: 0.1,
        mean_doc_len: 15.0,
        seed,
    })
    .unwrap()
    .corpus
    .docs
}

fn lda() -> Lda {
    Lda::new(LdaConfig {
        k: 3,
        v: 20,
        alpha: 0.3,
        eta: 0.1,
    })
    .unwrap()
}

fn lda_table(model: &Lda, docs: &[Document], grid: &GridConfig) -> PartitionTable {
    let sig = model.partition_signature(docs);
    lda_log_partition(&model.config.priors(), sig.data_count, docs.len() as f64, &grid.build().unwrap(), 10, 10, 0)
        .unwrap()
}

fn stochastic(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        batch_size: Some(5),
        max_passes: 3.0,
        temp_update_every: 2,
        anneal_update_every: 1,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn train_lda(model: &Lda, docs: &[Document], config: TrainConfig, table: Option<PartitionTable>) -> Vec<f64> {
    let mut tr = Trainer::new(model, docs, config, table).unwrap();
    tr.run(None, None, |_| {}).unwrap();
    tr.global().lambda.clone()
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn unit_temperature_modes_coincide_bitwise_for_lda() {
    let docs = corpus(40, 1);
    let model = lda();
    let svi = train_lda(&model, &docs, stochastic(Mode::Svi), None);

    let mut avi = stochastic(Mode::Avi);
    avi.anneal_t0 = Some(1.0);
    assert_eq!(bits(&train_lda(&model, &docs, avi, None)), bits(&svi));

    let mut vt = stochastic(Mode::Vt);
    vt.grid.size = 1;
    let table = lda_table(&model, &docs, &vt.grid);
    assert_eq!(bits(&train_lda(&model, &docs, vt, Some(table))), bits(&svi));

    let mut lvt = stochastic(Mode::Lvt);
    lvt.grid.size = 1;
    assert_eq!(bits(&train_lda(&model, &docs, lvt, None)), bits(&svi));
}

#[test]
fn unit_temperature_modes_coincide_bitwise_for_fmm() {
    let cfg = FmmConfig {
        k: 3,
        d: 4,
        pi: 0.3,
        sigma_n: 0.2,
        sigma_mu: 0.5,
        convention: VarianceConvention::StdDev,
    };
    let truth: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..12).map(|_| rng.random_range(-0.5..0.5)).collect()
    };
    let data = fmm_generate(&cfg, &truth, 60, 4).unwrap();
    let model = Fmm::new(cfg).unwrap().with_init_count(data.len());
    let base = TrainConfig {
        batch_size: None,
        max_passes: 15.0,
        temp_update_every: 1,
        anneal_update_every: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let run = |config: TrainConfig, table: Option<PartitionTable>| {
        let mut tr = Trainer::new(&model, &data, config, table).unwrap();
        tr.run(None, None, |_| {}).unwrap();
        let g = tr.global().clone();
        let mut out = g.m;
        out.extend(g.s2);
        out
    };
    let svi = run(TrainConfig { mode: Mode::Svi, ..base.clone() }, None);
    let avi = run(
        TrainConfig {
            mode: Mode::Avi,
            anneal_t0: Some(1.0),
            ..base.clone()
        },
        None,
    );
    assert_eq!(bits(&avi), bits(&svi));
    let mut vt = TrainConfig { mode: Mode::Vt, ..base };
    vt.grid.size = 1;
    let table = fmm_log_partition(&cfg, data.len() as f64, &vt.grid.build().unwrap()).unwrap();
    assert_eq!(bits(&run(vt, Some(table))), bits(&svi));
}

#[test]
fn resumed_runs_match_uninterrupted_runs() {
    let docs = corpus(40, 2);
    let model = lda();
    for mode in [Mode::Svi, Mode::Avi, Mode::Vt, Mode::Lvt] {
        let mut config = stochastic(mode);
        config.grid.size = 8;
        let table = (mode == Mode::Vt).then(|| lda_table(&model, &docs, &config.grid));
        let full = train_lda(&model, &docs, config.clone(), table.clone());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let mut first = Trainer::new(&model, &docs, config.clone(), table.clone()).unwrap();
        for _ in 0..7 {
            first.step().unwrap();
        }
        first.checkpoint().save(&path).unwrap();
        let mut second = Trainer::new(&model, &docs, config, table).unwrap();
        second.restore(tempervi::Checkpoint::load(&path).unwrap()).unwrap();
        second.run(None, None, |_| {}).unwrap();
        assert_eq!(bits(&second.global().lambda), bits(&full), "{mode}");
    }
}

#[test]
fn resumed_batch_runs_keep_their_warm_starts() {
    let docs = corpus(12, 7);
    let model = lda();
    let config = TrainConfig {
        mode: Mode::Avi,
        batch_size: None,
        max_passes: 12.0,
        anneal_passes: 6.0,
        anneal_update_every: 1,
        ..TrainConfig::default()
    };
    let full = train_lda(&model, &docs, config.clone(), None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let mut first = Trainer::new(&model, &docs, config.clone(), None).unwrap();
    for _ in 0..5 {
        first.step().unwrap();
    }
    first.checkpoint().save(&path).unwrap();
    let mut second = Trainer::new(&model, &docs, config, None).unwrap();
    second.restore(tempervi::Checkpoint::load(&path).unwrap()).unwrap();
    second.run(None, None, |_| {}).unwrap();
    assert_eq!(bits(&second.global().lambda), bits(&full));
}

#[test]
fn restore_rejects_a_different_configuration() {
    let docs = corpus(20, 3);
    let model = lda();
    let tr = Trainer::new(&model, &docs, stochastic(Mode::Svi), None).unwrap();
    let cp = tr.checkpoint();
    let mut other = Trainer::new(&model, &docs, TrainConfig { seed: 1, ..stochastic(Mode::Svi) }, None).unwrap();
    assert!(matches!(other.restore(cp), Err(tempervi::Error::Config(_))));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let docs = corpus(40, 4);
    let model = lda();
    let run = |threads: usize, mode: Mode| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut config = stochastic(mode);
            config.grid.size = 6;
            let table = (mode == Mode::Vt).then(|| lda_table(&model, &docs, &config.grid));
            train_lda(&model, &docs, config, table)
        })
    };
    for mode in [Mode::Svi, Mode::Vt, Mode::Lvt] {
        assert_eq!(bits(&run(1, mode)), bits(&run(3, mode)), "{mode}");
    }
}

#[test]
fn vt_without_a_table_is_a_configuration_error() {
    let docs = corpus(10, 5);
    let model = lda();
    let err = Trainer::new(&model, &docs, stochastic(Mode::Vt), None).err().unwrap();
    assert!(matches!(err, tempervi::Error::Config(ref m) if m.contains("--partition-table")));
}

fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm
}

#[test]
fn tiny_lda_converges_at_fixed_temperature() {
    let docs = corpus(8, 6);
    let model = lda();
    for (batch_size, t0) in [(None, 1.0), (None, 2.0), (Some(docs.len()), 1.0)] {
        let config = TrainConfig {
            mode: Mode::Avi,
            batch_size,
            anneal_t0: Some(t0),
            // the schedule reaches T = 1 only after the run ends
            anneal_passes: 1e6,
            anneal_update_every: 1_000_000,
            max_passes: 1e4,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(&model, &docs, config, None).unwrap();
        let mut prev = tr.global().lambda.clone();
        let mut converged_at = None;
        for it in 0..10_000 {
            tr.step().unwrap();
            if relative_change(&tr.global().lambda, &prev) < 1e-6 {
                converged_at = Some(it);
                break;
            }
            prev = tr.global().lambda.clone();
        }
        assert!(converged_at.is_some(), "batch {batch_size:?} T={t0} did not converge");
    }
}

fn random_docs(rng: &mut ChaCha8Rng, d: usize, v: usize) -> Vec<Document> {
    (0..d)
        .map(|_| {
            let n = rng.random_range(1..12);
            let tokens: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
            Document::from_tokens(&tokens)
        })
        .collect()
}

/// Batch coordinate ascent on the annealed objective, checked after every
/// local and global half-step.
fn check_monotone<M: ConjugateModel>(model: &M, data: &[M::Datum], t: f64, sweeps: usize, rng: &mut ChaCha8Rng) {
    let inv = 1.0 / t;
    let mut global = model.init_global(rng);
    let mut locals: Option<Vec<M::Local>> = None;
    let mut prev = f64::NEG_INFINITY;
    let refs: Vec<&M::Datum> = data.iter().collect();
    let check = |prev: f64, next: f64, what: &str| {
        assert!(next >= prev - 1e-8 * prev.abs(), "{what}: {prev} -> {next}");
    };
    for _ in 0..sweeps {
        let cache = model.prepare(&global);
        let fitted: Vec<M::Local> = match &locals {
            Some(ls) => data.iter().zip(ls).map(|(x, l)| model.local_step(x, &cache, inv, Some(l))).collect(),
            None => data.iter().map(|x| model.local_step(x, &cache, inv, None)).collect(),
        };
        let after_local = annealed_elbo(model, data, &global, &fitted, t).unwrap();
        check(prev, after_local, "local step");
        global = model
            .global_step(&global, &cache, &refs, &fitted, &vec![inv; data.len()], 1.0, 1.0)
            .unwrap();
        let after_global = annealed_elbo(model, data, &global, &fitted, t).unwrap();
        check(after_local, after_global, "global step");
        prev = after_global;
        locals = Some(fitted);
    }
}

#[test]
fn batch_coordinate_ascent_is_monotone_for_lda() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..100 {
        let k = rng.random_range(2..5);
        let v = rng.random_range(3..10);
        let cfg = LdaConfig {
            k,
            v,
            alpha: rng.random_range(0.05..1.5),
            eta: rng.random_range(0.05..1.5),
        };
        let model = Lda::new(cfg).unwrap();
        let d = rng.random_range(2..6);
        let docs = random_docs(&mut rng, d, v);
        let t = [1.0, 1.7, 5.0][rng.random_range(0..3)];
        check_monotone(&model, &docs, t, 25, &mut rng);
    }
}

#[test]
fn batch_coordinate_ascent_is_monotone_for_fmm() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let cfg = FmmConfig {
            k: rng.random_range(1..4),
            d: rng.random_range(1..5),
            pi: rng.random_range(0.1..0.9),
            sigma_n: rng.random_range(0.1..1.0),
            sigma_mu: rng.random_range(0.2..2.0),
            convention: VarianceConvention::StdDev,
        };
        let model = Fmm::new(cfg).unwrap();
        let n = rng.random_range(2..9);
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..cfg.d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let t = [1.0, 1.7, 5.0][rng.random_range(0..3)];
        check_monotone(&model, &data, t, 25, &mut rng);
    }
}
