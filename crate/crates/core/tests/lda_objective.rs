//! The LDA objectives against a token-level reference implementation and the
//! exact log evidence of tiny corpora.

use std::sync::Arc;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use tempervi::objective::ConjugateModel;
use tempervi::partition::{PartitionMeta, PartitionMethod};
use tempervi::{
    annealed_elbo, elbo, tempered_elbo, Document, GridSpacing, Lda, LdaConfig, LdaGlobal, LdaLocal,
    PartitionTable, TemperatureGrid, TemperaturePosterior,
};

fn elog_dirichlet(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|&x| digamma(x) - digamma(s)).collect()
}

fn ln_dirichlet_norm(p: &[f64]) -> f64 {
    ln_gamma(p.iter().sum()) - p.iter().map(|&x| ln_gamma(x)).sum::<f64>()
}

/// `E_q[log Dir(x | prior)] - E_q[log Dir(x | post)]` for `x ~ Dir(post)`.
fn dirichlet_kl_terms(prior: &[f64], post: &[f64]) -> (f64, f64) {
    let e = elog_dirichlet(post);
    let lp = ln_dirichlet_norm(prior) + prior.iter().zip(&e).map(|(a, e)| (a - 1.0) * e).sum::<f64>();
    let lq = ln_dirichlet_norm(post) + post.iter().zip(&e).map(|(a, e)| (a - 1.0) * e).sum::<f64>();
    (lp, lq)
}

struct Reference {
    global: f64,
    ell: Vec<f64>,
    local: Vec<f64>,
}

/// Every term written out per token rather than per word type.
fn reference_terms(cfg: &LdaConfig, docs: &[Document], g: &LdaGlobal, locals: &[LdaLocal]) -> Reference {
    let (k, v) = (cfg.k, cfg.v);
    let mut global = 0.0;
    let mut elog_beta = Vec::new();
    for kk in 0..k {
        let row = &g.lambda[kk * v..(kk + 1) * v];
        let (lp, lq) = dirichlet_kl_terms(&vec![cfg.eta; v], row);
        global += lp - lq;
        elog_beta.push(elog_dirichlet(row));
    }
    let mut ell = Vec::new();
    let mut local = Vec::new();
    for (doc, l) in docs.iter().zip(locals) {
        let (lp, lq) = dirichlet_kl_terms(&vec![cfg.alpha; k], &l.gamma);
        let et = elog_dirichlet(&l.gamma);
        let mut e = 0.0;
        let mut entropy = 0.0;
        for (j, &w) in doc.words.iter().enumerate() {
            for _ in 0..doc.counts[j] {
                for kk in 0..k {
                    let p = l.phi[j * k + kk];
                    e += p * (et[kk] + elog_beta[kk][w]);
                    if p > 0.0 {
                        entropy -= p * p.ln();
                    }
                }
            }
        }
        ell.push(e);
        local.push(lp - lq + entropy);
    }
    Reference { global, ell, local }
}

fn random_state(cfg: &LdaConfig, docs: &[Document], rng: &mut ChaCha8Rng) -> (LdaGlobal, Vec<LdaLocal>) {
    let lambda = (0..cfg.k * cfg.v).map(|_| rng.random_range(0.05..5.0)).collect();
    let g = LdaGlobal {
        k: cfg.k,
        v: cfg.v,
        lambda,
    };
    let locals = docs
        .iter()
        .map(|d| {
            let gamma = (0..cfg.k).map(|_| rng.random_range(0.05..5.0)).collect();
            let mut phi = Vec::new();
            for _ in 0..d.num_types() {
                let row: Vec<f64> = (0..cfg.k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = row.iter().sum();
                phi.extend(row.iter().map(|x| x / s));
            }
            LdaLocal {
                gamma,
                phi,
                iterations: 0,
                converged: true,
            }
        })
        .collect();
    (g, locals)
}

/// `log p(w)` by summing over every topic assignment with `theta` and the
/// topics integrated out in closed form.
fn log_evidence_by_enumeration(cfg: &LdaConfig, tokens: &[usize]) -> f64 {
    let (k, v) = (cfg.k, cfg.v);
    let n = tokens.len();
    let mut terms = Vec::new();
    for code in 0..k.pow(n as u32) {
        let mut z = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            z.push(c % k);
            c /= k;
        }
        let mut topic_counts = vec![0.0; k];
        let mut word_counts = vec![vec![0.0; v]; k];
        for (&zz, &w) in z.iter().zip(tokens) {
            topic_counts[zz] += 1.0;
            word_counts[zz][w] += 1.0;
        }
        let post: Vec<f64> = topic_counts.iter().map(|c| cfg.alpha + c).collect();
        let mut lp = ln_dirichlet_norm(&vec![cfg.alpha; k]) - ln_dirichlet_norm(&post);
        for row in &word_counts {
            let post: Vec<f64> = row.iter().map(|c| cfg.eta + c).collect();
            lp += ln_dirichlet_norm(&vec![cfg.eta; v]) - ln_dirichlet_norm(&post);
        }
        terms.push(lp);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Midpoint-rule integral over `(theta_1, beta_11, beta_21)` for K = V = 2
/// with flat priors.
fn log_evidence_by_quadrature(tokens: &[usize], points: usize) -> f64 {
    let h = 1.0 / points as f64;
    let mut total = 0.0;
    for a in 0..points {
        let th = (a as f64 + 0.5) * h;
        for b in 0..points {
            let b1 = (b as f64 + 0.5) * h;
            for c in 0..points {
                let b2 = (c as f64 + 0.5) * h;
                let mut p = 1.0;
                for &w in tokens {
                    let (p1, p2) = if w == 0 { (b1, b2) } else { (1.0 - b1, 1.0 - b2) };
                    p *= th * p1 + (1.0 - th) * p2;
                }
                total += p;
            }
        }
    }
    (total * h * h * h).ln()
}

fn tiny() -> (LdaConfig, Lda) {
    let cfg = LdaConfig {
        k: 2,
        v: 2,
        alpha: 1.0,
        eta: 1.0,
    };
    (cfg, Lda::new(cfg).unwrap())
}

#[test]
fn evidence_oracles_agree() {
    let (cfg, _) = tiny();
    for tokens in [vec![0, 1], vec![0, 0], vec![1, 1]] {
        let exact = log_evidence_by_enumeration(&cfg, &tokens);
        let quad = log_evidence_by_quadrature(&tokens, 120);
        assert!((exact - quad).abs() < 1e-4, "{tokens:?}: {exact} vs {quad}");
    }
    // X = theta b1 + (1 - theta) b2 with flat priors: E[X^2] = 11/36, so
    // p(0, 1) = E[X (1 - X)] = 7/36
    let e = log_evidence_by_enumeration(&cfg, &[0, 1]);
    assert_relative_eq!(e, (7.0f64 / 36.0).ln(), epsilon = 1e-12);
}

#[test]
fn elbo_never_exceeds_log_evidence() {
    let (cfg, model) = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for tokens in [vec![0, 1], vec![0, 0]] {
        let docs = vec![Document::from_tokens(&tokens)];
        let evidence = log_evidence_by_enumeration(&cfg, &tokens);
        for _ in 0..200 {
            let (g, locals) = random_state(&cfg, &docs, &mut rng);
            let e = elbo(&model, &docs, &g, &locals).unwrap();
            assert!(e <= evidence + 1e-12, "elbo {e} above evidence {evidence}");
        }
        // coordinate ascent from a random start stays below as well
        let (mut g, _) = random_state(&cfg, &docs, &mut rng);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..200 {
            let cache = model.prepare(&g);
            let locals = vec![model.local_step(&docs[0], &cache, 1.0, None)];
            let refs: Vec<&Document> = docs.iter().collect();
            g = model.global_step(&g, &cache, &refs, &locals, &[1.0], 1.0, 1.0).unwrap();
            let cache = model.prepare(&g);
            let locals = vec![model.local_step(&docs[0], &cache, 1.0, None)];
            best = elbo(&model, &docs, &g, &locals).unwrap();
        }
        assert!(best <= evidence + 1e-12);
        assert!(best > evidence - 1.0, "fitted elbo {best} far below evidence {evidence}");
    }
}

#[test]
fn annealed_elbo_matches_reference_terms() {
    let cfg = LdaConfig {
        k: 3,
        v: 5,
        alpha: 0.4,
        eta: 0.3,
    };
    let model = Lda::new(cfg).unwrap();
    let docs = vec![
        Document::from_tokens(&[0, 1, 1, 4]),
        Document::from_tokens(&[2, 2, 2]),
        Document::from_tokens(&[3, 0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (g, locals) = random_state(&cfg, &docs, &mut rng);
        let r = reference_terms(&cfg, &docs, &g, &locals);
        for t in [1.0, 2.0, 7.5] {
            let expected = r.global
                + r.ell.iter().map(|e| e / t).sum::<f64>()
                + r.local.iter().sum::<f64>();
            let got = annealed_elbo(&model, &docs, &g, &locals, t).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-12, epsilon = 1e-10);
        }
        let no_lik = annealed_elbo(&model, &docs, &g, &locals, f64::INFINITY).unwrap();
        assert_relative_eq!(
            no_lik,
            r.global + r.local.iter().sum::<f64>(),
            max_relative = 1e-12,
            epsilon = 1e-10
        );
        assert_eq!(
            elbo(&model, &docs, &g, &locals).unwrap(),
            annealed_elbo(&model, &docs, &g, &locals, 1.0).unwrap()
        );
    }
}

#[test]
fn tempered_elbo_matches_reference_terms() {
    let (cfg, model) = tiny();
    let docs = vec![Document::from_tokens(&[0, 1])];
    let grid = Arc::new(TemperatureGrid::new(vec![1.0, 2.0], GridSpacing::Linear).unwrap());
    let log_c = vec![0.0, 0.7];
    let table = PartitionTable::new(
        (*grid).clone(),
        log_c.clone(),
        vec![0.0; 2],
        PartitionMeta::new("lda", 2.0, PartitionMethod::Mc),
    )
    .unwrap();
    let pi = [0.4f64, 0.6];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (g, locals) = random_state(&cfg, &docs, &mut rng);
        let r = reference_terms(&cfg, &docs, &g, &locals);
        let weights = [0.3f64, 0.7];
        let q = TemperaturePosterior::new(weights.to_vec(), grid.clone()).unwrap();
        let inv = 0.3 + 0.7 / 2.0;
        let expected = r.global
            + inv * r.ell[0]
            + r.local[0]
            + (0..2).map(|m| weights[m] * (pi[m].ln() - log_c[m] - weights[m].ln())).sum::<f64>();
        let got = tempered_elbo(&model, &docs, &g, &locals, &q, &table, &pi).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);

        // all mass on one temperature: the annealed objective minus log C
        for m in 0..2 {
            let q = TemperaturePosterior::degenerate(grid.clone(), m);
            let t = grid.temps()[m];
            let got = tempered_elbo(&model, &docs, &g, &locals, &q, &table, &pi).unwrap();
            let annealed = annealed_elbo(&model, &docs, &g, &locals, t).unwrap();
            assert_relative_eq!(got, annealed + pi[m].ln() - log_c[m], max_relative = 1e-12);
        }
    }
}

#[test]
fn tempered_elbo_on_unit_grid_is_the_elbo() {
    let (cfg, model) = tiny();
    let docs = vec![Document::from_tokens(&[0, 1]), Document::from_tokens(&[1])];
    let grid = Arc::new(TemperatureGrid::new(vec![1.0], GridSpacing::Exponential).unwrap());
    let table = PartitionTable::new(
        (*grid).clone(),
        vec![0.0],
        vec![0.0],
        PartitionMeta::new("lda", 1.5, PartitionMethod::Mc),
    )
    .unwrap();
    let q = TemperaturePosterior::uniform(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (g, locals) = random_state(&cfg, &docs, &mut rng);
    assert_eq!(
        tempered_elbo(&model, &docs, &g, &locals, &q, &table, &[1.0]).unwrap(),
        elbo(&model, &docs, &g, &locals).unwrap()
    );
}
