//! Factorial mixture updates and objective against a reference mean-field
//! implementation and brute-force enumeration over activation patterns.

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use tempervi::fmm::{fmm_expected_loglik, VarianceConvention};
use tempervi::objective::ConjugateModel;
use tempervi::{elbo, Fmm, FmmConfig, FmmGlobal, FmmLocal};

fn config(k: usize, d: usize) -> FmmConfig {
    FmmConfig {
        k,
        d,
        pi: 0.3,
        sigma_n: 0.5,
        sigma_mu: 1.0,
        convention: VarianceConvention::StdDev,
    }
}

fn random_global(c: &FmmConfig, rng: &mut ChaCha8Rng) -> FmmGlobal {
    FmmGlobal {
        k: c.k,
        d: c.d,
        m: (0..c.k * c.d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        s2: (0..c.k).map(|_| rng.random_range(0.01..0.3)).collect(),
    }
}

fn random_point(c: &FmmConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..c.d).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// `E_q[log N(x; sum_k z_k mu_k, s_n^2 I)] + E_q[log p(z)]` summed over all
/// `2^K` patterns.
fn enumerated_loglik(c: &FmmConfig, x: &[f64], nu: &[f64], g: &FmmGlobal) -> f64 {
    let s2n = c.sigma_n * c.sigma_n;
    let mut total = 0.0;
    for pattern in 0..(1usize << c.k) {
        let z: Vec<bool> = (0..c.k).map(|k| pattern >> k & 1 == 1).collect();
        let q: f64 = z.iter().zip(nu).map(|(&on, &n)| if on { n } else { 1.0 - n }).product();
        if q == 0.0 {
            continue;
        }
        let mut sq = 0.0;
        for i in 0..c.d {
            let mean: f64 = (0..c.k).filter(|&k| z[k]).map(|k| g.m[k * c.d + i]).sum();
            sq += (x[i] - mean).powi(2);
        }
        sq += c.d as f64 * (0..c.k).filter(|&k| z[k]).map(|k| g.s2[k]).sum::<f64>();
        let prior: f64 = z.iter().map(|&on| if on { c.pi.ln() } else { (1.0 - c.pi).ln() }).sum();
        total += q * (-0.5 * c.d as f64 * (2.0 * PI * s2n).ln() - sq / (2.0 * s2n) + prior);
    }
    total
}

fn entropy(nu: &[f64]) -> f64 {
    nu.iter()
        .map(|&p| {
            let mut h = 0.0;
            if p > 0.0 {
                h -= p * p.ln();
            }
            if p < 1.0 {
                h -= (1.0 - p) * (1.0 - p).ln();
            }
            h
        })
        .sum()
}

/// `E_q[log p(mu)] - E_q[log q(mu)]` for isotropic Gaussians.
fn reference_global_term(c: &FmmConfig, g: &FmmGlobal) -> f64 {
    let s2mu = c.sigma_mu * c.sigma_mu;
    let d = c.d as f64;
    (0..c.k)
        .map(|k| {
            let sq: f64 = g.m[k * c.d..(k + 1) * c.d].iter().map(|x| x * x).sum();
            let lp = -0.5 * d * (2.0 * PI * s2mu).ln() - (sq + d * g.s2[k]) / (2.0 * s2mu);
            let lq = -0.5 * d * (2.0 * PI * g.s2[k]).ln() - 0.5 * d;
            lp - lq
        })
        .sum()
}

fn reference_elbo(c: &FmmConfig, data: &[Vec<f64>], g: &FmmGlobal, locals: &[Vec<f64>]) -> f64 {
    reference_global_term(c, g)
        + data
            .iter()
            .zip(locals)
            .map(|(x, nu)| enumerated_loglik(c, x, nu, g) + entropy(nu))
            .sum::<f64>()
}

/// One Gauss-Seidel sweep of the untempered activation updates.
fn reference_local_sweep(c: &FmmConfig, x: &[f64], g: &FmmGlobal, nu: &mut [f64]) {
    let s2n = c.sigma_n * c.sigma_n;
    for k in 0..c.k {
        let mut fit = 0.0;
        for i in 0..c.d {
            let others: f64 = (0..c.k).filter(|&j| j != k).map(|j| nu[j] * g.m[j * c.d + i]).sum();
            fit += g.m[k * c.d + i] * (x[i] - others);
        }
        let sq: f64 = g.m[k * c.d..(k + 1) * c.d].iter().map(|v| v * v).sum();
        fit -= 0.5 * (sq + c.d as f64 * g.s2[k]);
        let logit = (c.pi / (1.0 - c.pi)).ln() + fit / s2n;
        nu[k] = 1.0 / (1.0 + (-logit).exp());
    }
}

/// Closed-form `q(mu_k)` given the activations, components in order.
fn reference_global(c: &FmmConfig, data: &[Vec<f64>], g: &FmmGlobal, locals: &[Vec<f64>]) -> FmmGlobal {
    let s2n = c.sigma_n * c.sigma_n;
    let mut next = g.clone();
    for k in 0..c.k {
        let precision = 1.0 / (c.sigma_mu * c.sigma_mu) + locals.iter().map(|nu| nu[k]).sum::<f64>() / s2n;
        for i in 0..c.d {
            let mut h = 0.0;
            for (x, nu) in data.iter().zip(locals) {
                let others: f64 = (0..c.k).filter(|&j| j != k).map(|j| nu[j] * next.m[j * c.d + i]).sum();
                h += nu[k] * (x[i] - others) / s2n;
            }
            next.m[k * c.d + i] = h / precision;
        }
        next.s2[k] = 1.0 / precision;
    }
    next
}

#[test]
fn expected_loglik_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for k in 1..=4 {
        let c = config(k, 3);
        for _ in 0..20 {
            let g = random_global(&c, &mut rng);
            let x = random_point(&c, &mut rng);
            let nu: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let got = fmm_expected_loglik(&x, &FmmLocal { nu: nu.clone() }, &g, &c).unwrap();
            assert_relative_eq!(got, enumerated_loglik(&c, &x, &nu, &g), max_relative = 1e-12);
        }
    }
}

#[test]
fn elbo_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c = config(3, 4);
    let model = Fmm::new(c).unwrap();
    for _ in 0..20 {
        let g = random_global(&c, &mut rng);
        let data: Vec<Vec<f64>> = (0..5).map(|_| random_point(&c, &mut rng)).collect();
        let nus: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let locals: Vec<FmmLocal> = nus.iter().map(|nu| FmmLocal { nu: nu.clone() }).collect();
        let got = elbo(&model, &data, &g, &locals).unwrap();
        assert_relative_eq!(got, reference_elbo(&c, &data, &g, &nus), max_relative = 1e-12);
    }
}

#[test]
fn updates_match_reference_mean_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let c = config(3, 4);
    let mut model = Fmm::new(c).unwrap();
    model.local_max_iter = 1;
    for _ in 0..20 {
        let g = random_global(&c, &mut rng);
        let cache = model.prepare(&g);
        let data: Vec<Vec<f64>> = (0..6).map(|_| random_point(&c, &mut rng)).collect();
        let start: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();

        let mut expected = start.clone();
        let mut locals = Vec::new();
        for ((x, nu), s) in data.iter().zip(expected.iter_mut()).zip(&start) {
            reference_local_sweep(&c, x, &g, nu);
            let warm = FmmLocal { nu: s.clone() };
            locals.push(model.local_step(x, &cache, 1.0, Some(&warm)));
        }
        for (l, e) in locals.iter().zip(&expected) {
            for (a, b) in l.nu.iter().zip(e) {
                assert!((a - b).abs() < 1e-10);
            }
        }

        let refs: Vec<&Vec<f64>> = data.iter().collect();
        let next = model
            .global_step(&g, &cache, &refs, &locals, &vec![1.0; 6], 1.0, 1.0)
            .unwrap();
        let want = reference_global(&c, &data, &g, &expected);
        for (a, b) in next.m.iter().zip(&want.m) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in next.s2.iter().zip(&want.s2) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn local_fixed_point_is_stationary() {
    // at a converged fit each activation zeroes the derivative of the
    // enumerated objective
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = config(3, 2);
    let mut model = Fmm::new(c).unwrap();
    model.local_tol = 1e-14;
    model.local_max_iter = 10_000;
    for _ in 0..10 {
        let g = random_global(&c, &mut rng);
        let cache = model.prepare(&g);
        let x = random_point(&c, &mut rng);
        let nu = model.local_step(&x, &cache, 1.0, None).nu;
        for k in 0..3 {
            let edge = nu[k].min(1.0 - nu[k]);
            if edge < 1e-4 {
                continue;
            }
            let h = 1e-3 * edge;
            let f = |delta: f64| {
                let mut n = nu.clone();
                n[k] += delta;
                enumerated_loglik(&c, &x, &n, &g) + entropy(&n)
            };
            let grad = (f(h) - f(-h)) / (2.0 * h);
            assert!(grad.abs() < 1e-5, "d/dnu_{k} = {grad}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn activations_stay_in_unit_interval(seed in 0u64..10_000, inv_t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config(4, 3);
        let model = Fmm::new(c).unwrap();
        let g = random_global(&c, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-100.0..100.0)).collect();
        let local = model.local_step(&x, &model.prepare(&g), inv_t, None);
        prop_assert!(model.check_local(&local).is_ok());
        if inv_t == 0.0 {
            prop_assert!(local.nu.iter().all(|&n| n == 0.5));
        }
    }
}
