//! Log-domain arithmetic, special functions and seeded sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub use statrs::function::gamma::{digamma, ln_gamma};

/// `log(sum(exp(xs)))` with max subtraction. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    logsumexp(xs) - (xs.len() as f64).ln()
}

/// Log of a sample mean of `exp(xs)` together with its delta-method standard
/// error `se(m)/m`, both computed relative to the largest exponent so that
/// nothing overflows.
pub fn log_mean_exp_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n == 0 || !max.is_finite() {
        return (log_mean_exp(xs), f64::NAN);
    }
    let scaled: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = scaled.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt() / mean
    } else {
        0.0
    };
    (max + mean.ln(), se)
}

/// Normalizes logits into probabilities in place.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in logits.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x log x` with the convention `0 log 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy of a Bernoulli(p) in nats.
pub fn bernoulli_entropy(p: f64) -> f64 {
    -(xlogx(p) + xlogx(1.0 - p))
}

/// Deterministic RNG substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Log of a Gamma(shape, 1) draw. Shapes below one use the boost
/// `G(a) = G(a + 1) U^(1/a)` so that tiny draws stay representable.
pub fn sample_log_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape");
        let u: f64 = 1.0 - rng.random::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Log of a Dirichlet(`alpha`) draw, normalized in the log domain.
pub fn sample_log_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(rng, a)).collect();
    let norm = logsumexp(&logs);
    for x in logs.iter_mut() {
        *x -= norm;
    }
    logs
}

/// `digamma(x_k) - digamma(sum x)` for every component.
pub fn dirichlet_expectation(params: &[f64]) -> Vec<f64> {
    let total = digamma(params.iter().sum());
    params.iter().map(|&p| digamma(p) - total).collect()
}

/// Log normalizer of a Dirichlet: `sum lnG(a_k) - lnG(sum a_k)`.
pub fn dirichlet_log_normalizer(params: &[f64]) -> f64 {
    params.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(params.iter().sum())
}
