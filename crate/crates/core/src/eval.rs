//! Held-out evaluation by document completion: fit each test document's
//! topic proportions on half of its tokens and score the other half.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::lda::{Lda, LdaGlobal};
use crate::numeric::substream;
use crate::objective::ConjugateModel;

fn split_with<R: Rng>(doc: &Document, rng: &mut R) -> (Document, Document) {
    let mut tokens = doc.tokens();
    tokens.shuffle(rng);
    let observed = tokens.len().div_ceil(2);
    (
        Document::from_tokens(&tokens[..observed]),
        Document::from_tokens(&tokens[observed..]),
    )
}

/// Uniform token-level split without replacement; the observed half gets
/// `ceil(N_d / 2)` tokens.
pub fn heldout_split(doc: &Document, seed: u64) -> (Document, Document) {
    split_with(doc, &mut substream(seed, 0))
}

/// Test documents split once into observed and held-out halves.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutSet {
    pub observed: Vec<Document>,
    pub held: Vec<Document>,
}

impl HeldoutSet {
    /// Document `d` is split with substream `d` of `seed`.
    pub fn new(docs: &[Document], seed: u64) -> Self {
        let (observed, held) = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| split_with(doc, &mut substream(seed, d as u64)))
            .unzip();
        Self { observed, held }
    }

    pub fn held_tokens(&self) -> u64 {
        self.held.iter().map(Document::len).sum()
    }
}

/// Average log predictive probability per held-out token,
/// `log sum_k E[theta_dk] E[beta_kw]`, with proportions fitted at `T = 1`.
pub fn predictive_loglik(model: &Lda, global: &LdaGlobal, set: &HeldoutSet) -> Result<f64> {
    let total_held = set.held_tokens();
    if total_held == 0 {
        return Err(Error::Evaluation("no held-out tokens to score".into()));
    }
    model.check_global(global)?;
    let cache = model.prepare(global);
    let topics = global.expected_topics();
    let k = model.config.k;
    let v = model.config.v;
    let per_doc: Vec<f64> = set
        .observed
        .par_iter()
        .zip(set.held.par_iter())
        .map(|(obs, held)| {
            if held.is_empty() {
                return 0.0;
            }
            let local = model.local_step(obs, &cache, 1.0, None);
            let total: f64 = local.gamma.iter().sum();
            let mut score = 0.0;
            for (&w, &c) in held.words.iter().zip(&held.counts) {
                let p: f64 = (0..k).map(|kk| local.gamma[kk] / total * topics[kk * v + w]).sum();
                score += c as f64 * p.ln();
            }
            score
        })
        .collect();
    let total = per_doc.iter().sum::<f64>() / total_held as f64;
    if !total.is_finite() {
        return Err(Error::Evaluation(format!("held-out score is {total}")));
    }
    Ok(total)
}

/// Splits `docs` with `seed` and scores them.
pub fn predictive_loglik_for_docs(model: &Lda, global: &LdaGlobal, docs: &[Document], seed: u64) -> Result<f64> {
    predictive_loglik(model, global, &HeldoutSet::new(docs, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::LdaConfig;
    use approx::assert_relative_eq;

    #[test]
    fn split_examples() {
        let (o, h) = heldout_split(&Document::from_pairs([(3, 1)]), 5);
        assert_eq!(o.len(), 1);
        assert!(h.is_empty());
        let (o, h) = heldout_split(&Document::from_pairs([(2, 4)]), 5);
        assert_eq!(o, Document::from_pairs([(2, 2)]));
        assert_eq!(h, Document::from_pairs([(2, 2)]));
        let doc = Document::from_pairs([(0, 2), (1, 2)]);
        assert_eq!(heldout_split(&doc, 9), heldout_split(&doc, 9));
        let (o, h) = heldout_split(&doc, 9);
        assert_eq!(o.len() + h.len(), 4);
    }

    #[test]
    fn uniform_topics_score_log_inverse_vocabulary() {
        let model = Lda::new(LdaConfig {
            k: 3,
            v: 5,
            alpha: 0.5,
            eta: 0.5,
        })
        .unwrap();
        let global = model.global_from_lambda(vec![2.0; 15]).unwrap();
        let docs = vec![Document::from_pairs([(0, 3), (4, 2)]), Document::from_pairs([(1, 6)])];
        let v = predictive_loglik_for_docs(&model, &global, &docs, 1).unwrap();
        assert_relative_eq!(v, (0.2f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn empty_held_set_is_an_error() {
        let model = Lda::new(LdaConfig::with_default_priors(2, 3)).unwrap();
        let global = model.global_from_lambda(vec![1.0; 6]).unwrap();
        let docs = vec![Document::from_pairs([(0, 1)])];
        assert!(matches!(
            predictive_loglik_for_docs(&model, &global, &docs, 0),
            Err(Error::Evaluation(_))
        ));
    }
}
