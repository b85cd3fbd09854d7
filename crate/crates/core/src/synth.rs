//! Synthetic bag-of-words corpora drawn from the LDA generative process.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::numeric::{sample_log_dirichlet, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLdaConfig {
    pub docs: usize,
    pub vocab: usize,
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    /// Mean of the Poisson document length (at least one token per document).
    pub mean_doc_len: f64,
    pub seed: u64,
}

/// A sampled corpus with the topics that generated it (`K x V`, row-major).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub topics: Vec<f64>,
}

pub fn generate_lda_corpus(cfg: &SyntheticLdaConfig) -> Result<SyntheticCorpus> {
    if cfg.docs == 0 || cfg.vocab == 0 || cfg.topics == 0 {
        return Err(Error::InvalidArgument("corpus dimensions must be positive".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.eta > 0.0 && cfg.mean_doc_len > 0.0) {
        return Err(Error::InvalidArgument("alpha, eta and the mean length must be positive".into()));
    }
    let mut rng = substream(cfg.seed, 0);
    let eta = vec![cfg.eta; cfg.vocab];
    let topics: Vec<f64> = (0..cfg.topics)
        .flat_map(|_| sample_log_dirichlet(&mut rng, &eta).into_iter().map(f64::exp))
        .collect();
    let word_dists: Vec<WeightedIndex<f64>> = topics
        .chunks(cfg.vocab)
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::Numeric(e.to_string())))
        .collect::<Result<_>>()?;
    let lengths = Poisson::new(cfg.mean_doc_len).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let alpha = vec![cfg.alpha; cfg.topics];
    let mut docs = Vec::with_capacity(cfg.docs);
    for _ in 0..cfg.docs {
        let theta: Vec<f64> = sample_log_dirichlet(&mut rng, &alpha).into_iter().map(f64::exp).collect();
        let topic_dist = WeightedIndex::new(&theta).map_err(|e| Error::Numeric(e.to_string()))?;
        let n = (lengths.sample(&mut rng) as usize).max(1);
        let tokens: Vec<usize> = (0..n)
            .map(|_| word_dists[topic_dist.sample(&mut rng)].sample(&mut rng))
            .collect();
        docs.push(Document::from_tokens(&tokens));
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::new(cfg.vocab, docs)?,
        topics,
    })
}
