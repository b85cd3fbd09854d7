//! Sparse bag-of-words corpora in the UCI format: three header lines
//! (`D`, `V`, `NNZ`) followed by `docID wordID count` triples with 1-based
//! ids.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Word-type counts of one document, sorted by word id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub words: Vec<usize>,
    pub counts: Vec<u32>,
}

impl Document {
    /// Builds a document from `(word, count)` pairs, merging duplicates and
    /// dropping zero counts.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (w, c) in pairs {
            if c > 0 {
                *merged.entry(w).or_default() += c;
            }
        }
        let (words, counts) = merged.into_iter().unzip();
        Self { words, counts }
    }

    /// Builds a document from a token sequence.
    pub fn from_tokens(tokens: &[usize]) -> Self {
        Self::from_pairs(tokens.iter().map(|&w| (w, 1)))
    }

    /// Total token count.
    pub fn len(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.words.len()
    }

    /// Token sequence in word-id order.
    pub fn tokens(&self) -> Vec<usize> {
        self.words
            .iter()
            .zip(&self.counts)
            .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab_size: usize,
    pub docs: Vec<Document>,
    pub vocab: Option<Vec<String>>,
}

impl Corpus {
    pub fn new(vocab_size: usize, docs: Vec<Document>) -> Result<Self> {
        for (d, doc) in docs.iter().enumerate() {
            if let Some(&w) = doc.words.iter().find(|&&w| w >= vocab_size) {
                return Err(Error::Validation(format!(
                    "document {d} uses word id {w}, vocabulary has {vocab_size} words"
                )));
            }
        }
        Ok(Self {
            vocab_size,
            docs,
            vocab: None,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_tokens(&self) -> u64 {
        self.docs.iter().map(Document::len).sum()
    }

    /// Average number of tokens per document, `W / D`.
    pub fn mean_doc_len(&self) -> f64 {
        self.num_tokens() as f64 / self.docs.len().max(1) as f64
    }

    pub fn nnz(&self) -> usize {
        self.docs.iter().map(Document::num_types).sum()
    }

    pub fn to_uci_string(&self) -> String {
        let mut out = format!("{}\n{}\n{}\n", self.docs.len(), self.vocab_size, self.nnz());
        for (d, doc) in self.docs.iter().enumerate() {
            for (w, c) in doc.words.iter().zip(&doc.counts) {
                out.push_str(&format!("{} {} {}\n", d + 1, w + 1, c));
            }
        }
        out
    }

    pub fn parse_uci(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut header = |name: &str| -> Result<usize> {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing {name} header")))?;
            line.parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad {name} header `{line}`")))
        };
        let num_docs = header("document count")?;
        let vocab_size = header("vocabulary size")?;
        let _nnz = header("nonzero count")?;
        let mut pairs: Vec<Vec<(usize, u32)>> = vec![Vec::new(); num_docs];
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, lineno, "expected `docID wordID count`"));
            }
            let num = |s: &str, what: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad {what} `{s}`")))
            };
            let d = num(fields[0], "document id")?;
            let w = num(fields[1], "word id")?;
            let c = num(fields[2], "count")?;
            if d == 0 || d as usize > num_docs {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("document id {d} outside 1..={num_docs}"),
                ));
            }
            if w == 0 {
                return Err(Error::parse(path, lineno, "word ids are 1-based"));
            }
            if w as usize > vocab_size {
                return Err(Error::Validation(format!(
                    "{}:{lineno}: word id {w} exceeds vocabulary size {vocab_size}",
                    path.display()
                )));
            }
            if c == 0 || c > u32::MAX as u64 {
                return Err(Error::parse(path, lineno, format!("count {c} out of range")));
            }
            pairs[d as usize - 1].push((w as usize - 1, c as u32));
        }
        let docs = pairs.into_iter().map(Document::from_pairs).collect();
        Self::new(vocab_size, docs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_uci(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_uci_string()).map_err(|e| Error::io(path, e))
    }

    /// Attaches a vocabulary file with one token per line.
    pub fn load_vocab(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vocab: Vec<String> = text.lines().map(str::to_string).collect();
        if vocab.len() != self.vocab_size {
            return Err(Error::Validation(format!(
                "vocabulary file has {} tokens, corpus declares {}",
                vocab.len(),
                self.vocab_size
            )));
        }
        self.vocab = Some(vocab);
        Ok(())
    }
}
