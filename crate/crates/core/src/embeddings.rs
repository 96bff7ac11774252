//! Plain-text embedding files and cosine-similarity queries.
//!
//! The format is the word2vec text layout: a `V N` header line, then one
//! line per word, `word f1 f2 ... fN`. Floats use Rust's shortest
//! round-trip representation, so reading a written file reproduces every
//! value bit for bit.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::matrix::{dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    words: Vec<String>,
    vectors: Matrix,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub word: String,
    pub similarity: f64,
}

impl Embeddings {
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::Format {
                line: 0,
                reason: format!("{} words for {} vectors", words.len(), vectors.rows()),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Format { line: i + 2, reason: format!("invalid word {w:?}") });
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format { line: i + 2, reason: format!("duplicate word {w:?}") });
            }
        }
        Ok(Self { words, vectors, index })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, word: &str) -> Result<&[f64]> {
        self.index
            .get(word)
            .map(|&i| self.vectors.row(i))
            .ok_or_else(|| Error::UnknownWord(word.to_owned()))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.words.len(), self.dim())?;
        for (word, row) in self.words.iter().zip(self.vectors.iter_rows()) {
            write!(out, "{word}")?;
            for x in row {
                write!(out, " {x:?}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::Format { line: 1, reason: "missing header".into() })??;
        let mut parts = header.split_whitespace();
        let mut field = |name: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format { line: 1, reason: format!("bad {name} in header") })
        };
        let (v, n) = (field("V")?, field("N")?);
        let mut words = Vec::with_capacity(v);
        let mut data = Vec::with_capacity(v);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.is_empty() {
                continue;
            }
            if words.len() == v {
                return Err(Error::Format { line: lineno, reason: "more rows than the header declares".into() });
            }
            let mut parts = line.split(' ');
            let word = parts.next().unwrap_or_default().to_owned();
            let row = parts
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Format { line: lineno, reason: e.to_string() })?;
            if row.len() != n {
                return Err(Error::Format { line: lineno, reason: format!("expected {n} floats, got {}", row.len()) });
            }
            words.push(word);
            data.push(row);
        }
        if words.len() != v {
            return Err(Error::Format { line: words.len() + 2, reason: format!("expected {v} rows, got {}", words.len()) });
        }
        let vectors = if v == 0 { Matrix::zeros(0, n) } else { Matrix::from_rows(&data) };
        Self::new(words, vectors)
    }

    /// Top `k` words by cosine similarity to `query`, skipping `exclude`.
    /// Ties keep file order.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: &[usize]) -> Vec<Neighbor> {
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter_rows()
            .enumerate()
            .filter(|(i, _)| !exclude.contains(i))
            .map(|(i, row)| (i, cosine(query, row)))
            .collect();
        // stable sort keeps file order among equal similarities
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored
            .into_iter()
            .take(k)
            .map(|(i, similarity)| Neighbor { word: self.words[i].clone(), similarity })
            .collect()
    }

    pub fn neighbors(&self, word: &str, k: usize) -> Result<Vec<Neighbor>> {
        let q = self.vector(word)?;
        Ok(self.nearest(q, k, &[self.index[word]]))
    }

    /// Nearest words to `b - a + c`, excluding `a`, `b` and `c`.
    pub fn analogy(&self, a: &str, b: &str, c: &str, k: usize) -> Result<Vec<Neighbor>> {
        let (va, vb, vc) = (self.vector(a)?, self.vector(b)?, self.vector(c)?);
        let q: Vec<f64> = vb.iter().zip(va).zip(vc).map(|((b, a), c)| b - a + c).collect();
        let exclude = [self.index[a], self.index[b], self.index[c]];
        Ok(self.nearest(&q, k, &exclude))
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
