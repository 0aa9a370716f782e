//! Embedding vectors, the reference text embedder, cosine similarity and the
//! embedding CSV format.
//!
//! The CSV format is shared with external encoders: header
//! `id,v0,...,v{d-1}`, one row per id, floats written with Rust's shortest
//! round-trip representation (always at least as precise as 9 significant
//! digits).

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::stable_hash;

pub const TEXT_DIMENSION: usize = 768;

/// An id → vector table with a fixed dimension. Iteration follows
/// insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::OutOfRange("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dimension,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite value in vector `{id}`")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::OutOfRange(format!("duplicate id `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.iter().map(Vec::as_slice))
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` to unit length in place.
pub fn normalize(v: &mut [f64]) -> Result<()> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Relatedness score in `[0, 1]`: cosine with negatives clamped to zero.
pub fn str_score(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(cosine(u, v)?.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceEmbedderConfig {
    pub dimension: usize,
    pub ngram_size: usize,
    pub seed: u64,
}

impl Default for ReferenceEmbedderConfig {
    fn default() -> Self {
        ReferenceEmbedderConfig {
            dimension: TEXT_DIMENSION,
            ngram_size: 3,
            seed: 0,
        }
    }
}

impl ReferenceEmbedderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dimension < 8 {
            errs.push(format!("embedder.dimension must be >= 8 (got {})", self.dimension));
        }
        if self.ngram_size < 1 {
            errs.push("embedder.ngram_size must be >= 1".to_string());
        }
        errs
    }
}

/// Anything that turns text into a fixed-dimension vector.
pub trait TextEmbedder: Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    /// Embed many texts; output order follows input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.par_iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic stand-in for a sentence encoder: signed feature hashing of
/// character n-grams, ℓ2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmbedder {
    pub config: ReferenceEmbedderConfig,
}

impl ReferenceEmbedder {
    pub fn new(config: ReferenceEmbedderConfig) -> Self {
        ReferenceEmbedder { config }
    }
}

/// Lowercase, trim and collapse internal whitespace runs to one space.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Character n-grams of ` text ` (one space of padding on each side). Text
/// shorter than `n` yields a single gram.
fn char_ngrams(padded: &[char], n: usize) -> impl Iterator<Item = String> + '_ {
    let count = if padded.len() <= n {
        1
    } else {
        padded.len() - n + 1
    };
    (0..count).map(move |i| padded[i..(i + n).min(padded.len())].iter().collect())
}

pub fn reference_embed(text: &str, config: &ReferenceEmbedderConfig) -> Result<Vec<f64>> {
    let norm = normalize_text(text);
    if norm.is_empty() {
        return Err(Error::Empty("text to embed".into()));
    }
    let padded: Vec<char> = std::iter::once(' ')
        .chain(norm.chars())
        .chain(std::iter::once(' '))
        .collect();
    let dim = config.dimension as u64;
    let mut v = vec![0.0; config.dimension];
    for gram in char_ngrams(&padded, config.ngram_size.max(1)) {
        let h = stable_hash(config.seed, gram.as_bytes());
        let sign = if h & 1 == 1 { -1.0 } else { 1.0 };
        v[((h >> 1) % dim) as usize] += sign;
    }
    normalize(&mut v)?;
    Ok(v)
}

impl TextEmbedder for ReferenceEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        reference_embed(text, &self.config)
    }
}

/// Embed `(id, text)` items into a new store.
pub fn embed_into_store<E: TextEmbedder + ?Sized>(
    embedder: &E,
    items: &[(String, String)],
) -> Result<EmbeddingStore> {
    let texts: Vec<&str> = items.iter().map(|(_, t)| t.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    let mut store = EmbeddingStore::new(embedder.dimension())?;
    for ((id, _), v) in items.iter().zip(vectors) {
        store.insert(id.clone(), v)?;
    }
    Ok(store)
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let mut header = Vec::with_capacity(store.dimension + 1);
    header.push("id".to_string());
    header.extend((0..store.dimension).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let mut rec = Vec::with_capacity(store.dimension + 1);
    for (id, v) in store.iter() {
        rec.clear();
        rec.push(id.to_string());
        rec.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.get(0).map(str::trim) != Some("id") {
        return Err(Error::row(path, 0, "header must start with `id`"));
    }
    let dimension = header.len() - 1;
    if dimension == 0 {
        return Err(Error::row(path, 0, "header declares no vector columns"));
    }
    let mut store = EmbeddingStore::new(dimension)?;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != dimension + 1 {
            return Err(Error::row(
                path,
                row,
                format!(
                    "dimension mismatch: expected {dimension} values, found {}",
                    rec.len().saturating_sub(1)
                ),
            ));
        }
        let id = rec[0].trim().to_string();
        let mut v = Vec::with_capacity(dimension);
        for field in rec.iter().skip(1) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::row(path, row, format!("malformed float `{field}`")))?;
            if !x.is_finite() {
                return Err(Error::row(path, row, format!("non-finite value `{field}`")));
            }
            v.push(x);
        }
        if store.contains(&id) {
            return Err(Error::row(path, row, format!("duplicate id `{id}`")));
        }
        store.insert(id, v)?;
    }
    Ok(store)
}
