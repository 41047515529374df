//! Sentence-level TF-IDF index with cosine-similarity search.
//!
//! Weights are raw term count times smoothed IDF,
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1` with `N` the number of indexed
//! sentences, and every row is L2-normalized so a dot product is a cosine.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt::{self, PayloadReader, PayloadWriter};
use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::text::TokenizerConfig;

const MAGIC: &[u8; 8] = b"RBKINDEX";

/// Sparse vector as `(column, weight)` pairs sorted by column.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowMeta {
    pub pubmed_id: String,
    pub sentence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub row: usize,
    pub meta: RowMeta,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct TfidfIndex {
    tokenizer: TokenizerConfig,
    vocabulary: HashMap<String, u32>,
    terms: Vec<String>,
    idf: Vec<f64>,
    rows: Vec<SparseVec>,
    row_meta: Vec<RowMeta>,
    postings: Vec<Vec<u32>>,
    article_rows: HashMap<String, Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub sentences: usize,
    pub vocabulary: usize,
    pub nonzeros: usize,
    pub density: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    kind: String,
    tokenizer: TokenizerConfig,
    rows: usize,
    vocabulary: usize,
    #[serde(default)]
    config_hash: Option<String>,
}

/// Build an index over every sentence of every article.
pub fn build_index(articles: &[Article], tokenizer: TokenizerConfig) -> Result<TfidfIndex> {
    let row_meta: Vec<RowMeta> = articles
        .iter()
        .flat_map(|a| {
            a.sentences.iter().map(|s| RowMeta {
                pubmed_id: a.pubmed_id.clone(),
                sentence_index: s.index,
            })
        })
        .collect();
    let texts: Vec<&str> = articles
        .iter()
        .flat_map(|a| a.sentences.iter().map(|s| s.text.as_str()))
        .collect();

    let counts: Vec<BTreeMap<String, u32>> = texts
        .par_iter()
        .map(|t| {
            let mut m = BTreeMap::new();
            for w in tokenizer.words(t) {
                *m.entry(w).or_insert(0) += 1;
            }
            m
        })
        .collect();

    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for m in &counts {
        for term in m.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::EmptyCorpus("no sentence contains an indexable token".into()));
    }

    let n = texts.len() as f64;
    let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let idf: Vec<f64> = df.values().map(|&d| smoothed_idf(n, d as f64)).collect();
    let vocabulary: HashMap<String, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let rows: Vec<SparseVec> = counts
        .par_iter()
        .map(|m| {
            let v = m
                .iter()
                .map(|(t, &c)| {
                    let id = vocabulary[t];
                    (id, c as f64 * idf[id as usize])
                })
                .collect();
            l2_normalize(v)
        })
        .collect();

    Ok(TfidfIndex::assemble(tokenizer, terms, idf, rows, row_meta))
}

pub fn smoothed_idf(n_docs: f64, df: f64) -> f64 {
    ((1.0 + n_docs) / (1.0 + df)).ln() + 1.0
}

/// Scale to unit L2 norm. The zero vector is returned unchanged.
pub fn l2_normalize(mut v: SparseVec) -> SparseVec {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut v {
            *w /= norm;
        }
    }
    v
}

/// Dot product of two column-sorted sparse vectors.
pub fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Cosine similarity of two sparse vectors of any norm.
pub fn cosine(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let na = a.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    let nb = b.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    sparse_dot(a, b) / (na * nb)
}

impl TfidfIndex {
    fn assemble(
        tokenizer: TokenizerConfig,
        terms: Vec<String>,
        idf: Vec<f64>,
        rows: Vec<SparseVec>,
        row_meta: Vec<RowMeta>,
    ) -> Self {
        let vocabulary = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut postings = vec![Vec::new(); terms.len()];
        for (r, row) in rows.iter().enumerate() {
            for &(t, _) in row {
                postings[t as usize].push(r as u32);
            }
        }
        let mut article_rows: HashMap<String, Range<usize>> = HashMap::new();
        for (r, meta) in row_meta.iter().enumerate() {
            article_rows
                .entry(meta.pubmed_id.clone())
                .and_modify(|range| range.end = r + 1)
                .or_insert(r..r + 1);
        }
        TfidfIndex {
            tokenizer,
            vocabulary,
            terms,
            idf,
            rows,
            row_meta,
            postings,
            article_rows,
        }
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        self.tokenizer
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.rows[r]
    }

    pub fn row_meta(&self) -> &[RowMeta] {
        &self.row_meta
    }

    pub fn has_article(&self, pubmed_id: &str) -> bool {
        self.article_rows.contains_key(pubmed_id)
    }

    /// TF-IDF vector of `text` restricted to the fitted vocabulary, scaled by
    /// the norm of the full query vector. Unseen terms get the smoothed IDF
    /// of a zero document frequency, so they lower every similarity without
    /// appearing in the returned vector. Empty when no term is known.
    pub fn vectorize(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        let mut unseen: BTreeMap<String, u32> = BTreeMap::new();
        for w in self.tokenizer.words(text) {
            match self.vocabulary.get(&w) {
                Some(&id) => *counts.entry(id).or_insert(0) += 1,
                None => *unseen.entry(w).or_insert(0) += 1,
            }
        }
        if counts.is_empty() {
            return Vec::new();
        }
        let unseen_idf = smoothed_idf(self.rows.len() as f64, 0.0);
        let known: SparseVec = counts
            .into_iter()
            .map(|(id, c)| (id, c as f64 * self.idf[id as usize]))
            .collect();
        let norm_sq = known.iter().map(|(_, w)| w * w).sum::<f64>()
            + unseen
                .values()
                .map(|&c| (c as f64 * unseen_idf).powi(2))
                .sum::<f64>();
        let norm = norm_sq.sqrt();
        known.into_iter().map(|(id, w)| (id, w / norm)).collect()
    }

    /// Rank sentences by cosine similarity to `text`.
    ///
    /// Only rows sharing at least one term with the query are returned.
    /// `article` restricts the search to one article's sentences. Results are
    /// sorted by similarity descending, then by `(pubmed_id, sentence_index)`.
    pub fn query(&self, text: &str, top_k: usize, article: Option<&str>) -> Result<Vec<Hit>> {
        if top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be at least 1".into()));
        }
        let q = self.vectorize(text);
        if q.is_empty() {
            return Ok(Vec::new());
        }
        let allowed = match article {
            Some(id) => match self.article_rows.get(id) {
                Some(range) => range.clone(),
                None => return Ok(Vec::new()),
            },
            None => 0..self.rows.len(),
        };
        let mut candidates: Vec<u32> = q
            .iter()
            .flat_map(|&(t, _)| self.postings[t as usize].iter().copied())
            .filter(|&r| allowed.contains(&(r as usize)))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();

        let mut hits: Vec<Hit> = candidates
            .into_iter()
            .map(|r| {
                let r = r as usize;
                Hit {
                    row: r,
                    meta: self.row_meta[r].clone(),
                    similarity: sparse_dot(&q, &self.rows[r]).clamp(0.0, 1.0),
                }
            })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.meta.cmp(&b.meta))
        });
        hits.truncate(top_k);
        Ok(hits)
    }

    pub fn stats(&self) -> IndexStats {
        let nonzeros: usize = self.rows.iter().map(Vec::len).sum();
        let cells = self.rows.len() * self.terms.len();
        IndexStats {
            sentences: self.rows.len(),
            vocabulary: self.terms.len(),
            nonzeros,
            density: if cells == 0 { 0.0 } else { nonzeros as f64 / cells as f64 },
        }
    }

    /// Sidecar path holding the JSON row metadata for an index file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".rows.json");
        path.with_file_name(name)
    }

    /// Write the index as a binary file plus a JSON sidecar of row metadata.
    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let header = IndexHeader {
            kind: "tfidf-sentence-index".into(),
            tokenizer: self.tokenizer,
            rows: self.rows.len(),
            vocabulary: self.terms.len(),
            config_hash: config_hash.map(str::to_string),
        };
        let mut w = PayloadWriter::default();
        for (term, idf) in self.terms.iter().zip(&self.idf) {
            w.str(term);
            w.f64(*idf);
        }
        for row in &self.rows {
            w.u32(row.len() as u32);
            for &(t, v) in row {
                w.u32(t);
                w.f64(v);
            }
        }
        binfmt::write_artifact(path, MAGIC, &header, &w.finish())?;
        let sidecar = Self::sidecar_path(path);
        let json = serde_json::to_vec(&self.row_meta)?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload): (IndexHeader, _) = binfmt::read_artifact(path, MAGIC)?;
        let mut r = PayloadReader::new(&payload);
        let mut terms = Vec::with_capacity(header.vocabulary);
        let mut idf = Vec::with_capacity(header.vocabulary);
        for _ in 0..header.vocabulary {
            terms.push(r.str()?);
            idf.push(r.f64()?);
        }
        let mut rows = Vec::with_capacity(header.rows);
        for _ in 0..header.rows {
            let nnz = r.u32()? as usize;
            let mut row = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let t = r.u32()?;
                if t as usize >= terms.len() {
                    return Err(Error::Format(format!("term id {t} out of range")));
                }
                row.push((t, r.f64()?));
            }
            rows.push(row);
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after index payload".into()));
        }
        let sidecar = Self::sidecar_path(path);
        let meta_bytes = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let row_meta: Vec<RowMeta> = serde_json::from_slice(&meta_bytes)?;
        if row_meta.len() != rows.len() {
            return Err(Error::Format(format!(
                "sidecar has {} rows, index has {}",
                row_meta.len(),
                rows.len()
            )));
        }
        Ok(Self::assemble(header.tokenizer, terms, idf, rows, row_meta))
    }

    /// Config hash recorded in an index file header, if any.
    pub fn read_config_hash(path: &Path) -> Result<Option<String>> {
        let (header, _): (IndexHeader, _) = binfmt::read_artifact(path, MAGIC)?;
        Ok(header.config_hash)
    }
}
