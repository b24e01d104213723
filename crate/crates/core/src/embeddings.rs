//! Pretrained word vectors and the embedding-based similarity features:
//! centroid cosine, exact Word Mover's Distance and its relaxed lower bound.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use crate::corpus::{Corpus, Instance};
use crate::error::{Error, Result};
use crate::text::tokenize;
use crate::transport;

/// Terms kept per document before solving WMD.
pub const DEFAULT_TERM_CAP: usize = 200;

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    /// Row-major, `index.len() * dim`.
    data: Vec<f64>,
    duplicates_ignored: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Adds a vector; returns false (and keeps the first) for a repeated term.
    pub fn insert(&mut self, term: impl Into<String>, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector of length {} in a table of dimension {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite embedding component".into()));
        }
        let term = term.into();
        if self.index.contains_key(&term) {
            self.duplicates_ignored += 1;
            return Ok(false);
        }
        self.index.insert(term, self.index.len());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn duplicates_ignored(&self) -> usize {
        self.duplicates_ignored
    }

    pub fn get(&self, term: &str) -> Option<&[f64]> {
        self.index
            .get(term)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }
}

fn is_header(line: &str) -> bool {
    let f: Vec<&str> = line.split_whitespace().collect();
    f.len() == 2 && f.iter().all(|x| x.parse::<u64>().is_ok())
}

/// Reads whitespace-separated text vectors (`token v1 .. vd`), with an
/// optional `count dim` header line. With `restrict_to`, other tokens are
/// skipped after a field-count check.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    restrict_to: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
        if line.trim().is_empty() || (n == 0 && is_header(&line)) {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap();
        let rest: Vec<&str> = fields.collect();
        let t = table.get_or_insert_with(|| EmbeddingTable::new(rest.len()));
        if rest.len() != t.dim || t.dim == 0 {
            return Err(Error::Format(format!(
                "line {lineno}: expected {} components, found {}",
                t.dim,
                rest.len()
            )));
        }
        if restrict_to.is_some_and(|r| !r.contains(token)) {
            continue;
        }
        let values = rest
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::Format(format!("line {lineno}: non-numeric component")))?;
        t.insert(token, &values)
            .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
    }
    let table = table.unwrap_or_default();
    if table.duplicates_ignored > 0 {
        log::warn!(
            "embedding file: ignored {} duplicate tokens",
            table.duplicates_ignored
        );
    }
    Ok(table)
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    restrict_to: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(std::io::BufReader::new(file), restrict_to)
}

/// Normalized bag of words over in-table terms.
#[derive(Debug, Clone, PartialEq)]
pub struct NBowDistribution {
    terms: Vec<String>,
    weights: Vec<f64>,
}

impl NBowDistribution {
    pub fn new(terms: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if terms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if terms.len() != weights.len()
            || weights.iter().any(|w| !(*w > 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::Argument(
                "nBOW weights must be positive, one per term, and sum to 1".into(),
            ));
        }
        Ok(Self { terms, weights })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

pub fn nbow(tokens: &[String], table: &EmbeddingTable) -> Result<NBowDistribution> {
    nbow_capped(tokens, table, usize::MAX)
}

/// Like [`nbow`] but keeps only the `cap` most frequent in-table terms
/// (ties lexicographic) before normalizing. Terms come back in first-occurrence order.
pub fn nbow_capped(tokens: &[String], table: &EmbeddingTable, cap: usize) -> Result<NBowDistribution> {
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens.iter().filter(|t| table.contains(t)) {
        let c = counts.entry(t.as_str()).or_insert_with(|| {
            order.push(t.as_str());
            0
        });
        *c += 1;
    }
    if order.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if order.len() > cap {
        let mut ranked = order.clone();
        ranked.sort_by(|a, b| counts[b].cmp(&counts[a]).then_with(|| a.cmp(b)));
        let keep: HashSet<&str> = ranked.into_iter().take(cap).collect();
        order.retain(|t| keep.contains(t));
    }
    let total: usize = order.iter().map(|t| counts[t]).sum();
    let weights = order.iter().map(|t| counts[t] as f64 / total as f64).collect();
    NBowDistribution::new(order.into_iter().map(str::to_string).collect(), weights)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_vector(tokens: &[String], table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| table.get(t)) {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Cosine between the unweighted means of the in-table token vectors;
/// 0 when either side has no in-table token or a zero mean.
pub fn centroid_cosine(a: &[String], b: &[String], table: &EmbeddingTable) -> f64 {
    let (Some(ma), Some(mb)) = (mean_vector(a, table), mean_vector(b, table)) else {
        return 0.0;
    };
    let dot: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let na = ma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = mb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub flow: Vec<Vec<f64>>,
    pub source: NBowDistribution,
    pub sink: NBowDistribution,
    pub cost: f64,
}

fn cost_matrix(
    source: &NBowDistribution,
    sink: &NBowDistribution,
    table: &EmbeddingTable,
) -> Result<Vec<Vec<f64>>> {
    let lookup = |t: &str| {
        table
            .get(t)
            .ok_or_else(|| Error::Argument(format!("term {t:?} has no embedding")))
    };
    let sinks: Vec<&[f64]> = sink.terms.iter().map(|t| lookup(t)).collect::<Result<_>>()?;
    source
        .terms
        .iter()
        .map(|t| {
            let u = lookup(t)?;
            Ok(sinks.iter().map(|v| euclidean(u, v)).collect())
        })
        .collect()
}

/// Exact WMD: optimal transport between the two distributions under
/// Euclidean embedding distance.
pub fn wmd_exact(
    source: &NBowDistribution,
    sink: &NBowDistribution,
    table: &EmbeddingTable,
) -> Result<(f64, TransportPlan)> {
    if source.is_empty() || sink.is_empty() {
        return Err(Error::Argument("WMD of an empty distribution".into()));
    }
    let cost = cost_matrix(source, sink, table)?;
    let sol = transport::solve(&source.weights, &sink.weights, &cost)?;
    let plan = TransportPlan {
        flow: sol.flow,
        source: source.clone(),
        sink: sink.clone(),
        cost: sol.cost,
    };
    Ok((sol.cost, plan))
}

/// Relaxed WMD: the larger of the two one-sided bounds where each unit of
/// mass travels to its nearest term on the other side.
pub fn wmd_relaxed(
    source: &NBowDistribution,
    sink: &NBowDistribution,
    table: &EmbeddingTable,
) -> Result<f64> {
    if source.is_empty() || sink.is_empty() {
        return Err(Error::Argument("WMD of an empty distribution".into()));
    }
    let cost = cost_matrix(source, sink, table)?;
    let forward: f64 = source
        .weights
        .iter()
        .zip(&cost)
        .map(|(w, row)| w * row.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    let backward: f64 = sink
        .weights
        .iter()
        .enumerate()
        .map(|(j, w)| w * cost.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(forward.max(backward))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimilarityMode {
    Centroid,
    WmdExact,
    WmdRelaxed,
}

impl SimilarityMode {
    pub fn block_name(self) -> &'static str {
        match self {
            SimilarityMode::Centroid => "sim_centroid",
            SimilarityMode::WmdExact => "sim_wmd",
            SimilarityMode::WmdRelaxed => "sim_rwmd",
        }
    }
}

impl std::str::FromStr for SimilarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(SimilarityMode::Centroid),
            "wmd-exact" | "wmd" => Ok(SimilarityMode::WmdExact),
            "wmd-relaxed" | "rwmd" => Ok(SimilarityMode::WmdRelaxed),
            other => Err(Error::Config(format!("unknown similarity mode {other:?}"))),
        }
    }
}

/// Distance to similarity: 1 / (1 + d).
pub fn distance_to_similarity(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

/// One similarity value for a headline/body token pair; degenerate
/// inputs give 0.
pub fn similarity_value(
    headline: &[String],
    body: &[String],
    table: &EmbeddingTable,
    mode: SimilarityMode,
) -> f64 {
    if mode == SimilarityMode::Centroid {
        return centroid_cosine(headline, body, table);
    }
    let (Ok(a), Ok(b)) = (
        nbow_capped(headline, table, DEFAULT_TERM_CAP),
        nbow_capped(body, table, DEFAULT_TERM_CAP),
    ) else {
        return 0.0;
    };
    let d = match mode {
        SimilarityMode::WmdExact => wmd_exact(&a, &b, table).map(|(d, _)| d),
        _ => wmd_relaxed(&a, &b, table),
    };
    d.map_or(0.0, distance_to_similarity)
}

pub fn similarity_block(
    instance: &Instance,
    corpus: &Corpus,
    table: &EmbeddingTable,
    mode: SimilarityMode,
) -> Result<Vec<f64>> {
    let h = tokenize(&instance.headline);
    let b = tokenize(corpus.body(instance.body_id)?);
    Ok(vec![similarity_value(&h, &b, table, mode)])
}
