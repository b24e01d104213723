//! Keyword sets: manual refutation words, MI-ranked terms and the
//! customized-class (theme partition) selector, plus their indicator encoding.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{BodyId, Corpus, Instance, Stance};
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Refutation words used by the public FNC-1 baseline.
pub const DEFAULT_REFUTING: &[&str] = &[
    "fake", "fraud", "hoax", "false", "deny", "denies", "not", "despite", "nope", "doubt",
    "doubts", "bogus", "debunk", "pranks", "retract",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Manual,
    Mi { k: usize, positive: Stance },
    Micc { theme: String, k: usize },
}

impl Provenance {
    fn kind(&self) -> &'static str {
        match self {
            Provenance::Manual => "manual",
            Provenance::Mi { .. } => "mi",
            Provenance::Micc { .. } => "micc",
        }
    }

    fn params(&self) -> String {
        match self {
            Provenance::Manual => "-".into(),
            Provenance::Mi { k, positive } => format!("k={k},class={positive}"),
            Provenance::Micc { theme, k } => format!("theme={theme},k={k}"),
        }
    }

    fn parse(kind: &str, params: &str) -> Result<Self> {
        let kv: HashMap<&str, &str> = params
            .split(',')
            .filter_map(|p| p.split_once('='))
            .collect();
        let need = |key: &str| {
            kv.get(key)
                .copied()
                .ok_or_else(|| Error::Format(format!("keyword header missing `{key}`")))
        };
        let k = || {
            need("k")?
                .parse::<usize>()
                .map_err(|_| Error::Format("keyword header has non-integer k".into()))
        };
        match kind {
            "manual" => Ok(Provenance::Manual),
            "mi" => Ok(Provenance::Mi {
                k: k()?,
                positive: need("class")?.parse()?,
            }),
            "micc" => Ok(Provenance::Micc {
                theme: need("theme")?.to_string(),
                k: k()?,
            }),
            other => Err(Error::Format(format!("unknown keyword provenance {other:?}"))),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind(), self.params())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    name: String,
    terms: Vec<String>,
    provenance: Provenance,
}

impl KeywordSet {
    /// Terms are lowercased; empty and duplicate terms are rejected.
    pub fn new(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = impl AsRef<str>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Argument(format!("invalid keyword set name {name:?}")));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Argument(format!("invalid keyword {t:?} in set {name}")));
            }
            if !seen.insert(t.clone()) {
                return Err(Error::Argument(format!("duplicate keyword {t:?} in set {name}")));
            }
            out.push(t);
        }
        Ok(Self {
            name,
            terms: out,
            provenance,
        })
    }

    pub fn manual_default() -> Self {
        Self::new("manual", DEFAULT_REFUTING, Provenance::Manual).expect("valid default list")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `# name provenance params` header, then one term per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {}", self.name, self.provenance)?;
        for t in &self.terms {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Format(e.to_string()))?
            .ok_or_else(|| Error::Format("empty keyword file".into()))?;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("keyword file must start with `#` header".into()))?
            .split_whitespace()
            .collect();
        let [name, kind, params] = fields[..] else {
            return Err(Error::Format(format!("malformed keyword header {header:?}")));
        };
        let provenance = Provenance::parse(kind, params)?;
        let mut terms = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if !line.is_empty() {
                terms.push(line.to_string());
            }
        }
        Self::new(name, terms, provenance).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// A plain word list file (one term per line, `#` lines ignored) as a manual set.
    pub fn load_word_list(name: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(name, terms, Provenance::Manual)
    }
}

/// Document counts for one term against one binary class.
///
/// `n11` term present & class positive, `n10` present & negative,
/// `n01` absent & positive, `n00` absent & negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl ContingencyTable {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { n11, n10, n01, n00 }
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }
}

/// Mutual information in bits between term presence and class membership.
pub fn mutual_information(t: &ContingencyTable) -> Result<f64> {
    let n = t.total();
    if n == 0 {
        return Err(Error::Argument("mutual information of an all-zero table".into()));
    }
    let n = n as f64;
    let present = (t.n11 + t.n10) as f64;
    let absent = (t.n01 + t.n00) as f64;
    let pos = (t.n11 + t.n01) as f64;
    let neg = (t.n10 + t.n00) as f64;
    let cell = |count: u64, row: f64, col: f64| {
        if count == 0 {
            0.0
        } else {
            let c = count as f64;
            (c / n) * (n * c / (row * col)).log2()
        }
    };
    let mi = cell(t.n11, present, pos)
        + cell(t.n10, present, neg)
        + cell(t.n01, absent, pos)
        + cell(t.n00, absent, neg);
    // rounding can leave a tiny negative value for independent variables
    Ok(mi.max(0.0))
}

/// A document for MI counting: the set of its distinct tokens.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: BodyId,
    pub terms: HashSet<String>,
}

impl Document {
    pub fn from_text(id: BodyId, text: &str) -> Self {
        Self {
            id,
            terms: tokenize(text).into_iter().collect(),
        }
    }
}

/// Article bodies referenced by the corpus, as MI documents in body-id order.
pub fn body_documents(corpus: &Corpus) -> Result<Vec<Document>> {
    corpus
        .referenced_bodies()
        .into_iter()
        .map(|id| Ok(Document::from_text(id, corpus.body(id)?)))
        .collect()
}

/// Ranks candidates by MI against `labels` (one flag per document) and keeps
/// the top `k`, ties broken lexicographically.
fn rank_by_mi(
    docs: &[Document],
    labels: &[bool],
    candidates: &[String],
    k: usize,
    exclude: &HashSet<&str>,
) -> Result<Vec<(String, f64)>> {
    let n_pos = labels.iter().filter(|l| **l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    let mut present: HashMap<&str, (u64, u64)> = HashMap::new();
    for (doc, &label) in docs.iter().zip(labels) {
        for t in &doc.terms {
            let e = present.entry(t.as_str()).or_default();
            if label {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut scored = Vec::with_capacity(candidates.len());
    let mut seen = HashSet::new();
    for c in candidates {
        if exclude.contains(c.as_str()) || !seen.insert(c.as_str()) {
            continue;
        }
        let (n11, n10) = present.get(c.as_str()).copied().unwrap_or((0, 0));
        let table = ContingencyTable::new(n11, n10, n_pos - n11, n_neg - n10);
        scored.push((c.clone(), mutual_information(&table)?));
    }
    // scores are ranked on a 1e-12 grid so that tables equal up to cell
    // relabelling tie exactly and fall back to lexicographic order
    let key = |s: f64| (s * 1e12).round() as i64;
    scored.sort_by(|a, b| key(b.1).cmp(&key(a.1)).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Top-`k` candidates by MI against a binary document labelling.
pub fn select_keywords_mi(
    name: &str,
    docs: &[Document],
    labels: &[bool],
    candidates: &[String],
    k: usize,
    positive: Stance,
) -> Result<KeywordSet> {
    if docs.len() != labels.len() {
        return Err(Error::Argument("one label per document required".into()));
    }
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
        return Err(Error::Argument(
            "MI selection needs both a positive and a negative class".into(),
        ));
    }
    let ranked = rank_by_mi(docs, labels, candidates, k, &HashSet::new())?;
    KeywordSet::new(
        name,
        ranked.into_iter().map(|(t, _)| t),
        Provenance::Mi { k, positive },
    )
}

/// Body-level labels: a body is positive when any of its instances has
/// stance `positive`.
pub fn stance_labels(corpus: &Corpus, docs: &[Document], positive: Stance) -> Vec<bool> {
    let pos: HashSet<BodyId> = corpus
        .instances()
        .iter()
        .filter(|i| i.stance == Some(positive))
        .map(|i| i.body_id)
        .collect();
    docs.iter().map(|d| pos.contains(&d.id)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThemePartition {
    pub theme_terms: Vec<String>,
    pub classes: BTreeMap<String, BTreeSet<BodyId>>,
    pub residual: BTreeSet<BodyId>,
}

/// Assigns each document to the first theme (in order) it contains.
pub fn partition_by_theme(docs: &[Document], theme_terms: &[String]) -> ThemePartition {
    let mut classes: BTreeMap<String, BTreeSet<BodyId>> = theme_terms
        .iter()
        .map(|t| (t.clone(), BTreeSet::new()))
        .collect();
    let mut residual = BTreeSet::new();
    for d in docs {
        match theme_terms.iter().find(|t| d.terms.contains(*t)) {
            Some(t) => {
                classes.get_mut(t).unwrap().insert(d.id);
            }
            None => {
                residual.insert(d.id);
            }
        }
    }
    ThemePartition {
        theme_terms: theme_terms.to_vec(),
        classes,
        residual,
    }
}

/// One keyword group per theme: the top-`k` candidates by MI against
/// "document is in this theme's class", excluding the theme terms.
/// Groups come back in theme order.
pub fn select_keywords_micc(
    docs: &[Document],
    theme_terms: &[String],
    candidates: &[String],
    k: usize,
) -> Result<Vec<KeywordSet>> {
    if theme_terms.is_empty() {
        return Err(Error::Argument("MICC needs at least one theme term".into()));
    }
    let distinct: HashSet<&String> = theme_terms.iter().collect();
    if distinct.len() != theme_terms.len() {
        return Err(Error::Argument("theme terms must be distinct".into()));
    }
    let partition = partition_by_theme(docs, theme_terms);
    if partition.classes.values().all(BTreeSet::is_empty) {
        return Err(Error::Argument(
            "no document matches any theme term".into(),
        ));
    }
    let exclude: HashSet<&str> = theme_terms.iter().map(String::as_str).collect();
    theme_terms
        .iter()
        .map(|theme| {
            let members = &partition.classes[theme];
            let terms = if k == 0 || members.is_empty() {
                Vec::new()
            } else {
                let labels: Vec<bool> = docs.iter().map(|d| members.contains(&d.id)).collect();
                rank_by_mi(docs, &labels, candidates, k, &exclude)?
                    .into_iter()
                    .map(|(t, _)| t)
                    .collect()
            };
            KeywordSet::new(
                format!("micc-{theme}"),
                terms,
                Provenance::Micc {
                    theme: theme.clone(),
                    k,
                },
            )
        })
        .collect()
}

/// Union of several groups, first occurrence wins.
pub fn merge_sets(name: &str, sets: &[KeywordSet], provenance: Provenance) -> Result<KeywordSet> {
    let mut seen = HashSet::new();
    let terms: Vec<&String> = sets
        .iter()
        .flat_map(|s| s.terms())
        .filter(|t| seen.insert(t.as_str()))
        .collect();
    KeywordSet::new(name, terms, provenance)
}

/// Presence bits `[headline, body]` for each keyword, from token sets.
pub fn indicator_values(
    headline: &HashSet<&str>,
    body: &HashSet<&str>,
    keywords: &KeywordSet,
) -> Vec<f64> {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    keywords
        .terms()
        .iter()
        .flat_map(|t| [bit(headline.contains(t.as_str())), bit(body.contains(t.as_str()))])
        .collect()
}

pub fn indicator_block(instance: &Instance, corpus: &Corpus, keywords: &KeywordSet) -> Result<Vec<f64>> {
    let h = tokenize(&instance.headline);
    let b = tokenize(corpus.body(instance.body_id)?);
    let hs: HashSet<&str> = h.iter().map(String::as_str).collect();
    let bs: HashSet<&str> = b.iter().map(String::as_str).collect();
    Ok(indicator_values(&hs, &bs, keywords))
}
