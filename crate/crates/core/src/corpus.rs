//! FNC-1 data ingestion and body-disjoint fold planning.
//!
//! The stances file carries `Headline, Body ID[, Stance]`; the bodies file
//! carries `Body ID, articleBody`. Both are RFC-4180 CSV, so quoted fields may
//! hold commas and newlines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stance {
    Agree,
    Disagree,
    Discuss,
    Unrelated,
}

impl Stance {
    pub const ALL: [Stance; 4] = [
        Stance::Agree,
        Stance::Disagree,
        Stance::Discuss,
        Stance::Unrelated,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Stance> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Agree => "agree",
            Stance::Disagree => "disagree",
            Stance::Discuss => "discuss",
            Stance::Unrelated => "unrelated",
        }
    }

    pub fn is_related(self) -> bool {
        self != Stance::Unrelated
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Stance::ALL
            .into_iter()
            .find(|st| st.as_str() == lower)
            .ok_or_else(|| Error::Argument(format!("unknown stance {s:?}")))
    }
}

pub type BodyId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub headline: String,
    pub body_id: BodyId,
    /// `None` for unlabeled test input.
    pub stance: Option<Stance>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    instances: Vec<Instance>,
    bodies: BTreeMap<BodyId, String>,
    origin: Vec<String>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}').trim() == name)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Row {
            row: pos.record() as usize,
            message: e.to_string(),
        },
        None => Error::Format(e.to_string()),
    }
}

/// Reads a stances file. The `Stance` column is optional.
pub fn load_stances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    read_stances(open_csv(path.as_ref())?)
}

pub fn read_stances<R: Read>(mut reader: csv::Reader<R>) -> Result<Vec<Instance>> {
    let headers = reader.headers().map_err(csv_err)?.clone();
    let headline_col = column(&headers, "Headline")
        .ok_or_else(|| Error::Format("missing required column `Headline`".into()))?;
    let body_col = column(&headers, "Body ID")
        .ok_or_else(|| Error::Format("missing required column `Body ID`".into()))?;
    let stance_col = column(&headers, "Stance");

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let headline = field(headline_col).to_string();
        if headline.trim().is_empty() {
            return Err(Error::Row {
                row,
                message: "empty headline".into(),
            });
        }
        let body_id = field(body_col).trim().parse::<BodyId>().map_err(|_| Error::Row {
            row,
            message: format!("unparseable body id {:?}", field(body_col)),
        })?;
        let stance = match stance_col {
            Some(c) => Some(field(c).parse::<Stance>().map_err(|_| Error::Row {
                row,
                message: format!("unparseable stance {:?}", field(c)),
            })?),
            None => None,
        };
        out.push(Instance {
            headline,
            body_id,
            stance,
        });
    }
    Ok(out)
}

pub fn load_bodies(path: impl AsRef<Path>) -> Result<BTreeMap<BodyId, String>> {
    read_bodies(open_csv(path.as_ref())?)
}

pub fn read_bodies<R: Read>(mut reader: csv::Reader<R>) -> Result<BTreeMap<BodyId, String>> {
    let headers = reader.headers().map_err(csv_err)?.clone();
    let id_col = column(&headers, "Body ID")
        .ok_or_else(|| Error::Format("missing required column `Body ID`".into()))?;
    let body_col = column(&headers, "articleBody")
        .ok_or_else(|| Error::Format("missing required column `articleBody`".into()))?;

    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let raw_id = record.get(id_col).unwrap_or("");
        let id = raw_id.trim().parse::<BodyId>().map_err(|_| Error::Row {
            row,
            message: format!("unparseable body id {raw_id:?}"),
        })?;
        let text = record.get(body_col).unwrap_or("").to_string();
        if out.insert(id, text).is_some() {
            return Err(Error::Format(format!("duplicate body id {id}")));
        }
    }
    Ok(out)
}

pub fn make_corpus(instances: Vec<Instance>, bodies: BTreeMap<BodyId, String>) -> Result<Corpus> {
    let missing: BTreeSet<BodyId> = instances
        .iter()
        .map(|i| i.body_id)
        .filter(|id| !bodies.contains_key(id))
        .collect();
    if !missing.is_empty() {
        let ids: Vec<String> = missing.iter().map(|id| id.to_string()).collect();
        return Err(Error::Integrity(format!(
            "instances reference absent body ids: {}",
            ids.join(", ")
        )));
    }
    Ok(Corpus {
        instances,
        bodies,
        origin: Vec::new(),
    })
}

/// Loads a stances/bodies file pair into a validated corpus.
pub fn load_corpus(stances: impl AsRef<Path>, bodies: impl AsRef<Path>) -> Result<Corpus> {
    let (stances, bodies) = (stances.as_ref(), bodies.as_ref());
    let mut corpus = make_corpus(load_stances(stances)?, load_bodies(bodies)?)?;
    corpus.origin = vec![stances.display().to_string(), bodies.display().to_string()];
    Ok(corpus)
}

impl Corpus {
    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn bodies(&self) -> &BTreeMap<BodyId, String> {
        &self.bodies
    }

    pub fn origin(&self) -> &[String] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn body(&self, id: BodyId) -> Result<&str> {
        self.bodies
            .get(&id)
            .map(String::as_str)
            .ok_or_else(|| Error::Integrity(format!("body id {id} not in corpus")))
    }

    pub fn is_labeled(&self) -> bool {
        self.instances.iter().all(|i| i.stance.is_some())
    }

    /// Labels in instance order; fails if any instance is unlabeled.
    pub fn labels(&self) -> Result<Vec<Stance>> {
        self.instances
            .iter()
            .enumerate()
            .map(|(n, i)| {
                i.stance.ok_or_else(|| {
                    Error::Argument(format!("instance {} has no stance label", n + 1))
                })
            })
            .collect()
    }

    /// Sub-corpus of the instances whose body id satisfies `keep`. Bodies
    /// are restricted to the ones still referenced.
    pub fn filter_bodies(&self, mut keep: impl FnMut(BodyId) -> bool) -> Corpus {
        let instances: Vec<Instance> = self
            .instances
            .iter()
            .filter(|i| keep(i.body_id))
            .cloned()
            .collect();
        let used: BTreeSet<BodyId> = instances.iter().map(|i| i.body_id).collect();
        let bodies = self
            .bodies
            .iter()
            .filter(|(id, _)| used.contains(id))
            .map(|(id, b)| (*id, b.clone()))
            .collect();
        Corpus {
            instances,
            bodies,
            origin: self.origin.clone(),
        }
    }

    /// Distinct body ids referenced by at least one instance, ascending.
    pub fn referenced_bodies(&self) -> Vec<BodyId> {
        let set: BTreeSet<BodyId> = self.instances.iter().map(|i| i.body_id).collect();
        set.into_iter().collect()
    }

    pub fn write_stances<W: Write>(&self, writer: W) -> Result<()> {
        let labeled = self.is_labeled();
        let mut w = csv::Writer::from_writer(writer);
        let to_fmt = |e: csv::Error| Error::Format(e.to_string());
        if labeled {
            w.write_record(["Headline", "Body ID", "Stance"]).map_err(to_fmt)?;
        } else {
            w.write_record(["Headline", "Body ID"]).map_err(to_fmt)?;
        }
        for i in &self.instances {
            let id = i.body_id.to_string();
            match i.stance {
                Some(s) if labeled => w.write_record([i.headline.as_str(), &id, s.as_str()]),
                _ => w.write_record([i.headline.as_str(), &id]),
            }
            .map_err(to_fmt)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_bodies<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["Body ID", "articleBody"]).map_err(to_fmt)?;
        for (id, text) in &self.bodies {
            w.write_record([id.to_string().as_str(), text]).map_err(to_fmt)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Assignment of every body id to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: BTreeMap<BodyId, usize>,
}

/// Shuffles the referenced body ids with `seed` and deals them round-robin
/// into `k` folds, so every instance of a body lands in the same fold.
pub fn plan_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Argument(format!("fold count must be >= 2, got {k}")));
    }
    let mut ids = corpus.referenced_bodies();
    if ids.len() < k {
        return Err(Error::Argument(format!(
            "{} distinct bodies cannot fill {k} folds",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let assignments = ids
        .into_iter()
        .enumerate()
        .map(|(n, id)| (id, n % k))
        .collect();
    Ok(FoldPlan { k, assignments })
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &BTreeMap<BodyId, usize> {
        &self.assignments
    }

    pub fn fold_of(&self, body: BodyId) -> Option<usize> {
        self.assignments.get(&body).copied()
    }

    pub fn bodies_in(&self, fold: usize) -> Vec<BodyId> {
        self.assignments
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| *id)
            .collect()
    }

    /// (training side, held-out side) for one fold.
    pub fn split(&self, corpus: &Corpus, fold: usize) -> Result<(Corpus, Corpus)> {
        if fold >= self.k {
            return Err(Error::Argument(format!("fold {fold} out of range 0..{}", self.k)));
        }
        if let Some(id) = corpus
            .referenced_bodies()
            .into_iter()
            .find(|id| !self.assignments.contains_key(id))
        {
            return Err(Error::Argument(format!("fold plan does not cover body {id}")));
        }
        let train = corpus.filter_bodies(|id| self.fold_of(id) != Some(fold));
        let test = corpus.filter_bodies(|id| self.fold_of(id) == Some(fold));
        if train.is_empty() || test.is_empty() {
            return Err(Error::Argument(format!(
                "fold {fold} has an empty training or test side"
            )));
        }
        Ok((train, test))
    }
}

/// Splits off roughly `fraction` of the bodies as a validation side, seeded.
/// Returns (fit, validation); validation is empty when `fraction` is 0.
pub fn holdout_split(corpus: &Corpus, fraction: f64, seed: u64) -> (Corpus, Corpus) {
    let mut ids = corpus.referenced_bodies();
    let n_val = ((ids.len() as f64) * fraction).round() as usize;
    let n_val = n_val.min(ids.len().saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let val: BTreeSet<BodyId> = ids.into_iter().take(n_val).collect();
    (
        corpus.filter_bodies(|id| !val.contains(&id)),
        corpus.filter_bodies(|id| val.contains(&id)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stances_csv(s: &str) -> Result<Vec<Instance>> {
        read_stances(csv::Reader::from_reader(s.as_bytes()))
    }

    fn bodies_csv(s: &str) -> Result<BTreeMap<BodyId, String>> {
        read_bodies(csv::Reader::from_reader(s.as_bytes()))
    }

    #[test]
    fn stance_parse_is_case_insensitive() {
        let rows = stances_csv("Headline,Body ID,Stance\nsome headline,42,AGREE\n").unwrap();
        assert_eq!(
            rows,
            vec![Instance {
                headline: "some headline".into(),
                body_id: 42,
                stance: Some(Stance::Agree)
            }]
        );
    }

    #[test]
    fn bad_stance_reports_row() {
        let err = stances_csv("Headline,Body ID,Stance\nh,1,agree\nh2,2,maybe\n").unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn bad_body_id_reports_row() {
        let err = stances_csv("Headline,Body ID,Stance\nh,x1,agree\n").unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let err = stances_csv("Headline,Stance\nh,agree\n").unwrap_err();
        assert!(err.to_string().contains("Body ID"), "{err}");
        let err = bodies_csv("Body ID,text\n1,a\n").unwrap_err();
        assert!(err.to_string().contains("articleBody"), "{err}");
    }

    #[test]
    fn unlabeled_stances_accepted() {
        let rows = stances_csv("Headline,Body ID\nh,3\n").unwrap();
        assert_eq!(rows[0].stance, None);
        let corpus = make_corpus(rows, BTreeMap::from([(3, "b".to_string())])).unwrap();
        assert!(!corpus.is_labeled());
        assert!(corpus.labels().is_err());
    }

    #[test]
    fn bodies_with_embedded_newlines() {
        let map = bodies_csv("Body ID,articleBody\n1,\"line one,\nline two\"\n2,b\n").unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map[&1], "line one,\nline two");
    }

    #[test]
    fn duplicate_body_id() {
        let err = bodies_csv("Body ID,articleBody\n1,a\n1,c\n").unwrap_err();
        assert!(err.to_string().contains("duplicate body id 1"), "{err}");
    }

    #[test]
    fn corpus_integrity() {
        let inst = |b| Instance {
            headline: "h".into(),
            body_id: b,
            stance: Some(Stance::Discuss),
        };
        let bodies = BTreeMap::from([(7, "t".to_string())]);
        assert!(make_corpus(vec![inst(7)], bodies.clone()).is_ok());
        let err = make_corpus(vec![inst(8)], bodies).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains('8')));
    }

    fn toy_corpus(n_bodies: u64, per_body: usize) -> Corpus {
        let mut instances = Vec::new();
        let mut bodies = BTreeMap::new();
        for b in 0..n_bodies {
            bodies.insert(b, format!("body {b}"));
            for j in 0..per_body {
                instances.push(Instance {
                    headline: format!("h{b}-{j}"),
                    body_id: b,
                    stance: Some(Stance::Unrelated),
                });
            }
        }
        make_corpus(instances, bodies).unwrap()
    }

    #[test]
    fn ten_bodies_ten_folds() {
        let plan = plan_folds(&toy_corpus(10, 3), 10, 1).unwrap();
        for f in 0..10 {
            assert_eq!(plan.bodies_in(f).len(), 1);
        }
    }

    #[test]
    fn fold_plan_deterministic_and_body_disjoint() {
        let corpus = toy_corpus(23, 4);
        let a = plan_folds(&corpus, 5, 99).unwrap();
        assert_eq!(a, plan_folds(&corpus, 5, 99).unwrap());
        let sizes: Vec<usize> = (0..5).map(|f| a.bodies_in(f).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..5 {
            let (train, test) = a.split(&corpus, f).unwrap();
            let tb: BTreeSet<_> = test.referenced_bodies().into_iter().collect();
            assert!(train.instances().iter().all(|i| !tb.contains(&i.body_id)));
            assert_eq!(train.len() + test.len(), corpus.len());
        }
    }

    #[test]
    fn fold_argument_errors() {
        let corpus = toy_corpus(3, 1);
        assert!(plan_folds(&corpus, 1, 0).is_err());
        assert!(plan_folds(&corpus, 4, 0).is_err());
    }

    #[test]
    fn holdout_split_is_body_disjoint() {
        let corpus = toy_corpus(20, 2);
        let (fit, val) = holdout_split(&corpus, 0.1, 3);
        assert_eq!(val.referenced_bodies().len(), 2);
        assert_eq!(fit.len() + val.len(), corpus.len());
        let (fit, val) = holdout_split(&corpus, 0.0, 3);
        assert!(val.is_empty());
        assert_eq!(fit.len(), corpus.len());
    }

    #[test]
    fn serialization_round_trip_keeps_counts() {
        let corpus = toy_corpus(4, 2);
        let mut s = Vec::new();
        let mut b = Vec::new();
        corpus.write_stances(&mut s).unwrap();
        corpus.write_bodies(&mut b).unwrap();
        let again = make_corpus(
            read_stances(csv::Reader::from_reader(&s[..])).unwrap(),
            read_bodies(csv::Reader::from_reader(&b[..])).unwrap(),
        )
        .unwrap();
        assert_eq!(again.instances(), corpus.instances());
        assert_eq!(again.bodies(), corpus.bodies());
    }

    #[test]
    fn stance_names_round_trip() {
        for s in Stance::ALL {
            assert_eq!(s.as_str().parse::<Stance>().unwrap(), s);
            assert_eq!(Stance::from_index(s.index()), Some(s));
        }
    }
}
