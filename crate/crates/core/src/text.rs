//! Tokenization, vocabularies, TF counts and the TF-IDF cosine feature.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{Corpus, Instance};
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, FeatureVector};

pub type TokenList = Vec<String>;

pub const TF_HEADLINE: &str = "tf_headline";
pub const TF_BODY: &str = "tf_body";
pub const TFIDF_COS: &str = "tfidf_cos";

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> TokenList {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabSource {
    Headline,
    Body,
    Shared,
}

impl VocabSource {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabSource::Headline => "headline",
            VocabSource::Body => "body",
            VocabSource::Shared => "shared",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    source: VocabSource,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>, source: VocabSource) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("invalid vocabulary term {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self {
            terms,
            index,
            source,
        })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn source(&self) -> VocabSource {
        self.source
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// One term per line, order significant.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.terms {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(r: R, source: VocabSource) -> Result<Self> {
        let mut terms = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if !line.is_empty() {
                terms.push(line);
            }
        }
        Self::from_terms(terms, source)
    }

    pub fn load(path: impl AsRef<Path>, source: VocabSource) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), source)
    }
}

/// The `capacity` most frequent non-stopword terms over all token lists,
/// ties broken lexicographically.
pub fn build_vocabulary<'a, I>(
    docs: I,
    capacity: usize,
    stopwords: &HashSet<String>,
    source: VocabSource,
) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if capacity == 0 {
        return Err(Error::Argument("vocabulary capacity must be >= 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for t in doc {
            if !stopwords.contains(t) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(capacity);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t.to_string()).collect(), source)
}

/// Raw counts of vocabulary terms; out-of-vocabulary tokens are ignored.
pub fn tf_vector(tokens: &[String], vocab: &Vocabulary) -> Vec<f64> {
    let mut out = vec![0.0; vocab.len()];
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            out[i] += 1.0;
        }
    }
    out
}

/// Sparse form of [`tf_vector`]: sorted (index, count) pairs.
pub fn tf_sparse(tokens: &[String], vocab: &Vocabulary) -> Vec<(u32, f64)> {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let mut out: Vec<(u32, f64)> = counts.into_iter().map(|(i, c)| (i as u32, c)).collect();
    out.sort_unstable_by_key(|e| e.0);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    idf: Vec<f64>,
    document_count: usize,
}

impl IdfTable {
    /// Uniform weights, mostly for tests.
    pub fn uniform(vocab: &Vocabulary, weight: f64) -> Self {
        Self {
            idf: vec![weight; vocab.len()],
            document_count: 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.idf
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    /// `# idf documents=N` then one weight per line, in vocabulary order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# idf documents={}", self.document_count)?;
        for x in &self.idf {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, vocab: &Vocabulary) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Format(e.to_string()))?
            .unwrap_or_default();
        let document_count = header
            .strip_prefix("# idf documents=")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("bad idf header {header:?}")))?;
        let mut idf = Vec::with_capacity(vocab.len());
        for line in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let x: f64 = line
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad idf weight {line:?}")))?;
            idf.push(x);
        }
        if idf.len() != vocab.len() {
            return Err(Error::Format(format!(
                "{} idf weights for a vocabulary of {}",
                idf.len(),
                vocab.len()
            )));
        }
        Ok(Self { idf, document_count })
    }
}

/// idf(t) = max(0, ln(N / (1 + df(t)))).
pub fn build_idf<'a, I>(docs: I, vocab: &Vocabulary) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut df = vec![0usize; vocab.len()];
    let mut n = 0usize;
    let mut seen = vec![false; vocab.len()];
    for doc in docs {
        n += 1;
        seen.iter_mut().for_each(|s| *s = false);
        for t in doc {
            if let Some(i) = vocab.get(t) {
                if !seen[i] {
                    seen[i] = true;
                    df[i] += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::Argument("IDF needs at least one document".into()));
    }
    let idf = df
        .into_iter()
        .map(|d| (n as f64 / (1.0 + d as f64)).ln().max(0.0))
        .collect();
    Ok(IdfTable {
        idf,
        document_count: n,
    })
}

/// Cosine of the two TF-IDF vectors; 0 when either has zero norm.
pub fn tfidf_cosine(
    headline: &[String],
    body: &[String],
    vocab: &Vocabulary,
    idf: &IdfTable,
) -> f64 {
    // sorted sparse vectors keep every sum in index order
    let weigh = |tokens: &[String]| -> Vec<(u32, f64)> {
        tf_sparse(tokens, vocab)
            .into_iter()
            .map(|(i, c)| (i, c * idf.idf[i as usize]))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    };
    let (a, b) = (weigh(headline), weigh(body));
    let norm = |m: &[(u32, f64)]| m.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Vocabularies and IDF weights fitted on a training split.
#[derive(Debug, Clone)]
pub struct BaselineVocab {
    pub headline: Vocabulary,
    pub body: Vocabulary,
    pub shared: Vocabulary,
    pub idf: IdfTable,
}

impl BaselineVocab {
    /// Fits headline/body/shared vocabularies of `capacity` terms each, over
    /// the distinct headlines and bodies of `corpus`.
    pub fn fit(corpus: &Corpus, capacity: usize, stopwords: &HashSet<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        let headlines: Vec<TokenList> = corpus
            .instances()
            .iter()
            .filter(|i| seen.insert(i.headline.as_str()))
            .map(|i| tokenize(&i.headline))
            .collect();
        let bodies: Vec<TokenList> = corpus
            .referenced_bodies()
            .into_iter()
            .map(|id| corpus.body(id).map(tokenize))
            .collect::<Result<_>>()?;
        let h_docs = || headlines.iter().map(Vec::as_slice);
        let b_docs = || bodies.iter().map(Vec::as_slice);
        let headline = build_vocabulary(h_docs(), capacity, stopwords, VocabSource::Headline)?;
        let body = build_vocabulary(b_docs(), capacity, stopwords, VocabSource::Body)?;
        let shared =
            build_vocabulary(h_docs().chain(b_docs()), capacity, stopwords, VocabSource::Shared)?;
        let idf = build_idf(h_docs().chain(b_docs()), &shared)?;
        Ok(Self {
            headline,
            body,
            shared,
            idf,
        })
    }

    /// Appends `[tf_headline, tf_body, tfidf_cos]` to `builder`.
    pub fn append_blocks(&self, builder: &mut FeatureBuilder, headline: &[String], body: &[String]) {
        builder
            .sparse_block(TF_HEADLINE, self.headline.len(), &tf_sparse(headline, &self.headline))
            .sparse_block(TF_BODY, self.body.len(), &tf_sparse(body, &self.body))
            .dense_block(TFIDF_COS, &[tfidf_cosine(headline, body, &self.shared, &self.idf)]);
    }
}

pub fn baseline_features(
    instance: &Instance,
    corpus: &Corpus,
    headline_vocab: &Vocabulary,
    body_vocab: &Vocabulary,
    shared_vocab: &Vocabulary,
    idf: &IdfTable,
) -> Result<FeatureVector> {
    let body = tokenize(corpus.body(instance.body_id)?);
    let headline = tokenize(&instance.headline);
    let mut b = FeatureBuilder::new();
    b.sparse_block(TF_HEADLINE, headline_vocab.len(), &tf_sparse(&headline, headline_vocab))
        .sparse_block(TF_BODY, body_vocab.len(), &tf_sparse(&body, body_vocab))
        .dense_block(TFIDF_COS, &[tfidf_cosine(&headline, &body, shared_vocab, idf)]);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_corpus, Stance};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn toks(s: &[&str]) -> TokenList {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn vocab(s: &[&str]) -> Vocabulary {
        Vocabulary::from_terms(toks(s), VocabSource::Shared).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, World!"), toks(&["hello", "world"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("it's a-b 42"), toks(&["it", "s", "a", "b", "42"]));
    }

    #[test]
    fn vocabulary_ranking() {
        let docs = [toks(&["a", "b", "a"]), toks(&["b", "c"])];
        let none = HashSet::new();
        let v = build_vocabulary(docs.iter().map(Vec::as_slice), 2, &none, VocabSource::Body)
            .unwrap();
        assert_eq!(v.terms(), &toks(&["a", "b"])[..]);
        let v = build_vocabulary(docs.iter().map(Vec::as_slice), 10, &none, VocabSource::Body)
            .unwrap();
        assert_eq!(v.len(), 3);
        let stop: HashSet<String> = ["a".to_string()].into();
        let v = build_vocabulary(docs.iter().map(Vec::as_slice), 10, &stop, VocabSource::Body)
            .unwrap();
        assert_eq!(v.terms(), &toks(&["b", "c"])[..]);
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.get(t), Some(i));
        }
        assert!(build_vocabulary(docs.iter().map(Vec::as_slice), 0, &none, VocabSource::Body)
            .is_err());
    }

    #[test]
    fn tf_counts() {
        let v = vocab(&["a", "b", "c"]);
        assert_eq!(tf_vector(&toks(&["a", "a", "b"]), &v), vec![2.0, 1.0, 0.0]);
        assert_eq!(tf_vector(&[], &v), vec![0.0; 3]);
        assert_eq!(tf_vector(&toks(&["x", "y"]), &v), vec![0.0; 3]);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn idf_formula() {
        let v = vocab(&["t", "u", "w"]);
        // 10 docs; "t" in all, "u" in none, "w" in one
        let mut docs: Vec<TokenList> = (0..10).map(|_| toks(&["t"])).collect();
        docs[0].push("w".into());
        let idf = build_idf(docs.iter().map(Vec::as_slice), &v).unwrap();
        assert_eq!(idf.weights()[0], 0.0);
        assert!((idf.weights()[1] - 2.302585092994046).abs() < 1e-12);
        assert!((idf.weights()[2] - (10.0f64 / 2.0).ln()).abs() < 1e-12);
        assert_eq!(idf.document_count(), 10);

        let docs: Vec<TokenList> = vec![toks(&["w"]), toks(&[]), toks(&[]), toks(&[])];
        let idf = build_idf(docs.iter().map(Vec::as_slice), &v).unwrap();
        assert!((idf.weights()[2] - 0.6931471805599453).abs() < 1e-12);

        let mut buf = Vec::new();
        idf.write_to(&mut buf).unwrap();
        let back = IdfTable::read_from(&buf[..], &v).unwrap();
        assert_eq!(back.weights(), idf.weights());
        assert_eq!(back.document_count(), 4);
        assert!(IdfTable::read_from(&buf[..], &vocab(&["t"])).is_err());
    }

    #[test]
    fn cosine_examples() {
        let v = vocab(&["a", "b", "c"]);
        let idf = IdfTable::uniform(&v, 1.0);
        let h = toks(&["a", "b"]);
        assert!((tfidf_cosine(&h, &h, &v, &idf) - 1.0).abs() < 1e-12);
        assert_eq!(tfidf_cosine(&toks(&["a"]), &toks(&["b"]), &v, &idf), 0.0);
        assert!((tfidf_cosine(&h, &toks(&["a", "c"]), &v, &idf) - 0.5).abs() < 1e-12);
        assert_eq!(tfidf_cosine(&[], &h, &v, &idf), 0.0);
    }

    #[test]
    fn vocabulary_dump_round_trip() {
        let v = vocab(&["z", "a", "m"]);
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(buf, b"z\na\nm\n");
        let back = Vocabulary::read_from(&buf[..], VocabSource::Shared).unwrap();
        assert_eq!(back, v);
    }

    fn toy_corpus() -> Corpus {
        let inst = |h: &str, b| crate::corpus::Instance {
            headline: h.into(),
            body_id: b,
            stance: Some(Stance::Agree),
        };
        make_corpus(
            vec![inst("alpha beta", 1), inst("gamma", 2)],
            BTreeMap::from([(1, "alpha alpha gamma".into()), (2, "gamma".into())]),
        )
        .unwrap()
    }

    #[test]
    fn baseline_vector_hand_computed() {
        // headline vocab counts: alpha 1, beta 1, gamma 1 -> [alpha, beta, gamma]
        // body vocab counts: gamma 2, alpha 2 -> [alpha, gamma]
        // shared counts: alpha 3, gamma 3, beta 1 -> [alpha, gamma, beta]
        // IDF docs: 2 headlines + 2 bodies = 4.
        //   df(alpha)=2 -> ln(4/3); df(gamma)=3 -> ln(1)=0; df(beta)=1 -> ln 2
        let corpus = toy_corpus();
        let none = HashSet::new();
        let fit = BaselineVocab::fit(&corpus, 5, &none).unwrap();
        assert_eq!(fit.headline.terms(), &toks(&["alpha", "beta", "gamma"])[..]);
        assert_eq!(fit.body.terms(), &toks(&["alpha", "gamma"])[..]);
        assert_eq!(fit.shared.terms(), &toks(&["alpha", "gamma", "beta"])[..]);
        let w_alpha = (4.0f64 / 3.0).ln();
        let w_beta = 2.0f64.ln();
        assert!((fit.idf.weights()[0] - w_alpha).abs() < 1e-15);
        assert_eq!(fit.idf.weights()[1], 0.0);

        let v = baseline_features(
            &corpus.instances()[0],
            &corpus,
            &fit.headline,
            &fit.body,
            &fit.shared,
            &fit.idf,
        )
        .unwrap();
        // headline tfidf = [w_alpha, 0, w_beta]; body tfidf = [2 w_alpha, 0, 0]
        let cos = (2.0 * w_alpha * w_alpha)
            / ((w_alpha * w_alpha + w_beta * w_beta).sqrt() * 2.0 * w_alpha);
        let dense = v.to_dense();
        assert_eq!(dense.len(), 3 + 2 + 1);
        assert_eq!(&dense[..5], &[1.0, 1.0, 0.0, 2.0, 1.0]);
        assert!((dense[5] - cos).abs() < 1e-12);

        let same = crate::corpus::Instance {
            headline: "alpha alpha gamma".into(),
            body_id: 1,
            stance: None,
        };
        let v = baseline_features(&same, &corpus, &fit.headline, &fit.body, &fit.shared, &fit.idf)
            .unwrap();
        assert!((v.block_values(TFIDF_COS).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_unknown_body() {
        let corpus = toy_corpus();
        let fit = BaselineVocab::fit(&corpus, 5, &HashSet::new()).unwrap();
        let bad = crate::corpus::Instance {
            headline: "x".into(),
            body_id: 9,
            stance: None,
        };
        let err = baseline_features(&bad, &corpus, &fit.headline, &fit.body, &fit.shared, &fit.idf)
            .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    fn arb_tokens() -> impl Strategy<Value = TokenList> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "zz"]), 0..12)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_permutation_invariant(
            a in arb_tokens(), b in arb_tokens(), seed in any::<u64>()
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let v = vocab(&["a", "b", "c", "d", "e"]);
            let idf = IdfTable { idf: vec![0.3, 1.0, 2.0, 0.0, 0.7], document_count: 5 };
            let ab = tfidf_cosine(&a, &b, &v, &idf);
            prop_assert!((ab - tfidf_cosine(&b, &a, &v, &idf)).abs() < 1e-12);
            let mut shuffled = a.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert!((ab - tfidf_cosine(&shuffled, &b, &v, &idf)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn cosine_scale_invariant(a in arb_tokens(), b in arb_tokens(), s in 0.01f64..100.0) {
            let v = vocab(&["a", "b", "c", "d", "e"]);
            let idf = IdfTable { idf: vec![0.3, 1.0, 2.0, 0.5, 0.7], document_count: 5 };
            let scaled = IdfTable { idf: idf.idf.iter().map(|w| w * s).collect(), document_count: 5 };
            let base = tfidf_cosine(&a, &b, &v, &idf);
            prop_assert!((base - tfidf_cosine(&a, &b, &v, &scaled)).abs() < 1e-12);
        }

        #[test]
        fn tf_sum_bounded(a in arb_tokens()) {
            let v = vocab(&["a", "b", "zz"]);
            let tf = tf_vector(&a, &v);
            prop_assert!(tf.iter().sum::<f64>() <= a.len() as f64);
            prop_assert!(tf.iter().all(|x| *x >= 0.0 && x.fract() == 0.0));
            let sparse: Vec<f64> = {
                let mut d = vec![0.0; 3];
                for (i, c) in tf_sparse(&a, &v) { d[i as usize] = c; }
                d
            };
            prop_assert_eq!(sparse, tf);
        }

        #[test]
        fn tokens_have_no_whitespace(s in ".{0,40}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }
}
