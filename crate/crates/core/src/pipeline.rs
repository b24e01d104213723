//! Named feature pipelines: which blocks go into a model's input vector,
//! and the state fitted on a training split to produce them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::{BodyId, Corpus, Stance};
use crate::embeddings::{similarity_value, EmbeddingTable, SimilarityMode};
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, FeatureVector, Layout};
use crate::keywords::{
    body_documents, indicator_values, merge_sets, select_keywords_mi, select_keywords_micc,
    stance_labels, KeywordSet, Provenance,
};
use crate::stopwords;
use crate::text::{
    tokenize, BaselineVocab, IdfTable, TokenList, VocabSource, Vocabulary, TF_BODY, TF_HEADLINE,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockSpec {
    /// TF headline + TF body + TF-IDF cosine.
    Baseline,
    Indicator(String),
    Similarity(SimilarityMode),
}

impl FromStr for BlockSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "baseline" => Ok(BlockSpec::Baseline),
            Some(("indicator", set)) if !set.is_empty() => Ok(BlockSpec::Indicator(set.into())),
            Some(("similarity", mode)) => Ok(BlockSpec::Similarity(mode.parse()?)),
            _ => Err(Error::Config(format!(
                "unknown feature block {s:?} (expected baseline, indicator:<set> or similarity:<mode>)"
            ))),
        }
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSpec::Baseline => f.write_str("baseline"),
            BlockSpec::Indicator(s) => write!(f, "indicator:{s}"),
            BlockSpec::Similarity(m) => write!(f, "similarity:{}", m.block_name()),
        }
    }
}

/// How TF counts enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TfTransform {
    #[default]
    Raw,
    Log1p,
}

impl FromStr for TfTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(TfTransform::Raw),
            "log1p" => Ok(TfTransform::Log1p),
            other => Err(Error::Config(format!("unknown tf_transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub name: String,
    pub blocks: Vec<BlockSpec>,
    pub tf_transform: TfTransform,
}

impl PipelineSpec {
    pub fn new(name: impl Into<String>, blocks: Vec<BlockSpec>) -> Self {
        Self {
            name: name.into(),
            blocks,
            tf_transform: TfTransform::Raw,
        }
    }

    pub fn keyword_sets(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().filter_map(|b| match b {
            BlockSpec::Indicator(s) => Some(s.as_str()),
            _ => None,
        })
    }

    pub fn needs_embeddings(&self) -> bool {
        self.blocks
            .iter()
            .any(|b| matches!(b, BlockSpec::Similarity(_)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KeywordSpec {
    Manual {
        terms: Option<Vec<String>>,
        file: Option<PathBuf>,
    },
    Mi {
        k: usize,
        class: Stance,
    },
    Micc {
        themes: Vec<String>,
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    pub vocab_size: usize,
    pub stopwords: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            vocab_size: 5000,
            stopwords: true,
        }
    }
}

/// Keyword selection result: the set used as features and, for MICC, the
/// per-theme groups it was merged from.
#[derive(Debug, Clone)]
pub struct FittedKeywords {
    pub set: KeywordSet,
    pub groups: Vec<KeywordSet>,
}

pub fn fit_keywords(
    name: &str,
    spec: &KeywordSpec,
    train: &Corpus,
    candidates: &[String],
) -> Result<FittedKeywords> {
    match spec {
        KeywordSpec::Manual { terms, file } => {
            let set = match (terms, file) {
                (Some(t), _) => KeywordSet::new(name, t, Provenance::Manual)?,
                (None, Some(path)) => KeywordSet::load_word_list(name, path)?,
                (None, None) => {
                    let d = KeywordSet::manual_default();
                    KeywordSet::new(name, d.terms(), Provenance::Manual)?
                }
            };
            Ok(FittedKeywords {
                set,
                groups: Vec::new(),
            })
        }
        KeywordSpec::Mi { k, class } => {
            let docs = body_documents(train)?;
            let labels = stance_labels(train, &docs, *class);
            let set = select_keywords_mi(name, &docs, &labels, candidates, *k, *class)?;
            Ok(FittedKeywords {
                set,
                groups: Vec::new(),
            })
        }
        KeywordSpec::Micc { themes, k } => {
            let docs = body_documents(train)?;
            let themes: Vec<String> = themes.iter().map(|t| t.to_lowercase()).collect();
            let groups = select_keywords_micc(&docs, &themes, candidates, *k)?;
            let set = merge_sets(
                name,
                &groups,
                Provenance::Micc {
                    theme: themes.join("+"),
                    k: *k,
                },
            )?;
            Ok(FittedKeywords { set, groups })
        }
    }
}

/// Everything fitted on one training split that feature extraction needs.
#[derive(Debug, Clone)]
pub struct FittedFeatures {
    pub vocab: BaselineVocab,
    pub keywords: BTreeMap<String, FittedKeywords>,
    pub embeddings: Option<Arc<EmbeddingTable>>,
}

impl FittedFeatures {
    /// Fits vocabularies on `train`, then every keyword set in `keyword_specs`,
    /// using the body vocabulary as MI candidates.
    pub fn fit(
        train: &Corpus,
        settings: &FeatureSettings,
        keyword_specs: &BTreeMap<String, KeywordSpec>,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self> {
        let stop = if settings.stopwords {
            stopwords::english()
        } else {
            HashSet::new()
        };
        let vocab = BaselineVocab::fit(train, settings.vocab_size, &stop)?;
        let keywords = keyword_specs
            .iter()
            .map(|(name, spec)| {
                fit_keywords(name, spec, train, vocab.body.terms())
                    .map(|k| (name.clone(), k))
                    .map_err(|e| Error::Config(format!("keyword set {name}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            vocab,
            keywords,
            embeddings,
        })
    }

    /// Writes vocabularies, IDF weights and keyword sets under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("keywords")).map_err(|e| Error::io(dir, e))?;
        self.vocab.headline.save(dir.join("headline.vocab"))?;
        self.vocab.body.save(dir.join("body.vocab"))?;
        self.vocab.shared.save(dir.join("shared.vocab"))?;
        let path = dir.join("shared.idf");
        let mut buf = Vec::new();
        self.vocab.idf.write_to(&mut buf).unwrap();
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        for (name, k) in &self.keywords {
            k.set.save(dir.join("keywords").join(format!("{name}.kw")))?;
        }
        Ok(())
    }

    /// Reads back what [`FittedFeatures::save`] wrote, for the named keyword sets.
    pub fn load<'a>(
        dir: &Path,
        keyword_names: impl IntoIterator<Item = &'a str>,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self> {
        let headline = Vocabulary::load(dir.join("headline.vocab"), VocabSource::Headline)?;
        let body = Vocabulary::load(dir.join("body.vocab"), VocabSource::Body)?;
        let shared = Vocabulary::load(dir.join("shared.vocab"), VocabSource::Shared)?;
        let path = dir.join("shared.idf");
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let idf = IdfTable::read_from(std::io::BufReader::new(file), &shared)?;
        let keywords = keyword_names
            .into_iter()
            .map(|name| {
                let set = KeywordSet::load(dir.join("keywords").join(format!("{name}.kw")))?;
                Ok((
                    name.to_string(),
                    FittedKeywords {
                        set,
                        groups: Vec::new(),
                    },
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            vocab: BaselineVocab {
                headline,
                body,
                shared,
                idf,
            },
            keywords,
            embeddings,
        })
    }

    fn keyword_set(&self, name: &str) -> Result<&KeywordSet> {
        self.keywords
            .get(name)
            .map(|k| &k.set)
            .ok_or_else(|| Error::Config(format!("keyword set {name:?} is not defined")))
    }

    fn table(&self) -> Result<&EmbeddingTable> {
        self.embeddings
            .as_deref()
            .ok_or_else(|| Error::Config("similarity block needs an embedding file".into()))
    }

    pub fn layout(&self, pipeline: &PipelineSpec) -> Result<Arc<Layout>> {
        let mut layout = Layout::new();
        for block in &pipeline.blocks {
            match block {
                BlockSpec::Baseline => {
                    layout.push(TF_HEADLINE, self.vocab.headline.len());
                    layout.push(TF_BODY, self.vocab.body.len());
                    layout.push(crate::text::TFIDF_COS, 1);
                }
                BlockSpec::Indicator(name) => {
                    layout.push(format!("kw:{name}"), 2 * self.keyword_set(name)?.len());
                }
                BlockSpec::Similarity(mode) => {
                    self.table()?;
                    layout.push(mode.block_name(), 1);
                }
            }
        }
        Ok(Arc::new(layout))
    }

    fn vector(
        &self,
        pipeline: &PipelineSpec,
        layout: &Arc<Layout>,
        headline: &TokenList,
        body: &TokenList,
    ) -> Result<FeatureVector> {
        let mut b = FeatureBuilder::new();
        let h_set: HashSet<&str> = headline.iter().map(String::as_str).collect();
        let b_set: HashSet<&str> = body.iter().map(String::as_str).collect();
        for block in &pipeline.blocks {
            match block {
                BlockSpec::Baseline => self.vocab.append_blocks(&mut b, headline, body),
                BlockSpec::Indicator(name) => {
                    let set = self.keyword_set(name)?;
                    b.dense_block(&format!("kw:{name}"), &indicator_values(&h_set, &b_set, set));
                }
                BlockSpec::Similarity(mode) => {
                    let v = similarity_value(headline, body, self.table()?, *mode);
                    b.dense_block(mode.block_name(), &[v]);
                }
            }
        }
        let v = b.finish_shared(layout)?;
        Ok(match pipeline.tf_transform {
            TfTransform::Raw => v,
            TfTransform::Log1p => log1p_tf(v),
        })
    }

    /// Feature vectors for every instance of `corpus`, in order.
    pub fn extract(&self, pipeline: &PipelineSpec, corpus: &Corpus) -> Result<Vec<FeatureVector>> {
        let layout = self.layout(pipeline)?;
        let bodies: BTreeMap<BodyId, TokenList> = corpus
            .referenced_bodies()
            .into_par_iter()
            .map(|id| Ok((id, tokenize(corpus.body(id)?))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        corpus
            .instances()
            .par_iter()
            .map(|inst| {
                let headline = tokenize(&inst.headline);
                self.vector(pipeline, &layout, &headline, &bodies[&inst.body_id])
            })
            .collect()
    }
}

fn log1p_tf(v: FeatureVector) -> FeatureVector {
    let layout = Arc::clone(v.layout());
    let tf: Vec<(usize, usize)> = layout
        .blocks()
        .iter()
        .filter(|b| b.name == TF_HEADLINE || b.name == TF_BODY)
        .map(|b| (b.offset, b.offset + b.len))
        .collect();
    let entries = v
        .nonzeros()
        .iter()
        .map(|&(i, x)| {
            let in_tf = tf.iter().any(|(lo, hi)| (*lo..*hi).contains(&(i as usize)));
            (i, if in_tf { x.ln_1p() } else { x })
        })
        .collect();
    FeatureVector::from_sparse(layout, entries).expect("same layout and finite values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_corpus, Instance};

    fn corpus() -> Corpus {
        let inst = |h: &str, b, s| Instance {
            headline: h.into(),
            body_id: b,
            stance: Some(s),
        };
        make_corpus(
            vec![
                inst("police deny hoax claim", 1, Stance::Disagree),
                inst("hoax spreads online", 2, Stance::Discuss),
                inst("senate passes budget", 3, Stance::Unrelated),
            ],
            BTreeMap::from([
                (1, "officials deny the hoax. the claim is fake".into()),
                (2, "the hoax spreads and people discuss it".into()),
                (3, "budget vote in senate today".into()),
            ]),
        )
        .unwrap()
    }

    fn specs() -> BTreeMap<String, KeywordSpec> {
        BTreeMap::from([
            (
                "manual".to_string(),
                KeywordSpec::Manual {
                    terms: None,
                    file: None,
                },
            ),
            (
                "micc".to_string(),
                KeywordSpec::Micc {
                    themes: vec!["hoax".into()],
                    k: 2,
                },
            ),
        ])
    }

    #[test]
    fn block_spec_parsing() {
        assert_eq!("baseline".parse::<BlockSpec>().unwrap(), BlockSpec::Baseline);
        assert_eq!(
            "indicator:manual".parse::<BlockSpec>().unwrap(),
            BlockSpec::Indicator("manual".into())
        );
        assert_eq!(
            "similarity:wmd-relaxed".parse::<BlockSpec>().unwrap(),
            BlockSpec::Similarity(SimilarityMode::WmdRelaxed)
        );
        assert!("indicator:".parse::<BlockSpec>().is_err());
        assert!("tfidf".parse::<BlockSpec>().is_err());
    }

    #[test]
    fn layouts_follow_block_order() {
        let c = corpus();
        let fitted = FittedFeatures::fit(&c, &FeatureSettings::default(), &specs(), None).unwrap();
        let p = PipelineSpec::new(
            "kw",
            vec![
                BlockSpec::Baseline,
                BlockSpec::Indicator("manual".into()),
                BlockSpec::Indicator("micc".into()),
            ],
        );
        let layout = fitted.layout(&p).unwrap();
        let names: Vec<&str> = layout.blocks().iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, ["tf_headline", "tf_body", "tfidf_cos", "kw:manual", "kw:micc"]);
        assert_eq!(layout.block("kw:manual").unwrap().len, 30);
        assert_eq!(layout.block("kw:micc").unwrap().len, 4);

        let vs = fitted.extract(&p, &c).unwrap();
        assert_eq!(vs.len(), 3);
        assert!(vs.iter().all(|v| **v.layout() == *layout));
        // manual list order: fake, fraud, hoax, false, deny, ...
        let kw = vs[0].block_values("kw:manual").unwrap();
        assert_eq!(&kw[4..6], &[1.0, 1.0]); // hoax
        assert_eq!(&kw[8..10], &[1.0, 1.0]); // deny
        assert_eq!(&kw[0..2], &[0.0, 1.0]); // fake, body only
    }

    #[test]
    fn similarity_requires_embeddings() {
        let c = corpus();
        let fitted = FittedFeatures::fit(&c, &FeatureSettings::default(), &specs(), None).unwrap();
        let p = PipelineSpec::new("s", vec![BlockSpec::Similarity(SimilarityMode::Centroid)]);
        assert!(matches!(fitted.layout(&p), Err(Error::Config(_))));
        let undefined = PipelineSpec::new("u", vec![BlockSpec::Indicator("nope".into())]);
        assert!(fitted.layout(&undefined).is_err());
    }

    #[test]
    fn log1p_only_touches_tf_blocks() {
        let c = corpus();
        let fitted = FittedFeatures::fit(&c, &FeatureSettings::default(), &specs(), None).unwrap();
        let mut p = PipelineSpec::new("b", vec![BlockSpec::Baseline, BlockSpec::Indicator("manual".into())]);
        let raw = fitted.extract(&p, &c).unwrap();
        p.tf_transform = TfTransform::Log1p;
        let logged = fitted.extract(&p, &c).unwrap();
        let body_raw = raw[0].block_values(TF_BODY).unwrap();
        let body_log = logged[0].block_values(TF_BODY).unwrap();
        for (r, l) in body_raw.iter().zip(&body_log) {
            assert_eq!(r.ln_1p(), *l);
        }
        assert_eq!(
            raw[0].block_values("kw:manual").unwrap(),
            logged[0].block_values("kw:manual").unwrap()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let c = corpus();
        let fitted = FittedFeatures::fit(&c, &FeatureSettings::default(), &specs(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fitted.save(dir.path()).unwrap();
        let back = FittedFeatures::load(dir.path(), ["manual", "micc"], None).unwrap();
        let p = PipelineSpec::new(
            "kw",
            vec![BlockSpec::Baseline, BlockSpec::Indicator("micc".into())],
        );
        assert_eq!(fitted.extract(&p, &c).unwrap(), back.extract(&p, &c).unwrap());
        assert!(FittedFeatures::load(dir.path(), ["missing"], None).is_err());
    }
}
