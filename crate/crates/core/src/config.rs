//! TOML experiment configuration, validated before any work starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::Stance;
use crate::ensemble::FusionRule;
use crate::error::{Error, Result};
use crate::mlp::TrainingConfig;
use crate::pipeline::{BlockSpec, FeatureSettings, KeywordSpec, PipelineSpec, TfTransform};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    data: RawData,
    #[serde(default)]
    features: RawFeatures,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    training: Option<toml::Table>,
    #[serde(default)]
    keywords: BTreeMap<String, RawKeywords>,
    #[serde(default)]
    pipelines: BTreeMap<String, RawPipeline>,
    #[serde(default)]
    ensembles: Vec<RawEnsemble>,
    #[serde(default)]
    cv: RawCv,
    #[serde(default)]
    combiner: RawCombiner,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    train_stances: PathBuf,
    train_bodies: PathBuf,
    test_stances: Option<PathBuf>,
    test_bodies: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    #[serde(default = "yes")]
    restrict_embeddings: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    #[serde(default = "default_vocab")]
    vocab_size: usize,
    #[serde(default = "yes")]
    stopwords: bool,
}

fn default_vocab() -> usize {
    5000
}

impl Default for RawFeatures {
    fn default() -> Self {
        Self {
            vocab_size: default_vocab(),
            stopwords: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    #[serde(default = "default_fraction")]
    validation_fraction: f64,
    seed: Option<u64>,
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for RawSplit {
    fn default() -> Self {
        Self {
            validation_fraction: default_fraction(),
            seed: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeywords {
    selector: String,
    terms: Option<Vec<String>>,
    file: Option<PathBuf>,
    k: Option<usize>,
    class: Option<String>,
    themes: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    blocks: Vec<String>,
    tf_transform: Option<String>,
    training: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    name: String,
    members: Vec<String>,
    #[serde(default = "default_rule")]
    rule: String,
}

fn default_rule() -> String {
    "summation".into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCv {
    folds: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCombiner {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    l2_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train_stances: PathBuf,
    pub train_bodies: PathBuf,
    pub test_stances: Option<PathBuf>,
    pub test_bodies: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Keep only embedding rows for corpus tokens.
    pub restrict_embeddings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub pipeline: PipelineSpec,
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub name: String,
    pub members: Vec<String>,
    pub rule: FusionRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub features: FeatureSettings,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub keywords: BTreeMap<String, KeywordSpec>,
    /// Keyed by pipeline name; the model trained on it shares the name.
    pub models: BTreeMap<String, ModelConfig>,
    pub ensembles: Vec<EnsembleConfig>,
    pub cv_folds: usize,
    pub cv_seed: u64,
    pub combiner: crate::ensemble::CombinerConfig,
}

/// Stable 64-bit mix of a base seed and a name (FNV-1a over the name).
pub fn derive_seed(base: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Collects field-level problems so they are all reported at once.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn add(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{field}: {msg}"));
    }
}

fn training_config(
    base: &toml::Table,
    overlay: Option<&toml::Table>,
    default_seed: u64,
) -> std::result::Result<TrainingConfig, String> {
    let mut merged = base.clone();
    if let Some(o) = overlay {
        for (k, v) in o {
            merged.insert(k.clone(), v.clone());
        }
    }
    let explicit_seed = merged.contains_key("seed");
    let mut cfg: TrainingConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())?;
    if !explicit_seed {
        cfg.seed = default_seed;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file; relative paths resolve against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_seed(path, None)
    }

    /// As [`ExperimentConfig::load`], with the top-level seed replaced
    /// before any per-model seed is derived from it.
    pub fn load_with_seed(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Some(seed) = seed {
            let mut table: toml::Table =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
            text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        }
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        let mut p = Problems::default();

        let seed = raw.seed.unwrap_or_else(|| {
            p.add("seed", "required top-level integer");
            0
        });
        let output_dir = resolve(base_dir, raw.output_dir.unwrap_or_else(|| "out".into()));

        let data = DataPaths {
            train_stances: resolve(base_dir, raw.data.train_stances),
            train_bodies: resolve(base_dir, raw.data.train_bodies),
            test_stances: raw.data.test_stances.map(|x| resolve(base_dir, x)),
            test_bodies: raw.data.test_bodies.map(|x| resolve(base_dir, x)),
            embeddings: raw.data.embeddings.map(|x| resolve(base_dir, x)),
            restrict_embeddings: raw.data.restrict_embeddings,
        };
        if data.test_stances.is_some() != data.test_bodies.is_some() {
            p.add("data", "test_stances and test_bodies must be given together");
        }
        if raw.features.vocab_size == 0 {
            p.add("features.vocab_size", "must be >= 1");
        }
        let features = FeatureSettings {
            vocab_size: raw.features.vocab_size,
            stopwords: raw.features.stopwords,
        };
        let vf = raw.split.validation_fraction;
        if !(0.0..1.0).contains(&vf) {
            p.add("split.validation_fraction", "must lie in [0, 1)");
        }

        let mut keywords = BTreeMap::new();
        for (name, k) in raw.keywords {
            let field = format!("keywords.{name}");
            if name.is_empty() || name.contains(['/', '\\', '.', ':']) {
                p.add(&field, "name must be non-empty without '/', '.', ':'");
                continue;
            }
            let spec = match k.selector.as_str() {
                "manual" => {
                    if k.terms.is_some() && k.file.is_some() {
                        p.add(&field, "give terms or file, not both");
                    }
                    Some(KeywordSpec::Manual {
                        terms: k.terms,
                        file: k.file.map(|f| resolve(base_dir, f)),
                    })
                }
                "mi" => {
                    let class = match k.class.as_deref().map(str::parse::<Stance>) {
                        None => Some(Stance::Disagree),
                        Some(Ok(c)) => Some(c),
                        Some(Err(_)) => {
                            p.add(&format!("{field}.class"), "must be a stance name");
                            None
                        }
                    };
                    match (k.k, class) {
                        (Some(kk), Some(class)) => Some(KeywordSpec::Mi { k: kk, class }),
                        (None, _) => {
                            p.add(&format!("{field}.k"), "required for the mi selector");
                            None
                        }
                        _ => None,
                    }
                }
                "micc" => match (k.themes, k.k) {
                    (Some(themes), Some(kk)) if !themes.is_empty() => {
                        Some(KeywordSpec::Micc { themes, k: kk })
                    }
                    (_, None) => {
                        p.add(&format!("{field}.k"), "required for the micc selector");
                        None
                    }
                    _ => {
                        p.add(&format!("{field}.themes"), "micc needs at least one theme term");
                        None
                    }
                },
                other => {
                    p.add(&format!("{field}.selector"), format!("unknown selector {other:?} (manual, mi, micc)"));
                    None
                }
            };
            if let Some(s) = spec {
                keywords.insert(name, s);
            }
        }

        let base_training = raw.training.unwrap_or_default();
        let mut models = BTreeMap::new();
        for (name, rp) in raw.pipelines {
            let field = format!("pipelines.{name}");
            if name.is_empty() || name.contains(['/', '\\', '.', ':', ',']) {
                p.add(&field, "name must be non-empty without '/', '.', ':', ','");
                continue;
            }
            if rp.blocks.is_empty() {
                p.add(&format!("{field}.blocks"), "at least one block required");
            }
            let mut blocks = Vec::new();
            for b in &rp.blocks {
                match b.parse::<BlockSpec>() {
                    Ok(BlockSpec::Indicator(set)) if !keywords.contains_key(&set) => {
                        p.add(&format!("{field}.blocks"), format!("keyword set {set:?} is not defined"));
                    }
                    Ok(spec) => {
                        if blocks.contains(&spec) {
                            p.add(&format!("{field}.blocks"), format!("block {b:?} listed twice"));
                        }
                        blocks.push(spec)
                    }
                    Err(e) => p.add(&format!("{field}.blocks"), e),
                }
            }
            let mut pipeline = PipelineSpec::new(name.clone(), blocks);
            if let Some(t) = &rp.tf_transform {
                match t.parse::<TfTransform>() {
                    Ok(t) => pipeline.tf_transform = t,
                    Err(e) => p.add(&format!("{field}.tf_transform"), e),
                }
            }
            if pipeline.needs_embeddings() && data.embeddings.is_none() {
                p.add(&field, "similarity block needs data.embeddings");
            }
            let default_seed = derive_seed(seed, &name);
            match training_config(&base_training, rp.training.as_ref(), default_seed) {
                Ok(training) => {
                    models.insert(name, ModelConfig { pipeline, training });
                }
                Err(e) => p.add(&format!("{field}.training"), e),
            }
        }
        if models.is_empty() {
            p.add("pipelines", "at least one pipeline must be defined");
        }

        let mut ensembles = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in raw.ensembles.into_iter().enumerate() {
            let field = format!("ensembles[{i}]");
            if !seen.insert(e.name.clone()) {
                p.add(&field, format!("ensemble name {:?} defined twice", e.name));
            }
            if models.contains_key(&e.name) {
                p.add(&field, format!("ensemble name {:?} clashes with a pipeline", e.name));
            }
            if e.members.is_empty() {
                p.add(&format!("{field}.members"), "at least one member required");
            }
            for m in &e.members {
                if !models.contains_key(m) {
                    p.add(&format!("{field}.members"), format!("pipeline {m:?} is not defined"));
                }
            }
            let rule = match e.rule.parse::<FusionRule>() {
                Ok(r) => r,
                Err(err) => {
                    p.add(&format!("{field}.rule"), err);
                    FusionRule::Summation
                }
            };
            if rule == FusionRule::Concatenation && vf == 0.0 {
                p.add(&format!("{field}.rule"), "concatenation needs split.validation_fraction > 0");
            }
            ensembles.push(EnsembleConfig {
                name: e.name,
                members: e.members,
                rule,
            });
        }

        let cv_folds = raw.cv.folds.unwrap_or(10);
        if cv_folds < 2 {
            p.add("cv.folds", "must be >= 2");
        }

        let mut combiner = crate::ensemble::CombinerConfig {
            seed: derive_seed(seed, "combiner"),
            ..Default::default()
        };
        if let Some(e) = raw.combiner.epochs {
            combiner.epochs = e;
        }
        if let Some(lr) = raw.combiner.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                p.add("combiner.learning_rate", "must be positive");
            }
            combiner.learning_rate = lr;
        }
        if let Some(l2) = raw.combiner.l2_lambda {
            if !(l2 >= 0.0 && l2.is_finite()) {
                p.add("combiner.l2_lambda", "must be finite and non-negative");
            }
            combiner.l2_lambda = l2;
        }

        if !p.0.is_empty() {
            return Err(Error::Config(p.0.join("; ")));
        }
        Ok(Self {
            seed,
            output_dir,
            data,
            features,
            validation_fraction: vf,
            split_seed: raw.split.seed.unwrap_or_else(|| derive_seed(seed, "split")),
            keywords,
            models,
            ensembles,
            cv_folds,
            cv_seed: raw.cv.seed.unwrap_or_else(|| derive_seed(seed, "cv")),
            combiner,
        })
    }

    /// Model names followed by ensemble names.
    pub fn system_names(&self) -> Vec<String> {
        self.models
            .keys()
            .cloned()
            .chain(self.ensembles.iter().map(|e| e.name.clone()))
            .collect()
    }

    pub fn ensemble(&self, name: &str) -> Option<&EnsembleConfig> {
        self.ensembles.iter().find(|e| e.name == name)
    }

    /// Keyword specs referenced by the given models.
    pub fn keywords_for<'a>(&self, models: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, KeywordSpec> {
        let mut out = BTreeMap::new();
        for m in models {
            if let Some(mc) = self.models.get(m) {
                for set in mc.pipeline.keyword_sets() {
                    out.insert(set.to_string(), self.keywords[set].clone());
                }
            }
        }
        out
    }

    /// A starter config matching the three-model headline setup.
    pub fn example() -> &'static str {
        EXAMPLE
    }
}

const EXAMPLE: &str = r#"seed = 1
output_dir = "out"

[data]
train_stances = "data/train_stances.csv"
train_bodies = "data/train_bodies.csv"
test_stances = "data/competition_test_stances.csv"
test_bodies = "data/competition_test_bodies.csv"

[features]
vocab_size = 5000

[split]
validation_fraction = 0.1

[training]
hidden_dim = 100
epochs = 90

[keywords.manual]
selector = "manual"

[keywords.micc]
selector = "micc"
themes = ["hoax", "fake", "false"]
k = 20

[pipelines.baseline]
blocks = ["baseline"]

[pipelines.manual]
blocks = ["baseline", "indicator:manual"]

[pipelines.micc]
blocks = ["baseline", "indicator:micc"]

[[ensembles]]
name = "headline"
members = ["baseline", "manual", "micc"]
rule = "summation"

[cv]
folds = 10
"#;
