//! Command-line front end: train, evaluate, predict, keywords, cv, report.
//!
//! Every command reads one experiment config and writes only below the
//! output directory. Outputs carry no timestamps or absolute paths, so
//! reruns with the same inputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, EnsembleConfig, ExperimentConfig};
use crate::corpus::{holdout_split, load_corpus, make_corpus, plan_folds, Corpus, Instance, Stance};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::ensemble::{fit_concat_combiner, fuse_concatenation, fuse_summation, ConcatCombiner, FusionRule};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, heatmap_script, CvSystem, ScoreReport};
use crate::keywords::KeywordSet;
use crate::mlp::{load_model, save_model, train_logged, MlpModel, ProbabilityVector, TrainingConfig};
use crate::pipeline::{FittedFeatures, KeywordSpec};
use crate::text::tokenize;

type Loaded = (FittedFeatures, BTreeMap<String, MlpModel>, BTreeMap<String, ConcatCombiner>);

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Headline/body stance detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict to these models/ensembles (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit features and train every selected model.
    Train(Common),
    /// Score trained models and ensembles on the labeled test set.
    Evaluate(Common),
    /// Write predicted stances for (possibly unlabeled) input.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "bodies")]
        stances: Option<PathBuf>,
        #[arg(long, requires = "stances")]
        bodies: Option<PathBuf>,
    },
    /// Select keyword sets and write them as keyword files.
    Keywords {
        #[command(flatten)]
        common: Common,
        /// manual, mi or micc; without it every configured set is written.
        #[arg(long)]
        selector: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        themes: Vec<String>,
        /// Positive class for the mi selector.
        #[arg(long)]
        class: Option<String>,
    },
    /// k-fold cross-validation over the training corpus.
    Cv(Common),
    /// Regenerate summary and heat-map files from score reports.
    Report {
        #[command(flatten)]
        common: Common,
        /// A `.report.txt` or confusion `.csv`; default: every report under eval/.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train(c) | Command::Evaluate(c) | Command::Cv(c) => c,
            Command::Predict { common, .. }
            | Command::Keywords { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::Argument("--jobs must be >= 1".into()));
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let ctx = Context::new(common)?;
    match &cli.command {
        Command::Train(_) => ctx.train(),
        Command::Evaluate(_) => ctx.evaluate(),
        Command::Predict { stances, bodies, .. } => ctx.predict(stances.as_deref(), bodies.as_deref()),
        Command::Keywords {
            selector,
            k,
            themes,
            class,
            ..
        } => ctx.keywords(selector.as_deref(), *k, themes, class.as_deref()),
        Command::Cv(_) => ctx.cv(),
        Command::Report { input, .. } => ctx.report(input.as_deref()),
    }
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
    /// Selected models, in config order.
    models: Vec<String>,
    ensembles: Vec<EnsembleConfig>,
}

/// Entry of `ensembles.toml`; paths are relative to the output directory.
#[derive(Debug, Serialize, Deserialize)]
struct EnsembleRecord {
    name: String,
    rule: String,
    members: Vec<String>,
    models: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    combiner: Option<String>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct EnsembleFile {
    #[serde(default)]
    ensemble: Vec<EnsembleRecord>,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn corpus_tokens(corpora: &[&Corpus]) -> HashSet<String> {
    let mut set = HashSet::new();
    for c in corpora {
        for i in c.instances() {
            set.extend(tokenize(&i.headline));
        }
        for b in c.bodies().values() {
            set.extend(tokenize(b));
        }
    }
    set
}

/// Fitted features plus trained models for one training split.
struct Trained {
    features: FittedFeatures,
    models: BTreeMap<String, MlpModel>,
    log: Vec<String>,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let cfg = ExperimentConfig::load_with_seed(&common.config, common.seed)?;
        let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        let (models, ensembles) = if common.models.is_empty() {
            (cfg.models.keys().cloned().collect(), cfg.ensembles.clone())
        } else {
            let mut models = BTreeSet::new();
            let mut ensembles = Vec::new();
            for name in &common.models {
                if cfg.models.contains_key(name) {
                    models.insert(name.clone());
                } else if let Some(e) = cfg.ensemble(name) {
                    if !ensembles.contains(e) {
                        ensembles.push(e.clone());
                    }
                } else {
                    return Err(Error::Config(format!("--models: {name:?} is neither a pipeline nor an ensemble")));
                }
            }
            (models.into_iter().collect(), ensembles)
        };
        Ok(Self {
            cfg,
            out,
            models,
            ensembles,
        })
    }

    /// Selected models plus every ensemble member.
    fn needed_models(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = self.models.iter().cloned().collect();
        for e in &self.ensembles {
            set.extend(e.members.iter().cloned());
        }
        set.into_iter().collect()
    }

    fn system_names(&self) -> Vec<String> {
        self.models
            .iter()
            .cloned()
            .chain(self.ensembles.iter().map(|e| e.name.clone()))
            .collect()
    }

    fn load_train(&self) -> Result<Corpus> {
        let c = load_corpus(&self.cfg.data.train_stances, &self.cfg.data.train_bodies)?;
        if !c.is_labeled() {
            return Err(Error::Format("training stances file has no Stance column".into()));
        }
        Ok(c)
    }

    fn embeddings_for(&self, models: &[String], corpora: &[&Corpus]) -> Result<Option<Arc<EmbeddingTable>>> {
        let needed = models.iter().any(|m| self.cfg.models[m].pipeline.needs_embeddings());
        let Some(path) = self.cfg.data.embeddings.as_ref().filter(|_| needed) else {
            return Ok(None);
        };
        let restrict = self.cfg.data.restrict_embeddings.then(|| corpus_tokens(corpora));
        let table = load_embeddings(path, restrict.as_ref())?;
        if table.duplicates_ignored() > 0 {
            warn!("{}: {} duplicate tokens ignored", path.display(), table.duplicates_ignored());
        }
        Ok(Some(Arc::new(table)))
    }

    fn keyword_names(&self, models: &[String]) -> Vec<String> {
        self.cfg
            .keywords_for(models.iter().map(String::as_str))
            .into_keys()
            .collect()
    }

    /// Fits features on `fit` and trains `models` (in parallel). `seed_tag`
    /// perturbs every model seed, e.g. per CV fold.
    fn fit_and_train(
        &self,
        fit: &Corpus,
        models: &[String],
        embeddings: Option<Arc<EmbeddingTable>>,
        seed_tag: Option<&str>,
    ) -> Result<Trained> {
        let specs = self.cfg.keywords_for(models.iter().map(String::as_str));
        let features = FittedFeatures::fit(fit, &self.cfg.features, &specs, embeddings)?;
        let labels = fit.labels()?;
        let results: Vec<(MlpModel, Vec<String>)> = models
            .par_iter()
            .map(|name| {
                let mc = &self.cfg.models[name];
                let mut training: TrainingConfig = mc.training.clone();
                if let Some(tag) = seed_tag {
                    training.seed = derive_seed(training.seed, tag);
                }
                let xs = features.extract(&mc.pipeline, fit)?;
                let examples: Vec<_> = xs.iter().zip(labels.iter().copied()).collect();
                let mut log = vec![format!(
                    "model={name} examples={} input_dim={} hidden_dim={} epochs={} seed={}",
                    examples.len(),
                    xs.first().map_or(0, |x| x.len()),
                    training.hidden_dim,
                    training.epochs,
                    training.seed
                )];
                info!("training {name} on {} examples", examples.len());
                let model = train_logged(&examples, &training, |epoch, loss| {
                    log.push(format!("model={name} epoch={epoch} loss={loss}"));
                })
                .map_err(|e| Error::Model {
                    model: name.clone(),
                    message: e.to_string(),
                })?;
                Ok((model, log))
            })
            .collect::<Result<_>>()?;
        let mut out = BTreeMap::new();
        let mut log = Vec::new();
        for (name, (model, l)) in models.iter().zip(results) {
            out.insert(name.clone(), model);
            log.extend(l);
        }
        Ok(Trained {
            features,
            models: out,
            log,
        })
    }

    fn probabilities(
        &self,
        features: &FittedFeatures,
        models: &BTreeMap<String, MlpModel>,
        corpus: &Corpus,
    ) -> Result<BTreeMap<String, Vec<ProbabilityVector>>> {
        let mut out = BTreeMap::new();
        for (name, model) in models {
            let pipeline = &self.cfg.models[name].pipeline;
            let layout = features.layout(pipeline)?;
            if **model.layout() != *layout {
                return Err(Error::Config(format!(
                    "model {name} expects layout {} but pipeline {name} produces {}",
                    model.layout(),
                    layout
                )));
            }
            let xs = features.extract(pipeline, corpus)?;
            let probs = xs
                .par_iter()
                .map(|x| model.predict(x).map(|(_, p)| p))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Model {
                    model: name.clone(),
                    message: e.to_string(),
                })?;
            out.insert(name.clone(), probs);
        }
        Ok(out)
    }

    /// Predictions of every selected system, in `system_names` order.
    fn decide(
        &self,
        probs: &BTreeMap<String, Vec<ProbabilityVector>>,
        combiners: &BTreeMap<String, ConcatCombiner>,
        n: usize,
    ) -> Result<Vec<(String, Vec<Stance>)>> {
        let mut out = Vec::new();
        for m in &self.models {
            out.push((m.clone(), probs[m].iter().map(|p| p.decide()).collect()));
        }
        for e in &self.ensembles {
            let combiner = combiners.get(&e.name);
            let decided = (0..n)
                .map(|i| {
                    let members: Vec<ProbabilityVector> = e.members.iter().map(|m| probs[m][i]).collect();
                    let fused = match (e.rule, combiner) {
                        (FusionRule::Concatenation, Some(c)) => fuse_concatenation(&members, c)?,
                        (FusionRule::Concatenation, None) => {
                            return Err(Error::Config(format!("ensemble {} has no fitted combiner", e.name)))
                        }
                        (FusionRule::Summation, _) => fuse_summation(&members)?,
                    };
                    Ok(fused.decided)
                })
                .collect::<Result<_>>()?;
            out.push((e.name.clone(), decided));
        }
        Ok(out)
    }

    /// Fits a combiner for each concatenation ensemble on validation output.
    fn fit_combiners(
        &self,
        val_probs: &BTreeMap<String, Vec<ProbabilityVector>>,
        val_labels: &[Stance],
        seed_tag: Option<&str>,
    ) -> Result<BTreeMap<String, (ConcatCombiner, Vec<String>)>> {
        let mut out = BTreeMap::new();
        for e in self.ensembles.iter().filter(|e| e.rule == FusionRule::Concatenation) {
            if val_labels.is_empty() {
                return Err(Error::Config(format!(
                    "ensemble {}: concatenation needs a non-empty validation split",
                    e.name
                )));
            }
            let inputs: Vec<Vec<ProbabilityVector>> = (0..val_labels.len())
                .map(|i| e.members.iter().map(|m| val_probs[m][i]).collect())
                .collect();
            let mut cc = self.cfg.combiner.clone();
            cc.seed = derive_seed(cc.seed, &e.name);
            if let Some(tag) = seed_tag {
                cc.seed = derive_seed(cc.seed, tag);
            }
            let fitted = fit_concat_combiner(&inputs, val_labels, &cc).map_err(|err| Error::Model {
                model: e.name.clone(),
                message: err.to_string(),
            })?;
            out.insert(e.name.clone(), fitted);
        }
        Ok(out)
    }

    fn train(&self) -> Result<()> {
        let train = self.load_train()?;
        let (fit, val) = holdout_split(&train, self.cfg.validation_fraction, self.cfg.split_seed);
        let models = self.needed_models();
        let emb = self.embeddings_for(&models, &[&fit, &val])?;
        create_dir(&self.out)?;
        let trained = self.fit_and_train(&fit, &models, emb, None)?;
        trained.features.save(&self.out.join("features"))?;
        create_dir(&self.out.join("models"))?;
        for (name, model) in &trained.models {
            save_model(model, self.out.join("models").join(format!("{name}.model")))?;
        }

        let mut log = vec![
            format!("split fit_instances={} validation_instances={}", fit.len(), val.len()),
            format!(
                "features headline_vocab={} body_vocab={} shared_vocab={}",
                trained.features.vocab.headline.len(),
                trained.features.vocab.body.len(),
                trained.features.vocab.shared.len()
            ),
        ];
        for (name, k) in &trained.features.keywords {
            log.push(format!("keywords set={name} terms={}", k.set.len()));
        }
        log.extend(trained.log);

        let mut combiners = BTreeMap::new();
        if !val.is_empty() {
            let labels = val.labels()?;
            let probs = self.probabilities(&trained.features, &trained.models, &val)?;
            let fitted = self.fit_combiners(&probs, &labels, None)?;
            for (name, (c, warnings)) in &fitted {
                c.save(self.out.join("models").join(format!("{name}.combiner")))?;
                for w in warnings {
                    warn!("ensemble {name}: {w}");
                    log.push(format!("ensemble={name} warning=\"{w}\""));
                }
            }
            combiners = fitted;
            let plain: BTreeMap<String, ConcatCombiner> =
                combiners.iter().map(|(k, (c, _))| (k.clone(), c.clone())).collect();
            for (system, pred) in self.decide(&probs, &plain, val.len())? {
                let r = ScoreReport::from_predictions(&labels, &pred)?;
                log.push(format!(
                    "validation system={system} relative_grade={:.4} f1_macro={:.6}",
                    r.relative_grade, r.f1_macro
                ));
                write_file(
                    &self.out.join("validation").join(format!("{system}.report.txt")),
                    r.to_text(&system),
                )?;
            }
        }

        let records = self
            .ensembles
            .iter()
            .map(|e| EnsembleRecord {
                name: e.name.clone(),
                rule: e.rule.as_str().into(),
                members: e.members.clone(),
                models: e.members.iter().map(|m| format!("models/{m}.model")).collect(),
                combiner: combiners.get(&e.name).map(|_| format!("models/{}.combiner", e.name)),
                warnings: combiners.get(&e.name).map(|(_, w)| w.clone()).unwrap_or_default(),
            })
            .collect();
        let file = EnsembleFile { ensemble: records };
        write_file(
            &self.out.join("ensembles.toml"),
            toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?,
        )?;
        let mut text = log.join("\n");
        text.push('\n');
        write_file(&self.out.join("train.log"), text)?;
        info!("trained {} models into {}", trained.models.len(), self.out.display());
        Ok(())
    }

    /// Loads fitted features, models and combiners written by `train`.
    fn load_trained(
        &self,
        corpora: &[&Corpus],
    ) -> Result<Loaded> {
        let models = self.needed_models();
        let emb = self.embeddings_for(&models, corpora)?;
        let kw = self.keyword_names(&models);
        let features = FittedFeatures::load(&self.out.join("features"), kw.iter().map(String::as_str), emb)?;
        let mut loaded = BTreeMap::new();
        for m in &models {
            loaded.insert(m.clone(), load_model(self.out.join("models").join(format!("{m}.model")))?);
        }
        let mut combiners = BTreeMap::new();
        if self.ensembles.iter().any(|e| e.rule == FusionRule::Concatenation) {
            let path = self.out.join("ensembles.toml");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let file: EnsembleFile =
                toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            for e in self.ensembles.iter().filter(|e| e.rule == FusionRule::Concatenation) {
                let rec = file.ensemble.iter().find(|r| r.name == e.name).ok_or_else(|| {
                    Error::Config(format!("ensemble {} was not trained; run `stance train`", e.name))
                })?;
                let rel = rec
                    .combiner
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("ensemble {} has no combiner file", e.name)))?;
                let c = ConcatCombiner::load(self.out.join(rel))?;
                if c.n_members() != e.members.len() {
                    return Err(Error::Config(format!(
                        "combiner for {} has {} inputs, ensemble has {} members",
                        e.name,
                        c.n_members(),
                        e.members.len()
                    )));
                }
                combiners.insert(e.name.clone(), c);
            }
        }
        Ok((features, loaded, combiners))
    }

    fn load_test(&self) -> Result<Corpus> {
        match (&self.cfg.data.test_stances, &self.cfg.data.test_bodies) {
            (Some(s), Some(b)) => load_corpus(s, b),
            _ => Err(Error::Config("data.test_stances and data.test_bodies are not set".into())),
        }
    }

    fn evaluate(&self) -> Result<()> {
        let test = self.load_test()?;
        if !test.is_labeled() {
            return Err(Error::Argument(
                "test stances have no Stance column; use `stance predict` for unlabeled data".into(),
            ));
        }
        let labels = test.labels()?;
        let (features, models, combiners) = self.load_trained(&[&test])?;
        let probs = self.probabilities(&features, &models, &test)?;
        let dir = self.out.join("eval");
        create_dir(&dir)?;
        let mut reports = Vec::new();
        for (system, pred) in self.decide(&probs, &combiners, test.len())? {
            let r = ScoreReport::from_predictions(&labels, &pred)?;
            write_report_files(&dir, &system, &r)?;
            info!("{system}: relative grade {:.2}", r.relative_grade);
            reports.push((system, r));
        }
        write_file(&dir.join("summary.txt"), summary_table(&reports))
    }

    fn predict(&self, stances: Option<&Path>, bodies: Option<&Path>) -> Result<()> {
        let input = match (stances, bodies) {
            (Some(s), Some(b)) => load_corpus(s, b)?,
            _ => self.load_test()?,
        };
        let (features, models, combiners) = self.load_trained(&[&input])?;
        let probs = self.probabilities(&features, &models, &input)?;
        let dir = self.out.join("predict");
        create_dir(&dir)?;
        for (system, pred) in self.decide(&probs, &combiners, input.len())? {
            let instances: Vec<Instance> = input
                .instances()
                .iter()
                .zip(pred)
                .map(|(i, s)| Instance {
                    stance: Some(s),
                    ..i.clone()
                })
                .collect();
            let labeled = make_corpus(instances, input.bodies().clone())?;
            let mut buf = Vec::new();
            labeled.write_stances(&mut buf)?;
            write_file(&dir.join(format!("{system}.predictions.csv")), buf)?;
        }
        Ok(())
    }

    fn keywords(&self, selector: Option<&str>, k: Option<usize>, themes: &[String], class: Option<&str>) -> Result<()> {
        let specs: BTreeMap<String, KeywordSpec> = match selector {
            None => {
                if k.is_some() || !themes.is_empty() || class.is_some() {
                    return Err(Error::Argument("--k/--themes/--class need --selector".into()));
                }
                self.cfg.keywords.clone()
            }
            Some(sel) => {
                let spec = match sel {
                    "manual" => KeywordSpec::Manual {
                        terms: None,
                        file: None,
                    },
                    "mi" => KeywordSpec::Mi {
                        k: k.unwrap_or(20),
                        class: class.map(str::parse).transpose()?.unwrap_or(Stance::Disagree),
                    },
                    "micc" => {
                        if themes.is_empty() {
                            return Err(Error::Argument("micc needs --themes".into()));
                        }
                        KeywordSpec::Micc {
                            themes: themes.to_vec(),
                            k: k.unwrap_or(20),
                        }
                    }
                    other => {
                        return Err(Error::Argument(format!(
                            "unknown selector {other:?} (manual, mi, micc)"
                        )))
                    }
                };
                BTreeMap::from([(sel.to_string(), spec)])
            }
        };
        if specs.is_empty() {
            return Err(Error::Config("no keyword sets configured".into()));
        }
        let train = self.load_train()?;
        let (fit, _) = holdout_split(&train, self.cfg.validation_fraction, self.cfg.split_seed);
        let fitted = FittedFeatures::fit(&fit, &self.cfg.features, &specs, None)?;
        let dir = self.out.join("keywords");
        create_dir(&dir)?;
        for (name, fk) in &fitted.keywords {
            if fk.groups.is_empty() {
                fk.set.save(dir.join(format!("{name}.kw")))?;
                continue;
            }
            for g in &fk.groups {
                let theme = match g.provenance() {
                    crate::keywords::Provenance::Micc { theme, .. } => theme.clone(),
                    _ => g.name().to_string(),
                };
                let set_name = format!("{name}-{theme}");
                let group = KeywordSet::new(set_name.clone(), g.terms(), g.provenance().clone())?;
                group.save(dir.join(format!("{set_name}.kw")))?;
            }
        }
        Ok(())
    }

    fn cv(&self) -> Result<()> {
        let train = self.load_train()?;
        let plan = plan_folds(&train, self.cfg.cv_folds, self.cfg.cv_seed)?;
        let models = self.needed_models();
        let emb = self.embeddings_for(&models, &[&train])?;
        let system = CliCv {
            ctx: self,
            models,
            embeddings: emb,
        };
        let res = cross_validate(&train, &plan, &[&system])?;
        let dir = self.out.join("cv");
        create_dir(&dir)?;
        for f in 0..res.folds.len() {
            write_file(&dir.join(format!("fold-{:02}.report.txt", f + 1)), res.fold_text(f))?;
        }
        write_file(&dir.join("aggregate.txt"), res.aggregate_text())
    }

    fn report(&self, input: Option<&Path>) -> Result<()> {
        let mut reports: Vec<(String, ScoreReport)> = Vec::new();
        match input {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                if text.contains("[confusion]") {
                    reports.push(ScoreReport::parse_text(&text)?);
                } else {
                    let m = crate::eval::ConfusionMatrix::read_csv(text.as_bytes())?;
                    let name = path
                        .file_name()
                        .and_then(|n| n.to_str())
                        .map(|n| n.trim_end_matches(".csv").trim_end_matches(".confusion").to_string())
                        .unwrap_or_else(|| "input".into());
                    reports.push((name, ScoreReport::from_confusion(&m)?));
                }
            }
            None => {
                let dir = self.out.join("eval");
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .map_err(|e| Error::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.to_string_lossy().ends_with(".report.txt"))
                    .collect();
                paths.sort();
                if paths.is_empty() {
                    return Err(Error::Config(format!(
                        "no reports under {}; run `stance evaluate` first",
                        dir.display()
                    )));
                }
                for p in paths {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    reports.push(ScoreReport::parse_text(&text)?);
                }
            }
        }
        let dir = self.out.join("report");
        create_dir(&dir)?;
        for (name, r) in &reports {
            write_file(&dir.join(format!("{name}.heatmap.dat")), r.heatmap_data())?;
            write_file(
                &dir.join(format!("{name}.heatmap.gp")),
                heatmap_script(&format!("{name}.heatmap.dat"), name),
            )?;
        }
        write_file(&dir.join("summary.txt"), summary_table(&reports))
    }
}

fn write_report_files(dir: &Path, system: &str, r: &ScoreReport) -> Result<()> {
    write_file(&dir.join(format!("{system}.report.txt")), r.to_text(system))?;
    let mut csv = Vec::new();
    r.confusion
        .write_csv(&mut csv)
        .map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(format!("{system}.confusion.csv")), csv)?;
    write_file(&dir.join(format!("{system}.heatmap.dat")), r.heatmap_data())?;
    write_file(
        &dir.join(format!("{system}.heatmap.gp")),
        heatmap_script(&format!("{system}.heatmap.dat"), system),
    )
}

/// Systems side by side, one row each.
fn summary_table(reports: &[(String, ScoreReport)]) -> String {
    let width = reports.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$} {:>10} {:>10} {:>8} {:>7} {:>8} {:>7} {:>9} {:>8}",
        "system", "grade", "max_grade", "rel%", "agree", "disagree", "discuss", "unrelated", "f1_macro"
    );
    for (name, r) in reports {
        let a = r.per_class_accuracy;
        let _ = writeln!(
            s,
            "{name:<width$} {:>10} {:>10} {:>8.2} {:>7.3} {:>8.3} {:>7.3} {:>9.3} {:>8.3}",
            r.grade, r.max_grade, r.relative_grade, a[0], a[1], a[2], a[3], r.f1_macro
        );
    }
    s
}

/// All selected systems as one CV participant, so members train once per fold.
struct CliCv<'a> {
    ctx: &'a Context,
    models: Vec<String>,
    embeddings: Option<Arc<EmbeddingTable>>,
}

impl CvSystem for CliCv<'_> {
    fn names(&self) -> Vec<String> {
        self.ctx.system_names()
    }

    fn fit_predict(&self, train: &Corpus, test: &Corpus, fold: usize) -> Result<Vec<Vec<Stance>>> {
        let tag = format!("fold-{fold}");
        let cfg = &self.ctx.cfg;
        let (fit, val) = holdout_split(train, cfg.validation_fraction, derive_seed(cfg.split_seed, &tag));
        let trained = self
            .ctx
            .fit_and_train(&fit, &self.models, self.embeddings.clone(), Some(&tag))?;
        let mut combiners = BTreeMap::new();
        if self.ctx.ensembles.iter().any(|e| e.rule == FusionRule::Concatenation) {
            let val_probs = self.ctx.probabilities(&trained.features, &trained.models, &val)?;
            for (k, (c, _)) in self.ctx.fit_combiners(&val_probs, &val.labels()?, Some(&tag))? {
                combiners.insert(k, c);
            }
        }
        let probs = self.ctx.probabilities(&trained.features, &trained.models, test)?;
        Ok(self
            .ctx
            .decide(&probs, &combiners, test.len())?
            .into_iter()
            .map(|(_, p)| p)
            .collect())
    }
}
