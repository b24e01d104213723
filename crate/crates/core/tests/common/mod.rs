#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOPICS: usize = 24;

fn topic_word(t: usize, j: usize) -> String {
    const SYL: [&str; 8] = ["ka", "lo", "mi", "ne", "ru", "sa", "to", "vi"];
    format!("{}{}{}", SYL[t % 8], SYL[(t / 8 + j) % 8], SYL[j % 8])
}

const FILLER: [&str; 10] = [
    "the", "said", "news", "report", "today", "people", "city", "official", "video", "photo",
];

fn cue(stance: &str) -> &'static str {
    match stance {
        "agree" => "confirms",
        "disagree" => "denies",
        _ => "reportedly",
    }
}

pub struct SyntheticCorpus {
    pub stances: Vec<(String, u64, String)>,
    pub bodies: Vec<(u64, String)>,
}

/// FNC-shaped toy data: each body has a topic, related headlines reuse its
/// topic words plus a stance cue, unrelated ones borrow another topic.
pub fn synthetic(body_ids: std::ops::Range<u64>, per_body: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bodies = Vec::new();
    let mut stances = Vec::new();
    for b in body_ids {
        let t = b as usize % TOPICS;
        let mut words: Vec<String> = (0..40).map(|_| topic_word(t, rng.gen_range(0..8))).collect();
        words.extend((0..20).map(|_| FILLER[rng.gen_range(0..FILLER.len())].to_string()));
        if b % 5 == 0 {
            words.extend(["hoax".to_string(), "fake".to_string()]);
        }
        words.shuffle(&mut rng);
        bodies.push((b, words.join(" ")));
        for _ in 0..per_body {
            let r: f64 = rng.gen();
            let stance = if r < 0.55 {
                "unrelated"
            } else if r < 0.75 {
                "discuss"
            } else if r < 0.9 {
                "agree"
            } else {
                "disagree"
            };
            let mut h: Vec<String> = if stance == "unrelated" {
                let other = (t + rng.gen_range(1..TOPICS)) % TOPICS;
                (0..3).map(|_| topic_word(other, rng.gen_range(0..8))).collect()
            } else {
                let mut h: Vec<String> = (0..3).map(|_| topic_word(t, rng.gen_range(0..8))).collect();
                let c = if rng.gen::<f64>() < 0.9 {
                    cue(stance)
                } else {
                    ["confirms", "denies", "reportedly"][rng.gen_range(0..3)]
                };
                h.push(c.to_string());
                h
            };
            h.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            h.shuffle(&mut rng);
            let mut headline = h.join(" ");
            headline[..1].make_ascii_uppercase();
            stances.push((headline, b, stance.to_string()));
        }
    }
    SyntheticCorpus { stances, bodies }
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path, prefix: &str, labeled: bool) -> (PathBuf, PathBuf) {
        let sp = dir.join(format!("{prefix}_stances.csv"));
        let bp = dir.join(format!("{prefix}_bodies.csv"));
        let mut w = csv::Writer::from_path(&sp).unwrap();
        if labeled {
            w.write_record(["Headline", "Body ID", "Stance"]).unwrap();
        } else {
            w.write_record(["Headline", "Body ID"]).unwrap();
        }
        for (h, b, s) in &self.stances {
            let id = b.to_string();
            if labeled {
                w.write_record([h.as_str(), &id, s]).unwrap();
            } else {
                w.write_record([h.as_str(), &id]).unwrap();
            }
        }
        w.flush().unwrap();
        let mut w = csv::Writer::from_path(&bp).unwrap();
        w.write_record(["Body ID", "articleBody"]).unwrap();
        for (b, text) in &self.bodies {
            w.write_record([b.to_string().as_str(), text]).unwrap();
        }
        w.flush().unwrap();
        (sp, bp)
    }
}

/// Writes train (bodies 0..80) and labeled test (80..100) CSVs plus a
/// config with baseline/manual/micc pipelines and two ensembles.
pub fn experiment(dir: &Path) -> PathBuf {
    synthetic(0..80, 8, 1).write(dir, "train", true);
    synthetic(80..100, 8, 2).write(dir, "test", true);
    let config = dir.join("exp.toml");
    std::fs::write(&config, CONFIG).unwrap();
    config
}

pub const CONFIG: &str = r#"seed = 7
output_dir = "out"

[data]
train_stances = "train_stances.csv"
train_bodies = "train_bodies.csv"
test_stances = "test_stances.csv"
test_bodies = "test_bodies.csv"

[features]
vocab_size = 300

[training]
hidden_dim = 12
epochs = 25
batch_size = 40
learning_rate = 0.2
dropout_keep = 0.9

[keywords.manual]
selector = "manual"

[keywords.micc]
selector = "micc"
themes = ["hoax"]
k = 5

[pipelines.baseline]
blocks = ["baseline"]

[pipelines.manual]
blocks = ["baseline", "indicator:manual"]

[pipelines.micc]
blocks = ["baseline", "indicator:micc"]

[[ensembles]]
name = "headline"
members = ["baseline", "manual", "micc"]

[[ensembles]]
name = "pair"
members = ["baseline", "micc"]
rule = "concatenation"

[cv]
folds = 3
"#;

pub fn stance(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stance"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = stance(args, cwd);
    assert!(
        out.status.success(),
        "stance {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every file under `dir` as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out.sort();
    out
}
