//! FNC-1 weighted score, confusion matrix, per-class metrics, report
//! emitters, and the k-fold cross-validation harness.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::corpus::{Corpus, FoldPlan, Instance, Stance};
use crate::error::{Error, Result};

pub type Pair = (Stance, Stance);

/// Grade in quarter points, so sums stay exact.
fn quarter_points(truth: Stance, pred: Stance) -> u64 {
    match (truth.is_related(), pred.is_related()) {
        (false, false) => 1,
        (true, true) if truth == pred => 4,
        (true, true) => 1,
        _ => 0,
    }
}

/// `(grade, max_grade)` over (true, predicted) pairs.
pub fn fnc_score(pairs: &[Pair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Argument("cannot score an empty prediction list".into()));
    }
    let mut got = 0u64;
    let mut max = 0u64;
    for &(t, p) in pairs {
        got += quarter_points(t, p);
        max += if t.is_related() { 4 } else { 1 };
    }
    Ok((got as f64 / 4.0, max as f64 / 4.0))
}

/// Rows are true stances, columns predicted, both in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, truth: Stance) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn col_sum(&self, pred: Stance) -> u64 {
        self.counts.iter().map(|r| r[pred.index()]).sum()
    }

    pub fn get(&self, truth: Stance, pred: Stance) -> u64 {
        self.counts[truth.index()][pred.index()]
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, x) in r.iter_mut().zip(o) {
                *c += x;
            }
        }
    }

    /// Expands the matrix back into pairs (row-major order).
    pub fn pairs(&self) -> Vec<Pair> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for t in Stance::ALL {
            for p in Stance::ALL {
                out.extend(std::iter::repeat_n((t, p), self.get(t, p) as usize));
            }
        }
        out
    }

    /// Four lines of four comma-separated counts, header row and column
    /// carrying the stance names.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "true\\predicted,agree,disagree,discuss,unrelated")?;
        for t in Stance::ALL {
            let row = &self.counts[t.index()];
            writeln!(w, "{},{},{},{},{}", t, row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("confusion csv: {m}"));
        let mut m = ConfusionMatrix::default();
        let mut rows = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if i == 0 {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(bad(format!("line {}: expected 5 cells", i + 1)));
            }
            let t: Stance = cells[0].parse().map_err(|_| bad(format!("line {}: bad stance", i + 1)))?;
            for (j, c) in cells[1..].iter().enumerate() {
                m.counts[t.index()][j] = c
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad count {c:?}", i + 1)))?;
            }
            rows += 1;
        }
        if rows != 4 {
            return Err(bad(format!("expected 4 rows, found {rows}")));
        }
        Ok(m)
    }
}

pub fn confusion(pairs: &[Pair]) -> Result<ConfusionMatrix> {
    if pairs.is_empty() {
        return Err(Error::Argument("cannot tally an empty prediction list".into()));
    }
    let mut m = ConfusionMatrix::default();
    for &(t, p) in pairs {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Per-class accuracy (recall, 0 for an empty row) and macro-F1 (F1 of a
/// class with zero precision and recall is 0).
pub fn metrics(m: &ConfusionMatrix) -> ([f64; 4], f64) {
    let mut acc = [0.0; 4];
    let mut f1_sum = 0.0;
    for s in Stance::ALL {
        let tp = m.get(s, s);
        let recall = ratio(tp, m.row_sum(s));
        let precision = ratio(tp, m.col_sum(s));
        acc[s.index()] = recall;
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    (acc, f1_sum / 4.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub grade: f64,
    pub max_grade: f64,
    pub relative_grade: f64,
    pub per_class_accuracy: [f64; 4],
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix,
}

impl ScoreReport {
    pub fn from_pairs(pairs: &[Pair]) -> Result<Self> {
        let (grade, max_grade) = fnc_score(pairs)?;
        let confusion = confusion(pairs)?;
        let (per_class_accuracy, f1_macro) = metrics(&confusion);
        Ok(Self {
            grade,
            max_grade,
            relative_grade: 100.0 * grade / max_grade,
            per_class_accuracy,
            f1_macro,
            confusion,
        })
    }

    pub fn from_confusion(m: &ConfusionMatrix) -> Result<Self> {
        Self::from_pairs(&m.pairs())
    }

    pub fn from_predictions(truth: &[Stance], predicted: &[Stance]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Argument(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let pairs: Vec<Pair> = truth.iter().copied().zip(predicted.iter().copied()).collect();
        Self::from_pairs(&pairs)
    }

    /// Line-oriented `key=value` report followed by the confusion block.
    pub fn to_text(&self, system: &str) -> String {
        let mut s = String::new();
        s.push_str("# stance detection score report\n");
        s.push_str("# accuracy_<class> is per-class recall; f1_macro is the unweighted mean F1 over the four stances\n");
        let _ = writeln!(s, "system={system}");
        let _ = writeln!(s, "instances={}", self.confusion.total());
        let _ = writeln!(s, "grade={}", self.grade);
        let _ = writeln!(s, "max_grade={}", self.max_grade);
        let _ = writeln!(s, "relative_grade={:.4}", self.relative_grade);
        for st in Stance::ALL {
            let _ = writeln!(s, "accuracy_{st}={:.6}", self.per_class_accuracy[st.index()]);
        }
        let _ = writeln!(s, "f1_macro={:.6}", self.f1_macro);
        s.push_str("\n[confusion]\n");
        let mut buf = Vec::new();
        self.confusion.write_csv(&mut buf).unwrap();
        s.push_str(&String::from_utf8(buf).unwrap());
        s
    }

    /// Reads the grade and confusion back from [`ScoreReport::to_text`]
    /// output; metrics are recomputed from the confusion block.
    pub fn parse_text(text: &str) -> Result<(String, Self)> {
        let system = text
            .lines()
            .find_map(|l| l.strip_prefix("system="))
            .ok_or_else(|| Error::Format("report has no system= line".into()))?
            .to_string();
        let block = text
            .split_once("[confusion]\n")
            .ok_or_else(|| Error::Format("report has no [confusion] block".into()))?
            .1;
        let m = ConfusionMatrix::read_csv(block.as_bytes())?;
        Ok((system, Self::from_confusion(&m)?))
    }

    /// gnuplot `row col value` triples of the row-normalized confusion
    /// matrix, one blank line between rows.
    pub fn heatmap_data(&self) -> String {
        let mut s = String::from("# true_index predicted_index row_fraction (0=agree 1=disagree 2=discuss 3=unrelated)\n");
        for t in Stance::ALL {
            let row = self.confusion.row_sum(t);
            for p in Stance::ALL {
                let _ = writeln!(
                    s,
                    "{} {} {:.6}",
                    t.index(),
                    p.index(),
                    ratio(self.confusion.get(t, p), row)
                );
            }
            s.push('\n');
        }
        s
    }
}

/// gnuplot script rendering `data_file` as a heat map.
pub fn heatmap_script(data_file: &str, title: &str) -> String {
    format!(
        "set title \"{title}\"\n\
         set xlabel \"predicted\"\n\
         set ylabel \"true\"\n\
         set xtics (\"agree\" 0, \"disagree\" 1, \"discuss\" 2, \"unrelated\" 3)\n\
         set ytics (\"agree\" 0, \"disagree\" 1, \"discuss\" 2, \"unrelated\" 3)\n\
         set yrange [3.5:-0.5]\n\
         set xrange [-0.5:3.5]\n\
         set cbrange [0:1]\n\
         set palette defined (0 \"white\", 1 \"dark-red\")\n\
         plot \"{data_file}\" using 2:1:3 with image notitle, \\\n\
         \x20    \"{data_file}\" using 2:1:(sprintf(\"%.2f\",$3)) with labels notitle\n"
    )
}

/// Trainable systems for cross-validation. `fit_predict` receives the
/// training folds and the held-out fold with its labels removed, and
/// returns one prediction list per name in [`CvSystem::names`].
pub trait CvSystem: Sync {
    fn names(&self) -> Vec<String>;
    fn fit_predict(&self, train: &Corpus, test: &Corpus, fold: usize) -> Result<Vec<Vec<Stance>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    /// One report per system, in system order.
    pub reports: Vec<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_dev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub systems: Vec<String>,
    pub folds: Vec<FoldResult>,
    /// Relative-grade statistics per system.
    pub aggregate: Vec<Aggregate>,
}

fn strip_labels(corpus: &Corpus) -> Result<Corpus> {
    let instances: Vec<Instance> = corpus
        .instances()
        .iter()
        .map(|i| Instance {
            stance: None,
            ..i.clone()
        })
        .collect();
    crate::corpus::make_corpus(instances, corpus.bodies().clone())
}

/// Runs every system on every fold. Each system sees only the training
/// folds' labels; held-out labels are used for scoring only.
pub fn cross_validate(corpus: &Corpus, plan: &FoldPlan, systems: &[&dyn CvSystem]) -> Result<CvResult> {
    if systems.is_empty() {
        return Err(Error::Argument("cross-validation needs at least one system".into()));
    }
    corpus.labels()?;
    let folds: Vec<FoldResult> = (0..plan.k())
        .into_par_iter()
        .map(|fold| {
            let (train, test) = plan.split(corpus, fold)?;
            let truth = test.labels()?;
            let blind = strip_labels(&test)?;
            let mut reports = Vec::new();
            for s in systems {
                let preds = s.fit_predict(&train, &blind, fold)?;
                if preds.len() != s.names().len() {
                    return Err(Error::Argument("system returned the wrong number of prediction lists".into()));
                }
                for pred in preds {
                    reports.push(ScoreReport::from_predictions(&truth, &pred)?);
                }
            }
            Ok(FoldResult {
                fold,
                train_instances: train.len(),
                test_instances: test.len(),
                reports,
            })
        })
        .collect::<Result<_>>()?;
    let names: Vec<String> = systems.iter().flat_map(|s| s.names()).collect();
    let aggregate = (0..names.len())
        .map(|s| {
            let grades: Vec<f64> = folds.iter().map(|f| f.reports[s].relative_grade).collect();
            Aggregate::of(&grades)
        })
        .collect();
    Ok(CvResult {
        systems: names,
        folds,
        aggregate,
    })
}

impl CvResult {
    /// Per-fold text: systems side by side, one `key.system=value` line each.
    pub fn fold_text(&self, fold: usize) -> String {
        let f = &self.folds[fold];
        let mut s = String::from("# cross-validation fold report\n");
        let _ = writeln!(s, "fold={}", f.fold);
        let _ = writeln!(s, "train_instances={}", f.train_instances);
        let _ = writeln!(s, "test_instances={}", f.test_instances);
        for (name, r) in self.systems.iter().zip(&f.reports) {
            let _ = writeln!(s, "grade.{name}={}", r.grade);
            let _ = writeln!(s, "max_grade.{name}={}", r.max_grade);
            let _ = writeln!(s, "relative_grade.{name}={:.4}", r.relative_grade);
            let _ = writeln!(s, "f1_macro.{name}={:.6}", r.f1_macro);
        }
        s
    }

    pub fn aggregate_text(&self) -> String {
        let mut s = String::from("# cross-validation aggregate (relative grade, sample std dev)\n");
        let _ = writeln!(s, "folds={}", self.folds.len());
        let width = self.systems.iter().map(String::len).max().unwrap_or(0).max(6);
        let _ = writeln!(s, "# {:<width$} {:>9} {:>9} {:>9} {:>9}", "system", "mean", "std", "min", "max");
        for (name, a) in self.systems.iter().zip(&self.aggregate) {
            let _ = writeln!(
                s,
                "# {name:<width$} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                a.mean, a.std_dev, a.min, a.max
            );
        }
        for (name, a) in self.systems.iter().zip(&self.aggregate) {
            let _ = writeln!(s, "mean.{name}={:.4}", a.mean);
            let _ = writeln!(s, "std.{name}={:.4}", a.std_dev);
            let _ = writeln!(s, "min.{name}={:.4}", a.min);
            let _ = writeln!(s, "max.{name}={:.4}", a.max);
        }
        s
    }
}
