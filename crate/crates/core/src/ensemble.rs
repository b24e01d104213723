//! Fusion of member probability vectors: summation (mean) and
//! concatenation through a learned 4N -> 4 multinomial-logistic combiner.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Stance;
use crate::error::{Error, Result};
use crate::mlp::{argmax, softmax, ProbabilityVector, OUTPUT_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    pub members: Vec<ProbabilityVector>,
    pub fused: ProbabilityVector,
    pub decided: Stance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionRule {
    Summation,
    Concatenation,
}

impl std::str::FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summation" | "sum" => Ok(FusionRule::Summation),
            "concatenation" | "concat" => Ok(FusionRule::Concatenation),
            other => Err(Error::Config(format!("unknown fusion rule {other:?}"))),
        }
    }
}

impl FusionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionRule::Summation => "summation",
            FusionRule::Concatenation => "concatenation",
        }
    }
}

fn decide(p: &[f64; OUTPUT_DIM]) -> Stance {
    Stance::from_index(argmax(p)).unwrap()
}

/// Elementwise mean of the member probabilities.
pub fn fuse_summation(members: &[ProbabilityVector]) -> Result<FusedOutput> {
    if members.is_empty() {
        return Err(Error::Argument("fusion needs at least one member".into()));
    }
    let mut sum = [0.0; OUTPUT_DIM];
    for m in members {
        for (s, p) in sum.iter_mut().zip(m.values()) {
            *s += p;
        }
    }
    let n = members.len() as f64;
    let mean = sum.map(|s| s / n);
    Ok(FusedOutput {
        members: members.to_vec(),
        fused: ProbabilityVector::new(mean)?,
        decided: decide(&mean),
    })
}

/// Linear map from the concatenated member outputs (4N) to 4 logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatCombiner {
    n_members: usize,
    /// row-major 4 x 4N
    weights: Vec<f64>,
    bias: [f64; OUTPUT_DIM],
}

impl ConcatCombiner {
    pub fn new(n_members: usize, weights: Vec<f64>, bias: [f64; OUTPUT_DIM]) -> Result<Self> {
        if n_members == 0 || weights.len() != OUTPUT_DIM * OUTPUT_DIM * n_members {
            return Err(Error::Argument("combiner weights must be 4 x 4N".into()));
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::Argument("non-finite combiner weight".into()));
        }
        Ok(Self {
            n_members,
            weights,
            bias,
        })
    }

    /// `scale` times one identity block per member, zero bias.
    pub fn block_identity(n_members: usize, scale: f64) -> Self {
        let width = OUTPUT_DIM * n_members;
        let mut weights = vec![0.0; OUTPUT_DIM * width];
        for k in 0..OUTPUT_DIM {
            for m in 0..n_members {
                weights[k * width + m * OUTPUT_DIM + k] = scale;
            }
        }
        Self {
            n_members,
            weights,
            bias: [0.0; OUTPUT_DIM],
        }
    }

    pub fn input_dim(&self) -> usize {
        OUTPUT_DIM * self.n_members
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64; OUTPUT_DIM] {
        &self.bias
    }

    fn logits(&self, x: &[f64]) -> [f64; OUTPUT_DIM] {
        let width = self.input_dim();
        let mut z = self.bias;
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.weights[k * width..(k + 1) * width];
            *zk += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }

    /// Same map with input blocks reordered: new block i is old block `order[i]`.
    pub fn permute_blocks(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_members {
            return Err(Error::Argument("permutation length != member count".into()));
        }
        let width = self.input_dim();
        let mut weights = vec![0.0; self.weights.len()];
        for k in 0..OUTPUT_DIM {
            for (new, &old) in order.iter().enumerate() {
                for c in 0..OUTPUT_DIM {
                    weights[k * width + new * OUTPUT_DIM + c] =
                        self.weights[k * width + old * OUTPUT_DIM + c];
                }
            }
        }
        Self::new(self.n_members, weights, self.bias)
    }

    /// Text form: a `# concat-combiner members=N` header, four weight rows,
    /// then the bias row. Values use shortest round-trip formatting.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# concat-combiner members={}", self.n_members)?;
        let width = self.input_dim();
        let line = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for k in 0..OUTPUT_DIM {
            writeln!(w, "{}", line(&self.weights[k * width..(k + 1) * width]))?;
        }
        writeln!(w, "{}", line(&self.bias))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("combiner file: {m}"));
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| bad(&e.to_string()))?;
        let n: usize = lines
            .first()
            .and_then(|h| h.strip_prefix("# concat-combiner members="))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad("missing header"))?;
        if lines.len() != 1 + OUTPUT_DIM + 1 {
            return Err(bad("expected four weight rows and one bias row"));
        }
        let parse = |l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| bad("non-numeric value")))
                .collect()
        };
        let mut weights = Vec::new();
        for l in &lines[1..=OUTPUT_DIM] {
            let row = parse(l)?;
            if row.len() != OUTPUT_DIM * n {
                return Err(bad("weight row has the wrong width"));
            }
            weights.extend(row);
        }
        let bias: [f64; OUTPUT_DIM] = parse(&lines[OUTPUT_DIM + 1])?
            .try_into()
            .map_err(|_| bad("bias row must have four values"))?;
        Self::new(n, weights, bias)
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
}

fn concat(members: &[ProbabilityVector]) -> Vec<f64> {
    members.iter().flat_map(|p| p.values().iter().copied()).collect()
}

pub fn fuse_concatenation(
    members: &[ProbabilityVector],
    combiner: &ConcatCombiner,
) -> Result<FusedOutput> {
    if members.len() != combiner.n_members {
        return Err(Error::Argument(format!(
            "combiner expects {} inputs, got {} members ({} values)",
            combiner.input_dim(),
            members.len(),
            OUTPUT_DIM * members.len()
        )));
    }
    let p = softmax(&combiner.logits(&concat(members)));
    Ok(FusedOutput {
        members: members.to_vec(),
        fused: ProbabilityVector::new(p)?,
        decided: decide(&p),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

/// Combiner initial state: block identity at this scale, so a fresh
/// combiner decides like the summation rule.
const INIT_SCALE: f64 = 4.0;

/// Fits a multinomial-logistic combiner on validation outputs by full-batch
/// gradient descent. Returns the combiner and warnings for stance classes
/// absent from `labels` (the fit still proceeds).
pub fn fit_concat_combiner(
    member_probs: &[Vec<ProbabilityVector>],
    labels: &[Stance],
    config: &CombinerConfig,
) -> Result<(ConcatCombiner, Vec<String>)> {
    if member_probs.is_empty() || member_probs.len() != labels.len() {
        return Err(Error::Argument(
            "combiner fit needs one label per validation example".into(),
        ));
    }
    let n = member_probs[0].len();
    if n == 0 || member_probs.iter().any(|m| m.len() != n) {
        return Err(Error::Argument("every example needs the same member count".into()));
    }
    let warnings: Vec<String> = Stance::ALL
        .iter()
        .filter(|s| !labels.contains(s))
        .map(|s| format!("class {s} absent from combiner validation data"))
        .collect();

    let mut c = ConcatCombiner::block_identity(n, INIT_SCALE);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for w in c.weights.iter_mut() {
        *w += rng.gen_range(-1e-3..1e-3);
    }
    let xs: Vec<Vec<f64>> = member_probs.iter().map(|m| concat(m)).collect();
    let width = c.input_dim();
    let inv = 1.0 / xs.len() as f64;
    let mut gw = vec![0.0; c.weights.len()];
    for _ in 0..config.epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = [0.0; OUTPUT_DIM];
        for (x, y) in xs.iter().zip(labels) {
            let mut d = softmax(&c.logits(x));
            d[y.index()] -= 1.0;
            for k in 0..OUTPUT_DIM {
                gb[k] += d[k] * inv;
                for (g, v) in gw[k * width..(k + 1) * width].iter_mut().zip(x) {
                    *g += d[k] * v * inv;
                }
            }
        }
        for (w, g) in c.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * (g + 2.0 * config.l2_lambda * *w);
        }
        for (b, g) in c.bias.iter_mut().zip(&gb) {
            *b -= config.learning_rate * g;
        }
    }
    if c.weights.iter().chain(&c.bias).any(|w| !w.is_finite()) {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok((c, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberRef {
    /// Pipeline name; also names the model.
    pub pipeline: String,
    pub model_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub name: String,
    pub members: Vec<MemberRef>,
    pub rule: FusionRule,
    pub combiner: Option<ConcatCombiner>,
    pub combiner_path: Option<PathBuf>,
    /// Degenerate-fit warnings and similar notes.
    pub metadata: Vec<String>,
}

impl EnsembleSpec {
    pub fn new(
        name: impl Into<String>,
        members: Vec<MemberRef>,
        rule: FusionRule,
        combiner: Option<ConcatCombiner>,
    ) -> Result<Self> {
        let name = name.into();
        if members.is_empty() {
            return Err(Error::Config(format!("ensemble {name} has no members")));
        }
        match (&combiner, rule) {
            (None, FusionRule::Concatenation) => {
                return Err(Error::Config(format!(
                    "ensemble {name}: concatenation rule needs a fitted combiner"
                )))
            }
            (Some(c), FusionRule::Concatenation) if c.input_dim() != OUTPUT_DIM * members.len() => {
                return Err(Error::Config(format!(
                    "ensemble {name}: combiner input {} != 4 x {} members",
                    c.input_dim(),
                    members.len()
                )))
            }
            _ => {}
        }
        Ok(Self {
            name,
            members,
            rule,
            combiner,
            combiner_path: None,
            metadata: Vec::new(),
        })
    }

    pub fn fuse(&self, member_probs: &[ProbabilityVector]) -> Result<FusedOutput> {
        match (self.rule, &self.combiner) {
            (FusionRule::Concatenation, Some(c)) => fuse_concatenation(member_probs, c),
            _ => fuse_summation(member_probs),
        }
    }
}

/// Member pipelines of the three-model headline ensemble, in order.
pub const HEADLINE_MEMBERS: [&str; 3] = ["baseline", "manual", "micc"];

/// The baseline + manual-keyword + MICC-keyword ensemble. `available`
/// maps pipeline names to trained model files.
pub fn headline_ensemble(
    available: &std::collections::BTreeMap<String, PathBuf>,
    rule: FusionRule,
    combiner: Option<ConcatCombiner>,
) -> Result<EnsembleSpec> {
    let members = HEADLINE_MEMBERS
        .iter()
        .map(|name| {
            available
                .get(*name)
                .map(|p| MemberRef {
                    pipeline: name.to_string(),
                    model_path: p.clone(),
                })
                .ok_or_else(|| Error::Config(format!("headline ensemble member {name} is missing")))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleSpec::new("headline", members, rule, combiner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn pv(p: [f64; 4]) -> ProbabilityVector {
        ProbabilityVector::new(p).unwrap()
    }

    #[test]
    fn summation_examples() {
        let one = pv([0.1, 0.6, 0.2, 0.1]);
        let f = fuse_summation(&[one]).unwrap();
        assert_eq!(f.fused, one);
        assert_eq!(f.decided, Stance::Disagree);

        let f = fuse_summation(&[pv([1.0, 0.0, 0.0, 0.0]), pv([0.0, 1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(f.fused.values(), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(f.decided, Stance::Agree);

        let a = [0.2, 0.3, 0.4, 0.1];
        let b = [0.5, 0.1, 0.1, 0.3];
        let c = [0.1, 0.1, 0.1, 0.7];
        let f = fuse_summation(&[pv(a), pv(b), pv(c)]).unwrap();
        let want = [0.8 / 3.0, 0.5 / 3.0, 0.6 / 3.0, 1.1 / 3.0];
        for k in 0..4 {
            assert!((f.fused.values()[k] - want[k]).abs() < 1e-15);
        }
        assert_eq!(f.decided, Stance::Unrelated);
        assert!(fuse_summation(&[]).is_err());
    }

    #[test]
    fn identical_members_fuse_to_themselves() {
        let p = pv([0.3, 0.3, 0.2, 0.2]);
        let f = fuse_summation(&[p, p, p]).unwrap();
        // 3 * 0.3 / 3 may not round-trip; compare at ulp scale
        for k in 0..4 {
            assert!((f.fused.values()[k] - p.values()[k]).abs() <= f64::EPSILON);
        }
        let f = fuse_summation(&[p, p]).unwrap();
        assert_eq!(f.fused, p);
    }

    #[test]
    fn concatenation_examples() {
        let member = pv([0.1, 0.2, 0.6, 0.1]);
        let id = ConcatCombiner::block_identity(1, 3.0);
        assert_eq!(fuse_concatenation(&[member], &id).unwrap().decided, Stance::Discuss);

        let two = [member, member];
        assert!(fuse_concatenation(&two, &id).is_err());

        // hand-set 4 -> 4 map
        let w = vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 1.0, //
            1.0, 1.0, 1.0, 1.0,
        ];
        let c = ConcatCombiner::new(1, w, [0.0, 0.5, 0.0, -1.0]).unwrap();
        let x = [0.1, 0.2, 0.6, 0.1];
        let z: [f64; 4] = [0.1, 0.4 + 0.5, -0.6 + 0.1, 1.0 - 1.0];
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        let f = fuse_concatenation(&[pv(x)], &c).unwrap();
        for k in 0..4 {
            assert!((f.fused.values()[k] - z[k].exp() / s).abs() < 1e-12);
        }
        assert_eq!(f.decided, Stance::Disagree);
    }

    #[test]
    fn block_permutation_keeps_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..4 * 12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = ConcatCombiner::new(3, w, [0.1, -0.2, 0.0, 0.3]).unwrap();
        let order = [2, 0, 1];
        let permuted = c.permute_blocks(&order).unwrap();
        for _ in 0..50 {
            let members: Vec<ProbabilityVector> = (0..3)
                .map(|_| {
                    let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
                    let s: f64 = raw.iter().sum();
                    pv(raw.map(|r| r / s))
                })
                .collect();
            let reordered: Vec<ProbabilityVector> = order.iter().map(|&i| members[i]).collect();
            let a = fuse_concatenation(&members, &c).unwrap();
            let b = fuse_concatenation(&reordered, &permuted).unwrap();
            assert_eq!(a.decided, b.decided);
        }
    }

    /// Noisy but mostly right member outputs on a fixed toy set.
    fn toy_validation(seed: u64, n: usize) -> (Vec<ProbabilityVector>, Vec<Stance>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.gen_range(0..4);
            let mut raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            raw[y] += 1.2;
            let s: f64 = raw.iter().sum();
            probs.push(pv(raw.map(|r| r / s)));
            labels.push(Stance::from_index(y).unwrap());
        }
        (probs, labels)
    }

    fn accuracy(decided: &[Stance], labels: &[Stance]) -> f64 {
        decided.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }

    #[test]
    fn single_member_combiner_not_worse() {
        let (probs, labels) = toy_validation(11, 200);
        let member_acc = accuracy(&probs.iter().map(|p| p.decide()).collect::<Vec<_>>(), &labels);
        let inputs: Vec<Vec<ProbabilityVector>> = probs.iter().map(|p| vec![*p]).collect();
        let (c, warnings) = fit_concat_combiner(&inputs, &labels, &CombinerConfig::default()).unwrap();
        assert!(warnings.is_empty());
        let decided: Vec<Stance> = inputs
            .iter()
            .map(|m| fuse_concatenation(m, &c).unwrap().decided)
            .collect();
        let acc = accuracy(&decided, &labels);
        assert!(acc >= member_acc, "combiner {acc} < member {member_acc}");
    }

    #[test]
    fn duplicate_members_match_single() {
        let (probs, labels) = toy_validation(12, 200);
        let single: Vec<Vec<ProbabilityVector>> = probs.iter().map(|p| vec![*p]).collect();
        let triple: Vec<Vec<ProbabilityVector>> = probs.iter().map(|p| vec![*p; 3]).collect();
        let cfg = CombinerConfig::default();
        let (c1, _) = fit_concat_combiner(&single, &labels, &cfg).unwrap();
        let (c3, _) = fit_concat_combiner(&triple, &labels, &cfg).unwrap();
        let acc = |inputs: &[Vec<ProbabilityVector>], c: &ConcatCombiner| {
            let d: Vec<Stance> = inputs
                .iter()
                .map(|m| fuse_concatenation(m, c).unwrap().decided)
                .collect();
            accuracy(&d, &labels)
        };
        assert_eq!(acc(&single, &c1), acc(&triple, &c3));
    }

    #[test]
    fn combiner_fit_is_seeded_and_warns() {
        let (probs, labels) = toy_validation(13, 40);
        let inputs: Vec<Vec<ProbabilityVector>> = probs.iter().map(|p| vec![*p, *p]).collect();
        let cfg = CombinerConfig::default();
        let a = fit_concat_combiner(&inputs, &labels, &cfg).unwrap();
        let b = fit_concat_combiner(&inputs, &labels, &cfg).unwrap();
        assert_eq!(a, b);

        let only_agree = vec![Stance::Agree; inputs.len()];
        let (_, warnings) = fit_concat_combiner(&inputs, &only_agree, &cfg).unwrap();
        assert_eq!(warnings.len(), 3);
    }

    #[test]
    fn combiner_text_round_trip() {
        let (probs, labels) = toy_validation(14, 30);
        let inputs: Vec<Vec<ProbabilityVector>> = probs.iter().map(|p| vec![*p, *p]).collect();
        let (c, _) = fit_concat_combiner(&inputs, &labels, &CombinerConfig::default()).unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(ConcatCombiner::read_from(&buf[..]).unwrap(), c);
        assert!(ConcatCombiner::read_from(&b"# concat-combiner members=2\n1 2\n"[..]).is_err());
    }

    #[test]
    fn headline_spec() {
        let mut models = BTreeMap::new();
        for m in HEADLINE_MEMBERS {
            models.insert(m.to_string(), PathBuf::from(format!("{m}.model")));
        }
        let spec = headline_ensemble(&models, FusionRule::Summation, None).unwrap();
        assert_eq!(spec.members.len(), 3);
        let names: Vec<&str> = spec.members.iter().map(|m| m.pipeline.as_str()).collect();
        assert_eq!(names, HEADLINE_MEMBERS);

        assert!(matches!(
            headline_ensemble(&models, FusionRule::Concatenation, None),
            Err(Error::Config(_))
        ));
        models.remove("baseline");
        let err = headline_ensemble(&models, FusionRule::Summation, None).unwrap_err();
        assert!(err.to_string().contains("baseline"));
    }

    #[test]
    fn summation_permutation_invariant() {
        let (probs, _) = toy_validation(15, 3);
        let a = fuse_summation(&probs).unwrap();
        let b = fuse_summation(&[probs[2], probs[0], probs[1]]).unwrap();
        assert_eq!(a.decided, b.decided);
        for k in 0..4 {
            assert!((a.fused.values()[k] - b.fused.values()[k]).abs() < 1e-15);
        }
    }
}
