//! Metrics for conditional generators: success rate, mean L1 distance of
//! achieved leading powers, syntactic and semantic novelty, per-condition
//! grids and their aggregation.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;
use crate::grammar::{sample_expression, Sample};
use crate::policy::{Policy, PolicyError};
use crate::rational::{analyze, CanonicalKey, Condition};

/// L1 distance charged for a generation without defined leading powers.
pub const L1_SENTINEL: u32 = 18;

/// One generated expression, reduced to what the metrics need.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generation {
    /// `None` when the derivation did not complete.
    pub text: Option<String>,
    pub key: Option<CanonicalKey>,
    pub achieved: Option<Condition>,
}

impl Generation {
    pub fn incomplete() -> Self {
        Generation {
            text: None,
            key: None,
            achieved: None,
        }
    }

    pub fn from_sample(sample: &Sample) -> Self {
        match sample.expr() {
            None => Generation::incomplete(),
            Some(expr) => {
                let a = analyze(expr);
                Generation {
                    text: Some(expr.to_string()),
                    achieved: a.powers.condition(),
                    key: Some(a.key),
                }
            }
        }
    }

    pub fn l1(&self, desired: Condition) -> u32 {
        self.achieved.map_or(L1_SENTINEL, |c| c.l1(desired))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationBatch {
    pub condition: Condition,
    pub items: Vec<Generation>,
}

impl GenerationBatch {
    pub fn k(&self) -> usize {
        self.items.len()
    }

    fn matching(&self) -> impl Iterator<Item = &Generation> {
        self.items.iter().filter(|g| g.achieved == Some(self.condition))
    }
}

/// Texts and keys of the training set.
#[derive(Clone, Debug, Default)]
pub struct TrainingIndex {
    texts: HashSet<String>,
    keys: HashSet<CanonicalKey>,
}

impl TrainingIndex {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a CorpusRecord>) -> Self {
        let mut index = TrainingIndex::default();
        for r in records {
            index.texts.insert(r.text.clone());
            index.keys.insert(r.key.clone());
        }
        index
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.texts.contains(text)
    }

    pub fn contains_key(&self, key: &CanonicalKey) -> bool {
        self.keys.contains(key)
    }
}

pub fn success_count(batch: &GenerationBatch) -> usize {
    batch.matching().count()
}

pub fn success_rate(batch: &GenerationBatch) -> f64 {
    if batch.k() == 0 {
        return 0.0;
    }
    success_count(batch) as f64 / batch.k() as f64
}

pub fn mean_l1(batch: &GenerationBatch) -> f64 {
    if batch.k() == 0 {
        return f64::from(L1_SENTINEL);
    }
    let total: u64 = batch.items.iter().map(|g| u64::from(g.l1(batch.condition))).sum();
    total as f64 / batch.k() as f64
}

/// Unique condition-matching texts absent from training, and unique
/// condition-matching keys absent from training.
pub fn novelty_counts(batch: &GenerationBatch, training: &TrainingIndex) -> (usize, usize) {
    let mut texts = HashSet::new();
    let mut keys = HashSet::new();
    for g in batch.matching() {
        let (Some(text), Some(key)) = (&g.text, &g.key) else {
            continue;
        };
        if !training.contains_text(text) {
            texts.insert(text);
        }
        if !training.contains_key(key) {
            keys.insert(key);
        }
    }
    (texts.len(), keys.len())
}

/// Novelty rates: unique novel counts over `k`.
pub fn novelty(batch: &GenerationBatch, training: &TrainingIndex) -> (f64, f64) {
    if batch.k() == 0 {
        return (0.0, 0.0);
    }
    let (s, m) = novelty_counts(batch, training);
    let k = batch.k() as f64;
    (s as f64 / k, m as f64 / k)
}

/// Cumulative unique condition-matching texts and keys after each
/// generation.
pub fn diversity_curve(generations: &[Generation], condition: Condition) -> Vec<(usize, usize)> {
    let mut texts = HashSet::new();
    let mut keys = HashSet::new();
    generations
        .iter()
        .map(|g| {
            if g.achieved == Some(condition) {
                if let (Some(t), Some(k)) = (&g.text, &g.key) {
                    texts.insert(t.clone());
                    keys.insert(k.clone());
                }
            }
            (texts.len(), keys.len())
        })
        .collect()
}

/// Metrics of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub c0: i32,
    pub cinf: i32,
    pub k: usize,
    pub successes: usize,
    pub syntactic_novel: usize,
    pub semantic_novel: usize,
    pub mean_l1: f64,
}

impl CellResult {
    pub fn from_batch(batch: &GenerationBatch, training: &TrainingIndex) -> Self {
        let (syntactic_novel, semantic_novel) = novelty_counts(batch, training);
        CellResult {
            c0: batch.condition.c0,
            cinf: batch.condition.cinf,
            k: batch.k(),
            successes: success_count(batch),
            syntactic_novel,
            semantic_novel,
            mean_l1: mean_l1(batch),
        }
    }

    pub fn condition(&self) -> Condition {
        Condition::new(self.c0, self.cinf)
    }

    fn rate(&self, n: usize) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            n as f64 / self.k as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.rate(self.successes)
    }

    pub fn syntactic_rate(&self) -> f64 {
        self.rate(self.syntactic_novel)
    }

    pub fn semantic_rate(&self) -> f64 {
        self.rate(self.semantic_novel)
    }
}

/// All conditions with `|c0| <= bound` and `|cinf| <= bound`, sorted.
pub fn grid_conditions(bound: i32) -> Vec<Condition> {
    (-bound..=bound)
        .flat_map(|c0| (-bound..=bound).map(move |cinf| Condition::new(c0, cinf)))
        .collect()
}

/// Per-condition stream seed, independent of evaluation order.
pub fn cell_seed(seed: u64, c: Condition) -> u64 {
    let mut h = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for v in [c.c0, c.cinf] {
        h = (h ^ (v as i64 as u64)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Samples `k` expressions for one condition.
pub fn generate_batch<P: Policy + ?Sized>(
    policy: &P,
    condition: Condition,
    k: usize,
    length_limit: usize,
    seed: u64,
) -> Result<GenerationBatch, PolicyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, condition));
    let items = (0..k)
        .map(|_| sample_expression(policy, condition, length_limit, &mut rng).map(|s| Generation::from_sample(&s)))
        .collect::<Result<_, _>>()?;
    Ok(GenerationBatch { condition, items })
}

/// Generates and scores every condition in parallel; results in input
/// order.
pub fn evaluate_grid<P: Policy + Sync + ?Sized>(
    policy: &P,
    conditions: &[Condition],
    k: usize,
    length_limit: usize,
    seed: u64,
    training: &TrainingIndex,
) -> Result<Vec<CellResult>, PolicyError> {
    conditions
        .par_iter()
        .map(|&c| generate_batch(policy, c, k, length_limit, seed).map(|b| CellResult::from_batch(&b, training)))
        .collect()
}

pub fn write_grid_csv<W: Write>(mut out: W, cells: &[CellResult]) -> std::io::Result<()> {
    writeln!(out, "c0,cinf,metric,value")?;
    for c in cells {
        for (name, value) in [
            ("success_rate", c.success_rate()),
            ("mean_l1", c.mean_l1),
            ("syntactic_novelty", c.syntactic_rate()),
            ("semantic_novelty", c.semantic_rate()),
        ] {
            writeln!(out, "{},{},{name},{value}", c.c0, c.cinf)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InSampleSummary {
    pub conditions: usize,
    pub success_rate: f64,
    pub syntactic_novelty: f64,
    pub semantic_novelty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutOfSampleSummary {
    pub conditions: usize,
    pub successes: usize,
    pub syntactic_novel: usize,
    pub semantic_novel: usize,
    pub conditions_with_success: usize,
}

/// One model's row in the generative-model comparison layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub in_sample: InSampleSummary,
    pub out_of_sample: OutOfSampleSummary,
    /// Mean L1 averaged over the cells of each band: "<=4", "5", "6", "7".
    pub mean_l1: BTreeMap<String, Option<f64>>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages over in-sample cells (`m <= in_sample_max_m`), totals over the
/// rest.
pub fn aggregate(model: &str, cells: &[CellResult], in_sample_max_m: u32) -> ModelReport {
    let (ins, oos): (Vec<&CellResult>, Vec<&CellResult>) =
        cells.iter().partition(|c| c.condition().m() <= in_sample_max_m);
    let in_sample = InSampleSummary {
        conditions: ins.len(),
        success_rate: mean(ins.iter().map(|c| c.success_rate())).unwrap_or(0.0),
        syntactic_novelty: mean(ins.iter().map(|c| c.syntactic_rate())).unwrap_or(0.0),
        semantic_novelty: mean(ins.iter().map(|c| c.semantic_rate())).unwrap_or(0.0),
    };
    let out_of_sample = OutOfSampleSummary {
        conditions: oos.len(),
        successes: oos.iter().map(|c| c.successes).sum(),
        syntactic_novel: oos.iter().map(|c| c.syntactic_novel).sum(),
        semantic_novel: oos.iter().map(|c| c.semantic_novel).sum(),
        conditions_with_success: oos.iter().filter(|c| c.successes > 0).count(),
    };
    let mut mean_l1 = BTreeMap::new();
    mean_l1.insert(format!("<={in_sample_max_m}"), mean(ins.iter().map(|c| c.mean_l1)));
    for m in in_sample_max_m + 1..=in_sample_max_m + 3 {
        mean_l1.insert(
            m.to_string(),
            mean(cells.iter().filter(|c| c.condition().m() == m).map(|c| c.mean_l1)),
        );
    }
    ModelReport {
        model: model.to_string(),
        in_sample,
        out_of_sample,
        mean_l1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_text;
    use crate::policy::RandomPolicy;

    fn gen(s: &str) -> Generation {
        let expr = parse_text(s).unwrap();
        Generation::from_sample(&Sample::Complete {
            rules: expr.to_rules(),
            expr,
        })
    }

    fn batch(c: Condition, items: Vec<Generation>) -> GenerationBatch {
        GenerationBatch { condition: c, items }
    }

    fn training(texts: &[&str]) -> TrainingIndex {
        let recs: Vec<CorpusRecord> = texts
            .iter()
            .map(|s| CorpusRecord::new(parse_text(s).unwrap()))
            .collect();
        TrainingIndex::new(&recs)
    }

    #[test]
    fn sentinel_cases() {
        let c = Condition::new(0, 1);
        assert_eq!(success_rate(&batch(c, vec![gen("x + 1"); 3])), 1.0);
        assert_eq!(mean_l1(&batch(c, vec![gen("x + 1")])), 0.0);
        assert_eq!(mean_l1(&batch(c, vec![gen("x + 1"), Generation::incomplete()])), 9.0);
        let only_incomplete = batch(c, vec![Generation::incomplete(); 4]);
        assert_eq!(success_rate(&only_incomplete), 0.0);
        assert_eq!(mean_l1(&only_incomplete), 18.0);
        // zero function
        assert_eq!(gen("x - x").l1(c), 18);
    }

    #[test]
    fn far_condition_is_eighteen_away() {
        let nine = "x * x * x * x * x * x * x * x * x / ( 1 + x * x * x * x * x * x * x * x * x * x * x * x * x * x * x * x * x * x )";
        let g = gen(nine);
        assert_eq!(g.achieved, Some(Condition::new(9, -9)));
        let far = Condition::new(-9, 9);
        assert_eq!(mean_l1(&batch(far, vec![g])), 36.0);
        assert_eq!(Condition::new(0, 0).l1(Condition::new(9, 9)), 18);
    }

    #[test]
    fn novelty_examples() {
        let c = Condition::new(0, 1);
        let t = training(&["x + 1"]);
        assert_eq!(novelty(&batch(c, vec![gen("x + 1")]), &t), (0.0, 0.0));
        let b = batch(c, vec![gen("( 1 ) + x")]);
        assert_eq!(novelty_counts(&b, &t), (1, 0));
        let b = batch(c, vec![gen("x + 1 + 1"); 5]);
        assert_eq!(novelty_counts(&b, &t), (1, 1));
    }

    #[test]
    fn diversity_curves() {
        let c = Condition::new(0, 1);
        let same = vec![gen("x + 1"); 4];
        assert_eq!(diversity_curve(&same, c), vec![(1, 1); 4]);
        let distinct = vec![gen("x + 1"), gen("x + 1 + 1"), gen("( x + 1 )")];
        assert_eq!(diversity_curve(&distinct, c), vec![(1, 1), (2, 2), (3, 2)]);
    }

    #[test]
    fn perfect_model_aggregates_to_full_marks() {
        let cells: Vec<CellResult> = grid_conditions(9)
            .into_iter()
            .map(|c| CellResult {
                c0: c.c0,
                cinf: c.cinf,
                k: 100,
                successes: 100,
                syntactic_novel: 0,
                semantic_novel: 0,
                mean_l1: 0.0,
            })
            .collect();
        assert_eq!(cells.len(), 361);
        let r = aggregate("oracle", &cells, 4);
        assert_eq!(r.in_sample.conditions, 41);
        assert_eq!(r.in_sample.success_rate, 1.0);
        assert_eq!(r.out_of_sample.successes, 100 * 320);
        assert_eq!(r.out_of_sample.conditions_with_success, 320);
        assert_eq!(r.mean_l1["5"], Some(0.0));
    }

    #[test]
    fn grid_is_deterministic_and_order_free() {
        let conds = vec![Condition::new(0, 0), Condition::new(1, -1), Condition::new(-2, 2)];
        let t = TrainingIndex::default();
        let a = evaluate_grid(&RandomPolicy, &conds, 10, 100, 5, &t).unwrap();
        let rev: Vec<Condition> = conds.iter().rev().copied().collect();
        let mut b = evaluate_grid(&RandomPolicy, &rev, 10, 100, 5, &t).unwrap();
        b.reverse();
        assert_eq!(a, b);
        let mut csv = Vec::new();
        write_grid_csv(&mut csv, &a).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
        assert!(text.starts_with("c0,cinf,metric,value\n0,0,success_rate,"));
    }
}
