//! Training corpus generation: exhaustive enumeration of short derivations,
//! rounds of per-key downsampling and random leaf augmentation, balancing
//! per condition and train/validation/holdout splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{parse_text, DerivationState, Expr, ParseError, RuleId, Symbol, Term};
use crate::rational::{analyze, CanonicalKey, Condition};

/// Replacement subexpressions used by augmentation, without the outer
/// parentheses.
pub const REPLACEMENTS: [&str; 10] = [
    "1 / x",
    "x / ( 1 + x )",
    "x / ( 1 - x )",
    "1 / ( 1 + x )",
    "1 / ( 1 - x )",
    "1 - x",
    "1 + x",
    "x * x",
    "x * ( 1 + x )",
    "x * ( 1 - x )",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Data { path: String, line: usize, message: String },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One expression with its derived identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub expr: Expr,
    pub text: String,
    pub rules: Vec<RuleId>,
    pub key: CanonicalKey,
    /// `None` for zero or undefined functions.
    pub condition: Option<Condition>,
}

impl CorpusRecord {
    pub fn new(expr: Expr) -> Self {
        let analysis = analyze(&expr);
        CorpusRecord {
            text: expr.to_string(),
            rules: expr.to_rules(),
            key: analysis.key,
            condition: analysis.powers.condition(),
            expr,
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn row(&self) -> RecordRow {
        RecordRow {
            expr: self.text.clone(),
            rules: Some(self.rules.clone()),
            key: Some(self.key.clone()),
            c0: self.condition.map(|c| c.c0),
            cinf: self.condition.map(|c| c.cinf),
            m: self.condition.map(Condition::m),
            len: Some(self.rules.len()),
        }
    }
}

/// On-disk form. Only `expr` is required when reading; the rest is
/// recomputed and, when present, checked.
#[derive(Serialize, Deserialize)]
struct RecordRow {
    expr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rules: Option<Vec<RuleId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<CanonicalKey>,
    c0: Option<i32>,
    cinf: Option<i32>,
    m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    len: Option<usize>,
}

pub fn write_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&r.row()).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |message: String| CorpusError::Data {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let row: RecordRow = serde_json::from_str(&line).map_err(|e| data_err(e.to_string()))?;
        let expr = parse_text(&row.expr).map_err(|e: ParseError| data_err(e.to_string()))?;
        let record = CorpusRecord::new(expr);
        if row.rules.as_ref().is_some_and(|r| *r != record.rules) {
            return Err(data_err("rules do not match expr".into()));
        }
        if row.key.as_ref().is_some_and(|k| *k != record.key) {
            return Err(data_err("key does not match expr".into()));
        }
        if let (Some(c0), Some(cinf)) = (row.c0, row.cinf) {
            if record.condition != Some(Condition::new(c0, cinf)) {
                return Err(data_err("c0/cinf do not match expr".into()));
            }
        }
        out.push(record);
    }
    Ok(out)
}

fn min_rules(symbol: Symbol) -> usize {
    match symbol {
        Symbol::O => 3,
        Symbol::S => 2,
        Symbol::T => 1,
    }
}

/// Every complete derivation with at most `max_rules` rules, in
/// lexicographic order of rule ids.
pub fn enumerate(max_rules: usize) -> Vec<Vec<RuleId>> {
    fn go(state: &DerivationState, need: usize, max: usize, out: &mut Vec<Vec<RuleId>>) {
        let Some(top) = state.pending() else {
            out.push(state.rules().to_vec());
            return;
        };
        for rule in RuleId::ALL.into_iter().filter(|r| r.lhs() == top) {
            // cheapest completion of the symbols still pending after this rule
            let need = need - min_rules(top) + rule.rhs_nonterminals().iter().map(|&s| min_rules(s)).sum::<usize>();
            if state.len() + 1 + need > max {
                continue;
            }
            let mut next = state.clone();
            next.apply(rule).expect("rule matches the pending symbol");
            go(&next, need, max, out);
        }
    }
    let mut out = Vec::new();
    let start = DerivationState::new(max_rules.max(1));
    go(&start, min_rules(Symbol::O), max_rules, &mut out);
    out
}

/// Size of the derivation space with at most `max_rules` rules, counting
/// partial trees, by the recursion
/// `N_S(i) = 4 * sum_p N_S(p) N_T(i-1-p) + N_T(i-1)`,
/// `N_T(i) = N_S(i-1) + 2`, `N_S(0) = N_T(0) = 1`, `N_O(i) = N_S(i-1)`.
pub fn space_size(max_rules: usize) -> BigUint {
    assert!(max_rules >= 1, "space size needs at least one rule");
    let n = max_rules - 1;
    let mut ns: Vec<BigUint> = vec![BigUint::one()];
    let mut nt: Vec<BigUint> = vec![BigUint::one()];
    for i in 1..=n {
        let mut s = BigUint::from(0u32);
        for p in 0..i {
            s += &ns[p] * &nt[i - 1 - p];
        }
        s = s * 4u32 + &nt[i - 1];
        nt.push(&ns[i - 1] + 2u32);
        ns.push(s);
    }
    ns[n].clone()
}

/// `digits` significant figures in scientific notation, e.g. `2.2e27`.
pub fn scientific(n: &BigUint, digits: usize) -> String {
    let s = n.to_string();
    if s.len() <= digits {
        return format!("{s}e0");
    }
    // round half up on the decimal string
    let head: BigUint = s[..digits].parse().expect("digits");
    let next = s.as_bytes()[digits] - b'0';
    let mut head = if next >= 5 { head + 1u32 } else { head };
    let mut exp = s.len() - 1;
    if head.to_string().len() > digits {
        head /= 10u32;
        exp += 1;
    }
    let h = head.to_string();
    if digits == 1 {
        format!("{h}e{exp}")
    } else {
        format!("{}.{}e{exp}", &h[..1], h[1..].trim_end_matches('0')).replace(".e", "e")
    }
}

fn shortest_order(a: &CorpusRecord, b: &CorpusRecord) -> std::cmp::Ordering {
    a.text.len().cmp(&b.text.len()).then_with(|| a.text.cmp(&b.text))
}

/// Keeps the `per_key` shortest texts of each canonical-key group (ties by
/// text, then input order). Survivors stay in input order.
pub fn downsample(records: Vec<CorpusRecord>, per_key: usize) -> Vec<CorpusRecord> {
    let mut groups: HashMap<&CanonicalKey, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(&r.key).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| shortest_order(&records[a], &records[b]).then(a.cmp(&b)));
        for &i in members.iter().take(per_key) {
            keep[i] = true;
        }
    }
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Drops later records whose text already occurred.
pub fn dedup_by_text(records: Vec<CorpusRecord>) -> Vec<CorpusRecord> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.text.clone())).collect()
}

fn replace_leaf_in_expr(expr: &mut Expr, index: &mut usize, with: &Term) -> bool {
    match expr {
        Expr::Binary(_, lhs, rhs) => replace_leaf_in_expr(lhs, index, with) || replace_leaf_in_term(rhs, index, with),
        Expr::Term(t) => replace_leaf_in_term(t, index, with),
    }
}

fn replace_leaf_in_term(term: &mut Term, index: &mut usize, with: &Term) -> bool {
    match term {
        Term::Paren(inner) => replace_leaf_in_expr(inner, index, with),
        Term::X | Term::One => {
            if *index == 0 {
                *term = with.clone();
                true
            } else {
                *index -= 1;
                false
            }
        }
    }
}

/// Replaces the `leaf`-th `x`/`1` (left to right) by `( replacement )`.
pub fn replace_leaf(expr: &Expr, leaf: usize, replacement: &Expr) -> Expr {
    let mut out = expr.clone();
    let with = Term::Paren(Box::new(replacement.clone()));
    let mut index = leaf;
    assert!(
        replace_leaf_in_expr(&mut out, &mut index, &with),
        "leaf index out of range"
    );
    out
}

fn replacement_exprs() -> Vec<Expr> {
    REPLACEMENTS
        .iter()
        .map(|s| parse_text(s).expect("replacement parses"))
        .collect()
}

/// Each record followed by `children` random single-leaf replacements.
pub fn augment<R: Rng + ?Sized>(records: &[CorpusRecord], children: usize, rng: &mut R) -> Vec<CorpusRecord> {
    let replacements = replacement_exprs();
    let mut drafts = Vec::with_capacity(records.len() * (children + 1));
    for r in records {
        drafts.push(None);
        let leaves = r.expr.leaf_count();
        for _ in 0..children {
            let leaf = rng.random_range(0..leaves);
            let rep = &replacements[rng.random_range(0..replacements.len())];
            drafts.push(Some(replace_leaf(&r.expr, leaf, rep)));
        }
    }
    let per = children + 1;
    drafts
        .into_par_iter()
        .enumerate()
        .map(|(i, d)| match d {
            None => records[i / per].clone(),
            Some(expr) => CorpusRecord::new(expr),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub max_rules: usize,
    pub rounds: usize,
    pub per_key: usize,
    pub children: usize,
    pub per_condition_cap: usize,
    pub holdout_per_condition: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Conditions with `m <= in_sample_max_m` are balanced and split.
    pub in_sample_max_m: u32,
    /// Complexities that get out-of-sample holdout pools.
    pub out_of_sample_m: Vec<u32>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig::desk()
    }
}

impl CorpusConfig {
    pub fn desk() -> Self {
        CorpusConfig {
            max_rules: 10,
            rounds: 4,
            per_key: 20,
            children: 5,
            per_condition_cap: 40,
            holdout_per_condition: 5,
            train_fraction: 0.7,
            validation_fraction: 0.1,
            in_sample_max_m: 4,
            out_of_sample_m: vec![5, 6],
            seed: 0,
        }
    }

    pub fn full() -> Self {
        CorpusConfig {
            per_condition_cap: 1000,
            holdout_per_condition: 50,
            ..CorpusConfig::desk()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub median: f64,
    pub max: usize,
    pub count: usize,
    /// Space size at the maximum length, exact.
    pub space_size: String,
    pub space_size_sci: String,
}

impl LengthStats {
    pub fn of(records: &[CorpusRecord]) -> Option<LengthStats> {
        let mut lens: Vec<usize> = records.iter().map(CorpusRecord::len).collect();
        lens.sort_unstable();
        let (&min, &max) = (lens.first()?, lens.last()?);
        let n = lens.len();
        let median = if n % 2 == 1 {
            lens[n / 2] as f64
        } else {
            (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
        };
        let space = space_size(max);
        Some(LengthStats {
            min,
            median,
            max,
            count: n,
            space_size: space.to_string(),
            space_size_sci: scientific(&space, 2),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortPool {
    pub c0: i32,
    pub cinf: i32,
    pub available: usize,
    pub wanted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub config: CorpusConfig,
    pub enumerated: usize,
    /// Pool size and median rule length after each augmentation round.
    pub rounds: Vec<RoundStats>,
    pub final_pool: usize,
    pub splits: BTreeMap<String, Option<LengthStats>>,
    /// Conditions whose pool could not reach the requested count.
    pub short_pools: Vec<ShortPool>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub pool: usize,
    pub median_len: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<CorpusRecord>,
    pub validation: Vec<CorpusRecord>,
    /// Holdouts for the in-sample conditions.
    pub holdout: Vec<CorpusRecord>,
    /// Out-of-sample holdouts keyed by complexity.
    pub holdout_oos: BTreeMap<u32, Vec<CorpusRecord>>,
    pub stats: CorpusStats,
}

impl Dataset {
    /// Splits by file name, in write order.
    pub fn files(&self) -> Vec<(String, &[CorpusRecord])> {
        let mut out = vec![
            ("train.jsonl".to_string(), &self.train[..]),
            ("validation.jsonl".to_string(), &self.validation[..]),
            (
                format!("holdout_m{}.jsonl", self.stats.config.in_sample_max_m),
                &self.holdout[..],
            ),
        ];
        for (m, recs) in &self.holdout_oos {
            out.push((format!("holdout_m{m}.jsonl"), &recs[..]));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        for (name, records) in self.files() {
            write_jsonl(&dir.join(name), records)?;
        }
        let path = dir.join("stats.json");
        let json = serde_json::to_string_pretty(&self.stats).expect("stats serialize");
        std::fs::write(&path, json + "\n").map_err(|e| CorpusError::io(&path, e))
    }
}

fn condition_seed(seed: u64, c: Condition) -> u64 {
    // distinct odd multipliers keep per-condition streams apart
    seed ^ (c.c0 as i64 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (c.cinf as i64 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Up to `k` records with distinct keys, none of which is in `exclude`.
fn unique_key_sample(pool: &[CorpusRecord], k: usize, exclude: &HashSet<&CanonicalKey>) -> Vec<CorpusRecord> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in pool {
        if out.len() == k {
            break;
        }
        if !exclude.contains(&r.key) && seen.insert(&r.key) {
            out.push(r.clone());
        }
    }
    out
}

pub fn build_pool(config: &CorpusConfig, rng: &mut ChaCha8Rng) -> (Vec<CorpusRecord>, usize, Vec<RoundStats>) {
    let initial: Vec<CorpusRecord> = enumerate(config.max_rules)
        .into_par_iter()
        .map(|rules| CorpusRecord::new(Expr::from_complete_rules(&rules).expect("enumerated derivations are complete")))
        .collect();
    let enumerated = initial.len();
    let mut pool = initial;
    let mut rounds = Vec::new();
    for _ in 0..config.rounds {
        pool = downsample(pool, config.per_key);
        pool = dedup_by_text(augment(&pool, config.children, rng));
        rounds.push(RoundStats {
            pool: pool.len(),
            median_len: LengthStats::of(&pool).map_or(0.0, |s| s.median),
        });
    }
    (downsample(pool, config.per_key), enumerated, rounds)
}

pub fn build_dataset(config: &CorpusConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (pool, enumerated, rounds) = build_pool(config, &mut rng);
    let final_pool = pool.len();

    let mut by_condition: BTreeMap<Condition, Vec<CorpusRecord>> = BTreeMap::new();
    for r in pool {
        if let Some(c) = r.condition {
            by_condition.entry(c).or_default().push(r);
        }
    }
    for members in by_condition.values_mut() {
        members.sort_by(shortest_order);
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut holdout = Vec::new();
    let mut short_pools = Vec::new();
    for c in Condition::up_to_complexity(config.in_sample_max_m) {
        let members = by_condition.get(&c).map_or(&[][..], Vec::as_slice);
        if members.len() < config.per_condition_cap {
            short_pools.push(ShortPool {
                c0: c.c0,
                cinf: c.cinf,
                available: members.len(),
                wanted: config.per_condition_cap,
            });
        }
        let mut chosen: Vec<CorpusRecord> = members.iter().take(config.per_condition_cap).cloned().collect();
        let mut crng = ChaCha8Rng::seed_from_u64(condition_seed(config.seed, c));
        chosen.shuffle(&mut crng);
        let n = chosen.len();
        let n_train = (n as f64 * config.train_fraction).floor() as usize;
        let n_val = ((n as f64 * config.validation_fraction).floor() as usize).min(n - n_train);
        let rest = chosen.split_off(n_train + n_val);
        let val = chosen.split_off(n_train);
        let seen: HashSet<&CanonicalKey> = chosen.iter().chain(&val).map(|r| &r.key).collect();
        // the capped remainder first, then the longer expressions beyond the cap
        let mut tail: Vec<CorpusRecord> = members.iter().skip(config.per_condition_cap).cloned().collect();
        tail.shuffle(&mut crng);
        let candidates: Vec<CorpusRecord> = rest.into_iter().chain(tail).collect();
        let held = unique_key_sample(&candidates, config.holdout_per_condition, &seen);
        if held.len() < config.holdout_per_condition {
            short_pools.push(ShortPool {
                c0: c.c0,
                cinf: c.cinf,
                available: held.len(),
                wanted: config.holdout_per_condition,
            });
        }
        holdout.extend(held);
        train.extend(chosen);
        validation.extend(val);
    }

    let mut holdout_oos = BTreeMap::new();
    for &m in &config.out_of_sample_m {
        let mut out = Vec::new();
        for c in Condition::with_complexity(m)
            .into_iter()
            .collect::<std::collections::BTreeSet<_>>()
        {
            let members = by_condition.get(&c).map_or(&[][..], Vec::as_slice);
            let mut shuffled = members.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(condition_seed(config.seed, c)));
            let held = unique_key_sample(&shuffled, config.holdout_per_condition, &HashSet::new());
            if held.len() < config.holdout_per_condition {
                short_pools.push(ShortPool {
                    c0: c.c0,
                    cinf: c.cinf,
                    available: held.len(),
                    wanted: config.holdout_per_condition,
                });
            }
            out.extend(held);
        }
        holdout_oos.insert(m, out);
    }

    let mut splits = BTreeMap::new();
    splits.insert("train".to_string(), LengthStats::of(&train));
    splits.insert("validation".to_string(), LengthStats::of(&validation));
    splits.insert(
        format!("holdout_m{}", config.in_sample_max_m),
        LengthStats::of(&holdout),
    );
    for (m, recs) in &holdout_oos {
        splits.insert(format!("holdout_m{m}"), LengthStats::of(recs));
    }
    let stats = CorpusStats {
        config: config.clone(),
        enumerated,
        rounds,
        final_pool,
        splits,
        short_pools,
        note: "augmented expressions are deduplicated by text before each downsampling".into(),
    };
    Dataset {
        train,
        validation,
        holdout,
        holdout_oos,
        stats,
    }
}

/// Converts the integer count to `f64`, saturating at infinity.
pub fn to_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}
