//! Running a search method over many targets, the per-target results rows
//! and the solved/invalid/hard summary by complexity band.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ea::{evolve, EaConfig};
use crate::grammar::Expr;
use crate::mcts::{run_search, MctsConfig};
use crate::objective::{classify, perturb_with_noise, EvalReport, ObjectiveMode, Status, TargetSpec};
use crate::policy::{Policy, PolicyError, RandomPolicy, TeacherPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mcts,
    MctsPwOnly,
    MctsPw,
    NgMcts,
    Ea,
    EaPw,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mcts,
        Method::MctsPwOnly,
        Method::MctsPw,
        Method::NgMcts,
        Method::Ea,
        Method::EaPw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mcts => "mcts",
            Method::MctsPwOnly => "mcts_pw_only",
            Method::MctsPw => "mcts_pw",
            Method::NgMcts => "ng_mcts",
            Method::Ea => "ea",
            Method::EaPw => "ea_pw",
        }
    }

    pub fn mode(self) -> ObjectiveMode {
        match self {
            Method::Mcts | Method::Ea => ObjectiveMode::DataOnly,
            Method::MctsPwOnly => ObjectiveMode::PwOnly,
            Method::MctsPw | Method::NgMcts | Method::EaPw => ObjectiveMode::DataPlusPw,
        }
    }

    pub fn is_ea(self) -> bool {
        matches!(self, Method::Ea | Method::EaPw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Where MCTS priors come from.
pub enum Prior<'a> {
    Uniform,
    /// Delta on each target's own derivation.
    Teacher,
    Shared(&'a (dyn Policy + Sync)),
    /// One policy per worker thread, e.g. one service connection each.
    PerWorker(&'a (dyn Fn() -> Result<Box<dyn Policy + Send>, PolicyError> + Sync)),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub method: Method,
    pub mcts: MctsConfig,
    pub ea: EaConfig,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            method: Method::NgMcts,
            mcts: MctsConfig::default(),
            ea: EaConfig::default(),
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// Seed of the `index`-th target of a batch.
pub fn target_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One line of a results file. Non-finite errors serialize as null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target: String,
    pub method: String,
    pub m: Option<u32>,
    pub best_expr: Option<String>,
    pub dg_train: Option<f64>,
    pub dg_int: Option<f64>,
    pub dg_ext: Option<f64>,
    pub dp: u32,
    /// `dp` is the sentinel charged for undefined leading powers.
    pub dp_sentinel: bool,
    pub status: Status,
    /// MCTS simulations or EA objective evaluations.
    pub sims: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRow {
    pub fn from_report(
        target: &TargetSpec,
        method: &str,
        best: Option<&Expr>,
        report: &EvalReport,
        sims: usize,
        seed: u64,
    ) -> Self {
        ResultRow {
            target: target.expr.to_string(),
            method: method.to_string(),
            m: Some(target.condition.m()),
            best_expr: best.map(Expr::to_string),
            dg_train: finite(report.dg_train),
            dg_int: finite(report.dg_int),
            dg_ext: finite(report.dg_ext),
            dp: report.dp.value(),
            dp_sentinel: report.dp.is_sentinel(),
            status: report.status,
            sims,
            seed,
            error: None,
        }
    }

    fn failed(target: &Expr, method: &str, seed: u64, error: String) -> Self {
        ResultRow {
            target: target.to_string(),
            method: method.to_string(),
            m: None,
            best_expr: None,
            dg_train: None,
            dg_int: None,
            dg_ext: None,
            dp: crate::objective::DP_SENTINEL,
            dp_sentinel: true,
            status: Status::Invalid,
            sims: 0,
            seed,
            error: Some(error),
        }
    }
}

/// Scores a given candidate without searching.
pub fn evaluate_fixture(target: &TargetSpec, method: &str, candidate: Option<&Expr>) -> ResultRow {
    let report = classify(candidate, target);
    ResultRow::from_report(target, method, candidate, &report, 0, 0)
}

fn run_with(target: &Expr, index: usize, config: &BatchConfig, policy: Option<&dyn Policy>) -> ResultRow {
    let seed = target_seed(config.seed, index);
    let method = config.method.name();
    let clean = match TargetSpec::new(target.clone()) {
        Ok(t) => t,
        Err(e) => return ResultRow::failed(target, method, seed, e.to_string()),
    };
    let spec = perturb_with_noise(&clean, config.noise_sd, seed);
    if config.method.is_ea() {
        let ea = EaConfig {
            mode: config.method.mode(),
            seed,
            ..config.ea.clone()
        };
        let out = evolve(&spec, &ea);
        return ResultRow::from_report(&spec, method, Some(&out.best_expr), &out.report, out.evaluations, seed);
    }
    let mcts = MctsConfig {
        mode: config.method.mode(),
        seed,
        ..config.mcts.clone()
    };
    let teacher;
    let policy: &dyn Policy = match policy {
        Some(p) => p,
        None => {
            teacher = TeacherPolicy::new(target.to_rules());
            &teacher
        }
    };
    match run_search(&spec, policy, &mcts) {
        Ok(out) => ResultRow::from_report(
            &spec,
            method,
            out.best.as_ref(),
            &out.report,
            out.stats.simulations,
            seed,
        ),
        Err(f) => {
            let mut row = ResultRow::failed(target, method, seed, f.error.to_string());
            row.m = Some(spec.condition.m());
            row.sims = f.stats.simulations;
            row
        }
    }
}

/// Runs the configured method on every target in parallel. Rows come back
/// in target order; a failing target yields a row with `error` set.
pub fn run_batch(targets: &[Expr], config: &BatchConfig, prior: &Prior<'_>) -> Vec<ResultRow> {
    let indexed = targets.par_iter().enumerate();
    match prior {
        Prior::Uniform => indexed
            .map(|(i, t)| run_with(t, i, config, Some(&RandomPolicy)))
            .collect(),
        Prior::Teacher => indexed.map(|(i, t)| run_with(t, i, config, None)).collect(),
        Prior::Shared(p) => indexed.map(|(i, t)| run_with(t, i, config, Some(*p))).collect(),
        Prior::PerWorker(factory) => indexed
            .map_init(factory, |policy, (i, t)| match policy {
                Ok(p) => run_with(t, i, config, Some(p.as_ref())),
                Err(e) => ResultRow::failed(t, config.method.name(), target_seed(config.seed, i), e.to_string()),
            })
            .collect(),
    }
}

/// Complexity band label: `<=4`, then one band per larger value.
pub fn band(m: u32) -> String {
    if m <= 4 {
        "<=4".to_string()
    } else {
        m.to_string()
    }
}

fn band_order(label: &str) -> u32 {
    label.parse().unwrap_or(0)
}

/// Median with infinities sorting last; `None` for an empty slice or an
/// infinite median.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    finite(m)
}

/// One method within one band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub band: String,
    pub method: String,
    pub runs: usize,
    pub solved_pct: f64,
    pub invalid_pct: f64,
    /// Share of the band's targets solved by no method in the summary.
    pub hard_pct: f64,
    pub hard_runs: usize,
    pub median_dg_train: Option<f64>,
    pub median_dg_int: Option<f64>,
    pub median_dg_ext: Option<f64>,
    pub median_dp: Option<f64>,
}

/// Summarizes rows of one or more methods. A target is hard when no row for
/// it is solved; medians run over each method's rows on hard targets. Rows
/// with `error` set are skipped.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let rows: Vec<&ResultRow> = rows.iter().filter(|r| r.error.is_none() && r.m.is_some()).collect();
    let solved: BTreeSet<&str> = rows
        .iter()
        .filter(|r| r.status == Status::Solved)
        .map(|r| r.target.as_str())
        .collect();
    let mut bands: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        bands.entry(band(r.m.expect("filtered"))).or_default().push(r);
    }
    let mut labels: Vec<String> = bands.keys().cloned().collect();
    labels.sort_by_key(|l| band_order(l));

    let mut out = Vec::new();
    for label in labels {
        let in_band = &bands[&label];
        let targets: BTreeSet<&str> = in_band.iter().map(|r| r.target.as_str()).collect();
        let hard = targets.iter().filter(|t| !solved.contains(*t)).count();
        let hard_pct = 100.0 * hard as f64 / targets.len() as f64;
        let mut methods: Vec<&str> = in_band.iter().map(|r| r.method.as_str()).collect();
        methods.sort_by_key(|m| Method::from_str(m).map_or(usize::MAX, |m| m as usize));
        methods.dedup();
        for method in methods {
            let mine: Vec<&&ResultRow> = in_band.iter().filter(|r| r.method == method).collect();
            let n = mine.len() as f64;
            let pct = |s: Status| 100.0 * mine.iter().filter(|r| r.status == s).count() as f64 / n;
            let on_hard: Vec<&&&ResultRow> = mine.iter().filter(|r| !solved.contains(r.target.as_str())).collect();
            let col = |f: fn(&ResultRow) -> Option<f64>| {
                median(
                    &on_hard
                        .iter()
                        .map(|r| f(r).unwrap_or(f64::INFINITY))
                        .collect::<Vec<_>>(),
                )
            };
            let pw_only = method == Method::MctsPwOnly.name();
            out.push(SummaryRow {
                band: label.clone(),
                method: method.to_string(),
                runs: mine.len(),
                solved_pct: pct(Status::Solved),
                invalid_pct: pct(Status::Invalid),
                hard_pct,
                hard_runs: on_hard.len(),
                median_dg_train: if pw_only { None } else { col(|r| r.dg_train) },
                median_dg_int: col(|r| r.dg_int),
                median_dg_ext: col(|r| r.dg_ext),
                median_dp: col(|r| Some(f64::from(r.dp))),
            });
        }
    }
    out
}
