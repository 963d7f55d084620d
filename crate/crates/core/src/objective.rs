//! Scoring candidates against a target: RMSE on point sets, leading-power
//! error, the combined search objective and the solved/invalid verdict.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::Arith;
use crate::grammar::Expr;
use crate::rational::{arith_leading_powers, Condition, LeadingPowers};

/// Objective value for incomplete or invalid candidates.
pub const INVALID_PENALTY: f64 = 1e6;
/// Power error reported when the candidate's leading powers are undefined.
pub const DP_SENTINEL: u32 = 18;
/// Interpolation and extrapolation RMSE below this counts as an exact fit.
pub const SOLVED_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointSetName {
    Train,
    Interpolation,
    Extrapolation,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub name: PointSetName,
    pub xs: Vec<f64>,
}

impl PointSet {
    pub fn train() -> Self {
        PointSet {
            name: PointSetName::Train,
            xs: vec![1.2, 1.6, 2.0, 2.4, 2.8],
        }
    }

    pub fn interpolation() -> Self {
        PointSet {
            name: PointSetName::Interpolation,
            xs: vec![1.4, 1.8, 2.2, 2.6],
        }
    }

    pub fn extrapolation() -> Self {
        PointSet {
            name: PointSetName::Extrapolation,
            xs: vec![5.0, 6.0, 7.0, 8.0, 9.0],
        }
    }

    pub fn custom(xs: Vec<f64>) -> Self {
        PointSet {
            name: PointSetName::Custom,
            xs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("target has undefined leading powers ({0})")]
    UndefinedPowers(LeadingPowers),
    #[error("target is not finite at x = {0}")]
    NonFinite(f64),
}

/// What a search sees (train values and the condition) plus the hidden
/// original used for interpolation and extrapolation scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub expr: Expr,
    pub condition: Condition,
    pub train_points: PointSet,
    pub train_values: Vec<f64>,
    pub interpolation: PointSet,
    pub extrapolation: PointSet,
    truth: Arith,
}

impl TargetSpec {
    /// Target over the default point sets, condition taken from the
    /// expression itself.
    pub fn new(expr: Expr) -> Result<Self, TargetError> {
        let powers = arith_leading_powers(&expr.to_arith());
        let condition = powers.condition().ok_or(TargetError::UndefinedPowers(powers))?;
        Self::with_points(
            expr,
            condition,
            PointSet::train(),
            PointSet::interpolation(),
            PointSet::extrapolation(),
        )
    }

    pub fn with_points(
        expr: Expr,
        condition: Condition,
        train_points: PointSet,
        interpolation: PointSet,
        extrapolation: PointSet,
    ) -> Result<Self, TargetError> {
        let truth = expr.to_arith();
        for &x in train_points.xs.iter().chain(&interpolation.xs).chain(&extrapolation.xs) {
            if truth.eval(x).is_none() {
                return Err(TargetError::NonFinite(x));
            }
        }
        let train_values = train_points.xs.iter().map(|&x| truth.eval(x).unwrap()).collect();
        Ok(TargetSpec {
            expr,
            condition,
            train_points,
            train_values,
            interpolation,
            extrapolation,
            truth,
        })
    }

    pub fn truth(&self) -> &Arith {
        &self.truth
    }

    /// Noise-free values of the target on `xs`.
    pub fn true_values(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| self.truth.eval(x).expect("checked finite at construction"))
            .collect()
    }
}

/// Root-mean-square error against `ys` at `xs`; infinite on a pole or
/// overflow.
pub fn rmse_values(candidate: &Arith, xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let Some(v) = candidate.eval(x) else {
            return f64::INFINITY;
        };
        sum += (v - y).powi(2);
    }
    let r = (sum / xs.len() as f64).sqrt();
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

/// RMSE on a point set: observed train values for the train set, noise-free
/// truth otherwise.
pub fn rmse(candidate: &Arith, target: &TargetSpec, points: &PointSet) -> f64 {
    if points.name == PointSetName::Train && points.xs == target.train_points.xs {
        rmse_values(candidate, &points.xs, &target.train_values)
    } else {
        rmse_values(candidate, &points.xs, &target.true_values(&points.xs))
    }
}

/// Leading-power error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dp {
    Value(u32),
    Sentinel,
}

impl Dp {
    pub fn value(self) -> u32 {
        match self {
            Dp::Value(v) => v,
            Dp::Sentinel => DP_SENTINEL,
        }
    }

    pub fn is_sentinel(self) -> bool {
        self == Dp::Sentinel
    }
}

impl fmt::Display for Dp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dp::Value(v) => write!(f, "{v}"),
            Dp::Sentinel => write!(f, "{DP_SENTINEL}*"),
        }
    }
}

pub fn dp_from_powers(powers: LeadingPowers, condition: Condition) -> Dp {
    match powers.condition() {
        Some(achieved) => Dp::Value(achieved.l1(condition)),
        None => Dp::Sentinel,
    }
}

/// `|c0 - p0| + |cinf - pinf|`, or the sentinel when powers are undefined.
pub fn dp_error(candidate: &Expr, condition: Condition) -> Dp {
    dp_from_powers(arith_leading_powers(&candidate.to_arith()), condition)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    DataOnly,
    PwOnly,
    #[default]
    DataPlusPw,
}

impl ObjectiveMode {
    fn uses_data(self) -> bool {
        self != ObjectiveMode::PwOnly
    }

    fn uses_powers(self) -> bool {
        self != ObjectiveMode::DataOnly
    }
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::DataOnly => "data_only",
            ObjectiveMode::PwOnly => "pw_only",
            ObjectiveMode::DataPlusPw => "data_plus_pw",
        })
    }
}

impl FromStr for ObjectiveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data_only" => Ok(ObjectiveMode::DataOnly),
            "pw_only" => Ok(ObjectiveMode::PwOnly),
            "data_plus_pw" => Ok(ObjectiveMode::DataPlusPw),
            _ => Err(format!("unknown objective mode {s:?}")),
        }
    }
}

/// Search objective of an arithmetic tree; `None` is an incomplete
/// candidate. Lower is better, zero is perfect.
pub fn objective_arith(candidate: Option<&Arith>, target: &TargetSpec, mode: ObjectiveMode) -> f64 {
    let Some(c) = candidate else {
        return INVALID_PENALTY;
    };
    let mut total = 0.0;
    if mode.uses_data() {
        let dg = rmse_values(c, &target.train_points.xs, &target.train_values);
        if !dg.is_finite() {
            return INVALID_PENALTY;
        }
        total += dg;
    }
    if mode.uses_powers() {
        match arith_leading_powers(c) {
            LeadingPowers::UndefinedFunction => return INVALID_PENALTY,
            powers => total += f64::from(dp_from_powers(powers, target.condition).value()),
        }
    }
    total
}

pub fn objective(candidate: Option<&Expr>, target: &TargetSpec, mode: ObjectiveMode) -> f64 {
    objective_arith(candidate.map(Expr::to_arith).as_ref(), target, mode)
}

/// Adds Gaussian noise to the observed train values only.
pub fn perturb_with_noise(target: &TargetSpec, sd: f64, seed: u64) -> TargetSpec {
    assert!(sd >= 0.0 && sd.is_finite(), "noise sd must be a nonnegative number");
    let mut out = target.clone();
    if sd == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sd).expect("valid sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut out.train_values {
        *v += normal.sample(&mut rng);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Solved,
    Invalid,
    Unsolved,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Solved => "solved",
            Status::Invalid => "invalid",
            Status::Unsolved => "unsolved",
        })
    }
}

/// Full evaluation of a final candidate. Non-finite RMSE is `INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dg_train: f64,
    pub dg_int: f64,
    pub dg_ext: f64,
    pub dp: Dp,
    pub powers: Option<LeadingPowers>,
    pub status: Status,
}

pub fn classify_arith(candidate: Option<&Arith>, target: &TargetSpec) -> EvalReport {
    let Some(c) = candidate else {
        return EvalReport {
            dg_train: f64::INFINITY,
            dg_int: f64::INFINITY,
            dg_ext: f64::INFINITY,
            dp: Dp::Sentinel,
            powers: None,
            status: Status::Invalid,
        };
    };
    let dg_train = rmse_values(c, &target.train_points.xs, &target.train_values);
    let dg_int = rmse(c, target, &target.interpolation);
    let dg_ext = rmse(c, target, &target.extrapolation);
    let powers = arith_leading_powers(c);
    let dp = dp_from_powers(powers, target.condition);
    let finite = dg_train.is_finite() && dg_int.is_finite() && dg_ext.is_finite();
    let status = if !finite || powers == LeadingPowers::UndefinedFunction {
        Status::Invalid
    } else if dg_int < SOLVED_TOLERANCE && dg_ext < SOLVED_TOLERANCE && dp == Dp::Value(0) {
        Status::Solved
    } else {
        Status::Unsolved
    };
    EvalReport {
        dg_train,
        dg_int,
        dg_ext,
        dp,
        powers: Some(powers),
        status,
    }
}

pub fn classify(candidate: Option<&Expr>, target: &TargetSpec) -> EvalReport {
    classify_arith(candidate.map(Expr::to_arith).as_ref(), target)
}
