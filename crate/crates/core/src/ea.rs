//! Tree-based genetic programming baseline over `+ - * /`, `x` and `1`.
//!
//! Generational loop: tournament selection, one-point subtree crossover,
//! uniform subtree mutation, and a static height limit that reverts an
//! offspring to its parent when exceeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::Arith;
use crate::grammar::{BinOp, Expr};
use crate::objective::{classify_arith, objective_arith, EvalReport, ObjectiveMode, TargetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    pub population: usize,
    pub p_mate: f64,
    pub p_mutate: f64,
    /// Counted in nodes; a single leaf has height 1.
    pub max_height: usize,
    /// Objective evaluations of offspring. The initial population is free.
    pub eval_budget: usize,
    pub tournament_size: usize,
    pub init_max_depth: usize,
    pub mutation_max_depth: usize,
    pub mode: ObjectiveMode,
    pub seed: u64,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            population: 10,
            p_mate: 0.1,
            p_mutate: 0.5,
            max_height: 50,
            eval_budget: 500,
            tournament_size: 3,
            init_max_depth: 6,
            mutation_max_depth: 2,
            mode: ObjectiveMode::DataOnly,
            seed: 0,
        }
    }
}

const OPS: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

fn random_leaf<R: Rng + ?Sized>(rng: &mut R) -> Arith {
    if rng.random_bool(0.5) {
        Arith::X
    } else {
        Arith::One
    }
}

/// Grow method: below `depth` a node is a leaf with the primitive set's
/// terminal ratio (2 of 6), at `depth` always a leaf.
pub fn grow<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Arith {
    if depth == 0 || rng.random_bool(2.0 / 6.0) {
        return random_leaf(rng);
    }
    let op = OPS[rng.random_range(0..OPS.len())];
    let lhs = grow(depth - 1, rng);
    let rhs = grow(depth - 1, rng);
    Arith::binary(op, lhs, rhs)
}

pub fn init_population<R: Rng + ?Sized>(config: &EaConfig, rng: &mut R) -> Vec<Arith> {
    (0..config.population)
        .map(|_| {
            let depth = rng.random_range(0..=config.init_max_depth.min(config.max_height.saturating_sub(1)));
            grow(depth, rng)
        })
        .collect()
}

/// Swaps one random non-root subtree of each parent.
pub fn crossover<R: Rng + ?Sized>(a: &mut Arith, b: &mut Arith, rng: &mut R) {
    let (sa, sb) = (a.size(), b.size());
    if sa < 2 || sb < 2 {
        return;
    }
    let ia = rng.random_range(1..sa);
    let ib = rng.random_range(1..sb);
    let from_b = b.subtree(ib).expect("index in range").clone();
    let from_a = a.replace_subtree(ia, from_b).expect("index in range");
    b.replace_subtree(ib, from_a);
}

/// Replaces one random subtree by a fresh grown tree.
pub fn mutate<R: Rng + ?Sized>(t: &mut Arith, max_depth: usize, rng: &mut R) {
    let i = rng.random_range(0..t.size());
    let depth = rng.random_range(0..=max_depth);
    let fresh = grow(depth, rng);
    t.replace_subtree(i, fresh);
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [(Arith, f64)], size: usize, rng: &mut R) -> &'a (Arith, f64) {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.1 < best.1 {
            best = c;
        }
    }
    best
}

/// The grammar expression for a GP tree, parenthesized where precedence
/// requires.
pub fn tree_to_expr(tree: &Arith) -> Expr {
    tree.to_expr()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EaOutcome {
    pub best: Arith,
    pub best_expr: Expr,
    pub best_objective: f64,
    pub report: EvalReport,
    pub evaluations: usize,
    pub generations: usize,
    /// Best-ever objective after the initial population and each generation.
    pub history: Vec<f64>,
    pub max_height_seen: usize,
}

pub fn evolve(target: &TargetSpec, config: &EaConfig) -> EaOutcome {
    assert!(config.population > 0, "population must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fitness = |t: &Arith| objective_arith(Some(t), target, config.mode);
    let mut pop: Vec<(Arith, f64)> = init_population(config, &mut rng)
        .into_iter()
        .map(|t| {
            let f = fitness(&t);
            (t, f)
        })
        .collect();
    let mut max_height_seen = pop.iter().map(|(t, _)| t.height()).max().unwrap_or(0);
    let mut best = pop
        .iter()
        .fold(None::<&(Arith, f64)>, |acc, ind| match acc {
            Some(b) if b.1 <= ind.1 => Some(b),
            _ => Some(ind),
        })
        .cloned()
        .expect("nonempty population");
    let mut history = vec![best.1];
    let mut evaluations = 0;
    let mut generations = 0;
    // guards against a run of generations where nothing changes
    let max_generations = 100 + 10 * config.eval_budget;

    while evaluations < config.eval_budget && generations < max_generations {
        generations += 1;
        let mut offspring: Vec<(Arith, f64, bool)> = (0..pop.len())
            .map(|_| {
                let (t, f) = tournament(&pop, config.tournament_size, &mut rng).clone();
                (t, f, false)
            })
            .collect();
        for i in (1..offspring.len()).step_by(2) {
            if rng.random_bool(config.p_mate) {
                let (left, right) = offspring.split_at_mut(i);
                let (a, b) = (&mut left[i - 1], &mut right[0]);
                let (pa, pb) = (a.0.clone(), b.0.clone());
                crossover(&mut a.0, &mut b.0, &mut rng);
                if a.0.height() > config.max_height {
                    a.0 = pa;
                }
                if b.0.height() > config.max_height {
                    b.0 = pb;
                }
                a.2 = true;
                b.2 = true;
            }
        }
        for ind in &mut offspring {
            if rng.random_bool(config.p_mutate) {
                let parent = ind.0.clone();
                mutate(&mut ind.0, config.mutation_max_depth, &mut rng);
                if ind.0.height() > config.max_height {
                    ind.0 = parent;
                }
                ind.2 = true;
            }
        }
        let mut next = Vec::with_capacity(offspring.len());
        for (t, f, changed) in offspring {
            let f = if changed {
                if evaluations == config.eval_budget {
                    // budget exhausted mid-generation; unevaluated offspring are dropped
                    continue;
                }
                evaluations += 1;
                fitness(&t)
            } else {
                f
            };
            max_height_seen = max_height_seen.max(t.height());
            if f < best.1 {
                best = (t.clone(), f);
            }
            next.push((t, f));
        }
        if !next.is_empty() {
            // refill with the previous generation so the size stays fixed
            let missing = pop.len() - next.len();
            next.extend(pop.iter().take(missing).cloned());
            pop = next;
        }
        history.push(best.1);
    }

    let report = classify_arith(Some(&best.0), target);
    EaOutcome {
        best_expr: tree_to_expr(&best.0),
        best: best.0,
        best_objective: best.1,
        report,
        evaluations,
        generations,
        history,
        max_height_seen,
    }
}
