//! Monte Carlo tree search over partial derivations with PUCT selection.
//!
//! Priors and rollouts both come from one [`Policy`]: the uniform policy
//! gives plain MCTS, a learned conditional policy gives neural-guided MCTS.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{sample_from_state, DerivationState, Expr, RuleId, Sample, RULE_COUNT};
use crate::objective::{classify, objective, EvalReport, ObjectiveMode, TargetSpec};
use crate::policy::{Policy, PolicyDistribution, PolicyError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFn {
    /// `1 / (1 + objective)`
    #[default]
    Inverse,
    /// `exp(-objective)`
    Exp,
}

impl RewardFn {
    pub fn reward(self, objective: f64) -> f64 {
        match self {
            RewardFn::Inverse => 1.0 / (1.0 + objective),
            RewardFn::Exp => (-objective).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub simulations: usize,
    pub c_puct: f64,
    pub length_limit: usize,
    pub mode: ObjectiveMode,
    pub reward: RewardFn,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            simulations: 500,
            c_puct: 50.0,
            length_limit: 100,
            mode: ObjectiveMode::DataPlusPw,
            reward: RewardFn::Inverse,
            seed: 0,
        }
    }
}

/// `Q + c * P * sqrt(sum_n) / (1 + n)`
pub fn puct_score(q: f64, prior: f64, sum_n: u32, n: u32, c_puct: f64) -> f64 {
    q + c_puct * prior * f64::from(sum_n).sqrt() / (1.0 + f64::from(n))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub simulations: usize,
    /// Distinct completed expressions scored.
    pub evaluations: usize,
    pub complete_rollouts: usize,
    pub incomplete_rollouts: usize,
    /// Expansions where the policy had no data and uniform priors were used.
    pub prior_fallbacks: usize,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: Option<Expr>,
    pub best_objective: f64,
    pub report: EvalReport,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
#[error("policy failed after {} simulations: {error}", stats.simulations)]
pub struct PolicyFailure {
    pub error: PolicyError,
    pub stats: SearchStats,
}

struct Node {
    state: DerivationState,
    expanded: bool,
    prior: [f64; RULE_COUNT],
    n: [u32; RULE_COUNT],
    w: [f64; RULE_COUNT],
    children: [Option<usize>; RULE_COUNT],
    /// Rollouts started from this node.
    own_visits: u32,
}

impl Node {
    fn new(state: DerivationState) -> Self {
        Node {
            state,
            expanded: false,
            prior: [0.0; RULE_COUNT],
            n: [0; RULE_COUNT],
            w: [0.0; RULE_COUNT],
            children: [None; RULE_COUNT],
            own_visits: 0,
        }
    }

    fn sum_n(&self) -> u32 {
        self.n.iter().sum()
    }

    fn q(&self, a: usize) -> f64 {
        if self.n[a] == 0 {
            0.0
        } else {
            self.w[a] / f64::from(self.n[a])
        }
    }

    fn select(&self, c_puct: f64) -> usize {
        let mask = self.state.valid_next_mask().expect("expanded nodes are incomplete");
        let sum_n = self.sum_n();
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for a in (0..RULE_COUNT).filter(|&a| mask[a]) {
            let score = puct_score(self.q(a), self.prior[a], sum_n, self.n[a], c_puct);
            // strict comparison keeps the lowest rule id on ties
            if score > best_score {
                best_score = score;
                best = Some(a);
            }
        }
        best.expect("some rule is valid")
    }
}

/// Statistics of the root edges after a search, for inspection and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct RootEdges {
    pub n: [u32; RULE_COUNT],
    pub prior: [f64; RULE_COUNT],
    pub q: [f64; RULE_COUNT],
}

pub struct Mcts<'a, P: Policy + ?Sized> {
    policy: &'a P,
    target: &'a TargetSpec,
    config: MctsConfig,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    scores: HashMap<Vec<RuleId>, f64>,
    best: Option<(f64, Expr)>,
    stats: SearchStats,
    rewards: Vec<f64>,
}

impl<'a, P: Policy + ?Sized> Mcts<'a, P> {
    pub fn new(policy: &'a P, target: &'a TargetSpec, config: MctsConfig) -> Self {
        let root = Node::new(DerivationState::new(config.length_limit));
        Mcts {
            policy,
            target,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            nodes: vec![root],
            scores: HashMap::new(),
            best: None,
            stats: SearchStats::default(),
            rewards: Vec::new(),
        }
    }

    fn failure(&self, error: PolicyError) -> PolicyFailure {
        PolicyFailure {
            error,
            stats: self.stats.clone(),
        }
    }

    fn expand(&mut self, id: usize) -> Result<(), PolicyFailure> {
        let node = &self.nodes[id];
        let dist = match self.policy.next_distribution(&node.state, self.target.condition) {
            Ok(d) => d,
            Err(PolicyError::NoSupport) => {
                let mask = node.state.valid_next_mask().expect("expanding an incomplete node");
                PolicyDistribution {
                    fallback: true,
                    ..PolicyDistribution::uniform(mask)
                }
            }
            Err(e) => return Err(self.failure(e)),
        };
        if dist.fallback {
            self.stats.prior_fallbacks += 1;
        }
        let node = &mut self.nodes[id];
        node.prior = dist.masked;
        node.expanded = true;
        Ok(())
    }

    fn score(&mut self, expr: Expr, rules: Vec<RuleId>) -> f64 {
        if let Some(&s) = self.scores.get(&rules) {
            return s;
        }
        let s = objective(Some(&expr), self.target, self.config.mode);
        self.stats.evaluations += 1;
        // equal objectives prefer the shorter derivation
        let better = |(b, e): &(f64, Expr)| s < *b || (s == *b && rules.len() < e.rule_len());
        if self.best.as_ref().is_none_or(better) {
            self.best = Some((s, expr));
        }
        self.scores.insert(rules, s);
        s
    }

    fn rollout(&mut self, id: usize) -> Result<f64, PolicyFailure> {
        let state = self.nodes[id].state.clone();
        let sample =
            sample_from_state(self.policy, state, self.target.condition, &mut self.rng).map_err(|e| self.failure(e))?;
        Ok(match sample {
            Sample::Complete { expr, rules } => {
                self.stats.complete_rollouts += 1;
                let s = self.score(expr, rules);
                self.config.reward.reward(s)
            }
            Sample::Incomplete { .. } => {
                self.stats.incomplete_rollouts += 1;
                0.0
            }
        })
    }

    fn simulate(&mut self) -> Result<(), PolicyFailure> {
        let mut path = Vec::new();
        let mut id = 0;
        while self.nodes[id].expanded {
            let a = self.nodes[id].select(self.config.c_puct);
            path.push((id, a));
            id = match self.nodes[id].children[a] {
                Some(child) => child,
                None => {
                    let mut state = self.nodes[id].state.clone();
                    state.apply(RuleId::ALL[a]).expect("selected rule is valid");
                    self.nodes.push(Node::new(state));
                    let child = self.nodes.len() - 1;
                    self.nodes[id].children[a] = Some(child);
                    child
                }
            };
        }
        let leaf = &self.nodes[id];
        let reward = if leaf.state.is_complete() {
            let rules = leaf.state.rules().to_vec();
            let expr = Expr::from_complete_rules(&rules).expect("complete node");
            self.stats.complete_rollouts += 1;
            let s = self.score(expr, rules);
            self.config.reward.reward(s)
        } else if leaf.state.at_limit() {
            self.stats.incomplete_rollouts += 1;
            0.0
        } else {
            self.expand(id)?;
            self.nodes[id].own_visits += 1;
            self.rollout(id)?
        };
        self.rewards.push(reward);
        for (node, a) in path {
            let n = &mut self.nodes[node];
            n.n[a] += 1;
            n.w[a] += reward;
        }
        self.stats.simulations += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<SearchOutcome, PolicyFailure> {
        self.expand(0)?;
        for _ in 0..self.config.simulations {
            self.simulate()?;
        }
        Ok(self.finish())
    }

    /// Runs the search and also returns the root edge statistics and every
    /// backed-up reward.
    pub fn run_inspect(mut self) -> Result<(SearchOutcome, RootEdges, Vec<f64>), PolicyFailure> {
        self.expand(0)?;
        for _ in 0..self.config.simulations {
            self.simulate()?;
        }
        let root = &self.nodes[0];
        let edges = RootEdges {
            n: root.n,
            prior: root.prior,
            q: std::array::from_fn(|a| root.q(a)),
        };
        let rewards = std::mem::take(&mut self.rewards);
        Ok((self.finish(), edges, rewards))
    }

    fn finish(mut self) -> SearchOutcome {
        self.stats.nodes = self.nodes.len();
        let (best_objective, best) = match self.best {
            Some((s, e)) => (s, Some(e)),
            None => (crate::objective::INVALID_PENALTY, None),
        };
        let report = classify(best.as_ref(), self.target);
        SearchOutcome {
            best,
            best_objective,
            report,
            stats: self.stats,
        }
    }
}

pub fn run_search<P: Policy + ?Sized>(
    target: &TargetSpec,
    policy: &P,
    config: &MctsConfig,
) -> Result<SearchOutcome, PolicyFailure> {
    Mcts::new(policy, target, config.clone()).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_text;
    use crate::objective::Status;
    use crate::policy::{FailingPolicy, RandomPolicy, TeacherPolicy};

    fn target(s: &str) -> TargetSpec {
        TargetSpec::new(parse_text(s).unwrap()).unwrap()
    }

    #[test]
    fn puct_arithmetic() {
        assert_eq!(puct_score(0.0, 0.2, 100, 9, 50.0), 10.0);
        assert_eq!(puct_score(0.0, 0.5, 0, 0, 50.0), 0.0);
        assert!(puct_score(0.1, 0.3, 4, 1, 50.0) > puct_score(0.1, 0.2, 4, 1, 50.0));
    }

    #[test]
    fn ties_go_to_the_lowest_rule() {
        let mut node = Node::new(DerivationState::from_prefix(&[RuleId::START], 100).unwrap());
        node.prior[1..6].copy_from_slice(&[0.2; 5]);
        assert_eq!(node.select(50.0), 1);
        node.prior[3] = 0.3;
        node.n[1] = 1;
        assert_eq!(node.select(50.0), 3);
    }

    #[test]
    fn uniform_prior_finds_x() {
        let t = target("x");
        let out = run_search(&t, &RandomPolicy, &MctsConfig::default()).unwrap();
        assert_eq!(out.report.status, Status::Solved);
        assert_eq!(out.best.unwrap().rule_len(), 3);
    }

    #[test]
    fn teacher_prior_solves_on_first_rollout() {
        let t = target("1 / x + x + ( x - 1 ) * ( x - 1 )");
        let teacher = TeacherPolicy::new(t.expr.to_rules());
        let config = MctsConfig {
            simulations: 1,
            ..MctsConfig::default()
        };
        let out = run_search(&t, &teacher, &config).unwrap();
        assert_eq!(out.report.status, Status::Solved);
        assert_eq!(out.best_objective, 0.0);
    }

    #[test]
    fn visits_are_conserved_and_rewards_bounded() {
        let t = target("x * x + 1");
        for k in [1, 7, 64] {
            let config = MctsConfig {
                simulations: k,
                seed: 3,
                ..MctsConfig::default()
            };
            let (out, root, rewards) = Mcts::new(&RandomPolicy, &t, config).run_inspect().unwrap();
            assert_eq!(root.n.iter().sum::<u32>() as usize, k);
            assert_eq!(out.stats.simulations, k);
            assert_eq!(rewards.len(), k);
            assert!(rewards.iter().all(|r| (0.0..=1.0).contains(r)));
            assert!((root.prior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_outcome() {
        let t = target("x / ( 1 + x )");
        let config = MctsConfig {
            simulations: 100,
            seed: 11,
            ..MctsConfig::default()
        };
        assert_eq!(
            run_search(&t, &RandomPolicy, &config).unwrap(),
            run_search(&t, &RandomPolicy, &config).unwrap()
        );
    }

    #[test]
    fn failing_policy_aborts_immediately() {
        let t = target("x");
        let p = FailingPolicy(PolicyError::ServiceUnavailable("down".into()));
        let err = run_search(&t, &p, &MctsConfig::default()).unwrap_err();
        assert_eq!(err.stats.simulations, 0);
        assert!(matches!(err.error, PolicyError::ServiceUnavailable(_)));
    }

    #[test]
    fn exp_reward_is_bounded() {
        assert_eq!(RewardFn::Exp.reward(0.0), 1.0);
        assert!(RewardFn::Exp.reward(1e6) >= 0.0);
        assert_eq!(RewardFn::Inverse.reward(1.0), 0.5);
    }
}
