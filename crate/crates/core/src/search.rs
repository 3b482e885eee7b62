//! Bounded attacker-strategy search.
//!
//! Every strategy over a fixed action alphabet is executed concretely on a
//! set of protocol instances and checked against a security goal. A strategy
//! that violates the goal on every instance is a universal violation; one
//! that only succeeds on some instances (key collisions, empty masks) is
//! opportunistic.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{intercept_slots, AttackerAction, AttackerStrategy, InterceptSlot};
use crate::bits::{Bit, CoreError, Decision, VerificationPolicy, Verifier};
use crate::network::{derive_seed, run_strategy, Instance, RunOptions, ScenarioReport, Transcript};

/// Largest key length the exhaustive grid supports.
pub const MAX_EXHAUSTIVE_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("exhaustive instance checking needs 1 <= L <= {MAX_EXHAUSTIVE_LEN}, got {0}")]
    ExhaustiveBound(usize),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecurityGoal {
    /// Both verifiers accept, but different bits.
    TransferabilityViolation,
    /// Some verifier accepts a bit Alice never signed.
    ForgeryAcceptance,
}

impl SecurityGoal {
    pub fn name(self) -> &'static str {
        match self {
            SecurityGoal::TransferabilityViolation => "transferability",
            SecurityGoal::ForgeryAcceptance => "forgery",
        }
    }

    /// Whether the run's outcomes violate this goal.
    pub fn holds(self, report: &ScenarioReport) -> bool {
        let accepted = |v| report.outcome(v).and_then(|o| o.accepted_message);
        match self {
            SecurityGoal::TransferabilityViolation => {
                matches!((accepted(Verifier::B), accepted(Verifier::C)), (Some(b), Some(c)) if b != c)
            }
            SecurityGoal::ForgeryAcceptance => report
                .outcomes
                .iter()
                .any(|o| o.decision == Decision::Accept && o.accepted_message != Some(report.signed)),
        }
    }
}

impl fmt::Display for SecurityGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SecurityGoal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transferability" => Ok(SecurityGoal::TransferabilityViolation),
            "forgery" => Ok(SecurityGoal::ForgeryAcceptance),
            other => Err(format!("unknown goal {other:?}")),
        }
    }
}

/// The instances a strategy is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestInstances {
    /// Every key store, every mask assignment and both message bits.
    Exhaustive { len: usize },
    /// `count` seeded instances.
    Sampled { len: usize, count: u64, seed: u64 },
}

impl TestInstances {
    pub fn len(&self) -> usize {
        match *self {
            TestInstances::Exhaustive { len } | TestInstances::Sampled { len, .. } => len,
        }
    }

    pub fn count(&self) -> Result<u64, SearchError> {
        match *self {
            TestInstances::Exhaustive { len } => {
                if !(1..=MAX_EXHAUSTIVE_LEN).contains(&len) {
                    return Err(SearchError::ExhaustiveBound(len));
                }
                Ok(Instance::grid_size(len).expect("bounded length"))
            }
            TestInstances::Sampled { len, count, .. } => {
                if len == 0 {
                    return Err(CoreError::ZeroLength.into());
                }
                Ok(count)
            }
        }
    }

    /// The `index`-th instance of this set.
    pub fn instance(&self, index: u64) -> Result<Instance, CoreError> {
        match *self {
            TestInstances::Exhaustive { len } => Instance::from_grid_index(len, index),
            TestInstances::Sampled { len, seed, .. } => Instance::sample(len, derive_seed(seed, index)),
        }
    }

    pub fn iter(&self) -> Result<impl Iterator<Item = Instance> + '_, SearchError> {
        let count = self.count()?;
        Ok((0..count).map(move |i| self.instance(i).expect("validated instance set")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Universality {
    /// The goal is violated on every tested instance.
    Universal,
    /// The goal is violated on some but not all tested instances.
    Opportunistic,
}

/// A strategy that violated a goal, with a reproducing witness.
#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub strategy: AttackerStrategy,
    pub goal: SecurityGoal,
    pub witness: Instance,
    pub transcript: Transcript,
    pub universality: Universality,
    pub violating: u64,
    pub tested: u64,
}

impl ViolationReport {
    /// Re-executes the witness and checks the goal is still violated.
    pub fn replays(&self, policy: VerificationPolicy) -> bool {
        run_strategy(&self.strategy, &self.witness, policy, RunOptions::default())
            .map(|report| self.goal.holds(&report) && report.transcript == self.transcript)
            .unwrap_or(false)
    }

    pub fn render(&self) -> String {
        let kind = match self.universality {
            Universality::Universal => "universal",
            Universality::Opportunistic => "opportunistic",
        };
        format!(
            "goal {} ({kind}, {}/{} instances)\n{}witness {}\n{}",
            self.goal,
            self.violating,
            self.tested,
            self.strategy.to_text(),
            render_witness(&self.witness),
            self.transcript.render()
        )
    }
}

pub fn render_witness(instance: &Instance) -> String {
    let k = &instance.keys;
    format!(
        "L={} m={} k0B={} k1B={} k0C={} k1C={} n0B={} n1B={} n0C={} n1C={}",
        instance.len(),
        instance.message,
        k.key(Bit::Zero, Verifier::B),
        k.key(Bit::One, Verifier::B),
        k.key(Bit::Zero, Verifier::C),
        k.key(Bit::One, Verifier::C),
        instance.bob_masks[0],
        instance.bob_masks[1],
        instance.charlie_masks[0],
        instance.charlie_masks[1],
    )
}

/// Cartesian product of the applicable actions at each slot, first slot
/// varying slowest. Duplicate-free by construction.
pub fn enumerate_strategies<'a>(
    victim: Verifier,
    alphabet: &'a [AttackerAction],
    slots: &'a [InterceptSlot],
) -> impl Iterator<Item = AttackerStrategy> + 'a {
    let choices: Vec<Vec<AttackerAction>> = slots
        .iter()
        .map(|slot| {
            let mut actions: Vec<_> = alphabet.iter().copied().filter(|a| a.applies_to(slot)).collect();
            actions.sort();
            actions.dedup();
            actions
        })
        .collect();
    let total: usize = choices.iter().map(Vec::len).product();
    (0..total).map(move |mut index| {
        let mut picks = vec![AttackerAction::ForwardUnchanged; slots.len()];
        for (i, options) in choices.iter().enumerate().rev() {
            picks[i] = options[index % options.len()];
            index /= options.len();
        }
        let mut strategy = AttackerStrategy::new(victim);
        for (slot, action) in slots.iter().zip(picks) {
            strategy.set(slot.point, action);
        }
        strategy
    })
}

fn violates(strategy: &AttackerStrategy, goal: SecurityGoal, instance: &Instance, policy: VerificationPolicy) -> Option<ScenarioReport> {
    run_strategy(strategy, instance, policy, RunOptions::default())
        .ok()
        .filter(|report| goal.holds(report))
}

/// Runs `strategy` on every instance. Returns a report for the first
/// violating instance, marked universal when every instance violated the
/// goal; `None` when no instance did.
pub fn check_strategy(
    strategy: &AttackerStrategy,
    goal: SecurityGoal,
    instances: &TestInstances,
    policy: VerificationPolicy,
) -> Result<Option<ViolationReport>, SearchError> {
    let mut first: Option<(Instance, Transcript)> = None;
    let mut violating = 0u64;
    let mut tested = 0u64;
    for instance in instances.iter()? {
        tested += 1;
        if let Some(report) = violates(strategy, goal, &instance, policy) {
            violating += 1;
            if first.is_none() {
                first = Some((instance, report.transcript));
            }
        }
    }
    Ok(first.map(|(witness, transcript)| ViolationReport {
        strategy: strategy.clone(),
        goal,
        witness,
        transcript,
        universality: if violating == tested {
            Universality::Universal
        } else {
            Universality::Opportunistic
        },
        violating,
        tested,
    }))
}

/// Like [`check_strategy`] but stops at the first non-violating instance and
/// only reports universal violations.
pub fn check_universal(
    strategy: &AttackerStrategy,
    goal: SecurityGoal,
    instances: &TestInstances,
    policy: VerificationPolicy,
) -> Result<Option<ViolationReport>, SearchError> {
    let mut first: Option<(Instance, Transcript)> = None;
    let mut tested = 0u64;
    for instance in instances.iter()? {
        let report = match violates(strategy, goal, &instance, policy) {
            Some(report) => report,
            None => return Ok(None),
        };
        tested += 1;
        if first.is_none() {
            first = Some((instance, report.transcript));
        }
    }
    Ok(first.map(|(witness, transcript)| ViolationReport {
        strategy: strategy.clone(),
        goal,
        witness,
        transcript,
        universality: Universality::Universal,
        violating: tested,
        tested,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub goal: SecurityGoal,
    pub victim: Verifier,
    pub alphabet: Vec<AttackerAction>,
    pub instances: TestInstances,
    pub policy: VerificationPolicy,
}

impl SearchConfig {
    /// Full alphabet, victim B, exhaustive instances at `len`.
    pub fn new(goal: SecurityGoal, len: usize, policy: VerificationPolicy) -> Self {
        Self {
            goal,
            victim: Verifier::B,
            alphabet: AttackerAction::ALL.to_vec(),
            instances: TestInstances::Exhaustive { len },
            policy,
        }
    }
}

/// All universal violations over the standard five intercept slots, sorted
/// by strategy text.
pub fn search(goal: SecurityGoal, len: usize, policy: VerificationPolicy) -> Result<Vec<ViolationReport>, SearchError> {
    search_with(&SearchConfig::new(goal, len, policy))
}

pub fn search_with(config: &SearchConfig) -> Result<Vec<ViolationReport>, SearchError> {
    config.instances.count()?;
    let slots = intercept_slots();
    let strategies: Vec<AttackerStrategy> = enumerate_strategies(config.victim, &config.alphabet, &slots).collect();
    let mut reports = strategies
        .par_iter()
        .map(|s| check_universal(s, config.goal, &config.instances, config.policy))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    reports.sort_by_cached_key(|r| r.strategy.to_text());
    Ok(reports)
}
