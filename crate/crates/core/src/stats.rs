//! Acceptance-rate tallies over many protocol runs.
//!
//! "Victim" is the verifier Alice signs to (the attacked verifier when Eve is
//! present); "counterpart" is the other one.

use rayon::prelude::*;

use crate::bits::{Decision, VerificationPolicy};
use crate::network::{derive_seed, run_scenario, Instance, RunOptions, Scenario};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceTally {
    pub trials: u64,
    pub victim_accept: u64,
    /// Victim accepted the complement of the signed bit.
    pub victim_accept_flipped: u64,
    pub counterpart_accept: u64,
    /// Counterpart accepted the signed bit.
    pub counterpart_accept_signed: u64,
    /// Runs that ended in a scenario error.
    pub errors: u64,
}

impl AcceptanceTally {
    fn merge(self, other: Self) -> Self {
        Self {
            trials: self.trials + other.trials,
            victim_accept: self.victim_accept + other.victim_accept,
            victim_accept_flipped: self.victim_accept_flipped + other.victim_accept_flipped,
            counterpart_accept: self.counterpart_accept + other.counterpart_accept,
            counterpart_accept_signed: self.counterpart_accept_signed + other.counterpart_accept_signed,
            errors: self.errors + other.errors,
        }
    }

    pub fn rate(count: u64, trials: u64) -> f64 {
        if trials == 0 {
            0.0
        } else {
            count as f64 / trials as f64
        }
    }

    pub fn victim_accept_rate(&self) -> f64 {
        Self::rate(self.victim_accept, self.trials)
    }

    pub fn counterpart_accept_rate(&self) -> f64 {
        Self::rate(self.counterpart_accept, self.trials)
    }

    /// Standard error of the victim accept rate as a binomial proportion.
    pub fn victim_standard_error(&self) -> f64 {
        let p = self.victim_accept_rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Tallies one run.
pub fn tally_one(scenario: &Scenario, instance: &Instance, policy: VerificationPolicy) -> AcceptanceTally {
    let mut t = AcceptanceTally {
        trials: 1,
        ..Default::default()
    };
    let victim = scenario.destination();
    match run_scenario(scenario, instance, policy, RunOptions::default()) {
        Err(_) => t.errors = 1,
        Ok(report) => {
            if let Some(o) = report.outcome(victim).filter(|o| o.decision == Decision::Accept) {
                t.victim_accept = 1;
                t.victim_accept_flipped = u64::from(o.accepted_message == Some(report.signed.flip()));
            }
            if let Some(o) = report
                .outcome(victim.counterpart())
                .filter(|o| o.decision == Decision::Accept)
            {
                t.counterpart_accept = 1;
                t.counterpart_accept_signed = u64::from(o.accepted_message == Some(report.signed));
            }
        }
    }
    t
}

pub fn tally<I: IntoIterator<Item = Instance>>(scenario: &Scenario, instances: I, policy: VerificationPolicy) -> AcceptanceTally {
    instances
        .into_iter()
        .map(|i| tally_one(scenario, &i, policy))
        .fold(AcceptanceTally::default(), AcceptanceTally::merge)
}

/// `trials` seeded runs; trial `i` uses instance seed `derive_seed(seed, i)`.
/// Deterministic regardless of thread count.
pub fn sampled_tally(
    scenario: &Scenario,
    len: usize,
    trials: u64,
    seed: u64,
    policy: VerificationPolicy,
) -> Result<AcceptanceTally, crate::bits::CoreError> {
    // validate once up front so per-trial construction cannot fail
    Instance::sample(len, seed)?;
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let instance = Instance::sample(len, derive_seed(seed, i)).expect("validated length");
            tally_one(scenario, &instance, policy)
        })
        .reduce(AcceptanceTally::default, AcceptanceTally::merge))
}
