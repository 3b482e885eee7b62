//! Acceptance suite. Prints one PASS/FAIL line per criterion; run with
//! `cargo test -p p2sim --release --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use p2sim::cli::run_cli;
use p2sim::network::{derive_seed, ScenarioReport};
use p2sim::search::{check_strategy, search, search_with, SearchConfig, Universality};
use p2sim::stats::{sampled_tally, tally_one};
use p2sim::{
    naive_flip_strategy, run_scenario, table2_strategy, AttackerAction, Bit, Decision, Instance, MaskChoice,
    Principal, RunOptions, Scenario, SecurityGoal, TestInstances, VerificationPolicy, Verifier, VerifierState,
};

const EXACT: VerificationPolicy = VerificationPolicy::ExactMatch;

struct Criterion {
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
    elapsed: Duration,
    budget: Option<Duration>,
}

impl Criterion {
    fn passed(&self) -> bool {
        self.failures.is_empty() && self.budget.map_or(true, |b| self.elapsed <= b)
    }

    fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!("{status} {} ({:.2}s", self.name, self.elapsed.as_secs_f64());
        if let Some(b) = self.budget {
            line.push_str(&format!(", budget {}s", b.as_secs()));
        }
        line.push(')');
        for n in &self.notes {
            line.push_str(&format!("; {n}"));
        }
        if let Some(f) = self.failures.first() {
            line.push_str(&format!("; {} failure(s), first: {f}", self.failures.len()));
        }
        line
    }
}

fn criterion(name: &'static str, budget: Option<u64>, body: impl FnOnce(&mut Vec<String>, &mut Vec<String>)) -> Criterion {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    body(&mut failures, &mut notes);
    Criterion {
        name,
        failures,
        notes,
        elapsed: start.elapsed(),
        budget: budget.map(Duration::from_secs),
    }
}

fn grid(len: usize) -> impl Iterator<Item = Instance> {
    (0..Instance::grid_size(len).unwrap()).map(move |i| Instance::from_grid_index(len, i).unwrap())
}

fn accepted_cleanly(report: &ScenarioReport, v: Verifier, bit: Bit) -> bool {
    report.outcome(v).is_some_and(|o| {
        o.decision == Decision::Accept && o.accepted_message == Some(bit) && o.full_mismatches == 0 && o.partial_mismatches == 0
    })
}

fn honest_completeness(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let mut runs = 0u64;
    for len in [1, 2] {
        for instance in grid(len) {
            for destination in Verifier::BOTH {
                runs += 1;
                let report = run_scenario(&Scenario::Honest { destination }, &instance, EXACT, RunOptions::default());
                let ok = report.is_ok_and(|r| Verifier::BOTH.iter().all(|&v| accepted_cleanly(&r, v, instance.message)));
                if !ok {
                    failures.push(format!("L={len} dest={destination} {instance:?}"));
                }
            }
        }
    }
    notes.push(format!("{runs} runs"));
}

fn attack_holds(victim: Verifier, instance: &Instance) -> Result<(), String> {
    let report = run_scenario(&Scenario::Attack { victim }, instance, EXACT, RunOptions::default())
        .map_err(|e| e.to_string())?;
    let m = instance.message;
    if !accepted_cleanly(&report, victim, m.flip()) {
        return Err(format!("victim {victim}: {:?}", report.outcome(victim)));
    }
    if !accepted_cleanly(&report, victim.counterpart(), m) {
        return Err(format!("counterpart: {:?}", report.outcome(victim.counterpart())));
    }
    if !report.victim_isolated() {
        return Err("victim channel bypassed Eve".into());
    }
    Ok(())
}

fn attack_totality(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let mut runs = 0u64;
    for len in [1, 2] {
        for instance in grid(len) {
            for victim in Verifier::BOTH {
                runs += 1;
                if let Err(e) = attack_holds(victim, &instance) {
                    failures.push(format!("L={len} {e}"));
                }
            }
        }
    }
    notes.push(format!("{runs} exhaustive runs"));
}

fn attack_totality_random(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let trials = 10_000u64;
    for i in 0..trials {
        let instance = Instance::sample(16, derive_seed(0xA77A_C4, i)).unwrap();
        for victim in Verifier::BOTH {
            if let Err(e) = attack_holds(victim, &instance) {
                failures.push(format!("trial {i}: {e}"));
            }
        }
    }
    notes.push(format!("{trials} instances x 2 victims at L=16"));
}

fn golden_transcripts(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut checked = 0;
    for scenario in ["honest", "attack-b", "attack-c"] {
        for (output, ext) in [("text", "txt"), ("structured", "jsonl")] {
            let mut out = Vec::new();
            let mut err = Vec::new();
            let args = ["p2sim", "run", "--scenario", scenario, "--L", "1", "--seed", "22", "--message", "0", "--output", output];
            run_cli(args, &mut out, &mut err);
            let name = format!("{}_L1_seed22.{ext}", scenario.replace('-', "_"));
            let expected = std::fs::read(dir.join(&name)).unwrap_or_default();
            checked += 1;
            if out != expected {
                failures.push(format!("{name} differs"));
            }
            if ext == "txt" {
                let lines = String::from_utf8_lossy(&out).lines().filter(|l| l.contains(" -> ")).count();
                let want = if scenario == "honest" { 6 } else { 11 };
                if lines != want {
                    failures.push(format!("{name}: {lines} transcript lines, want {want}"));
                }
            }
        }
    }
    notes.push(format!("{checked} files byte-exact"));
}

fn search_rediscovery(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let published = table2_strategy(Verifier::B);
    for len in [1, 2] {
        let reports = search(SecurityGoal::TransferabilityViolation, len, EXACT).unwrap();
        let found = reports
            .iter()
            .find(|r| r.strategy == published)
            .filter(|r| r.universality == Universality::Universal && r.replays(EXACT));
        if found.is_none() {
            failures.push(format!("L={len}: published strategy not found"));
        }
        notes.push(format!("L={len}: {} universal", reports.len()));
        let restricted = SearchConfig {
            alphabet: vec![AttackerAction::ForwardUnchanged, AttackerAction::FlipMessage],
            ..SearchConfig::new(SecurityGoal::TransferabilityViolation, len, EXACT)
        };
        let none = search_with(&restricted).unwrap();
        if !none.is_empty() {
            failures.push(format!("L={len}: restricted alphabet found {}", none.len()));
        }
    }
}

fn ablation_minimality(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let full = table2_strategy(Verifier::B);
    let instances = TestInstances::Exhaustive { len: 2 };
    for (point, action) in full.points().collect::<Vec<_>>() {
        let mut ablated = full.clone();
        ablated.set(point, AttackerAction::ForwardUnchanged);
        let report = check_strategy(&ablated, SecurityGoal::TransferabilityViolation, &instances, EXACT).unwrap();
        let violating = report.as_ref().map_or(0, |r| r.violating);
        notes.push(format!("-{}: {violating}/{}", action.name(), instances.count().unwrap()));
        if report.is_some_and(|r| r.universality == Universality::Universal) {
            failures.push(format!("dropping {} at {} stays universal", action.name(), point.ordinal));
        }
    }
}

/// The naive flip's victim (Bob) decides from the keys, the signed bit and
/// Charlie's mask for the flipped bit only. This grid enumerates exactly
/// those, pinning Bob's masks and Charlie's other mask to zero, so it gives
/// the full grid's accept rate with 2^{3L} fewer runs.
fn reduced_grid(len: usize) -> impl Iterator<Item = Instance> {
    let low = 1 + 4 * len;
    (0..1u64 << (1 + 5 * len)).map(move |r| {
        let flipped_slot = 7 - (r & 1) as usize;
        let index = (r & ((1 << low) - 1)) | ((r >> low) << (1 + flipped_slot * len));
        Instance::from_grid_index(len, index).unwrap()
    })
}

fn victim_accepts(scenario: &Scenario, instances: impl Iterator<Item = Instance>) -> (u64, u64) {
    instances.fold((0, 0), |(acc, n), i| (acc + tally_one(scenario, &i, EXACT).victim_accept, n + 1))
}

fn naive_baseline(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let scenario = Scenario::Custom {
        strategy: naive_flip_strategy(Verifier::B),
    };
    for len in [1, 2] {
        let full = victim_accepts(&scenario, grid(len));
        let reduced = victim_accepts(&scenario, reduced_grid(len));
        if full.0 as u128 * reduced.1 as u128 != reduced.0 as u128 * full.1 as u128 {
            failures.push(format!("L={len}: reduced grid {reduced:?} disagrees with full grid {full:?}"));
        }
    }
    let trials = 100_000u64;
    let mut previous = f64::INFINITY;
    for len in 1..=4 {
        let (accepts, runs) = victim_accepts(&scenario, reduced_grid(len));
        let exact = accepts as f64 / runs as f64;
        // Bob accepts the flipped bit iff his two keys agree (1/2 per bit) and
        // Charlie's component agrees on every position Charlie revealed
        // (3/4 per bit).
        if accepts * 8u64.pow(len as u32) != runs * 3u64.pow(len as u32) {
            failures.push(format!("L={len}: exhaustive {accepts}/{runs} != (3/8)^{len}"));
        }
        let mc = sampled_tally(&scenario, len, trials, 0x5EED + len as u64, EXACT).unwrap();
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        let dev = (mc.victim_accept_rate() - exact).abs();
        notes.push(format!("L={len} exact {exact:.5} mc {:.5} ({:.1} se)", mc.victim_accept_rate(), dev / se));
        if dev > 3.0 * se {
            failures.push(format!("L={len}: Monte Carlo off by {:.2} se", dev / se));
        }
        if exact >= previous {
            failures.push(format!("L={len}: rate not decreasing"));
        }
        previous = exact;
    }
}

fn counterpart_view(report: &ScenarioReport, counterpart: Verifier) -> Vec<(String, Principal)> {
    report
        .transcript
        .received_by(counterpart.into())
        .map(|d| (d.payload.to_string(), d.claimed_sender))
        .collect()
}

fn counterpart_indistinguishable(victim: Verifier, instance: &Instance) -> Result<(), String> {
    let counterpart = victim.counterpart();
    let attacked = run_scenario(&Scenario::Attack { victim }, instance, EXACT, RunOptions::default()).map_err(|e| e.to_string())?;
    let honest = run_scenario(&Scenario::Honest { destination: victim }, instance, EXACT, RunOptions::default())
        .map_err(|e| e.to_string())?;
    if counterpart_view(&attacked, counterpart) != counterpart_view(&honest, counterpart) {
        return Err(format!("victim {victim}: counterpart saw a different sequence"));
    }
    let received: Vec<_> = attacked.transcript.received_by(counterpart.into()).collect();
    let [keys, partials, signed] = received.as_slice() else {
        return Err(format!("counterpart received {} messages", received.len()));
    };
    let wire = |d: &p2sim::network::Delivery| p2sim::WireMessage::honest(d.claimed_sender, d.receiver, d.payload.clone());
    let mut fresh = VerifierState::new(counterpart);
    fresh
        .receive_keys(&wire(keys), MaskChoice::Fixed(instance.masks(counterpart).clone()))
        .map_err(|e| e.to_string())?;
    fresh.receive_partials(&wire(partials)).map_err(|e| e.to_string())?;
    let (outcome, _) = fresh.check(&wire(signed), EXACT).map_err(|e| e.to_string())?;
    if Some(&outcome) != attacked.outcome(counterpart) {
        return Err(format!("victim {victim}: replayed outcome {outcome:?} differs"));
    }
    Ok(())
}

fn counterpart_indistinguishability(failures: &mut Vec<String>, notes: &mut Vec<String>) {
    let mut runs = 0u64;
    for len in [1, 2] {
        for instance in grid(len) {
            for victim in Verifier::BOTH {
                runs += 1;
                if let Err(e) = counterpart_indistinguishable(victim, &instance) {
                    failures.push(format!("L={len} {e}"));
                }
            }
        }
    }
    notes.push(format!("{runs} comparisons"));
}

#[test]
fn acceptance() {
    let results = [
        criterion("1 honest completeness L=1,2 exhaustive", Some(60), honest_completeness),
        criterion("2a attack totality L=1,2 exhaustive", Some(60), attack_totality),
        criterion("2b attack totality L=16 random", Some(30), attack_totality_random),
        criterion("3 golden transcripts", None, golden_transcripts),
        criterion("4 search rediscovery L=1,2", Some(120), search_rediscovery),
        criterion("5 ablation minimality L=2", None, ablation_minimality),
        criterion("6 naive-flip accept rate L=1..4", None, naive_baseline),
        criterion("7 counterpart indistinguishability L=1,2", None, counterpart_indistinguishability),
    ];
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
