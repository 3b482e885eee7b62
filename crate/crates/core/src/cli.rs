//! Command-line driver. Lives in the library so tests can run commands
//! in-process; `src/bin/p2sim.rs` only forwards to [`run_cli`].
//!
//! Exit codes: 0 when the run behaves as its scenario class predicts,
//! 1 when it does not, 2 for usage and configuration errors, 3 when a search
//! finds no violation at all.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adversary::{naive_flip_strategy, table2_strategy, transparent_proxy, AttackerAction, AttackerStrategy};
use crate::bits::{Bit, Fraction, VerificationPolicy, Verifier};
use crate::network::{run_scenario, Instance, RunOptions, Scenario, ScenarioReport};
use crate::principals::Outcome;
use crate::search::{search_with, SearchConfig, SecurityGoal, TestInstances, MAX_EXHAUSTIVE_LEN};
use crate::stats::sampled_tally;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCONSISTENT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_VIOLATION: i32 = 3;

const DEFAULT_LEN: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "p2sim", about = "Classical P2 signature protocol simulator and attack search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one honest, attacked or custom scenario and print its transcript.
    Run(RunArgs),
    /// Search all attacker strategies for universal violations.
    Search(SearchArgs),
    /// Acceptance rates of a strategy over many seeded runs.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Honest,
    AttackB,
    AttackC,
    Custom,
}

impl ScenarioName {
    fn name(self) -> &'static str {
        match self {
            ScenarioName::Honest => "honest",
            ScenarioName::AttackB => "attack-b",
            ScenarioName::AttackC => "attack-c",
            ScenarioName::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Text,
    Structured,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with any of the run fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioName>,
    /// Strategy file for `--scenario custom`.
    #[arg(long)]
    strategy: Option<PathBuf>,
    /// Key length.
    #[arg(long = "L", alias = "len")]
    len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0, 1 or both.
    #[arg(long)]
    message: Option<String>,
    /// `exact` or `threshold:<fraction>`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, value_enum)]
    output: Option<OutputFormat>,
    /// Let the first verifier forward a rejected message.
    #[arg(long)]
    forward_on_reject: bool,
}

/// Run fields as they may appear in a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<ScenarioName>,
    strategy: Option<PathBuf>,
    #[serde(rename = "L")]
    len: Option<usize>,
    seed: Option<u64>,
    message: Option<String>,
    policy: Option<String>,
    output: Option<OutputFormat>,
    forward_on_reject: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageChoice {
    One(Bit),
    Both,
}

impl MessageChoice {
    fn bits(self) -> Vec<Bit> {
        match self {
            MessageChoice::One(b) => vec![b],
            MessageChoice::Both => Bit::BOTH.to_vec(),
        }
    }
}

/// Fully resolved `run` configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioName,
    pub strategy: Option<AttackerStrategy>,
    pub len: usize,
    pub seed: u64,
    pub message: MessageChoice,
    pub policy: VerificationPolicy,
    pub output: OutputFormat,
    pub forward_on_reject: bool,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// transferability or forgery.
    #[arg(long, default_value = "transferability")]
    goal: String,
    #[arg(long = "L", alias = "len", default_value_t = 1)]
    len: usize,
    #[arg(long, default_value = "B")]
    victim: String,
    /// Comma-separated actions: forward, swap-keys, restore-partials,
    /// swap-partials, flip, flip-and-forward. `flip` alone selects both flips.
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(long, default_value = "exact")]
    policy: String,
    /// Check this many seeded instances instead of the exhaustive grid.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// naive-flip, table2, proxy, or a strategy file path.
    #[arg(long, default_value = "naive-flip")]
    strategy: String,
    #[arg(long, default_value = "B")]
    victim: String,
    #[arg(long = "L", alias = "len", default_value_t = DEFAULT_LEN)]
    len: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "exact")]
    policy: String,
}

#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

pub fn parse_policy(text: &str) -> Result<VerificationPolicy, String> {
    if text == "exact" {
        return Ok(VerificationPolicy::ExactMatch);
    }
    let fraction = text
        .strip_prefix("threshold:")
        .or_else(|| text.strip_prefix("threshold(").and_then(|t| t.strip_suffix(')')))
        .ok_or_else(|| format!("unknown policy {text:?}; expected exact or threshold:<fraction>"))?;
    let fraction: Fraction = fraction.parse().map_err(|e| format!("{e}"))?;
    Ok(VerificationPolicy::Threshold(fraction))
}

fn parse_message(text: &str) -> Result<MessageChoice, String> {
    match text {
        "both" => Ok(MessageChoice::Both),
        other => other
            .parse::<Bit>()
            .map(MessageChoice::One)
            .map_err(|_| format!("invalid message {other:?}; expected 0, 1 or both")),
    }
}

pub fn parse_alphabet(text: &str) -> Result<Vec<AttackerAction>, String> {
    let mut actions = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name == "flip" {
            actions.extend([AttackerAction::FlipMessage, AttackerAction::FlipMessageAndForward]);
        } else {
            actions.push(name.parse()?);
        }
    }
    Ok(actions)
}

fn load_strategy(path: &Path) -> Result<AttackerStrategy, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    AttackerStrategy::parse(&text).map_err(|e| UsageError(format!("strategy file {}: {e}", path.display())))
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, UsageError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str::<ConfigFile>(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let scenario = self.scenario.or(file.scenario).unwrap_or(ScenarioName::Honest);
        let len = self.len.or(file.len).unwrap_or(DEFAULT_LEN);
        if len == 0 {
            return Err(UsageError("invalid configuration: L must be at least 1".into()));
        }
        let strategy = match (scenario, self.strategy.or(file.strategy)) {
            (ScenarioName::Custom, Some(path)) => Some(load_strategy(&path)?),
            (ScenarioName::Custom, None) => return Err(UsageError("--scenario custom needs --strategy".into())),
            (_, _) => None,
        };
        let message = match self.message.or(file.message) {
            Some(m) => parse_message(&m)?,
            None => MessageChoice::Both,
        };
        let policy = match self.policy.or(file.policy) {
            Some(p) => parse_policy(&p)?,
            None => VerificationPolicy::ExactMatch,
        };
        Ok(RunConfig {
            scenario,
            strategy,
            len,
            seed: self.seed.or(file.seed).unwrap_or(0),
            message,
            policy,
            output: self.output.or(file.output).unwrap_or(OutputFormat::Text),
            forward_on_reject: self.forward_on_reject || file.forward_on_reject.unwrap_or(false),
        })
    }
}

impl RunConfig {
    pub fn scenario(&self) -> Scenario {
        match self.scenario {
            ScenarioName::Honest => Scenario::honest(),
            ScenarioName::AttackB => Scenario::Attack { victim: Verifier::B },
            ScenarioName::AttackC => Scenario::Attack { victim: Verifier::C },
            ScenarioName::Custom => Scenario::Custom {
                strategy: self.strategy.clone().expect("custom scenario carries a strategy"),
            },
        }
    }
}

/// Whether a finished run matches what its scenario class predicts.
pub fn class_consistent(scenario: &Scenario, report: &ScenarioReport) -> bool {
    let accepted = |v| report.outcome(v).and_then(Outcome::accepted);
    match scenario {
        Scenario::Honest { .. } => Verifier::BOTH.iter().all(|&v| accepted(v) == Some(report.signed)),
        Scenario::Attack { victim } => {
            accepted(*victim) == Some(report.signed.flip()) && accepted(victim.counterpart()) == Some(report.signed)
        }
        Scenario::Custom { .. } => true,
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record<'a> {
    Run {
        scenario: &'a str,
        #[serde(rename = "L")]
        len: usize,
        seed: u64,
        message: String,
        policy: String,
    },
    Delivery {
        step: usize,
        sender: String,
        true_sender: String,
        claimed_sender: String,
        receiver: String,
        intended_receiver: String,
        kind: &'static str,
        payload: String,
        annotation: Option<&'static str>,
    },
    Outcome {
        principal: String,
        decision: String,
        accepted_message: Option<String>,
        full_mismatches: usize,
        partial_mismatches: usize,
    },
    Result {
        consistent: bool,
    },
    Error {
        message: String,
    },
}

fn json_line(out: &mut String, record: &Record<'_>) {
    out.push_str(&serde_json::to_string(record).expect("records serialize"));
    out.push('\n');
}

fn render_outcome_text(o: &Outcome) -> String {
    let bit = o.accepted_message.map(|b| format!(" {b}")).unwrap_or_default();
    format!(
        "outcome {} {}{} (full mismatches {}, partial mismatches {})\n",
        o.principal, o.decision, bit, o.full_mismatches, o.partial_mismatches
    )
}

/// Runs a `run` configuration and returns (exit code, stdout).
pub fn cmd_run(config: &RunConfig) -> (i32, String) {
    let scenario = config.scenario();
    let options = RunOptions {
        forward_on_reject: config.forward_on_reject,
    };
    let mut out = String::new();
    let mut all_consistent = true;
    for m in config.message.bits() {
        let header = Record::Run {
            scenario: config.scenario.name(),
            len: config.len,
            seed: config.seed,
            message: m.to_string(),
            policy: config.policy.to_string(),
        };
        match config.output {
            OutputFormat::Text => out.push_str(&format!(
                "# scenario {} L={} seed={} m={} policy={}\n",
                config.scenario.name(),
                config.len,
                config.seed,
                m,
                config.policy
            )),
            OutputFormat::Structured => json_line(&mut out, &header),
        }
        let result = Instance::from_seed(config.len, config.seed, m)
            .map_err(|e| e.to_string())
            .and_then(|inst| run_scenario(&scenario, &inst, config.policy, options).map_err(|e| e.to_string()));
        let report = match result {
            Ok(report) => report,
            Err(message) => {
                all_consistent = false;
                match config.output {
                    OutputFormat::Text => out.push_str(&format!("error {message}\n")),
                    OutputFormat::Structured => json_line(&mut out, &Record::Error { message }),
                }
                continue;
            }
        };
        let consistent = class_consistent(&scenario, &report);
        all_consistent &= consistent;
        match config.output {
            OutputFormat::Text => {
                out.push_str(&report.transcript.render());
                for o in &report.outcomes {
                    out.push_str(&render_outcome_text(o));
                }
                out.push_str(if consistent { "result consistent\n" } else { "result inconsistent\n" });
            }
            OutputFormat::Structured => {
                for d in report.transcript.deliveries() {
                    json_line(
                        &mut out,
                        &Record::Delivery {
                            step: d.step,
                            sender: d.sender_display(),
                            true_sender: d.true_sender.to_string(),
                            claimed_sender: d.claimed_sender.to_string(),
                            receiver: d.receiver_display(),
                            intended_receiver: d.intended_receiver.to_string(),
                            kind: d.payload.kind().name(),
                            payload: d.payload.to_string(),
                            annotation: d.annotation,
                        },
                    );
                }
                for o in &report.outcomes {
                    json_line(
                        &mut out,
                        &Record::Outcome {
                            principal: o.principal.to_string(),
                            decision: o.decision.to_string(),
                            accepted_message: o.accepted_message.map(|b| b.to_string()),
                            full_mismatches: o.full_mismatches,
                            partial_mismatches: o.partial_mismatches,
                        },
                    );
                }
                json_line(&mut out, &Record::Result { consistent });
            }
        }
    }
    (if all_consistent { EXIT_OK } else { EXIT_INCONSISTENT }, out)
}

fn cmd_search(args: SearchArgs) -> Result<(i32, String), UsageError> {
    let goal: SecurityGoal = args.goal.parse()?;
    let victim: Verifier = args.victim.parse()?;
    let policy = parse_policy(&args.policy)?;
    let default_alphabet = args.alphabet.is_none();
    let alphabet = match &args.alphabet {
        Some(text) => parse_alphabet(text)?,
        None => AttackerAction::ALL.to_vec(),
    };
    let instances = match args.samples {
        Some(count) => TestInstances::Sampled {
            len: args.len,
            count,
            seed: args.seed,
        },
        None => {
            if args.len > MAX_EXHAUSTIVE_LEN {
                return Err(UsageError(format!("search needs L <= {MAX_EXHAUSTIVE_LEN}")));
            }
            TestInstances::Exhaustive { len: args.len }
        }
    };
    let config = SearchConfig {
        goal,
        victim,
        alphabet: alphabet.clone(),
        instances,
        policy,
    };
    let reports = search_with(&config)?;
    let alphabet_text: Vec<&str> = alphabet.iter().map(|a| a.name()).collect();
    let mut out = format!(
        "# search goal={} L={} victim={} policy={} alphabet={} instances={}\n",
        goal,
        args.len,
        victim,
        policy,
        alphabet_text.join(","),
        match instances {
            TestInstances::Exhaustive { .. } => "exhaustive".to_string(),
            TestInstances::Sampled { count, seed, .. } => format!("sampled({count},seed={seed})"),
        }
    );
    out.push_str(&format!("universal violations {}\n", reports.len()));
    for report in &reports {
        out.push_str("---\n");
        out.push_str(&report.render());
    }
    let published = table2_strategy(victim);
    let found = reports.iter().any(|r| r.strategy == published);
    out.push_str(&format!("published attack found: {}\n", if found { "yes" } else { "no" }));
    let code = if reports.is_empty() {
        EXIT_NO_VIOLATION
    } else if default_alphabet && !found {
        EXIT_INCONSISTENT
    } else {
        EXIT_OK
    };
    Ok((code, out))
}

fn cmd_stats(args: StatsArgs) -> Result<(i32, String), UsageError> {
    if args.trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()));
    }
    let victim: Verifier = args.victim.parse()?;
    let policy = parse_policy(&args.policy)?;
    let strategy = match args.strategy.as_str() {
        "naive-flip" => naive_flip_strategy(victim),
        "table2" => table2_strategy(victim),
        "proxy" => transparent_proxy(victim),
        path => load_strategy(Path::new(path))?,
    };
    let victim = strategy.victim();
    let scenario = Scenario::Custom { strategy };
    let t = sampled_tally(&scenario, args.len, args.trials, args.seed, policy)?;
    let mut out = format!(
        "# stats strategy={} victim={} L={} trials={} seed={} policy={}\n",
        args.strategy, victim, args.len, args.trials, args.seed, policy
    );
    out.push_str(&format!(
        "victim {victim} accept {}/{} rate {:.6} accept-flipped {}\n",
        t.victim_accept,
        t.trials,
        t.victim_accept_rate(),
        t.victim_accept_flipped
    ));
    out.push_str(&format!(
        "counterpart {} accept {}/{} rate {:.6} accept-signed {}\n",
        victim.counterpart(),
        t.counterpart_accept,
        t.trials,
        t.counterpart_accept_rate(),
        t.counterpart_accept_signed
    ));
    out.push_str(&format!("errors {}\n", t.errors));
    Ok((EXIT_OK, out))
}

/// Parses `args` (including the program name) and runs the command, writing
/// to `out` and `err`. Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => args.resolve().map(|config| cmd_run(&config)),
        Command::Search(args) => cmd_search(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match result {
        Ok((code, text)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(UsageError(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_USAGE
        }
    }
}
