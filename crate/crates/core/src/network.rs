//! Point-to-point channel fabric, the interposition layer, transcripts and
//! the deterministic scenario runner.

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{table2_strategy, AdversaryError, AttackerStrategy, Eve, Knowledge};
use crate::bits::{generate_keys, Bit, BitString, CoreError, KeyStore, PartialKey, SignedMessage, VerificationPolicy, Verifier};
use crate::principals::{AliceState, MaskChoice, Outcome, PrincipalError, VerifierPhase, VerifierState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Principal {
    A,
    B,
    C,
    E,
}

impl Principal {
    pub fn letter(self) -> char {
        match self {
            Principal::A => 'A',
            Principal::B => 'B',
            Principal::C => 'C',
            Principal::E => 'E',
        }
    }

    pub fn verifier(self) -> Option<Verifier> {
        match self {
            Principal::B => Some(Verifier::B),
            Principal::C => Some(Verifier::C),
            _ => None,
        }
    }
}

impl From<Verifier> for Principal {
    fn from(v: Verifier) -> Self {
        match v {
            Verifier::B => Principal::B,
            Verifier::C => Principal::C,
        }
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MessageKind {
    KeyDist,
    PartialShare,
    Sign,
    Forward,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::KeyDist => "keydist",
            MessageKind::PartialShare => "partials",
            MessageKind::Sign => "sign",
            MessageKind::Forward => "forward",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MessageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keydist" => Ok(MessageKind::KeyDist),
            "partials" => Ok(MessageKind::PartialShare),
            "sign" => Ok(MessageKind::Sign),
            "forward" => Ok(MessageKind::Forward),
            other => Err(format!("unknown message kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    KeyDist { k0: BitString, k1: BitString },
    PartialShare { p0: PartialKey, p1: PartialKey },
    Sign(SignedMessage),
    Forward(SignedMessage),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::KeyDist { .. } => MessageKind::KeyDist,
            Payload::PartialShare { .. } => MessageKind::PartialShare,
            Payload::Sign(_) => MessageKind::Sign,
            Payload::Forward(_) => MessageKind::Forward,
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::KeyDist { k0, k1 } => write!(f, "keys {k0} {k1}"),
            Payload::PartialShare { p0, p1 } => write!(f, "partials {p0} {p1}"),
            Payload::Sign(s) => write!(f, "sign {} {} {}", s.message, s.sig_b, s.sig_c),
            Payload::Forward(s) => write!(f, "forward {} {} {}", s.message, s.sig_b, s.sig_c),
        }
    }
}

/// A message in flight. `claimed_sender` differs from `true_sender` only when
/// Eve impersonates someone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WireMessage {
    pub payload: Payload,
    pub claimed_sender: Principal,
    pub true_sender: Principal,
    pub intended_receiver: Principal,
}

impl WireMessage {
    pub fn honest(sender: Principal, receiver: Principal, payload: Payload) -> Self {
        Self {
            payload,
            claimed_sender: sender,
            true_sender: sender,
            intended_receiver: receiver,
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

/// Whether Eve controls one verifier's incoming and outgoing channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interposition {
    #[default]
    None,
    FullControl { victim: Verifier },
}

impl Interposition {
    pub fn victim(self) -> Option<Verifier> {
        match self {
            Interposition::None => None,
            Interposition::FullControl { victim } => Some(victim),
        }
    }
}

/// Where a message actually lands.
pub fn route(msg: &WireMessage, config: Interposition) -> Principal {
    match config {
        Interposition::None => msg.intended_receiver,
        Interposition::FullControl { victim } => {
            let victim = Principal::from(victim);
            if msg.true_sender == Principal::E {
                msg.intended_receiver
            } else if msg.intended_receiver == victim || msg.true_sender == victim {
                Principal::E
            } else {
                msg.intended_receiver
            }
        }
    }
}

/// One transcript row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub step: usize,
    pub true_sender: Principal,
    pub claimed_sender: Principal,
    pub receiver: Principal,
    pub intended_receiver: Principal,
    pub payload: Payload,
    pub annotation: Option<&'static str>,
}

impl Delivery {
    pub fn sender_display(&self) -> String {
        display_party(self.true_sender, self.claimed_sender)
    }

    pub fn receiver_display(&self) -> String {
        display_party(self.receiver, self.intended_receiver)
    }
}

fn display_party(actual: Principal, apparent: Principal) -> String {
    if actual == apparent {
        actual.to_string()
    } else {
        format!("{actual}({apparent})")
    }
}

impl fmt::Display for Delivery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}. {} -> {} : {}",
            self.step,
            self.sender_display(),
            self.receiver_display(),
            self.payload
        )?;
        if let Some(note) = self.annotation {
            write!(f, " [{note}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    deliveries: Vec<Delivery>,
}

impl Transcript {
    fn with_capacity(n: usize) -> Self {
        Self {
            deliveries: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, msg: &WireMessage, receiver: Principal, annotation: Option<&'static str>) {
        self.deliveries.push(Delivery {
            step: self.deliveries.len() + 1,
            true_sender: msg.true_sender,
            claimed_sender: msg.claimed_sender,
            receiver,
            intended_receiver: msg.intended_receiver,
            payload: msg.payload.clone(),
            annotation,
        });
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn len(&self) -> usize {
        self.deliveries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty()
    }

    /// Payloads delivered to `principal`, in delivery order.
    pub fn received_by(&self, principal: Principal) -> impl Iterator<Item = &Delivery> {
        self.deliveries.iter().filter(move |d| d.receiver == principal)
    }

    /// One line per delivery, each terminated by a newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.deliveries {
            out.push_str(&d.to_string());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Every random choice of one protocol run: Alice's keys, both verifiers'
/// masks and the signed bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub keys: KeyStore,
    pub bob_masks: [BitString; 2],
    pub charlie_masks: [BitString; 2],
    pub message: Bit,
}

/// splitmix64 finalizer; maps (seed, stream) to an independent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Instance {
    pub fn masks(&self, verifier: Verifier) -> &[BitString; 2] {
        match verifier {
            Verifier::B => &self.bob_masks,
            Verifier::C => &self.charlie_masks,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Keys and masks drawn deterministically from `seed`. Each verifier's
    /// masks come from its own derived seed, sampled the same way a verifier
    /// does with `MaskChoice::Seeded`.
    pub fn from_seed(len: usize, seed: u64, message: Bit) -> Result<Self, CoreError> {
        let keys = generate_keys(len, derive_seed(seed, 0))?;
        let bob_masks = MaskChoice::Seeded(derive_seed(seed, 1)).resolve(len)?;
        let charlie_masks = MaskChoice::Seeded(derive_seed(seed, 2)).resolve(len)?;
        Ok(Self {
            keys,
            bob_masks,
            charlie_masks,
            message,
        })
    }

    /// Seeded instance whose message bit is drawn from the seed as well.
    pub fn sample(len: usize, seed: u64) -> Result<Self, CoreError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
        let message = Bit::from(rand::Rng::gen::<bool>(&mut rng));
        Self::from_seed(len, seed, message)
    }

    /// Number of distinct instances at key length `len`: 4 keys and 4 masks
    /// of `len` bits each plus the message bit.
    pub fn grid_size(len: usize) -> Option<u64> {
        1u64.checked_shl(u32::try_from(8 * len + 1).ok()?)
    }

    /// The `index`-th instance of the exhaustive grid at length `len`
    /// (`len <= 7`). Bits of `index` are consumed low to high: the message,
    /// then keys k0B, k1B, k0C, k1C, then masks n0B, n1B, n0C, n1C.
    pub fn from_grid_index(len: usize, index: u64) -> Result<Self, CoreError> {
        let field = (1u64 << len) - 1;
        let part = |slot: usize| BitString::from_index((index >> (1 + slot * len)) & field, len);
        Ok(Self {
            message: Bit::from(index & 1 == 1),
            keys: KeyStore::new(part(0)?, part(1)?, part(2)?, part(3)?)?,
            bob_masks: [part(4)?, part(5)?],
            charlie_masks: [part(6)?, part(7)?],
        })
    }
}

/// Which run to drive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    /// No attacker. Alice signs to `destination`, who forwards to the other
    /// verifier.
    Honest { destination: Verifier },
    /// Eve runs the published attack against `victim`.
    Attack { victim: Verifier },
    /// Eve runs an arbitrary strategy against the strategy's victim.
    Custom { strategy: AttackerStrategy },
}

impl Scenario {
    pub fn honest() -> Self {
        Scenario::Honest { destination: Verifier::B }
    }

    pub fn interposition(&self) -> Interposition {
        match self {
            Scenario::Honest { .. } => Interposition::None,
            Scenario::Attack { victim } => Interposition::FullControl { victim: *victim },
            Scenario::Custom { strategy } => Interposition::FullControl {
                victim: strategy.victim(),
            },
        }
    }

    /// The verifier Alice sends her signed message to.
    pub fn destination(&self) -> Verifier {
        match self {
            Scenario::Honest { destination } => *destination,
            Scenario::Attack { victim } => *victim,
            Scenario::Custom { strategy } => strategy.victim(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Let the first verifier forward a message it rejected.
    pub forward_on_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(#[from] CoreError),
    #[error("step {step}: {source}")]
    Principal { step: usize, source: PrincipalError },
    #[error("step {step}: {source}")]
    Adversary { step: usize, source: AdversaryError },
    #[error("deadlock: {principal} stuck in {phase} awaiting a message no one will send")]
    Deadlock { principal: Principal, phase: &'static str },
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub transcript: Transcript,
    /// Decisions of the verifiers that decided, B before C.
    pub outcomes: Vec<Outcome>,
    /// The bit Alice actually signed.
    pub signed: Bit,
    pub interposition: Interposition,
    /// What Eve saw, when she was present.
    pub knowledge: Option<Knowledge>,
}

impl ScenarioReport {
    pub fn outcome(&self, verifier: Verifier) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.principal == verifier)
    }

    /// Every delivery that crosses the victim's channels involves Eve.
    pub fn victim_isolated(&self) -> bool {
        let Some(victim) = self.interposition.victim() else {
            return true;
        };
        let victim = Principal::from(victim);
        self.transcript.deliveries().iter().all(|d| {
            let touches_victim = d.true_sender == victim || d.receiver == victim;
            !touches_victim || d.true_sender == Principal::E || d.receiver == Principal::E
        })
    }
}

struct Runner<'a> {
    config: Interposition,
    policy: VerificationPolicy,
    instance: &'a Instance,
    verifiers: [VerifierState; 2],
    outboxes: [Vec<WireMessage>; 2],
    outcomes: [Option<Outcome>; 2],
    eve: Option<Eve<'a>>,
    transcript: Transcript,
    withheld: Vec<WireMessage>,
}

impl Runner<'_> {
    fn send(&mut self, msg: WireMessage) -> Result<(), ScenarioError> {
        let receiver = route(&msg, self.config);
        self.transcript.push(&msg, receiver, None);
        if receiver != Principal::E {
            return self.deliver(&msg, receiver);
        }
        let eve = self.eve.as_mut().expect("interposition without an attacker");
        let step = self.transcript.len();
        match eve.intercept(&msg).map_err(|source| ScenarioError::Adversary { step, source })? {
            Some((relayed, annotation)) => {
                let receiver = route(&relayed, self.config);
                self.transcript.push(&relayed, receiver, annotation);
                self.deliver(&relayed, receiver)
            }
            None => {
                self.withheld.push(msg);
                Ok(())
            }
        }
    }

    fn deliver(&mut self, msg: &WireMessage, receiver: Principal) -> Result<(), ScenarioError> {
        let step = self.transcript.len();
        let Some(role) = receiver.verifier() else {
            return Err(ScenarioError::Principal {
                step,
                source: PrincipalError::UnexpectedMessage {
                    principal: receiver,
                    kind: msg.kind(),
                },
            });
        };
        let i = role.index();
        let verifier = &mut self.verifiers[i];
        let result = match &msg.payload {
            Payload::KeyDist { .. } => verifier
                .receive_keys(msg, MaskChoice::Fixed(self.instance.masks(role).clone()))
                .map(|share| self.outboxes[i].push(share)),
            Payload::PartialShare { .. } => verifier.receive_partials(msg),
            Payload::Sign(_) | Payload::Forward(_) => verifier.check(msg, self.policy).map(|(outcome, forward)| {
                self.outcomes[i] = Some(outcome);
                self.outboxes[i].extend(forward);
            }),
        };
        result.map_err(|source| match source {
            PrincipalError::WrongPhase { principal, phase, .. } if !self.withheld.is_empty() => {
                ScenarioError::Deadlock { principal, phase }
            }
            source => ScenarioError::Principal { step, source },
        })
    }

    fn flush(&mut self, verifier: Verifier) -> Result<(), ScenarioError> {
        for msg in std::mem::take(&mut self.outboxes[verifier.index()]) {
            self.send(msg)?;
        }
        Ok(())
    }
}

/// Drives one full protocol run in table order: keys to the second verifier,
/// keys to the first, partial shares first-to-second then second-to-first,
/// the signed message to the first verifier, and its forward to the second.
/// Eve relays each intercepted message immediately.
pub fn run_scenario(
    scenario: &Scenario,
    instance: &Instance,
    policy: VerificationPolicy,
    options: RunOptions,
) -> Result<ScenarioReport, ScenarioError> {
    match scenario {
        Scenario::Honest { destination } => run_inner(*destination, None, instance, policy, options),
        Scenario::Attack { victim } => run_strategy(&table2_strategy(*victim), instance, policy, options),
        Scenario::Custom { strategy } => run_strategy(strategy, instance, policy, options),
    }
}

/// Same as `run_scenario` with `Scenario::Custom`, without taking ownership
/// of the strategy.
pub fn run_strategy(
    strategy: &AttackerStrategy,
    instance: &Instance,
    policy: VerificationPolicy,
    options: RunOptions,
) -> Result<ScenarioReport, ScenarioError> {
    run_inner(strategy.victim(), Some(strategy), instance, policy, options)
}

fn run_inner(
    first: Verifier,
    strategy: Option<&AttackerStrategy>,
    instance: &Instance,
    policy: VerificationPolicy,
    options: RunOptions,
) -> Result<ScenarioReport, ScenarioError> {
    let second = first.counterpart();
    let mut runner = Runner {
        config: match strategy {
            Some(s) => Interposition::FullControl { victim: s.victim() },
            None => Interposition::None,
        },
        policy,
        instance,
        verifiers: Verifier::BOTH.map(|v| VerifierState::new(v).with_forward_on_reject(options.forward_on_reject)),
        outboxes: [Vec::new(), Vec::new()],
        outcomes: [None, None],
        eve: strategy.map(Eve::new),
        transcript: Transcript::with_capacity(11),
        withheld: Vec::new(),
    };

    let mut alice = AliceState::new(instance.keys.clone());
    let (to_b, to_c) = alice
        .distribute()
        .map_err(|source| ScenarioError::Principal { step: 0, source })?;
    let (to_first, to_second) = match first {
        Verifier::B => (to_b, to_c),
        Verifier::C => (to_c, to_b),
    };
    runner.send(to_second)?;
    runner.send(to_first)?;
    runner.flush(first)?;
    runner.flush(second)?;
    let step = runner.transcript.len();
    let sign = alice
        .sign(instance.message, first)
        .map_err(|source| ScenarioError::Principal { step, source })?;
    runner.send(sign)?;
    runner.flush(first)?;
    runner.flush(second)?;

    for v in &runner.verifiers {
        let stuck = match v.phase() {
            VerifierPhase::AwaitKeys | VerifierPhase::AwaitPartials => true,
            VerifierPhase::Ready => runner
                .withheld
                .iter()
                .any(|m| m.intended_receiver == Principal::from(v.role())),
            VerifierPhase::Decided => false,
        };
        if stuck {
            return Err(ScenarioError::Deadlock {
                principal: v.role().into(),
                phase: v.phase().name(),
            });
        }
    }

    let [b, c] = runner.outcomes;
    Ok(ScenarioReport {
        transcript: runner.transcript,
        outcomes: [b, c].into_iter().flatten().collect(),
        signed: instance.message,
        interposition: runner.config,
        knowledge: runner.eve.map(Eve::into_knowledge),
    })
}
