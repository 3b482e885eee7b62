//! Eve: the action alphabet, strategies, her knowledge store and the
//! published man-in-the-middle attack.
//!
//! A strategy assigns one action to each intercept point. An intercept point
//! is the ordinal of a message Eve receives (1-based, counting every
//! intercepted message) together with its kind. With one victim Eve sees
//! five messages, in this order:
//!
//! | ordinal | kind       | direction                       |
//! |---------|------------|---------------------------------|
//! | 1       | `keydist`  | Alice to victim                 |
//! | 2       | `partials` | victim to counterpart           |
//! | 3       | `partials` | counterpart to victim           |
//! | 4       | `sign`     | Alice to victim                 |
//! | 5       | `forward`  | victim to counterpart           |
//!
//! A message whose point has no action is withheld.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bits::{restore_partial, swap_future_message_keys, Bit, BitString, CoreError, PartialKey, Verifier};
use crate::network::{MessageKind, Payload, Principal, WireMessage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("action {action} does not apply to a {kind} message")]
    Inapplicable { action: AttackerAction, kind: MessageKind },
    #[error("restoring partial keys requires the victim's original keys")]
    MissingKnowledge,
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackerAction {
    ForwardUnchanged,
    SwapKeyDist,
    RestorePartials,
    SwapPartials,
    FlipMessage,
    FlipMessageAndForward,
}

impl AttackerAction {
    pub const ALL: [AttackerAction; 6] = [
        AttackerAction::ForwardUnchanged,
        AttackerAction::SwapKeyDist,
        AttackerAction::RestorePartials,
        AttackerAction::SwapPartials,
        AttackerAction::FlipMessage,
        AttackerAction::FlipMessageAndForward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackerAction::ForwardUnchanged => "forward",
            AttackerAction::SwapKeyDist => "swap-keys",
            AttackerAction::RestorePartials => "restore-partials",
            AttackerAction::SwapPartials => "swap-partials",
            AttackerAction::FlipMessage => "flip",
            AttackerAction::FlipMessageAndForward => "flip-and-forward",
        }
    }

    /// Whether this action may be assigned to `slot`.
    ///
    /// `FlipMessage` targets Alice's signed message and `FlipMessageAndForward`
    /// the victim's forward; restoring only makes sense for partial keys the
    /// victim computed from keys Eve has seen.
    pub fn applies_to(self, slot: &InterceptSlot) -> bool {
        match self {
            AttackerAction::ForwardUnchanged => true,
            AttackerAction::SwapKeyDist => slot.point.kind == MessageKind::KeyDist,
            AttackerAction::RestorePartials => slot.point.kind == MessageKind::PartialShare && slot.from_victim,
            AttackerAction::SwapPartials => slot.point.kind == MessageKind::PartialShare,
            AttackerAction::FlipMessage => slot.point.kind == MessageKind::Sign,
            AttackerAction::FlipMessageAndForward => slot.point.kind == MessageKind::Forward,
        }
    }

    fn accepts_kind(self, kind: MessageKind) -> bool {
        match self {
            AttackerAction::ForwardUnchanged => true,
            AttackerAction::SwapKeyDist => kind == MessageKind::KeyDist,
            AttackerAction::RestorePartials | AttackerAction::SwapPartials => kind == MessageKind::PartialShare,
            AttackerAction::FlipMessage | AttackerAction::FlipMessageAndForward => {
                matches!(kind, MessageKind::Sign | MessageKind::Forward)
            }
        }
    }

    /// Transcript annotation for this action against `victim`.
    pub fn annotation(self, victim: Verifier) -> Option<&'static str> {
        match (self, victim) {
            (AttackerAction::ForwardUnchanged, _) => None,
            (AttackerAction::SwapKeyDist, Verifier::B) => Some("swap k_{0B},k_{1B}"),
            (AttackerAction::SwapKeyDist, Verifier::C) => Some("swap k_{0C},k_{1C}"),
            (AttackerAction::RestorePartials, Verifier::B) => Some("restore kpart_{0B},kpart_{1B}"),
            (AttackerAction::RestorePartials, Verifier::C) => Some("restore kpart_{0C},kpart_{1C}"),
            (AttackerAction::SwapPartials, _) => Some("swap partial keys"),
            (AttackerAction::FlipMessage | AttackerAction::FlipMessageAndForward, _) => Some("swap m,not(m)"),
        }
    }
}

impl fmt::Display for AttackerAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackerAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackerAction::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterceptPoint {
    pub ordinal: usize,
    pub kind: MessageKind,
}

impl InterceptPoint {
    pub fn new(ordinal: usize, kind: MessageKind) -> Self {
        Self { ordinal, kind }
    }
}

/// An intercept point plus whether the victim sent the message there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterceptSlot {
    pub point: InterceptPoint,
    pub from_victim: bool,
}

/// The five points Eve sees when she controls one verifier.
pub fn intercept_slots() -> [InterceptSlot; 5] {
    let slot = |ordinal, kind, from_victim| InterceptSlot {
        point: InterceptPoint::new(ordinal, kind),
        from_victim,
    };
    [
        slot(1, MessageKind::KeyDist, false),
        slot(2, MessageKind::PartialShare, true),
        slot(3, MessageKind::PartialShare, false),
        slot(4, MessageKind::Sign, false),
        slot(5, MessageKind::Forward, true),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for StrategyParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for StrategyParseError {}

/// Immutable assignment of actions to intercept points against one victim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttackerStrategy {
    victim: Verifier,
    actions: BTreeMap<InterceptPoint, AttackerAction>,
}

impl AttackerStrategy {
    pub fn new(victim: Verifier) -> Self {
        Self {
            victim,
            actions: BTreeMap::new(),
        }
    }

    /// One action per standard intercept slot, in slot order.
    pub fn from_sequence(victim: Verifier, actions: [AttackerAction; 5]) -> Self {
        let mut s = Self::new(victim);
        for (slot, action) in intercept_slots().iter().zip(actions) {
            s.set(slot.point, action);
        }
        s
    }

    pub fn victim(&self) -> Verifier {
        self.victim
    }

    pub fn set(&mut self, point: InterceptPoint, action: AttackerAction) {
        self.actions.insert(point, action);
    }

    pub fn remove(&mut self, point: InterceptPoint) -> Option<AttackerAction> {
        self.actions.remove(&point)
    }

    pub fn action_at(&self, point: InterceptPoint) -> Option<AttackerAction> {
        self.actions.get(&point).copied()
    }

    pub fn points(&self) -> impl Iterator<Item = (InterceptPoint, AttackerAction)> + '_ {
        self.actions.iter().map(|(p, a)| (*p, *a))
    }

    /// Actions in intercept order.
    pub fn action_sequence(&self) -> Vec<AttackerAction> {
        self.actions.values().copied().collect()
    }

    /// Line-oriented text form: a `victim <B|C>` header followed by one
    /// `intercept <ordinal> <kind> -> <action>` line per point.
    pub fn to_text(&self) -> String {
        let mut out = format!("victim {}\n", self.victim);
        for (point, action) in &self.actions {
            out.push_str(&format!("intercept {} {} -> {}\n", point.ordinal, point.kind, action));
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Blank lines and `#` comments
    /// are ignored; the victim defaults to B.
    pub fn parse(text: &str) -> Result<Self, StrategyParseError> {
        let mut strategy = Self::new(Verifier::B);
        let mut seen_intercept = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| StrategyParseError { line: i + 1, message };
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["victim", v] => {
                    if seen_intercept {
                        return Err(err("victim must precede intercept lines".into()));
                    }
                    strategy.victim = v.parse().map_err(err)?;
                }
                ["intercept", ordinal, kind, "->", action] => {
                    let ordinal: usize = ordinal
                        .parse()
                        .ok()
                        .filter(|&o| o >= 1)
                        .ok_or_else(|| err(format!("invalid ordinal {ordinal:?}")))?;
                    let kind: MessageKind = kind.parse().map_err(err)?;
                    let action: AttackerAction = action.parse().map_err(err)?;
                    if !action.accepts_kind(kind) {
                        return Err(err(format!("action {action} does not apply to {kind}")));
                    }
                    let point = InterceptPoint::new(ordinal, kind);
                    if strategy.actions.contains_key(&point) {
                        return Err(err(format!("duplicate intercept {ordinal} {kind}")));
                    }
                    strategy.set(point, action);
                    seen_intercept = true;
                }
                _ => return Err(err(format!("cannot parse {line:?}"))),
            }
        }
        Ok(strategy)
    }
}

impl fmt::Display for AttackerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// The attack of the published man-in-the-middle table against `victim`:
/// swap the victim's keys, restore the victim's partial keys against the
/// original keys, swap the counterpart's partial keys, flip the signed bit on
/// the way in and flip it back on the way out.
pub fn table2_strategy(victim: Verifier) -> AttackerStrategy {
    AttackerStrategy::from_sequence(
        victim,
        [
            AttackerAction::SwapKeyDist,
            AttackerAction::RestorePartials,
            AttackerAction::SwapPartials,
            AttackerAction::FlipMessage,
            AttackerAction::FlipMessageAndForward,
        ],
    )
}

/// Flips the signed bit and touches nothing else.
pub fn naive_flip_strategy(victim: Verifier) -> AttackerStrategy {
    let mut s = transparent_proxy(victim);
    s.set(InterceptPoint::new(4, MessageKind::Sign), AttackerAction::FlipMessage);
    s
}

/// Forwards every message unchanged.
pub fn transparent_proxy(victim: Verifier) -> AttackerStrategy {
    AttackerStrategy::from_sequence(victim, [AttackerAction::ForwardUnchanged; 5])
}

/// Everything Eve has seen. Only ever grows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Knowledge {
    victim: Verifier,
    bitstrings: Vec<BitString>,
    partials: Vec<PartialKey>,
    message_bits: Vec<Bit>,
    victim_keys: Option<[BitString; 2]>,
}

impl Knowledge {
    pub fn new(victim: Verifier) -> Self {
        Self {
            victim,
            bitstrings: Vec::with_capacity(8),
            partials: Vec::with_capacity(4),
            message_bits: Vec::with_capacity(2),
            victim_keys: None,
        }
    }

    pub fn victim(&self) -> Verifier {
        self.victim
    }

    /// The keys Alice sent to the victim, by future message bit, as sent.
    pub fn victim_keys(&self) -> Option<&[BitString; 2]> {
        self.victim_keys.as_ref()
    }

    pub fn bitstrings(&self) -> &[BitString] {
        &self.bitstrings
    }

    pub fn partials(&self) -> &[PartialKey] {
        &self.partials
    }

    /// Total number of recorded items.
    pub fn len(&self) -> usize {
        self.bitstrings.len() + self.partials.len() + self.message_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_bitstring(&self, s: &BitString) -> bool {
        self.bitstrings.contains(s)
    }

    fn observe(&mut self, msg: &WireMessage) {
        match &msg.payload {
            Payload::KeyDist { k0, k1 } => {
                if msg.intended_receiver == Principal::from(self.victim) && self.victim_keys.is_none() {
                    self.victim_keys = Some([k0.clone(), k1.clone()]);
                }
                self.bitstrings.extend([k0.clone(), k1.clone()]);
            }
            Payload::PartialShare { p0, p1 } => self.partials.extend([p0.clone(), p1.clone()]),
            Payload::Sign(s) | Payload::Forward(s) => {
                self.message_bits.push(s.message);
                self.bitstrings.extend([s.sig_b.clone(), s.sig_c.clone()]);
            }
        }
    }
}

/// Records `msg` into `knowledge` and returns Eve's relay: the transformed
/// payload, sent by Eve as the original claimed sender to the original
/// intended receiver.
pub fn apply_action(
    action: AttackerAction,
    msg: &WireMessage,
    knowledge: &mut Knowledge,
) -> Result<WireMessage, AdversaryError> {
    let kind = msg.kind();
    let from_victim = msg.true_sender == Principal::from(knowledge.victim);
    if !action.accepts_kind(kind) || (action == AttackerAction::RestorePartials && !from_victim) {
        return Err(AdversaryError::Inapplicable { action, kind });
    }
    knowledge.observe(msg);
    let payload = match (action, &msg.payload) {
        (AttackerAction::ForwardUnchanged, p) => p.clone(),
        (AttackerAction::SwapKeyDist, Payload::KeyDist { k0, k1 }) => {
            let (k0, k1) = swap_future_message_keys(k0, k1)?;
            Payload::KeyDist { k0, k1 }
        }
        (AttackerAction::RestorePartials, Payload::PartialShare { p0, p1 }) => {
            let [k0, k1] = knowledge.victim_keys.as_ref().ok_or(AdversaryError::MissingKnowledge)?;
            Payload::PartialShare {
                p0: restore_partial(k0, p0)?,
                p1: restore_partial(k1, p1)?,
            }
        }
        (AttackerAction::SwapPartials, Payload::PartialShare { p0, p1 }) => Payload::PartialShare {
            p0: p1.clone(),
            p1: p0.clone(),
        },
        (AttackerAction::FlipMessage | AttackerAction::FlipMessageAndForward, Payload::Sign(s)) => {
            Payload::Sign(s.with_message(s.message.flip()))
        }
        (AttackerAction::FlipMessage | AttackerAction::FlipMessageAndForward, Payload::Forward(s)) => {
            Payload::Forward(s.with_message(s.message.flip()))
        }
        _ => unreachable!("applicability checked above"),
    };
    Ok(WireMessage {
        payload,
        claimed_sender: msg.claimed_sender,
        true_sender: Principal::E,
        intended_receiver: msg.intended_receiver,
    })
}

/// Eve during one run: a strategy plus the knowledge she accumulates.
#[derive(Debug)]
pub struct Eve<'a> {
    strategy: &'a AttackerStrategy,
    knowledge: Knowledge,
    intercepted: usize,
}

impl<'a> Eve<'a> {
    pub fn new(strategy: &'a AttackerStrategy) -> Self {
        Self {
            strategy,
            knowledge: Knowledge::new(strategy.victim()),
            intercepted: 0,
        }
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn into_knowledge(self) -> Knowledge {
        self.knowledge
    }

    /// Handles the next intercepted message. `None` means Eve withholds it.
    pub fn intercept(&mut self, msg: &WireMessage) -> Result<Option<(WireMessage, Option<&'static str>)>, AdversaryError> {
        self.intercepted += 1;
        let point = InterceptPoint::new(self.intercepted, msg.kind());
        let Some(action) = self.strategy.action_at(point) else {
            self.knowledge.observe(msg);
            return Ok(None);
        };
        let relayed = apply_action(action, msg, &mut self.knowledge)?;
        Ok(Some((relayed, action.annotation(self.strategy.victim()))))
    }
}
