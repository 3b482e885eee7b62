//! Message-driven state machines for the signer and the two verifiers.
//!
//! Principals only ever see the messages delivered to them, so an
//! interposing attacker is indistinguishable from an honest peer as long as
//! the delivered messages are well formed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bits::{
    decide, mask, sample_mask, verify_full, verify_partial, Bit, BitString, CoreError, Decision, KeyStore, PartialKey,
    SignedMessage, VerificationPolicy, Verifier,
};
use crate::network::{MessageKind, Payload, Principal, WireMessage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrincipalError {
    #[error("{principal} cannot {action} in phase {phase}")]
    WrongPhase {
        principal: Principal,
        action: &'static str,
        phase: &'static str,
    },
    #[error("{principal} received unexpected {kind} message")]
    UnexpectedMessage { principal: Principal, kind: MessageKind },
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlicePhase {
    Fresh,
    Distributed,
    Signed,
}

impl AlicePhase {
    fn name(self) -> &'static str {
        match self {
            AlicePhase::Fresh => "Fresh",
            AlicePhase::Distributed => "Distributed",
            AlicePhase::Signed => "Signed",
        }
    }
}

/// The signer. Distributes keys once and signs exactly one message bit.
#[derive(Debug, Clone)]
pub struct AliceState {
    keystore: KeyStore,
    phase: AlicePhase,
    signed: Option<Bit>,
}

impl AliceState {
    pub fn new(keystore: KeyStore) -> Self {
        Self {
            keystore,
            phase: AlicePhase::Fresh,
            signed: None,
        }
    }

    pub fn phase(&self) -> AlicePhase {
        self.phase
    }

    pub fn keystore(&self) -> &KeyStore {
        &self.keystore
    }

    /// The bit Alice signed, once she has signed.
    pub fn signed_message(&self) -> Option<Bit> {
        self.signed
    }

    fn wrong_phase(&self, action: &'static str) -> PrincipalError {
        PrincipalError::WrongPhase {
            principal: Principal::A,
            action,
            phase: self.phase.name(),
        }
    }

    /// Emits the key distribution messages `(to B, to C)`.
    pub fn distribute(&mut self) -> Result<(WireMessage, WireMessage), PrincipalError> {
        if self.phase != AlicePhase::Fresh {
            return Err(self.wrong_phase("distribute keys"));
        }
        let [to_b, to_c] = Verifier::BOTH.map(|v| {
            let [k0, k1] = self.keystore.keys_for(v).clone();
            WireMessage::honest(Principal::A, v.into(), Payload::KeyDist { k0, k1 })
        });
        self.phase = AlicePhase::Distributed;
        Ok((to_b, to_c))
    }

    pub fn sign(&mut self, message: Bit, destination: Verifier) -> Result<WireMessage, PrincipalError> {
        if self.phase != AlicePhase::Distributed {
            return Err(self.wrong_phase("sign"));
        }
        let signed = SignedMessage::new(
            message,
            self.keystore.key(message, Verifier::B).clone(),
            self.keystore.key(message, Verifier::C).clone(),
        )?;
        self.phase = AlicePhase::Signed;
        self.signed = Some(message);
        Ok(WireMessage::honest(Principal::A, destination.into(), Payload::Sign(signed)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifierPhase {
    AwaitKeys,
    AwaitPartials,
    Ready,
    Decided,
}

impl VerifierPhase {
    pub fn name(self) -> &'static str {
        match self {
            VerifierPhase::AwaitKeys => "AwaitKeys",
            VerifierPhase::AwaitPartials => "AwaitPartials",
            VerifierPhase::Ready => "Ready",
            VerifierPhase::Decided => "Decided",
        }
    }
}

/// Where a verifier's two mask vectors come from.
#[derive(Debug, Clone)]
pub enum MaskChoice {
    /// Sample both masks from a deterministic RNG seeded with this value.
    Seeded(u64),
    /// Use exactly these masks, indexed by future message bit.
    Fixed([BitString; 2]),
}

impl MaskChoice {
    pub(crate) fn resolve(self, len: usize) -> Result<[BitString; 2], CoreError> {
        match self {
            MaskChoice::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok([sample_mask(len, &mut rng)?, sample_mask(len, &mut rng)?])
            }
            MaskChoice::Fixed(masks) => Ok(masks),
        }
    }
}

/// Accept/reject result recorded by a verifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub principal: Verifier,
    pub decision: Decision,
    /// Present iff `decision` is `Accept`.
    pub accepted_message: Option<Bit>,
    pub full_mismatches: usize,
    pub partial_mismatches: usize,
}

impl Outcome {
    pub fn accepted(&self) -> Option<Bit> {
        self.accepted_message
    }
}

/// Bob or Charlie.
#[derive(Debug, Clone)]
pub struct VerifierState {
    role: Verifier,
    phase: VerifierPhase,
    own_keys: Option<[BitString; 2]>,
    masks: Option<[BitString; 2]>,
    // positions this verifier kept (mask bit 0), per future message bit
    kept: Option<[PartialKey; 2]>,
    counterpart_partials: Option<[PartialKey; 2]>,
    outcome: Option<Outcome>,
    forward_on_reject: bool,
}

impl VerifierState {
    pub fn new(role: Verifier) -> Self {
        Self {
            role,
            phase: VerifierPhase::AwaitKeys,
            own_keys: None,
            masks: None,
            kept: None,
            counterpart_partials: None,
            outcome: None,
            forward_on_reject: false,
        }
    }

    /// Forward the signed message even after rejecting it. Off by default.
    pub fn with_forward_on_reject(mut self, forward_on_reject: bool) -> Self {
        self.forward_on_reject = forward_on_reject;
        self
    }

    pub fn role(&self) -> Verifier {
        self.role
    }

    pub fn phase(&self) -> VerifierPhase {
        self.phase
    }

    pub fn own_keys(&self) -> Option<&[BitString; 2]> {
        self.own_keys.as_ref()
    }

    pub fn masks(&self) -> Option<&[BitString; 2]> {
        self.masks.as_ref()
    }

    pub fn kept(&self) -> Option<&[PartialKey; 2]> {
        self.kept.as_ref()
    }

    pub fn counterpart_partials(&self) -> Option<&[PartialKey; 2]> {
        self.counterpart_partials.as_ref()
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    fn principal(&self) -> Principal {
        self.role.into()
    }

    fn wrong_phase(&self, action: &'static str) -> PrincipalError {
        PrincipalError::WrongPhase {
            principal: self.principal(),
            action,
            phase: self.phase.name(),
        }
    }

    fn unexpected(&self, payload: &Payload) -> PrincipalError {
        PrincipalError::UnexpectedMessage {
            principal: self.principal(),
            kind: payload.kind(),
        }
    }

    /// Stores the delivered keys, picks both masks and returns the partial
    /// share addressed to the counterpart verifier.
    pub fn receive_keys(&mut self, msg: &WireMessage, masks: MaskChoice) -> Result<WireMessage, PrincipalError> {
        if self.phase != VerifierPhase::AwaitKeys {
            return Err(self.wrong_phase("receive keys"));
        }
        let Payload::KeyDist { k0, k1 } = &msg.payload else {
            return Err(self.unexpected(&msg.payload));
        };
        let len = k0.len();
        let masks = masks.resolve(len)?;
        let p0 = mask(k0, &masks[0])?;
        let p1 = mask(k1, &masks[1])?;
        let kept = [
            mask(k0, &masks[0].complement())?,
            mask(k1, &masks[1].complement())?,
        ];
        self.own_keys = Some([k0.clone(), k1.clone()]);
        self.masks = Some(masks);
        self.kept = Some(kept);
        self.phase = VerifierPhase::AwaitPartials;
        Ok(WireMessage::honest(
            self.principal(),
            self.role.counterpart().into(),
            Payload::PartialShare { p0, p1 },
        ))
    }

    pub fn receive_partials(&mut self, msg: &WireMessage) -> Result<(), PrincipalError> {
        if self.phase != VerifierPhase::AwaitPartials {
            return Err(self.wrong_phase("receive partial keys"));
        }
        let Payload::PartialShare { p0, p1 } = &msg.payload else {
            return Err(self.unexpected(&msg.payload));
        };
        self.counterpart_partials = Some([p0.clone(), p1.clone()]);
        self.phase = VerifierPhase::Ready;
        Ok(())
    }

    /// Checks a signed message: the own-role component against the own key
    /// for that bit, the counterpart component against the counterpart's
    /// partial key for that bit.
    ///
    /// A verifier that accepts a message received directly from the signer
    /// forwards it to its counterpart.
    pub fn check(
        &mut self,
        msg: &WireMessage,
        policy: VerificationPolicy,
    ) -> Result<(Outcome, Option<WireMessage>), PrincipalError> {
        if self.phase != VerifierPhase::Ready {
            return Err(self.wrong_phase("check a signature"));
        }
        let (signed, from_signer) = match &msg.payload {
            Payload::Sign(s) => (s, true),
            Payload::Forward(s) => (s, false),
            other => return Err(self.unexpected(other)),
        };
        let (Some(own_keys), Some(partials)) = (&self.own_keys, &self.counterpart_partials) else {
            return Err(self.wrong_phase("check a signature"));
        };
        let m = signed.message.index();
        let own_sig = signed.component(self.role);
        let counterpart_sig = signed.component(self.role.counterpart());
        let full = verify_full(own_sig, &own_keys[m])?;
        let partial = verify_partial(counterpart_sig, &partials[m])?;
        let decision = decide(full, partial, own_sig.len(), partials[m].size(), policy);
        let outcome = Outcome {
            principal: self.role,
            decision,
            accepted_message: (decision == Decision::Accept).then_some(signed.message),
            full_mismatches: full,
            partial_mismatches: partial,
        };
        let forward = (from_signer && (decision == Decision::Accept || self.forward_on_reject)).then(|| {
            WireMessage::honest(
                self.principal(),
                self.role.counterpart().into(),
                Payload::Forward(signed.clone()),
            )
        });
        self.outcome = Some(outcome.clone());
        self.phase = VerifierPhase::Decided;
        Ok((outcome, forward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn store() -> KeyStore {
        KeyStore::new(bs("0"), bs("1"), bs("1"), bs("0")).unwrap()
    }

    fn ready_verifier(role: Verifier, keys: [&str; 2], masks: [&str; 2], partials: [PartialKey; 2]) -> VerifierState {
        let mut v = VerifierState::new(role);
        let keydist = WireMessage::honest(
            Principal::A,
            role.into(),
            Payload::KeyDist {
                k0: bs(keys[0]),
                k1: bs(keys[1]),
            },
        );
        v.receive_keys(&keydist, MaskChoice::Fixed([bs(masks[0]), bs(masks[1])])).unwrap();
        let [p0, p1] = partials;
        let share = WireMessage::honest(role.counterpart().into(), role.into(), Payload::PartialShare { p0, p1 });
        v.receive_partials(&share).unwrap();
        v
    }

    #[test]
    fn alice_distribute_emits_each_recipients_keys() {
        let mut alice = AliceState::new(store());
        let (to_b, to_c) = alice.distribute().unwrap();
        assert_eq!(to_b.intended_receiver, Principal::B);
        assert_eq!(to_b.payload, Payload::KeyDist { k0: bs("0"), k1: bs("1") });
        assert_eq!(to_c.intended_receiver, Principal::C);
        assert_eq!(to_c.payload, Payload::KeyDist { k0: bs("1"), k1: bs("0") });
        assert_eq!(alice.phase(), AlicePhase::Distributed);
        assert!(matches!(alice.distribute(), Err(PrincipalError::WrongPhase { .. })));
    }

    #[test]
    fn alice_sign_is_one_time() {
        let mut alice = AliceState::new(store());
        assert!(alice.sign(Bit::Zero, Verifier::B).is_err());
        alice.distribute().unwrap();
        let msg = alice.sign(Bit::Zero, Verifier::B).unwrap();
        assert_eq!(
            msg.payload,
            Payload::Sign(SignedMessage::new(Bit::Zero, bs("0"), bs("1")).unwrap())
        );
        assert_eq!(alice.signed_message(), Some(Bit::Zero));
        assert!(alice.sign(Bit::One, Verifier::B).is_err());

        let mut alice = AliceState::new(store());
        alice.distribute().unwrap();
        let msg = alice.sign(Bit::One, Verifier::B).unwrap();
        assert_eq!(
            msg.payload,
            Payload::Sign(SignedMessage::new(Bit::One, bs("1"), bs("0")).unwrap())
        );
    }

    #[test]
    fn receive_keys_all_forward_and_all_keep() {
        let keydist = WireMessage::honest(Principal::A, Principal::B, Payload::KeyDist { k0: bs("0"), k1: bs("1") });
        let mut v = VerifierState::new(Verifier::B);
        let share = v.receive_keys(&keydist, MaskChoice::Fixed([bs("1"), bs("1")])).unwrap();
        assert_eq!(share.intended_receiver, Principal::C);
        assert_eq!(
            share.payload,
            Payload::PartialShare {
                p0: PartialKey::from_entries(1, [(0, false)]).unwrap(),
                p1: PartialKey::from_entries(1, [(0, true)]).unwrap(),
            }
        );
        assert!(v.kept().unwrap().iter().all(PartialKey::is_empty));
        assert!(v.receive_keys(&keydist, MaskChoice::Seeded(0)).is_err());

        let mut v = VerifierState::new(Verifier::B);
        let share = v.receive_keys(&keydist, MaskChoice::Fixed([bs("0"), bs("0")])).unwrap();
        assert_eq!(
            share.payload,
            Payload::PartialShare {
                p0: PartialKey::empty(1),
                p1: PartialKey::empty(1),
            }
        );
    }

    #[test]
    fn receive_partials_phase_and_round_trip() {
        let mut v = VerifierState::new(Verifier::C);
        let full = [
            PartialKey::from_entries(2, [(0, true), (1, false)]).unwrap(),
            PartialKey::from_entries(2, [(0, false), (1, true)]).unwrap(),
        ];
        let share = WireMessage::honest(
            Principal::B,
            Principal::C,
            Payload::PartialShare {
                p0: full[0].clone(),
                p1: full[1].clone(),
            },
        );
        assert!(v.receive_partials(&share).is_err());
        let keydist = WireMessage::honest(Principal::A, Principal::C, Payload::KeyDist { k0: bs("10"), k1: bs("01") });
        v.receive_keys(&keydist, MaskChoice::Seeded(3)).unwrap();
        v.receive_partials(&share).unwrap();
        assert_eq!(v.phase(), VerifierPhase::Ready);
        assert_eq!(v.counterpart_partials().unwrap(), &full);
        assert!(v.receive_partials(&share).is_err());
    }

    #[test]
    fn honest_l1_trace() {
        let all = [bs("1"), bs("1")];
        let mut bob = ready_verifier(
            Verifier::B,
            ["0", "1"],
            ["1", "1"],
            [mask(&bs("1"), &all[0]).unwrap(), mask(&bs("0"), &all[1]).unwrap()],
        );
        let mut charlie = ready_verifier(
            Verifier::C,
            ["1", "0"],
            ["1", "1"],
            [mask(&bs("0"), &all[0]).unwrap(), mask(&bs("1"), &all[1]).unwrap()],
        );
        let sign = WireMessage::honest(
            Principal::A,
            Principal::B,
            Payload::Sign(SignedMessage::new(Bit::Zero, bs("0"), bs("1")).unwrap()),
        );
        let (outcome, forward) = bob.check(&sign, VerificationPolicy::ExactMatch).unwrap();
        assert_eq!(outcome.decision, Decision::Accept);
        let forward = forward.unwrap();
        assert_eq!(forward.intended_receiver, Principal::C);
        assert_eq!(
            forward.payload,
            Payload::Forward(SignedMessage::new(Bit::Zero, bs("0"), bs("1")).unwrap())
        );
        let (outcome, again) = charlie.check(&forward, VerificationPolicy::ExactMatch).unwrap();
        assert_eq!(outcome.accepted_message, Some(Bit::Zero));
        assert!(again.is_none());
        assert!(bob.check(&sign, VerificationPolicy::ExactMatch).is_err());
    }

    #[test]
    fn flipped_bit_is_rejected_and_not_forwarded() {
        let empty = [PartialKey::empty(2), PartialKey::empty(2)];
        let mut bob = ready_verifier(Verifier::B, ["10", "01"], ["00", "00"], empty.clone());
        let sign = WireMessage::honest(
            Principal::A,
            Principal::B,
            Payload::Sign(SignedMessage::new(Bit::Zero, bs("11"), bs("00")).unwrap()),
        );
        let (outcome, forward) = bob.check(&sign, VerificationPolicy::ExactMatch).unwrap();
        assert_eq!(outcome.decision, Decision::Reject);
        assert_eq!(outcome.accepted_message, None);
        assert_eq!(outcome.full_mismatches, 1);
        assert!(forward.is_none());

        let mut bob = ready_verifier(Verifier::B, ["10", "01"], ["00", "00"], empty).with_forward_on_reject(true);
        let (_, forward) = bob.check(&sign, VerificationPolicy::ExactMatch).unwrap();
        assert!(forward.is_some());
    }

    #[test]
    fn empty_counterpart_partial_is_vacuous() {
        let empty = [PartialKey::empty(2), PartialKey::empty(2)];
        let mut charlie = ready_verifier(Verifier::C, ["10", "01"], ["11", "11"], empty);
        let fwd = WireMessage::honest(
            Principal::B,
            Principal::C,
            Payload::Forward(SignedMessage::new(Bit::One, bs("11"), bs("01")).unwrap()),
        );
        let (outcome, _) = charlie.check(&fwd, VerificationPolicy::ExactMatch).unwrap();
        assert_eq!(outcome.accepted_message, Some(Bit::One));
        assert_eq!(outcome.partial_mismatches, 0);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let mut v = VerifierState::new(Verifier::B);
        let share = WireMessage::honest(
            Principal::C,
            Principal::B,
            Payload::PartialShare {
                p0: PartialKey::empty(1),
                p1: PartialKey::empty(1),
            },
        );
        assert!(matches!(
            v.receive_keys(&share, MaskChoice::Seeded(0)),
            Err(PrincipalError::UnexpectedMessage { .. })
        ));
    }
}
