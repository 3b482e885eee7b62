//! Deterministic simulator of the classical P2 one-time signature protocol
//! (Alice signs one bit, Bob and Charlie verify and transfer it), the
//! man-in-the-middle attack that breaks transferability, and an exhaustive
//! attacker-strategy search that rediscovers the attack.

pub mod adversary;
pub mod bits;
pub mod cli;
pub mod network;
pub mod principals;
pub mod search;
pub mod stats;

pub use adversary::{
    apply_action, naive_flip_strategy, table2_strategy, transparent_proxy, AttackerAction, AttackerStrategy,
    InterceptPoint, Knowledge,
};
pub use bits::{
    decide, generate_keys, mask, restore_partial, swap_future_message_keys, verify_full, verify_partial, Bit,
    BitString, CoreError, Decision, KeyStore, PartialKey, SignedMessage, VerificationPolicy, Verifier,
};
pub use network::{route, run_scenario, Instance, Interposition, Payload, Principal, RunOptions, Scenario, Transcript, WireMessage};
pub use principals::{AliceState, MaskChoice, Outcome, VerifierState};
pub use search::{check_strategy, enumerate_strategies, search, SecurityGoal, TestInstances, ViolationReport};
