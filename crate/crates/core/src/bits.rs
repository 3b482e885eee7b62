//! Bit-level primitives shared by every principal: bitstrings, partial keys,
//! key stores, signed messages and the verification arithmetic.
//!
//! Bitstrings are packed little-endian into `u64` words (position 0 is the
//! least significant bit of the first word) and stored inline for lengths up
//! to 128, so the exhaustive grids in the test suite never touch the heap on
//! the hot path. Bits beyond `len` are always zero.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

const WORD_BITS: usize = 64;

type Words = SmallVec<[u64; 2]>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("key length must be at least 1")]
    ZeroLength,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("position {position} out of range for length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("partial key positions must be strictly increasing")]
    UnsortedPositions,
    #[error("invalid bit character {0:?}")]
    InvalidBit(char),
    #[error("malformed partial key entry {0:?}")]
    MalformedEntry(String),
    #[error("threshold fraction must lie in [0, 1), got {0}")]
    InvalidThreshold(String),
}

/// A single binary digit: a message bit or one element of a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub const BOTH: [Bit; 2] = [Bit::Zero, Bit::One];

    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_one(self) -> bool {
        self == Bit::One
    }
}

impl From<bool> for Bit {
    fn from(value: bool) -> Self {
        if value {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_one() { "1" } else { "0" })
    }
}

impl FromStr for Bit {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" => Ok(Bit::Zero),
            "1" => Ok(Bit::One),
            other => Err(CoreError::InvalidBit(other.chars().next().unwrap_or(' '))),
        }
    }
}

fn word_count(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Fixed-length sequence of bits. Carries keys, mask vectors and signatures.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    len: usize,
    words: Words,
}

impl BitString {
    pub fn zeros(len: usize) -> Result<Self, CoreError> {
        if len == 0 {
            return Err(CoreError::ZeroLength);
        }
        Ok(Self {
            len,
            words: SmallVec::from_elem(0, word_count(len)),
        })
    }

    pub fn ones(len: usize) -> Result<Self, CoreError> {
        let mut s = Self::zeros(len)?;
        for w in s.words.iter_mut() {
            *w = u64::MAX;
        }
        s.clear_tail();
        Ok(s)
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self, CoreError> {
        let mut words = Words::new();
        let mut len = 0;
        for b in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if b {
                words[len / WORD_BITS] |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        if len == 0 {
            return Err(CoreError::ZeroLength);
        }
        Ok(Self { len, words })
    }

    /// Builds a bitstring of length `len` whose position `i` holds bit `i` of
    /// `value` (least significant first). Used to enumerate all strings of a
    /// small length.
    pub fn from_index(value: u64, len: usize) -> Result<Self, CoreError> {
        let mut s = Self::zeros(len)?;
        s.words[0] = value;
        s.clear_tail();
        Ok(s)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self, CoreError> {
        let mut s = Self::zeros(len)?;
        for w in s.words.iter_mut() {
            *w = rng.gen();
        }
        s.clear_tail();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, position: usize) -> Option<bool> {
        (position < self.len).then(|| self.words[position / WORD_BITS] >> (position % WORD_BITS) & 1 == 1)
    }

    pub fn set(&mut self, position: usize, bit: bool) -> Result<(), CoreError> {
        if position >= self.len {
            return Err(CoreError::PositionOutOfRange { position, len: self.len });
        }
        let word = &mut self.words[position / WORD_BITS];
        let flag = 1u64 << (position % WORD_BITS);
        if bit {
            *word |= flag;
        } else {
            *word &= !flag;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1)
    }

    /// Bitwise complement.
    pub fn complement(&self) -> BitString {
        let mut s = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        s.clear_tail();
        s
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn clear_tail(&mut self) {
        let mask = tail_mask(self.len);
        if let Some(last) = self.words.last_mut() {
            *last &= mask;
        }
    }

    fn check_same_len(&self, other: &BitString) -> Result<(), CoreError> {
        if self.len != other.len {
            return Err(CoreError::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CoreError::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(bits)
    }
}

/// The forwarded subset of a key: positions selected by a mask vector together
/// with the key's bits at those positions.
///
/// Stored as a selection vector plus the selected bits over the key's domain,
/// so positions are strictly increasing and below the domain length by
/// construction.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PartialKey {
    len: usize,
    select: Words,
    bits: Words,
}

impl PartialKey {
    /// Empty partial key over a domain of `len` positions.
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            select: SmallVec::from_elem(0, word_count(len)),
            bits: SmallVec::from_elem(0, word_count(len)),
        }
    }

    /// Builds a partial key from explicit `(position, bit)` entries. Positions
    /// must be strictly increasing and below `len`.
    pub fn from_entries<I>(len: usize, entries: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = (usize, bool)>,
    {
        let mut partial = Self::empty(len);
        let mut previous: Option<usize> = None;
        for (position, bit) in entries {
            if position >= len {
                return Err(CoreError::PositionOutOfRange { position, len });
            }
            if previous.is_some_and(|p| p >= position) {
                return Err(CoreError::UnsortedPositions);
            }
            previous = Some(position);
            let flag = 1u64 << (position % WORD_BITS);
            partial.select[position / WORD_BITS] |= flag;
            if bit {
                partial.bits[position / WORD_BITS] |= flag;
            }
        }
        Ok(partial)
    }

    /// Length of the key domain this partial key was taken from.
    pub fn domain_len(&self) -> usize {
        self.len
    }

    /// Number of entries.
    pub fn size(&self) -> usize {
        self.select.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.select.iter().all(|&w| w == 0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        (0..self.len).filter_map(move |i| {
            let (w, b) = (i / WORD_BITS, i % WORD_BITS);
            (self.select[w] >> b & 1 == 1).then(|| (i, self.bits[w] >> b & 1 == 1))
        })
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries().map(|(p, _)| p)
    }

    fn max_position(&self) -> Option<usize> {
        self.select
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i * WORD_BITS + (WORD_BITS - 1 - w.leading_zeros() as usize))
    }

    fn check_fits(&self, len: usize) -> Result<(), CoreError> {
        match self.max_position() {
            Some(position) if position >= len => Err(CoreError::PositionOutOfRange { position, len }),
            _ => Ok(()),
        }
    }

    /// Parses the textual form `1:0,2:1` (or `-` for the empty partial) over a
    /// domain of `len` positions.
    pub fn parse(text: &str, len: usize) -> Result<Self, CoreError> {
        if text == "-" {
            return Ok(Self::empty(len));
        }
        let entries = text
            .split(',')
            .map(|entry| {
                let (pos, bit) = entry
                    .split_once(':')
                    .ok_or_else(|| CoreError::MalformedEntry(entry.to_string()))?;
                let pos: usize = pos
                    .parse()
                    .map_err(|_| CoreError::MalformedEntry(entry.to_string()))?;
                let bit: Bit = bit.parse()?;
                Ok((pos, bit.is_one()))
            })
            .collect::<Result<Vec<_>, CoreError>>()?;
        Self::from_entries(len, entries)
    }
}

impl fmt::Display for PartialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (i, (position, bit)) in self.entries().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{position}:{}", u8::from(bit))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PartialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartialKey({self})")
    }
}

/// The verifier a key is destined for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verifier {
    B,
    C,
}

impl Verifier {
    pub const BOTH: [Verifier; 2] = [Verifier::B, Verifier::C];

    pub fn counterpart(self) -> Verifier {
        match self {
            Verifier::B => Verifier::C,
            Verifier::C => Verifier::B,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Verifier::B => 'B',
            Verifier::C => 'C',
        }
    }
}

impl fmt::Display for Verifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Verifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" | "b" => Ok(Verifier::B),
            "C" | "c" => Ok(Verifier::C),
            other => Err(format!("unknown verifier {other:?}")),
        }
    }
}

/// Alice's four one-time keys, indexed by future message bit and recipient.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct KeyStore {
    // [recipient][future message bit]
    keys: [[BitString; 2]; 2],
}

impl KeyStore {
    pub fn new(k0b: BitString, k1b: BitString, k0c: BitString, k1c: BitString) -> Result<Self, CoreError> {
        k0b.check_same_len(&k1b)?;
        k0b.check_same_len(&k0c)?;
        k0b.check_same_len(&k1c)?;
        Ok(Self {
            keys: [[k0b, k1b], [k0c, k1c]],
        })
    }

    pub fn key(&self, message: Bit, recipient: Verifier) -> &BitString {
        &self.keys[recipient.index()][message.index()]
    }

    /// Both keys destined for `recipient`, ordered by future message bit.
    pub fn keys_for(&self, recipient: Verifier) -> &[BitString; 2] {
        &self.keys[recipient.index()]
    }

    pub fn len(&self) -> usize {
        self.keys[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Draws Alice's four keys uniformly and independently. Deterministic per seed.
pub fn generate_keys(len: usize, seed: u64) -> Result<KeyStore, CoreError> {
    if len == 0 {
        return Err(CoreError::ZeroLength);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_keys_with(len, &mut rng)
}

pub fn generate_keys_with<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<KeyStore, CoreError> {
    KeyStore::new(
        BitString::random(len, rng)?,
        BitString::random(len, rng)?,
        BitString::random(len, rng)?,
        BitString::random(len, rng)?,
    )
}

/// `(m, k_mB, k_mC)` as sent by Alice.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SignedMessage {
    pub message: Bit,
    pub sig_b: BitString,
    pub sig_c: BitString,
}

impl SignedMessage {
    pub fn new(message: Bit, sig_b: BitString, sig_c: BitString) -> Result<Self, CoreError> {
        sig_b.check_same_len(&sig_c)?;
        Ok(Self { message, sig_b, sig_c })
    }

    /// The signature component bound to `verifier`'s key.
    pub fn component(&self, verifier: Verifier) -> &BitString {
        match verifier {
            Verifier::B => &self.sig_b,
            Verifier::C => &self.sig_c,
        }
    }

    pub fn with_message(&self, message: Bit) -> Self {
        Self {
            message,
            ..self.clone()
        }
    }
}

/// Exact rational fraction `numerator / denominator`, strictly below one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    numerator: u64,
    denominator: u64,
}

impl Fraction {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, CoreError> {
        if denominator == 0 || numerator >= denominator {
            return Err(CoreError::InvalidThreshold(format!("{numerator}/{denominator}")));
        }
        Ok(Self { numerator, denominator })
    }

    /// floor(self * count)
    pub fn floor_of(self, count: usize) -> usize {
        ((self.numerator as u128 * count as u128) / self.denominator as u128) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for Fraction {
    type Err = CoreError;

    /// Accepts `a/b` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CoreError::InvalidThreshold(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            return Self::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let denominator = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numerator = int.checked_mul(denominator).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Self::new(numerator, denominator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum VerificationPolicy {
    #[default]
    ExactMatch,
    Threshold(Fraction),
}

impl fmt::Display for VerificationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerificationPolicy::ExactMatch => f.write_str("exact"),
            VerificationPolicy::Threshold(fraction) => write!(f, "threshold({fraction})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        })
    }
}

/// Selects the key elements whose mask bit is 1; those are the elements
/// forwarded to the other verifier.
pub fn mask(key: &BitString, mask_vector: &BitString) -> Result<PartialKey, CoreError> {
    key.check_same_len(mask_vector)?;
    Ok(PartialKey {
        len: key.len,
        select: mask_vector.words.clone(),
        bits: key.words.iter().zip(&mask_vector.words).map(|(k, n)| k & n).collect(),
    })
}

/// Number of positions where `sig` and `stored_key` differ.
pub fn verify_full(sig: &BitString, stored_key: &BitString) -> Result<usize, CoreError> {
    sig.check_same_len(stored_key)?;
    Ok(sig
        .words
        .iter()
        .zip(&stored_key.words)
        .map(|(a, b)| (a ^ b).count_ones() as usize)
        .sum())
}

/// Number of partial-key entries that disagree with `sig`. Positions absent
/// from the partial key impose no constraint.
pub fn verify_partial(sig: &BitString, partial: &PartialKey) -> Result<usize, CoreError> {
    partial.check_fits(sig.len)?;
    Ok(partial
        .select
        .iter()
        .zip(&partial.bits)
        .zip(sig.words.iter())
        .map(|((sel, bits), s)| ((s ^ bits) & sel).count_ones() as usize)
        .sum())
}

pub fn decide(full_mismatches: usize, partial_mismatches: usize, len: usize, partial_size: usize, policy: VerificationPolicy) -> Decision {
    let accepted = match policy {
        VerificationPolicy::ExactMatch => full_mismatches == 0 && partial_mismatches == 0,
        VerificationPolicy::Threshold(fraction) => {
            full_mismatches <= fraction.floor_of(len) && partial_mismatches <= fraction.floor_of(partial_size)
        }
    };
    if accepted {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Rebinds two keys to the opposite future message bits.
pub fn swap_future_message_keys(k0: &BitString, k1: &BitString) -> Result<(BitString, BitString), CoreError> {
    k0.check_same_len(k1)?;
    Ok((k1.clone(), k0.clone()))
}

/// Keeps the positions of `partial_from_swapped` but takes each bit from
/// `original_key`. The positions reveal the mask, so this equals
/// `mask(original_key, n)` for whatever `n` produced the input.
pub fn restore_partial(original_key: &BitString, partial_from_swapped: &PartialKey) -> Result<PartialKey, CoreError> {
    partial_from_swapped.check_fits(original_key.len)?;
    let mut select = partial_from_swapped.select.clone();
    select.resize(word_count(original_key.len), 0);
    let bits = select.iter().zip(&original_key.words).map(|(s, k)| s & k).collect();
    Ok(PartialKey {
        len: original_key.len,
        select,
        bits,
    })
}

/// Draws one uniformly random mask vector.
pub fn sample_mask<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<BitString, CoreError> {
    BitString::random(len, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn pk(len: usize, entries: &[(usize, u8)]) -> PartialKey {
        PartialKey::from_entries(len, entries.iter().map(|&(p, b)| (p, b == 1))).unwrap()
    }

    #[test]
    fn generate_keys_is_deterministic() {
        let a = generate_keys(1, 42).unwrap();
        let b = generate_keys(1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn generate_keys_rejects_zero_length() {
        assert_eq!(generate_keys(0, 1), Err(CoreError::ZeroLength));
    }

    #[test]
    fn distinct_seeds_give_distinct_stores() {
        // 16 random bits per store; a pair collides with probability 2^-16.
        let distinct = (0..1000u64)
            .filter(|&i| generate_keys(4, 2 * i).unwrap() != generate_keys(4, 2 * i + 1).unwrap())
            .count();
        assert!(distinct >= 990, "only {distinct} of 1000 pairs differ");
    }

    #[test]
    fn mask_examples() {
        assert_eq!(mask(&bs("1011"), &bs("0110")).unwrap(), pk(4, &[(1, 0), (2, 1)]));
        assert!(mask(&bs("10"), &bs("00")).unwrap().is_empty());
        assert_eq!(mask(&bs("10"), &bs("11")).unwrap(), pk(2, &[(0, 1), (1, 0)]));
        assert!(matches!(mask(&bs("10"), &bs("110")), Err(CoreError::LengthMismatch { .. })));
    }

    #[test]
    fn verify_full_examples() {
        assert_eq!(verify_full(&bs("1011"), &bs("1011")).unwrap(), 0);
        assert_eq!(verify_full(&bs("1011"), &bs("0100")).unwrap(), 4);
        assert_eq!(verify_full(&bs("10"), &bs("11")).unwrap(), 1);
        assert!(verify_full(&bs("10"), &bs("1")).is_err());
    }

    #[test]
    fn verify_partial_examples() {
        let sig = bs("1011");
        assert_eq!(verify_partial(&sig, &PartialKey::empty(4)).unwrap(), 0);
        assert_eq!(verify_partial(&sig, &pk(4, &[(1, 0), (2, 1)])).unwrap(), 0);
        assert_eq!(verify_partial(&sig, &pk(4, &[(1, 1)])).unwrap(), 1);
        assert_eq!(
            verify_partial(&bs("10"), &pk(4, &[(3, 1)])),
            Err(CoreError::PositionOutOfRange { position: 3, len: 2 })
        );
    }

    #[test]
    fn decide_examples() {
        let quarter: Fraction = "0.25".parse().unwrap();
        assert_eq!(decide(0, 0, 4, 0, VerificationPolicy::ExactMatch), Decision::Accept);
        assert_eq!(decide(1, 0, 4, 2, VerificationPolicy::ExactMatch), Decision::Reject);
        assert_eq!(decide(1, 0, 4, 2, VerificationPolicy::Threshold(quarter)), Decision::Accept);
        assert_eq!(decide(2, 0, 4, 2, VerificationPolicy::Threshold(quarter)), Decision::Reject);
        // floor(0.25 * 2) = 0 tolerated partial mismatches
        assert_eq!(decide(0, 1, 4, 2, VerificationPolicy::Threshold(quarter)), Decision::Reject);
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("0.25".parse::<Fraction>().unwrap(), Fraction::new(25, 100).unwrap());
        assert_eq!("1/3".parse::<Fraction>().unwrap().floor_of(9), 3);
        assert!("1".parse::<Fraction>().is_err());
        assert!("1.0".parse::<Fraction>().is_err());
        assert!("-0.1".parse::<Fraction>().is_err());
        assert!("0.x".parse::<Fraction>().is_err());
    }

    #[test]
    fn swap_examples() {
        let (a, b) = swap_future_message_keys(&bs("00"), &bs("11")).unwrap();
        assert_eq!((a.to_string(), b.to_string()), ("11".into(), "00".into()));
        let k = bs("0110");
        assert_eq!(swap_future_message_keys(&k, &k).unwrap(), (k.clone(), k.clone()));
        let (x, y) = swap_future_message_keys(&bs("01"), &bs("10")).unwrap();
        let (x, y) = swap_future_message_keys(&x, &y).unwrap();
        assert_eq!((x, y), (bs("01"), bs("10")));
    }

    #[test]
    fn restore_examples() {
        let original = bs("1011");
        for bits in [(0, 0), (1, 1), (0, 1), (1, 0)] {
            let partial = pk(4, &[(1, bits.0), (2, bits.1)]);
            assert_eq!(restore_partial(&original, &partial).unwrap(), pk(4, &[(1, 0), (2, 1)]));
        }
        let n = bs("1100");
        let m = mask(&original, &n).unwrap();
        assert_eq!(restore_partial(&original, &m).unwrap(), m);
        assert!(restore_partial(&bs("10"), &pk(3, &[(2, 1)])).is_err());
    }

    #[test]
    fn renderings() {
        assert_eq!(bs("1011").to_string(), "1011");
        assert_eq!(pk(4, &[(1, 0), (2, 1)]).to_string(), "1:0,2:1");
        assert_eq!(PartialKey::empty(3).to_string(), "-");
        assert_eq!(PartialKey::parse("1:0,2:1", 4).unwrap(), pk(4, &[(1, 0), (2, 1)]));
        assert_eq!(PartialKey::parse("-", 4).unwrap(), PartialKey::empty(4));
        assert_eq!(PartialKey::parse("2:1,1:0", 4), Err(CoreError::UnsortedPositions));
        assert!("10a".parse::<BitString>().is_err());
        assert!("".parse::<BitString>().is_err());
    }

    #[test]
    fn packing_spans_words() {
        let text: String = (0..130).map(|i| if i % 3 == 0 { '1' } else { '0' }).collect();
        let s: BitString = text.parse().unwrap();
        assert_eq!(s.len(), 130);
        assert_eq!(s.to_string(), text);
        assert_eq!(s.count_ones(), 44);
        let ones = BitString::ones(130).unwrap();
        let m = mask(&s, &ones).unwrap();
        assert_eq!(m.size(), 130);
        assert_eq!(verify_partial(&s, &m).unwrap(), 0);
        assert_eq!(verify_full(&s, &ones).unwrap(), 86);
        let p = PartialKey::from_entries(130, [(129, true)]).unwrap();
        assert_eq!(verify_partial(&s, &p).unwrap(), 0);
        assert!(verify_partial(&bs("1"), &p).is_err());
    }

    #[test]
    fn from_index_enumerates_low_bits_first() {
        assert_eq!(BitString::from_index(0b0110, 4).unwrap().to_string(), "0110");
        assert_eq!(BitString::from_index(0b0001, 4).unwrap().to_string(), "1000");
        assert_eq!(BitString::from_index(0b1111, 2).unwrap().to_string(), "11");
    }
}
