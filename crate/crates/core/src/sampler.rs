//! Seeded consistent sampling.
//!
//! Every card gets a 64-bit number from SHA-256 of `"seed:card_id"`; the
//! sample for a contest is the `S` cards containing it with the smallest
//! numbers. Because all contests share one ordering, a card drawn for one
//! contest counts for every other contest whose threshold it falls under.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RlaError};
use crate::model::{CardRef, CardStyleTable, Manifest};

const TWO_64: f64 = 18_446_744_073_709_551_616.0;
/// 5^20: scales a 64-bit fraction to 20 decimal digits without overflow.
const FIVE_20: u128 = 95_367_431_640_625;
pub const EXPORT_DIGITS: usize = 20;

/// Published audit seed: a non-empty string of decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Seed(String);

impl Seed {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
            return Err(RlaError::invalid(format!("seed must be decimal digits, got {value:?}")));
        }
        Ok(Seed(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Seed {
    type Error = RlaError;
    fn try_from(value: String) -> Result<Self> {
        Seed::new(value)
    }
}

impl From<Seed> for String {
    fn from(seed: Seed) -> String {
        seed.0
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// First 8 bytes, big-endian, of SHA-256 over `preimage`.
fn hash64(preimage: &str) -> u64 {
    let digest = Sha256::digest(preimage.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Raw 64-bit number of a card; the unit-interval value is this over 2^64.
pub fn card_raw(seed: &Seed, card_id: &str) -> u64 {
    hash64(&format!("{}:{}", seed.0, card_id))
}

/// Raw number for the `j`-th ticket draw of a card (1-based).
pub fn ticket_raw(seed: &Seed, card_id: &str, j: u64) -> u64 {
    hash64(&format!("{}:{}:{}", seed.0, card_id, j))
}

pub fn to_unit(raw: u64) -> f64 {
    raw as f64 / TWO_64
}

/// The number as a 20-digit decimal fraction, truncated. Distinct raw values
/// give distinct strings and [`parse_number`] inverts it exactly.
pub fn format_number(raw: u64) -> String {
    let digits = (raw as u128 * FIVE_20) >> 44;
    format!("0.{digits:0width$}", width = EXPORT_DIGITS)
}

pub fn parse_number(text: &str) -> Result<u64> {
    let digits = text
        .strip_prefix("0.")
        .filter(|d| d.len() == EXPORT_DIGITS && d.bytes().all(|b| b.is_ascii_digit()))
        .ok_or_else(|| RlaError::invalid(format!("expected a 20-digit fraction, got {text:?}")))?;
    let d: u128 = digits.parse().expect("digits");
    let raw = (d << 44).div_ceil(FIVE_20);
    u64::try_from(raw).map_err(|_| RlaError::invalid(format!("{text} is not below 1")))
}

/// Every card's number, with cards held in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededAssignment {
    seed: Seed,
    order: Vec<(u64, String)>,
    index: HashMap<String, usize>,
}

/// Assigns numbers to `card_ids`; ties are broken by card id.
pub fn assign_numbers<'a>(seed: &Seed, card_ids: impl IntoIterator<Item = &'a str>) -> Result<SeededAssignment> {
    let mut order: Vec<(u64, String)> = card_ids
        .into_iter()
        .map(|id| (card_raw(seed, id), id.to_string()))
        .collect();
    order.sort_unstable();
    let mut index = HashMap::with_capacity(order.len());
    for (i, (_, id)) in order.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(RlaError::DuplicateCard { card_id: id.clone() });
        }
    }
    Ok(SeededAssignment {
        seed: seed.clone(),
        order,
        index,
    })
}

impl SeededAssignment {
    pub fn for_manifest(seed: &Seed, manifest: &Manifest) -> Result<Self> {
        assign_numbers(seed, manifest.cards().iter().map(|c| c.card_id.as_str()))
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn raw(&self, card_id: &str) -> Option<u64> {
        self.index.get(card_id).map(|&i| self.order[i].0)
    }

    pub fn number(&self, card_id: &str) -> Option<f64> {
        self.raw(card_id).map(to_unit)
    }

    /// Position of the card in the global order (0 = smallest number).
    pub fn rank(&self, card_id: &str) -> Option<usize> {
        self.index.get(card_id).copied()
    }

    /// Card ids from smallest to largest number.
    pub fn ordered(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|(_, id)| id.as_str())
    }

    /// `card_id,number` CSV in card order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("card_id,number\n");
        for (raw, id) in &self.order {
            out.push_str(id);
            out.push(',');
            out.push_str(&format_number(*raw));
            out.push('\n');
        }
        out
    }
}

/// The `size` smallest-numbered cards containing a contest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestSample {
    pub contest_id: String,
    pub size: u64,
    /// Number of the last card taken, or 0 for an empty sample.
    #[serde(with = "crate::real")]
    pub threshold: f64,
    pub card_ids: Vec<String>,
}

pub fn consistent_sample(
    assignment: &SeededAssignment,
    csd: &CardStyleTable,
    contest_id: &str,
    size: u64,
) -> Result<ContestSample> {
    let available = csd.count_containing(contest_id);
    if size > available {
        return Err(RlaError::FullCountRequired {
            contest_id: contest_id.to_string(),
            requested: size,
            available,
        });
    }
    let mut card_ids = Vec::with_capacity(size as usize);
    let mut threshold = 0;
    for (raw, id) in &assignment.order {
        if card_ids.len() as u64 == size {
            break;
        }
        if csd.contains(id, contest_id) {
            card_ids.push(id.clone());
            threshold = *raw;
        }
    }
    Ok(ContestSample {
        contest_id: contest_id.to_string(),
        size,
        threshold: to_unit(threshold),
        card_ids,
    })
}

/// Cards to pull: the union of the samples minus cards already audited,
/// ordered by location with phantoms last.
pub fn retrieval_list(samples: &[ContestSample], manifest: &Manifest, audited: &HashSet<String>) -> Vec<CardRef> {
    let wanted: BTreeSet<&str> = samples
        .iter()
        .flat_map(|s| s.card_ids.iter().map(String::as_str))
        .filter(|id| !audited.contains(*id))
        .collect();
    let mut cards: Vec<CardRef> = wanted
        .into_iter()
        .filter_map(|id| manifest.get(id).cloned())
        .collect();
    cards.sort_by_key(CardRef::retrieval_key);
    cards
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ticket {
    value: f64,
    raw: u64,
    card: usize,
    j: u64,
}

impl Eq for Ticket {}

impl Ord for Ticket {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.raw.cmp(&other.raw))
            .then(self.card.cmp(&other.card))
    }
}

impl PartialOrd for Ticket {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `-ln(1 - u)` for `u = raw / 2^64`, without cancellation near 1.
fn neg_log_complement(raw: u64) -> f64 {
    -(((u64::MAX - raw) as f64 + 1.0) / TWO_64).ln()
}

/// Sampling with replacement from the cards containing a contest.
///
/// Each card carries an increasing sequence of tickets: the first is its
/// `j = 1` hash value, and each later ticket is uniform on the interval
/// above the previous one, `x_j = x_{j-1} + (1 - x_{j-1}) u_j`. The `k` draws
/// are the `k` smallest tickets over all cards, so the draws for `k` are a
/// prefix of the draws for `k + 1`.
///
/// Tickets are compared as `-ln(1 - x_j)`, a running sum of `-ln(1 - u_j)`;
/// the order is the same and it does not saturate at 1 in floating point.
pub fn with_replacement_draws(seed: &Seed, csd: &CardStyleTable, contest_id: &str, k: u64) -> Vec<String> {
    let mut cards: Vec<&str> = csd.cards_containing(contest_id).collect();
    cards.sort_unstable();
    if cards.is_empty() {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ticket>> = cards
        .iter()
        .enumerate()
        .map(|(card, id)| {
            let raw = ticket_raw(seed, id, 1);
            Reverse(Ticket {
                value: neg_log_complement(raw),
                raw,
                card,
                j: 1,
            })
        })
        .collect();
    let mut draws = Vec::with_capacity(k as usize);
    while (draws.len() as u64) < k {
        let Reverse(t) = heap.pop().expect("every card always has a next ticket");
        draws.push(cards[t.card].to_string());
        let raw = ticket_raw(seed, cards[t.card], t.j + 1);
        let value = t.value + neg_log_complement(raw);
        heap.push(Reverse(Ticket {
            value,
            raw,
            card: t.card,
            j: t.j + 1,
        }));
    }
    draws
}
