use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, RlaError};

pub const NO_SELECTION: &str = "NO_SELECTION";

/// What a reader (machine or human) saw for one contest on one card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Votes(BTreeSet<String>),
    /// The contest is on the card but carries no valid vote.
    NoSelection,
}

impl Selection {
    pub fn votes<I, S>(candidates: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Selection::Votes(candidates.into_iter().map(Into::into).collect())
    }

    /// +1 for a vote for `winner` only, -1 for `loser` only, else 0.
    /// Selections with more marks than `max_marks` are overvotes and count 0.
    pub fn pair_contribution(&self, winner: &str, loser: &str, max_marks: usize) -> i32 {
        match self {
            Selection::Votes(v) if v.len() <= max_marks => {
                i32::from(v.contains(winner)) - i32::from(v.contains(loser))
            }
            _ => 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum MarkWire {
    Marker(String),
    Votes { selected: Vec<String> },
}

impl Serialize for Selection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Selection::NoSelection => MarkWire::Marker(NO_SELECTION.into()),
            Selection::Votes(v) => MarkWire::Votes {
                selected: v.iter().cloned().collect(),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Selection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match MarkWire::deserialize(d)? {
            MarkWire::Votes { selected } => Ok(Selection::votes(selected)),
            MarkWire::Marker(m) if m == NO_SELECTION => Ok(Selection::NoSelection),
            MarkWire::Marker(m) => Err(serde::de::Error::custom(format!("unknown selection marker {m:?}"))),
        }
    }
}

/// Machine interpretation of one card. Contests absent from the map are not
/// on the card; `NoSelection` means present with no vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cvr {
    pub card_id: String,
    pub interpretations: BTreeMap<String, Selection>,
}

impl Cvr {
    pub fn contains(&self, contest_id: &str) -> bool {
        self.interpretations.contains_key(contest_id)
    }
}

/// All CVRs keyed by card id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CvrSet {
    cvrs: BTreeMap<String, Cvr>,
}

impl CvrSet {
    /// Parses one JSON object per line; blank lines are skipped.
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut set = CvrSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cvr: Cvr = serde_json::from_str(line).map_err(|e| RlaError::parse(i + 1, e))?;
            set.insert(cvr)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, cvr: Cvr) -> Result<()> {
        if self.cvrs.contains_key(&cvr.card_id) {
            return Err(RlaError::DuplicateCvr { card_id: cvr.card_id });
        }
        self.cvrs.insert(cvr.card_id.clone(), cvr);
        Ok(())
    }

    /// Canonical JSON-lines form, sorted by card id.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for cvr in self.cvrs.values() {
            out.push_str(&serde_json::to_string(cvr).expect("CVRs serialize"));
            out.push('\n');
        }
        out
    }

    pub fn get(&self, card_id: &str) -> Option<&Cvr> {
        self.cvrs.get(card_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cvr> {
        self.cvrs.values()
    }

    pub fn len(&self) -> usize {
        self.cvrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cvrs.is_empty()
    }

    pub fn count_containing(&self, contest_id: &str) -> u64 {
        self.cvrs.values().filter(|c| c.contains(contest_id)).count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_votes_and_undervotes() {
        let set = CvrSet::parse_jsonl(
            "{\"card_id\":\"1:4:96\",\"interpretations\":{\"GOV\":{\"selected\":[\"A\"]}}}\n\
             \n\
             {\"card_id\":\"5:1:12\",\"interpretations\":{\"GOV\":\"NO_SELECTION\"}}\n",
        )
        .unwrap();
        assert_eq!(set.len(), 2);
        let first = set.get("1:4:96").unwrap();
        assert_eq!(first.interpretations["GOV"], Selection::votes(["A"]));
        let second = set.get("5:1:12").unwrap();
        assert_eq!(second.interpretations["GOV"], Selection::NoSelection);
        assert!(second.contains("GOV"));
        assert!(!second.contains("MAYOR"));
        assert_eq!(set.count_containing("GOV"), 2);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        let line = "{\"card_id\":\"1:4:96\",\"interpretations\":{}}";
        let err = CvrSet::parse_jsonl(&format!("{line}\n{line}\n")).unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_CVR");
        let err = CvrSet::parse_jsonl("{\"card_id\":1}\n").unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        let err = CvrSet::parse_jsonl("{\"card_id\":\"a\",\"interpretations\":{\"G\":\"MAYBE\"}}").unwrap_err();
        assert!(matches!(err, RlaError::Parse { line: 1, .. }));
    }

    #[test]
    fn canonical_jsonl_round_trips() {
        let text = "{\"card_id\":\"2:1:1\",\"interpretations\":{\"GOV\":\"NO_SELECTION\"}}\n\
                    {\"card_id\":\"1:1:1\",\"interpretations\":{\"GOV\":{\"selected\":[\"B\",\"A\"]}}}\n";
        let set = CvrSet::parse_jsonl(text).unwrap();
        let canonical = set.to_jsonl();
        assert!(canonical.starts_with("{\"card_id\":\"1:1:1\",\"interpretations\":{\"GOV\":{\"selected\":[\"A\",\"B\"]}}}"));
        assert_eq!(CvrSet::parse_jsonl(&canonical).unwrap().to_jsonl(), canonical);
    }

    #[test]
    fn pair_contributions() {
        let w = Selection::votes(["W"]);
        let l = Selection::votes(["L"]);
        let both = Selection::votes(["W", "L"]);
        assert_eq!(w.pair_contribution("W", "L", 1), 1);
        assert_eq!(l.pair_contribution("W", "L", 1), -1);
        assert_eq!(Selection::NoSelection.pair_contribution("W", "L", 1), 0);
        assert_eq!(both.pair_contribution("W", "L", 1), 0, "overvote");
        assert_eq!(both.pair_contribution("W", "L", 2), 0, "vote for both");
    }
}
