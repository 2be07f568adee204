use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math::Observation;
use crate::model::{Contest, Cvr, MarkWire, PairMargin, Selection, NO_SELECTION};

pub const CONTEST_NOT_ON_CARD: &str = "CONTEST_NOT_ON_CARD";

/// What the audit board saw for one contest on a retrieved card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reading {
    Marked(Selection),
    /// The card does not contain the contest, contrary to the CSD.
    ContestNotOnCard,
}

impl Reading {
    pub fn votes<I, S>(candidates: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Reading::Marked(Selection::votes(candidates))
    }

    pub fn no_selection() -> Self {
        Reading::Marked(Selection::NoSelection)
    }

    fn pair_contribution(&self, pair: &PairMargin, max_marks: usize) -> i32 {
        match self {
            Reading::Marked(s) => s.pair_contribution(&pair.winner, &pair.loser, max_marks),
            Reading::ContestNotOnCard => 0,
        }
    }
}

impl Serialize for Reading {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Reading::Marked(sel) => sel.serialize(s),
            Reading::ContestNotOnCard => MarkWire::Marker(CONTEST_NOT_ON_CARD.into()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Reading {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match MarkWire::deserialize(d)? {
            MarkWire::Votes { selected } => Ok(Reading::votes(selected)),
            MarkWire::Marker(m) if m == NO_SELECTION => Ok(Reading::no_selection()),
            MarkWire::Marker(m) if m == CONTEST_NOT_ON_CARD => Ok(Reading::ContestNotOnCard),
            MarkWire::Marker(m) => Err(serde::de::Error::custom(format!("unknown reading {m:?}"))),
        }
    }
}

/// The audit board's record for one retrieved card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    pub card_id: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub not_found: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub contests: BTreeMap<String, Reading>,
}

impl Interpretation {
    pub fn found(card_id: impl Into<String>, contests: impl IntoIterator<Item = (String, Reading)>) -> Self {
        Interpretation {
            card_id: card_id.into(),
            not_found: false,
            contests: contests.into_iter().collect(),
        }
    }

    pub fn not_found(card_id: impl Into<String>) -> Self {
        Interpretation {
            card_id: card_id.into(),
            not_found: true,
            contests: BTreeMap::new(),
        }
    }
}

/// Overstatement for one pair: the CVR's contribution to the pair margin
/// minus the manual contribution. A missing CVR counts as a non-vote.
pub fn score_comparison(cvr: Option<&Selection>, manual: &Reading, pair: &PairMargin, max_marks: usize) -> i32 {
    let reported = cvr.map_or(0, |s| s.pair_contribution(&pair.winner, &pair.loser, max_marks));
    reported - manual.pair_contribution(pair, max_marks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardScore {
    pub discrepancy: i32,
    pub csd_error: bool,
}

/// Discrepancy of one sampled card for one contest: the largest pair
/// overstatement. Missing cards and phantoms score 2.
pub(crate) fn comparison_card_score(
    contest: &Contest,
    pairs: &[PairMargin],
    cvr: Option<&Cvr>,
    interpretation: Option<&Interpretation>,
) -> CardScore {
    let reading = match interpretation {
        Some(i) if !i.not_found => i.contests.get(&contest.id),
        _ => None,
    };
    let Some(reading) = reading else {
        return CardScore {
            discrepancy: 2,
            csd_error: false,
        };
    };
    let reported = cvr.and_then(|c| c.interpretations.get(&contest.id));
    let worst = pairs
        .iter()
        .map(|p| score_comparison(reported, reading, p, contest.num_winners))
        .max()
        .unwrap_or(0);
    CardScore {
        // no CVR at all: understatements are not recorded
        discrepancy: if cvr.is_none() { worst.max(0) } else { worst },
        csd_error: *reading == Reading::ContestNotOnCard,
    }
}

/// Effect of one sampled card on one pairwise SPRT. Missing cards and
/// phantoms count against the reported winner.
pub(crate) fn polling_observation(
    contest: &Contest,
    pair: &PairMargin,
    interpretation: Option<&Interpretation>,
) -> Observation {
    let reading = match interpretation {
        Some(i) if !i.not_found => i.contests.get(&contest.id),
        _ => None,
    };
    match reading {
        None => Observation::Loser,
        Some(r) => match r.pair_contribution(pair, contest.num_winners) {
            1 => Observation::Winner,
            -1 => Observation::Loser,
            _ => Observation::Neither,
        },
    }
}
