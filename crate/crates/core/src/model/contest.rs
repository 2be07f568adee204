use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlaError};

/// A top-`num_winners` plurality contest with its reported tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contest {
    pub id: String,
    pub name: String,
    pub candidates: Vec<String>,
    pub tally: BTreeMap<String, u64>,
    pub num_winners: usize,
    #[serde(with = "crate::real")]
    pub risk_limit: f64,
    /// Administrative upper bound on the number of cards containing the contest.
    pub card_upper_bound: u64,
}

impl Contest {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RlaError::invalid(format!("contest {}: {msg}", self.id)));
        if self.id.is_empty() {
            return Err(RlaError::invalid("contest id is empty"));
        }
        let distinct: BTreeSet<_> = self.candidates.iter().collect();
        if distinct.len() != self.candidates.len() {
            return bad("candidates are not distinct".into());
        }
        if self.num_winners == 0 || self.num_winners >= self.candidates.len() {
            return bad(format!(
                "num_winners {} must be in 1..{}",
                self.num_winners,
                self.candidates.len()
            ));
        }
        if let Some(extra) = self.tally.keys().find(|k| !distinct.contains(k)) {
            return bad(format!("tally names unknown candidate {extra}"));
        }
        if let Some(missing) = self.candidates.iter().find(|c| !self.tally.contains_key(*c)) {
            return bad(format!("tally is missing candidate {missing}"));
        }
        if !(self.risk_limit > 0.0 && self.risk_limit < 1.0) {
            return bad(format!("risk limit {} is outside (0, 1)", self.risk_limit));
        }
        let total: u64 = self.tally.values().sum();
        if total > self.card_upper_bound {
            return bad(format!(
                "{total} reported votes exceed the card upper bound {}",
                self.card_upper_bound
            ));
        }
        Ok(())
    }

    pub fn votes(&self, candidate: &str) -> u64 {
        self.tally.get(candidate).copied().unwrap_or(0)
    }

    /// Candidates ordered by reported votes, ties kept in declaration order.
    pub fn ranking(&self) -> Vec<&str> {
        let mut ranked: Vec<&str> = self.candidates.iter().map(String::as_str).collect();
        ranked.sort_by_key(|c| std::cmp::Reverse(self.votes(c)));
        ranked
    }

    /// Reported winners and losers. Fails when the last winning seat is tied.
    pub fn outcome(&self) -> Result<(Vec<&str>, Vec<&str>)> {
        let ranked = self.ranking();
        let w = self.num_winners;
        if self.votes(ranked[w - 1]) == self.votes(ranked[w]) {
            return Err(RlaError::TiedOutcome {
                contest_id: self.id.clone(),
            });
        }
        let (winners, losers) = ranked.split_at(w);
        Ok((winners.to_vec(), losers.to_vec()))
    }
}

/// Parses contest definitions: either a JSON array or `{"contests": [...]}`.
pub fn parse_contests(text: &str) -> Result<Vec<Contest>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        List(Vec<Contest>),
        Wrapped { contests: Vec<Contest> },
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| RlaError::parse(e.line(), e))?;
    let contests = match doc {
        Doc::List(c) | Doc::Wrapped { contests: c } => c,
    };
    let mut seen = BTreeSet::new();
    for c in &contests {
        c.validate()?;
        if !seen.insert(c.id.as_str()) {
            return Err(RlaError::invalid(format!("contest {} defined twice", c.id)));
        }
    }
    Ok(contests)
}

/// Margin in votes between one reported winner and one reported loser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMargin {
    pub winner: String,
    pub loser: String,
    pub winner_votes: u64,
    pub loser_votes: u64,
}

impl PairMargin {
    pub fn votes(&self) -> u64 {
        self.winner_votes - self.loser_votes
    }

    /// Reported winner share among ballots for either candidate.
    pub fn winner_share(&self) -> f64 {
        self.winner_votes as f64 / (self.winner_votes + self.loser_votes) as f64
    }
}

/// All winner/loser pair margins of one contest together with the two
/// dilution denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSet {
    pub contest_id: String,
    pub card_upper_bound: u64,
    pub population: u64,
    pub pairs: Vec<PairMargin>,
}

impl MarginSet {
    /// The pair with the smallest margin in votes; it drives the sample size.
    pub fn governing(&self) -> &PairMargin {
        self.pairs
            .iter()
            .min_by_key(|p| p.votes())
            .expect("a contest has at least one winner/loser pair")
    }

    /// Margin over the cards that contain the contest.
    pub fn partially_diluted(&self, pair: &PairMargin) -> f64 {
        pair.votes() as f64 / self.card_upper_bound as f64
    }

    /// Margin over the population the sample is drawn from.
    pub fn fully_diluted(&self, pair: &PairMargin) -> f64 {
        pair.votes() as f64 / self.population as f64
    }
}

/// Computes every winner/loser margin for `contest` from `tally`.
pub fn contest_margins(
    contest: &Contest,
    tally: &BTreeMap<String, u64>,
    population: u64,
) -> Result<MarginSet> {
    if contest.card_upper_bound == 0 {
        return Err(RlaError::invalid(format!(
            "contest {} has no cards",
            contest.id
        )));
    }
    if population < contest.card_upper_bound {
        return Err(RlaError::invalid(format!(
            "population {population} is smaller than the card upper bound {}",
            contest.card_upper_bound
        )));
    }
    let scored = Contest {
        tally: tally.clone(),
        ..contest.clone()
    };
    let (winners, losers) = scored.outcome()?;
    let pairs = winners
        .iter()
        .flat_map(|w| {
            losers.iter().map(|l| PairMargin {
                winner: w.to_string(),
                loser: l.to_string(),
                winner_votes: scored.votes(w),
                loser_votes: scored.votes(l),
            })
        })
        .collect();
    Ok(MarginSet {
        contest_id: contest.id.clone(),
        card_upper_bound: contest.card_upper_bound,
        population,
        pairs,
    })
}

#[cfg(test)]
pub(crate) fn contest(id: &str, tally: &[(&str, u64)], winners: usize, bound: u64) -> Contest {
    Contest {
        id: id.into(),
        name: id.into(),
        candidates: tally.iter().map(|(c, _)| c.to_string()).collect(),
        tally: tally.iter().map(|(c, v)| (c.to_string(), *v)).collect(),
        num_winners: winners,
        risk_limit: 0.05,
        card_upper_bound: bound,
    }
}
