//! Election data model: contests, the ballot manifest, card-style data and
//! cast-vote records, plus their canonical file formats.

mod contest;
mod csd;
mod cvr;
mod manifest;

pub use contest::{contest_margins, parse_contests, Contest, MarginSet, PairMargin};
pub use csd::{wide_csd_to_long, CardStyleTable, CSD_HEADER};
pub use cvr::{Cvr, CvrSet, Selection, NO_SELECTION};
pub use manifest::{CardRef, Manifest, MANIFEST_HEADER};

pub(crate) use cvr::MarkWire;

#[cfg(test)]
pub(crate) use contest::contest;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Serialized form of a complete election as accepted by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionInput {
    pub contests: Vec<Contest>,
    pub manifest_csv: String,
    pub csd_csv: String,
    pub cvrs_jsonl: String,
    #[serde(default)]
    pub cards_per_ballot: Option<u32>,
    #[serde(default)]
    pub ballot_count: Option<u64>,
}

/// Parsed and cross-referenced election data.
#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    pub contests: Vec<Contest>,
    pub manifest: Manifest,
    pub csd: CardStyleTable,
    pub cvrs: CvrSet,
}

impl Election {
    pub fn parse(input: &ElectionInput) -> Result<Self> {
        for c in &input.contests {
            c.validate()?;
        }
        let mut manifest = Manifest::parse_csv(&input.manifest_csv)?;
        if input.cards_per_ballot.is_some() || input.ballot_count.is_some() {
            let c = input.cards_per_ballot.unwrap_or(1);
            let n = input
                .ballot_count
                .unwrap_or_else(|| (manifest.located_count() as u64).div_ceil(c as u64));
            manifest = manifest.with_ballot_structure(c, n)?;
        }
        let csd = CardStyleTable::parse_csv(
            &input.csd_csv,
            &manifest,
            input.contests.iter().map(|c| c.id.as_str()),
        )?;
        let cvrs = CvrSet::parse_jsonl(&input.cvrs_jsonl)?;
        Ok(Election {
            contests: input.contests.clone(),
            manifest,
            csd,
            cvrs,
        })
    }

    /// Canonical serialized form; `parse(to_input())` is the identity.
    pub fn to_input(&self) -> ElectionInput {
        ElectionInput {
            contests: self.contests.clone(),
            manifest_csv: self.manifest.to_csv(),
            csd_csv: self.csd.to_csv(&self.manifest),
            cvrs_jsonl: self.cvrs.to_jsonl(),
            cards_per_ballot: Some(self.manifest.cards_per_ballot()),
            ballot_count: Some(self.manifest.ballot_count()),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_election(&self.manifest, &self.csd, &self.cvrs, &self.contests)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationFlag {
    /// More CVRs contain the contest than the upper bound allows.
    ExceedsBound,
    /// The CSD does not have one line per manifest card.
    CountMismatch,
    /// A CVR lists a contest its CSD entry does not.
    CsdCvrMismatch { card_id: String },
    /// A CVR refers to a card that is not in the manifest.
    CvrWithoutCard { card_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContestCheck {
    pub contest_id: String,
    pub cvr_count: u64,
    pub csd_count: u64,
    pub card_upper_bound: u64,
    pub flags: Vec<ValidationFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub manifest_cards: u64,
    pub csd_lines: u64,
    pub contests: Vec<ContestCheck>,
    pub flags: Vec<ValidationFlag>,
}

impl ValidationReport {
    pub fn exceeds_bound(&self) -> impl Iterator<Item = &ContestCheck> {
        self.contests
            .iter()
            .filter(|c| c.flags.contains(&ValidationFlag::ExceedsBound))
    }

    pub fn is_clean(&self) -> bool {
        self.flags.is_empty() && self.contests.iter().all(|c| c.flags.is_empty())
    }
}

/// Cross-checks the manifest, CSD and CVRs against the contest bounds.
/// Never fails; the engine decides what to do with the flags.
pub fn validate_election(
    manifest: &Manifest,
    csd: &CardStyleTable,
    cvrs: &CvrSet,
    contests: &[Contest],
) -> ValidationReport {
    let manifest_cards = manifest.located_count() as u64;
    let csd_lines = csd
        .iter()
        .filter(|(id, _)| manifest.get(id).is_some_and(|c| !c.is_phantom))
        .count() as u64;
    let mut flags = Vec::new();
    if csd_lines != manifest_cards {
        flags.push(ValidationFlag::CountMismatch);
    }
    for cvr in cvrs.iter() {
        if !manifest.contains(&cvr.card_id) {
            flags.push(ValidationFlag::CvrWithoutCard {
                card_id: cvr.card_id.clone(),
            });
        }
    }

    let contests = contests
        .iter()
        .map(|contest| {
            let cvr_count = cvrs.count_containing(&contest.id);
            let mut flags = Vec::new();
            if cvr_count > contest.card_upper_bound {
                flags.push(ValidationFlag::ExceedsBound);
            }
            for cvr in cvrs.iter().filter(|c| c.contains(&contest.id)) {
                if manifest.contains(&cvr.card_id) && !csd.contains(&cvr.card_id, &contest.id) {
                    flags.push(ValidationFlag::CsdCvrMismatch {
                        card_id: cvr.card_id.clone(),
                    });
                }
            }
            ContestCheck {
                contest_id: contest.id.clone(),
                cvr_count,
                csd_count: csd.count_containing(&contest.id),
                card_upper_bound: contest.card_upper_bound,
                flags,
            }
        })
        .collect();

    ValidationReport {
        manifest_cards,
        csd_lines,
        contests,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write;

    fn election(cards: usize, cvr_cards: usize, bound: u64) -> Election {
        let mut manifest = String::from("cart,tray,position\n");
        let mut csd = String::from("cart,tray,position,contests\n");
        let mut cvrs = String::new();
        for i in 0..cards {
            writeln!(manifest, "1,1,{i}").unwrap();
            writeln!(csd, "1,1,{i},S").unwrap();
        }
        for i in 0..cvr_cards {
            writeln!(cvrs, "{{\"card_id\":\"1:1:{i}\",\"interpretations\":{{\"S\":\"NO_SELECTION\"}}}}").unwrap();
        }
        let mut s = contest("S", &[("W", 0), ("L", 0)], 1, bound);
        s.tally.insert("W".into(), 1);
        Election::parse(&ElectionInput {
            contests: vec![s],
            manifest_csv: manifest,
            csd_csv: csd,
            cvrs_jsonl: cvrs,
            cards_per_ballot: None,
            ballot_count: None,
        })
        .unwrap()
    }

    #[test]
    fn bound_met_exactly_is_clean() {
        let e = election(1435, 1435, 1435);
        let report = e.validate();
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.contests[0].cvr_count, 1435);
    }

    #[test]
    fn cvrs_over_bound_are_flagged() {
        let e = election(11, 11, 10);
        let report = e.validate();
        assert_eq!(report.exceeds_bound().count(), 1);
        assert_eq!(report.contests[0].flags, [ValidationFlag::ExceedsBound]);
    }

    #[test]
    fn csd_line_count_must_match_manifest() {
        let mut e = election(3, 3, 3);
        e.manifest = Manifest::parse_csv("cart,tray,position\n1,1,0\n1,1,1\n1,1,2\n1,1,3\n").unwrap();
        let report = e.validate();
        assert_eq!(report.flags, [ValidationFlag::CountMismatch]);
    }

    #[test]
    fn cvr_contest_must_appear_in_csd() {
        let mut e = election(2, 0, 2);
        e.csd.insert("1:1:0", Default::default());
        e.cvrs = CvrSet::parse_jsonl("{\"card_id\":\"1:1:0\",\"interpretations\":{\"S\":\"NO_SELECTION\"}}\n").unwrap();
        let report = e.validate();
        assert_eq!(
            report.contests[0].flags,
            [ValidationFlag::CsdCvrMismatch { card_id: "1:1:0".into() }]
        );
    }

    #[test]
    fn input_round_trip() {
        let e = election(5, 4, 5);
        let again = Election::parse(&e.to_input()).unwrap();
        assert_eq!(again, e.clone().with_structure());
        assert_eq!(again.to_input(), e.to_input());
    }

    impl Election {
        fn with_structure(mut self) -> Self {
            let n = self.manifest.ballot_count();
            self.manifest = self.manifest.with_ballot_structure(1, n).unwrap();
            self
        }
    }
}
