use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::manifest::{CardRef, Manifest};
use crate::error::{Result, RlaError};

pub const CSD_HEADER: [&str; 4] = ["cart", "tray", "position", "contests"];

/// Card-style data: the contests each card is supposed to contain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CardStyleTable {
    styles: IndexMap<String, BTreeSet<String>>,
}

impl CardStyleTable {
    /// Parses long-form CSD. `contests` is a `|`-separated list; an empty
    /// field means the card contains none of the listed contests.
    pub fn parse_csv<'a>(
        text: &str,
        manifest: &Manifest,
        known_contests: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let known: BTreeSet<&str> = known_contests.into_iter().collect();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| RlaError::parse(1, e))?;
        if headers.iter().ne(CSD_HEADER) {
            return Err(RlaError::parse(1, format!("expected header {}", CSD_HEADER.join(","))));
        }
        let mut table = CardStyleTable::default();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                RlaError::parse(line, e)
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 4 {
                return Err(RlaError::parse(line, format!("expected 4 fields, found {}", record.len())));
            }
            let num = |i: usize| -> Result<u32> {
                record[i]
                    .parse()
                    .map_err(|_| RlaError::parse(line, format!("bad {} {:?}", CSD_HEADER[i], &record[i])))
            };
            let card = CardRef::located(num(0)?, num(1)?, num(2)?);
            if !manifest.contains(&card.card_id) {
                return Err(RlaError::UnknownCard { card_id: card.card_id });
            }
            let mut contests = BTreeSet::new();
            for id in record[3].split('|').map(str::trim).filter(|s| !s.is_empty()) {
                if !known.contains(id) {
                    return Err(RlaError::UnknownContest { contest_id: id.to_string() });
                }
                contests.insert(id.to_string());
            }
            if table.styles.insert(card.card_id.clone(), contests).is_some() {
                return Err(RlaError::DuplicateCard { card_id: card.card_id });
            }
        }
        Ok(table)
    }

    /// Canonical long-form CSV; contest lists are sorted, phantom rows omitted.
    pub fn to_csv(&self, manifest: &Manifest) -> String {
        let mut out = CSD_HEADER.join(",");
        out.push('\n');
        for (card_id, contests) in &self.styles {
            let Some(card) = manifest.get(card_id) else { continue };
            if card.is_phantom {
                continue;
            }
            let list: Vec<&str> = contests.iter().map(String::as_str).collect();
            out.push_str(&format!("{},{},{},{}\n", card.cart, card.tray, card.position, list.join("|")));
        }
        out
    }

    pub fn insert(&mut self, card_id: impl Into<String>, contests: BTreeSet<String>) {
        self.styles.insert(card_id.into(), contests);
    }

    pub fn contests_of(&self, card_id: &str) -> Option<&BTreeSet<String>> {
        self.styles.get(card_id)
    }

    pub fn contains(&self, card_id: &str, contest_id: &str) -> bool {
        self.styles.get(card_id).is_some_and(|s| s.contains(contest_id))
    }

    pub fn cards_containing<'a>(&'a self, contest_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.styles
            .iter()
            .filter(move |(_, s)| s.contains(contest_id))
            .map(|(id, _)| id.as_str())
    }

    pub fn count_containing(&self, contest_id: &str) -> u64 {
        self.cards_containing(contest_id).count() as u64
    }

    pub fn len(&self) -> usize {
        self.styles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.styles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.styles.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Converts wide-form CSD (one yes/no column per contest) to long form.
pub fn wide_csd_to_long(text: &str) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| RlaError::parse(1, e))?.clone();
    if headers.len() < 3 || headers.iter().take(3).ne(CSD_HEADER.iter().copied().take(3)) {
        return Err(RlaError::parse(1, "expected header cart,tray,position,<contest>..."));
    }
    let contests: Vec<&str> = headers.iter().skip(3).collect();
    let mut out = CSD_HEADER.join(",");
    out.push('\n');
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            RlaError::parse(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut listed: Vec<&str> = Vec::new();
        for (contest, cell) in contests.iter().zip(record.iter().skip(3)) {
            match cell.to_ascii_lowercase().as_str() {
                "yes" | "y" | "1" | "true" => listed.push(contest),
                "no" | "n" | "0" | "false" | "" => {}
                other => return Err(RlaError::parse(line, format!("expected yes/no, found {other:?}"))),
            }
        }
        listed.sort_unstable();
        out.push_str(&format!("{},{},{},{}\n", &record[0], &record[1], &record[2], listed.join("|")));
    }
    Ok(out)
}
