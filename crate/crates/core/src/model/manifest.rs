use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlaError};

pub const MANIFEST_HEADER: [&str; 3] = ["cart", "tray", "position"];

/// Physical location of one ballot card, or a phantom placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CardRef {
    pub cart: u32,
    pub tray: u32,
    pub position: u32,
    pub card_id: String,
    pub is_phantom: bool,
}

impl CardRef {
    pub fn located(cart: u32, tray: u32, position: u32) -> Self {
        CardRef {
            cart,
            tray,
            position,
            card_id: format!("{cart}:{tray}:{position}"),
            is_phantom: false,
        }
    }

    /// The `k`-th phantom card (1-based).
    pub fn phantom(k: usize) -> Self {
        CardRef {
            cart: 0,
            tray: 0,
            position: 0,
            card_id: format!("phantom:{k}"),
            is_phantom: true,
        }
    }

    fn phantom_index(&self) -> usize {
        self.card_id
            .strip_prefix("phantom:")
            .and_then(|k| k.parse().ok())
            .unwrap_or(usize::MAX)
    }

    /// Retrieval order: by location, phantoms last in creation order.
    pub fn retrieval_key(&self) -> (bool, u32, u32, u32, usize) {
        (
            self.is_phantom,
            self.cart,
            self.tray,
            self.position,
            if self.is_phantom { self.phantom_index() } else { 0 },
        )
    }
}

impl fmt::Display for CardRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.card_id)
    }
}

/// The sampling frame: where every cast card is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    cards: Vec<CardRef>,
    cards_per_ballot: u32,
    ballot_count: u64,
    index: HashMap<String, usize>,
}

impl Manifest {
    pub fn new(cards: Vec<CardRef>) -> Result<Self> {
        let mut index = HashMap::with_capacity(cards.len());
        for (i, card) in cards.iter().enumerate() {
            if index.insert(card.card_id.clone(), i).is_some() {
                return Err(RlaError::DuplicateCard {
                    card_id: card.card_id.clone(),
                });
            }
        }
        let ballot_count = cards.iter().filter(|c| !c.is_phantom).count() as u64;
        Ok(Manifest {
            cards,
            cards_per_ballot: 1,
            ballot_count,
            index,
        })
    }

    /// Parses `cart,tray,position` CSV. Ballot structure defaults to one
    /// card per ballot; see [`Manifest::with_ballot_structure`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| RlaError::parse(1, e))?;
        if headers.iter().ne(MANIFEST_HEADER) {
            return Err(RlaError::parse(
                1,
                format!("expected header {}", MANIFEST_HEADER.join(",")),
            ));
        }
        let mut cards = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                RlaError::parse(line, e)
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| -> Result<u32> {
                record[i]
                    .parse()
                    .map_err(|_| RlaError::parse(line, format!("bad {} {:?}", MANIFEST_HEADER[i], &record[i])))
            };
            cards.push(CardRef::located(field(0)?, field(1)?, field(2)?));
        }
        Manifest::new(cards)
    }

    /// Records `c` cards per ballot and `n` ballots cast.
    pub fn with_ballot_structure(mut self, cards_per_ballot: u32, ballot_count: u64) -> Result<Self> {
        if cards_per_ballot == 0 {
            return Err(RlaError::invalid("cards_per_ballot must be positive"));
        }
        let located = self.located_count() as u64;
        if located > ballot_count * cards_per_ballot as u64 {
            return Err(RlaError::invalid(format!(
                "{located} located cards exceed {ballot_count} ballots x {cards_per_ballot} cards"
            )));
        }
        self.cards_per_ballot = cards_per_ballot;
        self.ballot_count = ballot_count;
        Ok(self)
    }

    /// Canonical CSV form of the located cards.
    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for c in self.cards.iter().filter(|c| !c.is_phantom) {
            out.push_str(&format!("{},{},{}\n", c.cart, c.tray, c.position));
        }
        out
    }

    pub fn cards(&self) -> &[CardRef] {
        &self.cards
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn located_count(&self) -> usize {
        self.cards.iter().filter(|c| !c.is_phantom).count()
    }

    pub fn cards_per_ballot(&self) -> u32 {
        self.cards_per_ballot
    }

    pub fn ballot_count(&self) -> u64 {
        self.ballot_count
    }

    pub fn get(&self, card_id: &str) -> Option<&CardRef> {
        self.index.get(card_id).map(|&i| &self.cards[i])
    }

    pub fn contains(&self, card_id: &str) -> bool {
        self.index.contains_key(card_id)
    }

    /// Appends `count` phantom cards numbered after any existing ones.
    pub fn add_phantoms(&mut self, count: usize) -> Vec<CardRef> {
        let start = self.cards.len() - self.located_count();
        let added: Vec<CardRef> = (1..=count).map(|k| CardRef::phantom(start + k)).collect();
        for card in &added {
            self.index.insert(card.card_id.clone(), self.cards.len());
            self.cards.push(card.clone());
        }
        added
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_figure_rows() {
        let m = Manifest::parse_csv("cart,tray,position\n1,4,96\n5,1,12\n2,2,72\n").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.cards()[0], CardRef::located(1, 4, 96));
        assert_eq!(m.cards()[1].card_id, "5:1:12");
        assert!(m.contains("2:2:72"));
    }

    #[test]
    fn empty_body() {
        let m = Manifest::parse_csv("cart,tray,position\n").unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn duplicate_location() {
        let err = Manifest::parse_csv("cart,tray,position\n1,4,96\n1,4,96\n").unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_CARD");
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = Manifest::parse_csv("cart,tray,position\n1,4,96\n1,x,3\n").unwrap_err();
        assert_eq!(err, RlaError::parse(3, "bad tray \"x\""));
        assert_eq!(
            Manifest::parse_csv("cart,tray\n1,2\n").unwrap_err().code(),
            "PARSE_ERROR"
        );
        assert_eq!(
            Manifest::parse_csv("cart,tray,position\n1,2\n").unwrap_err().code(),
            "PARSE_ERROR"
        );
    }

    #[test]
    fn ballot_structure_bounds_cards() {
        let m = Manifest::parse_csv("cart,tray,position\n1,1,1\n1,1,2\n1,1,3\n").unwrap();
        assert!(m.clone().with_ballot_structure(2, 1).is_err());
        let m = m.with_ballot_structure(2, 2).unwrap();
        assert_eq!((m.cards_per_ballot(), m.ballot_count()), (2, 2));
    }

    #[test]
    fn phantoms_sort_last() {
        let mut m = Manifest::parse_csv("cart,tray,position\n9,9,9\n1,1,1\n").unwrap();
        let added = m.add_phantoms(2);
        assert_eq!(added[1].card_id, "phantom:2");
        let mut cards = m.cards().to_vec();
        cards.sort_by_key(CardRef::retrieval_key);
        let ids: Vec<_> = cards.iter().map(|c| c.card_id.as_str()).collect();
        assert_eq!(ids, ["1:1:1", "9:9:9", "phantom:1", "phantom:2"]);
        assert_eq!(m.add_phantoms(1)[0].card_id, "phantom:3");
    }

    proptest! {
        #[test]
        fn csv_round_trip(locs in proptest::collection::btree_set((0u32..50, 0u32..20, 0u32..500), 0..40)) {
            let cards = locs.iter().map(|&(c, t, p)| CardRef::located(c, t, p)).collect();
            let m = Manifest::new(cards).unwrap();
            let text = m.to_csv();
            let again = Manifest::parse_csv(&text).unwrap();
            prop_assert_eq!(again.to_csv(), text);
            prop_assert_eq!(again.cards(), m.cards());
        }
    }
}
