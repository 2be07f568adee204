//! Twelve-card toy election: five cards with only B, four with B and S,
//! three with only S, over two trays.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rla_core::engine::{AuditConfig, Interpretation, Reading};
use rla_core::model::{parse_contests, ElectionInput};
use rla_core::sampler::Seed;
use rla_cli::CreateSession;

pub const SEED: &str = "20201103";

pub const CONTESTS: &str = r#"[
  {"id": "B", "name": "Big", "candidates": ["W", "L"], "tally": {"W": 8, "L": 1},
   "num_winners": 1, "risk_limit": "0.1", "card_upper_bound": 9},
  {"id": "S", "name": "Small", "candidates": ["W", "L"], "tally": {"W": 7, "L": 0},
   "num_winners": 1, "risk_limit": "0.1", "card_upper_bound": 7}
]"#;

fn location(i: u32) -> (u32, u32, u32) {
    (1, (i - 1) / 6 + 1, (i - 1) % 6 + 1)
}

/// Votes on card `i` (1-based): B loser on card 5, winners elsewhere.
fn votes(i: u32) -> Vec<(&'static str, &'static str)> {
    let mut v = Vec::new();
    if i <= 9 {
        v.push(("B", if i == 5 { "L" } else { "W" }));
    }
    if i >= 6 {
        v.push(("S", "W"));
    }
    v
}

pub fn card_id(i: u32) -> String {
    let (a, b, p) = location(i);
    format!("{a}:{b}:{p}")
}

pub fn manifest_csv() -> String {
    let mut out = String::from("cart,tray,position\n");
    for i in 1..=12 {
        let (a, b, p) = location(i);
        writeln!(out, "{a},{b},{p}").unwrap();
    }
    out
}

pub fn csd_csv() -> String {
    let mut out = String::from("cart,tray,position,contests\n");
    for i in 1..=12 {
        let (a, b, p) = location(i);
        let contests: Vec<&str> = votes(i).iter().map(|(k, _)| *k).collect();
        writeln!(out, "{a},{b},{p},{}", contests.join("|")).unwrap();
    }
    out
}

pub fn cvrs_jsonl() -> String {
    let mut out = String::new();
    for i in 1..=12 {
        let interpretations: BTreeMap<&str, serde_json::Value> = votes(i)
            .into_iter()
            .map(|(k, v)| (k, serde_json::json!({ "selected": [v] })))
            .collect();
        let line = serde_json::json!({ "card_id": card_id(i), "interpretations": interpretations });
        writeln!(out, "{line}").unwrap();
    }
    out
}

/// What the audit board reads on a card: exactly its CVR.
pub fn reading(card: &str, contests: &[String]) -> Interpretation {
    let i = (1..=12).find(|&i| card_id(i) == card).expect("toy card");
    let v: BTreeMap<&str, &str> = votes(i).into_iter().collect();
    Interpretation::found(
        card,
        contests.iter().map(|k| (k.clone(), Reading::votes([v[k.as_str()]]))),
    )
}

pub fn create_request() -> CreateSession {
    CreateSession {
        config: AuditConfig::comparison(),
        seed: Seed::new(SEED).unwrap(),
        election: ElectionInput {
            contests: parse_contests(CONTESTS).unwrap(),
            manifest_csv: manifest_csv(),
            csd_csv: csd_csv(),
            cvrs_jsonl: cvrs_jsonl(),
            cards_per_ballot: None,
            ballot_count: None,
        },
    }
}

pub struct Files {
    pub contests: PathBuf,
    pub manifest: PathBuf,
    pub csd: PathBuf,
    pub cvrs: PathBuf,
}

pub fn write_files(dir: &Path) -> Files {
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    Files {
        contests: put("contests.json", CONTESTS.to_string()),
        manifest: put("manifest.csv", manifest_csv()),
        csd: put("csd.csv", csd_csv()),
        cvrs: put("cvrs.jsonl", cvrs_jsonl()),
    }
}
