use std::fmt::Write as _;

use proptest::prelude::*;

use super::*;
use crate::model::{contest, ElectionInput, Selection};

/// One card: the contests its CSD lists and, optionally, its CVR votes
/// (`None` inside the list means no selection).
struct Card<'a> {
    csd: &'a [&'a str],
    cvr: Option<Vec<(&'a str, Option<&'a str>)>>,
}

fn card<'a>(csd: &'a [&'a str], cvr: &[(&'a str, Option<&'a str>)]) -> Card<'a> {
    Card {
        csd,
        cvr: Some(cvr.to_vec()),
    }
}

fn location(i: usize) -> (usize, usize, usize) {
    (1 + i / 1000, 1 + (i / 100) % 10, i % 100)
}

fn election(contests: Vec<Contest>, cards: &[Card]) -> Election {
    let mut manifest = String::from("cart,tray,position\n");
    let mut csd = String::from("cart,tray,position,contests\n");
    let mut cvrs = String::new();
    for (i, c) in cards.iter().enumerate() {
        let (a, b, p) = location(i);
        writeln!(manifest, "{a},{b},{p}").unwrap();
        writeln!(csd, "{a},{b},{p},{}", c.csd.join("|")).unwrap();
        if let Some(votes) = &c.cvr {
            let interpretations: BTreeMap<String, Selection> = votes
                .iter()
                .map(|(k, v)| (k.to_string(), v.map_or(Selection::NoSelection, |v| Selection::votes([v]))))
                .collect();
            let cvr = crate::model::Cvr {
                card_id: format!("{a}:{b}:{p}"),
                interpretations,
            };
            writeln!(cvrs, "{}", serde_json::to_string(&cvr).unwrap()).unwrap();
        }
    }
    Election::parse(&ElectionInput {
        contests,
        manifest_csv: manifest,
        csd_csv: csd,
        cvrs_jsonl: cvrs,
        cards_per_ballot: None,
        ballot_count: None,
    })
    .unwrap()
}

/// `winner` + `loser` + `blank` cards of one contest "K", CVRs matching.
fn single(winner: usize, loser: usize, blank: usize, bound: u64) -> Election {
    let mut cards = Vec::new();
    for i in 0..winner + loser + blank {
        let vote = if i < winner {
            Some("W")
        } else if i < winner + loser {
            Some("L")
        } else {
            None
        };
        cards.push(card(&["K"], &[("K", vote)]));
    }
    election(
        vec![contest("K", &[("W", winner as u64), ("L", loser as u64)], 1, bound)],
        &cards,
    )
}

fn seed() -> Seed {
    Seed::new("20201103").unwrap()
}

/// Reads every card exactly as its CVR says.
fn faithful(audit: &Audit) -> impl Fn(&RetrievalCard) -> Interpretation + '_ {
    move |rc| {
        let cvr = audit.election().cvrs.get(&rc.card.card_id);
        let contests = rc.contests.iter().map(|k| {
            let sel = cvr
                .and_then(|c| c.interpretations.get(k))
                .cloned()
                .unwrap_or(Selection::NoSelection);
            (k.clone(), Reading::Marked(sel))
        });
        Interpretation::found(rc.card.card_id.clone(), contests)
    }
}

fn read_all(audit: &mut Audit) {
    let cards: Vec<RetrievalCard> = audit.open_round().unwrap().plan.cards.clone();
    let reader = {
        let snapshot = audit.clone();
        move |rc: &RetrievalCard| faithful(&snapshot)(rc)
    };
    for rc in cards.iter().filter(|c| !c.card.is_phantom) {
        audit.record_interpretation(reader(rc)).unwrap();
    }
}

#[test]
fn phantom_cvrs_fill_the_bound() {
    let mut e = single(800, 600, 35, 1435);
    // drop five CVRs
    let keep: Vec<_> = e.cvrs.iter().skip(5).cloned().collect();
    e.cvrs = crate::model::CvrSet::default();
    for c in keep {
        e.cvrs.insert(c).unwrap();
    }
    let audit = Audit::new(AuditConfig::comparison(), seed(), e).unwrap();
    assert_eq!(audit.phantoms().cvrs["K"], 5);
    assert!(audit.phantoms().cards.is_empty());
    // 1430 located cards against a bound of 1435
    let short = single(800, 600, 30, 1435);
    let audit = Audit::new(AuditConfig::comparison(), seed(), short).unwrap();
    assert_eq!(audit.phantoms().cards.len(), 5);
    assert!(audit.phantoms().cards.iter().all(|p| p.contests.contains("K")));
}

#[test]
fn no_phantoms_when_counts_match() {
    let audit = Audit::new(AuditConfig::comparison(), seed(), single(6, 4, 0, 10)).unwrap();
    assert_eq!(audit.phantoms().cvrs["K"], 0);
    assert!(audit.phantoms().cards.is_empty());
}

#[test]
fn cvrs_over_bound_stop_the_audit() {
    let mut e = single(6, 5, 0, 11);
    e.contests[0].card_upper_bound = 10;
    e.contests[0].tally.insert("L".into(), 4);
    let err = Audit::new(AuditConfig::comparison(), seed(), e).unwrap_err();
    assert_eq!(err.code(), "OUTCOME_NOT_CONFIRMABLE");
}

#[test]
fn phantom_cards_cover_each_contest_deficit() {
    let cards = [card(&["B", "S"], &[("B", Some("W")), ("S", Some("X"))])];
    let e = election(
        vec![
            contest("B", &[("W", 1), ("L", 0)], 1, 4),
            contest("S", &[("X", 1), ("Y", 0)], 1, 2),
        ],
        &cards,
    );
    let audit = Audit::new(AuditConfig::comparison(), seed(), e).unwrap();
    let p = &audit.phantoms().cards;
    assert_eq!(p.len(), 3);
    assert_eq!(p[0].contests, ["B", "S"].iter().map(|s| s.to_string()).collect());
    assert_eq!(p[2].contests, ["B"].iter().map(|s| s.to_string()).collect());
    assert_eq!(audit.phantoms().cvrs, [("B".into(), 3), ("S".into(), 1)].into());
}

#[test]
fn first_round_uses_initial_size_and_confirms() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    let status = audit.status();
    assert_eq!(status.contests[0].status, ContestStatus::Active);
    assert_eq!(status.contests[0].measured_risk, 1.0);
    assert_eq!(status.contests[0].next_sample_size, Some(64));
    let plan = audit.plan_round().unwrap().clone();
    assert_eq!(plan.contests[0].size, 64);
    assert_eq!(plan.cards.len(), 64);
    read_all(&mut audit);
    let result = audit.finalize_round().unwrap().clone();
    let k = &result.contests[0];
    assert_eq!(k.status, ContestStatus::Confirmed);
    assert!((k.measured_risk - 0.046).abs() < 5e-4, "{}", k.measured_risk);
    assert!(result.complete);
    assert_eq!(audit.plan_round().unwrap_err().code(), "AUDIT_COMPLETE");
    assert_eq!(audit.status().cards_inspected, 64);
}

#[test]
fn small_contest_goes_to_full_count() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(26, 24, 0, 50)).unwrap();
    let plan = audit.plan_round().unwrap();
    assert_eq!(plan.full_count, ["K"]);
    assert!(plan.cards.is_empty());
    let result = audit.finalize_round().unwrap();
    assert_eq!(result.contests[0].status, ContestStatus::FullCount);
    let report = audit.status();
    let fc = report.contests[0].full_count.as_ref().unwrap();
    assert_eq!(fc.cards, 50);
    assert_eq!(fc.reported_tally["W"], 26);
    assert!(report.complete);
}

#[test]
fn tied_contest_is_hand_counted() {
    let audit = Audit::new(AuditConfig::comparison(), seed(), single(5, 5, 0, 10)).unwrap();
    assert_eq!(audit.status().contests[0].status, ContestStatus::FullCount);
    assert!(audit.is_complete());
}

#[test]
fn round_protocol_errors() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    assert_eq!(audit.finalize_round().unwrap_err().code(), "NO_OPEN_ROUND");
    let plan = audit.plan_round().unwrap().clone();
    assert_eq!(audit.plan_round().unwrap_err(), RlaError::RoundOpen { round: 1 });
    let drawn: HashSet<&str> = plan.cards.iter().map(|c| c.card.card_id.as_str()).collect();
    let outsider = audit
        .election()
        .manifest
        .cards()
        .iter()
        .find(|c| !drawn.contains(c.card_id.as_str()))
        .unwrap()
        .card_id
        .clone();
    let err = audit.record_interpretation(Interpretation::not_found(outsider)).unwrap_err();
    assert_eq!(err.code(), "UNEXPECTED_CARD");
    let first = plan.cards[0].card.card_id.clone();
    let missing_reading = Interpretation::found(first.clone(), []);
    assert_eq!(audit.record_interpretation(missing_reading).unwrap_err().code(), "INVALID_INPUT");
    let bad_candidate = Interpretation::found(first.clone(), [("K".to_string(), Reading::votes(["Z"]))]);
    assert_eq!(audit.record_interpretation(bad_candidate).unwrap_err().code(), "INVALID_INPUT");
    let unknown = Interpretation::found(first.clone(), [("Q".to_string(), Reading::no_selection())]);
    assert_eq!(audit.record_interpretation(unknown).unwrap_err().code(), "UNKNOWN_CONTEST");
    audit.record_interpretation(Interpretation::not_found(first.clone())).unwrap();
    let again = audit.record_interpretation(Interpretation::not_found(first)).unwrap_err();
    assert_eq!(again.code(), "ALREADY_RECORDED");
    match audit.finalize_round().unwrap_err() {
        RlaError::RoundIncomplete { missing } => assert_eq!(missing.len(), 63),
        other => panic!("{other:?}"),
    }
}

#[test]
fn phantom_card_counts_as_two_vote_overstatement_everywhere() {
    // Two contests on one card each, bounds leave one phantom with both.
    let mut cards = Vec::new();
    for i in 0..40 {
        let v = if i < 30 { "W" } else { "L" };
        cards.push(card(&["B", "S"], &[("B", Some(v)), ("S", Some(if i < 30 { "X" } else { "Y" }))]));
    }
    let e = election(
        vec![
            contest("B", &[("W", 30), ("L", 10)], 1, 41),
            contest("S", &[("X", 30), ("Y", 10)], 1, 41),
        ],
        &cards,
    );
    // find a seed whose sample includes the phantom
    let (mut audit, plan) = (1..200)
        .find_map(|s| {
            let mut audit = Audit::new(AuditConfig::comparison(), Seed::new(s.to_string()).unwrap(), e.clone()).unwrap();
            let plan = audit.plan_round().unwrap().clone();
            plan.cards.iter().any(|c| c.card.is_phantom).then_some((audit, plan))
        })
        .unwrap();
    assert_eq!(audit.phantoms().cards.len(), 1);
    let phantom = plan.cards.iter().find(|c| c.card.is_phantom).unwrap();
    assert_eq!(phantom.contests, ["B", "S"]);
    let auto = &audit.open_round().unwrap().interpretations;
    assert_eq!(auto, &[Interpretation::not_found("phantom:1")]);
    read_all(&mut audit);
    let result = audit.finalize_round().unwrap();
    for k in &result.contests {
        assert_eq!(k.discrepancies.unwrap().n2, 1, "{}", k.contest_id);
    }
}

#[test]
fn polling_not_found_counts_for_the_loser() {
    let config = AuditConfig::new(Method::BallotPolling, Sampling::WithoutReplacement);
    let mut audit = Audit::new(config, seed(), single(1100, 900, 0, 2000)).unwrap();
    let plan = audit.plan_round().unwrap().clone();
    let mut lost = 0;
    for (i, rc) in plan.cards.iter().enumerate() {
        if i % 10 == 0 {
            lost += 1;
            audit.record_interpretation(Interpretation::not_found(rc.card.card_id.clone())).unwrap();
        } else {
            let r = faithful(&audit.clone())(rc);
            audit.record_interpretation(r).unwrap();
        }
    }
    let result = audit.finalize_round().unwrap().clone();
    // oracle: replay the SPRT by hand
    let s = 1100.0 / 2000.0;
    let mut t = 1.0f64;
    let drawn = audit.round(1).unwrap().draws["K"].clone();
    for id in &drawn {
        let missing = plan.cards.iter().position(|c| &c.card.card_id == id).unwrap() % 10 == 0;
        let vote = audit.election().cvrs.get(id).unwrap().interpretations["K"].clone();
        t *= if missing || vote == Selection::votes(["L"]) { 2.0 * (1.0 - s) } else { 2.0 * s };
    }
    assert!(lost > 0);
    let got = result.contests[0].sprt.as_ref().unwrap()[0].t;
    assert!(((got - t) / t).abs() < 1e-9, "{got} vs {t}");
}

#[test]
fn one_confirmed_one_escalates() {
    // B has a wide margin; S's CVRs overstate its margin on a few cards.
    let mut cards = Vec::new();
    for i in 0..2000 {
        let b = if i % 10 < 7 { "W" } else { "L" };
        let s = if i % 20 < 11 { "X" } else { "Y" };
        cards.push(card(&["B", "S"], &[("B", Some(b)), ("S", Some(s))]));
    }
    let e = election(
        vec![
            contest("B", &[("W", 1400), ("L", 600)], 1, 2000),
            contest("S", &[("X", 1100), ("Y", 900)], 1, 2000),
        ],
        &cards,
    );
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), e).unwrap();
    let first = audit.plan_round().unwrap().clone();
    let sizes: Vec<u64> = first.contests.iter().map(|c| c.size).collect();
    // S's reported margin of 200 over 2000 cards is 0.1
    assert_eq!(sizes[1], 64);
    let snapshot = audit.clone();
    let reader = faithful(&snapshot);
    let mut flipped = 0;
    for rc in &first.cards {
        let mut r = reader(rc);
        let s_sample = &audit.open_round().unwrap().draws["S"];
        if flipped < 2 && s_sample.contains(&rc.card.card_id) && r.contests["S"] == Reading::votes(["X"]) {
            r.contests.insert("S".into(), Reading::votes(["Y"]));
            flipped += 1;
        }
        audit.record_interpretation(r).unwrap();
    }
    let result = audit.finalize_round().unwrap().clone();
    assert_eq!(result.contests[0].status, ContestStatus::Confirmed);
    assert_eq!(result.contests[1].status, ContestStatus::Active);
    assert_eq!(result.contests[1].discrepancies.unwrap().n2, 2);
    let second = audit.plan_round().unwrap().clone();
    assert_eq!(second.contests.len(), 1);
    assert_eq!(second.contests[0].contest_id, "S");
    assert_eq!(second.contests[0].prior_size, 64);
    assert!(second.contests[0].size >= 80);
    // no card is pulled twice without replacement
    let seen: HashSet<&str> = first.cards.iter().map(|c| c.card.card_id.as_str()).collect();
    assert!(second.cards.iter().all(|c| !seen.contains(c.card.card_id.as_str())));
    assert!(second.cards.iter().all(|c| c.contests == ["S"]));
}

#[test]
fn escalation_floor_and_observed_rate() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    let plan = audit.plan_round().unwrap().clone();
    let snapshot = audit.clone();
    let reader = faithful(&snapshot);
    for (i, rc) in plan.cards.iter().enumerate() {
        let mut r = reader(rc);
        if i == 0 {
            let flipped = if r.contests["K"] == Reading::votes(["W"]) {
                Reading::no_selection()
            } else {
                Reading::votes(["L"])
            };
            r.contests.insert("K".into(), flipped);
        }
        audit.record_interpretation(r).unwrap();
    }
    let result = audit.finalize_round().unwrap().clone();
    let counts = result.contests[0].discrepancies.unwrap();
    assert_eq!(counts.n1 + counts.n2, 1);
    // oracle: rho at the observed rate over the diluted margin, floored at 1.25 x 64
    let lambda = (1.0f64 / 64.0) / 0.1;
    let rho = -(0.05f64).ln() / (1.0 / (2.0 * 1.03905) + lambda * (1.0f64 - 1.0 / (2.0 * 1.03905)).ln());
    let expected = ((rho * 1000.0).round() / 1000.0 / 0.1).ceil().max(80.0) as u64;
    if result.contests[0].status == ContestStatus::Active {
        assert_eq!(audit.status().contests[0].next_sample_size, Some(expected));
    }
}

#[test]
fn with_replacement_reuses_readings() {
    let config = AuditConfig::polling();
    let mut audit = Audit::new(config, seed(), single(70, 30, 0, 100)).unwrap();
    let plan = audit.plan_round().unwrap().clone();
    let draws = audit.open_round().unwrap().draws["K"].clone();
    let distinct: BTreeSet<&String> = draws.iter().collect();
    assert!(draws.len() > distinct.len(), "repeats expected with 100 cards");
    assert_eq!(plan.cards.len(), distinct.len());
    read_all(&mut audit);
    let result = audit.finalize_round().unwrap();
    assert_eq!(result.contests[0].draws, draws.len() as u64);
}

#[test]
fn session_replays_to_identical_bytes() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(1100, 900, 50, 2100)).unwrap();
    audit.plan_round().unwrap();
    read_all(&mut audit);
    audit.finalize_round().unwrap();
    if !audit.is_complete() {
        audit.plan_round().unwrap();
    }
    let json = audit.to_json();
    let again = Audit::from_json(&json).unwrap();
    assert_eq!(again.to_json(), json);
    assert_eq!(again.status(), audit.status());
    assert_eq!(again.envelope().session_id, audit.envelope().session_id);

    let mut doc: SessionDoc = serde_json::from_str(&json).unwrap();
    doc.rounds[0].result.as_mut().unwrap().contests[0].draws += 1;
    assert_eq!(Audit::from_session(&doc).unwrap_err().code(), "REPLAY_MISMATCH");
    let mut doc: SessionDoc = serde_json::from_str(&json).unwrap();
    doc.seed = Seed::new("1").unwrap();
    assert_eq!(Audit::from_session(&doc).unwrap_err().code(), "REPLAY_MISMATCH");
}

#[test]
fn reals_are_persisted_as_decimal_strings() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    audit.plan_round().unwrap();
    let json = audit.to_json();
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["config"]["gamma"], "1.03905000000");
    assert_eq!(doc["contests"][0]["risk_limit"], "0.0500000000000");
    assert!(doc["rounds"][0]["plan"]["contests"][0]["threshold"].is_string());
    let top = ["config", "seed", "contests", "phantoms", "election", "rounds"];
    let offsets: Vec<usize> = top.iter().map(|k| json.find(&format!("\n  \"{k}\"")).unwrap()).collect();
    assert!(offsets.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn contest_not_on_card_flags_csd_error() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    let plan = audit.plan_round().unwrap().clone();
    let snapshot = audit.clone();
    let reader = faithful(&snapshot);
    for (i, rc) in plan.cards.iter().enumerate() {
        let mut r = reader(rc);
        if i == 3 {
            r.contests.insert("K".into(), Reading::ContestNotOnCard);
        }
        audit.record_interpretation(r).unwrap();
    }
    let result = audit.finalize_round().unwrap();
    assert_eq!(result.csd_errors.len(), 1);
    assert_eq!(result.csd_errors[0].card_id, plan.cards[3].card.card_id);
}

#[test]
fn run_with_drives_to_completion() {
    let mut audit = Audit::new(AuditConfig::comparison(), seed(), single(600, 400, 0, 1000)).unwrap();
    let snapshot = audit.clone();
    let report = audit.run_with(10, faithful(&snapshot)).unwrap();
    assert!(report.complete);
    assert_eq!(report.contests[0].status, ContestStatus::Confirmed);
    assert!(report.contests[0].measured_risk <= 0.05);
}

proptest! {
    /// A phantom adds a card to the population (diluting the margin) and,
    /// when drawn, a two-vote overstatement; neither can lower the risk.
    #[test]
    fn phantoms_never_lower_risk(
        margin_votes in 1u64..500,
        cards in 500u64..5000,
        n in 1u64..400,
        n1 in 0u64..5,
        n2 in 0u64..5,
        extra in 1u64..50,
        drawn in any::<bool>(),
    ) {
        prop_assume!(margin_votes <= cards && n1 + n2 <= n);
        let base = DiscrepancyCounts { n, n1, n2, ..Default::default() };
        let with = DiscrepancyCounts { n2: n2 + u64::from(drawn), ..base };
        let before = math::km_risk(margin_votes as f64 / cards as f64, math::DEFAULT_GAMMA, &base);
        let after = math::km_risk(margin_votes as f64 / (cards + extra) as f64, math::DEFAULT_GAMMA, &with);
        prop_assert!(after >= before);
    }
}

#[test]
fn engine_population_includes_phantoms() {
    let base = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1000)).unwrap();
    let padded = Audit::new(AuditConfig::comparison(), seed(), single(550, 450, 0, 1010)).unwrap();
    let (a, b) = (&base.status().contests[0], &padded.status().contests[0]);
    assert_eq!(b.population, 1010);
    assert!(b.diluted_margin.unwrap() < a.diluted_margin.unwrap());
    assert!(b.next_sample_size.unwrap() >= a.next_sample_size.unwrap());
}
