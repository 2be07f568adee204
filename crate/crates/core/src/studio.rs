//! Workload tables: figure grids, the Inyo and Orange case studies, and a
//! Monte Carlo check of the closed forms through the audit engine.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Audit, AuditConfig};
use crate::error::{Result, RlaError};
use crate::math::{self, AsnBase, Layout, PollingCsd, S4Params, TwoContestConfig};
use crate::model::{CardRef, CardStyleTable, Contest, CvrSet, Election, Manifest};
use crate::real;
use crate::sampler::Seed;

pub const BIG: &str = "B";
pub const SMALL: &str = "S";

/// Cap on expected draws in the F3 grid.
pub const DRAW_CAP: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Figure {
    /// Expected draws with and without CSD, equal margins, one card.
    F3,
    /// Ratio of draws without CSD to draws with, equal margins, one card.
    F4,
    /// Multi-card ballots, contests on the same card.
    F5,
    /// Multi-card ballots, contests on different cards.
    F6,
    /// One card, `m_S` fixed and `m_B` varying.
    Unequal,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::F3, Figure::F4, Figure::F5, Figure::F6, Figure::Unequal];

    pub fn id(self) -> &'static str {
        match self {
            Figure::F3 => "F3",
            Figure::F4 => "F4",
            Figure::F5 => "F5",
            Figure::F6 => "F6",
            Figure::Unequal => "UNEQUAL",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = RlaError;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| RlaError::invalid(format!("unknown figure {s:?}; expected F3, F4, F5, F6 or UNEQUAL")))
    }
}

/// Grid axes for one figure. `margins` are the equal margins (F3, F4, F5,
/// F6) or the values of `m_B` (UNEQUAL, with `m_small` fixed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub p_values: Vec<f64>,
    pub margins: Vec<f64>,
    pub m_small: Option<f64>,
    pub cards_per_ballot: Vec<u32>,
    /// Ratio cap in percent; `None` leaves ratios uncapped.
    pub ratio_cap: Option<f64>,
    /// Cap on expected draws; `None` leaves draws uncapped.
    pub draw_cap: Option<f64>,
    pub s4: S4Params,
}

fn p_grid(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|k| k as f64 / 100.0).collect()
}

impl GridParams {
    pub fn default_for(figure: Figure) -> Self {
        let base = GridParams {
            p_values: p_grid(1, 100),
            margins: vec![0.1],
            m_small: None,
            cards_per_ballot: vec![1],
            ratio_cap: None,
            draw_cap: None,
            s4: S4Params::default(),
        };
        match figure {
            Figure::F3 => GridParams {
                margins: vec![0.01, 0.03, 0.05, 0.1, 0.2],
                draw_cap: Some(DRAW_CAP),
                ..base
            },
            Figure::F4 => GridParams {
                p_values: p_grid(10, 100),
                margins: vec![0.01, 0.03, 0.05, 0.1, 0.2],
                ratio_cap: Some(1000.0),
                ..base
            },
            Figure::F5 => GridParams {
                cards_per_ballot: vec![1, 2, 3, 4, 5],
                ratio_cap: Some(2000.0),
                ..base
            },
            Figure::F6 => GridParams {
                cards_per_ballot: vec![2, 3, 4, 5],
                ratio_cap: Some(2000.0),
                ..base
            },
            Figure::Unequal => GridParams {
                p_values: p_grid(1, 50),
                margins: vec![0.01, 0.025, 0.04, 0.055, 0.07, 0.085, 0.1],
                m_small: Some(0.2),
                ratio_cap: Some(1000.0),
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub figure: Figure,
    #[serde(with = "real")]
    pub p: f64,
    #[serde(with = "real")]
    pub m_big: f64,
    #[serde(with = "real")]
    pub m_small: f64,
    pub cards_per_ballot: u32,
    pub layout: Layout,
    /// `None` when no sample size exists (the fully diluted margin is too
    /// small for the anticipated overstatement rate) and there is no cap.
    #[serde(with = "real::option")]
    pub draws_without: Option<f64>,
    #[serde(with = "real")]
    pub draws_with: f64,
    #[serde(with = "real")]
    pub ratio_percent: f64,
    /// A draw count or the ratio hit its cap.
    pub truncated: bool,
}

pub const GRID_HEADER: [&str; 10] = [
    "figure",
    "p",
    "m_big",
    "m_small",
    "cards_per_ballot",
    "layout",
    "draws_without",
    "draws_with",
    "ratio_percent",
    "truncated",
];

fn layout_for(figure: Figure) -> Layout {
    match figure {
        Figure::F6 => Layout::DifferentCards,
        _ => Layout::SameCard,
    }
}

/// One grid point. Card-style data can always be ignored, so the targeted
/// workload never exceeds the untargeted one.
pub fn grid_point(figure: Figure, config: &TwoContestConfig, params: &GridParams) -> Result<GridRow> {
    let with = math::s4_with_csd(config, &params.s4)?;
    let without = match math::s4_without_csd(config, &params.s4) {
        Ok(n) => Some(n as f64),
        Err(RlaError::RhoUndefined) => None,
        Err(e) => return Err(e),
    };
    let with = without.map_or(with, |w| with.min(w));
    // no finite size: report the draw cap when there is one
    let mut truncated = without.is_none();
    let without = without.or(params.draw_cap);
    let mut cap_draws = |x: f64| match params.draw_cap {
        Some(cap) if x > cap => {
            truncated = true;
            cap
        }
        _ => x,
    };
    let draws_with = cap_draws(with);
    let draws_without = without.map(&mut cap_draws);
    let ratio_percent = match (draws_without, params.ratio_cap) {
        (Some(w), Some(cap)) if 100.0 * w / with > cap => {
            truncated = true;
            cap
        }
        (None, Some(cap)) => cap,
        (Some(w), _) => 100.0 * w / with,
        (None, None) => return Err(RlaError::RhoUndefined),
    };
    Ok(GridRow {
        figure,
        p: config.p,
        m_big: config.m_big,
        m_small: config.m_small,
        cards_per_ballot: config.cards_per_ballot,
        layout: config.layout,
        draws_without,
        draws_with,
        ratio_percent,
        truncated,
    })
}

/// Long-form table for one figure, ordered by series then `p`.
pub fn figure_grid(figure: Figure, params: &GridParams) -> Result<Vec<GridRow>> {
    params.s4.validate()?;
    if figure == Figure::F6 && params.cards_per_ballot.contains(&1) {
        return Err(RlaError::invalid("different-card layouts need at least 2 cards per ballot"));
    }
    let layout = layout_for(figure);
    let mut rows = Vec::new();
    for &m in &params.margins {
        for &c in &params.cards_per_ballot {
            for &p in &params.p_values {
                let m_small = params.m_small.unwrap_or(m);
                let config = TwoContestConfig::new(m, m_small, p, c, layout);
                rows.push(grid_point(figure, &config, params)?);
            }
        }
    }
    Ok(rows)
}

fn csv_real(x: f64) -> String {
    real::normalize(x).to_string()
}

pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GRID_HEADER).expect("in-memory write");
    for r in rows {
        let layout = match r.layout {
            Layout::SameCard => "SAME_CARD",
            Layout::DifferentCards => "DIFFERENT_CARDS",
        };
        w.write_record([
            r.figure.id().to_string(),
            csv_real(r.p),
            csv_real(r.m_big),
            csv_real(r.m_small),
            r.cards_per_ballot.to_string(),
            layout.to_string(),
            r.draws_without.map(csv_real).unwrap_or_default(),
            csv_real(r.draws_with),
            csv_real(r.ratio_percent),
            r.truncated.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// How the cards containing two contests relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Overlap {
    /// Every card with the small contest also has the big one.
    Nested,
    /// No card has both.
    Disjoint,
    /// Some cards have both, some only the small one.
    Partial,
}

/// Classifies the card overlap of `big` and `small` in the CSD. `None` if
/// no card contains `small`.
pub fn classify_overlap(csd: &CardStyleTable, big: &str, small: &str) -> Option<Overlap> {
    let (mut both, mut alone) = (0u64, 0u64);
    for (_, contests) in csd.iter() {
        if contests.contains(small) {
            if contests.contains(big) {
                both += 1;
            } else {
                alone += 1;
            }
        }
    }
    match (both, alone) {
        (0, 0) => None,
        (_, 0) => Some(Overlap::Nested),
        (0, _) => Some(Overlap::Disjoint),
        _ => Some(Overlap::Partial),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseName {
    Inyo,
    Orange,
}

impl FromStr for CaseName {
    type Err = RlaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "INYO" => Ok(CaseName::Inyo),
            "ORANGE" => Ok(CaseName::Orange),
            _ => Err(RlaError::UnknownCase { name: s.to_string() }),
        }
    }
}

/// Vote counts of a pair of candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub winner: u64,
    pub loser: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub name: CaseName,
    pub ballots: u64,
    pub cards_per_ballot: u32,
    /// Ballots containing the small contest.
    pub small_ballots: u64,
    #[serde(with = "real")]
    pub p: f64,
    #[serde(with = "real")]
    pub m_big: f64,
    #[serde(with = "real")]
    pub m_small: f64,
    pub layout: Layout,
    /// Closest pair in the big contest, when known.
    pub big_pair: Option<PairTally>,
    pub polling_base: AsnBase,
}

impl CaseStudy {
    pub fn builtin(name: CaseName) -> Self {
        match name {
            CaseName::Inyo => CaseStudy {
                name,
                ballots: 5919,
                cards_per_ballot: 2,
                small_ballots: 1435,
                p: 1435.0 / 5919.0,
                m_big: (639.0 - 517.0) / 5919.0,
                m_small: 36.0 / 1435.0,
                layout: Layout::DifferentCards,
                big_pair: Some(PairTally { winner: 639, loser: 517 }),
                polling_base: AsnBase::Approx,
            },
            CaseName::Orange => CaseStudy {
                name,
                ballots: 1_106_729,
                cards_per_ballot: 2,
                small_ballots: 312_700,
                p: 0.2825,
                m_big: 0.073,
                m_small: 0.04,
                layout: Layout::SameCard,
                big_pair: None,
                polling_base: AsnBase::Fixed { big: 948.0, small: 3671.0 },
            },
        }
    }

    pub fn config(&self, layout: Layout) -> TwoContestConfig {
        TwoContestConfig::new(self.m_big, self.m_small, self.p, self.cards_per_ballot, layout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonWorkload {
    pub without_csd: u64,
    #[serde(with = "real")]
    pub with_csd_same_card: f64,
    #[serde(with = "real")]
    pub with_csd_different_cards: f64,
    /// With CSD, for the case's actual layout.
    #[serde(with = "real")]
    pub with_csd: f64,
    #[serde(with = "real")]
    pub reduction_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollingWorkload {
    /// Expected ballots drawn per contest, before the full-count cap.
    #[serde(with = "real")]
    pub asn_big: f64,
    #[serde(with = "real")]
    pub asn_small: f64,
    #[serde(with = "real")]
    pub without_csd: f64,
    /// Knowing which containers hold ballots with the small contest.
    #[serde(with = "real")]
    pub with_partial_csd: f64,
    /// The small contest needs every card it could be on.
    pub small_full_count: bool,
    #[serde(with = "real")]
    pub reduction_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub case: CaseStudy,
    pub comparison: ComparisonWorkload,
    pub polling: PollingWorkload,
}

fn reduction(without: f64, with: f64) -> f64 {
    100.0 * (1.0 - with / without)
}

pub fn comparison_workload(case: &CaseStudy, params: &S4Params) -> Result<ComparisonWorkload> {
    let without = math::s4_without_csd(&case.config(case.layout), params)?;
    let same = math::s4_with_csd(&case.config(Layout::SameCard), params)?;
    let different = math::s4_with_csd(&case.config(Layout::DifferentCards), params)?;
    let with = match case.layout {
        Layout::SameCard => same,
        Layout::DifferentCards => different,
    };
    Ok(ComparisonWorkload {
        without_csd: without,
        with_csd_same_card: same,
        with_csd_different_cards: different,
        with_csd: with,
        reduction_percent: reduction(without as f64, with),
    })
}

/// BRAVO workloads. A contest whose expected sample exceeds the ballots it
/// is on is counted as a full hand count of those ballots' cards.
pub fn polling_workload(case: &CaseStudy, alpha: f64) -> PollingWorkload {
    let (asn_big, asn_small) = match case.polling_base {
        AsnBase::Fixed { big, small } => (big, small),
        base => {
            let exact = base == AsnBase::Exact;
            let big = match case.big_pair {
                Some(t) => math::bravo_asn_with_nonvotes(alpha, t.winner, t.loser, case.ballots, exact),
                None if exact => math::bravo_asn_exact(alpha, case.m_big),
                None => math::bravo_asn(alpha, case.m_big),
            };
            let small = if exact {
                math::bravo_asn_exact(alpha, case.m_small)
            } else {
                math::bravo_asn(alpha, case.m_small)
            };
            (big, small)
        }
    };
    let capped = AsnBase::Fixed {
        big: asn_big.min(case.ballots as f64),
        small: asn_small.min(case.small_ballots as f64),
    };
    let config = case.config(case.layout);
    let without = math::bravo_expected_draws(&config, alpha, PollingCsd::None, capped);
    let with = math::bravo_expected_draws(&config, alpha, PollingCsd::Partial, capped);
    PollingWorkload {
        asn_big,
        asn_small,
        without_csd: without,
        with_partial_csd: with,
        small_full_count: asn_small >= case.small_ballots as f64,
        reduction_percent: reduction(without, with),
    }
}

pub fn case_study(name: CaseName) -> Result<CaseStudyReport> {
    let case = CaseStudy::builtin(name);
    let params = S4Params::default();
    Ok(CaseStudyReport {
        comparison: comparison_workload(&case, &params)?,
        polling: polling_workload(&case, params.alpha),
        case,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub case: CaseName,
    #[serde(with = "real")]
    pub comparison_reduction_percent: f64,
    #[serde(with = "real")]
    pub polling_reduction_percent: f64,
}

/// Percentage reductions from card-style data for both case studies.
pub fn table1() -> Result<Vec<Table1Row>> {
    [CaseName::Inyo, CaseName::Orange]
        .into_iter()
        .map(|name| {
            let r = case_study(name)?;
            Ok(Table1Row {
                case: name,
                comparison_reduction_percent: r.comparison.reduction_percent,
                polling_reduction_percent: r.polling.reduction_percent,
            })
        })
        .collect()
}

fn location(i: u64) -> CardRef {
    CardRef::located((i / 10_000 + 1) as u32, ((i / 100) % 100 + 1) as u32, (i % 100 + 1) as u32)
}

fn two_candidate(id: &str, winner: u64, loser: u64, bound: u64) -> Contest {
    Contest {
        id: id.into(),
        name: id.into(),
        candidates: vec!["W".into(), "L".into()],
        tally: [("W".to_string(), winner), ("L".to_string(), loser)].into(),
        num_winners: 1,
        risk_limit: math::DEFAULT_RISK_LIMIT,
        card_upper_bound: bound,
    }
}

/// Synthetic election for a two-contest configuration: `ballots` ballots of
/// `c` cards, B on the first card of every ballot, S on the first (same
/// card) or second (different cards) card of the first `round(p N)`
/// ballots. Without CSD every card is listed as possibly containing both.
/// No CVRs are included; only planning is meaningful.
pub fn synthetic_election(config: &TwoContestConfig, ballots: u64, with_csd: bool) -> Result<Election> {
    config.validate()?;
    let c = config.cards_per_ballot as u64;
    if config.layout == Layout::DifferentCards && c < 2 {
        return Err(RlaError::invalid("different-card layouts need at least 2 cards per ballot"));
    }
    let small_ballots = (config.p * ballots as f64).round() as u64;
    let s_card = match config.layout {
        Layout::SameCard => 0,
        Layout::DifferentCards => 1,
    };
    let mut cards = Vec::with_capacity((ballots * c) as usize);
    let mut csd = CardStyleTable::default();
    let both: BTreeSet<String> = [BIG.to_string(), SMALL.to_string()].into();
    for b in 0..ballots {
        for k in 0..c {
            let card = location(b * c + k);
            let contests = if !with_csd {
                both.clone()
            } else {
                let mut set = BTreeSet::new();
                if k == 0 {
                    set.insert(BIG.to_string());
                }
                if k == s_card && b < small_ballots {
                    set.insert(SMALL.to_string());
                }
                set
            };
            csd.insert(card.card_id.clone(), contests);
            cards.push(card);
        }
    }
    let tally = |n: u64, m: f64| {
        let margin = (m * n as f64).round() as u64;
        let winner = (n + margin) / 2;
        (winner, winner - margin)
    };
    let (bw, bl) = tally(ballots, config.m_big);
    let (sw, sl) = tally(small_ballots, config.m_small);
    let bounds = if with_csd {
        (ballots, small_ballots)
    } else {
        (ballots * c, ballots * c)
    };
    let manifest = Manifest::new(cards)?.with_ballot_structure(config.cards_per_ballot, ballots)?;
    Ok(Election {
        contests: vec![two_candidate(BIG, bw, bl, bounds.0), two_candidate(SMALL, sw, sl, bounds.1)],
        manifest,
        csd,
        cvrs: CvrSet::default(),
    })
}

/// Realized partially diluted margins and `p` of a synthetic election.
pub fn realized_config(config: &TwoContestConfig, ballots: u64) -> TwoContestConfig {
    let small_ballots = (config.p * ballots as f64).round() as u64;
    let margin = |n: u64, m: f64| (m * n as f64).round() / n as f64;
    TwoContestConfig::new(
        margin(ballots, config.m_big),
        margin(small_ballots, config.m_small),
        small_ballots as f64 / ballots as f64,
        config.cards_per_ballot,
        config.layout,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: TwoContestConfig,
    pub ballots: u64,
    pub trials: usize,
    #[serde(with = "real")]
    pub mean_with: f64,
    #[serde(with = "real")]
    pub mean_without: f64,
    #[serde(with = "real")]
    pub expected_with: f64,
    #[serde(with = "real")]
    pub expected_without: f64,
}

/// Round-one retrievals of a comparison audit over `trials` seeds, with and
/// without CSD, against the closed forms at the realized margins.
pub fn simulate_retrievals(
    config: &TwoContestConfig,
    params: &S4Params,
    ballots: u64,
    trials: usize,
    first_seed: u64,
) -> Result<SimulationSummary> {
    let realized = realized_config(config, ballots);
    let mut audit_config = AuditConfig::comparison();
    audit_config.gamma = params.gamma;
    audit_config.overstatement_rate = params.overstatement_rate;
    let mut election_with = synthetic_election(config, ballots, true)?;
    let mut election_without = synthetic_election(config, ballots, false)?;
    for c in election_with.contests.iter_mut().chain(election_without.contests.iter_mut()) {
        c.risk_limit = params.alpha;
    }
    let retrievals = |election: &Election, seed: u64| -> Result<usize> {
        let mut audit = Audit::new(audit_config.clone(), Seed::new(seed.to_string())?, election.clone())?;
        Ok(audit.plan_round()?.cards.len())
    };
    let (mut with, mut without) = (0usize, 0usize);
    for t in 0..trials as u64 {
        with += retrievals(&election_with, first_seed + t)?;
        without += retrievals(&election_without, first_seed + t)?;
    }
    Ok(SimulationSummary {
        config: realized,
        ballots,
        trials,
        mean_with: with as f64 / trials as f64,
        mean_without: without as f64 / trials as f64,
        expected_with: math::s4_with_csd(&realized, params)?,
        expected_without: math::s4_without_csd(&realized, params)? as f64,
    })
}
