//! The multi-round audit: phantom creation, round planning with escalation,
//! interpretation entry, discrepancy scoring, risk updates and contest
//! retirement.
//!
//! Rounds are driven by three calls: [`Audit::plan_round`],
//! [`Audit::record_interpretation`] for each retrieved card, and
//! [`Audit::finalize_round`]. Every state change is recorded in the round
//! log, so a session document replays to the same state (see
//! [`session`]).

mod scoring;
pub mod session;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlaError};
use crate::math::{self, DiscrepancyCounts, S4Params};
use crate::model::{contest_margins, CardRef, Contest, Election, MarginSet, ValidationFlag};
use crate::real;
use crate::sampler::{self, SeededAssignment, Seed};

pub use scoring::{score_comparison, CardScore, Interpretation, Reading, CONTEST_NOT_ON_CARD};
pub use session::{SessionDoc, SessionEnvelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    BallotComparison,
    BallotPolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sampling {
    WithoutReplacement,
    WithReplacement,
}

pub const DEFAULT_ESCALATION_FACTOR: f64 = 1.25;

fn default_gamma() -> f64 {
    math::DEFAULT_GAMMA
}

fn default_rate() -> f64 {
    math::DEFAULT_OVERSTATEMENT_RATE
}

fn default_escalation() -> f64 {
    DEFAULT_ESCALATION_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub method: Method,
    pub sampling: Sampling,
    #[serde(with = "real", default = "default_gamma")]
    pub gamma: f64,
    /// Anticipated one-vote overstatement rate used for comparison sample sizes.
    #[serde(with = "real", default = "default_rate")]
    pub overstatement_rate: f64,
    /// Per-contest overrides of the contest's own risk limit.
    #[serde(with = "real::map", default)]
    pub risk_limits: BTreeMap<String, f64>,
    /// Minimum growth of the cumulative sample from one round to the next.
    #[serde(with = "real", default = "default_escalation")]
    pub escalation_factor: f64,
}

impl AuditConfig {
    pub fn new(method: Method, sampling: Sampling) -> Self {
        AuditConfig {
            method,
            sampling,
            gamma: math::DEFAULT_GAMMA,
            overstatement_rate: math::DEFAULT_OVERSTATEMENT_RATE,
            risk_limits: BTreeMap::new(),
            escalation_factor: DEFAULT_ESCALATION_FACTOR,
        }
    }

    pub fn comparison() -> Self {
        AuditConfig::new(Method::BallotComparison, Sampling::WithoutReplacement)
    }

    pub fn polling() -> Self {
        AuditConfig::new(Method::BallotPolling, Sampling::WithReplacement)
    }

    fn validate(&self) -> Result<()> {
        S4Params {
            alpha: 0.5,
            gamma: self.gamma,
            overstatement_rate: self.overstatement_rate,
        }
        .validate()?;
        for (id, &a) in &self.risk_limits {
            if !(a > 0.0 && a < 1.0) {
                return Err(RlaError::invalid(format!("risk limit {a} for {id} is outside (0, 1)")));
            }
        }
        if !(self.escalation_factor >= 1.0) {
            return Err(RlaError::invalid("escalation factor must be at least 1"));
        }
        Ok(())
    }

    /// Rounds every real to its persisted precision.
    fn normalized(mut self) -> Self {
        self.gamma = real::normalize(self.gamma);
        self.overstatement_rate = real::normalize(self.overstatement_rate);
        self.escalation_factor = real::normalize(self.escalation_factor);
        for a in self.risk_limits.values_mut() {
            *a = real::normalize(*a);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContestStatus {
    Active,
    Confirmed,
    FullCount,
}

/// Phantom records created at initialization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phantoms {
    /// Placeholder CVRs per contest: upper bound minus CVRs containing it.
    pub cvrs: BTreeMap<String, u64>,
    pub cards: Vec<PhantomCard>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomCard {
    pub card_id: String,
    pub contests: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedContest {
    pub contest_id: String,
    pub prior_size: u64,
    pub size: u64,
    /// Largest number in the sample (sampling without replacement).
    #[serde(with = "real::option", default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalCard {
    #[serde(flatten)]
    pub card: CardRef,
    /// Contests the audit board must read on this card.
    pub contests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: usize,
    pub contests: Vec<PlannedContest>,
    /// Contests that moved to a full hand count in this round.
    pub full_count: Vec<String>,
    pub cards: Vec<RetrievalCard>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsdError {
    pub card_id: String,
    pub contest_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistic {
    pub winner: String,
    pub loser: String,
    #[serde(with = "real")]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestRoundResult {
    pub contest_id: String,
    pub draws: u64,
    #[serde(with = "real")]
    pub measured_risk: f64,
    pub status: ContestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancies: Option<DiscrepancyCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprt: Option<Vec<PairStatistic>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub contests: Vec<ContestRoundResult>,
    pub csd_errors: Vec<CsdError>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub plan: RoundPlan,
    pub interpretations: Vec<Interpretation>,
    pub result: Option<RoundResult>,
    /// New draws per contest this round, in draw order.
    draws: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullCountInfo {
    /// Cards to hand count, phantoms included.
    pub cards: u64,
    pub reported_tally: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestReport {
    pub contest_id: String,
    pub status: ContestStatus,
    #[serde(with = "real")]
    pub risk_limit: f64,
    #[serde(with = "real")]
    pub measured_risk: f64,
    pub draws: u64,
    /// Cards in the frame that contain the contest.
    pub population: u64,
    /// Smallest pairwise margin over the population, if not tied.
    #[serde(with = "real::option")]
    pub diluted_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancies: Option<DiscrepancyCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprt: Option<Vec<PairStatistic>>,
    pub next_sample_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_count: Option<FullCountInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub method: Method,
    pub sampling: Sampling,
    pub seed: Seed,
    pub rounds: usize,
    pub open_round: Option<usize>,
    /// Distinct located cards inspected so far.
    pub cards_inspected: u64,
    pub phantom_cards: u64,
    pub complete: bool,
    pub contests: Vec<ContestReport>,
}

#[derive(Debug, Clone, PartialEq)]
struct ContestState {
    contest: Contest,
    alpha: f64,
    margins: Option<MarginSet>,
    population: u64,
    status: ContestStatus,
    risk: f64,
    size: u64,
    counts: DiscrepancyCounts,
    sprt: Vec<f64>,
}

impl ContestState {
    fn mu(&self) -> Option<f64> {
        self.margins.as_ref().map(|m| m.fully_diluted(m.governing()))
    }

    fn pair_stats(&self) -> Vec<PairStatistic> {
        let Some(m) = &self.margins else { return Vec::new() };
        m.pairs
            .iter()
            .zip(&self.sprt)
            .map(|(p, &t)| PairStatistic {
                winner: p.winner.clone(),
                loser: p.loser.clone(),
                t,
            })
            .collect()
    }
}

enum Target {
    Size(u64),
    FullCount,
}

/// A running audit.
#[derive(Debug, Clone)]
pub struct Audit {
    config: AuditConfig,
    seed: Seed,
    /// Election as supplied, without phantoms.
    election: Election,
    manifest: crate::model::Manifest,
    csd: crate::model::CardStyleTable,
    assignment: SeededAssignment,
    phantoms: Phantoms,
    contests: Vec<ContestState>,
    rounds: Vec<Round>,
    audited: BTreeMap<String, Interpretation>,
}

impl Audit {
    /// Checks the election, creates phantoms and assigns every card its
    /// number.
    pub fn new(config: AuditConfig, seed: Seed, mut election: Election) -> Result<Self> {
        config.validate()?;
        let config = config.normalized();
        for c in &mut election.contests {
            c.validate()?;
            c.risk_limit = real::normalize(c.risk_limit);
        }
        let known: BTreeSet<&str> = election.contests.iter().map(|c| c.id.as_str()).collect();
        if let Some(id) = config.risk_limits.keys().find(|id| !known.contains(id.as_str())) {
            return Err(RlaError::UnknownContest { contest_id: id.clone() });
        }

        let report = election.validate();
        for check in &report.contests {
            if check.flags.contains(&ValidationFlag::ExceedsBound) {
                return Err(RlaError::OutcomeNotConfirmable {
                    contest_id: check.contest_id.clone(),
                    cvrs: check.cvr_count,
                    bound: check.card_upper_bound,
                });
            }
        }
        for flag in report.flags.iter().chain(report.contests.iter().flat_map(|c| &c.flags)) {
            match flag {
                ValidationFlag::CvrWithoutCard { card_id } => {
                    return Err(RlaError::UnknownCard { card_id: card_id.clone() })
                }
                ValidationFlag::CsdCvrMismatch { card_id } => {
                    return Err(RlaError::invalid(format!(
                        "CVR for card {card_id} lists a contest its CSD entry omits"
                    )))
                }
                ValidationFlag::CountMismatch => {
                    return Err(RlaError::invalid(format!(
                        "CSD has {} lines for {} manifest cards",
                        report.csd_lines, report.manifest_cards
                    )))
                }
                ValidationFlag::ExceedsBound => {}
            }
        }

        let mut manifest = election.manifest.clone();
        let mut csd = election.csd.clone();
        let mut phantoms = Phantoms::default();
        let mut deficits = BTreeMap::new();
        for c in &election.contests {
            let located = csd.count_containing(&c.id);
            deficits.insert(c.id.clone(), c.card_upper_bound.saturating_sub(located));
            phantoms
                .cvrs
                .insert(c.id.clone(), c.card_upper_bound - election.cvrs.count_containing(&c.id));
        }
        let phantom_count = deficits.values().copied().max().unwrap_or(0);
        for (j, card) in manifest.add_phantoms(phantom_count as usize).into_iter().enumerate() {
            let contests: BTreeSet<String> = deficits
                .iter()
                .filter(|(_, &d)| d > j as u64)
                .map(|(id, _)| id.clone())
                .collect();
            csd.insert(card.card_id.clone(), contests.clone());
            phantoms.cards.push(PhantomCard {
                card_id: card.card_id,
                contests,
            });
        }

        let assignment = SeededAssignment::for_manifest(&seed, &manifest)?;
        let mut contests = Vec::with_capacity(election.contests.len());
        for c in &election.contests {
            let population = csd.count_containing(&c.id);
            let alpha = config.risk_limits.get(&c.id).copied().unwrap_or(c.risk_limit);
            let margins = match contest_margins(c, &c.tally, population) {
                Ok(m) => Some(m),
                Err(RlaError::TiedOutcome { .. }) => None,
                Err(e) => return Err(e),
            };
            let pairs = margins.as_ref().map_or(0, |m| m.pairs.len());
            contests.push(ContestState {
                contest: c.clone(),
                alpha,
                status: if margins.is_some() {
                    ContestStatus::Active
                } else {
                    ContestStatus::FullCount
                },
                margins,
                population,
                risk: 1.0,
                size: 0,
                counts: DiscrepancyCounts::default(),
                sprt: vec![1.0; pairs],
            });
        }

        Ok(Audit {
            config,
            seed,
            election,
            manifest,
            csd,
            assignment,
            phantoms,
            contests,
            rounds: Vec::new(),
            audited: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn election(&self) -> &Election {
        &self.election
    }

    pub fn phantoms(&self) -> &Phantoms {
        &self.phantoms
    }

    pub fn assignment(&self) -> &SeededAssignment {
        &self.assignment
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn round(&self, n: usize) -> Result<&Round> {
        n.checked_sub(1)
            .and_then(|i| self.rounds.get(i))
            .ok_or(RlaError::UnknownRound { round: n })
    }

    pub fn open_round(&self) -> Option<&Round> {
        self.rounds.last().filter(|r| r.result.is_none())
    }

    pub fn is_complete(&self) -> bool {
        self.open_round().is_none() && self.contests.iter().all(|c| c.status != ContestStatus::Active)
    }

    fn state(&self, id: &str) -> Option<&ContestState> {
        self.contests.iter().find(|c| c.contest.id == id)
    }

    fn target(&self, st: &ContestState) -> Target {
        let Some(mu) = st.mu() else { return Target::FullCount };
        let prev = st.size;
        let size = match self.config.method {
            Method::BallotComparison => self.comparison_target(st, mu),
            Method::BallotPolling => Some(self.polling_target(st)),
        };
        match size {
            Some(s) if s < st.population => Target::Size(s.max(prev + 1)),
            _ => Target::FullCount,
        }
    }

    fn comparison_target(&self, st: &ContestState, mu: f64) -> Option<u64> {
        let observed = if st.counts.n == 0 {
            0.0
        } else {
            (st.counts.n1 + st.counts.n2) as f64 / st.counts.n as f64
        };
        let lambda = self.config.overstatement_rate.max(observed) / mu;
        let rho = math::planning_rho(st.alpha, self.config.gamma, lambda).ok()?;
        let planned = math::ceil_count(rho / mu);
        let floor = if st.size == 0 {
            0
        } else {
            (st.size as f64 * self.config.escalation_factor).ceil() as u64
        };
        Some(planned.max(floor))
    }

    fn polling_target(&self, st: &ContestState) -> u64 {
        let m = st.margins.as_ref().expect("active contests have margins");
        if st.size == 0 {
            return m
                .pairs
                .iter()
                .map(|p| {
                    math::bravo_asn_with_nonvotes(st.alpha, p.winner_votes, p.loser_votes, st.population, false).ceil()
                        as u64
                })
                .max()
                .unwrap_or(0);
        }
        let pop = st.population as f64;
        let needed = m
            .pairs
            .iter()
            .zip(&st.sprt)
            .map(|(p, &t)| {
                let remaining = (1.0 / (st.alpha * t)).ln();
                if remaining <= 0.0 {
                    return 0;
                }
                let s = p.winner_share();
                let mut per_card = p.winner_votes as f64 / pop * (2.0 * s).ln();
                if p.loser_votes > 0 {
                    per_card += p.loser_votes as f64 / pop * (2.0 * (1.0 - s)).ln();
                }
                (remaining / per_card).ceil() as u64
            })
            .max()
            .unwrap_or(0);
        let floor = (st.size as f64 * self.config.escalation_factor).ceil() as u64;
        floor.max(st.size + needed)
    }

    /// Draws for a contest up to cumulative size `size`.
    fn draws(&self, contest_id: &str, size: u64) -> Result<(Vec<String>, Option<f64>)> {
        match self.config.sampling {
            Sampling::WithoutReplacement => {
                let s = sampler::consistent_sample(&self.assignment, &self.csd, contest_id, size)?;
                Ok((s.card_ids, Some(s.threshold)))
            }
            Sampling::WithReplacement => Ok((
                sampler::with_replacement_draws(&self.seed, &self.csd, contest_id, size),
                None,
            )),
        }
    }

    /// Picks this round's cumulative sample sizes and the cards to retrieve.
    /// Phantom cards on the list are recorded as not found immediately.
    pub fn plan_round(&mut self) -> Result<&RoundPlan> {
        if let Some(open) = self.open_round() {
            return Err(RlaError::RoundOpen { round: open.plan.round });
        }
        if self.is_complete() {
            return Err(RlaError::AuditComplete);
        }
        let round = self.rounds.len() + 1;
        let mut planned = Vec::new();
        let mut full_count = Vec::new();
        let mut new_draws = BTreeMap::new();
        let mut wanted: BTreeSet<String> = BTreeSet::new();
        for i in 0..self.contests.len() {
            let st = &self.contests[i];
            if st.status != ContestStatus::Active {
                continue;
            }
            match self.target(st) {
                Target::FullCount => {
                    full_count.push(st.contest.id.clone());
                    self.contests[i].status = ContestStatus::FullCount;
                }
                Target::Size(size) => {
                    let id = st.contest.id.clone();
                    let (draws, threshold) = self.draws(&id, size)?;
                    let prior = st.size;
                    wanted.extend(draws.iter().cloned());
                    new_draws.insert(id.clone(), draws[prior as usize..].to_vec());
                    planned.push(PlannedContest {
                        contest_id: id,
                        prior_size: prior,
                        size,
                        threshold,
                    });
                }
            }
        }

        let active: BTreeSet<&str> = self
            .contests
            .iter()
            .filter(|c| c.status == ContestStatus::Active)
            .map(|c| c.contest.id.as_str())
            .collect();
        let mut cards: Vec<RetrievalCard> = wanted
            .iter()
            .filter(|id| !self.audited.contains_key(*id))
            .filter_map(|id| self.manifest.get(id))
            .map(|card| RetrievalCard {
                card: card.clone(),
                contests: self
                    .csd
                    .contests_of(&card.card_id)
                    .into_iter()
                    .flatten()
                    .filter(|c| active.contains(c.as_str()))
                    .cloned()
                    .collect(),
            })
            .collect();
        cards.sort_by_key(|c| c.card.retrieval_key());
        let interpretations = cards
            .iter()
            .filter(|c| c.card.is_phantom)
            .map(|c| Interpretation::not_found(c.card.card_id.clone()))
            .collect();

        self.rounds.push(Round {
            plan: RoundPlan {
                round,
                contests: planned,
                full_count,
                cards,
            },
            interpretations,
            result: None,
            draws: new_draws,
        });
        Ok(&self.rounds.last().expect("just pushed").plan)
    }

    /// Records the audit board's reading of one card on the open round.
    pub fn record_interpretation(&mut self, interpretation: Interpretation) -> Result<()> {
        let round = self.rounds.last().filter(|r| r.result.is_none()).ok_or(RlaError::NoOpenRound)?;
        let entry = round
            .plan
            .cards
            .iter()
            .find(|c| c.card.card_id == interpretation.card_id)
            .ok_or_else(|| RlaError::UnexpectedCard {
                card_id: interpretation.card_id.clone(),
            })?;
        if round.interpretations.iter().any(|i| i.card_id == interpretation.card_id) {
            return Err(RlaError::AlreadyRecorded {
                card_id: interpretation.card_id,
            });
        }
        if !interpretation.not_found {
            for (contest_id, reading) in &interpretation.contests {
                let st = self.state(contest_id).ok_or_else(|| RlaError::UnknownContest {
                    contest_id: contest_id.clone(),
                })?;
                if let Reading::Marked(crate::model::Selection::Votes(votes)) = reading {
                    if let Some(v) = votes.iter().find(|v| !st.contest.candidates.contains(v)) {
                        return Err(RlaError::invalid(format!("{v} is not a candidate in {contest_id}")));
                    }
                }
            }
            if let Some(missing) = entry.contests.iter().find(|c| !interpretation.contests.contains_key(*c)) {
                return Err(RlaError::invalid(format!(
                    "card {} needs a reading for contest {missing}",
                    interpretation.card_id
                )));
            }
        }
        self.rounds
            .last_mut()
            .expect("open round")
            .interpretations
            .push(interpretation);
        Ok(())
    }

    /// Scores the round's draws, updates every sampled contest's risk and
    /// retires contests that met their risk limit.
    pub fn finalize_round(&mut self) -> Result<&RoundResult> {
        let round = self.rounds.last().filter(|r| r.result.is_none()).ok_or(RlaError::NoOpenRound)?;
        let recorded: HashSet<&str> = round.interpretations.iter().map(|i| i.card_id.as_str()).collect();
        let missing: Vec<String> = round
            .plan
            .cards
            .iter()
            .filter(|c| !recorded.contains(c.card.card_id.as_str()))
            .map(|c| c.card.card_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(RlaError::RoundIncomplete { missing });
        }
        for i in &round.interpretations {
            self.audited.entry(i.card_id.clone()).or_insert_with(|| i.clone());
        }

        let round = self.rounds.last().expect("open round");
        let number = round.plan.round;
        let draws = round.draws.clone();
        let sizes: BTreeMap<String, u64> = round.plan.contests.iter().map(|p| (p.contest_id.clone(), p.size)).collect();
        let mut csd_errors = BTreeSet::new();
        let mut results = Vec::new();
        let method = self.config.method;
        let gamma = self.config.gamma;
        for st in &mut self.contests {
            let id = st.contest.id.clone();
            if let (Some(new), Some(&size)) = (draws.get(&id), sizes.get(&id)) {
                let margins = st.margins.as_ref().expect("sampled contests have margins");
                for card_id in new {
                    let interp = self.audited.get(card_id);
                    match method {
                        Method::BallotComparison => {
                            let score = scoring::comparison_card_score(
                                &st.contest,
                                &margins.pairs,
                                self.election.cvrs.get(card_id),
                                interp,
                            );
                            st.counts.record(score.discrepancy);
                            if score.csd_error {
                                csd_errors.insert((card_id.clone(), id.clone()));
                            }
                        }
                        Method::BallotPolling => {
                            st.counts.n += 1;
                            for (pair, t) in margins.pairs.iter().zip(st.sprt.iter_mut()) {
                                let obs = scoring::polling_observation(&st.contest, pair, interp);
                                *t = math::bravo_sprt_update(*t, pair.winner_share(), obs)?;
                            }
                            if let Some(Reading::ContestNotOnCard) = interp.and_then(|i| i.contests.get(&id)) {
                                csd_errors.insert((card_id.clone(), id.clone()));
                            }
                        }
                    }
                }
                st.size = size;
                let mu = st.mu().expect("sampled contests have margins");
                st.risk = match method {
                    Method::BallotComparison => math::km_risk(mu, gamma, &st.counts),
                    Method::BallotPolling => st.sprt.iter().map(|&t| math::bravo_risk(t)).fold(0.0, f64::max),
                };
                if st.risk <= st.alpha {
                    st.status = ContestStatus::Confirmed;
                }
            }
            let sampled = draws.contains_key(&id);
            let moved = self.rounds.last().expect("open round").plan.full_count.contains(&id);
            if sampled || moved {
                results.push(ContestRoundResult {
                    contest_id: id,
                    draws: st.size,
                    measured_risk: st.risk,
                    status: st.status,
                    discrepancies: (method == Method::BallotComparison && sampled).then_some(st.counts),
                    sprt: (method == Method::BallotPolling && sampled).then(|| st.pair_stats()),
                });
            }
        }

        let complete = self.contests.iter().all(|c| c.status != ContestStatus::Active);
        let round = self.rounds.last_mut().expect("open round");
        round.result = Some(RoundResult {
            round: number,
            contests: results,
            csd_errors: csd_errors
                .into_iter()
                .map(|(card_id, contest_id)| CsdError { card_id, contest_id })
                .collect(),
            complete,
        });
        Ok(round.result.as_ref().expect("just set"))
    }

    /// Current state of every contest.
    pub fn status(&self) -> StatusReport {
        let contests = self
            .contests
            .iter()
            .map(|st| ContestReport {
                contest_id: st.contest.id.clone(),
                status: st.status,
                risk_limit: st.alpha,
                measured_risk: st.risk,
                draws: st.size,
                population: st.population,
                diluted_margin: st.mu(),
                discrepancies: (self.config.method == Method::BallotComparison).then_some(st.counts),
                sprt: (self.config.method == Method::BallotPolling).then(|| st.pair_stats()),
                next_sample_size: match (st.status, self.target(st)) {
                    (ContestStatus::Active, Target::Size(s)) if self.open_round().is_none() => Some(s),
                    _ => None,
                },
                full_count: (st.status == ContestStatus::FullCount).then(|| FullCountInfo {
                    cards: st.population,
                    reported_tally: st.contest.tally.clone(),
                }),
            })
            .collect();
        StatusReport {
            method: self.config.method,
            sampling: self.config.sampling,
            seed: self.seed.clone(),
            rounds: self.rounds.len(),
            open_round: self.open_round().map(|r| r.plan.round),
            cards_inspected: self
                .audited
                .keys()
                .filter(|id| self.manifest.get(id).is_some_and(|c| !c.is_phantom))
                .count() as u64,
            phantom_cards: self.phantoms.cards.len() as u64,
            complete: self.is_complete(),
            contests,
        }
    }

    /// Runs rounds to completion, asking `read` for each retrieved card.
    pub fn run_with<F>(&mut self, max_rounds: usize, mut read: F) -> Result<StatusReport>
    where
        F: FnMut(&RetrievalCard) -> Interpretation,
    {
        for _ in 0..max_rounds {
            if self.is_complete() {
                break;
            }
            let cards: Vec<RetrievalCard> = self
                .plan_round()?
                .cards
                .iter()
                .filter(|c| !c.card.is_phantom)
                .cloned()
                .collect();
            for card in &cards {
                self.record_interpretation(read(card))?;
            }
            self.finalize_round()?;
        }
        Ok(self.status())
    }
}

#[cfg(test)]
mod tests;
