//! Closed-form audit quantities: the S4 sample-size constant and sample
//! sizes, the Kaplan-Markov measured risk, BRAVO average sample numbers and
//! SPRT updates, and the two-contest workload formulas with and without
//! card-style data.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlaError};

/// Error-inflation factor used by default.
pub const DEFAULT_GAMMA: f64 = 1.03905;
pub const DEFAULT_RISK_LIMIT: f64 = 0.05;
/// Anticipated one-vote overstatements per drawn card.
pub const DEFAULT_OVERSTATEMENT_RATE: f64 = 0.001;
/// Decimal places kept in the planning value of rho.
pub const RHO_DECIMALS: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S4Params {
    #[serde(with = "crate::real")]
    pub alpha: f64,
    #[serde(with = "crate::real")]
    pub gamma: f64,
    #[serde(with = "crate::real")]
    pub overstatement_rate: f64,
}

impl Default for S4Params {
    fn default() -> Self {
        S4Params {
            alpha: DEFAULT_RISK_LIMIT,
            gamma: DEFAULT_GAMMA,
            overstatement_rate: DEFAULT_OVERSTATEMENT_RATE,
        }
    }
}

impl S4Params {
    pub fn with_alpha(self, alpha: f64) -> Self {
        S4Params { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RlaError::invalid(format!("risk limit {} is outside (0, 1)", self.alpha)));
        }
        if !(self.gamma > 0.5) {
            return Err(RlaError::invalid(format!("gamma {} must exceed 1/2", self.gamma)));
        }
        if !(self.overstatement_rate >= 0.0) {
            return Err(RlaError::invalid("overstatement rate must be non-negative"));
        }
        Ok(())
    }
}

/// Sample-size constant: `-ln(alpha) / [1/(2 gamma) + lambda ln(1 - 1/(2 gamma))]`.
pub fn rho(alpha: f64, gamma: f64, lambda: f64) -> Result<f64> {
    let inv = 1.0 / (2.0 * gamma);
    let denom = inv + lambda * (1.0 - inv).ln();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(RlaError::RhoUndefined);
    }
    Ok(-alpha.ln() / denom)
}

/// `rho` rounded to [`RHO_DECIMALS`] places, the value sample sizes are
/// planned from.
pub fn planning_rho(alpha: f64, gamma: f64, lambda: f64) -> Result<f64> {
    let scale = 10f64.powi(RHO_DECIMALS);
    Ok((rho(alpha, gamma, lambda)? * scale).round() / scale)
}

/// Ceiling that ignores floating-point residue just above an integer.
pub fn ceil_count(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

fn check_margin(margin: f64) -> Result<()> {
    if margin > 0.0 && margin <= 1.0 {
        Ok(())
    } else {
        Err(RlaError::invalid(format!("margin {margin} is outside (0, 1]")))
    }
}

/// Initial S4 sample size for a contest with the given fully diluted margin.
/// The anticipated overstatement rate is expressed relative to the margin.
pub fn s4_sample_size(params: &S4Params, margin: f64) -> Result<u64> {
    check_margin(margin)?;
    let lambda = params.overstatement_rate / margin;
    let rho = planning_rho(params.alpha, params.gamma, lambda)?;
    Ok(ceil_count(rho / margin))
}

/// Discrepancies observed for one contest so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyCounts {
    /// Draws so far.
    pub n: u64,
    /// One-vote overstatements.
    pub n1: u64,
    /// Two-vote overstatements.
    pub n2: u64,
    /// One-vote understatements (tracked, not credited).
    pub u1: u64,
    /// Two-vote understatements (tracked, not credited).
    pub u2: u64,
}

impl DiscrepancyCounts {
    pub fn record(&mut self, discrepancy: i32) {
        self.n += 1;
        match discrepancy {
            1 => self.n1 += 1,
            2 => self.n2 += 1,
            -1 => self.u1 += 1,
            -2 => self.u2 += 1,
            _ => {}
        }
    }
}

/// Kaplan-Markov measured risk of the super-simple comparison audit:
/// `exp(-n mu / (2 gamma)) (1 - 1/(2 gamma))^-n1 (1 - 1/gamma)^-n2`, capped at 1.
pub fn km_risk(margin: f64, gamma: f64, counts: &DiscrepancyCounts) -> f64 {
    if counts.n == 0 {
        return 1.0;
    }
    let mut log_p = -(counts.n as f64) * margin / (2.0 * gamma);
    log_p -= counts.n1 as f64 * (1.0 - 1.0 / (2.0 * gamma)).ln();
    if counts.n2 > 0 {
        if gamma <= 1.0 {
            return 1.0;
        }
        log_p -= counts.n2 as f64 * (1.0 - 1.0 / gamma).ln();
    }
    log_p.exp().min(1.0)
}

/// How contests B and S share cards in the two-contest workload model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Layout {
    /// Every card containing S also contains B.
    SameCard,
    /// No card contains both.
    DifferentCards,
}

/// One big contest B (on every ballot) and one small contest S (on a
/// fraction `p` of ballots), `c` cards per ballot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoContestConfig {
    /// Partially diluted margin of B.
    pub m_big: f64,
    /// Partially diluted margin of S.
    pub m_small: f64,
    pub p: f64,
    pub cards_per_ballot: u32,
    pub layout: Layout,
}

impl TwoContestConfig {
    pub fn new(m_big: f64, m_small: f64, p: f64, cards_per_ballot: u32, layout: Layout) -> Self {
        TwoContestConfig {
            m_big,
            m_small,
            p,
            cards_per_ballot,
            layout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_margin(self.m_big)?;
        check_margin(self.m_small)?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(RlaError::invalid(format!("p = {} is outside (0, 1]", self.p)));
        }
        if self.cards_per_ballot == 0 {
            return Err(RlaError::invalid("cards per ballot must be positive"));
        }
        Ok(())
    }

    fn c(&self) -> f64 {
        self.cards_per_ballot as f64
    }

    /// True when auditing B alone also finishes S without card-style data.
    pub fn big_dominates(&self) -> bool {
        self.m_big <= self.p * self.m_small
    }
}

/// Expected distinct draws to audit both contests when the sample can be
/// targeted with card-style data. Independent of cards per ballot.
pub fn s4_with_csd(config: &TwoContestConfig, params: &S4Params) -> Result<f64> {
    config.validate()?;
    let big = s4_sample_size(params, config.m_big)? as f64;
    let small = s4_sample_size(params, config.m_small)? as f64;
    Ok(match config.layout {
        Layout::DifferentCards => big + small,
        // A fraction p of B's draws also carry S and count toward its sample.
        Layout::SameCard => big + (small - config.p * big).max(0.0),
    })
}

/// Draws needed without card-style data: both contests are sampled from all
/// cards, at fully diluted margins `m_B / c` and `p m_S / c`.
pub fn s4_without_csd(config: &TwoContestConfig, params: &S4Params) -> Result<u64> {
    config.validate()?;
    let c = config.c();
    let big = s4_sample_size(params, config.m_big / c)?;
    let small = s4_sample_size(params, config.p * config.m_small / c)?;
    Ok(big.max(small))
}

/// Expected draws saved by card-style data; never negative.
pub fn s4_savings(config: &TwoContestConfig, params: &S4Params) -> Result<f64> {
    let without = s4_without_csd(config, params)? as f64;
    let with = s4_with_csd(config, params)?;
    Ok((without - with).max(0.0))
}

/// BRAVO average sample number, approximation `2 ln(1/alpha) / m^2`.
pub fn bravo_asn(alpha: f64, margin: f64) -> f64 {
    2.0 * (1.0 / alpha).ln() / (margin * margin)
}

/// Wald's average sample number for the BRAVO SPRT when the reported
/// shares are correct: `ln(1/alpha) / E`, with `E` the expected log
/// likelihood ratio per ballot.
pub fn bravo_asn_exact(alpha: f64, margin: f64) -> f64 {
    let winner = (1.0 + margin) / 2.0;
    let loser = 1.0 - winner;
    let term = |s: f64| if s > 0.0 { s * (2.0 * s).ln() } else { 0.0 };
    (1.0 / alpha).ln() / (term(winner) + term(loser))
}

/// Expected draws from cards when only a fraction of cards carry a vote for
/// either candidate; draws without such a vote leave the SPRT unchanged.
pub fn bravo_asn_with_nonvotes(alpha: f64, winner_votes: u64, loser_votes: u64, cards: u64, exact: bool) -> f64 {
    let relevant = (winner_votes + loser_votes) as f64;
    let margin = (winner_votes as f64 - loser_votes as f64) / relevant;
    let asn = if exact {
        bravo_asn_exact(alpha, margin)
    } else {
        bravo_asn(alpha, margin)
    };
    asn * cards as f64 / relevant
}

/// Which ASN to plug into the polling workload formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AsnBase {
    Approx,
    Exact,
    /// Caller-supplied per-contest ASN values.
    Fixed { big: f64, small: f64 },
}

impl AsnBase {
    fn big(&self, alpha: f64, config: &TwoContestConfig) -> f64 {
        match *self {
            AsnBase::Approx => bravo_asn(alpha, config.m_big),
            AsnBase::Exact => bravo_asn_exact(alpha, config.m_big),
            AsnBase::Fixed { big, .. } => big,
        }
    }

    fn small(&self, alpha: f64, config: &TwoContestConfig) -> f64 {
        match *self {
            AsnBase::Approx => bravo_asn(alpha, config.m_small),
            AsnBase::Exact => bravo_asn_exact(alpha, config.m_small),
            AsnBase::Fixed { small, .. } => small,
        }
    }
}

/// Card-style knowledge available to a ballot-polling audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PollingCsd {
    /// Sample from all cards.
    None,
    /// Known which containers hold ballots with S, not which cards.
    Partial,
}

/// Expected cards drawn by a BRAVO audit of B and S.
pub fn bravo_expected_draws(config: &TwoContestConfig, alpha: f64, csd: PollingCsd, base: AsnBase) -> f64 {
    let c = config.c();
    let big = base.big(alpha, config);
    let small = base.small(alpha, config);
    match (csd, config.layout) {
        (PollingCsd::None, _) => (c * big).max(c / config.p * small),
        (PollingCsd::Partial, Layout::SameCard) => (1.0 - config.p) * c * big + c * small,
        (PollingCsd::Partial, Layout::DifferentCards) => c * big + c * small,
    }
}

/// Closed-form BRAVO savings from partial card-style data, assuming S
/// drives the sample size without it.
pub fn bravo_savings(config: &TwoContestConfig, alpha: f64, base: AsnBase) -> f64 {
    let c = config.c();
    let big = base.big(alpha, config);
    let small = base.small(alpha, config);
    let shared = match config.layout {
        Layout::SameCard => 1.0 - config.p,
        Layout::DifferentCards => 1.0,
    };
    c * (small / config.p - shared * big - small)
}

/// One ballot's effect on a BRAVO pairwise test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Observation {
    Winner,
    Loser,
    /// No vote for either candidate of the pair.
    Neither,
}

/// Multiplies the SPRT statistic by the likelihood ratio of one ballot.
pub fn bravo_sprt_update(t: f64, winner_share: f64, observed: Observation) -> Result<f64> {
    if !(winner_share > 0.5 && winner_share <= 1.0) {
        return Err(RlaError::NotAReportedWin { share: winner_share });
    }
    Ok(match observed {
        Observation::Winner => t * 2.0 * winner_share,
        Observation::Loser => t * 2.0 * (1.0 - winner_share),
        Observation::Neither => t,
    })
}

/// Measured risk of a BRAVO pairwise test with statistic `t`.
pub fn bravo_risk(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (1.0 / t).min(1.0)
    }
}
