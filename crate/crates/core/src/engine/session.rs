//! Persisted session documents.
//!
//! A session is one JSON document holding the configuration, seed, election
//! inputs and the append-only round log. Loading a document replays the log
//! through the engine and checks every stored plan and result against the
//! recomputed one.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Audit, AuditConfig, ContestStatus, Interpretation, Phantoms, RoundPlan, RoundResult};
use crate::error::{Result, RlaError};
use crate::model::{Contest, Election, ElectionInput};
use crate::real;
use crate::sampler::Seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionFiles {
    pub manifest_csv: String,
    pub csd_csv: String,
    pub cvrs_jsonl: String,
    pub cards_per_ballot: u32,
    pub ballot_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub plan: RoundPlan,
    pub interpretations: Vec<Interpretation>,
    pub result: Option<RoundResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub config: AuditConfig,
    pub seed: Seed,
    pub contests: Vec<Contest>,
    pub phantoms: Phantoms,
    pub election: ElectionFiles,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestSummary {
    pub contest_id: String,
    pub status: ContestStatus,
    #[serde(with = "real")]
    pub measured_risk: f64,
}

/// Summary returned by the service for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEnvelope {
    pub session_id: String,
    /// SHA-256 of the configuration, seed and election inputs.
    pub config_digest: String,
    pub rounds: usize,
    pub open_round: Option<usize>,
    pub complete: bool,
    pub contests: Vec<ContestSummary>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl SessionDoc {
    pub fn election_input(&self) -> ElectionInput {
        ElectionInput {
            contests: self.contests.clone(),
            manifest_csv: self.election.manifest_csv.clone(),
            csd_csv: self.election.csd_csv.clone(),
            cvrs_jsonl: self.election.cvrs_jsonl.clone(),
            cards_per_ballot: Some(self.election.cards_per_ballot),
            ballot_count: Some(self.election.ballot_count),
        }
    }

    pub fn config_digest(&self) -> String {
        let canonical = serde_json::to_string(&(&self.config, &self.seed, &self.contests, &self.election))
            .expect("session parts serialize");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    /// First 16 hex digits of the config digest; fixed for the life of a session.
    pub fn session_id(&self) -> String {
        self.config_digest()[..16].to_string()
    }
}

fn same<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_value(a).ok() == serde_json::to_value(b).ok()
}

impl Audit {
    pub fn to_session(&self) -> SessionDoc {
        let input = self.election.to_input();
        SessionDoc {
            config: self.config.clone(),
            seed: self.seed.clone(),
            contests: input.contests,
            phantoms: self.phantoms.clone(),
            election: ElectionFiles {
                manifest_csv: input.manifest_csv,
                csd_csv: input.csd_csv,
                cvrs_jsonl: input.cvrs_jsonl,
                cards_per_ballot: input.cards_per_ballot.unwrap_or(1),
                ballot_count: input.ballot_count.unwrap_or(0),
            },
            rounds: self
                .rounds
                .iter()
                .map(|r| RoundRecord {
                    plan: r.plan.clone(),
                    interpretations: r.interpretations.clone(),
                    result: r.result.clone(),
                })
                .collect(),
        }
    }

    /// Pretty-printed session document with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_session()).expect("session serializes");
        out.push('\n');
        out
    }

    pub fn envelope(&self) -> SessionEnvelope {
        let doc = self.to_session();
        let status = self.status();
        SessionEnvelope {
            session_id: doc.session_id(),
            config_digest: doc.config_digest(),
            rounds: status.rounds,
            open_round: status.open_round,
            complete: status.complete,
            contests: status
                .contests
                .iter()
                .map(|c| ContestSummary {
                    contest_id: c.contest_id.clone(),
                    status: c.status,
                    measured_risk: c.measured_risk,
                })
                .collect(),
        }
    }

    /// Rebuilds an audit by replaying the round log.
    pub fn from_session(doc: &SessionDoc) -> Result<Audit> {
        let election = Election::parse(&doc.election_input())?;
        let mut audit = Audit::new(doc.config.clone(), doc.seed.clone(), election)?;
        if !same(&audit.phantoms, &doc.phantoms) {
            return Err(RlaError::ReplayMismatch("phantoms differ".into()));
        }
        for (i, record) in doc.rounds.iter().enumerate() {
            let n = i + 1;
            let plan = audit.plan_round()?.clone();
            if !same(&plan, &record.plan) {
                return Err(RlaError::ReplayMismatch(format!("round {n} plan differs")));
            }
            for interp in &record.interpretations {
                let auto = audit
                    .open_round()
                    .is_some_and(|r| r.interpretations.iter().any(|i| i == interp));
                if !auto {
                    audit.record_interpretation(interp.clone())?;
                }
            }
            let replayed = &audit.open_round().expect("open round").interpretations;
            if replayed != &record.interpretations {
                return Err(RlaError::ReplayMismatch(format!("round {n} interpretations differ")));
            }
            if let Some(stored) = &record.result {
                let result = audit.finalize_round()?;
                if !same(result, stored) {
                    return Err(RlaError::ReplayMismatch(format!("round {n} result differs")));
                }
            } else if n != doc.rounds.len() {
                return Err(RlaError::ReplayMismatch(format!("round {n} is open but not last")));
            }
        }
        Ok(audit)
    }

    pub fn from_json(text: &str) -> Result<Audit> {
        let doc: SessionDoc = serde_json::from_str(text).map_err(|e| RlaError::parse(e.line(), e))?;
        Audit::from_session(&doc)
    }
}
