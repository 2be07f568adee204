//! One JSON file per session under a data directory. Every mutation
//! replays the stored log, applies one engine call and rewrites the file
//! through a temporary file and a rename. Mutations of one session are
//! serialized by a per-session lock.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rla_core::engine::{Audit, AuditConfig, Interpretation, RetrievalCard, RoundPlan, RoundResult, SessionEnvelope};
use rla_core::model::{Election, ElectionInput};
use rla_core::sampler::Seed;
use rla_core::RlaError;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Body of a session-creation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub config: AuditConfig,
    pub seed: Seed,
    pub election: ElectionInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardEntry {
    pub card_id: String,
    pub position: u32,
    pub contests: Vec<String>,
    pub recorded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrayGroup {
    pub cart: u32,
    pub tray: u32,
    pub cards: Vec<CardEntry>,
}

/// A round's retrieval list in physical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalGroups {
    pub round: usize,
    pub finalized: bool,
    pub groups: Vec<TrayGroup>,
    /// Phantom cards; recorded as not found when the round was planned.
    pub phantoms: Vec<String>,
}

pub fn group_cards(round: usize, finalized: bool, cards: &[RetrievalCard], recorded: &BTreeSet<&str>) -> RetrievalGroups {
    let mut groups: Vec<TrayGroup> = Vec::new();
    let mut phantoms = Vec::new();
    for rc in cards {
        let card = &rc.card;
        if card.is_phantom {
            phantoms.push(card.card_id.clone());
            continue;
        }
        let entry = CardEntry {
            card_id: card.card_id.clone(),
            position: card.position,
            contests: rc.contests.clone(),
            recorded: recorded.contains(card.card_id.as_str()),
        };
        match groups.last_mut() {
            Some(g) if g.cart == card.cart && g.tray == card.tray => g.cards.push(entry),
            _ => groups.push(TrayGroup {
                cart: card.cart,
                tray: card.tray,
                cards: vec![entry],
            }),
        }
    }
    RetrievalGroups {
        round,
        finalized,
        groups,
        phantoms,
    }
}

fn valid_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// Fails unless round `n` exists and is still open.
fn open_round(audit: &Audit, n: usize) -> Result<(), RlaError> {
    if audit.round(n)?.result.is_some() {
        return Err(RlaError::RoundFinalized { round: n });
    }
    Ok(())
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(ApiError::io)?;
        Ok(SessionStore {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn load(&self, id: &str) -> Result<Audit, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found(format!("no session {id}")));
        }
        let text = match fs::read_to_string(self.path(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::not_found(format!("no session {id}")))
            }
            Err(e) => return Err(ApiError::io(e)),
        };
        Ok(Audit::from_json(&text)?)
    }

    fn save(&self, id: &str, audit: &Audit) -> Result<(), ApiError> {
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        fs::write(&tmp, audit.to_json()).map_err(ApiError::io)?;
        fs::rename(&tmp, self.path(id)).map_err(ApiError::io)
    }

    pub fn create(&self, req: CreateSession) -> Result<SessionEnvelope, ApiError> {
        let election = Election::parse(&req.election)?;
        let audit = Audit::new(req.config, req.seed, election)?;
        let envelope = audit.envelope();
        let lock = self.lock(&envelope.session_id);
        let _guard = lock.lock().expect("session lock");
        if self.path(&envelope.session_id).exists() {
            return Err(ApiError::new(
                409,
                "SESSION_EXISTS",
                format!("session {} already exists", envelope.session_id),
            ));
        }
        self.save(&envelope.session_id, &audit)?;
        Ok(envelope)
    }

    pub fn read<T>(&self, id: &str, f: impl FnOnce(&Audit) -> Result<T, RlaError>) -> Result<T, ApiError> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock");
        let audit = self.load(id)?;
        Ok(f(&audit)?)
    }

    /// Applies `f` and persists the result; nothing is written on error.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut Audit) -> Result<T, RlaError>) -> Result<T, ApiError> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock");
        let mut audit = self.load(id)?;
        let out = f(&mut audit)?;
        self.save(id, &audit)?;
        Ok(out)
    }

    pub fn envelope(&self, id: &str) -> Result<SessionEnvelope, ApiError> {
        self.read(id, |a| Ok(a.envelope()))
    }

    pub fn plan(&self, id: &str) -> Result<RoundPlan, ApiError> {
        self.update(id, |a| a.plan_round().cloned())
    }

    pub fn cards(&self, id: &str, n: usize) -> Result<RetrievalGroups, ApiError> {
        self.read(id, |a| {
            let round = a.round(n)?;
            let recorded = round.interpretations.iter().map(|i| i.card_id.as_str()).collect();
            Ok(group_cards(n, round.result.is_some(), &round.plan.cards, &recorded))
        })
    }

    pub fn record(&self, id: &str, n: usize, interpretation: Interpretation) -> Result<(), ApiError> {
        self.update(id, |a| {
            open_round(a, n)?;
            a.record_interpretation(interpretation)
        })
    }

    pub fn finalize(&self, id: &str, n: usize) -> Result<RoundResult, ApiError> {
        self.update(id, |a| {
            open_round(a, n)?;
            a.finalize_round().cloned()
        })
    }
}
