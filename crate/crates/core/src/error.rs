use thiserror::Error;

pub type Result<T, E = RlaError> = std::result::Result<T, E>;

/// Every failure the engine can report. Each variant maps to a stable,
/// machine-readable code (see [`RlaError::code`]) used by the CLI and the
/// HTTP service.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("card {card_id} appears more than once")]
    DuplicateCard { card_id: String },

    #[error("card {card_id} is not in the ballot manifest")]
    UnknownCard { card_id: String },

    #[error("contest {contest_id} is not defined")]
    UnknownContest { contest_id: String },

    #[error("more than one CVR for card {card_id}")]
    DuplicateCvr { card_id: String },

    #[error("contest {contest_id} has a tie for a winning position")]
    TiedOutcome { contest_id: String },

    #[error("sample-size constant undefined: anticipated overstatement rate is too high for the margin")]
    RhoUndefined,

    #[error("contest {contest_id} needs {requested} cards but only {available} contain it")]
    FullCountRequired {
        contest_id: String,
        requested: u64,
        available: u64,
    },

    #[error("reported winner share {share} is not above one half")]
    NotAReportedWin { share: f64 },

    #[error("contest {contest_id}: {cvrs} CVRs exceed the upper bound of {bound} cards")]
    OutcomeNotConfirmable {
        contest_id: String,
        cvrs: u64,
        bound: u64,
    },

    #[error("card {card_id} is not in the current retrieval list")]
    UnexpectedCard { card_id: String },

    #[error("card {card_id} already has an interpretation this round")]
    AlreadyRecorded { card_id: String },

    #[error("round is missing interpretations for {} card(s)", missing.len())]
    RoundIncomplete { missing: Vec<String> },

    #[error("no round is open")]
    NoOpenRound,

    #[error("round {round} is still open")]
    RoundOpen { round: usize },

    #[error("round {round} does not exist")]
    UnknownRound { round: usize },

    #[error("round {round} is already finalized")]
    RoundFinalized { round: usize },

    #[error("every contest has reached a final status")]
    AuditComplete,

    #[error("unknown case study {name}")]
    UnknownCase { name: String },

    #[error("session log does not replay: {0}")]
    ReplayMismatch(String),

    #[error("{0}")]
    Invalid(String),
}

impl RlaError {
    pub fn code(&self) -> &'static str {
        match self {
            RlaError::Parse { .. } => "PARSE_ERROR",
            RlaError::DuplicateCard { .. } => "DUPLICATE_CARD",
            RlaError::UnknownCard { .. } => "UNKNOWN_CARD",
            RlaError::UnknownContest { .. } => "UNKNOWN_CONTEST",
            RlaError::DuplicateCvr { .. } => "DUPLICATE_CVR",
            RlaError::TiedOutcome { .. } => "TIED_OUTCOME",
            RlaError::RhoUndefined => "RHO_UNDEFINED",
            RlaError::FullCountRequired { .. } => "FULL_COUNT_REQUIRED",
            RlaError::NotAReportedWin { .. } => "NOT_A_REPORTED_WIN",
            RlaError::OutcomeNotConfirmable { .. } => "OUTCOME_NOT_CONFIRMABLE",
            RlaError::UnexpectedCard { .. } => "UNEXPECTED_CARD",
            RlaError::AlreadyRecorded { .. } => "ALREADY_RECORDED",
            RlaError::RoundIncomplete { .. } => "ROUND_INCOMPLETE",
            RlaError::NoOpenRound => "NO_OPEN_ROUND",
            RlaError::RoundOpen { .. } => "ROUND_OPEN",
            RlaError::UnknownRound { .. } => "UNKNOWN_ROUND",
            RlaError::RoundFinalized { .. } => "ROUND_FINALIZED",
            RlaError::AuditComplete => "AUDIT_COMPLETE",
            RlaError::UnknownCase { .. } => "UNKNOWN_CASE",
            RlaError::ReplayMismatch(_) => "REPLAY_MISMATCH",
            RlaError::Invalid(_) => "INVALID_INPUT",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RlaError::Invalid(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl ToString) -> Self {
        RlaError::Parse {
            line,
            message: msg.to_string(),
        }
    }
}
