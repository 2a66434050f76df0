use crate::lp::{LpError, Status};
use crate::types::ActorId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid energy offer #{index}: {reason}")]
    InvalidOffer { index: usize, reason: String },
    #[error("invalid reserve bid #{index}: {reason}")]
    InvalidBid { index: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{model} program ended {status:?}")]
    Solve { model: &'static str, status: Status },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("round {round}, stage {stage}{}: {source}", actor.map(|a| format!(", actor {a}")).unwrap_or_default())]
    Round {
        round: usize,
        stage: &'static str,
        actor: Option<ActorId>,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_round(self, round: usize, stage: &'static str, actor: Option<ActorId>) -> Self {
        Error::Round {
            round,
            stage,
            actor,
            source: Box::new(self),
        }
    }
}
