use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{kind} id {id} out of range (< {bound})")]
    OutOfRange {
        kind: &'static str,
        id: usize,
        bound: usize,
    },

    #[error("relation name {0:?} collides with the inverse-relation name of another relation")]
    RelationNameCollision(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparam(String),

    #[error("non-finite training loss at epoch {epoch} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize },

    #[error("nothing to evaluate: empty triple set")]
    EmptyEvaluation,

    #[error("threshold tuning needs both positive and negative examples")]
    SingleClass,

    #[error("model shapes disagree: {0}")]
    ShapeMismatch(String),

    #[error("degenerate matrix: all entries are zero")]
    DegenerateMatrix,

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn check_id(kind: &'static str, id: u32, bound: usize) -> Result<()> {
    if (id as usize) < bound {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            kind,
            id: id as usize,
            bound,
        })
    }
}
