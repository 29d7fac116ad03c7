use thiserror::Error;

use crate::nat::Nat;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside the region where it is defined
    /// (table without tail, non-monotone majorant beyond its cap, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter lies outside its admissible range.
    #[error("range error at `{field}`: {msg}")]
    Range { field: String, msg: String },

    /// Inputs are individually valid but do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A recursion or value outgrew its budget. When the computation is a
    /// nondecreasing recursion, `lower_bound` carries the last completed
    /// iterate, which never exceeds the true result.
    #[error("cap exceeded: {what}")]
    CapExceeded { what: String, lower_bound: Option<Nat> },

    #[error("parse error at `{path}`: {msg}")]
    Parse { path: String, msg: String },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn range(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Range {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Sets the lower bound of a cap error to `lb`. Callers pass their own
    /// last completed value, which bounds their result from below; a bound
    /// reported by a nested computation need not.
    pub fn with_lower_bound(self, lb: &Nat) -> Self {
        match self {
            Error::CapExceeded { what, .. } => Error::CapExceeded {
                what,
                lower_bound: Some(lb.clone()),
            },
            other => other,
        }
    }

    /// Adds `k` to the lower bound of a cap error, for results of the form
    /// `x + k` where the nested bound bounds `x`.
    pub fn shift_lower_bound(self, k: &Nat) -> Self {
        match self {
            Error::CapExceeded { what, lower_bound } => Error::CapExceeded {
                what,
                lower_bound: Some(lower_bound.map_or_else(|| k.clone(), |lb| lb + k)),
            },
            other => other,
        }
    }

    pub fn is_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }
}
