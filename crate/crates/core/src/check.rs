//! Exact inequality assertions shared by the witness verifiers.

use std::fmt;

use serde::Serialize;

use crate::rational::{fmt_q, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Lt => lhs < rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }
}

/// One exact comparison `lhs REL rhs`, tagged with the row it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub row: u64,
    pub name: String,
    pub lhs: Q,
    pub relation: Relation,
    pub rhs: Q,
}

impl Check {
    pub fn new(row: u64, name: impl Into<String>, lhs: Q, relation: Relation, rhs: Q) -> Self {
        Self {
            row,
            name: name.into(),
            lhs,
            relation,
            rhs,
        }
    }

    pub fn passed(&self) -> bool {
        self.relation.holds(&self.lhs, &self.rhs)
    }

    /// `lhs − rhs` oriented so that a passing check has a nonnegative margin.
    pub fn margin(&self) -> Q {
        match self.relation {
            Relation::Le | Relation::Lt => &self.rhs - &self.lhs,
            Relation::Ge | Relation::Gt => &self.lhs - &self.rhs,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {} [{}]: {} {} {} ({})",
            self.row,
            self.name,
            fmt_q(&self.lhs),
            self.relation.symbol(),
            fmt_q(&self.rhs),
            if self.passed() { "ok" } else { "VIOLATED" }
        )
    }
}

/// The first failing check, if any.
pub fn first_failure(checks: &[Check]) -> Option<&Check> {
    checks.iter().find(|c| !c.passed())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("assertion failed: {0}")]
pub struct AssertionFailed(pub Check);

/// `Ok(())` when every check passes, else the first failure.
pub fn require_all(checks: &[Check]) -> Result<(), AssertionFailed> {
    match first_failure(checks) {
        Some(c) => Err(AssertionFailed(c.clone())),
        None => Ok(()),
    }
}
