//! A small SPARQL subset: `SELECT` of one variable or a `COUNT` aggregate over
//! a conjunctive basic graph pattern, evaluated against a [`TripleStore`].
//!
//! ```text
//! query      := SELECT projection WHERE { pattern+ }
//! projection := ?var | ( COUNT ( ?var ) AS ?var )
//! pattern    := term term term [.]
//! term       := ?var | wd:Qn | wdt:Pn | "literal"
//! ```
//!
//! Keywords are case-insensitive. Anything outside this grammar (OPTIONAL,
//! FILTER, LIMIT, property paths, ...) is a parse error.
//!
//! [`TripleStore`]: crate::kb::TripleStore

mod ast;
mod eval;
mod parser;

pub use ast::{Projection, SparqlQuery, Term, TriplePattern};
pub use eval::{answer_labels, evaluate, render_evidence, Binding, BindingRow, ResultSet};
pub use parser::parse;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparqlError {
    #[error("parse error at byte {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },
    #[error("projected variable ?{0} does not occur in any pattern")]
    UnboundProjection(String),
}
