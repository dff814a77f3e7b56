//! Diagnostics for the entity channel of entity-oriented retrieval.
//!
//! The crate ingests a candidate pool (a first-stage document run), document
//! relevance judgments and per-document entity links, and answers a single
//! question from several angles: can the entities selected for a query
//! actually reach, and discriminate, the relevant documents in the pool?
//!
//! * [`corpus`] joins the inputs into an immutable [`corpus::CorpusIndex`]
//!   with per-(query, entity) document-frequency statistics.
//! * [`coverage`] measures reachability (RelCov, NonRelCov, DiscRatio,
//!   overlap, greedy oracle cover, observable coverage).
//! * [`oer`] scores observable entity relevance and labels signal modes.
//! * [`supervision`] derives binary entity labels from document judgments.
//! * [`consensus`] is an unsupervised, pool-only entity ranker.
//! * [`eval`] scores document runs under conditional and open-world pools.
//! * [`analysis`] holds the cross-run statistics (frontier, correlation,
//!   stratification, regression, breakpoint sweep).
//! * [`synth`] generates seeded synthetic environments.
//! * [`trec`] reads and writes every file format; [`cli`] wires it together.

pub mod analysis;
pub mod cli;
pub mod consensus;
pub mod corpus;
pub mod coverage;
pub mod error;
pub mod eval;
pub mod oer;
pub mod run;
pub mod supervision;
pub mod synth;
pub mod trec;

pub use error::{Error, Result};
