//! Simulation of a ledger-backed reputation system for sharing and
//! evaluating language models.
//!
//! The crate is organised bottom-up:
//!
//! - [`reputation`]: score, weight and update formulas
//! - [`store`]: content-addressed off-chain storage
//! - [`scorers`] and [`analytics`]: answer scoring and pairwise analytics
//! - [`backends`]: replayable model backends over a dataset
//! - [`ledger`]: the contract state machine and its transaction log
//! - [`oracle`]: reference selection and automatic evaluation
//! - [`scenario`], [`fig2`], [`bench`], [`audit`]: drivers used by the CLI

pub mod analytics;
pub mod audit;
pub mod backends;
pub mod bench;
pub mod fig2;
pub mod ledger;
pub mod oracle;
pub mod reputation;
pub mod scenario;
pub mod scorers;
pub mod store;
pub mod synth;

/// Sequential on-ledger model identifier.
pub type ModelId = u64;
