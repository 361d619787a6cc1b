//! Bandwidth-aware sparse feature exchange for multi-agent collaborative
//! perception.
//!
//! A round runs in three stages: every collaborator sends compact importance
//! metadata to the ego agent, the ego agent apportions an integer budget of
//! channel blocks across collaborators and patches, and each collaborator
//! answers with a priority-ordered sparse payload. The ego agent reassembles
//! the payloads, routes channels through a small mixture of experts and
//! fuses the result.

pub mod audit;
pub mod config;
pub mod coordinator;
pub mod error;
pub mod feature;
pub mod harness;
mod init;
pub mod routing;
pub mod scenario;
pub mod sender;

pub use config::BudgetConfig;
pub use error::{Error, Result};
pub use feature::{AgentTensor, FeatureMap, Kernel2D, PatchGrid, Plane};
pub use init::HeadInit;
