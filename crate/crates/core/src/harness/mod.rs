//! Round-based protocol driver, bandwidth accounting and the wire format.

mod ledger;
mod round;
pub mod wire;

pub use ledger::{communication_rate, reference_bytes, BandwidthLedger, LedgerEntry};
pub use round::{
    run_round, run_round_with, AgentState, BudgetAudit, Fault, Planner, Pose, RoundOptions,
    RoundResult,
};
pub use wire::{decode, encode, WireMessage};
