use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Bytes exchanged by one agent in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub agent_id: u16,
    pub bytes_metadata: u64,
    pub bytes_plan: u64,
    pub bytes_payload: u64,
    pub payload_blocks: u64,
}

impl LedgerEntry {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_metadata + self.bytes_plan + self.bytes_payload
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    /// Budget in channel blocks per round.
    pub budget_blocks: u64,
    /// Bytes per block (`4·P²`).
    pub block_bytes: u64,
    pub entries: Vec<LedgerEntry>,
}

impl BandwidthLedger {
    pub fn new(budget_blocks: u64, patch_size: usize) -> Self {
        Self { budget_blocks, block_bytes: 4 * (patch_size * patch_size) as u64, entries: Vec::new() }
    }

    /// Entry for `(round, agent)`, created on first use.
    pub fn entry_mut(&mut self, round: u32, agent_id: u16) -> &mut LedgerEntry {
        let pos = match self.entries.iter().position(|e| e.round == round && e.agent_id == agent_id) {
            Some(pos) => pos,
            None => {
                self.entries.push(LedgerEntry { round, agent_id, ..Default::default() });
                self.entries.len() - 1
            }
        };
        &mut self.entries[pos]
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(LedgerEntry::total_bytes).sum()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes_payload).sum()
    }

    pub fn payload_blocks(&self) -> u64 {
        self.entries.iter().map(|e| e.payload_blocks).sum()
    }

    pub fn rounds(&self) -> usize {
        let mut rounds: Vec<u32> = self.entries.iter().map(|e| e.round).collect();
        rounds.sort_unstable();
        rounds.dedup();
        rounds.len()
    }

    pub fn extend(&mut self, other: &BandwidthLedger) {
        self.entries.extend_from_slice(&other.entries);
    }
}

/// Bytes of one 16×-compressed feature map per collaborator, the unit of
/// the communication rate.
pub fn reference_bytes(shape: (usize, usize, usize), collaborators: usize) -> f64 {
    let (h, w, c) = shape;
    collaborators as f64 * (h * w * c) as f64 * 4.0 / 16.0
}

/// Average per-round bytes in the ledger relative to [`reference_bytes`].
pub fn communication_rate(
    ledger: &BandwidthLedger,
    shape: (usize, usize, usize),
    collaborators: usize,
) -> Result<f64> {
    if collaborators == 0 {
        return Err(invalid("communication rate needs at least one collaborator"));
    }
    let (h, w, c) = shape;
    if h * w * c == 0 {
        return Err(invalid("communication rate needs a nonempty feature shape"));
    }
    let rounds = ledger.rounds().max(1) as f64;
    Ok(ledger.total_bytes() as f64 / rounds / reference_bytes(shape, collaborators))
}
