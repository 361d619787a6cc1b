use crate::error::{shape_err, Error, Result};
use crate::feature::{AgentTensor, FeatureMap, PatchGrid};
use crate::sender::FeatureMessage;

/// Dense `N × C × H × W` stack of what the ego agent holds after a payload
/// round. Agent 0 is the ego agent; unreceived tiles are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledTensor {
    pub data: AgentTensor,
    pub grid: PatchGrid,
    /// Agent id per row; `agent_ids[0]` is the ego agent.
    pub agent_ids: Vec<u16>,
    /// Received flag per `(agent, channel, patch)`.
    mask: Vec<bool>,
}

impl AssembledTensor {
    /// Wraps a full tensor with every tile marked present.
    pub fn full(data: AgentTensor, grid: PatchGrid, agent_ids: Vec<u16>) -> Result<Self> {
        if (data.height(), data.width()) != (grid.height(), grid.width()) {
            return Err(shape_err("tensor does not match the patch grid"));
        }
        if agent_ids.len() != data.agents() {
            return Err(shape_err("one agent id per tensor row is required"));
        }
        let mask = vec![true; data.agents() * data.channels() * grid.count()];
        Ok(Self { data, grid, agent_ids, mask })
    }

    pub fn agents(&self) -> usize {
        self.data.agents()
    }

    pub fn channels(&self) -> usize {
        self.data.channels()
    }

    pub fn present(&self, n: usize, c: usize, k: usize) -> bool {
        self.mask[(n * self.channels() + c) * self.grid.count() + k]
    }

    /// Whether pixel `(h, w)` of agent `n`, channel `c` was received.
    pub fn present_at(&self, n: usize, c: usize, h: usize, w: usize) -> bool {
        self.present(n, c, self.grid.patch_of(h, w))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn received_blocks(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Scatters decoded payloads next to the ego features.
///
/// `messages` pairs each sender id with its payload; rows follow the given
/// order after the ego row.
pub fn assemble(
    ego_id: u16,
    ego: &FeatureMap,
    messages: &[(u16, FeatureMessage)],
    grid: &PatchGrid,
) -> Result<AssembledTensor> {
    let (h, w, c) = ego.shape();
    if (h, w) != (grid.height(), grid.width()) {
        return Err(shape_err("ego features do not match the patch grid"));
    }
    let n = messages.len() + 1;
    let q = grid.count();
    let mut data = AgentTensor::zeros(n, c, h, w);
    let mut mask = vec![false; n * c * q];
    for ch in 0..c {
        data.slice_mut(0, ch).copy_from_slice(ego.channel(ch));
        mask[ch * q..(ch + 1) * q].fill(true);
    }
    for (row, (sender, msg)) in messages.iter().enumerate() {
        let a = row + 1;
        for b in &msg.blocks {
            let protocol = |reason: String| Error::Protocol { sender: *sender, reason };
            if b.patch >= q || b.channel >= c {
                return Err(protocol(format!(
                    "block (patch {}, channel {}) outside {q} patches x {c} channels",
                    b.patch, b.channel
                )));
            }
            if b.values.len() != grid.area() {
                return Err(protocol(format!(
                    "block carries {} values, patch holds {}",
                    b.values.len(),
                    grid.area()
                )));
            }
            let slice = data.slice_mut(a, b.channel);
            for ((ph, pw), v) in grid.pixels(b.patch).zip(&b.values) {
                slice[ph * w + pw] = *v as f64;
            }
            mask[(a * c + b.channel) * q + b.patch] = true;
        }
    }
    let mut agent_ids = vec![ego_id];
    agent_ids.extend(messages.iter().map(|(s, _)| *s));
    Ok(AssembledTensor { data, grid: *grid, agent_ids, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sender::PayloadBlock;

    #[test]
    fn ego_only() {
        let ego = FeatureMap::from_fn(4, 4, 2, |h, w, c| (h * 8 + w + c) as f64).unwrap();
        let grid = PatchGrid::new(4, 4, 2).unwrap();
        let t = assemble(0, &ego, &[(1, FeatureMessage::default())], &grid).unwrap();
        assert_eq!(t.data.agent(0), ego);
        assert!(t.data.agent(1).as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(t.received_blocks(), 2 * 4);
    }

    #[test]
    fn single_block_fills_one_tile() {
        let ego = FeatureMap::zeros(4, 4, 3).unwrap();
        let grid = PatchGrid::new(4, 4, 2).unwrap();
        let msg = FeatureMessage {
            blocks: vec![PayloadBlock { patch: 0, channel: 2, values: vec![1.0, 2.0, 3.0, 4.0] }],
        };
        let t = assemble(0, &ego, &[(9, msg)], &grid).unwrap();
        let agent1 = t.data.agent(1);
        assert_eq!(agent1.as_slice().iter().filter(|&&v| v != 0.0).count(), 4);
        assert_eq!(agent1.get(1, 1, 2), 4.0);
        assert!(t.present(1, 2, 0));
        assert!(!t.present(1, 2, 1));
        assert_eq!(t.agent_ids, vec![0, 9]);
    }

    #[test]
    fn out_of_range_block_is_a_protocol_error() {
        let ego = FeatureMap::zeros(2, 2, 1).unwrap();
        let grid = PatchGrid::new(2, 2, 1).unwrap();
        let msg = FeatureMessage {
            blocks: vec![PayloadBlock { patch: 0, channel: 1, values: vec![1.0] }],
        };
        assert_eq!(
            assemble(0, &ego, &[(3, msg)], &grid).unwrap_err(),
            Error::Protocol { sender: 3, reason: "block (patch 0, channel 1) outside 4 patches x 1 channels".into() }
        );
    }
}
