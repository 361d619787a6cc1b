//! Channel alignment at the ego agent: dense reassembly of sparse payloads,
//! gated dispatch of channels to multi-scale experts, inter-agent
//! recalibration and a residual squeeze-and-excitation branch.

mod assemble;
mod expert;
mod gate;
mod recalibrate;
mod se;

use rayon::prelude::*;

pub use assemble::{assemble, AssembledTensor};
pub use expert::{expert_forward, Expert};
pub use gate::{gate, GateMlp, RoutingGates, GATE_HIDDEN};
pub use recalibrate::{attention_weights, recalibrate_agents, Recalibrator, CONTEXT_DIM};
pub use se::{se_branch, SeBlock, SE_REDUCTION};

use crate::feature::{AgentTensor, PatchGrid};
use crate::init::HeadInit;

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingParams {
    pub gate: GateMlp,
    pub experts: Vec<Expert>,
    pub se: SeBlock,
}

impl RoutingParams {
    pub fn seeded(seed: u64, channels: usize, experts: usize) -> Self {
        Self::new(seed, channels, experts, HeadInit::Seeded)
    }

    pub fn new(seed: u64, channels: usize, experts: usize, init: HeadInit) -> Self {
        Self {
            gate: GateMlp::seeded(seed, experts),
            experts: (0..experts)
                .map(|e| match init {
                    HeadInit::Seeded => Expert::seeded(seed, e),
                    HeadInit::Prior => Expert::prior(seed, e),
                })
                .collect(),
            se: SeBlock::seeded(seed, channels),
        }
    }
}

/// Routing output together with the presence information of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedTensor {
    pub data: AgentTensor,
    pub grid: PatchGrid,
    pub agent_ids: Vec<u16>,
    pub gates: RoutingGates,
    mask: Vec<bool>,
}

impl RoutedTensor {
    /// The assembled tensor unchanged, as if routing were the identity.
    pub fn passthrough(x: &AssembledTensor) -> Self {
        Self {
            data: x.data.clone(),
            grid: x.grid,
            agent_ids: x.agent_ids.clone(),
            gates: RoutingGates { gates: vec![], assignment: vec![] },
            mask: x.mask().to_vec(),
        }
    }

    pub fn present(&self, n: usize, c: usize, k: usize) -> bool {
        self.mask[(n * self.data.channels() + c) * self.grid.count() + k]
    }

    pub fn present_at(&self, n: usize, c: usize, h: usize, w: usize) -> bool {
        self.present(n, c, self.grid.patch_of(h, w))
    }
}

/// `Σ_e recalibrate(expert_e(x[assigned to e])) + SE(x) + x`.
pub fn route(x: &AssembledTensor, params: &RoutingParams) -> RoutedTensor {
    let gates = gate(&x.data, &params.gate);
    let branches: Vec<(Vec<usize>, AgentTensor)> = params
        .experts
        .par_iter()
        .enumerate()
        .map(|(e, expert)| {
            let channels = gates.channels_of(e);
            let refined = expert_forward(&x.data, &channels, expert);
            (channels, recalibrate_agents(&refined, &expert.recalibrator))
        })
        .collect();

    let mut out = se_branch(&x.data, &params.se);
    for (a, b) in out.as_mut_slice().iter_mut().zip(x.data.as_slice()) {
        *a += b;
    }
    for (channels, branch) in &branches {
        for (i, &c) in channels.iter().enumerate() {
            for n in 0..x.agents() {
                for (o, v) in out.slice_mut(n, c).iter_mut().zip(branch.slice(n, i)) {
                    *o += v;
                }
            }
        }
    }
    RoutedTensor {
        data: out,
        grid: x.grid,
        agent_ids: x.agent_ids.clone(),
        gates,
        mask: x.mask().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_assembled(seed: u64, n: usize, c: usize, h: usize, w: usize) -> AssembledTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = AgentTensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        AssembledTensor::full(data, PatchGrid::new(h, w, 1).unwrap(), (0..n as u16).collect()).unwrap()
    }

    #[test]
    fn zero_input_routes_to_zero() {
        let x = AssembledTensor::full(AgentTensor::zeros(3, 5, 4, 4), PatchGrid::new(4, 4, 2).unwrap(), vec![0, 1, 2])
            .unwrap();
        let y = route(&x, &RoutingParams::seeded(1, 5, 4));
        assert!(y.data.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preserves_shape_and_partitions_channels() {
        let x = random_assembled(2, 3, 7, 6, 5);
        let params = RoutingParams::seeded(2, 7, 4);
        let y = route(&x, &params);
        assert_eq!(y.data.shape(), x.data.shape());
        assert!(y.data.is_finite());
        let mut seen: Vec<usize> = (0..4).flat_map(|e| y.gates.channels_of(e)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn single_expert_matches_manual_composition() {
        let x = random_assembled(3, 2, 4, 5, 5);
        let params = RoutingParams::seeded(3, 4, 1);
        let y = route(&x, &params);
        assert!(y.gates.assignment.iter().all(|&e| e == 0));
        let refined = recalibrate_agents(
            &expert_forward(&x.data, &[0, 1, 2, 3], &params.experts[0]),
            &params.experts[0].recalibrator,
        );
        let se = se_branch(&x.data, &params.se);
        for i in 0..x.data.as_slice().len() {
            let expected = (se.as_slice()[i] + x.data.as_slice()[i]) + refined.as_slice()[i];
            assert_eq!(y.data.as_slice()[i], expected);
        }
    }

    #[test]
    fn deterministic_for_a_fixed_seed() {
        let x = random_assembled(4, 3, 6, 4, 4);
        assert_eq!(route(&x, &RoutingParams::seeded(9, 6, 4)), route(&x, &RoutingParams::seeded(9, 6, 4)));
    }

    #[test]
    fn channel_permutation_is_equivariant() {
        let (n, c, h, w) = (2, 6, 5, 5);
        let x = random_assembled(5, n, c, h, w);
        let perm = [3, 0, 5, 1, 4, 2];
        let mut permuted = AgentTensor::zeros(n, c, h, w);
        for a in 0..n {
            for (dst, &src) in perm.iter().enumerate() {
                permuted.slice_mut(a, dst).copy_from_slice(x.data.slice(a, src));
            }
        }
        let px = AssembledTensor::full(permuted, x.grid, x.agent_ids.clone()).unwrap();

        let params = RoutingParams::seeded(5, c, 3);
        let mut pparams = params.clone();
        let hidden = params.se.hidden;
        for i in 0..hidden {
            for (dst, &src) in perm.iter().enumerate() {
                pparams.se.reduce[i * c + dst] = params.se.reduce[i * c + src];
            }
        }
        for (dst, &src) in perm.iter().enumerate() {
            for i in 0..hidden {
                pparams.se.expand[dst * hidden + i] = params.se.expand[src * hidden + i];
            }
            pparams.se.expand_bias[dst] = params.se.expand_bias[src];
        }

        let y = route(&x, &params);
        let py = route(&px, &pparams);
        for a in 0..n {
            for (dst, &src) in perm.iter().enumerate() {
                for (u, v) in py.data.slice(a, dst).iter().zip(y.data.slice(a, src)) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
