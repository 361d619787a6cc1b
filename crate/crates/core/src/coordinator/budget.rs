use serde::{Deserialize, Serialize};

use super::apportion::largest_remainder;
use super::merit::RefinedSaliency;
use crate::error::{invalid, shape_err, Result};
use crate::feature::{softmax, PatchGrid};
use crate::sender::SpatialImportanceMap;

/// Collaborative share `s[j][k]` of agent `j` at patch `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareMatrix {
    agents: usize,
    patches: usize,
    values: Vec<f64>,
}

impl ShareMatrix {
    pub fn from_vec(agents: usize, patches: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != agents * patches {
            return Err(shape_err("share matrix size mismatch"));
        }
        Ok(Self { agents, patches, values })
    }

    /// Every collaborator gets `1 / N` of every patch.
    pub fn uniform(agents: usize, patches: usize) -> Self {
        let v = if agents == 0 { 0.0 } else { 1.0 / agents as f64 };
        Self { agents, patches, values: vec![v; agents * patches] }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.patches + k]
    }

    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.agents).map(|j| self.get(j, k)).sum()
    }
}

/// `s[j][k] = M̂_j(k) / (Σ_l M̂_l(k) + ε)`.
pub fn compute_shares(refined: &RefinedSaliency, epsilon: f64) -> ShareMatrix {
    let agents = refined.agents();
    let patches = refined.patches();
    let mut values = vec![0.0; agents * patches];
    for k in 0..patches {
        let denom: f64 = refined.maps.iter().map(|m| m.as_slice()[k]).sum::<f64>() + epsilon;
        for (j, m) in refined.maps.iter().enumerate() {
            values[j * patches + k] = m.as_slice()[k] / denom;
        }
    }
    ShareMatrix { agents, patches, values }
}

/// Per-patch budget derived from the pooled spatial maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBudget {
    /// Patch-pooled element-wise maximum of all spatial maps.
    pub global: Vec<f64>,
    /// Softmax of `global / τ`.
    pub probabilities: Vec<f64>,
    pub temperature: f64,
    /// Integer blocks per patch; sums to `total` exactly.
    pub patch_budget: Vec<u64>,
    pub total: u64,
}

pub fn spatial_distribution(
    maps: &[SpatialImportanceMap],
    grid: &PatchGrid,
    temperature: f64,
    total: u64,
) -> Result<SpatialBudget> {
    if maps.is_empty() {
        return Err(shape_err("spatial distribution needs at least one map"));
    }
    if let Some(m) = maps.iter().find(|m| m.values.shape() != (grid.height(), grid.width())) {
        return Err(shape_err(format!(
            "spatial map of agent {} is {:?}, grid is {}x{}",
            m.agent_id,
            m.values.shape(),
            grid.height(),
            grid.width()
        )));
    }
    if !(temperature > 0.0) {
        return Err(invalid(format!("tau_s must be positive, got {temperature}")));
    }
    let global: Vec<f64> = (0..grid.count())
        .map(|k| {
            grid.pixels(k)
                .flat_map(|(h, w)| maps.iter().map(move |m| m.values.get(h, w)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let probabilities = softmax(&global, temperature)?;
    let quotas: Vec<f64> = probabilities.iter().map(|p| total as f64 * p).collect();
    let patch_budget = largest_remainder(&quotas, total);
    Ok(SpatialBudget { global, probabilities, temperature, patch_budget, total })
}

/// Why blocks of a patch budget went unspent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// No collaborator has any saliency at the patch.
    DeadPatch,
    /// Every collaborator with a share is already granted all channels.
    ChannelCap,
    /// The shares summed to less than one and the total rounded down.
    Rounding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub patch: usize,
    pub kind: ResidualKind,
    pub dropped: u64,
}

/// Integer grants `b[j][k]` broadcast to collaborators.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub round_id: u32,
    /// Collaborator of each row.
    pub agent_ids: Vec<u16>,
    pub patches: usize,
    /// Row-major `agents × patches`.
    pub grants: Vec<u32>,
    pub residual_trace: Vec<ResidualEntry>,
}

impl AllocationPlan {
    pub fn empty(round_id: u32, agent_ids: Vec<u16>, patches: usize) -> Self {
        let grants = vec![0; agent_ids.len() * patches];
        Self { round_id, agent_ids, patches, grants, residual_trace: Vec::new() }
    }

    pub fn agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn get(&self, j: usize, k: usize) -> u32 {
        self.grants[j * self.patches + k]
    }

    pub fn row(&self, j: usize) -> &[u32] {
        &self.grants[j * self.patches..(j + 1) * self.patches]
    }

    pub fn row_for(&self, agent_id: u16) -> Option<&[u32]> {
        self.agent_ids.iter().position(|&a| a == agent_id).map(|j| self.row(j))
    }

    pub fn total(&self) -> u64 {
        self.grants.iter().map(|&b| b as u64).sum()
    }

    pub fn patch_total(&self, k: usize) -> u64 {
        (0..self.agents()).map(|j| self.get(j, k) as u64).sum()
    }

    pub fn dropped(&self) -> u64 {
        self.residual_trace.iter().map(|r| r.dropped).sum()
    }
}

/// Splits every patch budget across collaborators by share.
///
/// Per patch the grant total is the nearest integer to `B_k · Σ_j s[j][k]`
/// (never above `B_k`), apportioned by largest remainder. Grants above
/// `channels` are capped and the surplus is re-apportioned among the
/// remaining collaborators with a positive share; whatever cannot be placed
/// is dropped and logged.
pub fn allocate(
    round_id: u32,
    agent_ids: &[u16],
    shares: &ShareMatrix,
    budget: &SpatialBudget,
    channels: usize,
) -> Result<AllocationPlan> {
    let agents = shares.agents();
    let patches = shares.patches();
    if agent_ids.len() != agents || budget.patch_budget.len() != patches {
        return Err(shape_err("allocation inputs are not aligned"));
    }
    let cap = channels as u64;
    let mut plan = AllocationPlan::empty(round_id, agent_ids.to_vec(), patches);
    for k in 0..patches {
        let patch_budget = budget.patch_budget[k];
        if patch_budget == 0 {
            continue;
        }
        let s: Vec<f64> = (0..agents).map(|j| shares.get(j, k)).collect();
        let share_sum: f64 = s.iter().sum();
        if !(share_sum > 0.0) {
            plan.residual_trace.push(ResidualEntry {
                patch: k,
                kind: ResidualKind::DeadPatch,
                dropped: patch_budget,
            });
            continue;
        }
        let quotas: Vec<f64> = s.iter().map(|x| patch_budget as f64 * x).collect();
        let target = ((patch_budget as f64 * share_sum).round() as u64).min(patch_budget);
        if target < patch_budget {
            plan.residual_trace.push(ResidualEntry {
                patch: k,
                kind: ResidualKind::Rounding,
                dropped: patch_budget - target,
            });
        }
        let mut grants = largest_remainder(&quotas, target);

        let mut capped = vec![false; agents];
        loop {
            let mut surplus = 0;
            for j in 0..agents {
                if grants[j] > cap {
                    surplus += grants[j] - cap;
                    grants[j] = cap;
                    capped[j] = true;
                }
            }
            if surplus == 0 {
                break;
            }
            let eligible: Vec<usize> =
                (0..agents).filter(|&j| !capped[j] && s[j] > 0.0 && grants[j] < cap).collect();
            let weight: f64 = eligible.iter().map(|&j| s[j]).sum();
            if eligible.is_empty() || !(weight > 0.0) {
                plan.residual_trace.push(ResidualEntry {
                    patch: k,
                    kind: ResidualKind::ChannelCap,
                    dropped: surplus,
                });
                break;
            }
            let extra_quotas: Vec<f64> =
                eligible.iter().map(|&j| surplus as f64 * s[j] / weight).collect();
            for (&j, extra) in eligible.iter().zip(largest_remainder(&extra_quotas, surplus)) {
                grants[j] += extra;
            }
        }
        for (j, g) in grants.into_iter().enumerate() {
            plan.grants[j * patches + k] = g as u32;
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::Plane;

    fn budget_of(patch_budget: Vec<u64>) -> SpatialBudget {
        let q = patch_budget.len();
        SpatialBudget {
            global: vec![0.0; q],
            probabilities: vec![1.0 / q as f64; q],
            temperature: 1.0,
            total: patch_budget.iter().sum(),
            patch_budget,
        }
    }

    fn refined(maps: Vec<Vec<f64>>) -> RefinedSaliency {
        let n = maps[0].len();
        RefinedSaliency {
            agent_ids: (0..maps.len() as u16).collect(),
            maps: maps.into_iter().map(|m| Plane::from_vec(1, n, m).unwrap()).collect(),
        }
    }

    #[test]
    fn share_examples() {
        let s = compute_shares(&refined(vec![vec![0.5, 1.0, 0.0], vec![0.5, 0.0, 0.0]]), 1e-6);
        assert!((s.get(0, 0) - 0.5 / (1.0 + 1e-6)).abs() < 1e-15);
        assert_eq!(s.get(0, 0), s.get(1, 0));
        assert!((s.get(0, 1) - 1.0).abs() < 1e-5);
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.get(1, 2), 0.0);
    }

    fn maps(values: Vec<f64>, rows: usize, cols: usize) -> Vec<SpatialImportanceMap> {
        vec![SpatialImportanceMap { agent_id: 1, values: Plane::from_vec(rows, cols, values).unwrap() }]
    }

    #[test]
    fn uniform_spatial_budgets() {
        let grid = PatchGrid::new(2, 2, 1).unwrap();
        let b = spatial_distribution(&maps(vec![0.5; 4], 2, 2), &grid, 1.0, 100).unwrap();
        assert_eq!(b.patch_budget, vec![25; 4]);

        let grid = PatchGrid::new(1, 3, 1).unwrap();
        let b = spatial_distribution(&maps(vec![0.5; 3], 1, 3), &grid, 1.0, 100).unwrap();
        assert_eq!(b.patch_budget, vec![34, 33, 33]);
    }

    #[test]
    fn hot_temperature_flattens_the_budget() {
        let grid = PatchGrid::new(2, 4, 1).unwrap();
        let values = vec![0.0, 1.0, 0.2, 0.9, 0.4, 0.3, 0.7, 0.05];
        let b = spatial_distribution(&maps(values, 2, 4), &grid, 1e6, 1000).unwrap();
        let dev = b.probabilities.iter().map(|p| (p - 1.0 / 8.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3);
    }

    #[test]
    fn pooling_takes_max_over_agents_and_pixels() {
        let grid = PatchGrid::new(2, 2, 2).unwrap();
        let a = SpatialImportanceMap { agent_id: 1, values: Plane::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap() };
        let b = SpatialImportanceMap { agent_id: 2, values: Plane::from_vec(2, 2, vec![0.9, 0.0, 0.0, 0.0]).unwrap() };
        let s = spatial_distribution(&[a, b], &grid, 1.0, 7).unwrap();
        assert_eq!(s.global, vec![0.9]);
        assert_eq!(s.patch_budget, vec![7]);
    }

    #[test]
    fn allocation_examples() {
        let shares = ShareMatrix::from_vec(2, 1, vec![0.6, 0.4]).unwrap();
        let plan = allocate(0, &[1, 2], &shares, &budget_of(vec![25]), 64).unwrap();
        assert_eq!(plan.grants, vec![15, 10]);
        assert!(plan.residual_trace.is_empty());

        let dead = ShareMatrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let plan = allocate(0, &[1, 2], &dead, &budget_of(vec![10]), 64).unwrap();
        assert_eq!(plan.grants, vec![0, 0]);
        assert_eq!(
            plan.residual_trace,
            vec![ResidualEntry { patch: 0, kind: ResidualKind::DeadPatch, dropped: 10 }]
        );

        let single = ShareMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let plan = allocate(0, &[1], &single, &budget_of(vec![10]), 4).unwrap();
        assert_eq!(plan.grants, vec![4]);
        assert_eq!(plan.dropped(), 6);
        assert_eq!(plan.residual_trace[0].kind, ResidualKind::ChannelCap);
    }

    #[test]
    fn capped_surplus_moves_to_other_collaborators() {
        let shares = ShareMatrix::from_vec(3, 1, vec![0.8, 0.15, 0.05]).unwrap();
        let plan = allocate(0, &[1, 2, 3], &shares, &budget_of(vec![10]), 4).unwrap();
        assert_eq!(plan.patch_total(0), 10);
        assert!(plan.grants.iter().all(|&g| g <= 4));
        assert_eq!(plan.grants[0], 4);
    }

    #[test]
    fn near_unit_shares_do_not_lose_a_block() {
        let r = refined(vec![vec![0.5], vec![0.5]]);
        let shares = compute_shares(&r, 1e-6);
        let plan = allocate(0, &[1, 2], &shares, &budget_of(vec![25]), 64).unwrap();
        assert_eq!(plan.patch_total(0), 25);
        assert!((plan.grants[0] as i64 - plan.grants[1] as i64).abs() <= 1);
    }
}
