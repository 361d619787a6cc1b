use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ledger::BandwidthLedger;
use super::wire::{
    decode, encode, Body, MetadataBody, PayloadBody, PlanBody, WireMessage, BROADCAST,
};
use crate::config::BudgetConfig;
use crate::coordinator::{random_allocation, AllocationPlan, Coordinator, ShareSource};
use crate::error::{invalid, Error, Result};
use crate::feature::{FeatureMap, PatchGrid};
use crate::init::{stream_rng, HeadInit, STREAM_BASELINE};
use crate::routing::{assemble, AssembledTensor};
use crate::sender::{
    analyze, message_from_selection, ordering_violations, FeatureMessage, ImportanceBundle,
    SenderAnalysis, SenderParams,
};

/// Position and heading in a shared world frame. Features are assumed to be
/// pre-aligned to a common grid, so the pose is informational only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub agent_id: u16,
    pub pose: Pose,
    pub features: FeatureMap,
    pub sender: SenderParams,
}

impl AgentState {
    pub fn new(agent_id: u16, features: FeatureMap, seed: u64, init: HeadInit) -> Self {
        let sender = SenderParams::new(seed, features.channels(), init);
        Self { agent_id, pose: Pose::default(), features, sender }
    }
}

/// How the ego agent turns metadata into grants and how senders pick
/// channels inside a grant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    /// Saliency-driven shares, priority-ordered channels.
    #[default]
    Coordinated,
    /// Spatial budgeting with equal collaborator shares and uniformly
    /// random channels.
    SpatialOnly,
    /// Uniformly random `(agent, patch, channel)` triples.
    Random,
}

impl Planner {
    pub const ALL: [Planner; 3] = [Planner::Coordinated, Planner::Random, Planner::SpatialOnly];

    pub fn tag(self) -> &'static str {
        match self {
            Planner::Coordinated => "coordinated",
            Planner::SpatialOnly => "spatial_only",
            Planner::Random => "random",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.tag() == tag)
    }
}

/// Deliberate protocol corruption used to check that audits fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Inflate the broadcast plan to `B + 1` grants.
    ExceedBudget,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundOptions {
    pub planner: Planner,
    pub fault: Option<Fault>,
}

/// Post-round checks of what was granted against what arrived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub budget: u64,
    pub granted: u64,
    pub received: u64,
    /// Collaborators whose block count differs from their plan row.
    pub mismatched_senders: Vec<u16>,
    /// Priority violations summed over priority-ordered payloads.
    pub ordering_violations: usize,
}

impl BudgetAudit {
    pub fn within_budget(&self) -> bool {
        self.granted <= self.budget
    }

    pub fn passed(&self) -> bool {
        self.within_budget() && self.mismatched_senders.is_empty() && self.ordering_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round_id: u32,
    pub plan: AllocationPlan,
    pub assembled: AssembledTensor,
    pub ledger: BandwidthLedger,
    pub audit: BudgetAudit,
}

fn protocol(sender: u16, err: Error) -> Error {
    match err {
        Error::Protocol { .. } => err,
        other => Error::Protocol { sender, reason: other.to_string() },
    }
}

/// Encodes `msg` and parses it back as the receiving side would.
fn transmit(msg: &WireMessage) -> Result<(usize, WireMessage)> {
    let bytes = encode(msg)?;
    let received = decode(&bytes).map_err(|e| protocol(msg.sender, e))?;
    if received.sender != msg.sender {
        return Err(Error::Protocol { sender: msg.sender, reason: "sender id changed in transit".into() });
    }
    Ok((bytes.len(), received))
}

fn inflate(plan: &mut AllocationPlan, budget: u64, channels: usize) {
    let mut missing = (budget + 1).saturating_sub(plan.total());
    for g in plan.grants.iter_mut() {
        while missing > 0 && (*g as usize) < channels {
            *g += 1;
            missing -= 1;
        }
    }
    if missing > 0 {
        if let Some(g) = plan.grants.first_mut() {
            *g += missing as u32;
        }
    }
}

/// Uniformly random channels for each granted patch.
fn random_response(
    x: &FeatureMap,
    grid: &PatchGrid,
    grants: &[u32],
    seed: u64,
    round_id: u32,
    agent_id: u16,
) -> Result<FeatureMessage> {
    let channels = x.channels();
    if let Some(&b) = grants.iter().find(|&&b| b as usize > channels) {
        return Err(Error::Allocation(format!("granted {b} blocks but only {channels} channels exist")));
    }
    let salt = (u64::from(round_id) << 16 | u64::from(agent_id)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = stream_rng(seed ^ salt, STREAM_BASELINE + 1);
    let mut selection = Vec::new();
    for (k, &b) in grants.iter().enumerate() {
        if b > 0 {
            selection.extend(sample(&mut rng, channels, b as usize).into_iter().map(|c| (k, c)));
        }
    }
    message_from_selection(x, grid, selection)
}

pub fn run_round(
    agents: &[AgentState],
    ego: u16,
    config: &BudgetConfig,
    round_id: u32,
) -> Result<RoundResult> {
    run_round_with(agents, ego, config, round_id, RoundOptions::default())
}

/// One protocol cycle: metadata from every collaborator to the ego agent,
/// planning, plan broadcast, payload responses and reassembly. Every
/// message passes through the wire encoding.
pub fn run_round_with(
    agents: &[AgentState],
    ego: u16,
    config: &BudgetConfig,
    round_id: u32,
    options: RoundOptions,
) -> Result<RoundResult> {
    config.validate()?;
    let ego_state = agents
        .iter()
        .find(|a| a.agent_id == ego)
        .ok_or_else(|| invalid(format!("ego agent {ego} is not registered")))?;
    let (h, w, c) = ego_state.features.shape();
    let grid = PatchGrid::new(h, w, config.patch_size)?;
    let mut collaborators: Vec<&AgentState> = agents.iter().filter(|a| a.agent_id != ego).collect();
    collaborators.sort_by_key(|a| a.agent_id);
    if collaborators.windows(2).any(|p| p[0].agent_id == p[1].agent_id) {
        return Err(invalid("agent ids must be unique"));
    }
    if let Some(a) = collaborators.iter().find(|a| a.features.shape() != (h, w, c)) {
        return Err(Error::Shape(format!("agent {} has a different feature shape", a.agent_id)));
    }
    if c > usize::from(u16::MAX) {
        return Err(invalid("channel count exceeds the wire format"));
    }
    let ids: Vec<u16> = collaborators.iter().map(|a| a.agent_id).collect();
    let mut ledger = BandwidthLedger::new(config.budget_blocks, config.patch_size);

    if collaborators.is_empty() {
        return Ok(RoundResult {
            round_id,
            plan: AllocationPlan::empty(round_id, ids, grid.count()),
            assembled: assemble(ego, &ego_state.features, &[], &grid)?,
            ledger,
            audit: BudgetAudit {
                budget: config.budget_blocks,
                granted: 0,
                received: 0,
                mismatched_senders: vec![],
                ordering_violations: 0,
            },
        });
    }

    // Metadata round: every sender finishes before planning starts.
    let analyses: Vec<SenderAnalysis> = collaborators
        .par_iter()
        .map(|a| analyze(a.agent_id, &a.features, &grid, &a.sender).map_err(|e| protocol(a.agent_id, e)))
        .collect::<Result<_>>()?;
    let mut bundles: Vec<ImportanceBundle> = Vec::with_capacity(analyses.len());
    for analysis in &analyses {
        let msg = WireMessage {
            round: round_id,
            sender: analysis.agent_id,
            receiver: ego,
            body: Body::Metadata(MetadataBody::from_bundle(&analysis.bundle())?),
        };
        let (bytes, received) = transmit(&msg)?;
        ledger.entry_mut(round_id, analysis.agent_id).bytes_metadata += bytes as u64;
        let Body::Metadata(body) = received.body else {
            return Err(Error::Protocol { sender: received.sender, reason: "expected metadata".into() });
        };
        bundles.push(body.into_bundle(received.sender).map_err(|e| protocol(received.sender, e))?);
    }

    let mut plan = match options.planner {
        Planner::Coordinated => {
            Coordinator::new(config.clone(), grid, c)?.plan_round_with(round_id, &bundles, ShareSource::Saliency)?
        }
        Planner::SpatialOnly => {
            Coordinator::new(config.clone(), grid, c)?.plan_round_with(round_id, &bundles, ShareSource::Uniform)?
        }
        Planner::Random => {
            random_allocation(round_id, &ids, grid.count(), c, config.budget_blocks, config.seed)
        }
    };
    if options.fault == Some(Fault::ExceedBudget) {
        inflate(&mut plan, config.budget_blocks, c);
    }

    // Plan broadcast.
    let msg = WireMessage {
        round: round_id,
        sender: ego,
        receiver: BROADCAST,
        body: Body::Plan(PlanBody::from_plan(&plan)?),
    };
    let (bytes, received) = transmit(&msg)?;
    ledger.entry_mut(round_id, ego).bytes_plan += bytes as u64;
    let Body::Plan(body) = received.body else {
        return Err(Error::Protocol { sender: ego, reason: "expected plan".into() });
    };
    let broadcast = body.into_plan(round_id, ids.clone(), grid.count())?;

    // Payload round.
    let responses: Vec<FeatureMessage> = collaborators
        .par_iter()
        .zip(analyses.par_iter())
        .map(|(a, analysis)| {
            let row = broadcast.row_for(a.agent_id).expect("plan rows follow collaborator ids");
            match options.planner {
                Planner::Coordinated => analysis.respond(&a.features, row),
                Planner::SpatialOnly | Planner::Random => {
                    random_response(&a.features, &grid, row, config.seed, round_id, a.agent_id)
                }
            }
            .map_err(|e| protocol(a.agent_id, e))
        })
        .collect::<Result<_>>()?;

    let mut delivered = Vec::with_capacity(responses.len());
    let mut audit = BudgetAudit {
        budget: config.budget_blocks,
        granted: broadcast.total(),
        received: 0,
        mismatched_senders: vec![],
        ordering_violations: 0,
    };
    for ((a, analysis), response) in collaborators.iter().zip(&analyses).zip(responses) {
        let expected: u64 = broadcast.row_for(a.agent_id).unwrap_or(&[]).iter().map(|&g| u64::from(g)).sum();
        if expected == 0 && response.is_empty() {
            // nothing granted, nothing sent
            continue;
        }
        let msg = WireMessage {
            round: round_id,
            sender: a.agent_id,
            receiver: ego,
            body: Body::Payload(PayloadBody::from_message(&response)?),
        };
        let (bytes, received) = transmit(&msg)?;
        let Body::Payload(body) = received.body else {
            return Err(Error::Protocol { sender: a.agent_id, reason: "expected payload".into() });
        };
        let message = body.into_message();
        let entry = ledger.entry_mut(round_id, a.agent_id);
        entry.bytes_payload += bytes as u64;
        entry.payload_blocks += message.len() as u64;
        audit.received += message.len() as u64;
        if message.len() as u64 != expected {
            audit.mismatched_senders.push(a.agent_id);
        }
        if options.planner == Planner::Coordinated {
            audit.ordering_violations += ordering_violations(&message, &analysis.groups);
        }
        delivered.push((a.agent_id, message));
    }

    let assembled = assemble(ego, &ego_state.features, &delivered, &grid)?;
    Ok(RoundResult { round_id, plan: broadcast, assembled, ledger, audit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn agents(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Vec<AgentState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x = FeatureMap::from_fn(h, w, c, |_, _, _| f64::from(rng.random_range(-1.0f32..1.0))).unwrap();
                AgentState::new(i as u16, x, seed, HeadInit::Prior)
            })
            .collect()
    }

    fn config(budget: u64, patch_size: usize) -> BudgetConfig {
        BudgetConfig { budget_blocks: budget, patch_size, ..Default::default() }
    }

    #[test]
    fn ego_alone_exchanges_nothing() {
        let a = agents(1, 4, 4, 2, 1);
        let r = run_round(&a, 0, &config(10, 1), 0).unwrap();
        assert_eq!(r.ledger.total_bytes(), 0);
        assert_eq!(r.assembled.agents(), 1);
        assert_eq!(r.assembled.data.agent(0), a[0].features);
    }

    #[test]
    fn zero_budget_sends_only_control_traffic() {
        let a = agents(3, 4, 4, 3, 2);
        let r = run_round(&a, 0, &config(0, 1), 0).unwrap();
        let metadata: u64 = r.ledger.entries.iter().map(|e| e.bytes_metadata).sum();
        let plan: u64 = r.ledger.entries.iter().map(|e| e.bytes_plan).sum();
        assert!(metadata > 0 && plan > 0);
        assert_eq!(r.ledger.payload_blocks(), 0);
        assert_eq!(r.ledger.payload_bytes(), 0);
        assert!(r.audit.passed());
    }

    #[test]
    fn metadata_bytes_follow_the_layout() {
        let a = agents(2, 8, 8, 3, 3);
        let r = run_round(&a, 0, &config(5, 2), 0).unwrap();
        let e = r.ledger.entries.iter().find(|e| e.agent_id == 1).unwrap();
        assert_eq!(e.bytes_metadata, 14 + 6 + 64 * 4 + 16 * 4);
        assert_eq!(e.bytes_payload, 14 + 4 + e.payload_blocks * (4 + 16));
    }

    #[test]
    fn budget_is_respected_for_every_planner() {
        let a = agents(4, 8, 8, 5, 4);
        for planner in Planner::ALL {
            for b in [1, 7, 40, 1_000] {
                let r = run_round_with(&a, 0, &config(b, 2), 0, RoundOptions { planner, fault: None }).unwrap();
                assert!(r.audit.passed(), "{planner:?} b={b}: {:?}", r.audit);
                assert_eq!(r.audit.received, r.assembled.received_blocks() as u64 - 5 * 16);
            }
        }
    }

    #[test]
    fn exceeding_the_budget_is_detected() {
        let a = agents(3, 4, 4, 3, 5);
        let r = run_round_with(&a, 0, &config(6, 1), 0, RoundOptions { fault: Some(Fault::ExceedBudget), ..Default::default() })
            .unwrap();
        assert_eq!(r.audit.granted, 7);
        assert!(!r.audit.within_budget());
        assert!(!r.audit.passed());
    }

    #[test]
    fn repeated_rounds_are_identical() {
        let a = agents(4, 8, 8, 4, 6);
        for planner in Planner::ALL {
            let opts = RoundOptions { planner, fault: None };
            let r1 = run_round_with(&a, 0, &config(30, 1), 2, opts).unwrap();
            let r2 = run_round_with(&a, 0, &config(30, 1), 2, opts).unwrap();
            assert_eq!(r1.ledger, r2.ledger);
            assert_eq!(r1.plan, r2.plan);
            assert_eq!(r1.assembled, r2.assembled);
        }
    }

    #[test]
    fn degenerate_sizes_complete() {
        for n in [1, 2] {
            for b in [0, 1] {
                let a = agents(n, 3, 3, 1, 7);
                let r = run_round(&a, 0, &config(b, 1), 0).unwrap();
                assert!(r.audit.passed());
            }
        }
    }

    #[test]
    fn unknown_ego_is_rejected() {
        let a = agents(2, 4, 4, 2, 8);
        assert!(run_round(&a, 9, &config(1, 1), 0).is_err());
    }

    #[test]
    fn planner_tags_round_trip() {
        for p in Planner::ALL {
            assert_eq!(Planner::from_tag(p.tag()), Some(p));
        }
    }
}
