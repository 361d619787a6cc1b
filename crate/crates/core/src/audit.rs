//! Randomized invariant suite over complete protocol rounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{compute_shares, spatial_distribution, Coordinator};
use crate::error::Result;
use crate::feature::PatchGrid;
use crate::harness::wire::{Body, MetadataBody, PayloadBody, PlanBody};
use crate::harness::{decode, encode, run_round_with, Fault, Planner, RoundOptions, WireMessage};
use crate::routing::{route, RoutingParams};
use crate::scenario::{generate_scene, SceneConfig};
use crate::sender::{analyze, ImportanceBundle, SenderParams};
use crate::{BudgetConfig, HeadInit};

pub const CHECK_NAMES: [&str; 6] =
    ["budget", "apportionment", "normalization", "ordering", "round_trip", "determinism"];

const NORMALIZATION_TOL: f64 = 1e-9;
const SHARE_TOL: f64 = 1e-4;
const SHARE_MASS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditConfig {
    pub master_seed: u64,
    pub cases: usize,
    pub fault: Option<Fault>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { master_seed: 0, cases: 100, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub master_seed: u64,
    pub cases: usize,
    pub checks: Vec<CheckOutcome>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.violations > 0).map(|c| c.name.as_str()).collect()
    }
}

/// A randomly drawn round: scene shape, patch size and budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditCase {
    pub scene: SceneConfig,
    pub seed: u64,
    pub config: BudgetConfig,
}

impl AuditCase {
    pub fn draw(master_seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(index as u64);
        let patch_size = [1usize, 2, 4][rng.random_range(0..3)];
        let rows = rng.random_range(1..=4usize);
        let cols = rng.random_range(1..=4usize);
        let channels = rng.random_range(1..=12usize);
        let agents = rng.random_range(1..=5usize);
        let primary = rng.random_range(0..=channels);
        let secondary = rng.random_range(0..=channels - primary);
        let scene = SceneConfig {
            height: rows * patch_size,
            width: cols * patch_size,
            channels,
            agents,
            objects: rng.random_range(0..4),
            primary_channels: primary,
            secondary_channels: secondary,
            ..Default::default()
        };
        let full = ((agents - 1) * rows * cols * channels) as u64;
        let seed = rng.random();
        let config = BudgetConfig {
            budget_blocks: rng.random_range(0..=full + 1),
            patch_size,
            seed,
            head_init: if rng.random_bool(0.5) { HeadInit::Prior } else { HeadInit::Seeded },
            ..Default::default()
        };
        Self { scene, seed, config }
    }
}

#[derive(Default)]
struct CaseResult {
    violations: [Vec<String>; 6],
}

impl CaseResult {
    fn flag(&mut self, check: usize, what: String) {
        self.violations[check].push(what);
    }
}

fn round_trips(msg: &WireMessage) -> Result<bool> {
    let bytes = encode(msg)?;
    let back = decode(&bytes)?;
    Ok(&back == msg && encode(&back)? == bytes)
}

fn check_case(case: &AuditCase, fault: Option<Fault>) -> Result<CaseResult> {
    let mut out = CaseResult::default();
    let scene = generate_scene(&case.scene, case.seed, 0)?;
    let agents: Vec<_> = scene
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| crate::harness::AgentState::new(i as u16, f.clone(), case.seed, case.config.head_init))
        .collect();
    let options = RoundOptions { planner: Planner::Coordinated, fault };
    let budget = case.config.budget_blocks;

    let first = run_round_with(&agents, 0, &case.config, 0, options);
    let result = match first {
        Ok(r) => r,
        Err(e) => {
            out.flag(0, format!("round failed: {e}"));
            return Ok(out);
        }
    };
    if !result.audit.within_budget() {
        out.flag(0, format!("granted {} blocks against a budget of {budget}", result.audit.granted));
    }
    if !result.audit.mismatched_senders.is_empty() {
        out.flag(0, format!("senders {:?} deviated from their grants", result.audit.mismatched_senders));
    }
    if result.audit.ordering_violations > 0 {
        out.flag(3, format!("{} blocks out of priority order", result.audit.ordering_violations));
    }

    // Recompute the planner's intermediate quantities from the wire metadata.
    let (h, w, c) = scene.features[0].shape();
    let grid = PatchGrid::new(h, w, case.config.patch_size)?;
    let params = SenderParams::new(case.seed, c, case.config.head_init);
    let mut bundles: Vec<ImportanceBundle> = Vec::new();
    for (i, f) in scene.features.iter().enumerate().skip(1) {
        let analysis = analyze(i as u16, f, &grid, &params)?;
        for k in 0..grid.count() {
            let wsum: f64 = analysis.weights.patch(k).iter().sum();
            if (wsum - 1.0).abs() > NORMALIZATION_TOL {
                out.flag(2, format!("channel weights at patch {k} sum to {wsum}"));
            }
            for ch in 0..c {
                let psum: f64 = analysis.groups.probs(k, ch).iter().sum();
                if (psum - 1.0).abs() > NORMALIZATION_TOL {
                    out.flag(2, format!("group probabilities at ({k}, {ch}) sum to {psum}"));
                }
            }
        }
        let metadata = WireMessage {
            round: 0,
            sender: i as u16,
            receiver: 0,
            body: Body::Metadata(MetadataBody::from_bundle(&analysis.bundle())?),
        };
        let row = result.plan.row_for(i as u16).map(<[u32]>::to_vec).unwrap_or_default();
        let payload = WireMessage {
            round: 0,
            sender: i as u16,
            receiver: 0,
            body: Body::Payload(PayloadBody::from_message(&analysis.respond(f, &row)?)?),
        };
        for msg in [&metadata, &payload] {
            if !round_trips(msg)? {
                out.flag(4, format!("{:?} message from agent {i} changed in transit", msg.body.kind()));
            }
        }
        let Body::Metadata(body) = decode(&encode(&metadata)?)?.body else { unreachable!() };
        bundles.push(body.into_bundle(i as u16)?);
    }
    let plan_msg = WireMessage { round: 0, sender: 0, receiver: u16::MAX, body: Body::Plan(PlanBody::from_plan(&result.plan)?) };
    if !round_trips(&plan_msg)? {
        out.flag(4, "plan changed in transit".into());
    }

    if !bundles.is_empty() && budget > 0 {
        let coordinator = Coordinator::new(case.config.clone(), grid, c)?;
        let spatial: Vec<_> = bundles.iter().map(|b| b.spatial.clone()).collect();
        let distribution = spatial_distribution(&spatial, &grid, case.config.tau_s, budget)?;
        let total: u64 = distribution.patch_budget.iter().sum();
        if total != budget {
            out.flag(1, format!("patch budgets sum to {total}, budget is {budget}"));
        }
        let psum: f64 = distribution.probabilities.iter().sum();
        if (psum - 1.0).abs() > NORMALIZATION_TOL {
            out.flag(2, format!("spatial distribution sums to {psum}"));
        }
        if fault.is_none() {
            for k in 0..grid.count() {
                if result.plan.patch_total(k) > distribution.patch_budget[k] {
                    out.flag(1, format!("patch {k} granted above its budget"));
                }
            }
        }
        let maps: Vec<_> = bundles.iter().map(|b| b.saliency.clone()).collect();
        let refined = coordinator.merit.refine(&maps)?;
        let shares = compute_shares(&refined, case.config.epsilon);
        for k in 0..grid.count() {
            let mass: f64 = refined.maps.iter().map(|m| m.as_slice()[k]).sum();
            if mass >= SHARE_MASS_FLOOR && (shares.column_sum(k) - 1.0).abs() > SHARE_TOL {
                out.flag(2, format!("shares at patch {k} sum to {}", shares.column_sum(k)));
            }
        }
    }

    let routing = RoutingParams::new(case.seed, c, case.config.experts, case.config.head_init);
    let routed = route(&result.assembled, &routing);
    for (ch, g) in routed.gates.gates.iter().enumerate() {
        let s: f64 = g.iter().sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL {
            out.flag(2, format!("gate row {ch} sums to {s}"));
        }
    }

    let again = run_round_with(&agents, 0, &case.config, 0, options)?;
    if again.ledger != result.ledger || again.plan != result.plan || again.assembled != result.assembled {
        out.flag(5, "repeated round differs".into());
    }
    Ok(out)
}

/// Runs every check on `config.cases` randomly drawn rounds.
pub fn run_audit(config: &AuditConfig) -> Result<AuditReport> {
    let results: Vec<CaseResult> = (0..config.cases)
        .into_par_iter()
        .map(|i| check_case(&AuditCase::draw(config.master_seed, i), config.fault))
        .collect::<Result<_>>()?;
    let checks = CHECK_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let failures = results.iter().flat_map(|r| &r.violations[i]);
            CheckOutcome {
                name: name.to_string(),
                cases: config.cases,
                violations: results.iter().filter(|r| !r.violations[i].is_empty()).count(),
                first_failure: failures.into_iter().next().cloned(),
            }
        })
        .collect();
    Ok(AuditReport { master_seed: config.master_seed, cases: config.cases, checks })
}
