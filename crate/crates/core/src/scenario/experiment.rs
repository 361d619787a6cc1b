use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{fidelity, pruning_curve, reference_fuse, FidelityReport, PruningCurve};
use super::scene::{generate_scene, SceneConfig, SyntheticScene};
use crate::config::{BudgetConfig, DEFAULT_EPSILON};
use crate::error::{invalid, Error, Result};
use crate::feature::{AgentTensor, FeatureMap, PatchGrid};
use crate::harness::{
    communication_rate, reference_bytes, run_round_with, AgentState, BandwidthLedger, BudgetAudit,
    Planner, RoundOptions,
};
use crate::init::HeadInit;
use crate::routing::{route, AssembledTensor, RoutingParams};

/// Protocol knobs shared by every run of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub tau_s: f64,
    pub epsilon: f64,
    pub patch_size: usize,
    pub experts: usize,
    pub head_init: HeadInit,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { tau_s: 1.0, epsilon: DEFAULT_EPSILON, patch_size: 1, experts: 4, head_init: HeadInit::Prior }
    }
}

/// A scenario file: scene generator settings, protocol settings and the
/// seeds and budgets to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub frames: u32,
    pub seeds: Vec<u64>,
    pub budget_fractions: Vec<f64>,
    pub prune_fractions: Vec<f64>,
    pub scene: SceneConfig,
    pub protocol: ProtocolConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            frames: 1,
            seeds: vec![0],
            budget_fractions: vec![0.01, 0.05, 0.2, 1.0],
            prune_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            scene: SceneConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.frames == 0 {
            return Err(invalid("a scenario needs at least one frame"));
        }
        let fractions = self.budget_fractions.iter().chain(&self.prune_fractions);
        if let Some(f) = fractions.into_iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(invalid(format!("fraction {f} outside [0, 1]")));
        }
        self.budget_config(0, 0).validate()?;
        PatchGrid::new(self.scene.height, self.scene.width, self.protocol.patch_size)?;
        Ok(())
    }

    pub fn budget_config(&self, budget_blocks: u64, seed: u64) -> BudgetConfig {
        BudgetConfig {
            budget_blocks,
            tau_s: self.protocol.tau_s,
            epsilon: self.protocol.epsilon,
            patch_size: self.protocol.patch_size,
            experts: self.protocol.experts,
            seed,
            rounds: self.frames as usize,
            head_init: self.protocol.head_init,
        }
    }

    pub fn collaborators(&self) -> usize {
        self.scene.agents.saturating_sub(1)
    }

    /// Blocks needed to send every tile of every collaborator.
    pub fn full_blocks(&self) -> u64 {
        let p = self.protocol.patch_size;
        let q = (self.scene.height / p) * (self.scene.width / p);
        (self.collaborators() * q * self.scene.channels) as u64
    }

    /// Short digest of everything that shapes a run except seed, budget
    /// and baseline.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(&(&self.scene, &self.protocol, self.frames))
            .expect("scenario serializes");
        Sha256::digest(canonical.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Payload budget as a fraction of full exchange or an absolute block count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Fraction(f64),
    Blocks(u64),
}

impl Budget {
    pub fn blocks(self, full_blocks: u64) -> u64 {
        match self {
            Budget::Fraction(f) => (f * full_blocks as f64).round() as u64,
            Budget::Blocks(b) => b,
        }
    }

    pub fn fraction(self) -> Option<f64> {
        match self {
            Budget::Fraction(f) => Some(f),
            Budget::Blocks(_) => None,
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// `0.05` and `5%` are fractions; `120blocks`, `120block` and `120b`
    /// are block counts.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || invalid(format!("cannot parse budget {s:?}"));
        for suffix in ["blocks", "block", "b"] {
            if let Some(n) = s.strip_suffix(suffix) {
                return n.trim().parse().map(Budget::Blocks).map_err(|_| bad());
            }
        }
        let fraction = match s.strip_suffix('%') {
            Some(p) => p.trim().parse::<f64>().map_err(|_| bad())? / 100.0,
            None => s.parse::<f64>().map_err(|_| bad())?,
        };
        if !(0.0..=1.0).contains(&fraction) {
            return Err(invalid(format!("budget fraction {fraction} outside [0, 1]")));
        }
        Ok(Budget::Fraction(fraction))
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Fraction(v) => write!(f, "{v}"),
            Budget::Blocks(b) => write!(f, "{b}blocks"),
        }
    }
}

/// One generated frame with its agents and full-exchange fusion.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub scene: SyntheticScene,
    pub agents: Vec<AgentState>,
    pub oracle: FeatureMap,
}

/// Everything about `(scenario, seed)` that does not depend on the budget.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub routing: RoutingParams,
    pub frames: Vec<PreparedFrame>,
}

#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub fidelity: FidelityReport,
    pub fused: FeatureMap,
    pub audit: BudgetAudit,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub planner: Planner,
    pub budget_blocks: u64,
    pub frames: Vec<FrameOutcome>,
    pub ledger: BandwidthLedger,
    pub rate: f64,
    pub payload_rate: f64,
    pub salient_mse: f64,
    pub global_mse: f64,
}

impl RunOutcome {
    pub fn audit_passed(&self) -> bool {
        self.frames.iter().all(|f| f.audit.passed())
    }
}

/// Stacks every agent's features as if all tiles had been received.
pub fn full_exchange(features: &[FeatureMap], patch_size: usize) -> Result<AssembledTensor> {
    let refs: Vec<&FeatureMap> = features.iter().collect();
    let data = AgentTensor::stack(&refs)?;
    let grid = PatchGrid::new(data.height(), data.width(), patch_size)?;
    AssembledTensor::full(data, grid, (0..features.len() as u16).collect())
}

pub fn prepare(scenario: &Scenario, seed: u64) -> Result<PreparedRun> {
    scenario.validate()?;
    let routing = RoutingParams::new(
        seed,
        scenario.scene.channels,
        scenario.protocol.experts,
        scenario.protocol.head_init,
    );
    let frames = (0..scenario.frames)
        .map(|frame| {
            let scene = generate_scene(&scenario.scene, seed, frame)?;
            let agents = scene
                .features
                .iter()
                .enumerate()
                .map(|(i, f)| AgentState::new(i as u16, f.clone(), seed, scenario.protocol.head_init))
                .collect();
            let full = full_exchange(&scene.features, scenario.protocol.patch_size)?;
            let oracle = reference_fuse(&route(&full, &routing))?;
            Ok(PreparedFrame { scene, agents, oracle })
        })
        .collect::<Result<_>>()?;
    Ok(PreparedRun { scenario: scenario.clone(), seed, routing, frames })
}

impl PreparedRun {
    pub fn evaluate(&self, budget: Budget, planner: Planner) -> Result<RunOutcome> {
        self.evaluate_with(budget, RoundOptions { planner, fault: None })
    }

    pub fn evaluate_with(&self, budget: Budget, options: RoundOptions) -> Result<RunOutcome> {
        let s = &self.scenario;
        let budget_blocks = budget.blocks(s.full_blocks());
        let config = s.budget_config(budget_blocks, self.seed);
        let mut ledger = BandwidthLedger::new(budget_blocks, s.protocol.patch_size);
        let mut frames = Vec::with_capacity(self.frames.len());
        for (round, frame) in self.frames.iter().enumerate() {
            let result = run_round_with(&frame.agents, 0, &config, round as u32, options)?;
            let fused = reference_fuse(&route(&result.assembled, &self.routing))?;
            let fidelity = fidelity(&frame.scene, &fused, &frame.oracle)?;
            ledger.extend(&result.ledger);
            frames.push(FrameOutcome { fidelity, fused, audit: result.audit });
        }
        let shape = (s.scene.height, s.scene.width, s.scene.channels);
        let (rate, payload_rate) = match s.collaborators() {
            0 => (0.0, 0.0),
            n => (
                communication_rate(&ledger, shape, n)?,
                ledger.payload_bytes() as f64 / f64::from(s.frames) / reference_bytes(shape, n),
            ),
        };
        for f in &mut frames {
            f.fidelity.rate = rate;
            f.fidelity.baseline = options.planner;
        }
        let count = frames.len() as f64;
        Ok(RunOutcome {
            seed: self.seed,
            planner: options.planner,
            budget_blocks,
            salient_mse: frames.iter().map(|f| f.fidelity.salient_mse).sum::<f64>() / count,
            global_mse: frames.iter().map(|f| f.fidelity.global_mse).sum::<f64>() / count,
            frames,
            ledger,
            rate,
            payload_rate,
        })
    }

    /// Pruning analysis of the first frame's full-exchange fusion.
    pub fn pruning(&self, fractions: &[f64]) -> Result<PruningCurve> {
        pruning_curve(&self.frames[0].oracle, fractions)
    }
}

/// Runs one seed under one budget and planner.
pub fn run_scenario(scenario: &Scenario, seed: u64, budget: Budget, planner: Planner) -> Result<RunOutcome> {
    prepare(scenario, seed)?.evaluate(budget, planner)
}

/// Fuses the full exchange of `scene` and ranks its channels for pruning.
pub fn pruning_experiment(
    scene: &SyntheticScene,
    fractions: &[f64],
    routing: &RoutingParams,
    patch_size: usize,
) -> Result<PruningCurve> {
    let full = full_exchange(&scene.features, patch_size)?;
    pruning_curve(&reference_fuse(&route(&full, routing))?, fractions)
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub baseline: Planner,
    pub budget_fraction: Option<f64>,
    pub budget_blocks: u64,
    pub frames: u32,
    pub rate: f64,
    pub payload_rate: f64,
    pub salient_mse: f64,
    pub global_mse: f64,
    pub payload_blocks: u64,
    pub budget_audit: AuditStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Pass,
    Fail,
}

impl RunRecord {
    pub fn new(scenario: &Scenario, budget: Budget, outcome: &RunOutcome) -> Self {
        Self {
            scenario: scenario.name.clone(),
            config_hash: scenario.config_hash(),
            seed: outcome.seed,
            baseline: outcome.planner,
            budget_fraction: budget.fraction(),
            budget_blocks: outcome.budget_blocks,
            frames: scenario.frames,
            rate: outcome.rate,
            payload_rate: outcome.payload_rate,
            salient_mse: outcome.salient_mse,
            global_mse: outcome.global_mse,
            payload_blocks: outcome.ledger.payload_blocks(),
            budget_audit: if outcome.audit_passed() { AuditStatus::Pass } else { AuditStatus::Fail },
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}
