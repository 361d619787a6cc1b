use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sparsecomm_core::audit::{run_audit, AuditConfig};
use sparsecomm_core::harness::{Fault, Planner};
use sparsecomm_core::scenario::{prepare, AuditStatus, Budget, RunRecord, Scenario};

use crate::error::CliError;
use crate::output::emit;
use crate::ScenarioArgs;

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, CliError> {
    let mut scenario = match &args.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Scenario::from_toml(&text)?
        }
        None => Scenario::default(),
    };
    if let Some(p) = args.patch_size {
        scenario.protocol.patch_size = p;
    }
    if let Some(m) = args.experts {
        scenario.protocol.experts = m;
    }
    if let Some(t) = args.tau_s {
        scenario.protocol.tau_s = t;
    }
    if !args.seeds.is_empty() {
        scenario.seeds = args.seeds.clone();
    }
    if scenario.seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    scenario.validate()?;
    Ok(scenario)
}

fn failed_audits(records: &[RunRecord]) -> Option<CliError> {
    let failed: Vec<String> = records
        .iter()
        .filter(|r| r.budget_audit == AuditStatus::Fail)
        .map(|r| format!("seed {} {} {}blocks", r.seed, r.baseline.tag(), r.budget_blocks))
        .collect();
    (!failed.is_empty()).then(|| CliError::Invariant(format!("budget audit failed for {}", failed.join(", "))))
}

fn finish(out: Option<&Path>, records: &[RunRecord]) -> Result<(), CliError> {
    let lines: Vec<String> = records.iter().map(RunRecord::to_json_line).collect();
    emit(out, &lines)?;
    failed_audits(records).map_or(Ok(()), Err)
}

pub fn run(args: &ScenarioArgs, budget: Budget, planner: Planner) -> Result<(), CliError> {
    let scenario = load_scenario(args)?;
    let records = scenario
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = prepare(&scenario, seed)?.evaluate(budget, planner)?;
            Ok(RunRecord::new(&scenario, budget, &outcome))
        })
        .collect::<Result<Vec<_>, sparsecomm_core::Error>>()?;
    finish(args.out.as_deref(), &records)
}

pub fn sweep(args: &ScenarioArgs, budgets: &[Budget], planners: Vec<Planner>) -> Result<(), CliError> {
    let scenario = load_scenario(args)?;
    let budgets: Vec<Budget> = if budgets.is_empty() {
        scenario.budget_fractions.iter().map(|&f| Budget::Fraction(f)).collect()
    } else {
        budgets.to_vec()
    };
    if budgets.len() < 2 {
        return Err(CliError::Usage("a sweep needs at least two budgets".into()));
    }
    let planners = if planners.is_empty() { Planner::ALL.to_vec() } else { planners };

    let cells: Vec<(u64, Budget)> =
        scenario.seeds.iter().flat_map(|&s| budgets.iter().map(move |&b| (s, b))).collect();
    let mut records = cells
        .par_iter()
        .map(|&(seed, budget)| {
            let run = prepare(&scenario, seed)?;
            planners
                .iter()
                .map(|&p| Ok(RunRecord::new(&scenario, budget, &run.evaluate(budget, p)?)))
                .collect::<Result<Vec<_>, sparsecomm_core::Error>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let rank = |p: Planner| Planner::ALL.iter().position(|&q| q == p);
    records.sort_by(|a, b| {
        a.budget_fraction
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.budget_fraction.unwrap_or(f64::INFINITY))
            .then(a.budget_blocks.cmp(&b.budget_blocks))
            .then(a.seed.cmp(&b.seed))
            .then(rank(a.baseline).cmp(&rank(b.baseline)))
    });
    finish(args.out.as_deref(), &records)
}

#[derive(Debug, Serialize)]
struct PruneRecord<'a> {
    scenario: &'a str,
    config_hash: String,
    seed: u64,
    ranking: Vec<usize>,
    fractions: Vec<f64>,
    pruned_channels: Vec<usize>,
    retained_l1_mass: Vec<f64>,
    fused_output_mse: Vec<f64>,
    signal_energy: f64,
}

pub fn prune(args: &ScenarioArgs, fractions: &[f64]) -> Result<(), CliError> {
    let scenario = load_scenario(args)?;
    let fractions = if fractions.is_empty() { scenario.prune_fractions.clone() } else { fractions.to_vec() };
    let lines = scenario
        .seeds
        .par_iter()
        .map(|&seed| {
            let curve = prepare(&scenario, seed)?.pruning(&fractions)?;
            let record = PruneRecord {
                scenario: &scenario.name,
                config_hash: scenario.config_hash(),
                seed,
                ranking: curve.ranking,
                fractions: curve.fractions,
                pruned_channels: curve.pruned_channels,
                retained_l1_mass: curve.retained_l1_mass,
                fused_output_mse: curve.fused_output_mse,
                signal_energy: curve.signal_energy,
            };
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            Ok(line)
        })
        .collect::<Result<Vec<_>, sparsecomm_core::Error>>()?;
    emit(args.out.as_deref(), &lines)
}

pub fn audit(master_seed: u64, cases: usize, out: Option<&Path>, inject_fault: bool) -> Result<(), CliError> {
    let fault = inject_fault.then_some(Fault::ExceedBudget);
    let report = run_audit(&AuditConfig { master_seed, cases, fault })?;
    for check in &report.checks {
        let status = if check.violations == 0 { "PASS" } else { "FAIL" };
        print!("{status} {} ({} of {} cases violated)", check.name, check.violations, check.cases);
        match &check.first_failure {
            Some(f) => println!(": {f}"),
            None => println!(),
        }
    }
    if let Some(path) = out {
        let mut line = serde_json::to_string(&report).expect("report serializes");
        line.push('\n');
        emit(Some(path), &[line])?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("failed checks: {}", report.failed_checks().join(", "))))
    }
}
