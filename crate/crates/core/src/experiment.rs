//! Comparison runs, the demand-by-duration grid and operator-weight sweeps.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluator::{decode_plan, evaluate, EvaluationReport, MitigationPlan};
use crate::formulation::{build_bm, restrict, QcqpInstance, StrategyFamily};
use crate::itm::{compute_reference_assignments, run_itm_from, ItmStep, Sweep};
use crate::scenario::{DemandShape, DurationKind, Networks, Scenario};
use crate::solver::{solve_from, Solution, SolverConfig};

/// A model that produces a mitigation plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Family(StrategyFamily),
    Itm,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::Family(StrategyFamily::Lla),
        Model::Family(StrategyFamily::Bb),
        Model::Family(StrategyFamily::Bm),
        Model::Itm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Family(f) => f.name(),
            Self::Itm => "ITM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("ITM") {
            Some(Self::Itm)
        } else {
            StrategyFamily::parse(s).map(Self::Family)
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub models: Vec<Model>,
    /// Budget per model; the initiation-time sweep splits it over its subproblems.
    pub solver: SolverConfig,
    pub sweep: Sweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { models: Model::ALL.to_vec(), solver: SolverConfig::default(), sweep: Sweep::EarlyBreak }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("no models selected".into()));
        }
        self.solver.validate()
    }
}

/// One comparison-table row; money in $, `z` in minutes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model: String,
    pub objective_user: f64,
    pub objective_operator: f64,
    pub objective_total: f64,
    pub expected_user_cost: f64,
    pub eval_total: f64,
    pub n_backup_bus: u64,
    pub z: f64,
    pub status: String,
    pub gap: f64,
}

/// Everything produced for one model.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: Model,
    pub row: ComparisonRow,
    pub instance: QcqpInstance,
    pub solution: Solution,
    pub plan: MitigationPlan,
    pub evaluation: EvaluationReport,
    /// Initiation-time sweep, for the ITM row only.
    pub itm_trace: Vec<ItmStep>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ModelRun>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<ComparisonRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    pub fn get(&self, model: Model) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.model == model)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text table.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<5}{:>12}{:>12}{:>12}{:>14}{:>12}{:>6}{:>6}{:>12}{:>10}\n",
            "model", "user", "operator", "total", "eval user", "eval total", "#BU", "z", "status", "gap"
        );
        for r in self.rows() {
            s.push_str(&format!(
                "{:<5}{:>12.1}{:>12.1}{:>12.1}{:>14.1}{:>12.1}{:>6}{:>6}{:>12}{:>10.2e}\n",
                r.model,
                r.objective_user,
                r.objective_operator,
                r.objective_total,
                r.expected_user_cost,
                r.eval_total,
                r.n_backup_bus,
                r.z,
                r.status,
                r.gap
            ));
        }
        s
    }
}

fn row(model: Model, inst: &QcqpInstance, sol: &Solution, plan: &MitigationPlan, eval: &EvaluationReport) -> ComparisonRow {
    let user = inst.beta * inst.user_minutes(&sol.values);
    let operator = inst.operator_dollars(&sol.values);
    ComparisonRow {
        model: model.name().to_string(),
        objective_user: user,
        objective_operator: operator,
        objective_total: user + operator,
        expected_user_cost: eval.expected_user_cost,
        eval_total: eval.total,
        n_backup_bus: plan.backup_count(),
        z: plan.z,
        status: sol.status.name().to_string(),
        gap: sol.gap,
    }
}

/// Solves, decodes and evaluates every selected model.
///
/// Families are solved from the most restricted up, each seeded with the
/// previous optimum, which stays feasible for the larger family.
pub fn run_compare(scenario: &Scenario, config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let nets = scenario.networks()?;
    run_compare_on(scenario, &nets, config)
}

pub fn run_compare_on(scenario: &Scenario, nets: &Networks, config: &ExperimentConfig) -> Result<Comparison> {
    let refs = compute_reference_assignments(nets, scenario)?;
    let mut models = config.models.clone();
    models.sort();
    models.dedup();
    let base = build_bm(&nets.disrupted, scenario, scenario.planning_duration()?)?;
    let mut runs = Vec::new();
    let mut seed: Option<Vec<f64>> = None;
    for model in models {
        let (inst, sol, z, itm_trace) = match model {
            Model::Family(family) => {
                let inst = restrict(&base, family);
                let sol = solve_from(&inst, &config.solver, seed.as_deref())?;
                if !sol.is_feasible() {
                    return Err(Error::Infeasible(format!("{} model has no feasible plan", family.name())));
                }
                seed = Some(sol.values.clone());
                (inst, sol, 0.0, Vec::new())
            }
            Model::Itm => {
                let r = run_itm_from(nets, scenario, &config.solver, config.sweep, seed.as_deref())?;
                (r.instance, r.solution, r.z_opt, r.trace)
            }
        };
        let plan = decode_plan(&sol, &inst, model.name(), z, &refs)?;
        let evaluation = evaluate(&plan, scenario, nets)?;
        log::info!("{model}: objective {:.1}, evaluated {:.1} ({})", sol.objective * inst.beta, evaluation.total, sol.status.name());
        runs.push(ModelRun {
            model,
            row: row(model, &inst, &sol, &plan, &evaluation),
            instance: inst,
            solution: sol,
            plan,
            evaluation,
            itm_trace,
        });
    }
    Ok(Comparison { runs })
}

/// Duration distributions of the reference grid.
pub fn grid_durations() -> [DurationKind; 4] {
    [DurationKind::Uniform, DurationKind::normal_like(), DurationKind::exponential_like(), DurationKind::BiDirac]
}

/// One cell of the demand-by-duration grid.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub demand: DemandShape,
    pub duration: DurationKind,
    pub comparison: Comparison,
}

impl GridCell {
    /// File-name friendly label, e.g. `concave_biDirac`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.demand.name(), self.duration.name())
    }
}

/// Runs every demand shape against every grid distribution.
pub fn run_grid(scenario: &Scenario, config: &ExperimentConfig) -> Result<Vec<GridCell>> {
    config.validate()?;
    let nets = scenario.networks()?;
    let mut cells = Vec::new();
    for demand in DemandShape::ALL {
        for duration in grid_durations() {
            let cell = scenario.with_demand_shape(demand).with_duration(duration.clone());
            let comparison = run_compare_on(&cell, &nets, config)?;
            cells.push(GridCell { demand, duration, comparison });
        }
    }
    Ok(cells)
}

/// Bridging and initiation decisions at one operator weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub case: String,
    pub alpha: f64,
    pub bb_backup_bus: Option<u64>,
    pub itm_z: Option<f64>,
    pub bm_relocation_cost: Option<f64>,
}

/// Re-solves the selected models for every `alpha`.
pub fn run_alpha_sweep(scenario: &Scenario, config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.len() < 2 {
        return Err(Error::InvalidParameter("an alpha sweep needs at least two values".into()));
    }
    config.validate()?;
    let nets = scenario.networks()?;
    let case = format!(
        "{}, {}",
        scenario.odpairs.first().map_or("none", |o| o.pattern.name()),
        scenario.disruption.duration.name()
    );
    let mut rows = Vec::new();
    for &alpha in alphas {
        let cmp = run_compare_on(&scenario.with_alpha(alpha), &nets, config)?;
        rows.push(SweepRow {
            case: case.clone(),
            alpha,
            bb_backup_bus: cmp.get(Model::Family(StrategyFamily::Bb)).map(|r| r.row.n_backup_bus),
            itm_z: cmp.get(Model::Itm).map(|r| r.row.z),
            bm_relocation_cost: cmp.get(Model::Family(StrategyFamily::Bm)).map(|r| r.plan.relocation_cost),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Traceability record written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub scenario_sha256: String,
    pub command: String,
    pub models: Vec<String>,
    pub time_limit_s: f64,
    pub max_nodes: usize,
    pub gap_tolerance: f64,
    /// Output file name and its SHA-256.
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(scenario_path: &Path, scenario_bytes: &[u8], command: &str, config: &ExperimentConfig) -> Self {
        Self {
            scenario: scenario_path.display().to_string(),
            scenario_sha256: sha256_hex(scenario_bytes),
            command: command.to_string(),
            models: config.models.iter().map(|m| m.name().to_string()).collect(),
            time_limit_s: config.solver.time_limit.as_secs_f64(),
            max_nodes: config.solver.max_nodes,
            gap_tolerance: config.solver.gap_tolerance,
            outputs: Vec::new(),
        }
    }

    /// Writes `bytes` to `dir/name` and records its hash.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
