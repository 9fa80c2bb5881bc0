use std::path::Path;

use clockfcs::fcs::{verify_theorem1, ClassicalFcs, FcsResult, THEOREM1_SLACK};
use clockfcs::feedback::{build_joint, classical_feedback_rate_matrix, ClassicalFeedbackChain, FeedbackPolicy};
use clockfcs::io::{self, fmt_float};
use clockfcs::model::{classical_to_lindblad, ClassicalClockworkSpec};
use clockfcs::sweep::{
    compare_classical, compare_constant_vs_feedback, grid_best, optimize, sweep, SweepGrid, SweepRow,
};
use clockfcs::trajectory::{
    default_horizon_classical, simulate_classical, simulate_quantum, QuantumSystem, SimulationConfig, TrajectoryStats,
};
use clockfcs::{ControlledFamily, Error, FcsSolver, IntegratedCurrent, JumpLabel, LindbladSpec, Result};
use serde_json::{json, Value};

use crate::config::{require, Command, CompareSection, CurrentFile, RunConfig};

/// Summary for stdout, an optional table for `--output`, and whether a
/// bound violation was seen.
pub struct Outcome {
    pub summary: Value,
    pub table: Option<Table>,
    pub violation: bool,
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: ToString>(header: &[S]) -> Self {
        Self { header: header.iter().map(ToString::to_string).collect(), rows: Vec::new() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(&self.header).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

/// The system a command acts on: a plain model or clockworks under feedback.
enum System {
    Model { spec: LindbladSpec, classical: Option<ClassicalClockworkSpec> },
    Feedback { families: Vec<ControlledFamily>, policy: FeedbackPolicy, spec: LindbladSpec },
}

impl System {
    fn load(cfg: &RunConfig) -> Result<Self> {
        match (&cfg.model, &cfg.families, &cfg.policy) {
            (Some(model), None, None) => {
                let model = model.load(&cfg.base)?;
                let classical = if model.is_classical() { Some(model.to_classical()?) } else { None };
                let spec = match &classical {
                    Some(c) => classical_to_lindblad(c),
                    None => model.to_spec()?,
                };
                Ok(System::Model { spec, classical })
            }
            (None, Some(families), Some(policy)) => {
                let families = families
                    .iter()
                    .map(|f| f.load(&cfg.base)?.to_family())
                    .collect::<Result<Vec<_>>>()?;
                let policy = policy.load(&cfg.base)?.to_policy()?;
                let spec = build_joint(&families, &policy)?.spec;
                Ok(System::Feedback { families, policy, spec })
            }
            (None, None, None) => Err(Error::Parse("config needs a `model` or `families` + `policy`".into())),
            _ => Err(Error::Parse("give either `model` or both `families` and `policy`".into())),
        }
    }

    fn spec(&self) -> &LindbladSpec {
        match self {
            System::Model { spec, .. } | System::Feedback { spec, .. } => spec,
        }
    }

    fn chain(&self) -> Result<Option<ClassicalFeedbackChain>> {
        match self {
            System::Feedback { families, policy, .. } if families.iter().all(ControlledFamily::is_classical) => {
                let dims: Vec<usize> = families.iter().map(ControlledFamily::dim).collect();
                Ok(Some(classical_feedback_rate_matrix(&dims, policy)?))
            }
            _ => Ok(None),
        }
    }

    /// Total count over the base labels unless a current is configured.
    fn current(&self, cfg: &RunConfig) -> Result<IntegratedCurrent> {
        let base = self.spec().labels().map(JumpLabel::base);
        let current = match &cfg.current {
            None => IntegratedCurrent::total_count(base),
            Some(src) => match src.load(&cfg.base)? {
                CurrentFile::TotalCount { total_count: true } => IntegratedCurrent::total_count(base),
                CurrentFile::TotalCount { total_count: false } => IntegratedCurrent::new(),
                CurrentFile::Weights { weights } => weights,
            },
        };
        current.validate(&self.spec().labels().collect::<Vec<_>>())?;
        Ok(current)
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Snr => snr(cfg),
        Command::Bounds => bounds(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Optimize => run_optimize(cfg),
        Command::Simulate => simulate(cfg),
        Command::VerifyTheorem1 => theorem1(cfg),
        Command::Compare => compare(cfg),
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt_float(x))
    }
}

fn fcs_json(r: &FcsResult) -> Value {
    json!({
        "F": num(r.f),
        "D": num(r.d),
        "S": num(if r.degeneracy.is_some() { 0.0 } else { r.s }),
        "accuracy": num(r.accuracy),
        "activity": num(r.dynamical_activity),
        "residual_time": r.residual_time.map(num),
        "flag": r.degeneracy.map(|d| d.as_str()),
    })
}

fn fcs_table(r: &FcsResult) -> Table {
    let mut t = Table::new(&io::FCS_HEADER);
    t.rows.push(io::fcs_record(r));
    t
}

fn evaluate(cfg: &RunConfig) -> Result<(System, IntegratedCurrent, FcsResult)> {
    let system = System::load(cfg)?;
    let current = system.current(cfg)?;
    let r = FcsSolver::new(system.spec())?.evaluate(&current)?;
    Ok((system, current, r))
}

fn snr(cfg: &RunConfig) -> Result<Outcome> {
    let (system, _, r) = evaluate(cfg)?;
    let mut summary = fcs_json(&r);
    summary["dim"] = json!(system.spec().dim());
    Ok(Outcome { summary, table: Some(fcs_table(&r)), violation: false })
}

fn bounds(cfg: &RunConfig) -> Result<Outcome> {
    let (system, current, r) = evaluate(cfg)?;
    let chain = system.chain()?;
    let classical = match (&system, &chain) {
        (System::Model { classical: Some(c), .. }, _) => Some(ClassicalFcs::new(c)?),
        (_, Some(ch)) => Some(ch.fcs()?),
        _ => None,
    };
    let s = if r.degeneracy.is_some() { 0.0 } else { r.s };
    let mut summary = fcs_json(&r);
    let mut violation = false;
    if let Some(c) = &classical {
        let a = c.activity();
        let tau = c.residual_time()?;
        violation |= s > a * (1.0 + THEOREM1_SLACK) || s * tau > 1.0 + THEOREM1_SLACK;
        summary["kur_bound"] = num(a);
        summary["cur_bound"] = num(1.0 / tau);
    }
    if let System::Feedback { families, policy, .. } = &system {
        match clockfcs::fcs::theorem1_bound(families, policy) {
            Ok(b) => {
                violation |= s > b * (1.0 + THEOREM1_SLACK);
                summary["theorem1_bound"] = num(b);
            }
            Err(Error::Precondition(msg)) => summary["theorem1_bound_skipped"] = json!(msg),
            Err(e) => return Err(e),
        }
    }
    summary["current_entries"] = json!(current.entries().count());
    let mut table = fcs_table(&r);
    for (key, col) in [("kur_bound", "kur_bound"), ("cur_bound", "cur_bound"), ("theorem1_bound", "theorem1_bound")] {
        table.header.push(col.into());
        table.rows[0].push(summary[key].as_f64().map(fmt_float).unwrap_or_default());
    }
    Ok(Outcome { summary, table: Some(table), violation })
}

fn sweep_table(grid: &SweepGrid, rows: &[SweepRow]) -> Table {
    let names: Vec<String> = grid.axes.iter().map(|a| a.name.clone()).collect();
    Table { header: io::sweep_header(&names), rows: rows.iter().map(io::sweep_record).collect() }
}

fn run_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let section = require(&cfg.sweep, "sweep")?;
    if cfg.output.is_none() {
        return Err(Error::Parse("sweep writes a table; give `output` or --output".into()));
    }
    let grid = SweepGrid::new(section.axes.clone())?;
    let rows = sweep(&grid, &section.objective);
    let best = grid_best(&rows);
    let summary = json!({
        "points": rows.len(),
        "flagged": rows.iter().filter(|r| r.flag.is_some()).count(),
        "best": best.map(|b| json!({"params": b.params, "S": num(b.s)})),
    });
    Ok(Outcome { summary, table: Some(sweep_table(&grid, &rows)), violation: false })
}

fn run_optimize(cfg: &RunConfig) -> Result<Outcome> {
    let section = require(&cfg.sweep, "sweep")?;
    let grid = SweepGrid::new(section.axes.clone())?;
    let (rows, report) = optimize(&grid, &section.objective, cfg.refine)?;
    let summary = serde_json::to_value(&report)?;
    Ok(Outcome { summary, table: Some(sweep_table(&grid, &rows)), violation: false })
}

fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let system = System::load(cfg)?;
    let current = system.current(cfg)?;
    let sim = &cfg.simulate;
    let classical: Option<(ClassicalClockworkSpec, Vec<f64>)> = match (&system, system.chain()?) {
        (System::Model { classical: Some(c), spec }, _) => {
            Some((c.clone(), spec.labels().map(|l| current.weight_for(l)).collect()))
        }
        (_, Some(chain)) => {
            let w = chain.weights(&current)?;
            Some((chain.spec, w))
        }
        _ => None,
    };
    let stats: TrajectoryStats = match &classical {
        Some((chain, weights)) => {
            let horizon = match sim.horizon {
                Some(h) => h,
                None => default_horizon_classical(chain)?,
            };
            simulate_classical(chain, weights, &SimulationConfig::new(horizon, sim.trajectories, sim.seed))?
        }
        None => {
            let qs = match &system {
                System::Feedback { families, policy, .. } => {
                    QuantumSystem::from_joint(&build_joint(families, policy)?, &current)?
                }
                System::Model { spec, .. } => QuantumSystem::from_spec(spec, &current)?,
            };
            let horizon = match sim.horizon {
                Some(h) => h,
                None => qs.default_horizon()?,
            };
            simulate_quantum(&qs, &SimulationConfig::new(horizon, sim.trajectories, sim.seed))?
        }
    };
    let mut summary = serde_json::to_value(&stats)?;
    if let Ok(r) = FcsSolver::new(system.spec()).and_then(|s| s.evaluate(&current)) {
        summary["fcs"] = json!({
            "F": num(r.f),
            "D": num(r.d),
            "z_F": num((stats.f_hat - r.f) / stats.se_f),
            "z_D": num((stats.d_hat - r.d) / stats.se_d),
            "within_3_se": stats.agrees_with(r.f, r.d, 3.0),
        });
    }
    let mut table = Table::new(&io::TRAJECTORY_HEADER);
    table.rows.push(io::trajectory_record(&stats));
    Ok(Outcome { summary, table: Some(table), violation: false })
}

fn theorem1(cfg: &RunConfig) -> Result<Outcome> {
    let report = verify_theorem1(&cfg.theorem1)?;
    let mut table = Table::new(&["trial", "bound", "best_snr", "max_random_snr", "ratio"]);
    for i in &report.instances {
        table.rows.push(vec![
            i.trial.to_string(),
            fmt_float(i.bound),
            fmt_float(i.best_snr),
            fmt_float(i.max_random_snr),
            fmt_float(i.ratio),
        ]);
    }
    let summary = json!({
        "trials": report.instances.len(),
        "seed": cfg.theorem1.seed,
        "max_ratio": num(report.max_ratio),
        "resampled": report.resampled,
        "violated": report.violated,
    });
    Ok(Outcome { summary, table: Some(table), violation: report.violated })
}

fn compare(cfg: &RunConfig) -> Result<Outcome> {
    let section = cfg.compare.clone().unwrap_or(CompareSection::Quantum { config: Default::default() });
    match section {
        CompareSection::Quantum { config } => {
            let mut config = config;
            if cfg.refine != Default::default() {
                config.refine = cfg.refine;
            }
            let rep = compare_constant_vs_feedback(&config)?;
            let mut table = Table::new(&[
                "E_star", "phi_star", "single_snr", "ceiling", "alpha1", "alpha2", "feedback_snr", "ratio", "advantage",
            ]);
            table.rows.push(vec![
                fmt_float(rep.e_star),
                fmt_float(rep.phi_star),
                fmt_float(rep.single_snr),
                fmt_float(rep.ceiling),
                fmt_float(rep.feedback_argmax[0]),
                fmt_float(rep.feedback_argmax[1]),
                fmt_float(rep.feedback_snr),
                fmt_float(rep.ratio),
                rep.advantage.to_string(),
            ]);
            Ok(Outcome { summary: serde_json::to_value(&rep)?, table: Some(table), violation: false })
        }
        CompareSection::Classical { rate_range, start } => {
            let rep = compare_classical(rate_range[0], rate_range[1], &start, cfg.refine)?;
            let mut table = Table::new(&["ceiling", "feedback_snr", "ratio", "advantage"]);
            table.rows.push(vec![
                fmt_float(rep.ceiling),
                fmt_float(rep.feedback_snr),
                fmt_float(rep.ratio),
                rep.advantage.to_string(),
            ]);
            let violation = rep.ratio > 1.0 + 1e-6;
            Ok(Outcome { summary: serde_json::to_value(&rep)?, table: Some(table), violation })
        }
    }
}
