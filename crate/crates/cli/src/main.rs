//! `tmit`: batch runner for disruption-mitigation comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use transit_mitigation::experiment::{
    run_alpha_sweep, run_compare, run_grid, write_sweep_csv, Comparison, ExperimentConfig, Manifest, Model,
};
use transit_mitigation::formulation::{build_bm, status_quo_probe};
use transit_mitigation::itm::Sweep;
use transit_mitigation::scenario::Scenario;
use transit_mitigation::solver::SolverConfig;
use transit_mitigation::{Error, Result};

#[derive(Parser)]
#[command(name = "tmit", version, about = "Compare transit disruption mitigation strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its size.
    Validate { scenario: PathBuf },
    /// Solve, evaluate and tabulate the selected models.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Every demand shape against every grid duration distribution.
    Grid {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-run the models for several operator-cost weights.
    SweepAlpha {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Models to run: any of LLA, BB, BM, ITM.
    #[arg(long, value_delimiter = ',', default_value = "LLA,BB,BM,ITM", value_parser = parse_model)]
    families: Vec<Model>,
    /// Seconds per model.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Node limit per solve; with a generous time limit this makes runs repeatable.
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    gap: Option<f64>,
    /// Evaluate every initiation time instead of stopping at the first non-improvement.
    #[arg(long)]
    exhaustive: bool,
    /// Also write the bound trace of every solve.
    #[arg(long)]
    trace: bool,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    Model::parse(s).ok_or_else(|| format!("unknown model `{s}`"))
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::InvalidParameter("--time-limit must be positive".into()));
        }
        let mut solver = SolverConfig::default().with_time_limit(Duration::from_secs_f64(self.time_limit));
        if let Some(n) = self.max_nodes {
            solver.max_nodes = n;
        }
        if let Some(g) = self.gap {
            solver.gap_tolerance = g;
        }
        let config = ExperimentConfig {
            models: self.families.clone(),
            solver,
            sweep: if self.exhaustive { Sweep::Exhaustive } else { Sweep::EarlyBreak },
        };
        config.validate()?;
        Ok(config)
    }
}

fn load(path: &Path) -> Result<(Scenario, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    Ok((Scenario::from_json(&text)?, bytes))
}

fn emit_comparison(cmp: &Comparison, run: &RunArgs, prefix: &str, manifest: &mut Manifest) -> Result<()> {
    let mut csv = Vec::new();
    cmp.write_csv(&mut csv)?;
    manifest.emit(&run.out, &format!("{prefix}comparison.csv"), &csv)?;
    manifest.emit(&run.out, &format!("{prefix}summary.txt"), cmp.summary().as_bytes())?;
    if run.trace {
        for r in &cmp.runs {
            let mut trace = Vec::new();
            r.solution.write_trace(&mut trace)?;
            manifest.emit(&run.out, &format!("{prefix}trace_{}.csv", r.model.name()), &trace)?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { scenario } => {
            let (s, _) = load(&scenario)?;
            let nets = s.networks()?;
            let inst = build_bm(&nets.disrupted, &s, s.planning_duration()?)?;
            let probe = status_quo_probe(&inst)?;
            let d = &nets.disrupted;
            println!(
                "{}: {} lines, {} segments, {} ODs, {} paths, {} relocation arcs",
                scenario.display(),
                d.lines.len(),
                d.segments.len(),
                d.ods.len(),
                d.paths.iter().map(Vec::len).sum::<usize>(),
                inst.model.arcs.len()
            );
            if probe.feasible {
                println!("status quo fits capacity");
            } else {
                println!("status quo overloads capacity by up to {:.3} vehicles", probe.max_overload);
            }
            Ok(())
        }
        Command::Compare { scenario, run } => {
            let config = run.config()?;
            let (s, bytes) = load(&scenario)?;
            fs::create_dir_all(&run.out)?;
            let mut manifest = Manifest::new(&scenario, &bytes, "compare", &config);
            let cmp = run_compare(&s, &config)?;
            print!("{}", cmp.summary());
            emit_comparison(&cmp, &run, "", &mut manifest)?;
            manifest.write(&run.out)?;
            Ok(())
        }
        Command::Grid { scenario, run } => {
            let config = run.config()?;
            let (s, bytes) = load(&scenario)?;
            fs::create_dir_all(&run.out)?;
            let mut manifest = Manifest::new(&scenario, &bytes, "grid", &config);
            for cell in run_grid(&s, &config)? {
                println!("{}", cell.label());
                print!("{}", cell.comparison.summary());
                emit_comparison(&cell.comparison, &run, &format!("{}_", cell.label()), &mut manifest)?;
            }
            manifest.write(&run.out)?;
            Ok(())
        }
        Command::SweepAlpha { scenario, alphas, run } => {
            let config = run.config()?;
            let (s, bytes) = load(&scenario)?;
            fs::create_dir_all(&run.out)?;
            let mut manifest = Manifest::new(&scenario, &bytes, "sweep-alpha", &config);
            let rows = run_alpha_sweep(&s, &config, &alphas)?;
            let mut csv = Vec::new();
            write_sweep_csv(&rows, &mut csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
            manifest.emit(&run.out, "alpha_sweep.csv", &csv)?;
            manifest.write(&run.out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
