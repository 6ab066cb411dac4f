use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use brickopt::circuit::io::{load_circuit, save_circuit};
use brickopt::driver::{checkpoint_load, checkpoint_save, evaluate, Run, RunConfig, RunReport, Status};
use brickopt::models::{exact_eigs, sector_basis, Model, Symmetry};

#[derive(Parser)]
#[command(name = "brickopt", version, about = "Optimize brick-wall circuits by differentiable TEBD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a circuit from a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an interrupted run.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print metrics of a stored circuit as JSON.
    Evaluate {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Sector-resolved low-lying energies as CSV.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 6)]
        levels: usize,
    },
    /// Repeat a run for each value of one configuration key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,…`, e.g. `L=8,10,12` or `model.g=0.5,1.0`.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    depth: usize,
    cost: f64,
    rel_energy_error: Option<f64>,
    total_infidelity: Option<f64>,
    wall_ms: f64,
}

#[derive(Serialize)]
struct SweepRow {
    key: String,
    value: String,
    status: String,
    iterations: usize,
    depth: usize,
    cost: f64,
    rel_energy_error: Option<f64>,
    total_infidelity: Option<f64>,
    wall_ms: f64,
}

fn write_trace(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.records {
        w.serialize(TraceRow {
            iteration: r.iteration,
            depth: r.depth,
            cost: r.cost,
            rel_energy_error: r.rel_energy_error,
            total_infidelity: r.total_infidelity,
            wall_ms: r.wall_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn finish(run: &mut Run, dir: &Path) -> Result<Status> {
    std::fs::create_dir_all(dir)?;
    let ck = dir.join("checkpoint.json");
    let every = run.config.output.checkpoint_every;
    let status = run.run_with(|r| {
        let n = r.report.records.len();
        if n % 100 == 0 {
            if let Some(last) = r.report.last() {
                log::info!("iteration {n}: depth {} cost {:.8e}", last.depth, last.cost);
            }
        }
        if every > 0 && n % every == 0 {
            checkpoint_save(&ck, r)?;
        }
        Ok(())
    })?;
    checkpoint_save(&ck, run).context("writing checkpoint")?;
    let circuit_path = dir.join("circuit.json");
    save_circuit(&circuit_path, &run.circuit)?;
    run.report.final_circuit = Some(circuit_path.display().to_string());
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&run.report)?)?;
    write_trace(&dir.join("trace.csv"), &run.report)?;
    let last = run.report.last().expect("at least one iteration");
    eprintln!(
        "{:?} after {} iterations at depth {}: cost {:.8e}",
        status,
        run.report.records.len(),
        last.depth,
        last.cost
    );
    Ok(status)
}

fn output_dir(config: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("brickopt-out"))
}

fn model_params(m: &Model) -> String {
    match *m {
        Model::Ising { g, h } => format!("g={g};h={h}"),
        Model::Potts3 { g, h } => format!("g={g};h={h}"),
        Model::Schwinger { m, g } => format!("m={m};g={g}"),
    }
}

fn model_name(m: &Model) -> &'static str {
    match m {
        Model::Ising { .. } => "ising",
        Model::Potts3 { .. } => "potts3",
        Model::Schwinger { .. } => "schwinger",
    }
}

fn spectrum(config: &RunConfig, levels: usize) -> Result<()> {
    let spec = config.spec()?;
    let sectors: Vec<Option<i64>> = match spec.symmetry {
        Symmetry::None => vec![None],
        Symmetry::Z2 => vec![Some(0), Some(1)],
        Symmetry::U1 => (0..=spec.l).map(|k| Some(spec.l as i64 - 2 * k as i64)).collect(),
    };
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["model", "L", "params", "sector", "n", "energy"])?;
    for q in sectors {
        let dim = sector_basis(&spec, q)?.len();
        for (n, p) in exact_eigs(&spec, q, levels.min(dim))?.iter().enumerate() {
            w.write_record([
                model_name(&spec.model).to_string(),
                spec.l.to_string(),
                model_params(&spec.model),
                q.map_or("none".into(), |q| q.to_string()),
                n.to_string(),
                format!("{:.15e}", p.energy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sweep(config: &RunConfig, vary: &str, out: PathBuf) -> Result<Status> {
    let Some((key, values)) = vary.split_once('=') else { bail!("--vary expects key=v1,v2,…") };
    std::fs::create_dir_all(&out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    let mut worst = Status::Converged;
    for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let c = config.with_override(key.trim(), value)?;
        let dir = out.join(format!("{}={value}", key.trim()));
        let mut run = Run::new(c)?;
        let status = finish(&mut run, &dir)?;
        if status.exit_code() > worst.exit_code() {
            worst = status;
        }
        let last = run.report.last().expect("at least one iteration");
        w.serialize(SweepRow {
            key: key.trim().into(),
            value: value.into(),
            status: format!("{status:?}"),
            iterations: run.report.records.len(),
            depth: last.depth,
            cost: last.cost,
            rel_energy_error: last.rel_energy_error,
            total_infidelity: last.total_infidelity,
            wall_ms: run.report.records.iter().map(|r| r.wall_ms).sum(),
        })?;
        w.flush()?;
    }
    Ok(worst)
}

fn dispatch(cli: Cli) -> Result<Option<Status>> {
    match cli.command {
        Command::Run { config, out } => {
            let c = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let dir = output_dir(&c, out);
            let mut run = Run::new(c)?;
            Ok(Some(finish(&mut run, &dir)?))
        }
        Command::Resume { checkpoint, out } => {
            let mut run = checkpoint_load(&checkpoint)?;
            let dir = out
                .or_else(|| run.config.output.dir.clone())
                .or_else(|| checkpoint.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            Ok(Some(finish(&mut run, &dir)?))
        }
        Command::Evaluate { circuit, config } => {
            let c = RunConfig::load(&config)?;
            let m = evaluate(&load_circuit(&circuit)?, &c)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(None)
        }
        Command::Spectrum { config, levels } => {
            spectrum(&RunConfig::load(&config)?, levels)?;
            Ok(None)
        }
        Command::Sweep { config, vary, out } => {
            let c = RunConfig::load(&config)?;
            let dir = output_dir(&c, out);
            Ok(Some(sweep(&c, &vary, dir)?))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(s) => ExitCode::from(s.map_or(0, |s| s.exit_code()) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
