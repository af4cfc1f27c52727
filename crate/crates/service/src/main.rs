use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use shelter_access::demand::{demand_summary, read_population_csv};
use shelter_access::equity::gini;
use shelter_access::scenario::{
    export, read_scores_csv, run_prepared, Case, Inputs, LoadedConfig, Pipeline, ScenarioError,
};
use shelter_access_service::{router, AppState, Workspace};

#[derive(Parser)]
#[command(name = "shelter-access", version, about = "Wildfire shelter accessibility scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario's inputs and print a summary.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Also write the cell-to-open-shelter travel time matrix as CSV.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Run a scenario and export its layers and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a placement method on a scenario's inputs.
    Place {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        k: Option<f64>,
        /// Ring step in meters.
        #[arg(long)]
        ring_step: Option<f64>,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gini coefficient of a `cell_id,score` table.
    Gini {
        #[arg(long)]
        scores: PathBuf,
        /// Population grid used as weights; equal weights when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Serve the HTTP API over a workspace of scenario configs.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, env = "SHELTER_WORKSPACE", default_value = ".")]
        workspace: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Capacity,
    Distance,
}

enum Failure {
    Config(String),
    Infeasible(String),
    Other(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn prepare(config: &Path) -> Result<Pipeline, Failure> {
    let config = LoadedConfig::from_file(config)?;
    let inputs = Arc::new(Inputs::load(&config.inputs())?);
    Ok(Pipeline::new(&config, inputs)?)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(other)?;
    writeln!(std::io::stdout().lock(), "{text}").map_err(other)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest { config, matrix } => {
            let pipeline = prepare(&config)?;
            let inputs = &pipeline.inputs;
            let open = inputs.open_shelters();
            print_json(&json!({
                "nodes": inputs.graph.nodes().len(),
                "edges": inputs.graph.edges().len(),
                "cells": inputs.cells.len(),
                "demand_cells": pipeline.demand.len(),
                "open_shelters": open.len(),
                "candidates": inputs.candidates().len(),
                "demand": demand_summary(&pipeline.demand, &open),
                "inputs_sha256": inputs.hashes,
            }))?;
            if let Some(path) = matrix {
                let m = pipeline.travel_matrix(pipeline.case().congested(), &open, f64::INFINITY)?;
                let file = std::fs::File::create(&path).map_err(other)?;
                m.write_csv(file).map_err(other)?;
            }
            Ok(())
        }
        Command::Run { config, out } => {
            let pipeline = prepare(&config)?;
            let result = run_prepared(&pipeline)?;
            export(&result, &pipeline.inputs, &out)?;
            let gini = result.gini.map(|g| format!("{g:.4}")).unwrap_or_else(|| "n/a".into());
            println!(
                "{} ({}): {} cells, demand {}, supply {}, gini {gini} -> {}",
                result.scenario,
                result.case,
                pipeline.demand.len(),
                result.demand.total,
                result.demand.total_supply,
                out.display()
            );
            Ok(())
        }
        Command::Place { config, method, k, ring_step, out } => {
            let pipeline = prepare(&config)?;
            let mut params = pipeline.config.config.placement.unwrap_or_default();
            params.k = k.unwrap_or(params.k);
            params.ring_step_m = ring_step.unwrap_or(params.ring_step_m);
            params.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let case = match method {
                Method::Capacity => Case::Case4Capacity,
                Method::Distance => Case::Case4Distance,
            };
            let result = pipeline.place(case, &params)?;
            match out {
                Some(path) => {
                    let text = serde_json::to_string_pretty(&result).map_err(other)? + "\n";
                    std::fs::write(path, text).map_err(other)
                }
                None => print_json(&result),
            }
        }
        Command::Gini { scores, grid } => {
            let rows = read_scores_csv(&scores).map_err(other)?;
            let weights: Vec<f64> = match grid {
                Some(path) => {
                    let pops: BTreeMap<String, f64> =
                        read_population_csv(&path).map_err(other)?.into_iter().map(|c| (c.id, c.population)).collect();
                    rows.iter()
                        .map(|r| {
                            pops.get(&r.cell_id)
                                .copied()
                                .ok_or_else(|| other(format!("cell {} is not in the grid", r.cell_id)))
                        })
                        .collect::<Result<_, _>>()?
                }
                None => vec![1.0; rows.len()],
            };
            let values: Vec<f64> = rows.iter().map(|r| r.score).collect();
            println!("{}", gini(&values, &weights).map_err(other)?);
            Ok(())
        }
        Command::Serve { port, bind, workspace } => {
            let ws = Workspace::load(&workspace)?;
            eprintln!("loaded {} scenarios from {} ({})", ws.scenarios.len(), workspace.display(), ws.hash);
            let app = router(AppState::new(ws));
            let addr = SocketAddr::new(bind, port);
            let runtime = tokio::runtime::Runtime::new().map_err(other)?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.map_err(other)?;
                eprintln!("listening on http://{addr}");
                axum::serve(listener, app).await.map_err(other)
            })
        }
    }
}
