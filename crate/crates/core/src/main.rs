use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use spectral_consistency::pose_graph::{load_g2o, PoseGraph};
use spectral_consistency::se3::{sigma_for_boundary, MetricWeights};
use spectral_consistency::sim::{emit_report, eval_trajectories, run_scenario, ScenarioConfig};
use spectral_consistency::spectral::{
    build_graph, decompose, kron_reduce, laplacian, write_matrix_csv, write_vector_csv, WeightedGraph,
};
use spectral_consistency::Result;

#[derive(Parser)]
#[command(name = "specsim", version, about = "Multi-robot map consistency simulator and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Absolute trajectory error between two TUM files.
    Eval {
        est: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        align: bool,
    },
    /// Kron-reduce the proximity graph of a g2o file.
    Reduce {
        graph: PathBuf,
        #[arg(long)]
        keep: usize,
        #[command(flatten)]
        opts: GraphOpts,
    },
    /// Dump the Laplacian spectrum and weight matrix of a g2o file.
    Spectrum {
        graph: PathBuf,
        #[command(flatten)]
        opts: GraphOpts,
    },
}

#[derive(Args)]
struct GraphOpts {
    /// Radius of the neighbour search in meters.
    #[arg(long, default_value_t = 7.0)]
    radius: f64,
    /// Kernel width; by default the weight at `radius` is 0.1.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl GraphOpts {
    fn build(&self, graph: &PoseGraph) -> Result<WeightedGraph> {
        let nodes: Vec<_> = graph.nodes.values().copied().collect();
        let sigma = self.sigma.unwrap_or_else(|| sigma_for_boundary(self.radius, 0.1));
        build_graph(&nodes, self.radius, sigma, &MetricWeights::default())
    }
}

fn node_header(g: &WeightedGraph) -> Vec<String> {
    g.nodes().iter().map(|n| n.node_id.to_string()).collect()
}

fn dump_graph(g: &WeightedGraph, dir: &Path, prefix: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join(format!("{prefix}weights.csv")), &node_header(g), g.adjacency())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            info!("running {} with seed {}", config.display(), cfg.seed);
            let report = run_scenario(&cfg)?;
            emit_report(&report, &out)?;
            for r in &report.robots {
                let server = r.server_rmse.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "robot {}: onboard {:.4} m, corrected {:.4} m, server {server}, constraints {}",
                    r.robot_id,
                    r.onboard_rmse,
                    r.corrected_rmse,
                    r.census.total()
                );
            }
            println!("report written to {}", out.display());
        }
        Command::Eval { est, gt, align } => {
            let r = eval_trajectories(&est, &gt, align)?;
            println!("rmse {:.6} rotation_rmse {:.6} pairs {}", r.rmse, r.rotation_rmse, r.pairs);
        }
        Command::Reduce { graph, keep, opts } => {
            let g = opts.build(&load_g2o(&graph)?)?;
            let reduced = kron_reduce(&g, keep)?;
            dump_graph(&reduced, &opts.out, "reduced_")?;
            println!("kept {} of {} nodes: {}", reduced.len(), g.len(), node_header(&reduced).join(" "));
        }
        Command::Spectrum { graph, opts } => {
            let g = opts.build(&load_g2o(&graph)?)?;
            let d = decompose(&laplacian(&g))?;
            dump_graph(&g, &opts.out, "")?;
            write_vector_csv(opts.out.join("eigenvalues.csv"), "lambda", &d.eigenvalues)?;
            println!("{} nodes, lambda_max {:.6}, written to {}", g.len(), d.lambda_max(), opts.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
