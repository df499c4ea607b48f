use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use clique_bench::config::{Algorithm, ExperimentConfig, DEFAULT_CENSUS_CAP, SEED_ENV};
use clique_bench::run_experiment;
use clique_ust::doubling::DEFAULT_C;
use clique_ust::phase::PlacementMode;

/// Run seeded sampling experiments on a simulated CongestedClique.
#[derive(Debug, Parser)]
#[command(name = "clique-bench", version)]
struct Cli {
    /// Corpus graph name (k3, k4, c4, c5, p3, p4, star-s3, k4-minus-edge,
    /// c8, petersen) or path to an edge-list file.
    #[arg(long)]
    graph: String,
    #[arg(long, value_enum, default_value = "tree-sublinear")]
    algo: Algorithm,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    /// Base seed; trial i uses seed + i.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Distinct vertices per phase.
    #[arg(long)]
    rho: Option<usize>,
    /// Walk length, a power of two.
    #[arg(long)]
    ell: Option<u64>,
    /// Matrix multiplication exponent of the cost model.
    #[arg(long)]
    alpha: Option<f64>,
    /// Subtractive error budget.
    #[arg(long)]
    beta: Option<f64>,
    /// Fractional bits of the fixed-point engine.
    #[arg(long)]
    round_bits: Option<u32>,
    #[arg(long)]
    c1: Option<f64>,
    /// exact-matching or direct.
    #[arg(long, default_value = "exact-matching")]
    placement_mode: PlacementMode,
    /// Walk length for doubling-walk.
    #[arg(long)]
    tau: Option<usize>,
    /// Hash constant of the doubling walker.
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    /// Initial walk length for tree-via-doubling.
    #[arg(long)]
    cover_budget: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CENSUS_CAP)]
    census_cap: usize,
    /// Directory for report.json and runs.csv; the report goes to stdout
    /// when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = ExperimentConfig {
        rho: cli.rho,
        c1: cli.c1,
        ell: cli.ell,
        placement_mode: cli.placement_mode,
        alpha: cli.alpha,
        beta: cli.beta,
        round_bits: cli.round_bits,
        tau: cli.tau,
        c: cli.c,
        cover_budget: cli.cover_budget,
        census_cap: cli.census_cap,
        out: cli.out.clone(),
        ..ExperimentConfig::new(cli.graph, cli.algo, cli.runs, cli.seed)
    };
    match run_experiment(&cfg) {
        Ok(exp) => {
            if cli.out.is_none() {
                print!("{}", exp.report.to_json());
            } else {
                let r = &exp.report;
                match r.tv {
                    Some(tv) => eprintln!("{} runs, tv {tv:.5}, flag rate {}", cfg.runs, r.flag_rate),
                    None => eprintln!("{} runs, flag rate {}", cfg.runs, r.flag_rate),
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
