use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raresim_bench::table4::run_table4;
use raresim_bench::{run_experiment, write_artifacts, ExperimentConfig};

/// Rare-event probability estimation benchmarks.
#[derive(Parser)]
#[command(name = "raresim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replications described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; overrides the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; overrides the configuration (default: `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the three estimators on the cantilever problem.
    Table4 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RARESIM_LOG", "off"))
        .format_timestamp(None)
        .init();
    let trace = log::log_enabled!(log::Level::Trace);
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, jobs, out } => ExperimentConfig::from_file(&config).and_then(|mut c| {
            if let Some(s) = seed {
                c.seed = s;
            }
            let dir = out.or_else(|| c.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let outcome = run_experiment(&c, jobs.unwrap_or_else(default_jobs), trace)?;
            write_artifacts(&outcome, &dir)?;
            let s = &outcome.summary;
            println!(
                "{}: mean {:e} over {} runs ({} failed), N mean {:.1}",
                s.method, s.mean, s.completed, s.failed, s.evaluations.mean
            );
            if let Some(st) = &s.stats {
                println!(
                    "kappa {:.2}%  cov {}",
                    100.0 * st.kappa,
                    st.cov.map_or("n/a".into(), |c| format!("{:.2}%", 100.0 * c))
                );
            }
            Ok(())
        }),
        Command::Table4 { out, seed, jobs } => run_table4(&out, seed, jobs.unwrap_or_else(default_jobs), trace).map(|rows| {
            println!("method,m,N,estimate,sd,kappa,cov");
            for r in rows {
                let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4e}"));
                println!(
                    "{},{},{}..{},{:.4e},{},{},{}",
                    r.method,
                    r.m,
                    r.n_min,
                    r.n_max,
                    r.estimate,
                    fmt(r.sd),
                    fmt(r.kappa),
                    fmt(r.cov)
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
