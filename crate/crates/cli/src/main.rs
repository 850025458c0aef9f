use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saddle_scout::config::{self, RunConfig};
use saddle_scout::potentials::REGISTRY;
use saddle_scout::runner;
use saddle_scout::search::LocalSearchKind;
use saddle_scout::Error;

/// Environment variable for the default worker count.
const THREADS_ENV: &str = "SADDLE_SCOUT_THREADS";

#[derive(Parser)]
#[command(
    name = "saddle-scout",
    version,
    about = "Index-1 saddle search with stochastic saddle point dynamics"
)]
struct Cli {
    /// Worker threads (default: $SADDLE_SCOUT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration by name.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    local_search: Option<LocalSearchKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic saddle point dynamics with diagnostics and snapshots.
    Sspd(RunArgs),
    /// Saddle search with local refinement, or transition graph exploration.
    Search(RunArgs),
    /// Fokker-Planck and Witten evolutions on a grid.
    Pde(RunArgs),
    /// SSPD timing over vacancy lattices of growing size.
    Bench(RunArgs),
    /// Registered potentials.
    Potentials {
        #[command(subcommand)]
        action: PotentialsCmd,
    },
    /// Shipped configurations.
    Presets {
        /// Print this preset as JSON.
        name: Option<String>,
    },
}

#[derive(Subcommand)]
enum PotentialsCmd {
    List,
    Info { name: String },
}

fn parse_kind(s: &str) -> Result<LocalSearchKind, String> {
    s.parse()
}

fn load(args: &RunArgs, fallback: Option<&str>) -> Result<RunConfig, Error> {
    let mut cfg = match (&args.config, &args.preset, fallback) {
        (Some(path), _, _) => RunConfig::load(path)?,
        (None, Some(name), _) => config::preset(name)?,
        (None, None, Some(name)) => config::preset(name)?,
        (None, None, None) => {
            return Err(Error::Config(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = args.local_search {
        cfg.search.local_search = kind;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV} must be a non-negative integer, got '{v}'"
            ))
        }),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = thread_count(cli.threads)? {
        // 0 keeps rayon's default
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Sspd(args) => {
            let cfg = load(&args, None)?;
            let out = runner::output_dir(args.out.as_deref(), &cfg, "sspd");
            let s = runner::cmd_sspd(&cfg, &out)?;
            println!(
                "{} iterations, {} resamples, final ESS {:.1}",
                s.iterations, s.resamples, s.final_ess
            );
            report(&out);
        }
        Command::Search(args) => {
            let cfg = load(&args, None)?;
            let out = runner::output_dir(args.out.as_deref(), &cfg, "search");
            let (s, graph) = runner::cmd_search(&cfg, &out)?;
            println!(
                "{} minima, {} saddles ({} unconnected)",
                graph.nodes.len(),
                s.saddle_energies.len(),
                s.unconnected
            );
            for e in &graph.edges {
                if let Some((a, b)) = &e.connects {
                    println!("  {:>12.6}  {a} -- {b}", e.energy);
                }
            }
            if s.incomplete {
                println!("exploration budget exhausted, graph is partial");
            }
            report(&out);
        }
        Command::Pde(args) => {
            let cfg = load(&args, None)?;
            let out = runner::output_dir(args.out.as_deref(), &cfg, "pde");
            for s in runner::cmd_pde(&cfg, &out)? {
                println!(
                    "{}: {} steps of {:.4e} (bound {:.4e})",
                    s.equation, s.steps, s.dt, s.stability_bound
                );
            }
            report(&out);
        }
        Command::Bench(args) => {
            let cfg = load(&args, Some("vacancy"))?;
            let out = runner::output_dir(args.out.as_deref(), &cfg, "bench");
            let rows = runner::cmd_bench(&cfg, &out)?;
            print!("{}", runner::bench_csv(&rows));
            report(&out);
        }
        Command::Potentials {
            action: PotentialsCmd::List,
        } => {
            for (name, descr) in REGISTRY {
                println!("{name:<22}{descr}");
            }
        }
        Command::Potentials {
            action: PotentialsCmd::Info { name },
        } => {
            print!("{}", runner::potential_info(&name)?);
        }
        Command::Presets { name: None } => {
            for (name, descr) in config::PRESETS {
                println!("{name:<16}{descr}");
            }
        }
        Command::Presets { name: Some(name) } => {
            println!("{}", config::preset(&name)?.to_json());
        }
    }
    Ok(())
}

fn report(out: &Path) {
    println!("output written to {}", out.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
