use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parkauction::demand::Mix;
use parkauction::experiment::{
    run_matrix, run_scenario, MatrixOptions, MatrixSpec, ScenarioConfig,
};
use parkauction::oracle::cross_check;
use parkauction::sim::Behavior;
use parkauction::Result;

#[derive(Parser)]
#[command(name = "parkauction", version, about = "Parking traffic simulation with reservation auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its CSV files.
    Run(RunArgs),
    /// Run the mix x behavior x penetration x seed sweep.
    Matrix(MatrixArgs),
    /// Check a configuration file and print the resolved configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-check the auction engine against the reference implementation.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mix: Option<Mix>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    behavior: Option<Behavior>,
    #[arg(long)]
    penetration: Option<f64>,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    common: Overrides,
    /// Restrict the sweep to one app behavior (baseline cells are kept).
    #[arg(long)]
    behavior: Option<Behavior>,
    /// Restrict the sweep to one penetration level.
    #[arg(long)]
    penetration: Option<f64>,
    /// Number of seeds, starting at --seed (default 0).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also keep every run's own files under runs/.
    #[arg(long)]
    keep_runs: bool,
}

fn base_config(o: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = match &o.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(m) = o.mix {
        cfg.demand.mix = m;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(d) = &o.out {
        cfg.output.dir = Some(d.clone());
    }
    Ok(cfg)
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "-".into()
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = base_config(&args.common)?;
            if let Some(b) = args.behavior {
                cfg.behavior = b;
            }
            if let Some(p) = args.penetration {
                cfg.penetration = p;
            }
            let r = run_scenario(&cfg, None)?;
            let s = r.summary();
            println!("run {}", cfg.run_id());
            println!("vehicles {}", s.vehicles);
            println!("route_length_m {}", fmt(s.route_length.overall.mean));
            println!("price_eur {}", fmt(s.price.overall.mean));
            println!("parking_distance_m {}", fmt(s.parking_distance.overall.mean));
            println!(
                "parking_distance_m participants {}",
                fmt(s.parking_distance.participants.mean)
            );
            println!("flow_veh_h {}", fmt(s.flow.mean));
            println!("reservation_success {}", fmt(s.reservation_success()));
            println!("short_route_fraction {}", fmt(s.short_route_fraction));
            if let Some(d) = &cfg.output.dir {
                println!("wrote {}", d.display());
            }
        }
        Command::Matrix(args) => {
            let cfg = base_config(&args.common)?;
            let mut spec = MatrixSpec {
                seeds: (cfg.seed..cfg.seed + args.seeds).collect(),
                ..MatrixSpec::default()
            };
            if args.common.mix.is_some() {
                spec.mixes = vec![cfg.demand.mix];
            }
            if let Some(b) = args.behavior {
                spec.behaviors = vec![b];
                spec.include_baseline = b == Behavior::Baseline;
            }
            if let Some(p) = args.penetration {
                spec.penetrations = vec![p];
            }
            let opts = MatrixOptions {
                out: cfg.output.dir.clone(),
                jobs: args.jobs,
                keep_runs: args.keep_runs,
            };
            let started = std::time::Instant::now();
            let m = run_matrix(&spec, &cfg, &opts)?;
            println!(
                "{} runs, {} cells in {:.1} s",
                m.runs.len(),
                m.cells.len(),
                started.elapsed().as_secs_f64()
            );
            println!("mix behavior penetration distance_part price flow success");
            for c in &m.cells {
                println!(
                    "{} {} {:.1} {} {} {} {}",
                    c.mix,
                    c.behavior,
                    c.penetration,
                    fmt(c.metrics.get(2, 1, 0)),
                    fmt(c.metrics.get(1, 0, 0)),
                    fmt(c.metrics.flow[0]),
                    fmt(c.metrics.reservation_success)
                );
            }
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let net = cfg.validate()?;
            println!(
                "ok: {} edges, {} spaces, {} drivers",
                net.edges().len(),
                net.total_spaces(),
                cfg.demand.drivers
            );
            print!("{}", cfg.to_toml());
        }
        Command::Oracle { instances, seed } => {
            let r = cross_check(instances, seed)?;
            for m in r.mismatches.iter().take(5) {
                eprintln!("{m}");
            }
            println!("{} instances, {} mismatches", r.instances, r.mismatches.len());
            if !r.mismatches.is_empty() {
                return Err(parkauction::Error::Config("auction engine disagrees with reference".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
