use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use esp_cli::{
    emit_plot_data, generate_trace, ingest_csv, parse_algorithm, run_experiment, write_csv, CliError, ExperimentConfig, PlotKind,
    SyntheticTraceParams,
};
use esp_core::{
    adversary_rho0, adversary_rho1, lower_bound_rho0, make_policy, one_shot_decompose, rho0_minmax, solve_offline,
    truncate, MarketStats, NeverBuy, OnlinePolicy, Ratio, StorageSpec, Z_GRID_STEPS,
};

#[derive(Parser)]
#[command(name = "esp", version, about = "Energy storage scheduling: offline optimum, online policies, sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a TOML config.
    Run {
        config: PathBuf,
        /// Also write cost, ratio and trajectory series files here.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Solve one trace with one algorithm; prints cost and ratio to offline.
    Solve {
        #[arg(long)]
        trace: PathBuf,
        /// ofl, thb, thb_adaptive, lka or rhc.
        #[arg(long, default_value = "thb")]
        alg: String,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[command(flatten)]
        storage: StorageArgs,
    },
    /// Print lower-bound adversary instances.
    Adversary {
        #[arg(value_enum)]
        kind: AdversaryKind,
        #[arg(long, default_value_t = 4.0)]
        phi: f64,
        #[arg(long, default_value_t = 1.0)]
        min_price: f64,
        #[arg(long, default_value_t = 1.0)]
        capacity: f64,
        /// Policy facing the renewable adversary.
        #[arg(long, value_enum, default_value = "never-buy")]
        policy: Rho1Policy,
        /// Renewable ratio the threshold policy is configured with.
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 10)]
        t_max: usize,
    },
    /// Print the one-shot decomposition of a trace's demand.
    Decompose {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        storage: StorageArgs,
    },
    /// Write a synthetic diurnal trace as CSV.
    Gen {
        #[arg(long, default_value_t = 168)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        renewable_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryKind {
    Rho0,
    Rho1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rho1Policy {
    NeverBuy,
    Thb,
}

#[derive(Args)]
struct StorageArgs {
    #[arg(long, default_value_t = 40.0)]
    capacity: f64,
    #[arg(long, default_value_t = 0.9)]
    eta_c: f64,
    #[arg(long, default_value_t = 1.1)]
    eta_d: f64,
    #[arg(long, default_value_t = 30.0)]
    mu_c: f64,
    #[arg(long, default_value_t = 30.0)]
    mu_d: f64,
    #[arg(long, default_value_t = 0.0)]
    initial: f64,
    #[arg(long, default_value_t = 0.0)]
    terminal: f64,
}

impl StorageArgs {
    fn spec(&self) -> Result<StorageSpec, CliError> {
        Ok(StorageSpec::new(
            self.capacity,
            self.eta_c,
            self.eta_d,
            self.mu_c,
            self.mu_d,
            self.initial,
            self.terminal,
        )?)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run { config, plots } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = run_experiment(&cfg)?;
            table.write(&cfg.output.path)?;
            if let Some(dir) = plots {
                std::fs::create_dir_all(&dir)?;
                let mut kinds = vec![PlotKind::CostVsAxis, PlotKind::RatioVsAxis];
                if cfg.output.trajectories {
                    kinds.push(PlotKind::Trajectory);
                }
                for kind in kinds {
                    let file = std::fs::File::create(dir.join(format!("{kind}.dat")))?;
                    emit_plot_data(&table, kind, std::io::BufWriter::new(file))?;
                }
            }
            let flagged = table.rows.iter().filter(|r| !r.feasible).count();
            writeln!(out, "{} rows written to {}, {flagged} infeasible", table.rows.len(), cfg.output.path.display())?;
        }
        Command::Solve { trace, alg, window, storage } => {
            let trace = ingest_csv(&trace)?;
            let spec = storage.spec()?;
            let offline = solve_offline(&trace, &spec)?;
            let sched = parse_algorithm(&alg, window)?.run(&trace, &spec)?;
            writeln!(out, "algorithm {alg}")?;
            writeln!(out, "cost {:.6}", sched.cost)?;
            writeln!(out, "forced_cost {:.6}", sched.forced_cost)?;
            writeln!(out, "offline_cost {:.6}", offline.cost)?;
            writeln!(out, "ratio {}", Ratio::of(sched.cost, offline.cost))?;
        }
        Command::Adversary { kind, phi, min_price, capacity, policy, rho, t_max } => {
            let big = phi * min_price;
            match kind {
                AdversaryKind::Rho0 => {
                    let spec = StorageSpec::ideal(capacity, capacity, capacity)?;
                    let (s1, s2) = adversary_rho0(big, min_price, capacity, &spec)?;
                    writeln!(out, "# sigma1")?;
                    write_csv(&s1, &mut out)?;
                    writeln!(out, "# sigma2")?;
                    write_csv(&s2, &mut out)?;
                    let (z, r) = rho0_minmax(big, min_price, &spec, Z_GRID_STEPS)?;
                    writeln!(out, "# min-max ratio {r:.6} at z={z:.6}, bound {:.6}", lower_bound_rho0(phi))?;
                }
                AdversaryKind::Rho1 => {
                    let spec = StorageSpec::ideal(capacity, 0.0, 0.0)?;
                    let mut alg: Box<dyn OnlinePolicy> = match policy {
                        Rho1Policy::NeverBuy => Box::new(NeverBuy),
                        Rho1Policy::Thb => Box::new(make_policy(&MarketStats::new(big, min_price, rho)?, &spec)),
                    };
                    let o = adversary_rho1(alg.as_mut(), big, min_price, capacity, &spec, t_max)?;
                    write_csv(&o.trace, &mut out)?;
                    writeln!(
                        out,
                        "# online {:.6} offline {:.6} ratio {}{}",
                        o.online_cost,
                        o.offline_cost,
                        o.ratio,
                        if o.truncated { " (policy never bought; trace truncated at t_max)" } else { "" }
                    )?;
                }
            }
        }
        Command::Decompose { trace, storage } => {
            let trace = ingest_csv(&trace)?;
            let spec = storage.spec()?;
            let a = trace.demands();
            let d = one_shot_decompose(&a, &spec);
            let bad = d.violations(&a, &spec, 1e-9);
            if !bad.is_empty() {
                return Err(CliError::Invariant(format!("{bad:?}")));
            }
            let kept = truncate(&d, spec.initial, &spec);
            writeln!(out, "t_s,t_nz,a_bar,truncated")?;
            let offset = d.atoms.len() - kept.atoms.len();
            for (i, atom) in d.atoms.iter().enumerate() {
                let left = if i >= offset { kept.atoms[i - offset].a_bar } else { 0.0 };
                writeln!(out, "{},{},{:.6},{:.6}", atom.t_s, atom.t_nz, atom.a_bar, atom.a_bar - left)?;
            }
        }
        Command::Gen { slots, seed, renewable_fraction, noise, output } => {
            let params = SyntheticTraceParams { slots, seed, renewable_fraction, noise, ..Default::default() };
            let trace = generate_trace(&params)?;
            match output {
                Some(path) => write_csv(&trace, std::io::BufWriter::new(std::fs::File::create(path)?))?,
                None => write_csv(&trace, &mut out)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
