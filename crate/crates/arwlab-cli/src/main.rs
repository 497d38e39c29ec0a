//! `arwlab`: validation, generation, exact statistics, simulation and
//! Monte Carlo experiments for activated random walks and internal DLA on
//! finite sub-stochastic networks.
//!
//! Exit codes: 0 success, 1 validation failure, 2 capacity or parameter
//! error, 64 usage error.

mod output;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use arwlab_core::arw::{run_chain, ArwParams, Configuration};
use arwlab_core::error::Error;
use arwlab_core::experiments::{
    cutoff_sweep, default_replicas, estimate_survival, SweepConfig, SweepFamily, DEFAULT_EPS,
};
use arwlab_core::idla::{run_filling, FillingOptions, OccupiedSet};
use arwlab_core::network::{self, validate};
use arwlab_core::oracle::{
    exact_t_sep, exact_transition_operator, filling_time_law, stationary_and_profiles,
    subset_kernel, ExactReport, OperatorReport,
};
use arwlab_core::sampler::StreamFamily;
use arwlab_core::SelectionRule;

use output::{write_text, OutputTarget};
use source::NetSource;

#[derive(Parser)]
#[command(
    name = "arwlab",
    version,
    about = "Activated random walks and internal DLA on finite networks",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results
    /// are identical for every value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitMode {
    Summary,
    Increments,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExactMode {
    Subset,
    Operator,
    Both,
}

#[derive(Args)]
struct SeedArg {
    /// Master seed; falls back to the ARWLAB_SEED environment variable,
    /// then to 0.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> Result<u64, Error> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("ARWLAB_SEED") {
            Ok(text) => text
                .parse()
                .map_err(|_| Error::Parameter(format!("ARWLAB_SEED = {text:?} is not a u64"))),
            Err(_) => Ok(0),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions of a network and report violations.
    Validate {
        #[command(flatten)]
        source: NetSource,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Generate a network from a family spec and write its JSON form.
    Gen {
        #[command(flatten)]
        source: NetSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact closed-form statistics: hitting probabilities, relaxation
    /// time, and the mixing-time bounds.
    Stats {
        #[command(flatten)]
        source: NetSource,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated IDLA filling runs.
    IdlaRun {
        #[command(flatten)]
        source: NetSource,
        #[command(flatten)]
        seed: SeedArg,
        /// Initial occupied set: "empty", "full", or comma-separated site
        /// indices.
        #[arg(long, default_value = "empty")]
        initial: String,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        #[arg(long, value_enum, default_value = "summary")]
        emit: EmitMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the chain itself and emit per-step occupation counts.
    ArwRun {
        #[command(flatten)]
        source: NetSource,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        steps: u64,
        /// Write the final stable configuration as JSON.
        #[arg(long)]
        emit_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact small-system reports: subset-chain filling law and, for tiny
    /// systems, the full transition operator with its profiles.
    Exact {
        #[command(flatten)]
        source: NetSource,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 40)]
        tmax: u64,
        #[arg(long, value_enum, default_value = "subset")]
        mode: ExactMode,
        /// Comma-separated precision grid for t_sep.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        eps: Option<Vec<f64>>,
        /// Base path: writes BASE.json and BASE.csv (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo separation profile (empirical filling-time survival).
    SepCurve {
        #[command(flatten)]
        source: NetSource,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        eps: Option<Vec<f64>>,
        /// Base path: writes BASE.json and BASE.csv (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Family sweep over sizes: exact bounds next to empirical mixing
    /// estimates, one CSV row per size.
    Sweep {
        /// Family: wheel | trans-cycle | trans-complete | ball:D | tree:DEG.
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                ErrorKind::InvalidSubcommand | ErrorKind::UnknownArgument => 64,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("arwlab: could not configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("arwlab: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Capacity { .. }
        | Error::Parameter(_)
        | Error::Domain(_)
        | Error::Generation(_) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Validate { source, format } => {
            let net = source.load()?;
            let report = validate(&net);
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Csv => {
                    let line = |c: &network::Check| match c {
                        network::Check::Ok => "ok".to_string(),
                        network::Check::Failed { detail } => format!("FAILED: {detail}"),
                    };
                    println!("row-sums: {}", line(&report.row_sums));
                    println!("non-degeneracy: {}", line(&report.non_degeneracy));
                    println!("reachability: {}", line(&report.reachability));
                    println!("reversible: {}", report.reversible);
                }
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Gen { source, out } => {
            let net = source.load()?;
            write_text(&OutputTarget::from(out), &network::to_json(&net))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats {
            source,
            format,
            out,
        } => {
            let net = source.load()?;
            let stats = arwlab_core::greens::statistics(&net)?;
            let text = match format {
                Format::Json => output::json_envelope(&net, None, &stats)?,
                Format::Csv => output::stats_csv(&net, &stats),
            };
            write_text(&OutputTarget::from(out), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::IdlaRun {
            source,
            seed,
            initial,
            replicas,
            emit,
            out,
        } => {
            let net = source.load()?;
            let seed = seed.resolve()?;
            let initial = parse_initial(&initial, net.len())?;
            let options = FillingOptions {
                record_increments: emit == EmitMode::Increments,
                ..Default::default()
            };
            let mut records = Vec::with_capacity(replicas as usize);
            for r in 0..replicas {
                records.push(run_filling(
                    &net,
                    StreamFamily::replica(seed, r),
                    &initial,
                    &options,
                )?);
            }
            let text = output::filling_csv(&net, seed, &initial, &records);
            write_text(&OutputTarget::from(out), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ArwRun {
            source,
            seed,
            lambda,
            steps,
            emit_config,
            out,
        } => {
            let net = source.load()?;
            let seed = seed.resolve()?;
            let params = ArwParams::new(lambda)?;
            let start = Configuration::all_empty(net.len());
            let (rows, final_config) =
                run_chain(&net, &params, &start, steps, StreamFamily::new(seed))?;
            let text = output::chain_csv(&net, seed, lambda, &rows);
            write_text(&OutputTarget::from(out), &text)?;
            if let Some(path) = emit_config {
                write_text(
                    &OutputTarget::File(path),
                    &serde_json::to_string_pretty(&final_config)?,
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Exact {
            source,
            lambda,
            tmax,
            mode,
            eps,
            out,
        } => {
            let net = source.load()?;
            let eps = eps.unwrap_or_else(|| DEFAULT_EPS.to_vec());
            let kernel = subset_kernel(&net)?;
            let empty = OccupiedSet::empty(net.len());
            let law = filling_time_law(&kernel, &empty, tmax)?;
            let mut t_sep = Vec::new();
            for &e in &eps {
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::Parameter(format!("eps {e} outside (0, 1)")));
                }
                t_sep.push((e, exact_t_sep(&kernel, &empty, e)?));
            }
            let operator: Option<OperatorReport> = match mode {
                ExactMode::Subset => None,
                ExactMode::Operator | ExactMode::Both => {
                    let op = exact_transition_operator(&net, lambda, SelectionRule::LowestIndex)?;
                    Some(stationary_and_profiles(&op, tmax)?)
                }
            };
            let report = ExactReport {
                n: net.len(),
                initial: vec![],
                survival: law.survival.clone(),
                mean: law.mean,
                variance: law.variance,
                t_sep,
                lambda: operator.is_some().then_some(lambda),
                operator,
            };
            output::write_exact(&net, out, &report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SepCurve {
            source,
            seed,
            replicas,
            eps,
            out,
        } => {
            let net = source.load()?;
            let seed = seed.resolve()?;
            let replicas = replicas.unwrap_or_else(|| default_replicas(net.len()));
            let eps = eps.unwrap_or_else(|| DEFAULT_EPS.to_vec());
            let estimate = estimate_survival(&net, seed, replicas, &eps)?;
            output::write_sep_curve(&net, out, &estimate)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            family,
            sizes,
            lambda,
            seed,
            replicas,
            format,
            out,
        } => {
            let seed = seed.resolve()?;
            let family = parse_family(&family)?;
            let config = SweepConfig {
                family,
                sizes,
                lambda,
                seed,
                replicas,
                eps: DEFAULT_EPS.to_vec(),
            };
            let rows = cutoff_sweep(&config);
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&rows)?,
                Format::Csv => output::sweep_csv(seed, &rows),
            };
            write_text(&OutputTarget::from(out), &text)?;
            let failed = rows.iter().any(|r| r.error.is_some());
            Ok(if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn parse_initial(text: &str, n: usize) -> Result<OccupiedSet, Error> {
    match text {
        "empty" => Ok(OccupiedSet::empty(n)),
        "full" => Ok(OccupiedSet::full(n)),
        list => {
            let mut indices = Vec::new();
            for part in list.split(',') {
                let idx: usize = part
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad site index {part:?}")))?;
                if idx >= n {
                    return Err(Error::Parameter(format!(
                        "site index {idx} out of range (n = {n})"
                    )));
                }
                indices.push(idx);
            }
            Ok(OccupiedSet::from_indices(n, &indices))
        }
    }
}

fn parse_family(text: &str) -> Result<SweepFamily, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["wheel"] => Ok(SweepFamily::Wheel),
        ["trans-cycle"] => Ok(SweepFamily::TransitiveCycle),
        ["trans-complete"] => Ok(SweepFamily::TransitiveComplete),
        ["ball", d] => {
            let d = d
                .parse()
                .map_err(|_| Error::Parameter(format!("bad dimension {d:?}")))?;
            Ok(SweepFamily::EuclideanBall { d })
        }
        ["tree", degree] => {
            let degree = degree
                .parse()
                .map_err(|_| Error::Parameter(format!("bad degree {degree:?}")))?;
            Ok(SweepFamily::TreeBall { degree })
        }
        _ => Err(Error::Parameter(format!(
            "unknown sweep family {text:?} (wheel | trans-cycle | trans-complete | ball:D | tree:DEG)"
        ))),
    }
}
