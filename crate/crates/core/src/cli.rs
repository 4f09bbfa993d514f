//! Command-line interface: `run`, `report` and `hv`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{BackendKind, FileConfig};
use crate::domain::{FitnessPoint, ObjectivePair};
use crate::moea::{hv_subset_select, hypervolume_2d, ReferencePoint, Selector, SubsetMode};
use crate::report::build_report;
use crate::runner::{run_experiment, Backends, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "emo-prompts",
    version,
    about = "Evolve story prompts toward pairs of target emotions"
)]
pub struct Cli {
    /// Log debug output to stderr.
    #[arg(long, short, global = true, conflicts_with = "quiet")]
    pub verbose: bool,
    /// Only log errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write generation records.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Objective pair such as `love:anger`.
        #[arg(long)]
        pair: Option<ObjectivePair>,
        #[arg(long)]
        selector: Option<Selector>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        gens: Option<usize>,
    },
    /// Recompute statistics from the records of finished runs.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Hypervolume of a CSV of `f1,f2` rows w.r.t. (0,0).
    Hv {
        #[arg(long)]
        points: PathBuf,
        /// Keep the best K points.
        #[arg(long)]
        subset: Option<usize>,
        #[arg(long, default_value = "greedy")]
        mode: SubsetMode,
    },
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match cli.command {
        Command::Run {
            config,
            backend,
            pair,
            selector,
            seed,
            out,
            reps,
            gens,
        } => {
            let overrides = Overrides {
                backend,
                pair,
                selector,
                seed,
                out,
                reps,
                gens,
            };
            cmd_run(config.as_deref(), overrides)
        }
        Command::Report { run } => cmd_report(&run),
        Command::Hv {
            points,
            subset,
            mode,
        } => cmd_hv(&points, subset, mode),
    }
}

fn init_logging(verbose: bool, quiet: bool) {
    let level = if verbose {
        "debug"
    } else if quiet {
        "error"
    } else {
        "warn"
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

#[derive(Debug, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub pair: Option<ObjectivePair>,
    pub selector: Option<Selector>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
    pub gens: Option<usize>,
}

pub fn cmd_run(config: Option<&Path>, o: Overrides) -> i32 {
    let mut file = match config
        .map(FileConfig::load)
        .unwrap_or_else(|| Ok(FileConfig::default()))
    {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    file.apply_env();
    if let Some(v) = o.backend {
        file.backend = v;
    }
    if let Some(v) = o.pair {
        file.pair = v;
    }
    if let Some(v) = o.selector {
        file.selector = v;
    }
    if let Some(v) = o.seed {
        file.seed = v;
    }
    if let Some(v) = o.out {
        file.output_dir = v;
    }
    if let Some(v) = o.reps {
        file.repetitions = v;
    }
    if let Some(v) = o.gens {
        file.generations = v;
    }

    let (run_config, (generator, classifier)) = match file
        .run_config()
        .and_then(|c| Ok((c, file.build_backends()?)))
    {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let backends = Backends {
        generator: generator.as_ref(),
        classifier: classifier.as_ref(),
    };
    let mut progress = |p: crate::runner::Progress| {
        println!(
            "rep {} gen {} hv {:.6} fallbacks {}",
            p.repetition, p.generation, p.hypervolume, p.fallback_count
        );
    };
    match run_experiment(&run_config, backends, &mut progress) {
        Ok(summary) if summary.completed.is_empty() => {
            eprintln!("error: every repetition failed");
            EXIT_FAILURE
        }
        Ok(summary) => {
            println!(
                "done {}/{} repetitions, mean final hv {:.6}, written to {}",
                summary.completed.len(),
                summary.repetitions,
                summary.final_stats.mean.unwrap_or(0.0),
                run_config.experiment_dir().display()
            );
            EXIT_OK
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn cmd_report(dir: &Path) -> i32 {
    let report = match build_report(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    print!("{}", report.table());
    for (name, body) in [
        ("report.csv", report.report_csv()),
        ("curves.csv", report.curves_csv()),
    ] {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    }
    EXIT_OK
}

/// Parses `f1,f2` rows. Blank lines and a leading non-numeric header are
/// skipped.
pub fn parse_points_csv(text: &str) -> Result<Vec<FitnessPoint>, String> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [a, b] => a
                .parse::<f64>()
                .and_then(|a| b.parse::<f64>().map(|b| (a, b)))
                .ok(),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                points.push(FitnessPoint::new(a, b).map_err(|e| format!("line {}: {e}", n + 1))?)
            }
            None if n == 0 && points.is_empty() && fields.len() == 2 => continue,
            None => {
                return Err(format!(
                    "line {}: expected two numbers, got `{line}`",
                    n + 1
                ))
            }
        }
    }
    Ok(points)
}

pub fn cmd_hv(path: &Path, subset: Option<usize>, mode: SubsetMode) -> i32 {
    let points = match fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_points_csv(&t))
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let r = ReferencePoint::ORIGIN;
    let hv = hypervolume_2d(&points, r).expect("validated points lie above the origin");
    println!("hypervolume {hv}");
    if let Some(k) = subset {
        match hv_subset_select(&points, k, r, mode) {
            Ok(chosen) => {
                let sub: Vec<FitnessPoint> = chosen.iter().map(|&i| points[i]).collect();
                let joined: Vec<String> = chosen.iter().map(usize::to_string).collect();
                println!("selected {}", joined.join(","));
                println!(
                    "subset_hypervolume {}",
                    hypervolume_2d(&sub, r).expect("subset of valid points")
                );
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }
    EXIT_OK
}
