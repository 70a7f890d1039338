//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, growth_ratios};
use crate::budget::ImportanceSource;
use crate::dets::DiffThresholdMode;
use crate::error::{Error, ErrorClass};
use crate::pipeline::{self, AtStage, CommunityCap, SelectionConfig, Stage, StageError, SWEEP_CSV_HEADER};
use crate::stsd;
use crate::synthetic::{generate_synthetic, MovingPatch, SyntheticSpec};

pub const VERSION_STRING: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage or invalid parameter
  3  malformed or corrupt input file
  4  validation failure (non-finite values, shape mismatch, empty domain)
  5  I/O failure
  6  internal or resource failure";

#[derive(Debug, Parser)]
#[command(name = "st-simdiff", version = VERSION_STRING, about = "Spatio-temporal visual token compression", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a token subset and write it as JSON.
    Compress {
        /// STSD token tensor.
        input: PathBuf,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Destination for the JSON result (stdout when omitted).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print graph, community and temporal-difference diagnostics as JSON.
    Stats {
        input: PathBuf,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Sweep similarity and difference thresholds; emits CSV.
    Sweep {
        input: PathBuf,
        /// Comma-separated similarity thresholds.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        tau_sims: Vec<f64>,
        /// Comma-separated difference thresholds.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        tau_diffs: Vec<f64>,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic STSD tensor.
    Gen(GenArgs),
    /// Measure pipeline scaling against an all-pairs baseline; emits CSV.
    Bench {
        /// Ascending token counts.
        #[arg(long, value_delimiter = ',', default_value = "16384,32768,65536,131072,262144")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Sizes for the quadratic baseline.
        #[arg(long, value_delimiter = ',', default_value = "2048,4096,8192")]
        baseline_sizes: Vec<usize>,
        /// Skip the quadratic baseline.
        #[arg(long)]
        no_baseline: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiffModeArg {
    Fixed,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadsArg(pub Option<usize>);

impl FromStr for ThreadsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(ThreadsArg(None));
        }
        match s.parse::<usize>() {
            Ok(0) => Ok(ThreadsArg(None)),
            Ok(k) => Ok(ThreadsArg(Some(k))),
            Err(_) => Err(format!("expected \"auto\" or a thread count, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Fraction of tokens to keep, in (0, 1].
    #[arg(long, default_value_t = 0.3)]
    pub ratio: f64,
    /// Edges with similarity strictly above this join communities.
    #[arg(long, default_value_t = 0.8)]
    pub tau_sim: f64,
    /// Temporal edges with similarity strictly below this mark events.
    #[arg(long, default_value_t = 0.2)]
    pub tau_diff: f64,
    #[arg(long, value_enum, default_value_t = DiffModeArg::Fixed)]
    pub diff_mode: DiffModeArg,
    /// Percentile of temporal difference scores used in percentile mode.
    #[arg(long, default_value_t = 95.0)]
    pub percentile: f64,
    /// Largest community size: "auto" (ceil(sqrt(N))) or an integer.
    #[arg(long, default_value = "auto", value_parser = parse_cap)]
    pub community_cap: CommunityCap,
    /// proxy | uniform | external:PATH. External files hold N scores either
    /// as STSD shaped 1x1xNx1 or as a u64 count followed by f32 values.
    #[arg(long, default_value = "proxy", value_parser = parse_importance)]
    pub importance: ImportanceSource,
    /// Do not add fill tokens when the candidates fall short of the budget.
    #[arg(long)]
    pub no_fill: bool,
    /// Worker threads, or "auto".
    #[arg(long, env = "ST_SIMDIFF_THREADS", default_value = "auto")]
    pub threads: ThreadsArg,
}

fn parse_cap(s: &str) -> Result<CommunityCap, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_importance(s: &str) -> Result<ImportanceSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl SelectionArgs {
    pub fn to_config(&self) -> Result<SelectionConfig, Error> {
        let diff_mode = match self.diff_mode {
            DiffModeArg::Fixed => DiffThresholdMode::Fixed { tau_diff: self.tau_diff },
            DiffModeArg::Percentile => DiffThresholdMode::Percentile { p: self.percentile },
        };
        let config = SelectionConfig {
            ratio: self.ratio,
            tau_sim: self.tau_sim,
            diff_mode,
            community_cap: self.community_cap,
            importance: self.importance.clone(),
            fill: !self.no_fill,
            threads: self.threads.0,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scene-cut frame; repeatable.
    #[arg(long = "cut")]
    pub cuts: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f32,
    /// Moving patch as SIZE:ROW:COL:VROW:VCOL:OFFSET; repeatable.
    #[arg(long = "patch", value_parser = parse_patch)]
    pub patches: Vec<MovingPatch>,
    #[arg(long, short)]
    pub output: PathBuf,
}

fn parse_patch(s: &str) -> Result<MovingPatch, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("patch must be SIZE:ROW:COL:VROW:VCOL:OFFSET, got {s:?}");
    if parts.len() != 6 {
        return Err(bad());
    }
    Ok(MovingPatch {
        size: parts[0].parse().map_err(|_| bad())?,
        start_row: parts[1].parse().map_err(|_| bad())?,
        start_col: parts[2].parse().map_err(|_| bad())?,
        velocity: (parts[3].parse().map_err(|_| bad())?, parts[4].parse().map_err(|_| bad())?),
        offset: parts[5].parse().map_err(|_| bad())?,
    })
}

fn write_output(path: Option<&Path>, body: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn load(input: &Path) -> Result<crate::TokenGrid, StageError> {
    stsd::load_grid(input).at(Stage::Load)
}

pub fn execute(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Compress { input, selection, output } => {
            let config = selection.to_config().at(Stage::Config)?;
            let grid = load(&input)?;
            let result = pipeline::run(&grid, &config)?;
            write_output(output.as_deref(), &(result.to_json() + "\n")).at(Stage::Output)?;
            eprintln!(
                "n={} n_target={} rep={} event={} fill={} kept={} time={:.2}ms",
                result.n,
                result.n_target,
                result.stats.rep_count,
                result.stats.event_count,
                result.stats.fill_count,
                result.indices.len(),
                result.timing.total_ms
            );
        }
        Command::Stats { input, selection, output } => {
            let config = selection.to_config().at(Stage::Config)?;
            let grid = load(&input)?;
            let diag = pipeline::diagnostics(&grid, &config)?;
            let body = serde_json::to_string_pretty(&diag).expect("diagnostics serialize");
            write_output(output.as_deref(), &(body + "\n")).at(Stage::Output)?;
        }
        Command::Sweep { input, tau_sims, tau_diffs, selection, output } => {
            let config = selection.to_config().at(Stage::Config)?;
            for &t in tau_sims.iter().chain(&tau_diffs) {
                if !(-1.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!("sweep thresholds must be in [-1, 1], got {t}")))
                        .at(Stage::Config);
                }
            }
            let grid = load(&input)?;
            let rows = pipeline::sweep(&grid, &tau_sims, &tau_diffs, &config)?;
            let mut body = String::from(SWEEP_CSV_HEADER);
            body.push('\n');
            for row in rows {
                body.push_str(&row.csv_line());
                body.push('\n');
            }
            write_output(output.as_deref(), &body).at(Stage::Output)?;
        }
        Command::Gen(args) => {
            let spec = SyntheticSpec {
                frames: args.frames,
                height: args.height,
                width: args.width,
                dim: args.dim,
                seed: args.seed,
                patches: args.patches,
                cuts: args.cuts,
                noise: args.noise,
            };
            let grid = generate_synthetic(&spec).at(Stage::Config)?;
            stsd::save_grid(&grid, &args.output).at(Stage::Output)?;
        }
        Command::Bench { sizes, dim, reps, threads, baseline_sizes, no_baseline, output } => {
            let records = bench::run_scaling(&sizes, dim, reps, threads).at(Stage::Config)?;
            let baseline = if no_baseline {
                Vec::new()
            } else {
                bench::run_quadratic_baseline(&baseline_sizes, dim, reps).at(Stage::Config)?
            };
            let mut body = String::from(bench::CSV_HEADER);
            body.push('\n');
            for r in records.iter().chain(&baseline) {
                for line in r.csv_lines() {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
            write_output(output.as_deref(), &body).at(Stage::Output)?;
            report_growth("pipeline", &records);
            report_growth("all-pairs baseline", &baseline);
        }
    }
    Ok(())
}

fn report_growth(label: &str, records: &[bench::BenchRecord]) {
    match records {
        [] => {}
        [only] => eprintln!("{label}: n={} total {:.3} ms", only.n, only.total_ms),
        _ => {
            let ratios = growth_ratios(records, |r| r.total_ms);
            for (a, b, ratio) in &ratios {
                eprintln!("{label}: {a} -> {b} time ratio {ratio:.2}");
            }
            let max = ratios.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
            eprintln!("{label}: max ratio {max:.2}");
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

pub fn exit_code(class: ErrorClass) -> u8 {
    class as i32 as u8
}
