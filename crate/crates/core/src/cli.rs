//! `ramprisk` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 solver failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{self, InputKind, PairExtractionSpec, WindowMode};
use crate::domain::{Direction, MetricOrder, SampleSet, SolverPath};
use crate::error::{Error, Result};
use crate::estimator::sweep;
use crate::report::{self, RadiusPlan, RunPlan, SweepReport, ThresholdPlan};
use crate::synth::{self, SyntheticSeries};

const DEFAULT_CONFIDENCES: [f64; 3] = [0.9, 0.99, 0.999];

#[derive(Debug, Parser)]
#[command(
    name = "ramprisk",
    version,
    about = "Worst-case wind ramp probabilities from historical forecast errors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract neighbour forecast-error pairs from a wind series.
    Pairs {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Worst-case ramp probability per direction, threshold and radius.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: ThresholdArgs,
        /// Training prefix sizes (default: all pairs).
        #[arg(long, value_delimiter = ',')]
        prefix: Option<Vec<usize>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Ramp-probability table: ORP, ERP and robust estimates per prefix.
    Table {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: ThresholdArgs,
        /// Training prefix sizes.
        #[arg(long, value_delimiter = ',', default_value = "200,300,400")]
        prefix: Vec<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Worst-case ramp probability over a threshold grid (quasi-distribution).
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = DirectionArg::Down)]
        direction: DirectionArg,
        /// Threshold grid LO:HI:STEP in MW.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_grid)]
        grid: Grid,
        /// Training prefix size (default: all pairs).
        #[arg(long)]
        prefix: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a seeded synthetic wind series CSV.
    Synth {
        #[arg(long, default_value_t = 2004)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        records: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Series CSV (timestamp,forecast_mw,observed_mw) or pairs CSV (dw1_mw,dw2_mw).
    #[arg(long)]
    pub input: PathBuf,
    /// Forecast window LO:HI in MW used when pairing a series.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_window, default_value = "1060:1070")]
    pub window: (f64, f64),
    #[arg(long, value_enum, default_value_t = WindowModeArg::Both)]
    pub window_mode: WindowModeArg,
    /// Expected record spacing in seconds (default: smallest spacing in the file).
    #[arg(long)]
    pub cadence: Option<i64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Wasserstein order: 1, 2 or inf (any value >= 1 is accepted).
    #[arg(long, default_value = "1", value_parser = parse_order)]
    pub p: MetricOrder,
    /// Explicit ambiguity radius; overrides --confidence.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Confidence levels for the radius rule (default 0.9,0.99,0.999).
    #[arg(long, value_delimiter = ',')]
    pub confidence: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = SolverArg::ClosedForm)]
    pub solver: SolverArg,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    /// Ramp thresholds in MW.
    #[arg(
        long,
        allow_negative_numbers = true,
        value_delimiter = ',',
        default_value = "200,300,400"
    )]
    pub thresholds: Vec<f64>,
    /// Point forecasts W1E:W2E; when given, thresholds are power-space ramps
    /// and are shifted into forecast-error space.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_window)]
    pub forecasts: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Up,
    Down,
    Both,
}

impl DirectionArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Down => vec![Direction::Down],
            DirectionArg::Up => vec![Direction::Up],
            DirectionArg::Both => vec![Direction::Down, Direction::Up],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowModeArg {
    Both,
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    ClosedForm,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    /// `lo, lo + step, ...` up to `hi` inclusive (with a small tolerance on the last point).
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| format!("`{s}` is not a number")),
    }
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
    if lo > hi {
        return Err(format!("{lo} > {hi}"));
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err("expected LO:HI:STEP".into());
    };
    let grid = Grid {
        lo: parse_f64(lo)?,
        hi: parse_f64(hi)?,
        step: parse_f64(step)?,
    };
    if !(grid.lo.is_finite() && grid.hi.is_finite() && grid.step.is_finite()) {
        return Err("grid bounds must be finite".into());
    }
    if grid.step <= 0.0 || grid.hi <= grid.lo {
        return Err("grid must be ascending with a positive step".into());
    }
    Ok(grid)
}

fn parse_order(s: &str) -> std::result::Result<MetricOrder, String> {
    s.parse::<MetricOrder>().map_err(|e| e.to_string())
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 1,
        Error::EmptyInput(_) | Error::Parse { .. } | Error::Format { .. } | Error::Io { .. } => 2,
        Error::Solver(_) => 3,
    }
}

impl ModelArgs {
    fn radius_plan(&self) -> Result<RadiusPlan> {
        if let Some(r) = self.radius {
            if self.confidence.is_some() {
                eprintln!("warning: --radius given, ignoring --confidence");
            }
            return Ok(RadiusPlan::Radius(r));
        }
        let levels = self
            .confidence
            .clone()
            .unwrap_or_else(|| DEFAULT_CONFIDENCES.to_vec());
        if levels.is_empty() {
            return Err(Error::invalid("--confidence needs at least one level"));
        }
        Ok(RadiusPlan::Confidences(levels))
    }

    fn solver(&self) -> SolverPath {
        match self.solver {
            SolverArg::ClosedForm => SolverPath::ClosedForm,
            SolverArg::Lp => SolverPath::LpOracle,
        }
    }
}

/// Loads pairs directly, or extracts them from a series file.
pub fn load_samples(input: &InputArgs) -> Result<SampleSet> {
    match data::sniff_input(&input.input)? {
        InputKind::Pairs => data::load_pairs(&input.input),
        InputKind::Series => {
            let series = data::load_series(&input.input)?;
            let mut spec = PairExtractionSpec::new(input.window.0, input.window.1)?.with_mode(
                match input.window_mode {
                    WindowModeArg::Both => WindowMode::Both,
                    WindowModeArg::First => WindowMode::First,
                },
            );
            if let Some(c) = input.cadence {
                spec = spec.with_cadence(c)?;
            }
            let (samples, summary) = data::extract_pairs(&series, &spec)?;
            eprintln!(
                "pairs: {} from {} records ({} neighbours outside window, {} skipped gaps)",
                summary.pairs, summary.records, summary.outside_window, summary.skipped_gaps
            );
            Ok(samples.with_provenance(input.input.display().to_string()))
        }
    }
}

fn write_output(
    output: &OutputArgs,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    match &output.output {
        Some(path) => {
            let file = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(file);
            body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
    writeln!(w)
}

fn run_plan(
    model: &ModelArgs,
    grid: &ThresholdArgs,
    prefixes: Option<Vec<usize>>,
) -> Result<RunPlan> {
    Ok(RunPlan {
        order: model.p,
        radius: model.radius_plan()?,
        directions: grid.direction.directions(),
        thresholds: ThresholdPlan {
            thresholds: grid.thresholds.clone(),
            forecasts: grid.forecasts,
        },
        prefixes,
        solver: model.solver(),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pairs { input, output } => {
            let samples = load_samples(&input)?;
            if samples.is_empty() {
                eprintln!("warning: no pairs matched the window; writing an empty file");
            }
            write_output(&output, |w| match output.format {
                Format::Csv => data::write_pairs(w, &samples),
                Format::Json => write_json(w, &samples.pairs()),
            })
        }
        Command::Estimate {
            input,
            model,
            grid,
            prefix,
            output,
        } => {
            let samples = load_samples(&input)?;
            let plan = run_plan(&model, &grid, prefix)?;
            let rows = report::estimate_rows(&samples, &plan)?;
            write_output(&output, |w| match output.format {
                Format::Csv => report::write_estimate_csv(w, &rows),
                Format::Json => write_json(w, &rows),
            })
        }
        Command::Table {
            input,
            model,
            grid,
            prefix,
            output,
        } => {
            let samples = load_samples(&input)?;
            let plan = run_plan(&model, &grid, Some(prefix))?;
            let table = report::table(&samples, &plan)?;
            write_output(&output, |w| match output.format {
                Format::Csv => table.write_csv(w),
                Format::Json => write_json(w, &table.rows),
            })
        }
        Command::Sweep {
            input,
            model,
            direction,
            grid,
            prefix,
            output,
        } => {
            let direction = match direction {
                DirectionArg::Down => Direction::Down,
                DirectionArg::Up => Direction::Up,
                DirectionArg::Both => {
                    return Err(Error::invalid(
                        "sweep takes a single direction (up or down)",
                    ))
                }
            };
            let samples = load_samples(&input)?;
            let training = match prefix {
                Some(n) => data::prefix_split(&samples, n)?.0,
                None => samples,
            };
            let config = match model.radius_plan()? {
                RadiusPlan::Radius(r) => crate::WassersteinConfig::with_radius(model.p, r)?,
                RadiusPlan::Confidences(levels) => match levels.as_slice() {
                    [alpha] => {
                        crate::WassersteinConfig::from_confidence(model.p, *alpha, training.len())?
                    }
                    _ => {
                        return Err(Error::invalid(
                            "sweep takes a single --confidence level or --radius",
                        ))
                    }
                },
            };
            let curve = sweep(&training, direction, &grid.points(), &config)?;
            eprintln!("note: {}", crate::SweepCurve::ENVELOPE_NOTE);
            let report = SweepReport::new(&curve, config.radius());
            write_output(&output, |w| match output.format {
                Format::Csv => report.write_csv(w),
                Format::Json => write_json(w, &report),
            })
        }
        Command::Synth {
            seed,
            records,
            output,
        } => {
            let series = SyntheticSeries {
                seed,
                records,
                ..Default::default()
            }
            .generate()?;
            let out = OutputArgs {
                format: Format::Csv,
                output,
            };
            write_output(&out, |w| synth::write_series(w, &series))
        }
    }
}
