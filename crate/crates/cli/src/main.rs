use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnnsim::harness::{
    accuracy_csv, emit_report, energy_breakdown_csv, energy_csv, infer_tile_image, load_model, operating_points_csv,
    pattern_csv, program_tile_image, run_accuracy, run_energy, run_pattern_experiment, run_solar_sweep, schmoo_csv,
    solar_csv, Config, HarnessError, Mode, Report,
};
use bnnsim::mapper::compile;
use bnnsim::pipeline::{parse_vectors_csv, vectors_to_csv};
use bnnsim::tile::TileImage;
use clap::{Args, Parser, Subcommand};

/// Behavioral simulator for a solar-powered memristor BNN accelerator.
#[derive(Debug, Parser)]
#[command(name = "bnnsim", version)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides experiment.base_seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides experiment.output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Point {
    /// Supply voltage
    #[arg(long, default_value_t = 1.2)]
    voltage: f64,
    /// Clock frequency in MHz
    #[arg(long, default_value_t = 10.0)]
    frequency: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Program a tile image and read it back
    Program {
        /// Tile image text file
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        point: Point,
    },
    /// Run input vectors through one programmed tile
    Infer {
        #[arg(long)]
        image: PathBuf,
        /// One comma-separated +1/-1 vector of 58 entries per line
        #[arg(long)]
        inputs: PathBuf,
        #[command(flatten)]
        point: Point,
    },
    /// Voltage x frequency pattern sweep with per-delta accuracy
    Pattern,
    /// Voltage x frequency pattern sweep, summary only
    Schmoo,
    /// Solar-powered sweep over illumination (or lab-supply voltages)
    Solar,
    /// Dataset accuracy of a mapped model per condition
    Accuracy {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u32>,
        /// Use only the first N samples
        #[arg(long)]
        max_samples: Option<usize>,
    },
    /// Energy per inference and efficiency over the voltage x frequency grid
    Energy,
    /// Compile a model into its tile plan
    Map {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

enum Outcome {
    Done,
    BrownOutOnly,
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn read_image(path: &Path) -> Result<TileImage, HarnessError> {
    TileImage::from_text(&read_text(path)?).map_err(|e| HarnessError::Model(format!("{}: {e}", path.display())))
}

fn config(cli: &Cli) -> Result<Config, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.base_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.experiment.output = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, HarnessError> {
    let mut cfg = config(cli)?;
    let (report, outcome) = match &cli.command {
        Command::Program { image, point } => {
            let img = read_image(image)?;
            let (_, r) = program_tile_image(&cfg, &img, point.voltage, point.frequency)?;
            let mut rep = Report::new("program");
            rep.add("readback.txt", r.read_back.to_text());
            rep.add(
                "program.csv",
                format!(
                    "voltage_v,frequency_mhz,weight_mismatches,threshold_bit_mismatches\n{},{},{},{}\n",
                    point.voltage, point.frequency, r.weight_mismatches, r.threshold_mismatches
                ),
            );
            (rep, Outcome::Done)
        }
        Command::Infer { image, inputs, point } => {
            let img = read_image(image)?;
            let xs = parse_vectors_csv(&read_text(inputs)?)
                .map_err(|e| HarnessError::Model(format!("{}: {e}", inputs.display())))?;
            let r = infer_tile_image(&cfg, &img, &xs, point.voltage, point.frequency)?;
            let mut rep = Report::new("infer");
            rep.add("outputs.csv", vectors_to_csv(&r.outputs));
            rep.add("deltas.csv", vectors_to_csv(&r.deltas));
            rep.add("trace.csv", r.trace.to_csv());
            (rep, Outcome::Done)
        }
        Command::Pattern | Command::Schmoo => {
            cfg.experiment.mode = if matches!(cli.command, Command::Pattern) {
                Mode::Pattern
            } else {
                Mode::Schmoo
            };
            let r = run_pattern_experiment(&cfg)?;
            let mut rep = Report::new(if cfg.experiment.mode == Mode::Pattern {
                "pattern"
            } else {
                "schmoo"
            });
            rep.add("schmoo.csv", schmoo_csv(&r.schmoo));
            if cfg.experiment.mode == Mode::Pattern {
                rep.add("pattern.csv", pattern_csv(&r.per_delta));
            }
            let all_nf = r.schmoo.iter().all(|x| !x.functional);
            (rep, if all_nf { Outcome::BrownOutOnly } else { Outcome::Done })
        }
        Command::Solar => {
            cfg.experiment.mode = Mode::SolarSweep;
            let r = run_solar_sweep(&cfg)?;
            let mut rep = Report::new("solar");
            rep.add("solar.csv", solar_csv(&r.rows));
            rep.add("iv.csv", r.iv_csv.clone());
            rep.add("operating_points.csv", operating_points_csv(&r.operating_points));
            let o = if r.brown_out_only() {
                Outcome::BrownOutOnly
            } else {
                Outcome::Done
            };
            (rep, o)
        }
        Command::Accuracy {
            model,
            images,
            labels,
            trials,
            max_samples,
        } => {
            cfg.experiment.mode = Mode::Accuracy;
            let e = &mut cfg.experiment;
            e.model = model.clone().or(e.model.take());
            e.images = images.clone().or(e.images.take());
            e.labels = labels.clone().or(e.labels.take());
            if let Some(t) = trials {
                e.trials = *t;
            }
            if let Some(m) = max_samples {
                e.max_samples = *m;
            }
            let r = run_accuracy(&cfg)?;
            let mut rep = Report::new("accuracy");
            rep.add("accuracy.csv", accuracy_csv(&r.rows));
            let o = if r.rows.iter().all(|x| x.accuracy_pct.is_none()) {
                Outcome::BrownOutOnly
            } else {
                Outcome::Done
            };
            (rep, o)
        }
        Command::Energy => {
            cfg.experiment.mode = Mode::Energy;
            let r = run_energy(&cfg)?;
            let mut rep = Report::new("energy");
            rep.add("energy.csv", energy_csv(&r.rows));
            rep.add("energy_breakdown.csv", energy_breakdown_csv(&r.breakdown));
            (rep, Outcome::Done)
        }
        Command::Map { model } => {
            let path = model
                .clone()
                .or(cfg.experiment.model.clone())
                .ok_or_else(|| HarnessError::Config("map needs --model or experiment.model".into()))?;
            let m = load_model(&path)?;
            let plan = compile(&m)?;
            let mut rep = Report::new("map");
            rep.add("plan.csv", plan.to_csv());
            (rep, Outcome::Done)
        }
    };
    let dir = cfg.experiment.output.clone();
    for p in emit_report(&report, &cfg, &dir)? {
        log::info!("wrote {}", p.display());
    }
    if matches!(outcome, Outcome::BrownOutOnly) {
        log::warn!("every condition browned out");
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::BrownOutOnly) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
