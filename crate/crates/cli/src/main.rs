use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use cthermo_core::scenario::{report_criteria, run_scenario, OutputFormat, Scenario, ScenarioConfig};
use cthermo_core::Error;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Fig1,
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3,
    FtCheck,
    Sweep,
    /// Timescales and regime criteria for the config's scenario (JSON).
    Criteria,
}

impl Command {
    fn scenario(self) -> Option<Scenario> {
        Some(match self {
            Command::Fig1 => Scenario::Fig1,
            Command::Fig2a => Scenario::Fig2a,
            Command::Fig2b => Scenario::Fig2b,
            Command::Fig2c => Scenario::Fig2c,
            Command::Fig3 => Scenario::Fig3,
            Command::FtCheck => Scenario::FtCheck,
            Command::Sweep => Scenario::Sweep,
            Command::Criteria => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Coherence-to-work scenarios for a periodically driven qubit.
///
/// Exit status: 0 ok, 2 config error, 3 numeric failure, 1 output I/O error.
#[derive(Debug, Parser)]
#[command(name = "cthermo", version)]
struct Cli {
    command: Command,

    /// TOML scenario file. Without it the built-in defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format (overrides `output.format`).
    #[arg(long, value_enum)]
    format: Option<Format>,

    /// Integrator step (overrides `integrator.dt`).
    #[arg(long)]
    dt: Option<f64>,

    /// Worker threads; 0 or unset means one per core.
    #[arg(long, env = "CTHERMO_THREADS")]
    threads: Option<usize>,

    /// Scenario whose criteria are reported; defaults to the config's `scenario` key.
    #[arg(long = "for", value_name = "SCENARIO")]
    for_scenario: Option<String>,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let scenario = match (cli.command.scenario(), &cli.for_scenario) {
        (Some(s), None) => Some(s),
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                field: "--for".into(),
                message: "only valid with `criteria`".into(),
            })
        }
        (None, Some(name)) => Some(name.parse()?),
        (None, None) => None,
    };
    let mut cfg = match (&cli.config, scenario) {
        (Some(path), s) => ScenarioConfig::load(path, s)?,
        (None, Some(s)) => ScenarioConfig::defaults(s)?,
        (None, None) => {
            return Err(Error::Config {
                field: "--config".into(),
                message: "criteria needs a config file or --for <scenario>".into(),
            })
        }
    };
    if let Some(dt) = cli.dt {
        cfg = cfg.with_dt(dt)?;
    }
    if let Some(dir) = &cli.out {
        cfg = cfg.with_out_dir(dir.clone());
    }
    if let Some(f) = cli.format {
        cfg = cfg.with_format(match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        });
    }
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &ScenarioConfig) -> Result<PathBuf, Error> {
    match cli.command {
        Command::Criteria => {
            let report = report_criteria(cfg)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join(format!("{}-criteria.json", cfg.scenario));
            std::fs::write(&path, serde_json::to_string_pretty(&report).expect("serialisable") + "\n")?;
            Ok(path)
        }
        _ => {
            log::info!("running {} (dt = {:e}, {} samples)", cfg.scenario, cfg.dt, cfg.samples);
            let data = run_scenario(cfg)?;
            data.write(&cfg.out_dir, cfg.scenario, cfg.format)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_config() => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        Error::Scenario { source, .. } => exit_code(source),
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cthermo: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cthermo: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match pool.install(|| execute(&cli, &cfg)) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cthermo: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
