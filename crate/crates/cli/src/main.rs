use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use voradv::config::{self, ExperimentConfig};
use voradv::{idx, run, theory, CliError, CliResult};
use voradv_core::geometry::DatasetRole;

#[derive(Parser)]
#[command(name = "voradv", version, about = "Voronoi-constrained adversarial training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// key = value config file; `--key value` pairs after it override entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated train/test dataset files
    GenData(Common),
    /// Train, evaluate and aggregate over retrainings
    Run(Common),
    /// Certification, covering-count and coverage tables
    Theory(Common),
    /// Convert an MNIST-style IDX pair to the dataset format
    IngestIdx(Common),
    /// Re-evaluate the checkpoints of an existing run
    Eval(Common),
    /// List every config key
    Keys,
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    config::load(c.config.as_deref(), &c.overrides)
}

fn threads(cfg: &ExperimentConfig) {
    if cfg.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
}

fn ingest(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let images = cfg.images.as_deref().ok_or_else(|| CliError::config("ingest-idx needs images"))?;
    let labels = cfg.labels.as_deref().ok_or_else(|| CliError::config("ingest-idx needs labels"))?;
    let role: DatasetRole = cfg.role.parse()?;
    let ds = idx::to_dataset(&idx::read_images(images)?, &idx::read_labels(labels)?, cfg.subset_n, cfg.seed, role)?;
    let path = cfg.out.join(format!("ingested_{}.csv", cfg.role));
    voradv::data::write_dataset(&ds, &path)?;
    println!("{}: {} rows, {} columns", path.display(), ds.len(), ds.dim() + 1);
    Ok(path)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Keys => {
            for (k, help) in config::KEYS {
                println!("{k:<18} {help}");
            }
        }
        Command::GenData(c) => {
            for p in run::cmd_gen_data(&load(&c)?)? {
                println!("{}", p.display());
            }
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            threads(&cfg);
            for o in run::cmd_run(&cfg)? {
                let label = o.codim.map_or_else(String::new, |c| format!("codim {c}: "));
                println!("{label}NAUC {:.4} +/- {:.4} over {} retrainings", o.aggregate.nauc_mean, o.aggregate.nauc_std, o.models.len());
            }
        }
        Command::Theory(c) => {
            let cfg = load(&c)?;
            let report = theory::cmd_theory(&cfg)?;
            print!("{}", report.summary());
        }
        Command::IngestIdx(c) => {
            ingest(&load(&c)?)?;
        }
        Command::Eval(c) => {
            let cfg = load(&c)?;
            threads(&cfg);
            let overrides = config::parse_overrides(&c.overrides)?;
            let agg = run::cmd_eval(&cfg, &overrides)?;
            println!("NAUC {:.4} +/- {:.4}", agg.nauc_mean, agg.nauc_std);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
