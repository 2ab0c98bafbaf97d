use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use aeroflow_cli as cmd;
use aeroflow_core::pipeline::Target;
use aeroflow_core::timeutil::{parse_date, DateRange};
use aeroflow_core::traffic_gen::Scenario;
use aeroflow_mesh::ServeConfig;

#[derive(Parser)]
#[command(name = "aeroflow", version, about = "Sector occupancy and airport capacity prediction")]
struct Cli {
    /// Store directory (AF_STORE_DIR takes precedence when set).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load events, METAR files, RC labels and scenario files into the raw store.
    Ingest {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
    /// Reduce raw events of a day or range into prepared collections.
    Prepare {
        #[arg(long, conflicts_with = "range")]
        date: Option<String>,
        /// `YYYY-MM-DD..YYYY-MM-DD`, inclusive.
        #[arg(long)]
        range: Option<String>,
    },
    /// Select and publish a sector model, or an airport's classifier and flow models.
    Train {
        #[arg(long, conflicts_with = "airport")]
        sector: Option<String>,
        #[arg(long)]
        airport: Option<String>,
        #[arg(long)]
        range: String,
        #[arg(long, default_value = "occupancy")]
        target: Target,
    },
    /// Score published models on a range and write CSV outputs.
    Evaluate {
        #[arg(long)]
        range: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP endpoints.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate synthetic traffic, weather and RC labels.
    Simulate {
        /// Scenario TOML; the built-in reference scenario if omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write figure data (score scatter, histograms) for the prepared days.
    Plot {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        range: Option<String>,
    },
}

fn range(s: &str) -> Result<DateRange> {
    s.parse().with_context(|| format!("bad range `{s}`"))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let store_path = cmd::store_location(cli.store.clone());
    match cli.command {
        Command::Ingest { inputs } => {
            let store = cmd::open_store(&store_path)?;
            let s = cmd::ingest(&store, &inputs)?;
            println!(
                "events {} (duplicates {}), observations {} (rejected {}), rc labels {}, networks {}",
                s.events, s.duplicates, s.observations, s.metar_errors, s.rc_labels, s.networks
            );
        }
        Command::Prepare { date, range: r } => {
            let r = match (date, r) {
                (Some(d), None) => DateRange::single(parse_date(&d)?),
                (None, Some(r)) => range(&r)?,
                _ => bail!("give --date or --range"),
            };
            let store = cmd::open_store(&store_path)?;
            for rep in cmd::prepare(&store, r)? {
                println!("{}", serde_json::to_string(&rep)?);
            }
        }
        Command::Train {
            sector,
            airport,
            range: r,
            target,
        } => {
            let store = cmd::open_store(&store_path)?;
            let r = range(&r)?;
            match (sector, airport) {
                (Some(s), None) => {
                    let (id, cv) = cmd::train_sector(&store, &s, target, r)?;
                    println!("{s} {target}: {id} cv_score {cv:.4}");
                }
                (None, Some(a)) => {
                    let t = cmd::train_airport(&store, &a, r)?;
                    println!("{a} rc: {} accuracy {:.4}", t.classifier_id, t.classifier_accuracy);
                    for (s, tg, id, cv) in t.sectors {
                        println!("{s} {tg}: {id} cv_score {cv:.4}");
                    }
                }
                _ => bail!("give --sector or --airport"),
            }
        }
        Command::Evaluate { range: r, out } => {
            let store = cmd::open_store(&store_path)?;
            let s = cmd::evaluate(&store, range(&r)?, &out)?;
            report(&s);
        }
        Command::Plot { out, range: r } => {
            let store = cmd::open_store(&store_path)?;
            let r = r.as_deref().map(range).transpose()?;
            let s = cmd::plot(&store, r, &out)?;
            report(&s);
        }
        Command::Serve { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ServeConfig::from_toml(&text)?;
            if cli.store.is_some() || std::env::var_os(cmd::STORE_ENV).is_some_and(|v| !v.is_empty()) {
                cfg.store = store_path;
            }
            tokio::runtime::Runtime::new()?.block_on(aeroflow_mesh::serve(cfg))?;
        }
        Command::Simulate {
            scenario,
            from,
            to,
            seed,
            out,
        } => {
            let scn = match scenario {
                Some(p) => Scenario::from_toml(&std::fs::read_to_string(&p)?)?,
                None => Scenario::reference(),
            };
            let r = DateRange::new(parse_date(&from)?, parse_date(&to)?).context("--from after --to")?;
            let files = cmd::simulate(&scn, r, seed, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn report(s: &cmd::EvaluateSummary) {
    for (id, a, d, n) in &s.airports {
        println!("{id}: arrivals {a:.4} departures {d:.4} ({n} buckets)");
    }
    for r in &s.sectors {
        println!("{}: raw {:.4} balanced {:.4}", r.sector, r.raw_score, r.balanced_score);
    }
    for f in &s.files {
        println!("wrote {}", f.display());
    }
}
