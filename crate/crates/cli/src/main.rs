use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use segrate_api::ServerConfig;
use segrate_core::analytics::AnalyticsReport;
use segrate_core::capture::VideoLibrary;
use segrate_core::events::{read_flat_csv, write_flat_csv};
use segrate_core::rating::RatingDesk;
use segrate_core::simulate::{SwitchTarget, DEFAULT_START};
use segrate_core::{
    simulate, Catalog, EventFilter, EventStore, Hand, Millis, RatingForm, SegmentKind,
    SimulationProfile,
};

#[derive(Parser)]
#[command(
    name = "segrate",
    version,
    about = "Segmentation, rating and capture pipeline tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// JSON server config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Check a catalog document (the built-in one if no path is given).
    ValidateCatalog { path: Option<PathBuf> },
    /// Register video files in the library.
    ImportVideos {
        #[command(flatten)]
        data: DataDir,
        /// Line-delimited JSON video records.
        #[arg(long, conflicts_with = "names")]
        jsonl: Option<PathBuf>,
        /// Text file with one `<patient>_<hand>_task<NN>_<view>.<ext>` name per line.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value = "3840x2160")]
        resolution: String,
    },
    /// Load flat segmentation rows (CSV) as synthesized events.
    ImportFlat {
        #[command(flatten)]
        data: DataDir,
        csv: PathBuf,
        /// Actor the synthesized events are attributed to.
        #[arg(long)]
        actor: String,
        /// Timestamp of the first synthesized event, in ms since the epoch.
        #[arg(long)]
        base_ms: Option<i64>,
    },
    /// Write flat segmentation rows (CSV) for the selected events.
    ExportFlat {
        #[command(flatten)]
        data: DataDir,
        #[command(flatten)]
        filter: FilterArgs,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compute annotator analytics and write JSON/CSV tables to a directory.
    ExportAnalytics {
        #[command(flatten)]
        data: DataDir,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = segrate_core::analytics::DEFAULT_BATCH_SIZE)]
        batch_size: usize,
    },
    /// Generate synthetic annotator event streams.
    Simulate {
        /// JSON simulation profile; the flags below are ignored when given.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        actors: usize,
        #[arg(long, default_value_t = 100)]
        segments: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Exact switch mix, `KIND:SWITCHES:p1,p2,p3,p4,p5` (percentages). Repeatable.
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<SwitchTarget>,
        /// Append to the store in this directory instead of printing JSONL.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(short, long, conflicts_with = "data_dir")]
        out: Option<PathBuf>,
    },
    /// Print rating progress as JSON.
    Progress {
        #[command(flatten)]
        data: DataDir,
    },
}

#[derive(Args)]
struct DataDir {
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    patient: Option<String>,
    #[arg(long)]
    hand: Option<Hand>,
    #[arg(long)]
    task: Option<u8>,
    #[arg(long)]
    actor: Option<String>,
}

impl FilterArgs {
    fn filter(&self) -> EventFilter {
        EventFilter {
            patient: self.patient.clone(),
            hand: self.hand,
            task: self.task,
            actor: self.actor.clone(),
            ..EventFilter::default()
        }
    }
}

fn parse_target(s: &str) -> Result<SwitchTarget, String> {
    let bad = || format!("expected KIND:SWITCHES:p1,p2,p3,p4,p5, got `{s}`");
    let mut parts = s.split(':');
    let (Some(kind), Some(n), Some(ps), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let kind: SegmentKind = kind.parse().map_err(|e| format!("{e}"))?;
    let switches = n.parse().map_err(|_| bad())?;
    let ps: Vec<f64> = ps
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let percentages: [f64; 5] = ps.try_into().map_err(|_| bad())?;
    Ok(SwitchTarget {
        kind,
        switches,
        percentages,
    })
}

fn catalog() -> Arc<Catalog> {
    Arc::new(Catalog::default_catalog())
}

fn open_store(dir: &Path) -> Result<EventStore> {
    EventStore::open(dir, catalog()).with_context(|| format!("opening store in {}", dir.display()))
}

fn write_output(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(body).context("writing stdout"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            config,
            data_dir,
            bind,
        } => {
            let mut cfg = match &config {
                Some(p) => ServerConfig::load(p).map_err(|e| anyhow!(e))?,
                None => ServerConfig::new("data"),
            };
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(segrate_api::serve(cfg))?;
        }
        Command::ValidateCatalog { path } => {
            let c = match path {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    Catalog::from_json(&text)?
                }
                None => Catalog::default_catalog(),
            };
            println!("catalog {}: {} tasks OK", c.version(), c.tasks().count());
        }
        Command::ImportVideos {
            data,
            jsonl,
            names,
            fps,
            resolution,
        } => {
            let mut lib = VideoLibrary::open(&data.data_dir)?;
            let n = match (jsonl, names) {
                (Some(p), None) => lib.import_jsonl(&fs::read_to_string(&p)?)?,
                (None, Some(p)) => {
                    let text = fs::read_to_string(&p)?;
                    let names: Vec<&str> = text
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .collect();
                    lib.import_filenames(&names, fps, &resolution)?
                }
                _ => bail!("give exactly one of --jsonl or --names"),
            };
            let mut desk = RatingDesk::open(&data.data_dir, catalog(), RatingForm::default(), 2)?;
            for v in lib.all() {
                desk.register_video(v.key())?;
            }
            println!(
                "{}",
                serde_json::json!({ "imported": n, "library_size": lib.len() })
            );
        }
        Command::ImportFlat {
            data,
            csv,
            actor,
            base_ms,
        } => {
            let file =
                fs::File::open(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let rows = read_flat_csv(file)?;
            let store = open_store(&data.data_dir)?;
            let n = store.import_flat(&rows, &actor, base_ms.map_or(DEFAULT_START, Millis))?;
            println!("{}", serde_json::json!({ "rows": rows.len(), "events": n }));
        }
        Command::ExportFlat { data, filter, out } => {
            let store = open_store(&data.data_dir)?;
            let mut buf = Vec::new();
            write_flat_csv(&store.export_flat(&filter.filter()), &mut buf)?;
            write_output(out.as_deref(), &buf)?;
        }
        Command::ExportAnalytics {
            data,
            filter,
            out,
            batch_size,
        } => {
            if batch_size == 0 {
                bail!("--batch-size must be positive");
            }
            let store = open_store(&data.data_dir)?;
            let events = store.list_events(&filter.filter());
            let report = AnalyticsReport::compute(&events, store.catalog(), batch_size);
            let files = report.write_dir(&out)?;
            println!(
                "{}",
                serde_json::json!({ "events": events.len(), "files": files })
            );
        }
        Command::Simulate {
            profile,
            actors,
            segments,
            seed,
            targets,
            data_dir,
            out,
        } => {
            let profile = match profile {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => SimulationProfile {
                    switch_targets: targets,
                    ..SimulationProfile::new(actors, segments, seed)
                },
            };
            let events = simulate(&profile, &catalog())?;
            match data_dir {
                Some(dir) => {
                    let n = events.len();
                    open_store(&dir)?.append_batch(events)?;
                    println!("{}", serde_json::json!({ "events": n }));
                }
                None => {
                    let mut buf = Vec::new();
                    for e in &events {
                        serde_json::to_writer(&mut buf, e)?;
                        buf.push(b'\n');
                    }
                    write_output(out.as_deref(), &buf)?;
                }
            }
        }
        Command::Progress { data } => {
            let desk = RatingDesk::open(&data.data_dir, catalog(), RatingForm::default(), 2)?;
            println!("{}", serde_json::to_string(&desk.progress())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("{}", serde_json::json!({ "error": chain.join(": ") }));
            ExitCode::FAILURE
        }
    }
}
