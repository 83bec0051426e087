use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pixmood::config::{RunConfig, TagMode};
use pixmood::manifest::{ingest, Dataset, ImageKind};
use pixmood::table::{self, write_csv};
use pixmood::tags::{self, HttpTransport, TagCache, ThreadSleeper};
use pixmood::{cluster, correlate, extract, predict, report, PipelineError, Result};

#[derive(Parser)]
#[command(name = "pixmood", version, about = "Image features, tag clusters, outcome correlations and prediction")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "pixmood.toml")]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the manifest and log exclusions.
    Ingest,
    /// Fill or import the tag cache.
    Tags {
        #[command(subcommand)]
        action: TagsAction,
    },
    /// Per-image and per-user features.
    Extract,
    /// Tag clusters and per-user cluster weights.
    Cluster,
    /// Partial correlations of every feature with every outcome.
    Correlate {
        /// Plain correlations, no controls.
        #[arg(long)]
        no_controls: bool,
    },
    /// Cross-validated single- and multi-task prediction.
    Predict,
    /// Summarize outputs into report.md.
    Report,
}

#[derive(Subcommand)]
enum TagsAction {
    /// Tag the posted images of included users, from the fixture or the live service.
    Fetch {
        /// Replace existing cache entries.
        #[arg(long)]
        force: bool,
    },
    /// Copy a JSON-lines tag file into the cache.
    Import {
        file: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn load(cli: &Cli) -> Result<(RunConfig, Dataset)> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dataset = ingest(&cfg.manifest, cfg.min_images)?;
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| PipelineError::io(&cli.out_dir, e))?;
    Ok((cfg, dataset))
}

fn fetch(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path, force: bool) -> Result<()> {
    let mut cache = TagCache::open(&out_dir.join(table::TAG_CACHE))?;
    let posted: Vec<_> = dataset
        .included_images()
        .into_iter()
        .filter(|i| i.kind == ImageKind::Posted)
        .collect();
    let stats = match cfg.tagging.mode {
        TagMode::Fixture => {
            let fixture = match &cfg.tagging.fixture {
                Some(path) => tags::load_fixture(path)?,
                None => BTreeMap::new(),
            };
            let ids: Vec<&str> = posted.iter().map(|i| i.image_id.as_str()).collect();
            tags::fetch_from_fixture(&mut cache, &ids, &fixture, force)?
        }
        TagMode::Live => {
            let with_files: Vec<(&str, &Path)> = posted
                .iter()
                .filter_map(|i| match &i.path {
                    Some(p) => Some((i.image_id.as_str(), p.as_path())),
                    None => {
                        log::warn!("image `{}` has no raster to send; skipped", i.image_id);
                        None
                    }
                })
                .collect();
            let mut transport = HttpTransport::from_env(&cfg.tagging)?;
            tags::fetch_live(&mut cache, &with_files, &mut transport, &mut ThreadSleeper, &cfg.tagging, force)?
        }
    };
    cache.save()?;
    write_csv(
        &out_dir.join(table::TAG_MISSING),
        &["image_id".to_string()],
        stats.missing.iter().map(|id| vec![id.clone()]),
    )?;
    println!(
        "tags: {} requested, {} cached, {} stored, {} live calls, {} missing",
        stats.requested,
        stats.already_cached,
        stats.stored,
        stats.live_calls,
        stats.missing.len()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, dataset) = load(cli)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Ingest => {
            extract::write_exclusions(&dataset, out)?;
            println!(
                "{}: {} users ({} excluded), {} images, {} precomputed blocks",
                dataset.name,
                dataset.users.len(),
                dataset.exclusions.len(),
                dataset.images.len(),
                dataset.blocks.len()
            );
        }
        Command::Tags { action } => match action {
            TagsAction::Fetch { force } => fetch(&cfg, &dataset, out, *force)?,
            TagsAction::Import { file, force } => {
                let mut cache = TagCache::open(&out.join(table::TAG_CACHE))?;
                let stats = tags::import_fixture(&mut cache, &tags::load_fixture(file)?, *force);
                cache.save()?;
                println!("tags: {} imported, {} already cached", stats.stored, stats.already_cached);
            }
        },
        Command::Extract => {
            let s = extract::run_extract(&cfg, &dataset, out)?;
            println!("extract: {} images, {} users, {} excluded", s.images, s.users, s.excluded);
        }
        Command::Cluster => {
            let c = cluster::run_cluster(&cfg, &dataset, out)?;
            println!("cluster: {} tags into {} clusters from {} tag bags", c.vocab.len(), c.k, c.n_bags);
        }
        Command::Correlate { no_controls } => {
            let results = correlate::run_correlate(&cfg, &dataset, out, *no_controls)?;
            let hits = results.iter().filter(|r| r.significant).count();
            println!("correlate: {} tests, {hits} significant at q={}", results.len(), cfg.significance);
        }
        Command::Predict => {
            let p = predict::run_predict(&cfg, &dataset, out)?;
            println!("predict: feature sets {} plus combination", p.set_names.join(", "));
        }
        Command::Report => {
            print!("{}", report::run_report(&dataset.name, out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
