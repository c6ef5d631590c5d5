use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::warn;

use clipforge_core::detector::{open_session, stub_detector, Detector, StubSpec};
use clipforge_core::error::Error;
use clipforge_core::experiments::{
    analyze_scaling, read_results, sample_stratified, sample_subsets, write_scaling, write_subsets, ExperimentPlan,
};
use clipforge_core::hashtags::{curate, read_hashtag_list, read_synonym_map, write_hashtag_list};
use clipforge_core::ingest::{HttpSource, RateLimiter};
use clipforge_core::manifest::{read_manifest, write_manifest};
use clipforge_core::pipeline::{self, manifest_dir, rebase_media_paths, DetectorFactory};
use clipforge_core::stats::DurationMode;
use clipforge_core::{PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "clipforge", version, about = "Curate short-form videos into an action-recognition pre-training corpus")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads per stage (default: number of cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List hashtags on the source API and download permitted media.
    Ingest(IngestArgs),
    /// Apply the view floor and synonym consolidation to a hashtag list.
    CurateTags(CurateArgs),
    /// Detect scenes in every downloaded video.
    Scan(StageArgs),
    /// Sample frames from the longest scene and run the person detector.
    Filter(FilterArgs),
    /// Apply the duration policy and write one record per video.
    Trim(StageArgs),
    /// Write corpus statistics and plot data.
    Stats(StatsArgs),
    /// Draw seeded subset manifests for scaling experiments.
    Sample(SampleArgs),
    /// Analyze a `size,run_id,top1,top5` results file.
    Analyze(AnalyzeArgs),
    /// ingest, scan, filter, trim and stats in one go.
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct IoArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long = "out", value_name = "PATH")]
    output: PathBuf,
}

#[derive(Args)]
struct SourceArgs {
    /// Base URL of the source API; the bearer token is read from CLIPFORGE_API_TOKEN.
    #[arg(long, value_name = "URL")]
    api_url: String,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DetectorArgs {
    /// Detector backend command line, spoken to over stdin/stdout.
    #[arg(long, value_name = "TEMPLATE")]
    detector_cmd: Option<String>,
    /// Scripted detections (JSON) instead of a backend process.
    #[arg(long, value_name = "SPEC")]
    stub_detector: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// `--in`: hashtag list CSV; `--out`: manifest path (media go next to it).
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct CurateArgs {
    #[command(flatten)]
    io: IoArgs,
    /// `tag,canonical_action` CSV; defaults to the list's own canonical_action column.
    #[arg(long, value_name = "PATH")]
    synonyms: Option<PathBuf>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct StatsArgs {
    /// `--out` is a directory receiving the report files and `final.manifest`.
    #[command(flatten)]
    io: IoArgs,
    /// Which duration the histogram uses.
    #[arg(long, default_value = "post_trim", value_name = "MODE")]
    mode: DurationMode,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 3000, 4000, 5000, 6000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    runs: u32,
    /// Draw one stratified subset of this many clips instead.
    #[arg(long, requires = "hashtags")]
    clips: Option<usize>,
    /// Number of hashtags for the stratified subset.
    #[arg(long, requires = "clips")]
    hashtags: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct RunAllArgs {
    /// `--in`: hashtag list CSV; `--out`: run directory.
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    detector: DetectorArgs,
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Io { .. } | Error::Media { .. } | Error::Source(_) => 2,
        Error::Detector(_) => 3,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn source(args: &SourceArgs, config: &PipelineConfig) -> Result<HttpSource> {
    let limiter = RateLimiter::new(config.rate_capacity, config.rate_per_s)?;
    Ok(HttpSource::from_env(&args.api_url, Arc::new(limiter)))
}

fn detector_factory(args: &DetectorArgs, config: &PipelineConfig) -> Result<Box<DetectorFactory<'static>>> {
    if let Some(path) = &args.stub_detector {
        let spec = StubSpec::load(path)?;
        return Ok(Box::new(move || Ok(Box::new(stub_detector(spec.clone())) as Box<dyn Detector>)));
    }
    let cmd = args.detector_cmd.clone().expect("clap enforces one detector flag");
    let timeout = Duration::from_secs_f64(config.detector_timeout_s);
    Ok(Box::new(move || Ok(Box::new(open_session(&cmd, timeout)?) as Box<dyn Detector>)))
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = manifest_dir(path);
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))
}

/// Reads a manifest and rebases its media paths onto the output's directory.
fn read_for(input: &Path, output: &Path) -> Result<clipforge_core::DatasetManifest> {
    ensure_parent(output)?;
    let mut m = read_manifest(input)?;
    rebase_media_paths(&mut m, &manifest_dir(input), &manifest_dir(output));
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let workers = cli.workers.unwrap_or_else(pipeline::default_workers).max(1);
    match cli.command {
        Command::Ingest(a) => {
            let tags = read_hashtag_list(&a.io.input)?;
            let client = source(&a.source, &config)?;
            ensure_parent(&a.io.output)?;
            let m = pipeline::ingest(&client, &tags, &manifest_dir(&a.io.output), &config, workers)?;
            write_manifest(&m, &a.io.output)
        }
        Command::CurateTags(a) => {
            let specs = read_hashtag_list(&a.io.input)?;
            let synonyms = match &a.synonyms {
                Some(p) => read_synonym_map(p)?,
                None => specs.iter().map(|s| (s.tag.clone(), s.canonical_action.clone())).collect(),
            };
            let (kept, warnings) = curate(&specs, config.min_views, &synonyms);
            for w in &warnings {
                warn!("{w}");
            }
            ensure_parent(&a.io.output)?;
            write_hashtag_list(&kept, &a.io.output)?;
            println!("kept {} of {} hashtags", kept.len(), specs.len());
            Ok(())
        }
        Command::Scan(a) => {
            let m = read_for(&a.io.input, &a.io.output)?;
            let m = pipeline::scan(m, &manifest_dir(&a.io.output), &config, workers)?;
            write_manifest(&m, &a.io.output)
        }
        Command::Filter(a) => {
            let factory = detector_factory(&a.detector, &config)?;
            let m = read_for(&a.io.input, &a.io.output)?;
            let dir = manifest_dir(&a.io.output);
            let m = pipeline::filter(m, &dir, &dir, &config, workers, factory.as_ref())?;
            write_manifest(&m, &a.io.output)
        }
        Command::Trim(a) => {
            let m = read_for(&a.io.input, &a.io.output)?;
            let m = pipeline::trim(m, &config)?;
            write_manifest(&m, &a.io.output)
        }
        Command::Stats(a) => {
            let out = a.io.output.join(pipeline::FINAL_MANIFEST);
            let m = read_for(&a.io.input, &out)?;
            let m = pipeline::stats(m, &a.io.output, &config, a.mode)?;
            write_manifest(&m, &out)
        }
        Command::Sample(a) => {
            let m = read_manifest(&a.io.input)?;
            if let (Some(clips), Some(tags)) = (a.clips, a.hashtags) {
                let mut subset = sample_stratified(&m, clips, tags, a.seed)?;
                let path = a.io.output.join(format!("stratified_{clips}_{tags}.manifest"));
                ensure_parent(&path)?;
                rebase_media_paths(&mut subset, &manifest_dir(&a.io.input), &a.io.output);
                return write_manifest(&subset, &path);
            }
            let plan = ExperimentPlan {
                sizes: a.sizes,
                runs_per_size: a.runs,
                master_seed: a.seed,
            };
            let mut subsets = sample_subsets(&m, &plan)?;
            for s in &mut subsets {
                rebase_media_paths(&mut s.manifest, &manifest_dir(&a.io.input), &a.io.output);
            }
            let paths = write_subsets(&subsets, &a.io.output)?;
            println!("wrote {} subset manifests", paths.len());
            Ok(())
        }
        Command::Analyze(a) => {
            let analysis = analyze_scaling(&read_results(&a.io.input)?)?;
            ensure_parent(&a.io.output)?;
            write_scaling(&analysis, &a.io.output)?;
            match analysis.knee_size {
                Some(k) if analysis.diminishing => println!("diminishing returns after {k}"),
                _ => println!("no diminishing returns"),
            }
            Ok(())
        }
        Command::RunAll(a) => {
            let tags = read_hashtag_list(&a.io.input)?;
            let client = source(&a.source, &config)?;
            let factory = detector_factory(&a.detector, &config)?;
            let m = pipeline::run_all(&client, &tags, &a.io.output, &config, workers, factory.as_ref())?;
            println!(
                "{} videos, {} accepted clips",
                m.assets.len(),
                m.accepted_count()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
