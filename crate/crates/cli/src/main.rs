use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use contra_core::io;
use contra_core::pipeline::{Pipeline, Stage, StageSummary};
use contra_core::preprocess::{GroundMode, PreprocessParams};
use contra_core::synth::{self, SynthParams};
use contra_core::transfer::recover_labels;
use contra_core::{Config, ImageSize, PipelineError, Protocol};

/// Exit code for bad invocations and configuration.
const EXIT_USAGE: u8 = 1;
/// Exit code for missing or malformed data.
const EXIT_DATA: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "contra", version, about = "Find where supervised and flow-derived lidar motion labels disagree")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "contra.toml")]
    config: PathBuf,
    /// Range cutoff in meters.
    #[arg(long, global = true)]
    max_range: Option<f64>,
    /// Keep only points inside the camera view.
    #[arg(long, global = true, action = ArgAction::Set)]
    fov: Option<bool>,
    /// Ground handling: mask, ransac or off.
    #[arg(long, global = true, value_parser = parse_ground)]
    ground: Option<GroundMode>,
    /// Random downsampling budget per scan.
    #[arg(long, global = true)]
    downsample: Option<usize>,
    /// Seed for downsampling and RANSAC.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse supervised semantic and motion labels.
    Fuse,
    /// Derive motion labels from scene flow.
    Flowlabel,
    /// Classify points and extract contradiction clusters.
    Discrepancy,
    /// Lift 2D anomaly boxes onto the scans.
    Transfer,
    /// Write anomaly-sensitivity reports.
    Eval {
        /// table1 (all points) or table2 (points labeled by both); both when omitted.
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Run every stage in order.
    All,
    /// Copy labels from an accumulated cloud onto a raw scan by nearest neighbor.
    Recover {
        #[arg(long)]
        accumulated: PathBuf,
        /// Semantic label file aligned with the accumulated cloud.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        raw: PathBuf,
        /// Output label file; unmatched points get label 0.
        #[arg(long = "labels-out")]
        labels_out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        max_dist: f64,
    },
    /// Write the synthetic test sequence.
    Fixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long = "fixture-seed", default_value_t = 7)]
        fixture_seed: u64,
        #[arg(long, default_value = "seq00")]
        name: String,
    },
    /// Serve the review API over a pipeline output directory.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Pipeline output directory.
        #[arg(long)]
        data_root: PathBuf,
        /// Verdict log (JSON lines); defaults to verdicts.jsonl in the data root.
        #[arg(long)]
        verdict_log: Option<PathBuf>,
    },
}

fn parse_ground(s: &str) -> Result<GroundMode, String> {
    match s {
        "mask" => Ok(GroundMode::Mask),
        "ransac" => Ok(GroundMode::Ransac),
        "off" => Ok(GroundMode::Off),
        _ => Err(format!("expected mask, ransac or off, got {s:?}")),
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<contra_core::IngestError> for Failure {
    fn from(e: contra_core::IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    if !cli.config.is_file() {
        return Err(Failure::Usage(format!("config file {} not found", cli.config.display())));
    }
    let mut cfg = Config::load(&cli.config)?;
    if let Some(v) = cli.max_range {
        cfg.preprocess.max_range_m = v;
    }
    if let Some(v) = cli.fov {
        cfg.preprocess.fov = v;
    }
    if let Some(v) = cli.ground {
        cfg.preprocess.ground = v;
    }
    if let Some(v) = cli.downsample {
        cfg.preprocess.downsample = Some(v);
    }
    if let Some(v) = cli.seed {
        cfg.preprocess.seed = v;
        cfg.preprocess.ransac.seed = v;
    }
    if let Some(v) = cli.jobs {
        cfg.run.jobs = v;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn report(s: &StageSummary, out: &Path) {
    println!(
        "{}: {} frames, {} files written to {}",
        s.stage.name(),
        s.frames,
        s.outputs.len(),
        out.display()
    );
}

fn run_stages(cli: &Cli, stages: &[Stage], protocol: Option<Protocol>) -> Result<(), Failure> {
    let mut cfg = load_config(cli)?;
    if let Some(p) = protocol {
        cfg.eval.protocols = vec![p];
    }
    let pipeline = Pipeline::new(cfg)?;
    for &stage in stages {
        let summary = pipeline.run(stage)?;
        report(&summary, &pipeline.output.dir);
    }
    Ok(())
}

fn recover(accumulated: &Path, labels: &Path, raw: &Path, out: &Path, max_dist: f64) -> Result<(), Failure> {
    if !(max_dist >= 0.0) {
        return Err(Failure::Usage("--max-dist must be non-negative".into()));
    }
    let acc = io::read_scan(accumulated)?;
    let acc_labels = io::read_semantic_labels(labels, acc.len())?;
    let raw_cloud = io::read_scan(raw)?;
    let raw_values = acc_labels.to_raw();
    let rec = recover_labels(&acc, &raw_values, &raw_cloud, max_dist).map_err(|e| Failure::Data(e.to_string()))?;
    let recovered = io::SemanticLabels::from_raw(&rec.labels.iter().map(|l| l.unwrap_or(0)).collect::<Vec<_>>());
    io::write_labels(out, &recovered)?;
    let unmatched = rec.unmatched.iter().filter(|u| **u).count();
    println!(
        "recover: {} points, {unmatched} without a neighbor within {max_dist} m, written to {}",
        raw_cloud.len(),
        out.display()
    );
    Ok(())
}

fn fixture(dir: &Path, frames: usize, seed: u64, name: &str) -> Result<(), Failure> {
    if frames < 2 {
        return Err(Failure::Usage("--frames must be at least 2".into()));
    }
    let params = SynthParams {
        frames,
        seed,
        ..SynthParams::default()
    };
    let seq = synth::generate(&params, &PreprocessParams::default(), ImageSize::KITTI)
        .map_err(|e| Failure::Data(e.to_string()))?;
    synth::write_dataset(dir, &seq, name)?;
    println!("fixture: {frames} frames written to {}", dir.display());
    Ok(())
}

fn serve(port: u16, data_root: &Path, verdict_log: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = contra_server::ServerConfig {
        data_root: data_root.to_path_buf(),
        verdict_log: verdict_log.unwrap_or_else(|| data_root.join("verdicts.jsonl")),
    };
    let state = contra_server::AppState::load(&cfg).map_err(|e| Failure::Data(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| Failure::Usage(format!("cannot bind port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::Data(e.to_string()))?;
        println!("serving {} on http://{addr}", data_root.display());
        contra_server::serve(listener, state)
            .await
            .map_err(|e| Failure::Data(e.to_string()))
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fuse => run_stages(cli, &[Stage::Fuse], None),
        Command::Flowlabel => run_stages(cli, &[Stage::FlowLabel], None),
        Command::Discrepancy => run_stages(cli, &[Stage::Discrepancy], None),
        Command::Transfer => run_stages(cli, &[Stage::Transfer], None),
        Command::Eval { protocol } => run_stages(cli, &[Stage::Eval], *protocol),
        Command::All => run_stages(cli, &Stage::ALL, None),
        Command::Recover {
            accumulated,
            labels,
            raw,
            labels_out,
            max_dist,
        } => recover(accumulated, labels, raw, labels_out, *max_dist),
        Command::Fixture {
            dir,
            frames,
            fixture_seed,
            name,
        } => fixture(dir, *frames, *fixture_seed, name),
        Command::Serve {
            port,
            data_root,
            verdict_log,
        } => serve(*port, data_root, verdict_log.clone()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
