use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use glanceseg::eval::GazeSimParams;
use glanceseg::synth::SynthSpec;
use glanceseg::Pipeline;
use glanceseg_cli::commands::{self, EvalOptions};
use glanceseg_cli::{adapter, service};

#[derive(Parser)]
#[command(name = "glanceseg", version, about = "Gaze-guided microaneurysm segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on one image and its gaze trace.
    Run {
        image: PathBuf,
        gaze: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// `baseline` or `external:<endpoint>`.
        #[arg(long, default_value = "baseline")]
        backend: String,
        /// Also dump intermediate maps as 16-bit PNGs.
        #[arg(long)]
        debug: bool,
    },
    /// Evaluate a dataset directory (images/, gaze/, masks/).
    Eval {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "eval_out")]
        out: PathBuf,
        #[arg(long, default_value = "baseline")]
        backend: String,
        /// Dense grid vs saliency prompts vs saliency prompts with the filter.
        #[arg(long)]
        ablation: bool,
        /// Comma-separated grid sizes, e.g. 50,100,200.
        #[arg(long, value_delimiter = ',')]
        n_sweep: Vec<u32>,
        /// Prompt every grid point of each ROI during the sweep.
        #[arg(long)]
        full_coverage: bool,
        /// Timed runs per image and grid size; the fastest is kept.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Write a synthetic dataset with simulated gaze.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        lesions: usize,
        #[arg(long, default_value_t = 512)]
        size: u32,
        /// Standard deviation of fixation placement around each lesion.
        #[arg(long, default_value_t = 25.0)]
        jitter: f64,
    },
    /// Serve the HTTP session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "baseline")]
        backend: String,
        /// Journal sessions here and restore them on start.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Expose the baseline segmenter through the adapter protocol.
    Adapter {
        /// Framed messages on stdin/stdout.
        #[arg(long, conflicts_with = "http")]
        stdio: bool,
        /// Listen for `POST /` on this address.
        #[arg(long)]
        http: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn pipeline(config: Option<&PathBuf>, backend: &str) -> Result<Pipeline> {
    let config = commands::load_config(config.map(PathBuf::as_path))?;
    let backend = commands::make_backend(backend, &config)?;
    Ok(Pipeline::new(config, backend)?)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            image,
            gaze,
            config,
            out,
            backend,
            debug,
        } => {
            let p = pipeline(config.as_ref(), &backend)?;
            let s = commands::run_image(&image, &gaze, &p, &out, debug)?;
            println!(
                "{}: {} accepted of {} candidates from {} prompts in {} ROIs ({:.1} ms); results in {}",
                image.display(),
                s.accepted,
                s.candidates,
                s.prompts,
                s.rois,
                s.timing.total_ms,
                out.display()
            );
        }
        Command::Eval {
            dataset,
            config,
            out,
            backend,
            ablation,
            n_sweep,
            full_coverage,
            repeats,
        } => {
            let p = pipeline(config.as_ref(), &backend)?;
            let opts = EvalOptions {
                ablation: ablation || n_sweep.is_empty(),
                n_sweep,
                full_coverage,
                repeats,
            };
            print!("{}", commands::evaluate(&dataset, &p, &opts, &out)?);
            println!("reports in {}", out.display());
        }
        Command::Synth {
            out,
            count,
            seed,
            lesions,
            size,
            jitter,
        } => {
            let spec = SynthSpec {
                seed,
                n_lesions: lesions,
                image_dims: (size, size),
                ..Default::default()
            };
            let gaze = GazeSimParams {
                jitter_sigma_px: jitter,
                ..Default::default()
            };
            let n = commands::synthesize(&out, count, &spec, &gaze)?;
            println!("wrote {n} images to {}", out.display());
        }
        Command::Serve {
            bind,
            config,
            backend,
            journal,
        } => {
            let p = pipeline(config.as_ref(), &backend)?;
            let state = service::AppState::new(Arc::new(p), service::ServiceOptions { journal });
            tokio::runtime::Runtime::new()?.block_on(service::serve(&bind, state))?;
        }
        Command::Adapter { stdio, http, config } => {
            let config = commands::load_config(config.as_deref())?;
            let backend = commands::make_backend("baseline", &config)?;
            match (stdio, http) {
                (true, _) => adapter::serve_stdio(backend)?,
                (false, Some(addr)) => tokio::runtime::Runtime::new()?.block_on(adapter::serve_http(&addr, backend))?,
                (false, None) => bail!("choose --stdio or --http <addr>"),
            }
        }
    }
    Ok(())
}
