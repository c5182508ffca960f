use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use spf_core::dsp::{istft, stft};
use spf_core::par;
use spf_core::perturb::WarpFactor;
use spf_core::pipeline::audio::{read_wav, write_wav};
use spf_core::pipeline::corpus::{claim_output_dir, ensure_stats};
use spf_core::pipeline::{
    ingest, plot_figure2, run_corpus, run_probes, CorpusManifest, Frontend, FrontendConfig,
    ProbeSource,
};
use spf_core::vocoder::monotonize;

#[derive(Parser)]
#[command(name = "spf", version, about = "Speech front end: pitch smoothing, VTLP, liftered envelopes, random resampling")]
struct Cli {
    /// Key-value configuration file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a directory of speaker folders and write a JSON manifest.
    Ingest {
        root: PathBuf,
        #[arg(long, default_value = "manifest.json")]
        out: PathBuf,
    },
    /// Compute per-speaker F0 statistics into `<out>/stats/`.
    Stats {
        manifest: PathBuf,
        #[arg(long, default_value = "spf_out")]
        out: PathBuf,
    },
    /// Build every encoder input tensor for a manifest.
    Inputs {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the config file and SPF_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-synthesize a WAV with its voiced F0 replaced by the mean.
    Monotonize {
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monotonize, warp the spectrogram by `alpha` and resynthesize with the
    /// monotonic signal's phase.
    Perturb {
        wav: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the four spectrogram panels and their metrics.
    PlotFig2 {
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property probes and write a JSON report.
    Probes {
        /// Use the built-in synthetic utterances (default when no manifest).
        #[arg(long)]
        synthetic: bool,
        #[arg(long, conflicts_with = "synthetic")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<FrontendConfig> {
    let mut cfg = match path {
        Some(p) => FrontendConfig::from_file(p)?,
        None => FrontendConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let m = CorpusManifest::load(path).with_context(|| format!("loading {}", path.display()))?;
    m.validate()?;
    Ok(m)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Command::Inputs { seed: Some(s), .. } = &cli.command {
        cfg.seed = *s;
    }
    let fe = Frontend::new(cfg)?;
    let sr = fe.config.frame().sample_rate;

    match cli.command {
        Command::Ingest { root, out } => {
            let m = ingest(&root, fe.config_hash())?;
            m.save(&out)?;
            info!(
                "{} utterances from {} speakers ({:.1} s), {} skipped -> {}",
                m.entries.len(),
                m.speakers().len(),
                m.total_duration_s(),
                m.skipped.len(),
                out.display()
            );
            for s in &m.skipped {
                warn!("skipped {}: {}", s.file_path.display(), s.reason);
            }
        }
        Command::Stats { manifest, out } => {
            let m = load_manifest(&manifest)?;
            std::fs::create_dir_all(&out)?;
            claim_output_dir(&out, &fe)?;
            let (store, failed) = ensure_stats(&m, &fe, &out)?;
            for (spk, s) in &store {
                println!(
                    "{spk}\tlog_f0_mean={:.4}\tlog_f0_std={:.4}\tframes={}",
                    s.log_f0_mean, s.log_f0_std, s.frame_count
                );
            }
            if !failed.is_empty() {
                for f in &failed {
                    warn!("{}: {}", f.utterance_id, f.error);
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Inputs { manifest, out, .. } => {
            let m = load_manifest(&manifest)?;
            let summary = run_corpus(&m, &fe, &out)?;
            println!(
                "processed {} resumed {} failed {} -> {}",
                summary.processed,
                summary.resumed,
                summary.failed.len(),
                summary.index_path.display()
            );
            if !summary.is_success() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Monotonize { wav, out } => {
            let x = read_wav(&wav, sr)?;
            let y = monotonize(&x, fe.vocoder())?;
            write_wav(&out, &y)?;
        }
        Command::Perturb { wav, alpha, out } => {
            let x = read_wav(&wav, sr)?;
            let p = fe.perturb(&x, WarpFactor::new(alpha)?)?;
            let phase = stft(&p.monotonic, fe.config.frame())?;
            let y = istft(&phase.with_magnitude(&p.spec)?)?;
            write_wav(&out, &y)?;
        }
        Command::PlotFig2 { wav, out } => {
            let x = read_wav(&wav, sr)?;
            let r = plot_figure2(&x, &fe, &out)?;
            println!("{}", serde_json::to_string_pretty(&r.metrics)?);
            if !r.metrics.passed() {
                warn!("figure checks did not all pass; see {}", r.metrics_path.display());
            }
        }
        Command::Probes {
            synthetic,
            manifest,
            report,
        } => {
            let m = manifest.as_deref().map(load_manifest).transpose()?;
            let source = match &m {
                Some(m) if !synthetic => ProbeSource::Manifest(m),
                _ => ProbeSource::Synthetic,
            };
            let r = par::with_threads(fe.config.threads, || run_probes(source, &fe))?;
            r.write(&report)?;
            for u in &r.utterances {
                println!(
                    "{}\t{}",
                    u.utterance_id,
                    if u.checks.all() { "ok" } else { "FAIL" }
                );
            }
            if !r.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
