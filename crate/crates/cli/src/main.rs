//! Command-line front end: single experiments, the full gain-by-predictor
//! study, kernel tuning, and report regeneration from stored artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use softsmith_core::controller::GainCondition;
use softsmith_core::harness::batch::Exclusion;
use softsmith_core::harness::logio::{read_summaries, write_run_log, write_summaries};
use softsmith_core::harness::metrics::summarize;
use softsmith_core::harness::report::{emit_report, write_plot_data, write_report};
use softsmith_core::harness::tune::{toml_fragment, tune};
use softsmith_core::harness::{
    batch_run, calibration_log, normalizer_for, run_experiment, BatchResult, Config,
};
use softsmith_core::predictor::PredictorVariant;

#[derive(Parser)]
#[command(
    name = "softsmith",
    version,
    about = "Delayed soft-arm tracking simulator: single runs, seed-swept studies, kernel tuning, reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML configuration; the built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Config> {
        let cfg = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one experiment and write its per-tick log.
    Run {
        /// Predictor arm: ldn3, hist3, hist7, or nopred.
        #[arg(long)]
        variant: String,
        /// Gain condition: low, med, or high.
        #[arg(long)]
        gain: String,
        /// Experiment seed; fixes noise and model-mismatch draws.
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for the run log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every predictor at every gain over consecutive seeds 1..=N.
    Batch {
        /// Seeds per cell.
        #[arg(long)]
        seeds: u64,
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for summaries, report, and plot data.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; SOFTSMITH_WORKERS or the core count when omitted.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Two-stage kernel search; writes the winning parameters as a config
    /// fragment.
    Tune {
        #[command(flatten)]
        config: ConfigArg,
        /// Path for the TOML fragment.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the report table from a directory written by `batch`.
    Report {
        /// Directory holding summaries.csv (and optionally exclusions.csv).
        #[arg(long = "in")]
        in_dir: PathBuf,
    },
}

/// Print without panicking when the reader closes the pipe early
/// (e.g. `softsmith batch ... | head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn emitln(text: &str) {
    emit(text);
    emit("\n");
}

fn exclusions_to_string(config_hash: &str, exclusions: &[Exclusion]) -> String {
    let mut s = format!("# config_hash={config_hash}\nvariant,gain,seed,reason\n");
    for e in exclusions {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.variant.as_str(),
            e.gain.as_str(),
            e.seed,
            e.reason
        ));
    }
    s
}

fn read_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("variant,") || line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (v, g, seed, reason) = (
            parts.next().context("missing variant")?,
            parts.next().context("missing gain")?,
            parts.next().context("missing seed")?,
            parts.next().unwrap_or(""),
        );
        out.push(Exclusion {
            variant: PredictorVariant::parse(v)?,
            gain: GainCondition::parse(g)?,
            seed: seed.parse().with_context(|| format!("bad seed '{seed}'"))?,
            reason: reason.to_string(),
        });
    }
    Ok(out)
}

fn cmd_run(
    variant: &str,
    gain: &str,
    seed: u64,
    config: &ConfigArg,
    out: &Path,
) -> Result<()> {
    let cfg = config.load()?;
    let variant = PredictorVariant::parse(variant)?;
    let gain = GainCondition::parse(gain)?;
    std::fs::create_dir_all(out)?;
    let norm = if variant.is_learning() {
        let calibration = calibration_log(&cfg)?;
        Some(normalizer_for(&cfg, variant, &calibration)?)
    } else {
        None
    };
    let log = run_experiment(&cfg, variant, gain, seed, norm.as_ref())?;
    let path = out.join(format!(
        "run_{}_{}_{:04}.csv",
        variant.as_str(),
        gain.as_str(),
        seed
    ));
    write_run_log(&log, &path)?;
    match &log.failure {
        Some(reason) => emitln(&format!(
            "run {}/{} seed {seed}: DIVERGED ({reason}); partial log at {}",
            variant.as_str(),
            gain.as_str(),
            path.display()
        )),
        None => {
            let s = summarize(&log, cfg.plant.delay_steps, cfg.protocol.transient_end)?;
            emitln(&format!(
                "run {}/{} seed {seed}: tracking stable {:.3} mm (transient {:.3}), \
                 modeling stable {:.3} mm; log at {}",
                variant.as_str(),
                gain.as_str(),
                s.track_stable_mm,
                s.track_transient_mm,
                s.model_stable_mm,
                path.display()
            ));
        }
    }
    Ok(())
}

fn cmd_batch(seeds: u64, config: &ConfigArg, out: &Path, workers: Option<usize>) -> Result<()> {
    let cfg = config.load()?;
    std::fs::create_dir_all(out)?;
    let result = batch_run(
        &cfg,
        &PredictorVariant::ALL,
        &GainCondition::ALL,
        seeds,
        workers,
    )?;
    write_summaries(&result.config_hash, &result.summaries, &out.join("summaries.csv"))?;
    std::fs::write(
        out.join("exclusions.csv"),
        exclusions_to_string(&result.config_hash, &result.exclusions),
    )?;
    write_report(&result, &out.join("report.txt"))?;
    write_plot_data(&result, &out.join("plot_data.csv"))?;
    emit(&emit_report(&result));
    emitln(&format!("artifacts in {}", out.display()));
    Ok(())
}

fn cmd_tune(config: &ConfigArg, out: &Path) -> Result<()> {
    let cfg = config.load()?;
    let report = tune(&cfg, true)?;
    emitln("stage 1 leaderboard (offline planar RMS, m):");
    for (p, score) in report.ranked_offline.iter().take(5) {
        emitln(&format!(
            "  sigma2={:<10.3e} noise_var={:<10.3e} lambda={:<8} rms={score:.6}",
            p.sigma2, p.noise_var, p.lambda
        ));
    }
    if let Some((p, score)) = &report.refined {
        emitln(&format!(
            "stage 2 winner: sigma2={:.3e} noise_var={:.3e} lambda={} \
             (online score {score:.3} mm)",
            p.sigma2, p.noise_var, p.lambda
        ));
    }
    let fragment = toml_fragment(&report.best);
    std::fs::write(out, &fragment)?;
    emitln(&format!("fragment written to {}", out.display()));
    Ok(())
}

fn cmd_report(in_dir: &Path) -> Result<()> {
    let (config_hash, summaries) = read_summaries(&in_dir.join("summaries.csv"))?;
    let exclusions = read_exclusions(&in_dir.join("exclusions.csv"))?;
    let result = BatchResult {
        config_hash,
        scheduled: summaries.len() + exclusions.len(),
        summaries,
        exclusions,
        mean_xy_error_mm: BTreeMap::new(),
    };
    let text = emit_report(&result);
    std::fs::write(in_dir.join("report.txt"), &text)?;
    emit(&text);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run {
            variant,
            gain,
            seed,
            config,
            out,
        } => cmd_run(variant, gain, *seed, config, out),
        Command::Batch {
            seeds,
            config,
            out,
            workers,
        } => cmd_batch(*seeds, config, out, *workers),
        Command::Tune { config, out } => cmd_tune(config, out),
        Command::Report { in_dir } => cmd_report(in_dir),
    }
}
