mod logging;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use lforge_core::corpus::{build_corpus, Manifest};
use lforge_core::events::Event;
use lforge_core::multipliers::OptimizationMode;
use lforge_core::optim::GridScan;
use lforge_core::orchestrator::{
    load_records, CampaignConfig, CampaignOutcome, CancelToken, ConfigError, OptimizationRecord, ResultsStore,
};
use lforge_core::reporting::{
    export_contour, histogram, proxy_comparison, records_csv, summarize, summary_csv, ReportError,
};
use lforge_core::selftest::{self, SelftestOptions};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lforge", version, about = "Tune per-frame-type Lagrangian multipliers by BD-rate minimisation")]
struct Cli {
    /// Campaign config, TOML or JSON (not needed for selftest)
    #[arg(short, long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config value after the file and environment, e.g.
    /// `--set mode=KF` or `--set search.optimizer.max_iterations=1`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Search,
    Final,
}

#[derive(Subcommand)]
enum Command {
    /// Probe every clip's header and frame count, optionally SI/TI
    Scan {
        /// Also compute spatial and temporal information
        #[arg(long)]
        complexity: bool,
        /// Write JSON lines here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode the k = 1 reference curve of every clip
    Reference {
        #[arg(long, value_enum, default_value = "search")]
        profile: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search multipliers for every clip and mode; resumes from the store
    Optimize,
    /// Exhaustive 2-D scan per clip, exported as contour data
    Grid {
        /// Restrict to these clip ids
        #[arg(long)]
        clip: Vec<String>,
        /// Overlay the path of a Powell search on the same surface
        #[arg(long)]
        with_path: bool,
    },
    /// Rebuild report tables from the results store
    Report {
        /// Histogram bin width, percentage points
        #[arg(long, default_value_t = lforge_core::reporting::DEFAULT_BIN_WIDTH)]
        bin_width: f64,
    },
    /// Run the acceptance suite (synthetic backend and a mock encoder)
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        /// Run only these criteria (1-10)
        #[arg(long)]
        criterion: Vec<u8>,
        /// Keep the mock encoder's files here
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn load_config(cli: &Cli) -> Result<CampaignConfig> {
    let Some(path) = &cli.config else {
        usage_error(ErrorKind::MissingRequiredArgument, "--config <PATH> is required for this subcommand");
    };
    let cfg = match CampaignConfig::load(Some(path), |k| std::env::var(k).ok(), &cli.set) {
        Err(ConfigError::BadOverride(s)) => usage_error(ErrorKind::ValueValidation, format!("bad --set {s:?}: expected KEY=VALUE")),
        other => other.with_context(|| format!("loading {}", path.display()))?,
    };
    let config_path = path.to_string_lossy();
    Event {
        detail: Some(&config_path),
        ..Event::new("config_loaded")
    }
    .emit();
    for s in &cli.set {
        Event {
            detail: Some(s),
            ..Event::new("config_override")
        }
        .emit();
    }
    Ok(cfg)
}

fn cancel_on_interrupt() -> CancelToken {
    let token = CancelToken::new();
    let handler = token.clone();
    let installed = ctrlc::set_handler(move || {
        if handler.is_cancelled() {
            std::process::exit(130);
        }
        handler.cancel();
        eprintln!("interrupt: finishing in-flight encodes; press again to abort");
    });
    if let Err(e) = installed {
        log::warn!("no interrupt handler: {e}");
    }
    token
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(cli.verbose, cli.quiet);
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Selftest {
            seed,
            criterion,
            work_dir,
        } => run_selftest(*seed, criterion, work_dir.clone()),
        Command::Scan { complexity, out } => scan(&load_config(cli)?, *complexity, out.as_deref()),
        Command::Reference { profile, out } => reference(&load_config(cli)?, *profile, out.as_deref()),
        Command::Optimize => optimize(&load_config(cli)?),
        Command::Grid { clip, with_path } => grid(&load_config(cli)?, clip, *with_path),
        Command::Report { bin_width } => report(&load_config(cli)?, *bin_width),
    }
}

fn run_selftest(seed: Option<u64>, only: &[u8], work_dir: Option<PathBuf>) -> Result<ExitCode> {
    let options = SelftestOptions {
        seed: seed.unwrap_or(selftest::DEFAULT_SEED),
        work_dir,
    };
    let ids: Vec<u8> = if only.is_empty() {
        selftest::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        only.to_vec()
    };
    let mut failed = 0;
    for id in ids {
        let Some(o) = selftest::run_criterion(id, &options) else {
            usage_error(ErrorKind::InvalidValue, format!("no criterion {id}; expected 1-10"));
        };
        println!("{o}");
        failed += usize::from(!o.passed);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn scan(cfg: &CampaignConfig, complexity: bool, out: Option<&Path>) -> Result<ExitCode> {
    let manifest = Manifest { clips: cfg.clips()? };
    let mut w = output(out)?;
    let mut failed = 0;
    for r in build_corpus(&manifest, complexity) {
        match r {
            Ok(rec) => writeln!(w, "{}", serde_json::to_string(&rec)?)?,
            Err(e) => {
                failed += 1;
                eprintln!("error: {e}");
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn reference(cfg: &CampaignConfig, which: Which, out: Option<&Path>) -> Result<ExitCode> {
    let profile = match which {
        Which::Search => &cfg.search_profile,
        Which::Final => cfg.final_profile(),
    };
    let pipeline = cfg.pipeline(cancel_on_interrupt())?;
    let mut w = output(out)?;
    for clip in cfg.clips()? {
        let curve = pipeline.run_reference(&clip, profile)?;
        let line = serde_json::json!({
            "clip_id": clip.clip_id,
            "profile": profile.label,
            "measurements": curve.measurements,
        });
        writeln!(w, "{line}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_tables(records: &[OptimizationRecord], dir: &Path, bin_width: f64) -> Result<()> {
    write_file(&dir.join("records.csv"), &records_csv(records)?)?;
    match summarize(records) {
        Ok(s) => write_file(&dir.join("summary.csv"), &summary_csv(&s)?)?,
        Err(ReportError::EmptyInput) => log::warn!("no complete records; summary skipped"),
        Err(e) => return Err(e.into()),
    }
    match histogram(records, bin_width) {
        Ok(h) => write_file(&dir.join("histogram.csv"), &h.to_csv()?)?,
        Err(ReportError::EmptyInput) => log::warn!("no final BD-rates; histogram skipped"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn report_failures(outcome: &CampaignOutcome) -> usize {
    let mut n = 0;
    for r in outcome.failures() {
        n += 1;
        if let Some(f) = &r.failure {
            eprintln!("failed: clip {} mode {} in {:?} phase: {}", r.clip_id, r.mode, f.phase, f.message);
        }
    }
    n
}

fn optimize(cfg: &CampaignConfig) -> Result<ExitCode> {
    let pipeline = cfg.pipeline(cancel_on_interrupt())?;
    let clips = cfg.clips()?;
    let store = ResultsStore::open(cfg.store_path())
        .with_context(|| format!("opening results store {}", cfg.store_path().display()))?;
    let outcome = pipeline.run_campaign(&clips, &cfg.modes, &cfg.search_profile, cfg.final_profile(), Some(&store))?;
    write_tables(&outcome.records, &cfg.report_dir(), lforge_core::reporting::DEFAULT_BIN_WIDTH)?;
    let failed = report_failures(&outcome);
    println!(
        "optimized {}, reused {}, failed {}, encoder launches {}",
        outcome.optimized,
        outcome.skipped,
        failed,
        pipeline.backend().launches()
    );
    if outcome.cancelled {
        bail!("cancelled; finished pairs are in {}, rerun to resume", store.path().display());
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn grid(cfg: &CampaignConfig, only: &[String], with_path: bool) -> Result<ExitCode> {
    let pipeline = cfg.pipeline(cancel_on_interrupt())?;
    let clips: Vec<_> = cfg
        .clips()?
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.clip_id))
        .collect();
    if clips.is_empty() {
        bail!("no clip matches {only:?}");
    }
    let axes: Vec<Vec<f64>> = pipeline.settings().grid_axes.iter().map(|a| a.values()).collect();
    let dir = cfg.report_dir();
    let mut failed = 0;
    for clip in &clips {
        let out = pipeline.optimize_clip(clip, OptimizationMode::Grid2d, &cfg.search_profile, cfg.final_profile())?;
        let (Some(trace), None) = (out.trace, &out.record.failure) else {
            failed += 1;
            let msg = out.record.failure.map(|f| f.message).unwrap_or_default();
            eprintln!("failed: clip {}: {msg}", clip.clip_id);
            continue;
        };
        let path = if with_path {
            pipeline
                .optimize_clip(clip, OptimizationMode::PowellKfXGfArf, &cfg.search_profile, cfg.final_profile())?
                .trace
        } else {
            None
        };
        let scan = GridScan {
            axes: axes.clone(),
            trace,
        };
        let contour = export_contour(&scan, path.as_ref())?;
        let stem = format!("contour-{}", clip.clip_id);
        write_file(&dir.join(format!("{stem}.matrix.csv")), &contour.to_matrix_csv()?)?;
        write_file(&dir.join(format!("{stem}.long.csv")), &contour.to_long_csv()?)?;
        if with_path {
            write_file(&dir.join(format!("{stem}.path.csv")), &contour.path_csv()?)?;
        }
        println!(
            "{}: grid minimum {:.4}% at k = {:?}",
            clip.clip_id, scan.trace.best_cost, scan.trace.best_point
        );
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn report(cfg: &CampaignConfig, bin_width: f64) -> Result<ExitCode> {
    if !(bin_width > 0.0) {
        usage_error(ErrorKind::InvalidValue, "--bin-width must be positive");
    }
    let path = cfg.store_path();
    let records = load_records(&path).with_context(|| format!("reading {}", path.display()))?;
    let dir = cfg.report_dir();
    write_tables(&records, &dir, bin_width)?;
    match proxy_comparison(&records) {
        Ok(t) => write_file(&dir.join("proxy.csv"), &t.to_csv()?)?,
        Err(ReportError::MissingPairing(why)) => log::info!("proxy comparison skipped: {why}"),
        Err(e) => return Err(e.into()),
    }
    Ok(ExitCode::SUCCESS)
}
