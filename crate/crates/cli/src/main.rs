//! fral: run fair robust active learning experiments, then compare and
//! plot the persisted results.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error.

use clap::{Parser, Subcommand};
use fral_core::experiment::{
    apply_override, from_document, parse_document, ExperimentConfig, ExperimentError,
    InitContext, RoundContext, RunObserver,
};
use fral_core::results::{build_report, load_summary, plot, PlotKind, ResultsStore};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Root directory for auto-named run directories when `--out` is omitted.
const RESULTS_ROOT_VAR: &str = "FRAL_RESULTS_DIR";

#[derive(Parser)]
#[command(name = "fral", version, about = "Fair robust active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Dotted-path override, e.g. `strategy=RAND` or `train.epochs=10`.
        /// Repeatable; applied in order before validation.
        #[arg(long = "override", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Run directory to create. Defaults to an auto-named directory
        /// under $FRAL_RESULTS_DIR (or ./results).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate finished runs into a comparison table.
    Report {
        /// Run directories containing summary.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Emit JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Render SVG plots from a run directory.
    Plot {
        /// Run directory.
        run: PathBuf,
        /// metric-curves, label-distribution, or per-class-bars.
        /// Repeatable; all kinds when omitted.
        #[arg(long, value_name = "KIND")]
        kind: Vec<PlotKind>,
    },
    /// Parse and validate a config without running anything.
    ValidateConfig {
        /// Experiment config (TOML).
        config: PathBuf,
        #[arg(long = "override", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                ExperimentError::InvalidConfig(_)
                | ExperimentError::Parse(_)
                | ExperimentError::Override { .. } => 2,
                _ => 3,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run {
            config,
            overrides,
            out,
        } => cmd_run(&config, &overrides, out),
        Command::Report { runs, json } => cmd_report(&runs, json),
        Command::Plot { run, kind } => cmd_plot(&run, &kind),
        Command::ValidateConfig { config, overrides } => {
            let (_, cfg) = load_config(&config, &overrides)?;
            println!(
                "ok: dataset={} strategy={} rounds={} seed={}",
                cfg.dataset.describe(),
                cfg.strategy.as_str(),
                cfg.rounds,
                cfg.seed
            );
            Ok(())
        }
    }
}

/// Read, override, and validate a config. Returns the original text (the
/// run directory keeps a byte-identical copy) and the effective config.
fn load_config(
    path: &Path,
    overrides: &[String],
) -> Result<(String, ExperimentConfig), ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::InvalidConfig(format!("{}: {e}", path.display())))?;
    let mut doc = parse_document(&text)?;
    for spec in overrides {
        apply_override(&mut doc, spec)?;
    }
    let cfg = from_document(doc)?;
    Ok((text, cfg))
}

fn run_dir_for(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(RESULTS_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    let slug: String = cfg
        .dataset
        .describe()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    root.join(format!(
        "{slug}_{}_seed{}",
        cfg.strategy.as_str().to_lowercase(),
        cfg.seed
    ))
}

/// Persists through the store and echoes one progress line per round.
struct Progress {
    store: ResultsStore,
    rounds: u32,
}

impl RunObserver for Progress {
    fn on_init(&mut self, ctx: &InitContext) -> Result<(), ExperimentError> {
        self.store.on_init(ctx)?;
        eprintln!(
            "init: labeled={} test worst std={:.4} rob={:.4}",
            ctx.report.labeled,
            ctx.report.test.worst_standard,
            ctx.report.test.worst_robust.unwrap_or(f64::NAN)
        );
        Ok(())
    }

    fn on_round(&mut self, ctx: &RoundContext) -> Result<(), ExperimentError> {
        self.store.on_round(ctx)?;
        let r = ctx.report;
        eprintln!(
            "round {}/{}: worst group {} acquired {} labeled={} test worst std={:.4} rob={:.4}",
            r.round,
            self.rounds,
            r.worst_group,
            r.selected.len(),
            r.labeled_after,
            r.after_test.worst_standard,
            r.after_test.worst_robust.unwrap_or(f64::NAN)
        );
        Ok(())
    }
}

fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
) -> Result<(), ExperimentError> {
    let (text, cfg) = load_config(config_path, overrides)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let bundle = cfg.load_dataset(base)?;

    let dir = out.unwrap_or_else(|| run_dir_for(&cfg));
    let store = ResultsStore::create(&dir, &text, &cfg)?;
    let mut observer = Progress {
        store,
        rounds: cfg.rounds,
    };

    let result = fral_core::experiment::run_fral(&cfg, &bundle, &mut observer)?;
    observer.store.finalize(&cfg, &result)?;

    let last = result.rounds.last().expect("at least one round");
    println!("results: {}", dir.display());
    println!(
        "labeled {} -> {}; final test worst-group standard {:.4} robust {:.4}",
        result.init.labeled,
        last.labeled_after,
        last.after_test.worst_standard,
        last.after_test.worst_robust.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_report(runs: &[PathBuf], json: bool) -> Result<(), ExperimentError> {
    let summaries = runs
        .iter()
        .map(|dir| load_summary(dir))
        .collect::<Result<Vec<_>, _>>()?;
    let report = build_report(&summaries)?;
    if json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cmd_plot(run: &Path, kinds: &[PlotKind]) -> Result<(), ExperimentError> {
    let kinds: Vec<PlotKind> = if kinds.is_empty() {
        PlotKind::all().to_vec()
    } else {
        kinds.to_vec()
    };
    for kind in kinds {
        let path = plot(run, kind)?;
        println!("{}", path.display());
    }
    Ok(())
}
