use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use cosm_core::adl;
use cosm_core::ecampus;
use cosm_core::metrics::CostModel;

use cosm_harness::engine::{
    compare, default_joinpoints, run_daop, run_repeats, EngineKind, RunReport,
};
use cosm_harness::repl::run_repl;
use cosm_harness::report::{csv_repeat_report, csv_report, human_stats, human_table};
use cosm_harness::scenario::{load_scenario, Mode};
use cosm_harness::known_entities;

#[derive(Parser)]
#[command(
    name = "cosm",
    about = "Run scripted context scenarios through the adaptation middleware"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario against an architecture document.
    Run {
        /// Architecture document (XML).
        #[arg(long)]
        adl: PathBuf,
        /// Scenario timeline (text).
        #[arg(long)]
        scenario: PathBuf,
        /// Engine to drive; overrides the scenario's @mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Number of seeded repetitions; overrides @repeat.
        #[arg(long)]
        repeat: Option<u32>,
        /// Seed for the repetition jitter; overrides @seed.
        #[arg(long)]
        seed: Option<u64>,
        /// TOML file overriding unit prices.
        #[arg(long)]
        cost_model: Option<PathBuf>,
        /// Write the machine-readable CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the fixture's battery thresholds, `high,low`.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Interactive loop over the built-in fixture.
    Repl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cosm,
    Daop,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Cosm => Mode::Cosm,
            ModeArg::Daop => Mode::Daop,
            ModeArg::Both => Mode::Both,
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { adl, scenario, mode, repeat, seed, cost_model, out, thresholds } => run(
            &adl,
            &scenario,
            mode.map(Mode::from),
            repeat,
            seed,
            cost_model.as_deref(),
            out.as_deref(),
            thresholds.as_deref(),
        ),
        Command::Repl => {
            let stdin = io::stdin();
            run_repl(stdin.lock(), io::stdout())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    adl_path: &Path,
    scenario_path: &Path,
    mode_flag: Option<Mode>,
    repeat_flag: Option<u32>,
    seed_flag: Option<u64>,
    cost_model_path: Option<&Path>,
    out: Option<&Path>,
    thresholds: Option<&str>,
) -> anyhow::Result<()> {
    let model = match cost_model_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read cost model {}", path.display()))?;
            let model: CostModel = toml::from_str(&text)
                .with_context(|| format!("bad cost model {}", path.display()))?;
            model.validate()?;
            model
        }
        None => CostModel::default(),
    };

    let adl_text = fs::read_to_string(adl_path)
        .with_context(|| format!("cannot read architecture {}", adl_path.display()))?;
    let mut doc = adl::parse(&adl_text)
        .with_context(|| format!("bad architecture {}", adl_path.display()))?;

    if let Some(spec) = thresholds {
        apply_thresholds(&mut doc, spec)?;
    }

    // The harness always animates the campus fixture's components; the
    // document decides which of them exist, how they bind, and the policies.
    let fixture = ecampus::fixture();
    let seeds = fixture.entities;
    let known: BTreeSet<String> = known_entities(&doc, &seeds);
    let scenario = load_scenario(scenario_path, &known)?;

    let mode = mode_flag.or(scenario.mode).unwrap_or(Mode::Cosm);
    let repeat = repeat_flag.or(scenario.repeat).unwrap_or(1);
    let seed = seed_flag.or(scenario.seed).unwrap_or(0);
    if repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let joinpoints = default_joinpoints();

    if repeat == 1 {
        let (cosm_report, daop_report): (Option<RunReport>, Option<RunReport>) = match mode {
            Mode::Cosm => (
                Some(cosm_harness::engine::run_cosm(
                    &doc,
                    fixture.factories,
                    &seeds,
                    &scenario,
                    model,
                )?),
                None,
            ),
            Mode::Daop => (None, Some(run_daop(&seeds, &scenario, &joinpoints, model))),
            Mode::Both => {
                let cmp =
                    compare(&doc, fixture.factories, &seeds, &scenario, &joinpoints, model)?;
                (Some(cmp.cosm), Some(cmp.daop))
            }
        };

        for report in [&cosm_report, &daop_report].into_iter().flatten() {
            print!("{}", human_table(report));
        }
        if let (Some(c), Some(d)) = (&cosm_report, &daop_report) {
            println!(
                "comparison: daop {} vs cosm {} work-units",
                d.totals.work_units, c.totals.work_units
            );
        }
        if let Some(path) = out {
            write_reports(
                path,
                cosm_report.as_ref().map(csv_report),
                daop_report.as_ref().map(csv_report),
            )?;
        }
        return Ok(());
    }

    let mut cosm_csv = None;
    let mut daop_csv = None;
    for kind in engines_for(mode) {
        let rep = run_repeats(
            &doc,
            fixture.factories.clone(),
            &seeds,
            &scenario,
            &joinpoints,
            kind,
            repeat,
            seed,
            model.clone(),
        )?;
        print!("{}", human_table(&rep.baseline));
        print!("{}", human_stats(&rep));
        match kind {
            EngineKind::Cosm => cosm_csv = Some(csv_repeat_report(&rep)),
            EngineKind::Daop => daop_csv = Some(csv_repeat_report(&rep)),
        }
    }
    if let Some(path) = out {
        write_reports(path, cosm_csv, daop_csv)?;
    }
    Ok(())
}

fn engines_for(mode: Mode) -> Vec<EngineKind> {
    match mode {
        Mode::Cosm => vec![EngineKind::Cosm],
        Mode::Daop => vec![EngineKind::Daop],
        Mode::Both => vec![EngineKind::Cosm, EngineKind::Daop],
    }
}

/// `high,low` replaces the battery policies the fixture ships with.
fn apply_thresholds(doc: &mut adl::AdlDocument, spec: &str) -> anyhow::Result<()> {
    let (high, low) = spec
        .split_once(',')
        .with_context(|| format!("--thresholds wants `high,low`, got `{spec}`"))?;
    let high: f64 = high.trim().parse().context("--thresholds high is not a number")?;
    let low: f64 = low.trim().parse().context("--thresholds low is not a number")?;
    if !high.is_finite() || !low.is_finite() || high <= low {
        bail!("--thresholds needs finite high > low, got {high},{low}");
    }
    for policy in ecampus::battery_policies(high, low) {
        match doc.policies.iter_mut().find(|p| p.id == policy.id) {
            Some(slot) => *slot = policy,
            None => doc.policies.push(policy),
        }
    }
    Ok(())
}

/// Single engine writes to `path`; with both engines the baseline lands
/// next to it with a `daop` marker in the name.
fn write_reports(
    path: &Path,
    cosm_csv: Option<String>,
    daop_csv: Option<String>,
) -> anyhow::Result<()> {
    let both = cosm_csv.is_some() && daop_csv.is_some();
    if let Some(csv) = cosm_csv {
        fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if let Some(csv) = daop_csv {
        let path = if both { daop_path(path) } else { path.to_path_buf() };
        fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn daop_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => path.with_extension(format!("daop.{ext}")),
        None => {
            let mut p = path.as_os_str().to_owned();
            p.push(".daop");
            PathBuf::from(p)
        }
    }
}
