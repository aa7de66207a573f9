//! Drives a scenario through one of two engines and accounts every unit of
//! work.
//!
//! The `cosm` engine runs the real middleware: notifications reach only the
//! registered observers, policies react to triggers, and adaptation plans
//! execute atomically. The `daop` engine models the aspect-oriented
//! baseline it is measured against: every context change snapshots all
//! entities and re-evaluates every joinpoint against a growing history, no
//! matter which entity moved.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use cosm_core::adl::{instantiate_app, AdlDocument, BuildError};
use cosm_core::context::{dispatch_pending, ContextError};
use cosm_core::ecampus;
use cosm_core::kernel::FactoryRegistry;
use cosm_core::metrics::{CostModel, MetricsSink, Phase};
use cosm_core::policy::BoolExpr;
use cosm_core::{Selector, Value};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// An aspect-style watch point: advice keyed by a pointcut over entity
/// names. The baseline engine evaluates every joinpoint on every change.
#[derive(Clone, Debug)]
pub struct Joinpoint {
    pub id: String,
    /// Advice the joinpoint would trigger when its pointcut matches.
    pub advice: Selector,
    pub pointcut: BoolExpr,
}

/// Battery-band joinpoints mirroring what the fixture's policies react to.
pub fn default_joinpoints() -> Vec<Joinpoint> {
    let jp = |id: &str, advice: &str, expr: &str| Joinpoint {
        id: id.to_string(),
        advice: Selector::new(advice).expect("advice selector"),
        pointcut: BoolExpr::parse(expr).expect("pointcut"),
    };
    vec![
        jp("jp-high", "adviseFullPower", "BatteryLevel >= 70"),
        jp("jp-mid", "adviseMidPower", "BatteryLevel >= 30 && BatteryLevel < 70"),
        jp("jp-low", "adviseLowPower", "BatteryLevel < 30"),
    ]
}

/// Per-step accounting, one row per scenario step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepCost {
    /// 1-based position in the scenario.
    pub index: usize,
    pub at_ms: u64,
    pub entity: String,
    pub by_phase: BTreeMap<Phase, u64>,
    pub work_units: u64,
    pub deliveries: u64,
    pub unhandled: u64,
    /// Plans executed while reacting to this step.
    pub plans: u64,
    /// Abstract battery drain of one location fix under the layers active
    /// after this step; zero while asleep or under the baseline engine.
    pub energy_units: u64,
    pub jp_evaluations: u64,
    pub advice_matches: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunTotals {
    pub work_units: u64,
    pub by_phase: BTreeMap<Phase, u64>,
    pub deliveries: u64,
    pub unhandled: u64,
    pub plans: u64,
    /// Adaptation actions executed across all plans.
    pub plan_steps: u64,
    pub energy_units: u64,
    pub jp_evaluations: u64,
    pub advice_matches: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    Cosm,
    Daop,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Cosm => "cosm",
            EngineKind::Daop => "daop",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub engine: EngineKind,
    pub steps: Vec<StepCost>,
    pub totals: RunTotals,
    pub wall: Duration,
}

impl RunReport {
    pub fn work_series(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.work_units).collect()
    }

    pub fn cumulative_series(&self) -> Vec<u64> {
        let mut sum = 0;
        self.steps
            .iter()
            .map(|s| {
                sum += s.work_units;
                sum
            })
            .collect()
    }
}

pub(crate) fn totalize(steps: &[StepCost], plan_steps: u64) -> RunTotals {
    let mut t = RunTotals { plan_steps, ..RunTotals::default() };
    for s in steps {
        t.work_units += s.work_units;
        for (phase, units) in &s.by_phase {
            *t.by_phase.entry(*phase).or_insert(0) += units;
        }
        t.deliveries += s.deliveries;
        t.unhandled += s.unhandled;
        t.plans += s.plans;
        t.energy_units += s.energy_units;
        t.jp_evaluations += s.jp_evaluations;
        t.advice_matches += s.advice_matches;
    }
    t
}

/// Runs the scenario through the middleware. Builds a fresh application,
/// seeds the context, then senses each step and drains the reaction
/// pipeline, recording the cost growth per step.
pub fn run_cosm(
    doc: &AdlDocument,
    factories: FactoryRegistry,
    seeds: &[(String, Value)],
    scenario: &Scenario,
    model: CostModel,
) -> Result<RunReport, EngineError> {
    let mut app = instantiate_app(doc, factories, model)?;
    for (entity, value) in seeds {
        app.context.prime(entity, value.clone())?;
    }

    let started = Instant::now();
    let mut steps = Vec::with_capacity(scenario.steps.len());
    let mut plans_before = 0u64;

    for (i, step) in scenario.steps.iter().enumerate() {
        let cp = app.metrics.checkpoint();
        app.context.sense_at(&step.entity, step.value.clone(), step.at_ms)?;
        let report = dispatch_pending(&mut app, None);
        let delta = app.metrics.delta_since(&cp);

        let plans_now = app.adaptation_log.len() as u64;
        let energy = ecampus::location_fix(&app.graph)
            .ok()
            .flatten()
            .map(|fix| fix.energy_cost_units)
            .unwrap_or(0);

        steps.push(StepCost {
            index: i + 1,
            at_ms: step.at_ms,
            entity: step.entity.clone(),
            by_phase: delta.by_phase,
            work_units: delta.total,
            deliveries: report.deliveries,
            unhandled: report.unhandled,
            plans: plans_now - plans_before,
            energy_units: energy,
            jp_evaluations: 0,
            advice_matches: 0,
        });
        plans_before = plans_now;
    }

    let plan_steps = app.adaptation_log.iter().map(|r| r.step_count as u64).sum();
    let totals = totalize(&steps, plan_steps);
    debug_assert_eq!(totals.work_units, app.metrics.total());

    Ok(RunReport { engine: EngineKind::Cosm, steps, totals, wall: started.elapsed() })
}

/// Runs the scenario through the aspect-oriented baseline. Each change
/// snapshots every entity, appends to the history, and evaluates every
/// joinpoint with a surcharge per stored snapshot, so the per-event cost
/// grows with history depth regardless of which entity changed.
pub fn run_daop(
    seeds: &[(String, Value)],
    scenario: &Scenario,
    joinpoints: &[Joinpoint],
    model: CostModel,
) -> RunReport {
    let mut values: BTreeMap<String, Value> =
        seeds.iter().map(|(e, v)| (e.clone(), v.clone())).collect();
    let mut history: Vec<BTreeMap<String, Value>> = Vec::new();
    let mut metrics = MetricsSink::new(model.clone());

    let started = Instant::now();
    let mut steps = Vec::with_capacity(scenario.steps.len());

    for (i, step) in scenario.steps.iter().enumerate() {
        let cp = metrics.checkpoint();
        values.insert(step.entity.clone(), step.value.clone());

        metrics.charge_in(
            Phase::Monitoring,
            "snapshot",
            values.len() as u64 * model.snapshot_per_entity,
        );
        history.push(values.clone());

        let mut matches = 0;
        for jp in joinpoints {
            metrics.charge_in(
                Phase::Detection,
                "joinpoint-eval",
                model.joinpoint_eval_base + history.len() as u64 * model.joinpoint_history_eval,
            );
            let lookup = |name: &str| values.get(name).cloned();
            if jp.pointcut.eval(&lookup).unwrap_or(false) {
                matches += 1;
            }
        }

        let delta = metrics.delta_since(&cp);
        steps.push(StepCost {
            index: i + 1,
            at_ms: step.at_ms,
            entity: step.entity.clone(),
            by_phase: delta.by_phase,
            work_units: delta.total,
            deliveries: 0,
            unhandled: 0,
            plans: 0,
            energy_units: 0,
            jp_evaluations: joinpoints.len() as u64,
            advice_matches: matches,
        });
    }

    let totals = totalize(&steps, 0);
    RunReport { engine: EngineKind::Daop, steps, totals, wall: started.elapsed() }
}

/// Both engines over the same scenario, for side-by-side trends.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub cosm: RunReport,
    pub daop: RunReport,
}

impl ComparisonReport {
    pub fn daop_nondecreasing(&self) -> bool {
        self.daop.steps.windows(2).all(|w| w[0].work_units <= w[1].work_units)
    }

    pub fn daop_exceeds_cosm(&self) -> bool {
        self.daop.totals.work_units > self.cosm.totals.work_units
    }
}

pub fn compare(
    doc: &AdlDocument,
    factories: FactoryRegistry,
    seeds: &[(String, Value)],
    scenario: &Scenario,
    joinpoints: &[Joinpoint],
    model: CostModel,
) -> Result<ComparisonReport, EngineError> {
    Ok(ComparisonReport {
        cosm: run_cosm(doc, factories, seeds, scenario, model.clone())?,
        daop: run_daop(seeds, scenario, joinpoints, model),
    })
}

/// Population statistics over per-run samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub variance: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

pub fn stats(samples: &[f64]) -> Stats {
    assert!(!samples.is_empty(), "stats need at least one sample");
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Stats {
        mean,
        variance,
        stddev: variance.sqrt(),
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Clone, Debug)]
pub struct RepeatReport {
    pub engine: EngineKind,
    pub runs: u32,
    pub seed: u64,
    pub per_run_work_units: Vec<u64>,
    pub work_units: Stats,
    pub wall_ns: Stats,
    /// The first run in full, for per-step reporting.
    pub baseline: RunReport,
}

/// Repeats a run `n` times under a seeded generator. The seed only jitters
/// the scripted timestamps between runs; the step contents are untouched,
/// so a deterministic engine must report identical work-units every run.
pub fn run_repeats(
    doc: &AdlDocument,
    factories: FactoryRegistry,
    seeds: &[(String, Value)],
    scenario: &Scenario,
    joinpoints: &[Joinpoint],
    engine: EngineKind,
    n: u32,
    seed: u64,
    model: CostModel,
) -> Result<RepeatReport, EngineError> {
    assert!(n >= 1, "need at least one run");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_run = Vec::with_capacity(n as usize);
    let mut walls = Vec::with_capacity(n as usize);
    let mut baseline = None;

    for _ in 0..n {
        let mut jittered = scenario.clone();
        for step in &mut jittered.steps {
            step.at_ms = step.at_ms.saturating_add(rng.random_range(0..5));
        }
        let report = match engine {
            EngineKind::Cosm => {
                run_cosm(doc, factories.clone(), seeds, &jittered, model.clone())?
            }
            EngineKind::Daop => run_daop(seeds, &jittered, joinpoints, model.clone()),
        };
        per_run.push(report.totals.work_units);
        walls.push(report.wall.as_nanos() as f64);
        if baseline.is_none() {
            baseline = Some(report);
        }
    }

    let work: Vec<f64> = per_run.iter().map(|&u| u as f64).collect();
    Ok(RepeatReport {
        engine,
        runs: n,
        seed,
        per_run_work_units: per_run,
        work_units: stats(&work),
        wall_ns: stats(&walls),
        baseline: baseline.expect("n >= 1"),
    })
}
