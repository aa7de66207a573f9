//! Report rendering: a human table on standard output and a machine CSV.
//!
//! The CSV carries only deterministic quantities (work units, counters,
//! seeded statistics). Wall-clock times go to the human table alone, so two
//! runs over the same inputs write byte-identical CSV files.

use std::fmt::Write as _;

use cosm_core::metrics::Phase;

use crate::engine::{RepeatReport, RunReport};

/// Fixed column set: `event-seq, phase, metric, value`. Phase is `-` for
/// counters that are not phase work. `event-seq` is the 1-based step, then
/// `total`, then `stats` rows for repeated runs.
const HEADER: [&str; 4] = ["event-seq", "phase", "metric", "value"];

fn push_rows(report: &RunReport, w: &mut csv::Writer<Vec<u8>>) -> csv::Result<()> {
    for step in &report.steps {
        let seq = step.index.to_string();
        for phase in Phase::ALL {
            let units = step.by_phase.get(&phase).copied().unwrap_or(0);
            w.write_record([&seq, phase.name(), "work-units", &units.to_string()])?;
        }
        let counters = [
            ("deliveries", step.deliveries),
            ("unhandled", step.unhandled),
            ("plans", step.plans),
            ("jp-evaluations", step.jp_evaluations),
            ("advice-matches", step.advice_matches),
            ("energy-units", step.energy_units),
        ];
        for (metric, value) in counters {
            w.write_record([&seq, "-", metric, &value.to_string()])?;
        }
    }

    let t = &report.totals;
    for phase in Phase::ALL {
        let units = t.by_phase.get(&phase).copied().unwrap_or(0);
        w.write_record(["total", phase.name(), "work-units", &units.to_string()])?;
    }
    let totals = [
        ("work-units", t.work_units),
        ("deliveries", t.deliveries),
        ("unhandled", t.unhandled),
        ("plans", t.plans),
        ("plan-steps", t.plan_steps),
        ("jp-evaluations", t.jp_evaluations),
        ("advice-matches", t.advice_matches),
        ("energy-units", t.energy_units),
    ];
    for (metric, value) in totals {
        w.write_record(["total", "-", metric, &value.to_string()])?;
    }
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("csv into_inner")).expect("csv utf8")
}

pub fn csv_report(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("csv header");
    push_rows(report, &mut w).expect("csv rows");
    finish(w)
}

pub fn csv_repeat_report(rep: &RepeatReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("csv header");
    push_rows(&rep.baseline, &mut w).expect("csv rows");

    let stats = [
        ("runs", rep.runs.to_string()),
        ("seed", rep.seed.to_string()),
        ("work-units-mean", rep.work_units.mean.to_string()),
        ("work-units-variance", rep.work_units.variance.to_string()),
        ("work-units-stddev", rep.work_units.stddev.to_string()),
        ("work-units-min", rep.work_units.min.to_string()),
        ("work-units-max", rep.work_units.max.to_string()),
    ];
    for (metric, value) in stats {
        w.write_record(["stats", "-", metric, &value]).expect("csv stats");
    }
    finish(w)
}

/// The per-step breakdown as an aligned table, wall clock included.
pub fn human_table(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "engine: {}", report.engine.name());
    let _ = writeln!(
        out,
        "{:>4}  {:>8}  {:<14}  {:>6}  {:>6}  {:>5}  {:>6}",
        "step", "t(ms)", "entity", "units", "deliv", "plans", "energy"
    );
    for s in &report.steps {
        let _ = writeln!(
            out,
            "{:>4}  {:>8}  {:<14}  {:>6}  {:>6}  {:>5}  {:>6}",
            s.index, s.at_ms, s.entity, s.work_units, s.deliveries, s.plans, s.energy_units
        );
    }
    let t = &report.totals;
    let _ = writeln!(
        out,
        "total: {} work-units ({}), {} deliveries ({} unhandled), {} plans / {} steps, {} energy",
        t.work_units,
        Phase::ALL
            .iter()
            .map(|p| format!("{} {}", p.name(), t.by_phase.get(p).copied().unwrap_or(0)))
            .collect::<Vec<_>>()
            .join(", "),
        t.deliveries,
        t.unhandled,
        t.plans,
        t.plan_steps,
        t.energy_units,
    );
    let _ = writeln!(out, "wall: {:?}", report.wall);
    out
}

pub fn human_stats(rep: &RepeatReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} runs (seed {}): work-units mean {} variance {} stddev {} min {} max {}",
        rep.runs,
        rep.seed,
        rep.work_units.mean,
        rep.work_units.variance,
        rep.work_units.stddev,
        rep.work_units.min,
        rep.work_units.max,
    );
    let _ = writeln!(
        out,
        "wall ns: mean {:.0} min {:.0} max {:.0}",
        rep.wall_ns.mean, rep.wall_ns.min, rep.wall_ns.max,
    );
    out
}
