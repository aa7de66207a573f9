//! Interactive loop over the built-in fixture.
//!
//! ```text
//! sense <Entity> <literal>   push a context change and react to it
//! report                     print the session's per-step cost table
//! quit                       leave
//! ```

use std::io::{BufRead, Write};
use std::time::Instant;

use cosm_core::context::dispatch_pending;
use cosm_core::ecampus;
use cosm_core::metrics::CostModel;
use cosm_core::adl::instantiate_app;
use cosm_core::Value;

use crate::engine::{totalize, EngineKind, RunReport, StepCost};
use crate::report::human_table;

pub fn run_repl<R: BufRead, W: Write>(input: R, mut out: W) -> anyhow::Result<()> {
    let fixture = ecampus::fixture();
    let mut app = instantiate_app(&fixture.doc, fixture.factories, CostModel::default())?;
    for (entity, value) in &fixture.entities {
        app.context.prime(entity, value.clone())?;
    }
    let known: Vec<&str> = fixture.entities.iter().map(|(e, _)| e.as_str()).collect();

    writeln!(out, "fixture ready; entities: {}", known.join(", "))?;
    let started = Instant::now();
    let mut steps: Vec<StepCost> = Vec::new();
    let mut plans_before = 0u64;

    for line in input.lines() {
        let line = line?;
        let mut words = line.split_whitespace();
        match words.next() {
            None => continue,
            Some("quit") | Some("exit") => break,
            Some("help") => {
                writeln!(out, "commands: sense <Entity> <literal> | report | quit")?;
            }
            Some("report") => {
                let report = RunReport {
                    engine: EngineKind::Cosm,
                    totals: totalize(&steps, plans_in_log_steps(&app)),
                    steps: steps.clone(),
                    wall: started.elapsed(),
                };
                write!(out, "{}", human_table(&report))?;
            }
            Some("sense") => {
                let Some(entity) = words.next() else {
                    writeln!(out, "usage: sense <Entity> <literal>")?;
                    continue;
                };
                if !known.contains(&entity) {
                    writeln!(out, "unknown entity `{entity}`; one of: {}", known.join(", "))?;
                    continue;
                }
                let literal = words.collect::<Vec<_>>().join(" ");
                if literal.is_empty() {
                    writeln!(out, "usage: sense <Entity> <literal>")?;
                    continue;
                }
                let value = Value::parse_literal(&literal);

                let cp = app.metrics.checkpoint();
                app.context.sense(entity, value)?;
                let dispatched = dispatch_pending(&mut app, None);
                let delta = app.metrics.delta_since(&cp);
                let plans_now = app.adaptation_log.len() as u64;

                if dispatched.events.is_empty() {
                    writeln!(out, "no change; nothing to notify")?;
                    continue;
                }
                let energy = ecampus::location_fix(&app.graph)
                    .ok()
                    .flatten()
                    .map(|fix| fix.energy_cost_units)
                    .unwrap_or(0);
                steps.push(StepCost {
                    index: steps.len() + 1,
                    at_ms: dispatched.events[0].timestamp,
                    entity: entity.to_string(),
                    by_phase: delta.by_phase,
                    work_units: delta.total,
                    deliveries: dispatched.deliveries,
                    unhandled: dispatched.unhandled,
                    plans: plans_now - plans_before,
                    energy_units: energy,
                    jp_evaluations: 0,
                    advice_matches: 0,
                });
                plans_before = plans_now;

                let s = steps.last().expect("just pushed");
                writeln!(
                    out,
                    "events={} deliveries={} plans={} work-units={} location={}",
                    dispatched.events.len(),
                    s.deliveries,
                    s.plans,
                    s.work_units,
                    location_summary(&app),
                )?;
            }
            Some(other) => {
                writeln!(out, "unknown command `{other}`; try help")?;
            }
        }
    }
    Ok(())
}

fn plans_in_log_steps(app: &cosm_core::App) -> u64 {
    app.adaptation_log.iter().map(|r| r.step_count as u64).sum()
}

fn location_summary(app: &cosm_core::App) -> String {
    match ecampus::location_fix(&app.graph) {
        Ok(Some(fix)) => format!("{} ({} energy)", fix.source.name(), fix.energy_cost_units),
        Ok(None) => "asleep".to_string(),
        Err(e) => format!("unavailable ({e})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(script: &str) -> String {
        let mut out = Vec::new();
        run_repl(script.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn sense_report_quit_round_trip() {
        let out = drive("sense BatteryLevel 65\nreport\nquit\n");
        assert!(out.contains("fixture ready"), "{out}");
        // 65 drops below the high threshold: a plan swaps gps for wifi.
        assert!(out.contains("plans=1"), "{out}");
        assert!(out.contains("location=wifi"), "{out}");
        assert!(out.contains("total:"), "{out}");
    }

    #[test]
    fn equal_value_is_swallowed() {
        let out = drive("sense BatteryLevel 100\nquit\n");
        assert!(out.contains("no change"), "{out}");
    }

    #[test]
    fn bad_input_is_reported_not_fatal() {
        let out = drive("sense Humidity 4\nfrobnicate\nsense\nquit\n");
        assert!(out.contains("unknown entity `Humidity`"), "{out}");
        assert!(out.contains("unknown command `frobnicate`"), "{out}");
        assert!(out.contains("usage: sense"), "{out}");
    }

    #[test]
    fn eof_ends_the_loop() {
        let out = drive("sense SleepMode true\n");
        assert!(out.contains("location=asleep"), "{out}");
    }
}
