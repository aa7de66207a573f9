//! Work-unit accounting.
//!
//! Every chargeable operation has a fixed price in abstract work units, so
//! two runs over the same inputs produce identical totals. Wall-clock time
//! is measured separately by callers that want it and never feeds back into
//! the unit counts.

use serde::Deserialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// The lifecycle bucket a charge lands in. `Application` is the default for
/// work done outside the sense/decide/adapt loop, e.g. direct API sends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Monitoring,
    Detection,
    Decision,
    Adaptation,
    Application,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Monitoring,
        Phase::Detection,
        Phase::Decision,
        Phase::Adaptation,
        Phase::Application,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Monitoring => "monitoring",
            Phase::Detection => "detection",
            Phase::Decision => "decision",
            Phase::Adaptation => "adaptation",
            Phase::Application => "application",
        }
    }
}

/// Unit prices for every chargeable operation. Loadable from TOML under
/// hyphenated keys (`notify-delivery = 1`); missing keys fall back to the
/// defaults, unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct CostModel {
    /// One notification delivered (or attempted) to one observer.
    pub notify_delivery: u64,
    /// One policy rule condition evaluated.
    pub policy_rule_eval: u64,
    /// One layer activation or deactivation.
    pub layer_toggle: u64,
    /// One delegate rebinding.
    pub delegate_rebind: u64,
    /// One component loaded, or swapped in by a replacement.
    pub component_load: u64,
    /// Snapshotting one entity while monitoring.
    pub snapshot_per_entity: u64,
    /// Evaluating one joinpoint against the current state.
    pub joinpoint_eval_base: u64,
    /// Joinpoint evaluation surcharge per stored history snapshot.
    pub joinpoint_history_eval: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            notify_delivery: 1,
            policy_rule_eval: 1,
            layer_toggle: 2,
            delegate_rebind: 2,
            component_load: 25,
            snapshot_per_entity: 1,
            joinpoint_eval_base: 1,
            joinpoint_history_eval: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cost model field `{0}` must be positive")]
    NonPositiveCharge(&'static str),
}

impl CostModel {
    /// Every charge must be at least one unit; a free operation would let
    /// unbounded work go unaccounted.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let fields = [
            ("notify-delivery", self.notify_delivery),
            ("policy-rule-eval", self.policy_rule_eval),
            ("layer-toggle", self.layer_toggle),
            ("delegate-rebind", self.delegate_rebind),
            ("component-load", self.component_load),
            ("snapshot-per-entity", self.snapshot_per_entity),
            ("joinpoint-eval-base", self.joinpoint_eval_base),
            ("joinpoint-history-eval", self.joinpoint_history_eval),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(MetricsError::NonPositiveCharge(name));
            }
        }
        Ok(())
    }
}

/// Accumulates charges per phase and per named metric.
#[derive(Clone, Debug)]
pub struct MetricsSink {
    model: CostModel,
    phase: Phase,
    counters: BTreeMap<(Phase, String), u64>,
    total: u64,
}

/// A full snapshot of the sink, cheap enough to take per plan or per
/// scenario step. Restoring one discards every charge made after it.
#[derive(Clone, Debug)]
pub struct MetricsCheckpoint {
    counters: BTreeMap<(Phase, String), u64>,
    total: u64,
}

/// Per-phase and overall growth between a checkpoint and now.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricsDelta {
    pub by_phase: BTreeMap<Phase, u64>,
    pub total: u64,
}

impl MetricsDelta {
    pub fn phase(&self, p: Phase) -> u64 {
        self.by_phase.get(&p).copied().unwrap_or(0)
    }
}

impl MetricsSink {
    pub fn new(model: CostModel) -> Self {
        MetricsSink {
            model,
            phase: Phase::Application,
            counters: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) -> Phase {
        std::mem::replace(&mut self.phase, phase)
    }

    /// Charges into the current phase.
    pub fn charge(&mut self, metric: &str, units: u64) {
        self.charge_in(self.phase, metric, units);
    }

    pub fn charge_in(&mut self, phase: Phase, metric: &str, units: u64) {
        if units == 0 {
            return;
        }
        *self.counters.entry((phase, metric.to_string())).or_insert(0) += units;
        self.total += units;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn phase_total(&self, phase: Phase) -> u64 {
        self.counters
            .iter()
            .filter(|((p, _), _)| *p == phase)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn metric_total(&self, metric: &str) -> u64 {
        self.counters
            .iter()
            .filter(|((_, m), _)| m == metric)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn checkpoint(&self) -> MetricsCheckpoint {
        MetricsCheckpoint {
            counters: self.counters.clone(),
            total: self.total,
        }
    }

    /// Undoes every charge made since the checkpoint. Used by plan
    /// execution to keep failed plans cost-free.
    pub fn rollback_to(&mut self, cp: &MetricsCheckpoint) {
        self.counters = cp.counters.clone();
        self.total = cp.total;
    }

    pub fn delta_since(&self, cp: &MetricsCheckpoint) -> MetricsDelta {
        let mut by_phase = BTreeMap::new();
        for ((phase, metric), v) in &self.counters {
            let before = cp.counters.get(&(*phase, metric.clone())).copied().unwrap_or(0);
            if *v > before {
                *by_phase.entry(*phase).or_insert(0) += v - before;
            }
        }
        MetricsDelta {
            by_phase,
            total: self.total - cp.total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prices() {
        let m = CostModel::default();
        assert_eq!(m.notify_delivery, 1);
        assert_eq!(m.policy_rule_eval, 1);
        assert_eq!(m.layer_toggle, 2);
        assert_eq!(m.delegate_rebind, 2);
        assert_eq!(m.component_load, 25);
        assert_eq!(m.snapshot_per_entity, 1);
        assert_eq!(m.joinpoint_eval_base, 1);
        assert_eq!(m.joinpoint_history_eval, 1);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn zero_charge_rejected() {
        let mut m = CostModel::default();
        m.layer_toggle = 0;
        assert_eq!(
            m.validate(),
            Err(MetricsError::NonPositiveCharge("layer-toggle"))
        );
    }

    #[test]
    fn charges_land_in_current_phase() {
        let mut sink = MetricsSink::new(CostModel::default());
        sink.set_phase(Phase::Monitoring);
        sink.charge("notify-delivery", 3);
        sink.set_phase(Phase::Decision);
        sink.charge("rule-eval", 2);
        assert_eq!(sink.phase_total(Phase::Monitoring), 3);
        assert_eq!(sink.phase_total(Phase::Decision), 2);
        assert_eq!(sink.total(), 5);
        assert_eq!(sink.metric_total("notify-delivery"), 3);
    }

    #[test]
    fn checkpoint_rollback_and_delta() {
        let mut sink = MetricsSink::new(CostModel::default());
        sink.charge_in(Phase::Monitoring, "notify-delivery", 4);
        let cp = sink.checkpoint();
        sink.charge_in(Phase::Adaptation, "layer-toggle", 4);
        sink.charge_in(Phase::Monitoring, "notify-delivery", 1);

        let delta = sink.delta_since(&cp);
        assert_eq!(delta.total, 5);
        assert_eq!(delta.phase(Phase::Adaptation), 4);
        assert_eq!(delta.phase(Phase::Monitoring), 1);
        assert_eq!(delta.phase(Phase::Decision), 0);

        sink.rollback_to(&cp);
        assert_eq!(sink.total(), 4);
        assert_eq!(sink.delta_since(&cp), MetricsDelta::default());
    }
}
