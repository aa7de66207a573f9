//! Composition plans and the reaction pipeline.
//!
//! Policies emit raw action lists; [`compose`] normalizes them into a plan
//! in three passes over a simulated graph:
//!
//! 1. exclusive-group expansion: activating a layer inside an
//!    `exclusive:<group>` style first deactivates whichever group members
//!    are active at that point of the plan;
//! 2. last-writer-wins: later actions on the same subject (a layer, a
//!    component's delegate binding, a load or replacement target) supersede
//!    earlier ones, activate and deactivate of one layer sharing a subject;
//! 3. minimization: actions that would not change the simulated state are
//!    dropped. Selector invocations are never deduplicated or dropped.
//!
//! Execution is gated on a matching verified verdict and is atomic: the
//! graph, the observer registrations, and the work-unit counters all roll
//! back if any action fails, so a failed plan costs nothing and changes
//! nothing.

use crate::context::ContextEvent;
use crate::kernel::{self, App, KernelError, Message, Selector};
use crate::metrics::Phase;
use crate::value::Value;
use crate::verification::{self, Diagnostic, Severity, StateDigest, VerificationOutcome};
use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum AdaptationAction {
    ActivateLayer { component: String, layer: String },
    DeactivateLayer { component: String, layer: String },
    LoadComponent { component: String },
    ReplaceComponent { old: String, new: String },
    RebindDelegate { component: String, target: String },
    InvokeSelector { component: String, selector: Selector, args: Vec<Value> },
}

impl fmt::Display for AdaptationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptationAction::ActivateLayer { component, layer } => {
                write!(f, "activate {component}.{layer}")
            }
            AdaptationAction::DeactivateLayer { component, layer } => {
                write!(f, "deactivate {component}.{layer}")
            }
            AdaptationAction::LoadComponent { component } => write!(f, "load {component}"),
            AdaptationAction::ReplaceComponent { old, new } => {
                write!(f, "replace {old} -> {new}")
            }
            AdaptationAction::RebindDelegate { component, target } => {
                write!(f, "rebind {component} -> {target}")
            }
            AdaptationAction::InvokeSelector { component, selector, .. } => {
                write!(f, "invoke {component}.{selector}")
            }
        }
    }
}

/// A normalized, executable action sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub id: u64,
    pub actions: Vec<AdaptationAction>,
    /// How many actions went into normalization, for diagnostics.
    pub raw_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationRecord {
    pub plan_id: u64,
    pub before: StateDigest,
    pub after: StateDigest,
    pub step_count: usize,
    pub work_units: u64,
    pub wall: Duration,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdaptationError {
    #[error("plan {plan} has not passed verification")]
    UnverifiedPlan { plan: u64 },
    #[error("the verdict presented does not belong to plan {plan}")]
    VerdictMismatch { plan: u64 },
    #[error("plan {plan} failed at action {action_index} ({message}); all effects rolled back")]
    ExecutionFailed {
        plan: u64,
        action_index: usize,
        message: String,
    },
}

// Lightweight graph image the normalizer simulates against: layer styles
// and activation flags, delegate bindings, and the roster.
#[derive(Clone)]
struct SimLayer {
    id: String,
    style: Option<String>,
    active: bool,
}

#[derive(Clone, Default)]
struct SimComp {
    layers: Vec<SimLayer>,
    delegate: Option<String>,
}

struct NormSim {
    comps: BTreeMap<String, SimComp>,
}

impl NormSim {
    fn from_app(app: &App) -> NormSim {
        let comps = app
            .graph
            .components
            .iter()
            .map(|(id, c)| {
                (
                    id.clone(),
                    SimComp {
                        layers: c
                            .layers
                            .iter()
                            .map(|l| SimLayer {
                                id: l.id.clone(),
                                style: l.style.clone(),
                                active: l.active,
                            })
                            .collect(),
                        delegate: c.delegate.clone(),
                    },
                )
            })
            .collect();
        NormSim { comps }
    }

    fn sim_load(&mut self, app: &App, id: &str) {
        let image = app
            .factories
            .instantiate(id)
            .map(|c| SimComp {
                layers: c
                    .layers
                    .iter()
                    .map(|l| SimLayer {
                        id: l.id.clone(),
                        style: l.style.clone(),
                        active: l.active,
                    })
                    .collect(),
                delegate: c.delegate.clone(),
            })
            .unwrap_or_default();
        self.comps.insert(id.to_string(), image);
    }

    fn apply(&mut self, app: &App, action: &AdaptationAction) {
        match action {
            AdaptationAction::ActivateLayer { component, layer }
            | AdaptationAction::DeactivateLayer { component, layer } => {
                let on = matches!(action, AdaptationAction::ActivateLayer { .. });
                if let Some(c) = self.comps.get_mut(component) {
                    if let Some(l) = c.layers.iter_mut().find(|l| &l.id == layer) {
                        l.active = on;
                    }
                }
            }
            AdaptationAction::LoadComponent { component } => self.sim_load(app, component),
            AdaptationAction::ReplaceComponent { old, new } => {
                self.comps.remove(old);
                for c in self.comps.values_mut() {
                    if c.delegate.as_deref() == Some(old.as_str()) {
                        c.delegate = Some(new.clone());
                    }
                }
                self.sim_load(app, new);
            }
            AdaptationAction::RebindDelegate { component, target } => {
                if let Some(c) = self.comps.get_mut(component) {
                    c.delegate = Some(target.clone());
                }
            }
            AdaptationAction::InvokeSelector { .. } => {}
        }
    }

    /// Would the action change anything right now? Unknown subjects count
    /// as changes; rejecting them is verification's job, not ours.
    fn is_noop(&self, action: &AdaptationAction) -> bool {
        match action {
            AdaptationAction::ActivateLayer { component, layer }
            | AdaptationAction::DeactivateLayer { component, layer } => {
                let want = matches!(action, AdaptationAction::ActivateLayer { .. });
                self.comps
                    .get(component)
                    .and_then(|c| c.layers.iter().find(|l| &l.id == layer))
                    .map(|l| l.active == want)
                    .unwrap_or(false)
            }
            AdaptationAction::LoadComponent { component } => self.comps.contains_key(component),
            AdaptationAction::ReplaceComponent { .. } => false,
            AdaptationAction::RebindDelegate { component, target } => self
                .comps
                .get(component)
                .map(|c| c.delegate.as_deref() == Some(target.as_str()))
                .unwrap_or(false),
            AdaptationAction::InvokeSelector { .. } => false,
        }
    }
}

// The subject an action claims for last-writer-wins purposes.
#[derive(PartialEq, Eq, Clone)]
enum Subject {
    Toggle(String, String),
    Load(String),
    Replace(String),
    Rebind(String),
}

fn subject(action: &AdaptationAction) -> Option<Subject> {
    match action {
        AdaptationAction::ActivateLayer { component, layer }
        | AdaptationAction::DeactivateLayer { component, layer } => {
            Some(Subject::Toggle(component.clone(), layer.clone()))
        }
        AdaptationAction::LoadComponent { component } => Some(Subject::Load(component.clone())),
        AdaptationAction::ReplaceComponent { old, .. } => Some(Subject::Replace(old.clone())),
        AdaptationAction::RebindDelegate { component, .. } => {
            Some(Subject::Rebind(component.clone()))
        }
        AdaptationAction::InvokeSelector { .. } => None,
    }
}

fn normalize(app: &App, raw: Vec<AdaptationAction>) -> Vec<AdaptationAction> {
    // Pass 1: expand exclusive groups against a running simulation.
    let mut sim = NormSim::from_app(app);
    let mut expanded = Vec::with_capacity(raw.len());
    for action in raw {
        if let AdaptationAction::ActivateLayer { component, layer } = &action {
            let style = sim
                .comps
                .get(component)
                .and_then(|c| c.layers.iter().find(|l| &l.id == layer))
                .and_then(|l| l.style.clone());
            if let Some(style) = style.filter(|s| s.starts_with("exclusive:")) {
                let rivals: Vec<String> = sim.comps[component]
                    .layers
                    .iter()
                    .filter(|l| l.active && &l.id != layer && l.style.as_deref() == Some(&style))
                    .map(|l| l.id.clone())
                    .collect();
                for rival in rivals {
                    let deact = AdaptationAction::DeactivateLayer {
                        component: component.clone(),
                        layer: rival,
                    };
                    sim.apply(app, &deact);
                    expanded.push(deact);
                }
            }
        }
        sim.apply(app, &action);
        expanded.push(action);
    }

    // Pass 2: of several actions on one subject, only the last survives,
    // at its own position.
    let subjects: Vec<Option<Subject>> = expanded.iter().map(subject).collect();
    let mut keep: Vec<AdaptationAction> = Vec::with_capacity(expanded.len());
    for (i, action) in expanded.into_iter().enumerate() {
        let superseded = subjects[i].as_ref().is_some_and(|s| {
            subjects[i + 1..].iter().flatten().any(|later| later == s)
        });
        if !superseded {
            keep.push(action);
        }
    }

    // Pass 3: drop whatever would change nothing, simulating from the live
    // graph again.
    let mut sim = NormSim::from_app(app);
    let mut minimized = Vec::with_capacity(keep.len());
    for action in keep {
        if sim.is_noop(&action) {
            continue;
        }
        sim.apply(app, &action);
        minimized.push(action);
    }
    minimized
}

/// Normalizes raw actions into a plan and stamps it with a fresh id.
pub fn compose(app: &mut App, actions: Vec<AdaptationAction>) -> Plan {
    let raw_len = actions.len();
    let actions = normalize(app, actions);
    Plan {
        id: app.next_plan_id(),
        actions,
        raw_len,
    }
}

fn apply_action(app: &mut App, action: &AdaptationAction) -> Result<(), String> {
    let model = app.metrics.model().clone();
    match action {
        AdaptationAction::ActivateLayer { component, layer } => {
            app.graph
                .set_layer_active(component, layer, true)
                .map_err(|e| e.to_string())?;
            app.metrics.charge("layer-toggle", model.layer_toggle);
        }
        AdaptationAction::DeactivateLayer { component, layer } => {
            app.graph
                .set_layer_active(component, layer, false)
                .map_err(|e| e.to_string())?;
            app.metrics.charge("layer-toggle", model.layer_toggle);
        }
        AdaptationAction::LoadComponent { component } => {
            let comp = app.factories.instantiate(component).map_err(|e| e.to_string())?;
            for entity in &comp.observes {
                app.context
                    .register_observer(&comp.id, entity)
                    .map_err(|e| e.to_string())?;
            }
            app.graph.insert(comp);
            app.metrics.charge("component-load", model.component_load);
        }
        AdaptationAction::ReplaceComponent { old, new } => {
            let old_comp = app
                .graph
                .components
                .remove(old)
                .ok_or_else(|| KernelError::UnknownTarget(old.clone()).to_string())?;
            app.context.unregister_component(old);

            let mut repl = app.factories.instantiate(new).map_err(|e| e.to_string())?;
            repl.delegate = old_comp.delegate.clone();
            for entity in &repl.observes {
                app.context
                    .register_observer(&repl.id, entity)
                    .map_err(|e| e.to_string())?;
            }
            app.graph.insert(repl);

            for comp in app.graph.components.values_mut() {
                if comp.delegate.as_deref() == Some(old.as_str()) {
                    comp.delegate = Some(new.clone());
                }
            }
            for connector in &mut app.graph.connectors {
                if connector.from == *old {
                    connector.from = new.clone();
                }
                if connector.to == *old {
                    connector.to = new.clone();
                }
            }
            app.metrics.charge("component-load", model.component_load);
        }
        AdaptationAction::RebindDelegate { component, target } => {
            app.graph.component(target).map_err(|e| e.to_string())?;
            app.graph
                .rebind_delegate(component, target)
                .map_err(|e| e.to_string())?;
            app.metrics.charge("delegate-rebind", model.delegate_rebind);
        }
        AdaptationAction::InvokeSelector { component, selector, args } => {
            let mut msg = Message::new(selector.clone(), args.clone());
            kernel::send_message(app, component, &mut msg, false).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

/// Executes a plan under its verified verdict. All effects of a failing
/// plan are rolled back: graph, observer registrations, and charges.
pub fn execute(
    app: &mut App,
    plan: &Plan,
    verdict: &VerificationOutcome,
) -> Result<AdaptationRecord, AdaptationError> {
    if verdict.plan_id != Some(plan.id) {
        return Err(AdaptationError::VerdictMismatch { plan: plan.id });
    }
    if !verdict.verified {
        return Err(AdaptationError::UnverifiedPlan { plan: plan.id });
    }

    let before = verification::digest(&app.graph);
    let graph_backup = app.graph.clone();
    let registrations_backup = app.context.registrations();
    let checkpoint = app.metrics.checkpoint();
    let started = Instant::now();

    let prev_phase = app.metrics.set_phase(Phase::Adaptation);
    for (index, action) in plan.actions.iter().enumerate() {
        if let Err(message) = apply_action(app, action) {
            app.graph = graph_backup;
            app.context.restore_registrations(registrations_backup);
            app.metrics.rollback_to(&checkpoint);
            app.metrics.set_phase(prev_phase);
            return Err(AdaptationError::ExecutionFailed {
                plan: plan.id,
                action_index: index,
                message,
            });
        }
    }
    app.metrics.set_phase(prev_phase);

    let record = AdaptationRecord {
        plan_id: plan.id,
        before,
        after: verification::digest(&app.graph),
        step_count: plan.actions.len(),
        work_units: app.metrics.delta_since(&checkpoint).total,
        wall: started.elapsed(),
    };
    app.adaptation_log.push(record.clone());
    Ok(record)
}

/// Evaluates the given policies, composes one plan from everything they
/// contributed, verifies it, and executes it. Returns whether a non-empty
/// plan actually ran. Internal-variable updates from verified policies
/// commit regardless, mirroring that decisions happened even when no
/// adaptation was needed.
fn decide_and_adapt(app: &mut App, policy_ids: &[String], trigger: Option<&Selector>) -> bool {
    let snapshot = app.context.snapshot();
    let mut working = app.internals.clone();
    let mut actions = Vec::new();
    let rule_cost = app.metrics.model().policy_rule_eval;

    let prev_phase = app.metrics.set_phase(Phase::Decision);
    for pid in policy_ids {
        match verification::verify_policy(app, pid, &snapshot, &working, trigger) {
            Ok(verdict) => {
                app.metrics.charge("rule-eval", verdict.rules_evaluated * rule_cost);
                if verdict.verified {
                    working = verdict.updated_internals;
                    actions.extend(verdict.actions);
                } else {
                    app.verification_log.push(VerificationOutcome {
                        plan_id: None,
                        verified: false,
                        diagnostics: verdict.diagnostics,
                    });
                }
            }
            Err(err) => {
                app.verification_log.push(VerificationOutcome {
                    plan_id: None,
                    verified: false,
                    diagnostics: vec![Diagnostic {
                        severity: Severity::Error,
                        code: "missing-policy",
                        message: err.to_string(),
                        subject: Some(pid.clone()),
                    }],
                });
            }
        }
    }
    app.metrics.set_phase(prev_phase);
    app.internals = working;

    if actions.is_empty() {
        return false;
    }
    let plan = compose(app, actions);
    if plan.actions.is_empty() {
        return false;
    }
    let verdict = verification::verify_plan(app, &plan);
    if !verdict.verified {
        app.verification_log.push(verdict);
        return false;
    }
    match execute(app, &plan, &verdict) {
        Ok(_) => true,
        Err(err) => {
            app.verification_log.push(VerificationOutcome {
                plan_id: Some(plan.id),
                verified: false,
                diagnostics: vec![Diagnostic {
                    severity: Severity::Error,
                    code: "execution-failed",
                    message: err.to_string(),
                    subject: None,
                }],
            });
            false
        }
    }
}

/// The per-event adaptation hook: policies attached to the observers of
/// the changed entity decide under the event's selector as trigger.
pub fn on_context_event(app: &mut App, event: &ContextEvent) {
    let observers = app.context.observers_of(&event.entity);
    let mut policy_ids: Vec<String> = Vec::new();
    for component in &observers {
        for pid in app.attached_policies(component) {
            if !policy_ids.iter().any(|p| p == pid) {
                policy_ids.push(pid.clone());
            }
        }
    }
    if policy_ids.is_empty() {
        return;
    }
    let trigger = event.selector();
    decide_and_adapt(app, &policy_ids, Some(&trigger));
}

/// The unrecognized-selector hook: the target's policies get one chance,
/// without any ambient trigger, to reconfigure so that a retry can land.
pub fn recover_unrecognized(app: &mut App, target: &str) -> bool {
    let policy_ids = app.attached_policies(target).to_vec();
    if policy_ids.is_empty() {
        return false;
    }
    decide_and_adapt(app, &policy_ids, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::dispatch_pending;
    use crate::kernel::{
        Component, ComponentGraph, Connector, ConnectorKind, FactoryRegistry, Handler, Layer,
        LocalState,
    };
    use crate::metrics::CostModel;
    use crate::policy::{ActionItem, BoolExpr, DecisionPolicy, ExternalVar, Rule};

    fn sel(s: &str) -> Selector {
        Selector::new(s).unwrap()
    }

    fn handler(selector: &str, cost: u64) -> Handler {
        Handler::new(sel(selector), cost, |_: &mut LocalState, _: &[Value]| Value::Bool(true))
    }

    fn exclusive_layer(id: &str, group: &str, active: bool) -> Layer {
        Layer {
            id: id.into(),
            policy: None,
            style: Some(format!("exclusive:{group}")),
            active,
            handlers: vec![],
        }
    }

    fn comp(id: &str, layers: Vec<Layer>) -> Component {
        Component {
            id: id.into(),
            kind: id.into(),
            static_handlers: vec![],
            layers,
            protocol: vec![],
            delegate: None,
            observes: vec![],
            state: LocalState::new(),
        }
    }

    fn test_app(components: Vec<Component>, factories: FactoryRegistry) -> App {
        let mut graph = ComponentGraph::default();
        for c in components {
            graph.insert(c);
        }
        App::new(graph, factories, CostModel::default())
    }

    fn act(c: &str, l: &str) -> AdaptationAction {
        AdaptationAction::ActivateLayer { component: c.into(), layer: l.into() }
    }

    fn deact(c: &str, l: &str) -> AdaptationAction {
        AdaptationAction::DeactivateLayer { component: c.into(), layer: l.into() }
    }

    #[test]
    fn activate_then_deactivate_of_an_inactive_layer_cancels_out() {
        let mut app = test_app(
            vec![comp("LM", vec![exclusive_layer("gps", "location", false)])],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "gps"), deact("LM", "gps")]);
        assert!(plan.actions.is_empty());
        assert_eq!(plan.raw_len, 2);
    }

    #[test]
    fn last_writer_wins_keeps_the_final_toggle() {
        let mut app = test_app(
            vec![comp("LM", vec![exclusive_layer("gps", "location", true)])],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "gps"), deact("LM", "gps")]);
        assert_eq!(plan.actions, vec![deact("LM", "gps")]);
    }

    #[test]
    fn exclusive_group_expansion_deactivates_the_active_rival() {
        let mut app = test_app(
            vec![comp(
                "LM",
                vec![
                    exclusive_layer("gps", "location", true),
                    exclusive_layer("wifi", "location", false),
                    exclusive_layer("cell", "location", false),
                ],
            )],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "wifi")]);
        assert_eq!(plan.actions, vec![deact("LM", "gps"), act("LM", "wifi")]);
    }

    #[test]
    fn no_op_activations_are_minimized_away() {
        let mut app = test_app(
            vec![comp(
                "LM",
                vec![
                    exclusive_layer("gps", "location", true),
                    exclusive_layer("wifi", "location", false),
                ],
            )],
            FactoryRegistry::new(),
        );
        // gps is already the active one.
        let plan = compose(&mut app, vec![act("LM", "gps")]);
        assert!(plan.actions.is_empty());
    }

    #[test]
    fn invocations_are_never_deduplicated() {
        let mut c = comp("C", vec![]);
        c.static_handlers.push(handler("poke", 0));
        let mut app = test_app(vec![c], FactoryRegistry::new());
        let invoke = AdaptationAction::InvokeSelector {
            component: "C".into(),
            selector: sel("poke"),
            args: vec![],
        };
        let plan = compose(&mut app, vec![invoke.clone(), invoke.clone()]);
        assert_eq!(plan.actions.len(), 2);
    }

    #[test]
    fn execution_requires_a_matching_verified_verdict() {
        let mut app = test_app(
            vec![comp("LM", vec![exclusive_layer("gps", "location", false)])],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "gps")]);

        let unverified = VerificationOutcome {
            plan_id: Some(plan.id),
            verified: false,
            diagnostics: vec![],
        };
        assert_eq!(
            execute(&mut app, &plan, &unverified).unwrap_err(),
            AdaptationError::UnverifiedPlan { plan: plan.id }
        );

        let foreign = VerificationOutcome {
            plan_id: Some(plan.id + 10),
            verified: true,
            diagnostics: vec![],
        };
        assert_eq!(
            execute(&mut app, &plan, &foreign).unwrap_err(),
            AdaptationError::VerdictMismatch { plan: plan.id }
        );
    }

    #[test]
    fn toggle_plan_executes_and_records() {
        let mut app = test_app(
            vec![comp(
                "LM",
                vec![
                    exclusive_layer("gps", "location", true),
                    exclusive_layer("wifi", "location", false),
                ],
            )],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "wifi")]);
        let verdict = verification::verify_plan(&app, &plan);
        let record = execute(&mut app, &plan, &verdict).unwrap();

        assert_eq!(record.step_count, 2);
        assert_eq!(record.work_units, 4);
        assert_eq!(record.before.active, [("LM".into(), "gps".into())].into());
        assert_eq!(record.after.active, [("LM".into(), "wifi".into())].into());
        assert!(verification::state_transition_check(&record.before, &plan, &record.after));
        assert_eq!(app.adaptation_log.len(), 1);
        assert_eq!(app.metrics.phase_total(Phase::Adaptation), 4);
    }

    #[test]
    fn load_installs_observer_registrations() {
        let mut factories = FactoryRegistry::new();
        factories.register("Sensor", || {
            let mut c = comp("Sensor", vec![]);
            c.observes = vec!["BatteryLevel".into()];
            c
        });
        let mut app = test_app(vec![], factories);
        let plan = compose(
            &mut app,
            vec![AdaptationAction::LoadComponent { component: "Sensor".into() }],
        );
        let verdict = verification::verify_plan(&app, &plan);
        let record = execute(&mut app, &plan, &verdict).unwrap();

        assert_eq!(record.work_units, 25);
        assert!(app.graph.components.contains_key("Sensor"));
        assert_eq!(app.context.observers_of("BatteryLevel"), vec!["Sensor".to_string()]);
    }

    #[test]
    fn replace_retargets_bindings_edges_and_registrations() {
        let mut factories = FactoryRegistry::new();
        factories.register("New", || {
            let mut c = comp("New", vec![]);
            c.observes = vec!["Speed".into()];
            c
        });
        let mut old = comp("Old", vec![]);
        old.observes = vec!["Speed".into()];
        old.delegate = Some("Helper".into());
        let mut user = comp("User", vec![]);
        user.delegate = Some("Old".into());
        let helper = comp("Helper", vec![]);
        let mut app = test_app(vec![old, user, helper], factories);
        app.context.register_observer("Old", "Speed").unwrap();
        app.graph.connectors.push(Connector {
            id: "c1".into(),
            from: "User".into(),
            to: "Old".into(),
            kind: ConnectorKind::Delegate,
        });

        let plan = compose(
            &mut app,
            vec![AdaptationAction::ReplaceComponent { old: "Old".into(), new: "New".into() }],
        );
        let verdict = verification::verify_plan(&app, &plan);
        execute(&mut app, &plan, &verdict).unwrap();

        assert!(!app.graph.components.contains_key("Old"));
        let new = app.graph.component("New").unwrap();
        // The replacement inherits the outgoing delegate binding.
        assert_eq!(new.delegate.as_deref(), Some("Helper"));
        assert_eq!(app.graph.component("User").unwrap().delegate.as_deref(), Some("New"));
        assert_eq!(app.graph.connectors[0].to, "New");
        assert_eq!(app.context.observers_of("Speed"), vec!["New".to_string()]);
    }

    #[test]
    fn failed_plans_roll_back_completely() {
        let mut app = test_app(
            vec![comp(
                "LM",
                vec![
                    exclusive_layer("gps", "location", true),
                    exclusive_layer("wifi", "location", false),
                ],
            )],
            FactoryRegistry::new(),
        );
        let plan = compose(&mut app, vec![act("LM", "wifi")]);
        let verdict = verification::verify_plan(&app, &plan);
        assert!(verdict.verified);

        // Sabotage between verification and execution: the wifi layer
        // disappears, so the second action must fail.
        app.graph.component_mut("LM").unwrap().layers.retain(|l| l.id != "wifi");
        let digest_before = verification::digest(&app.graph);
        let units_before = app.metrics.total();

        let err = execute(&mut app, &plan, &verdict).unwrap_err();
        assert!(matches!(err, AdaptationError::ExecutionFailed { action_index: 1, .. }));
        // Nothing moved: the first action's toggle was undone and no units
        // were kept.
        assert_eq!(verification::digest(&app.graph), digest_before);
        assert_eq!(app.metrics.total(), units_before);
        assert!(app.adaptation_log.is_empty());
    }

    fn battery_reactor() -> (App, String) {
        // One observer whose policy activates `save` below 50.
        let mut observer = comp(
            "Obs",
            vec![Layer {
                id: "save".into(),
                policy: Some("powerPolicy".into()),
                style: None,
                active: false,
                handlers: vec![handler("BatteryLevelDidChange", 0)],
            }],
        );
        observer.observes = vec!["BatteryLevel".into()];
        observer.static_handlers.push(handler("BatteryLevelDidChange", 0));
        let mut app = test_app(vec![observer], FactoryRegistry::new());
        app.context.register_observer("Obs", "BatteryLevel").unwrap();
        app.context.prime("BatteryLevel", Value::Number(100.0)).unwrap();
        app.add_policy(DecisionPolicy {
            id: "powerPolicy".into(),
            suit: "power".into(),
            style: None,
            internal_vars: vec![],
            external_vars: vec![ExternalVar {
                name: "battery".into(),
                entity: "BatteryLevel".into(),
            }],
            rules: vec![Rule {
                trigger: Some(sel("BatteryLevelDidChange")),
                condition: BoolExpr::parse("battery < 50").unwrap(),
                actions: vec![ActionItem::Adapt(act("Obs", "save"))],
                else_actions: vec![ActionItem::Adapt(deact("Obs", "save"))],
            }],
            goals: vec![],
        })
        .unwrap();
        app.attach_policy("Obs", "powerPolicy");
        (app, "Obs".into())
    }

    #[test]
    fn context_events_drive_decisions_and_plans() {
        let (mut app, obs) = battery_reactor();

        app.context.sense("BatteryLevel", Value::Number(40.0)).unwrap();
        dispatch_pending(&mut app, None);
        assert!(app.graph.component(&obs).unwrap().layer("save").unwrap().active);
        assert_eq!(app.adaptation_log.len(), 1);
        // Will event: trigger matches nothing, 0 rules. Did event: 1 rule.
        assert_eq!(app.metrics.phase_total(Phase::Decision), 1);
        assert_eq!(app.metrics.phase_total(Phase::Adaptation), 2);

        // Same band again: decisions rerun, but the plan minimizes to
        // nothing and no new record appears.
        app.context.sense("BatteryLevel", Value::Number(30.0)).unwrap();
        dispatch_pending(&mut app, None);
        assert_eq!(app.adaptation_log.len(), 1);
        assert_eq!(app.metrics.phase_total(Phase::Decision), 2);
        assert_eq!(app.metrics.phase_total(Phase::Adaptation), 2);
    }

    #[test]
    fn recovery_activates_a_layer_to_serve_the_selector() {
        let mut target = comp(
            "T",
            vec![Layer {
                id: "extra".into(),
                policy: None,
                style: None,
                active: false,
                handlers: vec![handler("bonus", 0)],
            }],
        );
        target.observes = vec![];
        let mut app = test_app(vec![target], FactoryRegistry::new());
        app.add_policy(DecisionPolicy {
            id: "recovery".into(),
            suit: "recovery".into(),
            style: None,
            internal_vars: vec![crate::policy::InternalVar {
                name: "on".into(),
                ty: crate::policy::VarType::Bool,
                initial: Value::Bool(true),
            }],
            external_vars: vec![],
            rules: vec![Rule {
                trigger: None,
                condition: BoolExpr::parse("on == true").unwrap(),
                actions: vec![ActionItem::Adapt(act("T", "extra"))],
                else_actions: vec![],
            }],
            goals: vec![],
        })
        .unwrap();
        app.attach_policy("T", "recovery");

        let mut msg = Message::new(sel("bonus"), vec![]);
        let path = kernel::send_message(&mut app, "T", &mut msg, true).unwrap();
        assert!(matches!(path, crate::kernel::DispatchPath::Recovered(_)));
        assert!(app.graph.component("T").unwrap().layer("extra").unwrap().active);

        // Without a helpful policy the selector stays unrecognized.
        let mut app2 = test_app(vec![comp("T", vec![])], FactoryRegistry::new());
        let mut msg2 = Message::new(sel("bonus"), vec![]);
        assert!(kernel::send_message(&mut app2, "T", &mut msg2, true).is_err());
    }
}
