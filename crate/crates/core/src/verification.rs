//! Verification gates for decisions and plans.
//!
//! Nothing changes the component graph without passing here first. A
//! policy verdict wraps one policy evaluation together with its goal
//! checks; a plan verdict simulates the plan action by action, each one
//! checked against the state left by its predecessors. Verdicts carry
//! diagnostics instead of panicking or erroring out: a plan is verified
//! exactly when no error-severity diagnostic was raised.
//!
//! State digests reduce a graph to what adaptation is allowed to change,
//! the component roster and the set of active layers, so a before/after
//! pair can be checked against the plan that claims to explain it.

use crate::adaptation::{AdaptationAction, Plan};
use crate::kernel::{App, Component, Selector};
use crate::policy::{self, EvalContext, FiredRule, PolicyError};
use crate::value::Value;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub subject: Option<String>,
}

impl Diagnostic {
    fn error(code: &'static str, message: String, subject: Option<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            code,
            message,
            subject,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationOutcome {
    /// Set for plan verdicts; `None` for policy verdicts.
    pub plan_id: Option<u64>,
    pub verified: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl VerificationOutcome {
    fn from_diagnostics(plan_id: Option<u64>, diagnostics: Vec<Diagnostic>) -> Self {
        let verified = !diagnostics.iter().any(|d| d.severity == Severity::Error);
        VerificationOutcome {
            plan_id,
            verified,
            diagnostics,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }
}

/// A verified (or rejected) policy evaluation: what fired, what it wants
/// to do, and what its internal variables would become.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyVerdict {
    pub policy: String,
    pub verified: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub actions: Vec<AdaptationAction>,
    pub updated_internals: BTreeMap<String, BTreeMap<String, Value>>,
    pub rules_evaluated: u64,
    pub fired: Vec<FiredRule>,
}

/// Evaluates a policy against a context snapshot and checks its goals.
/// Evaluation faults (type errors, unbound variables, chain overruns)
/// become error diagnostics rather than hard failures; only a missing
/// policy id is an error to the caller.
pub fn verify_policy(
    app: &App,
    policy_id: &str,
    snapshot: &BTreeMap<String, Value>,
    internals: &BTreeMap<String, BTreeMap<String, Value>>,
    trigger: Option<&Selector>,
) -> Result<PolicyVerdict, PolicyError> {
    // Surface a bad id before anything else; it is a caller bug, not a
    // property of the policy.
    app.policies.get_policy_for_key(policy_id)?;

    let ctx = EvalContext {
        repo: &app.policies,
        snapshot,
        trigger,
    };
    let mut diagnostics = Vec::new();

    let evaluation = match policy::evaluate_policy(&ctx, policy_id, internals) {
        Ok(res) => Some(res),
        Err(PolicyError::PolicyNotFound(id)) => {
            // A chained policy is missing from the repository.
            diagnostics.push(Diagnostic::error(
                "missing-policy",
                format!("chained policy `{id}` is not stored"),
                Some(id),
            ));
            None
        }
        Err(err) => {
            diagnostics.push(Diagnostic::error(
                "evaluation-failed",
                err.to_string(),
                Some(policy_id.to_string()),
            ));
            None
        }
    };

    let policy = app.policies.get_policy_for_key(policy_id)?;
    for goal in &policy.goals {
        let observable = app
            .gauges
            .get(&goal.property)
            .copied()
            .or_else(|| {
                app.graph
                    .properties
                    .get(&goal.property)
                    .and_then(|v| v.as_number())
            });
        match observable {
            None => diagnostics.push(Diagnostic::error(
                "unknown-observable",
                format!(
                    "goal property `{}` is neither a gauge nor a configuration property",
                    goal.property
                ),
                Some(goal.property.clone()),
            )),
            Some(v) if !goal.comparator.compare_numbers(v, goal.limit) => {
                diagnostics.push(Diagnostic::error(
                    "goal-violated",
                    format!(
                        "goal `{} {} {}` does not hold (observed {v})",
                        goal.property,
                        goal.comparator.symbol(),
                        goal.limit
                    ),
                    Some(goal.property.clone()),
                ));
            }
            Some(_) => {}
        }
    }

    let verified = !diagnostics.iter().any(|d| d.severity == Severity::Error);
    let (actions, updated_internals, rules_evaluated, fired) = match evaluation {
        Some(res) => (res.actions, res.updated_internals, res.rules_evaluated, res.fired),
        None => (Vec::new(), internals.clone(), 0, Vec::new()),
    };
    Ok(PolicyVerdict {
        policy: policy_id.to_string(),
        verified,
        diagnostics,
        actions,
        updated_internals,
        rules_evaluated,
        fired,
    })
}

/// What adaptation is accountable for: which components exist and which
/// layers are active. Everything else (bindings, local state) is the
/// components' own business.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateDigest {
    pub roster: BTreeSet<String>,
    pub active: BTreeSet<(String, String)>,
}

pub fn digest(graph: &crate::kernel::ComponentGraph) -> StateDigest {
    let mut d = StateDigest::default();
    for (id, comp) in &graph.components {
        d.roster.insert(id.clone());
        for layer in &comp.layers {
            if layer.active {
                d.active.insert((id.clone(), layer.id.clone()));
            }
        }
    }
    d
}

/// Replays a plan on a digest without touching any real state.
pub fn apply_plan_to_digest(before: &StateDigest, plan: &Plan) -> StateDigest {
    let mut d = before.clone();
    for action in &plan.actions {
        match action {
            AdaptationAction::ActivateLayer { component, layer } => {
                if d.roster.contains(component) {
                    d.active.insert((component.clone(), layer.clone()));
                }
            }
            AdaptationAction::DeactivateLayer { component, layer } => {
                d.active.remove(&(component.clone(), layer.clone()));
            }
            AdaptationAction::LoadComponent { component } => {
                d.roster.insert(component.clone());
            }
            AdaptationAction::ReplaceComponent { old, new } => {
                d.roster.remove(old);
                d.active.retain(|(c, _)| c != old);
                d.roster.insert(new.clone());
            }
            AdaptationAction::RebindDelegate { .. } | AdaptationAction::InvokeSelector { .. } => {}
        }
    }
    d
}

/// Confirms that an executed plan explains the observed digest change.
pub fn state_transition_check(before: &StateDigest, plan: &Plan, after: &StateDigest) -> bool {
    &apply_plan_to_digest(before, plan) == after
}

/// Simulates the plan action by action. Each action is checked against
/// the state produced by the ones before it, so loading a component and
/// then activating one of its layers verifies even though the component
/// is absent right now. Stops at the first fault.
pub fn verify_plan(app: &App, plan: &Plan) -> VerificationOutcome {
    let mut sim: BTreeMap<String, Component> = app.graph.components.clone();
    let mut diagnostics = Vec::new();

    'actions: for (index, action) in plan.actions.iter().enumerate() {
        let fault = |code: &'static str, message: String, subject: String| {
            Diagnostic::error(code, format!("action {index}: {message}"), Some(subject))
        };
        match action {
            AdaptationAction::ActivateLayer { component, layer }
            | AdaptationAction::DeactivateLayer { component, layer } => {
                let Some(comp) = sim.get_mut(component) else {
                    diagnostics.push(fault(
                        "missing-component",
                        format!("component `{component}` is not in the graph"),
                        component.clone(),
                    ));
                    break 'actions;
                };
                let on = matches!(action, AdaptationAction::ActivateLayer { .. });
                match comp.layer_mut(layer) {
                    Some(l) => l.active = on,
                    None => {
                        diagnostics.push(fault(
                            "missing-layer",
                            format!("component `{component}` has no layer `{layer}`"),
                            format!("{component}/{layer}"),
                        ));
                        break 'actions;
                    }
                }
            }
            AdaptationAction::LoadComponent { component } => {
                if sim.contains_key(component) {
                    diagnostics.push(fault(
                        "duplicate-component",
                        format!("component `{component}` is already loaded"),
                        component.clone(),
                    ));
                    break 'actions;
                }
                match app.factories.instantiate(component) {
                    Ok(c) => {
                        sim.insert(component.clone(), c);
                    }
                    Err(_) => {
                        diagnostics.push(fault(
                            "missing-factory",
                            format!("no factory can build `{component}`"),
                            component.clone(),
                        ));
                        break 'actions;
                    }
                }
            }
            AdaptationAction::ReplaceComponent { old, new } => {
                if !sim.contains_key(old) {
                    diagnostics.push(fault(
                        "missing-component",
                        format!("component `{old}` is not in the graph"),
                        old.clone(),
                    ));
                    break 'actions;
                }
                if new != old && sim.contains_key(new) {
                    diagnostics.push(fault(
                        "duplicate-component",
                        format!("component `{new}` is already loaded"),
                        new.clone(),
                    ));
                    break 'actions;
                }
                match app.factories.instantiate(new) {
                    Ok(mut repl) => {
                        let old_comp = sim.remove(old).expect("checked above");
                        repl.delegate = old_comp.delegate.clone();
                        for comp in sim.values_mut() {
                            if comp.delegate.as_deref() == Some(old.as_str()) {
                                comp.delegate = Some(new.clone());
                            }
                        }
                        sim.insert(new.clone(), repl);
                    }
                    Err(_) => {
                        diagnostics.push(fault(
                            "missing-factory",
                            format!("no factory can build `{new}`"),
                            new.clone(),
                        ));
                        break 'actions;
                    }
                }
            }
            AdaptationAction::RebindDelegate { component, target } => {
                if !sim.contains_key(component) {
                    diagnostics.push(fault(
                        "missing-component",
                        format!("component `{component}` is not in the graph"),
                        component.clone(),
                    ));
                    break 'actions;
                }
                let Some(target_comp) = sim.get(target) else {
                    diagnostics.push(fault(
                        "missing-component",
                        format!("rebind target `{target}` is not in the graph"),
                        target.clone(),
                    ));
                    break 'actions;
                };
                let protocol = sim[component].protocol.clone();
                if !target_comp.conforms_to(&protocol) {
                    diagnostics.push(fault(
                        "protocol-violation",
                        format!(
                            "`{target}` does not conform to the protocol `{component}` requires of its delegate"
                        ),
                        target.clone(),
                    ));
                    break 'actions;
                }
                sim.get_mut(component).expect("checked above").delegate = Some(target.clone());
            }
            AdaptationAction::InvokeSelector { component, selector, .. } => {
                let Some(comp) = sim.get(component) else {
                    diagnostics.push(fault(
                        "missing-component",
                        format!("component `{component}` is not in the graph"),
                        component.clone(),
                    ));
                    break 'actions;
                };
                if !comp.responds_to(selector) {
                    diagnostics.push(fault(
                        "unrecognized-selector",
                        format!(
                            "`{component}` would not recognize `{selector}` at this point in the plan"
                        ),
                        component.clone(),
                    ));
                    break 'actions;
                }
            }
        }
    }

    if diagnostics.is_empty() {
        if let Some(max) = app
            .graph
            .properties
            .get("maxComponents")
            .and_then(|v| v.as_number())
        {
            if (sim.len() as f64) > max {
                diagnostics.push(Diagnostic::error(
                    "max-components",
                    format!(
                        "plan leaves {} components loaded, over the configured limit of {max}",
                        sim.len()
                    ),
                    Some("maxComponents".to_string()),
                ));
            }
        }
    }

    VerificationOutcome::from_diagnostics(Some(plan.id), diagnostics)
}
