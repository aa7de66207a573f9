//! Decision policies.
//!
//! A policy declares typed internal variables (private state with initial
//! values), external variables (bound to context entities), an ordered,
//! non-empty list of rules, and optional goals. A rule carries an optional
//! trigger selector, a boolean condition over the declared variables, an
//! action list for the true branch and another for the false branch.
//!
//! Evaluation walks the rules in order. A rule participates when it has no
//! trigger or its trigger equals the ambient one; participating conditions
//! are the unit of decision cost. Action items either emit an adaptation
//! action, assign an internal variable (visible to later rules), or chain
//! into another policy, whose fired rules and actions splice in at that
//! position. Chains are cut off after eight hops.
//!
//! The repository stores policies associatively by id. Adding under an
//! existing id replaces the stored object wholesale; removal of an unknown
//! id is a no-op; lookups of unknown ids are errors.

pub mod expr;

pub use expr::{BoolExpr, Comparator, ExprEvalError, ExprParseError};

use crate::adaptation::AdaptationAction;
use crate::kernel::Selector;
use crate::value::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const MAX_CHAIN_DEPTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarType {
    Number,
    Str,
    Bool,
}

impl VarType {
    pub fn name(self) -> &'static str {
        match self {
            VarType::Number => "number",
            VarType::Str => "string",
            VarType::Bool => "boolean",
        }
    }

    pub fn from_name(name: &str) -> Option<VarType> {
        Some(match name {
            "number" => VarType::Number,
            "string" => VarType::Str,
            "boolean" => VarType::Bool,
            _ => return None,
        })
    }

    pub fn matches(self, value: &Value) -> bool {
        matches!(
            (self, value),
            (VarType::Number, Value::Number(_))
                | (VarType::Str, Value::Str(_))
                | (VarType::Bool, Value::Bool(_))
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InternalVar {
    pub name: String,
    pub ty: VarType,
    pub initial: Value,
}

/// Binds a variable name usable in conditions to a context entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalVar {
    pub name: String,
    pub entity: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionItem {
    /// Contribute an adaptation action to the composition plan.
    Adapt(AdaptationAction),
    /// Assign an internal variable; later rules see the new value.
    SetInternal { name: String, value: Value },
    /// Evaluate another policy in place, under the same trigger.
    Evaluate { policy: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub trigger: Option<Selector>,
    pub condition: BoolExpr,
    pub actions: Vec<ActionItem>,
    pub else_actions: Vec<ActionItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Goal {
    pub property: String,
    pub comparator: Comparator,
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPolicy {
    pub id: String,
    pub suit: String,
    pub style: Option<String>,
    pub internal_vars: Vec<InternalVar>,
    pub external_vars: Vec<ExternalVar>,
    pub rules: Vec<Rule>,
    pub goals: Vec<Goal>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy `{id}`: {reason}")]
    InvalidPolicy { id: String, reason: String },
    #[error("no policy stored under key `{0}`")]
    PolicyNotFound(String),
    #[error("policy `{policy}` has no rule {index}")]
    IndexOutOfRange { policy: String, index: usize },
    #[error("policy `{policy}`: external variable `{variable}` is bound to entity `{entity}` which has no sensed value")]
    UnboundExternalVariable {
        policy: String,
        variable: String,
        entity: String,
    },
    #[error("policy `{policy}`: {source}")]
    Condition {
        policy: String,
        source: ExprEvalError,
    },
    #[error("policy `{policy}`: cannot assign {found} to internal variable `{variable}` of type {expected}")]
    InvalidAssignment {
        policy: String,
        variable: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("policy `{policy}` exceeds the chain depth limit of {MAX_CHAIN_DEPTH}")]
    ChainDepthExceeded { policy: String },
}

impl DecisionPolicy {
    /// Structural validation: at least one rule, unique variable names,
    /// initial values matching declared types, and every variable referenced
    /// by a condition or assignment actually declared.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |reason: String| {
            Err(PolicyError::InvalidPolicy {
                id: self.id.clone(),
                reason,
            })
        };
        if self.id.is_empty() {
            return Err(PolicyError::InvalidPolicy {
                id: String::from("<empty>"),
                reason: "policy id must not be empty".into(),
            });
        }
        if self.rules.is_empty() {
            return fail("a policy must declare at least one rule".into());
        }
        let mut names = BTreeSet::new();
        for v in &self.internal_vars {
            if !names.insert(v.name.as_str()) {
                return fail(format!("duplicate variable `{}`", v.name));
            }
            if !v.ty.matches(&v.initial) {
                return fail(format!(
                    "internal variable `{}` is {} but its initial value is {}",
                    v.name,
                    v.ty.name(),
                    v.initial.type_name()
                ));
            }
        }
        for v in &self.external_vars {
            if !names.insert(v.name.as_str()) {
                return fail(format!("duplicate variable `{}`", v.name));
            }
        }
        let internal_names: BTreeSet<&str> =
            self.internal_vars.iter().map(|v| v.name.as_str()).collect();
        for (index, rule) in self.rules.iter().enumerate() {
            for var in rule.condition.variables() {
                if !names.contains(var) {
                    return fail(format!(
                        "rule {index} references undeclared variable `{var}`"
                    ));
                }
            }
            for item in rule.actions.iter().chain(&rule.else_actions) {
                match item {
                    ActionItem::SetInternal { name, value } => {
                        if !internal_names.contains(name.as_str()) {
                            return fail(format!(
                                "rule {index} assigns undeclared internal variable `{name}`"
                            ));
                        }
                        let ty = self
                            .internal_vars
                            .iter()
                            .find(|v| v.name == *name)
                            .map(|v| v.ty)
                            .expect("checked above");
                        if !ty.matches(value) {
                            return fail(format!(
                                "rule {index} assigns {} to `{name}` of type {}",
                                value.type_name(),
                                ty.name()
                            ));
                        }
                    }
                    ActionItem::Evaluate { policy } => {
                        if policy.is_empty() {
                            return fail(format!("rule {index} chains to an empty policy id"));
                        }
                    }
                    ActionItem::Adapt(_) => {}
                }
            }
        }
        for goal in &self.goals {
            if goal.property.is_empty() {
                return fail("goal property must not be empty".into());
            }
            if !goal.limit.is_finite() {
                return fail(format!("goal `{}` limit must be finite", goal.property));
            }
        }
        Ok(())
    }

    /// The declared initial assignment of the internal variables.
    pub fn initial_internals(&self) -> BTreeMap<String, Value> {
        self.internal_vars
            .iter()
            .map(|v| (v.name.clone(), v.initial.clone()))
            .collect()
    }
}

/// Associative policy store. Adding under an existing key replaces the
/// stored object and hands the old one back.
#[derive(Clone, Debug, Default)]
pub struct PolicyRepository {
    policies: BTreeMap<String, DecisionPolicy>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyMutation {
    SetSuit(String),
    SetRule(usize, Rule),
    SetAction(usize, Vec<ActionItem>),
    SetElseAction(usize, Vec<ActionItem>),
}

impl PolicyRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_policy(
        &mut self,
        policy: DecisionPolicy,
    ) -> Result<Option<DecisionPolicy>, PolicyError> {
        policy.validate()?;
        Ok(self.policies.insert(policy.id.clone(), policy))
    }

    pub fn remove_policy(&mut self, id: &str) -> Option<DecisionPolicy> {
        self.policies.remove(id)
    }

    pub fn get_policy_for_key(&self, id: &str) -> Result<&DecisionPolicy, PolicyError> {
        self.policies
            .get(id)
            .ok_or_else(|| PolicyError::PolicyNotFound(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.policies.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Applies a mutation to a stored policy. The result must still
    /// validate, otherwise nothing is committed.
    pub fn update_policy(&mut self, id: &str, mutation: PolicyMutation) -> Result<(), PolicyError> {
        let mut draft = self.get_policy_for_key(id)?.clone();
        let bounds = |index: usize, len: usize| -> Result<(), PolicyError> {
            if index >= len {
                Err(PolicyError::IndexOutOfRange {
                    policy: id.to_string(),
                    index,
                })
            } else {
                Ok(())
            }
        };
        match mutation {
            PolicyMutation::SetSuit(suit) => draft.suit = suit,
            PolicyMutation::SetRule(index, rule) => {
                bounds(index, draft.rules.len())?;
                draft.rules[index] = rule;
            }
            PolicyMutation::SetAction(index, actions) => {
                bounds(index, draft.rules.len())?;
                draft.rules[index].actions = actions;
            }
            PolicyMutation::SetElseAction(index, actions) => {
                bounds(index, draft.rules.len())?;
                draft.rules[index].else_actions = actions;
            }
        }
        draft.validate()?;
        self.policies.insert(id.to_string(), draft);
        Ok(())
    }
}

/// Inputs shared by every policy evaluated for one event.
pub struct EvalContext<'a> {
    pub repo: &'a PolicyRepository,
    /// Committed entity values, keyed by entity name.
    pub snapshot: &'a BTreeMap<String, Value>,
    /// The selector of the notification being reacted to, if any. Rules
    /// with a different trigger sit the evaluation out.
    pub trigger: Option<&'a Selector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Then,
    Else,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiredRule {
    pub policy: String,
    pub rule_index: usize,
    pub branch: Branch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    /// Rules whose condition was evaluated, in firing order, chained
    /// policies included.
    pub fired: Vec<FiredRule>,
    /// Adaptation actions contributed, in firing order.
    pub actions: Vec<AdaptationAction>,
    /// The whole internal-variable store with this evaluation's
    /// assignments applied. The caller decides whether to commit it.
    pub updated_internals: BTreeMap<String, BTreeMap<String, Value>>,
    /// Number of participating rule conditions evaluated.
    pub rules_evaluated: u64,
}

/// Evaluates one policy (and anything it chains to) against a context
/// snapshot. `internals` maps policy id to that policy's variable store;
/// missing entries are seeded from the declared initial values.
pub fn evaluate_policy(
    ctx: &EvalContext,
    policy_id: &str,
    internals: &BTreeMap<String, BTreeMap<String, Value>>,
) -> Result<EvaluationResult, PolicyError> {
    let mut result = EvaluationResult {
        fired: Vec::new(),
        actions: Vec::new(),
        updated_internals: internals.clone(),
        rules_evaluated: 0,
    };
    eval_into(ctx, policy_id, 0, &mut result)?;
    Ok(result)
}

fn eval_into(
    ctx: &EvalContext,
    policy_id: &str,
    depth: usize,
    out: &mut EvaluationResult,
) -> Result<(), PolicyError> {
    let policy = ctx.repo.get_policy_for_key(policy_id)?.clone();
    if !out.updated_internals.contains_key(policy_id) {
        out.updated_internals
            .insert(policy_id.to_string(), policy.initial_internals());
    }

    for (index, rule) in policy.rules.iter().enumerate() {
        let participates = match (&rule.trigger, ctx.trigger) {
            (None, _) => true,
            (Some(t), Some(ambient)) => t == ambient,
            (Some(_), None) => false,
        };
        if !participates {
            continue;
        }

        let own = out
            .updated_internals
            .get(policy_id)
            .expect("seeded above")
            .clone();
        let lookup = |name: &str| -> Option<Value> {
            if let Some(v) = own.get(name) {
                return Some(v.clone());
            }
            let entity = policy
                .external_vars
                .iter()
                .find(|e| e.name == name)
                .map(|e| e.entity.as_str())?;
            ctx.snapshot.get(entity).cloned()
        };

        out.rules_evaluated += 1;
        let verdict = rule.condition.eval(&lookup).map_err(|e| match e {
            ExprEvalError::UnboundVariable(variable) => {
                let entity = policy
                    .external_vars
                    .iter()
                    .find(|v| v.name == variable)
                    .map(|v| v.entity.clone())
                    .unwrap_or_default();
                PolicyError::UnboundExternalVariable {
                    policy: policy_id.to_string(),
                    variable,
                    entity,
                }
            }
            other => PolicyError::Condition {
                policy: policy_id.to_string(),
                source: other,
            },
        })?;

        let (branch, items) = if verdict {
            (Branch::Then, &rule.actions)
        } else {
            (Branch::Else, &rule.else_actions)
        };
        out.fired.push(FiredRule {
            policy: policy_id.to_string(),
            rule_index: index,
            branch,
        });

        for item in items {
            match item {
                ActionItem::Adapt(action) => out.actions.push(action.clone()),
                ActionItem::SetInternal { name, value } => {
                    let ty = policy
                        .internal_vars
                        .iter()
                        .find(|v| v.name == *name)
                        .map(|v| v.ty)
                        .expect("validated at add time");
                    if !ty.matches(value) {
                        return Err(PolicyError::InvalidAssignment {
                            policy: policy_id.to_string(),
                            variable: name.clone(),
                            expected: ty.name(),
                            found: value.type_name(),
                        });
                    }
                    out.updated_internals
                        .get_mut(policy_id)
                        .expect("seeded above")
                        .insert(name.clone(), value.clone());
                }
                ActionItem::Evaluate { policy: next } => {
                    if depth >= MAX_CHAIN_DEPTH {
                        return Err(PolicyError::ChainDepthExceeded {
                            policy: next.clone(),
                        });
                    }
                    eval_into(ctx, next, depth + 1, out)?;
                }
            }
        }
    }
    Ok(())
}
