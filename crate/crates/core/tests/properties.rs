//! Randomized cross-checks of the middleware against independent models:
//! a from-scratch reimplementation of the four-stage dispatch rules, an
//! association-list model of the policy repository, structural checks on
//! the event stream, and round-trip identities for expressions and plans.

use cosm_core::adl;
use cosm_core::adaptation::{self, AdaptationAction};
use cosm_core::context::{ChangePhase, ContextManager, HISTORY_BOUND};
use cosm_core::ecampus;
use cosm_core::kernel::{
    self, App, Component, ComponentGraph, DispatchPath, FactoryRegistry, Handler, KernelError,
    Layer, LocalState, Message, ProtocolEntry, Selector,
};
use cosm_core::metrics::CostModel;
use cosm_core::policy::{
    BoolExpr, Comparator, DecisionPolicy, InternalVar, PolicyRepository, Rule, VarType,
};
use cosm_core::value::Value;
use cosm_core::verification;
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

const COMP_IDS: [&str; 4] = ["Alpha", "Beta", "Gamma", "Delta"];
const SELECTORS: [&str; 5] = ["ping", "poke", "query", "render", "sync"];
const LAYER_IDS: [&str; 3] = ["base", "turbo", "eco"];

fn sel(s: &str) -> Selector {
    Selector::new(s).unwrap()
}

// ---------------------------------------------------------------------
// Dispatch soundness: an abstract component description is realized as a
// real graph and dispatched through the kernel; the expected path comes
// from a separate, direct transcription of the four-stage rules.

#[derive(Clone, Debug)]
struct RefLayer {
    id: String,
    selectors: Vec<String>,
    active: bool,
}

#[derive(Clone, Debug)]
struct RefComp {
    id: String,
    statics: Vec<String>,
    layers: Vec<RefLayer>,
    protocol: Vec<(String, bool)>,
    delegate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum RefPath {
    Static,
    TableLayer(String),
    Delegated(String, Option<String>),
    Chain(String),
    Unrecognized,
}

fn ref_responds_to(c: &RefComp, selector: &str) -> bool {
    c.statics.iter().any(|s| s == selector)
        || c.layers
            .iter()
            .any(|l| l.active && l.selectors.iter().any(|s| s == selector))
}

fn ref_conforms(c: &RefComp) -> bool {
    c.protocol
        .iter()
        .filter(|(_, required)| *required)
        .all(|(s, _)| ref_responds_to(c, s))
}

// Table (static, then the first declaring layer if it happens to be
// active), then the chain of active layers. No delegation.
fn ref_local(c: &RefComp, selector: &str) -> Option<RefPath> {
    if c.statics.iter().any(|s| s == selector) {
        return Some(RefPath::Static);
    }
    if let Some(owner) = c.layers.iter().find(|l| l.selectors.iter().any(|s| s == selector)) {
        if owner.active {
            return Some(RefPath::TableLayer(owner.id.clone()));
        }
    }
    c.layers
        .iter()
        .find(|l| l.active && l.selectors.iter().any(|s| s == selector))
        .map(|l| RefPath::Chain(l.id.clone()))
}

fn ref_dispatch(comps: &BTreeMap<String, RefComp>, target: &str, selector: &str) -> RefPath {
    let c = &comps[target];
    if c.statics.iter().any(|s| s == selector) {
        return RefPath::Static;
    }
    if let Some(owner) = c.layers.iter().find(|l| l.selectors.iter().any(|s| s == selector)) {
        if owner.active {
            return RefPath::TableLayer(owner.id.clone());
        }
    }
    if let Some(d_id) = &c.delegate {
        if let Some(d) = comps.get(d_id) {
            let advertised = d.protocol.iter().any(|(s, _)| s == selector);
            if advertised && ref_conforms(d) {
                if let Some(inner) = ref_local(d, selector) {
                    let layer = match inner {
                        RefPath::Static => None,
                        RefPath::TableLayer(l) | RefPath::Chain(l) => Some(l),
                        _ => unreachable!(),
                    };
                    return RefPath::Delegated(d_id.clone(), layer);
                }
            }
        }
    }
    if let Some(l) = c
        .layers
        .iter()
        .find(|l| l.active && l.selectors.iter().any(|s| s == selector))
    {
        return RefPath::Chain(l.id.clone());
    }
    RefPath::Unrecognized
}

fn realize(rc: &RefComp) -> Component {
    let handler = |s: &str| {
        Handler::new(sel(s), 0, |_: &mut LocalState, _: &[Value]| Value::Bool(true))
    };
    Component {
        id: rc.id.clone(),
        kind: rc.id.clone(),
        static_handlers: rc.statics.iter().map(|s| handler(s)).collect(),
        layers: rc
            .layers
            .iter()
            .map(|l| Layer {
                id: l.id.clone(),
                policy: None,
                style: None,
                active: l.active,
                handlers: l.selectors.iter().map(|s| handler(s)).collect(),
            })
            .collect(),
        protocol: rc
            .protocol
            .iter()
            .map(|(s, required)| ProtocolEntry { selector: sel(s), required: *required })
            .collect(),
        delegate: rc.delegate.clone(),
        observes: vec![],
        state: LocalState::new(),
    }
}

fn ref_comp_strategy(index: usize) -> impl Strategy<Value = RefComp> {
    let statics = proptest::sample::subsequence(SELECTORS.to_vec(), 0..=2);
    let layers = proptest::collection::vec(
        proptest::option::of((
            proptest::sample::subsequence(SELECTORS.to_vec(), 0..=3),
            any::<bool>(),
        )),
        LAYER_IDS.len(),
    );
    let protocol = proptest::collection::btree_map(0..SELECTORS.len(), any::<bool>(), 0..4);
    let delegate = proptest::option::of(0..COMP_IDS.len());
    (statics, layers, protocol, delegate).prop_map(move |(statics, layers, protocol, delegate)| {
        RefComp {
            id: COMP_IDS[index].to_string(),
            statics: statics.iter().map(|s| s.to_string()).collect(),
            layers: layers
                .into_iter()
                .enumerate()
                .filter_map(|(slot, spec)| {
                    spec.map(|(sels, active)| RefLayer {
                        id: LAYER_IDS[slot].to_string(),
                        selectors: sels.iter().map(|s| s.to_string()).collect(),
                        active,
                    })
                })
                .collect(),
            protocol: protocol
                .into_iter()
                .map(|(i, required)| (SELECTORS[i].to_string(), required))
                .collect(),
            delegate: delegate.map(|i| COMP_IDS[i].to_string()),
        }
    })
}

fn graph_strategy() -> impl Strategy<Value = BTreeMap<String, RefComp>> {
    (
        ref_comp_strategy(0),
        ref_comp_strategy(1),
        ref_comp_strategy(2),
        ref_comp_strategy(3),
    )
        .prop_map(|(a, b, c, d)| {
            [a, b, c, d]
                .into_iter()
                .map(|rc| (rc.id.clone(), rc))
                .collect()
        })
}

proptest! {
    #[test]
    fn dispatch_agrees_with_the_rules_model(
        ref_graph in graph_strategy(),
        target_idx in 0..COMP_IDS.len(),
        selector_idx in 0..SELECTORS.len(),
    ) {
        let target = COMP_IDS[target_idx];
        let selector = SELECTORS[selector_idx];

        let mut graph = ComponentGraph::default();
        for rc in ref_graph.values() {
            graph.insert(realize(rc));
        }
        let mut app = App::new(graph, FactoryRegistry::new(), CostModel::default());

        let expected = ref_dispatch(&ref_graph, target, selector);
        let mut msg = Message::new(sel(selector), vec![]);
        let got = kernel::send_message(&mut app, target, &mut msg, false);

        match (got, expected) {
            (Ok(DispatchPath::Static), RefPath::Static) => {}
            (Ok(DispatchPath::TableLayer { layer }), RefPath::TableLayer(l)) => {
                prop_assert_eq!(layer, l)
            }
            (Ok(DispatchPath::Delegated { to, layer }), RefPath::Delegated(d, l)) => {
                prop_assert_eq!(to, d);
                prop_assert_eq!(layer, l);
            }
            (Ok(DispatchPath::Chain { layer }), RefPath::Chain(l)) => {
                prop_assert_eq!(layer, l)
            }
            (Err(KernelError::DoesNotRecognize { .. }), RefPath::Unrecognized) => {}
            (got, expected) => {
                prop_assert!(false, "kernel said {:?}, rules model said {:?}", got, expected)
            }
        }

        // A handled message always carries a return value, an unhandled
        // one never does.
        let responds = ref_responds_to(&ref_graph[target], selector);
        let handled_locally_or_via_delegate = msg.get_return().is_some();
        let comp = app.graph.component(target).unwrap();
        prop_assert_eq!(comp.responds_to(&sel(selector)), responds);
        prop_assert_eq!(
            handled_locally_or_via_delegate,
            !matches!(ref_dispatch(&ref_graph, target, selector), RefPath::Unrecognized)
        );
    }
}

// ---------------------------------------------------------------------
// Policy repository vs an association-list model.

#[derive(Clone, Debug)]
enum RepoOp {
    Add(usize, usize),
    Remove(usize),
    Mutate(usize, usize),
}

const POLICY_IDS: [&str; 3] = ["power", "detail", "net"];
const SUITS: [&str; 4] = ["s0", "s1", "s2", "s3"];

fn tiny_policy(id: &str, suit: &str) -> DecisionPolicy {
    DecisionPolicy {
        id: id.to_string(),
        suit: suit.to_string(),
        style: None,
        internal_vars: vec![InternalVar {
            name: "x".to_string(),
            ty: VarType::Number,
            initial: Value::Number(0.0),
        }],
        external_vars: vec![],
        rules: vec![Rule {
            trigger: None,
            condition: BoolExpr::parse("x == 0").unwrap(),
            actions: vec![],
            else_actions: vec![],
        }],
        goals: vec![],
    }
}

fn repo_op_strategy() -> impl Strategy<Value = RepoOp> {
    prop_oneof![
        (0..POLICY_IDS.len(), 0..SUITS.len()).prop_map(|(i, s)| RepoOp::Add(i, s)),
        (0..POLICY_IDS.len()).prop_map(RepoOp::Remove),
        (0..POLICY_IDS.len(), 0..SUITS.len()).prop_map(|(i, s)| RepoOp::Mutate(i, s)),
    ]
}

proptest! {
    #[test]
    fn repository_matches_the_association_list_model(
        ops in proptest::collection::vec(repo_op_strategy(), 0..40)
    ) {
        let mut repo = PolicyRepository::new();
        let mut model: Vec<(String, String)> = Vec::new();

        for op in ops {
            match op {
                RepoOp::Add(i, s) => {
                    let id = POLICY_IDS[i];
                    let suit = SUITS[s];
                    let previous = repo.add_policy(tiny_policy(id, suit)).unwrap();
                    let slot = model.iter_mut().find(|(mid, _)| mid == id);
                    match slot {
                        Some((_, msuit)) => {
                            prop_assert_eq!(previous.map(|p| p.suit), Some(msuit.clone()));
                            *msuit = suit.to_string();
                        }
                        None => {
                            prop_assert!(previous.is_none());
                            model.push((id.to_string(), suit.to_string()));
                        }
                    }
                }
                RepoOp::Remove(i) => {
                    let id = POLICY_IDS[i];
                    let removed = repo.remove_policy(id);
                    let had = model.iter().any(|(mid, _)| mid == id);
                    prop_assert_eq!(removed.is_some(), had);
                    model.retain(|(mid, _)| mid != id);
                }
                RepoOp::Mutate(i, s) => {
                    let id = POLICY_IDS[i];
                    let result = repo.update_policy(
                        id,
                        cosm_core::policy::PolicyMutation::SetSuit(SUITS[s].to_string()),
                    );
                    match model.iter_mut().find(|(mid, _)| mid == id) {
                        Some((_, msuit)) => {
                            prop_assert!(result.is_ok());
                            *msuit = SUITS[s].to_string();
                        }
                        None => prop_assert!(result.is_err()),
                    }
                }
            }

            prop_assert_eq!(repo.len(), model.len());
            prop_assert_eq!(repo.is_empty(), model.is_empty());
            let mut expected_ids: Vec<&str> = model.iter().map(|(id, _)| id.as_str()).collect();
            expected_ids.sort_unstable();
            prop_assert_eq!(repo.ids().collect::<Vec<_>>(), expected_ids);
            for (id, suit) in &model {
                prop_assert!(repo.contains(id));
                prop_assert_eq!(&repo.get_policy_for_key(id).unwrap().suit, suit);
            }
        }
    }
}

// ---------------------------------------------------------------------
// Event stream shape: Will/Did pairing, FIFO order, consecutive sequence
// numbers, suppression of equal values, bounded history.

const ENTITIES: [&str; 3] = ["BatteryLevel", "Speed", "Bandwidth"];

proptest! {
    #[test]
    fn event_stream_is_paired_ordered_and_bounded(
        senses in proptest::collection::vec((0..ENTITIES.len(), 0i64..4), 1..120)
    ) {
        let cm = ContextManager::new();
        let mut expected_values: BTreeMap<&str, Value> = BTreeMap::new();
        let mut expected_events = 0u64;
        let mut per_entity: BTreeMap<&str, Vec<f64>> = BTreeMap::new();

        for (idx, raw) in &senses {
            let entity = ENTITIES[*idx];
            let value = Value::Number(*raw as f64);
            let emitted = cm.sense(entity, value.clone()).unwrap();
            let suppressed = expected_values.get(entity) == Some(&value);
            prop_assert_eq!(emitted.is_none(), suppressed);
            if !suppressed {
                expected_events += 2;
                expected_values.insert(entity, value);
                per_entity.entry(entity).or_default().push(*raw as f64);
            }
        }

        let events: Vec<_> = std::iter::from_fn(|| cm.pop_event()).collect();
        prop_assert_eq!(events.len() as u64, expected_events);
        for (i, event) in events.iter().enumerate() {
            prop_assert_eq!(event.seq, i as u64 + 1, "seqs are consecutive from 1");
        }
        for pair in events.chunks(2) {
            let (will, did) = (&pair[0], &pair[1]);
            prop_assert_eq!(will.phase, ChangePhase::Will);
            prop_assert_eq!(did.phase, ChangePhase::Did);
            prop_assert_eq!(&will.entity, &did.entity);
            prop_assert_eq!(will.timestamp, did.timestamp);
            prop_assert_eq!(&will.new, &did.new);
            prop_assert_eq!(&will.old, &did.old);
        }

        for (entity, values) in per_entity {
            let history = cm.history(entity);
            prop_assert!(history.len() <= HISTORY_BOUND);
            let tail: Vec<f64> = values
                .iter()
                .rev()
                .take(HISTORY_BOUND)
                .rev()
                .copied()
                .collect();
            let stored: Vec<f64> = history
                .iter()
                .map(|(_, v)| v.as_number().unwrap())
                .collect();
            prop_assert_eq!(stored, tail);
            prop_assert_eq!(
                cm.value_of(entity),
                Some(Value::Number(*values.last().unwrap()))
            );
        }
    }
}

// ---------------------------------------------------------------------
// Expression display/parse identity over random trees.

fn literal_strategy() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-1_000_000i64..1_000_000).prop_map(|n| Value::Number(n as f64)),
        (-1000.0f64..1000.0).prop_map(Value::Number),
        any::<bool>().prop_map(Value::Bool),
        "[a-z ._:-]{0,12}".prop_map(Value::Str),
    ]
}

fn cmp_strategy() -> impl Strategy<Value = BoolExpr> {
    let var = proptest::sample::select(vec!["battery", "speed_now", "mode", "x1"]);
    (var, any::<u8>(), literal_strategy()).prop_map(|(var, op_seed, lit)| {
        // Ordering comparators require numeric literals; equality works
        // everywhere. Mirror the parser's static rule.
        let ops: &[Comparator] = if matches!(lit, Value::Number(_)) {
            &[
                Comparator::Lt,
                Comparator::Le,
                Comparator::Eq,
                Comparator::Ne,
                Comparator::Ge,
                Comparator::Gt,
            ]
        } else {
            &[Comparator::Eq, Comparator::Ne]
        };
        BoolExpr::Cmp {
            var: var.to_string(),
            op: ops[op_seed as usize % ops.len()],
            lit,
        }
    })
}

fn expr_strategy() -> impl Strategy<Value = BoolExpr> {
    cmp_strategy().prop_recursive(4, 64, 8, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| BoolExpr::Not(Box::new(e))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| BoolExpr::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner)
                .prop_map(|(a, b)| BoolExpr::Or(Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #[test]
    fn expression_display_reparses_to_the_same_tree(expr in expr_strategy()) {
        let text = expr.to_string();
        let reparsed = BoolExpr::parse(&text)
            .unwrap_or_else(|e| panic!("`{text}` failed to reparse: {e}"));
        prop_assert_eq!(reparsed, expr);
    }
}

// ---------------------------------------------------------------------
// Plan normalization and execution over the demo fixture: composing is
// idempotent, and every executed plan explains its digest transition.

fn demo_app() -> App {
    let f = ecampus::fixture();
    let app = adl::instantiate_app(&f.doc, f.factories, CostModel::default()).unwrap();
    for (entity, value) in &f.entities {
        app.context.prime(entity, value.clone()).unwrap();
    }
    app
}

fn fixture_action_strategy() -> impl Strategy<Value = AdaptationAction> {
    let toggles = proptest::sample::select(vec![
        ("LocationManager", "gps"),
        ("LocationManager", "wifi"),
        ("LocationManager", "cell"),
        ("FeatureFilter", "full"),
        ("FeatureFilter", "reduced"),
    ]);
    prop_oneof![
        4 => (toggles, any::<bool>()).prop_map(|((component, layer), on)| {
            if on {
                AdaptationAction::ActivateLayer {
                    component: component.to_string(),
                    layer: layer.to_string(),
                }
            } else {
                AdaptationAction::DeactivateLayer {
                    component: component.to_string(),
                    layer: layer.to_string(),
                }
            }
        }),
        1 => Just(AdaptationAction::LoadComponent { component: "WifiLocation".to_string() }),
        1 => Just(AdaptationAction::RebindDelegate {
            component: "MapView".to_string(),
            target: "WifiLocation".to_string(),
        }),
        1 => Just(AdaptationAction::RebindDelegate {
            component: "MapView".to_string(),
            target: "LocationManager".to_string(),
        }),
        1 => Just(AdaptationAction::InvokeSelector {
            component: "MapView".to_string(),
            selector: Selector::new("renderMap").unwrap(),
            args: vec![],
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn composition_is_idempotent_and_executions_explain_their_digests(
        actions in proptest::collection::vec(fixture_action_strategy(), 0..10)
    ) {
        let mut app = demo_app();

        let plan = adaptation::compose(&mut app, actions);
        let again = adaptation::compose(&mut app, plan.actions.clone());
        prop_assert_eq!(&again.actions, &plan.actions, "normalization must be a fixed point");

        let verdict = verification::verify_plan(&app, &plan);
        if verdict.verified {
            let before_roster: BTreeSet<String> =
                app.graph.components.keys().cloned().collect();
            match adaptation::execute(&mut app, &plan, &verdict) {
                Ok(record) => {
                    prop_assert!(verification::state_transition_check(
                        &record.before,
                        &plan,
                        &record.after
                    ));
                    prop_assert_eq!(record.step_count, plan.actions.len());
                }
                Err(err) => {
                    // Execution may only fail for runtime reasons the
                    // verifier cannot see; none exist in this generator.
                    prop_assert!(false, "verified plan failed: {err}");
                }
            }
            let _ = before_roster;
        }
    }
}
