//! The component kernel.
//!
//! A component couples a context-independent static part with any number of
//! layers that can be activated and deactivated at run time. Messages are
//! addressed to a component by selector and resolved in four stages:
//!
//! 1. dispatch table: the statically known implementation (static part
//!    first, then layers in declaration order). A table hit only executes
//!    if its owning layer is active.
//! 2. delegate forwarding: if the component has a delegate whose declared
//!    protocol advertises the selector and the delegate actually conforms,
//!    the message executes there. Delegation is never transitive.
//! 3. chain of responsibility: the first active layer, in declaration
//!    order, that implements the selector.
//! 4. unrecognized selector: with recovery enabled the adaptation hook gets
//!    one shot at changing the configuration, then the send is retried once.
//!
//! Layer activation state is the only dynamic dispatch input, so the same
//! graph and the same activations always resolve identically.

use crate::adaptation::{self, AdaptationRecord};
use crate::context::ContextManager;
use crate::metrics::{CostModel, MetricsSink};
use crate::policy::{DecisionPolicy, PolicyError, PolicyRepository};
use crate::value::Value;
use crate::verification::VerificationOutcome;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// The kind every component answers to, whatever its declared kind.
pub const ROOT_KIND: &str = "Component";

/// A message or notification name: one alphanumeric word starting with a
/// letter, e.g. `locationFix` or `BatteryLevelDidChange`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selector(String);

impl Selector {
    pub fn new(name: &str) -> Result<Selector, KernelError> {
        let mut chars = name.chars();
        let head_ok = chars.next().map(|c| c.is_ascii_alphabetic()).unwrap_or(false);
        if head_ok && chars.all(|c| c.is_ascii_alphanumeric()) {
            Ok(Selector(name.to_string()))
        } else {
            Err(KernelError::BadSelector(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("`{0}` is not a valid selector")]
    BadSelector(String),
    #[error("no component `{0}` in the graph")]
    UnknownTarget(String),
    #[error("component `{component}` does not recognize selector `{selector}`")]
    DoesNotRecognize { component: String, selector: String },
    #[error("no factory registered for component `{0}`")]
    ComponentNotFound(String),
    #[error("component `{component}` has no layer `{layer}`")]
    NoSuchLayer { component: String, layer: String },
}

/// Per-component mutable state, visible to that component's handlers only.
pub type LocalState = BTreeMap<String, Value>;

pub type HandlerFn = Arc<dyn Fn(&mut LocalState, &[Value]) -> Value + Send + Sync>;

#[derive(Clone)]
pub struct Handler {
    pub selector: Selector,
    pub func: HandlerFn,
    /// Work units charged each time the handler runs.
    pub cost_units: u64,
}

impl Handler {
    pub fn new<F>(selector: Selector, cost_units: u64, func: F) -> Handler
    where
        F: Fn(&mut LocalState, &[Value]) -> Value + Send + Sync + 'static,
    {
        Handler {
            selector,
            func: Arc::new(func),
            cost_units,
        }
    }
}

impl fmt::Debug for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Handler")
            .field("selector", &self.selector)
            .field("cost_units", &self.cost_units)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub id: String,
    /// The decision policy that drives this layer, if any.
    pub policy: Option<String>,
    /// Grouping tag; layers sharing an `exclusive:<group>` style never stay
    /// active together once a plan touches the group.
    pub style: Option<String>,
    pub active: bool,
    pub handlers: Vec<Handler>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolEntry {
    pub selector: Selector,
    pub required: bool,
}

#[derive(Clone, Debug)]
pub struct Component {
    pub id: String,
    pub kind: String,
    pub static_handlers: Vec<Handler>,
    pub layers: Vec<Layer>,
    /// What this component advertises to components delegating to it, and
    /// what its own delegate must serve.
    pub protocol: Vec<ProtocolEntry>,
    pub delegate: Option<String>,
    /// Context entities whose notifications this component observes.
    pub observes: Vec<String>,
    pub state: LocalState,
}

/// Where the dispatch table points for a selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandlerRef {
    Static(usize),
    InLayer { layer: usize, handler: usize },
}

impl Component {
    pub fn layer(&self, id: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn layer_mut(&mut self, id: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.id == id)
    }

    /// The statically known implementation: static part first, then layers
    /// in declaration order, active or not.
    pub fn method_for_selector(&self, selector: &Selector) -> Option<HandlerRef> {
        if let Some(i) = self
            .static_handlers
            .iter()
            .position(|h| &h.selector == selector)
        {
            return Some(HandlerRef::Static(i));
        }
        for (li, layer) in self.layers.iter().enumerate() {
            if let Some(hi) = layer.handlers.iter().position(|h| &h.selector == selector) {
                return Some(HandlerRef::InLayer { layer: li, handler: hi });
            }
        }
        None
    }

    fn first_active_handler(&self, selector: &Selector) -> Option<HandlerRef> {
        for (li, layer) in self.layers.iter().enumerate() {
            if !layer.active {
                continue;
            }
            if let Some(hi) = layer.handlers.iter().position(|h| &h.selector == selector) {
                return Some(HandlerRef::InLayer { layer: li, handler: hi });
            }
        }
        None
    }

    /// Whether a message sent right now could execute here: a static
    /// handler or one in a currently active layer.
    pub fn responds_to(&self, selector: &Selector) -> bool {
        self.static_handlers.iter().any(|h| &h.selector == selector)
            || self.first_active_handler(selector).is_some()
    }

    pub fn is_kind_of(&self, kind: &str) -> bool {
        kind == ROOT_KIND || self.kind == kind
    }

    /// Conformance: every required selector of the protocol answered under
    /// the current activation state. Optional entries never gate.
    pub fn conforms_to(&self, protocol: &[ProtocolEntry]) -> bool {
        protocol
            .iter()
            .filter(|e| e.required)
            .all(|e| self.responds_to(&e.selector))
    }

    fn handler(&self, r: HandlerRef) -> &Handler {
        match r {
            HandlerRef::Static(i) => &self.static_handlers[i],
            HandlerRef::InLayer { layer, handler } => &self.layers[layer].handlers[handler],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectorKind {
    Delegate,
    Message,
    Adaptor,
}

impl ConnectorKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectorKind::Delegate => "delegate",
            ConnectorKind::Message => "message",
            ConnectorKind::Adaptor => "adaptor",
        }
    }

    pub fn from_name(name: &str) -> Option<ConnectorKind> {
        Some(match name {
            "delegate" => ConnectorKind::Delegate,
            "message" => ConnectorKind::Message,
            "adaptor" => ConnectorKind::Adaptor,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connector {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: ConnectorKind,
}

#[derive(Clone, Debug, Default)]
pub struct ComponentGraph {
    pub components: BTreeMap<String, Component>,
    pub connectors: Vec<Connector>,
    /// Configuration properties, e.g. `maxComponents`.
    pub properties: BTreeMap<String, Value>,
}

impl ComponentGraph {
    pub fn component(&self, id: &str) -> Result<&Component, KernelError> {
        self.components
            .get(id)
            .ok_or_else(|| KernelError::UnknownTarget(id.to_string()))
    }

    pub fn component_mut(&mut self, id: &str) -> Result<&mut Component, KernelError> {
        self.components
            .get_mut(id)
            .ok_or_else(|| KernelError::UnknownTarget(id.to_string()))
    }

    pub fn insert(&mut self, component: Component) {
        self.components.insert(component.id.clone(), component);
    }

    /// Flips a layer and reports whether anything changed.
    pub fn set_layer_active(
        &mut self,
        component: &str,
        layer: &str,
        active: bool,
    ) -> Result<bool, KernelError> {
        let comp = self.component_mut(component)?;
        let id = comp.id.clone();
        let l = comp.layer_mut(layer).ok_or_else(|| KernelError::NoSuchLayer {
            component: id,
            layer: layer.to_string(),
        })?;
        let changed = l.active != active;
        l.active = active;
        Ok(changed)
    }

    /// Re-points the component's delegate binding, keeping any delegate
    /// connector in the description in step.
    pub fn rebind_delegate(&mut self, component: &str, target: &str) -> Result<bool, KernelError> {
        let comp = self.component_mut(component)?;
        let changed = comp.delegate.as_deref() != Some(target);
        comp.delegate = Some(target.to_string());
        for c in &mut self.connectors {
            if c.kind == ConnectorKind::Delegate && c.from == component {
                c.to = target.to_string();
            }
        }
        Ok(changed)
    }
}

pub type ComponentFactory = Arc<dyn Fn() -> Component + Send + Sync>;

/// Loadable component constructors, keyed by component id. Factories build
/// components with every layer inactive; activation is configuration.
#[derive(Clone, Default)]
pub struct FactoryRegistry {
    factories: BTreeMap<String, ComponentFactory>,
}

impl FactoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, id: &str, factory: F)
    where
        F: Fn() -> Component + Send + Sync + 'static,
    {
        self.factories.insert(id.to_string(), Arc::new(factory));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.factories.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(|s| s.as_str())
    }

    pub fn instantiate(&self, id: &str) -> Result<Component, KernelError> {
        let factory = self
            .factories
            .get(id)
            .ok_or_else(|| KernelError::ComponentNotFound(id.to_string()))?;
        Ok(factory())
    }
}

impl fmt::Debug for FactoryRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactoryRegistry")
            .field("ids", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub selector: Selector,
    pub args: Vec<Value>,
    return_value: Option<Value>,
}

impl Message {
    pub fn new(selector: Selector, args: Vec<Value>) -> Message {
        Message {
            selector,
            args,
            return_value: None,
        }
    }

    pub fn get_return(&self) -> Option<&Value> {
        self.return_value.as_ref()
    }

    /// Overwrites the return slot; an adaptor sitting between sender and
    /// receiver uses this to rewrite results.
    pub fn set_return(&mut self, value: Value) {
        self.return_value = Some(value);
    }

    pub fn take_return(&mut self) -> Option<Value> {
        self.return_value.take()
    }
}

/// How a send was resolved, for logs and assertions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DispatchPath {
    /// Table hit on the static part.
    Static,
    /// Table hit on a declared layer that happened to be active.
    TableLayer { layer: String },
    /// Forwarded to the delegate, which ran its static part or a layer.
    Delegated { to: String, layer: Option<String> },
    /// Chain of responsibility found a later active layer.
    Chain { layer: String },
    /// The adaptation hook changed the configuration and the retry took
    /// the wrapped path.
    Recovered(Box<DispatchPath>),
}

/// One running application: the live graph plus everything the reaction
/// pipeline needs to notice changes, decide, and adapt.
pub struct App {
    pub graph: ComponentGraph,
    pub context: Arc<ContextManager>,
    pub policies: PolicyRepository,
    /// Component id to the policies attached to it, in attachment order.
    pub attachments: BTreeMap<String, Vec<String>>,
    /// Policy id to its internal-variable store.
    pub internals: BTreeMap<String, BTreeMap<String, Value>>,
    pub factories: FactoryRegistry,
    pub metrics: MetricsSink,
    /// Named observables for goal checks, e.g. gauges fed by the harness.
    pub gauges: BTreeMap<String, f64>,
    pub adaptation_log: Vec<AdaptationRecord>,
    /// Failed policy or plan verdicts, kept for diagnosis.
    pub verification_log: Vec<VerificationOutcome>,
    next_plan_id: u64,
}

impl App {
    pub fn new(graph: ComponentGraph, factories: FactoryRegistry, model: CostModel) -> App {
        App {
            graph,
            context: Arc::new(ContextManager::new()),
            policies: PolicyRepository::new(),
            attachments: BTreeMap::new(),
            internals: BTreeMap::new(),
            factories,
            metrics: MetricsSink::new(model),
            gauges: BTreeMap::new(),
            adaptation_log: Vec::new(),
            verification_log: Vec::new(),
            next_plan_id: 1,
        }
    }

    /// Stores a policy, replacing any previous one under the same id and
    /// resetting that policy's internal variables to their initials.
    pub fn add_policy(
        &mut self,
        policy: DecisionPolicy,
    ) -> Result<Option<DecisionPolicy>, PolicyError> {
        let initials = policy.initial_internals();
        let id = policy.id.clone();
        let replaced = self.policies.add_policy(policy)?;
        self.internals.insert(id, initials);
        Ok(replaced)
    }

    pub fn attach_policy(&mut self, component: &str, policy: &str) {
        let list = self.attachments.entry(component.to_string()).or_default();
        if !list.iter().any(|p| p == policy) {
            list.push(policy.to_string());
        }
    }

    pub fn attached_policies(&self, component: &str) -> &[String] {
        self.attachments
            .get(component)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn next_plan_id(&mut self) -> u64 {
        let id = self.next_plan_id;
        self.next_plan_id += 1;
        id
    }
}

impl fmt::Debug for App {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("App")
            .field("components", &self.graph.components.keys().collect::<Vec<_>>())
            .field("policies", &self.policies.ids().collect::<Vec<_>>())
            .finish()
    }
}

fn run_handler(
    app: &mut App,
    component: &str,
    r: HandlerRef,
    msg: &mut Message,
) -> Result<(), KernelError> {
    let (func, cost) = {
        let comp = app.graph.component(component)?;
        let h = comp.handler(r);
        (h.func.clone(), h.cost_units)
    };
    let comp = app.graph.component_mut(component)?;
    let ret = func(&mut comp.state, &msg.args);
    msg.set_return(ret);
    app.metrics.charge("handler", cost);
    Ok(())
}

/// Resolves locally: dispatch table first (stage 1), then the chain of
/// active layers (stage 3). Used both for direct targets and for the body
/// of a forwarded message.
fn resolve_local(comp: &Component, selector: &Selector) -> Option<(HandlerRef, DispatchPath)> {
    match comp.method_for_selector(selector) {
        Some(HandlerRef::Static(i)) => {
            return Some((HandlerRef::Static(i), DispatchPath::Static));
        }
        Some(HandlerRef::InLayer { layer, handler }) if comp.layers[layer].active => {
            return Some((
                HandlerRef::InLayer { layer, handler },
                DispatchPath::TableLayer { layer: comp.layers[layer].id.clone() },
            ));
        }
        _ => {}
    }
    comp.first_active_handler(selector).map(|r| {
        let layer = match r {
            HandlerRef::InLayer { layer, .. } => comp.layers[layer].id.clone(),
            HandlerRef::Static(_) => unreachable!("chain only walks layers"),
        };
        (r, DispatchPath::Chain { layer })
    })
}

/// Sends a message. With `allow_recovery` the unrecognized-selector hook
/// may adapt the configuration and retry exactly once.
pub fn send_message(
    app: &mut App,
    target: &str,
    msg: &mut Message,
    allow_recovery: bool,
) -> Result<DispatchPath, KernelError> {
    // Stage 1: dispatch table on the target itself.
    let table = {
        let comp = app.graph.component(target)?;
        match comp.method_for_selector(&msg.selector) {
            Some(HandlerRef::Static(i)) => Some((HandlerRef::Static(i), DispatchPath::Static)),
            Some(HandlerRef::InLayer { layer, handler }) if comp.layers[layer].active => {
                Some((
                    HandlerRef::InLayer { layer, handler },
                    DispatchPath::TableLayer { layer: comp.layers[layer].id.clone() },
                ))
            }
            _ => None,
        }
    };
    if let Some((r, path)) = table {
        run_handler(app, target, r, msg)?;
        return Ok(path);
    }

    // Stage 2: delegate forwarding. The delegate must advertise the
    // selector in its protocol and conform to that protocol right now.
    let forwarded = {
        let comp = app.graph.component(target)?;
        comp.delegate.as_ref().and_then(|d_id| {
            let d = app.graph.components.get(d_id)?;
            let advertised = d.protocol.iter().any(|e| e.selector == msg.selector);
            if advertised && d.conforms_to(&d.protocol) {
                resolve_local(d, &msg.selector)
                    .map(|(r, path)| (d_id.clone(), r, path))
            } else {
                None
            }
        })
    };
    if let Some((d_id, r, path)) = forwarded {
        run_handler(app, &d_id, r, msg)?;
        let layer = match path {
            DispatchPath::Static => None,
            DispatchPath::TableLayer { layer } | DispatchPath::Chain { layer } => Some(layer),
            _ => None,
        };
        return Ok(DispatchPath::Delegated { to: d_id, layer });
    }

    // Stage 3: chain of responsibility through the target's active layers.
    let chained = {
        let comp = app.graph.component(target)?;
        comp.first_active_handler(&msg.selector).map(|r| {
            let layer = match r {
                HandlerRef::InLayer { layer, .. } => comp.layers[layer].id.clone(),
                HandlerRef::Static(_) => unreachable!("chain only walks layers"),
            };
            (r, DispatchPath::Chain { layer })
        })
    };
    if let Some((r, path)) = chained {
        run_handler(app, target, r, msg)?;
        return Ok(path);
    }

    // Stage 4: unrecognized. One recovery attempt, then give up.
    if allow_recovery && adaptation::recover_unrecognized(app, target) {
        let path = send_message(app, target, msg, false)?;
        return Ok(DispatchPath::Recovered(Box::new(path)));
    }
    Err(KernelError::DoesNotRecognize {
        component: target.to_string(),
        selector: msg.selector.to_string(),
    })
}

/// Builds a message, sends it with recovery enabled, and hands back the
/// return value.
pub fn invoke_with_target(
    app: &mut App,
    target: &str,
    selector: &Selector,
    args: Vec<Value>,
) -> Result<Value, KernelError> {
    let mut msg = Message::new(selector.clone(), args);
    send_message(app, target, &mut msg, true)?;
    Ok(msg.take_return().expect("a handled message has a return value"))
}
