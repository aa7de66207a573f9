//! Context-oriented adaptation middleware.
//!
//! The crate is organized around a small number of cooperating parts:
//!
//! * [`kernel`] — components made of a context-independent static part plus
//!   activatable layers, with message dispatch that falls back from the
//!   dispatch table to delegate forwarding, to a chain of responsibility
//!   through the layers, and finally to an unrecognized-selector hook.
//! * [`context`] — an observer-style notification center. Producers sense
//!   entity values; equal values are suppressed, changes enqueue paired
//!   will-change/did-change events on a FIFO queue that is drained in
//!   batches and delivered to registered observers.
//! * [`policy`] — a small decision-policy language: typed internal and
//!   external variables, ordered trigger/condition/action rules, goals, and
//!   an associative repository with replace-on-add semantics.
//! * [`adaptation`] — composition plans over the component graph
//!   (activate/deactivate layers, load/replace components, rebind
//!   delegates, invoke selectors), normalized and executed atomically.
//! * [`verification`] — policy and plan checks that gate execution, plus
//!   state digests for before/after transition checks.
//! * [`adl`] — an XML architecture description vocabulary with a strict
//!   parser and a canonical serializer that round-trip exactly.
//! * [`ecampus`] — a ready-made campus-guide fixture (map view, location
//!   ladder, feature filter) used by the scenario harness and the tests.
//!
//! Costs are counted in abstract work units through [`metrics`], never in
//! wall-clock time, so runs are reproducible bit-for-bit.

pub mod adaptation;
pub mod adl;
pub mod context;
pub mod ecampus;
pub mod kernel;
pub mod metrics;
pub mod policy;
pub mod value;
pub mod verification;

pub use adaptation::{AdaptationAction, AdaptationRecord, Plan};
pub use context::{ChangePhase, ContextEvent, ContextManager, DispatchReport};
pub use kernel::{App, Component, ComponentGraph, Layer, Message, Selector};
pub use metrics::{CostModel, MetricsSink, Phase};
pub use policy::{DecisionPolicy, PolicyRepository};
pub use value::Value;
pub use verification::{StateDigest, VerificationOutcome};
