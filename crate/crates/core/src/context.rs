//! Context sensing and notification delivery.
//!
//! The manager owns the committed entity values, a bounded per-entity
//! change history, the observer registrations, and a FIFO queue of pending
//! events. Sensing a value equal to the committed one is suppressed
//! outright. A change enqueues a will-change event, commits the value,
//! then enqueues the matching did-change event; the pair shares one
//! timestamp and occupies consecutive sequence numbers, so observers can
//! rely on will-before-did ordering even across interleaved producers.
//!
//! Delivery happens in [`dispatch_pending`]: events leave the queue in
//! sequence order, each one is offered to every registered observer of its
//! entity (in component-id order) as a `<Entity>WillChange` or
//! `<Entity>DidChange` message carrying the old and new values, and then
//! the adaptation hook runs for the event whether or not anyone listened.
//! Observers without a matching handler are tolerated and counted.

use crate::adaptation;
use crate::kernel::{self, App, Message, Selector};
use crate::metrics::Phase;
use crate::value::Value;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;
use thiserror::Error;

/// Change records kept per entity; the oldest entry is evicted first.
pub const HISTORY_BOUND: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChangePhase {
    Will,
    Did,
}

impl ChangePhase {
    pub fn suffix(self) -> &'static str {
        match self {
            ChangePhase::Will => "WillChange",
            ChangePhase::Did => "DidChange",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextEvent {
    pub seq: u64,
    pub timestamp: u64,
    pub entity: String,
    pub phase: ChangePhase,
    /// `None` on the first observation of an entity that was never primed.
    pub old: Option<Value>,
    pub new: Value,
}

impl ContextEvent {
    /// The notification selector, e.g. `BatteryLevelDidChange`.
    pub fn selector(&self) -> Selector {
        Selector::new(&format!("{}{}", self.entity, self.phase.suffix()))
            .expect("entity names are validated when sensed")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("`{0}` is not a valid entity name")]
    BadEntityName(String),
}

#[derive(Clone, Debug)]
struct HistoryEntry {
    timestamp: u64,
    value: Value,
}

#[derive(Clone, Debug)]
struct EntityRecord {
    value: Value,
    history: VecDeque<HistoryEntry>,
}

#[derive(Debug, Default)]
struct Inner {
    entities: BTreeMap<String, EntityRecord>,
    /// Keyed (entity, component) so observers of one entity enumerate in
    /// component-id order.
    registrations: BTreeSet<(String, String)>,
    queue: VecDeque<ContextEvent>,
    next_seq: u64,
    clock: u64,
}

/// The notification center. All methods take `&self`; any number of
/// producers can hold the manager in an `Arc` and sense concurrently.
#[derive(Debug)]
pub struct ContextManager {
    inner: Mutex<Inner>,
}

impl Default for ContextManager {
    fn default() -> Self {
        Self::new()
    }
}

fn valid_entity(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().map(|c| c.is_ascii_alphabetic()).unwrap_or(false)
        && name.chars().skip(1).all(|c| c.is_ascii_alphanumeric())
}

impl ContextManager {
    pub fn new() -> ContextManager {
        ContextManager {
            inner: Mutex::new(Inner {
                entities: BTreeMap::new(),
                registrations: BTreeSet::new(),
                queue: VecDeque::new(),
                next_seq: 1,
                clock: 0,
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("context manager lock")
    }

    /// Seeds an entity value without raising events or history. Used for
    /// initial conditions, not for changes.
    pub fn prime(&self, entity: &str, value: Value) -> Result<(), ContextError> {
        if !valid_entity(entity) {
            return Err(ContextError::BadEntityName(entity.to_string()));
        }
        let mut inner = self.lock();
        match inner.entities.get_mut(entity) {
            Some(rec) => rec.value = value,
            None => {
                inner.entities.insert(
                    entity.to_string(),
                    EntityRecord { value, history: VecDeque::new() },
                );
            }
        }
        Ok(())
    }

    /// Senses a value at the next logical instant. Returns the (will, did)
    /// sequence numbers, or `None` when the value equals the committed one
    /// and the change is suppressed.
    pub fn sense(&self, entity: &str, value: Value) -> Result<Option<(u64, u64)>, ContextError> {
        self.sense_inner(entity, value, None)
    }

    /// Senses with an explicit timestamp, e.g. scripted scenario time. The
    /// logical clock never runs backwards.
    pub fn sense_at(
        &self,
        entity: &str,
        value: Value,
        timestamp: u64,
    ) -> Result<Option<(u64, u64)>, ContextError> {
        self.sense_inner(entity, value, Some(timestamp))
    }

    fn sense_inner(
        &self,
        entity: &str,
        value: Value,
        timestamp: Option<u64>,
    ) -> Result<Option<(u64, u64)>, ContextError> {
        if !valid_entity(entity) {
            return Err(ContextError::BadEntityName(entity.to_string()));
        }
        let mut inner = self.lock();
        inner.clock = match timestamp {
            Some(t) => inner.clock.max(t),
            None => inner.clock + 1,
        };
        let ts = inner.clock;

        let old = inner.entities.get(entity).map(|r| r.value.clone());
        if old.as_ref() == Some(&value) {
            return Ok(None);
        }

        let will_seq = inner.next_seq;
        let did_seq = will_seq + 1;
        inner.next_seq += 2;

        inner.queue.push_back(ContextEvent {
            seq: will_seq,
            timestamp: ts,
            entity: entity.to_string(),
            phase: ChangePhase::Will,
            old: old.clone(),
            new: value.clone(),
        });

        let rec = inner
            .entities
            .entry(entity.to_string())
            .or_insert_with(|| EntityRecord { value: value.clone(), history: VecDeque::new() });
        rec.value = value.clone();
        rec.history.push_back(HistoryEntry { timestamp: ts, value: value.clone() });
        if rec.history.len() > HISTORY_BOUND {
            rec.history.pop_front();
        }

        inner.queue.push_back(ContextEvent {
            seq: did_seq,
            timestamp: ts,
            entity: entity.to_string(),
            phase: ChangePhase::Did,
            old,
            new: value,
        });
        Ok(Some((will_seq, did_seq)))
    }

    /// Registers interest; duplicate registrations collapse.
    pub fn register_observer(&self, component: &str, entity: &str) -> Result<bool, ContextError> {
        if !valid_entity(entity) {
            return Err(ContextError::BadEntityName(entity.to_string()));
        }
        Ok(self
            .lock()
            .registrations
            .insert((entity.to_string(), component.to_string())))
    }

    pub fn unregister_observer(&self, component: &str, entity: &str) -> bool {
        self.lock()
            .registrations
            .remove(&(entity.to_string(), component.to_string()))
    }

    /// Drops every registration a component holds; part of unloading it.
    pub fn unregister_component(&self, component: &str) {
        let mut inner = self.lock();
        inner.registrations.retain(|(_, c)| c != component);
    }

    /// Observers of an entity, in component-id order.
    pub fn observers_of(&self, entity: &str) -> Vec<String> {
        let inner = self.lock();
        inner
            .registrations
            .range((entity.to_string(), String::new())..)
            .take_while(|(e, _)| e == entity)
            .map(|(_, c)| c.clone())
            .collect()
    }

    pub fn registrations(&self) -> BTreeSet<(String, String)> {
        self.lock().registrations.clone()
    }

    pub fn restore_registrations(&self, snapshot: BTreeSet<(String, String)>) {
        self.lock().registrations = snapshot;
    }

    /// The committed value of every entity.
    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        self.lock()
            .entities
            .iter()
            .map(|(k, v)| (k.clone(), v.value.clone()))
            .collect()
    }

    pub fn value_of(&self, entity: &str) -> Option<Value> {
        self.lock().entities.get(entity).map(|r| r.value.clone())
    }

    pub fn history(&self, entity: &str) -> Vec<(u64, Value)> {
        self.lock()
            .entities
            .get(entity)
            .map(|r| r.history.iter().map(|h| (h.timestamp, h.value.clone())).collect())
            .unwrap_or_default()
    }

    pub fn pending(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn pop_event(&self) -> Option<ContextEvent> {
        self.lock().queue.pop_front()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryRecord {
    pub seq: u64,
    pub component: String,
    pub selector: Selector,
    pub handled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DispatchReport {
    /// The events processed, in queue order.
    pub events: Vec<ContextEvent>,
    /// Delivery attempts; every attempt is charged, handled or not.
    pub deliveries: u64,
    pub unhandled: u64,
    /// The adaptation hook runs once per event, observers or not.
    pub hook_invocations: u64,
    pub log: Vec<DeliveryRecord>,
}

/// Drains up to `limit` queued events (all of them when `None`), delivering
/// notifications and running the adaptation hook per event.
pub fn dispatch_pending(app: &mut App, limit: Option<usize>) -> DispatchReport {
    let mut report = DispatchReport::default();
    let model_delivery = app.metrics.model().notify_delivery;

    while limit.map(|n| report.events.len() < n).unwrap_or(true) {
        let Some(event) = app.context.pop_event() else { break };
        let selector = event.selector();
        let observers = app.context.observers_of(&event.entity);
        let old_arg = event.old.clone().unwrap_or_else(|| event.new.clone());

        let prev = app.metrics.set_phase(Phase::Monitoring);
        for component in observers {
            app.metrics.charge("notify-delivery", model_delivery);
            report.deliveries += 1;
            let mut msg = Message::new(selector.clone(), vec![old_arg.clone(), event.new.clone()]);
            let handled = kernel::send_message(app, &component, &mut msg, false).is_ok();
            if !handled {
                report.unhandled += 1;
            }
            report.log.push(DeliveryRecord {
                seq: event.seq,
                component,
                selector: selector.clone(),
                handled,
            });
        }
        app.metrics.set_phase(prev);

        report.hook_invocations += 1;
        adaptation::on_context_event(app, &event);
        report.events.push(event);
    }
    report
}
