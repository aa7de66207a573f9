//! Scenario harness for the adaptation middleware.
//!
//! Feeds scripted context timelines through the middleware (`cosm`) or
//! through an aspect-oriented baseline (`daop`) that re-evaluates every
//! joinpoint over a growing history, then reports per-step and total work
//! units, notification counts, plans, and energy.

pub mod engine;
pub mod repl;
pub mod report;
pub mod scenario;

use std::collections::BTreeSet;

use cosm_core::adl::AdlDocument;

/// The closed entity set a document senses: everything any component
/// observes plus the fixture seeds, so scenarios can move entities that
/// only indirectly matter (e.g. Speed before its observer loads).
pub fn known_entities(doc: &AdlDocument, seeds: &[(String, cosm_core::Value)]) -> BTreeSet<String> {
    let mut known: BTreeSet<String> = seeds.iter().map(|(e, _)| e.clone()).collect();
    for component in &doc.components {
        known.extend(component.observes.iter().cloned());
    }
    known
}
