//! The XML architecture description language.
//!
//! A document names components (with their static selectors, layers,
//! protocols, and observed entities), connectors, an initial configuration,
//! and decision policies. [`parse`] and [`serialize`] are exact inverses on
//! well-formed documents; [`build::instantiate_app`] reconciles a document
//! with a factory registry into a runnable [`App`](crate::kernel::App).
//!
//! Attribute values reuse the expression literal shapes: `true`/`false`,
//! numbers, everything else a string. A string that would read back as a
//! different literal is written in double quotes; one layer of surrounding
//! quotes is stripped on parse. Non-finite numbers have no spelling.

mod build;
mod parse;
mod serialize;

pub use build::{instantiate_app, BuildError};
pub use parse::parse;
pub use serialize::serialize;

use crate::kernel::{Connector, ProtocolEntry, Selector};
use crate::policy::DecisionPolicy;
use crate::value::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdlError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("schema violation in {context}: {message}")]
    SchemaViolation { context: String, message: String },
    #[error("{context} references `{reference}`, which is not declared")]
    DanglingReference { context: String, reference: String },
    #[error("duplicate {what} id `{id}`")]
    DuplicateId { what: &'static str, id: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdlDocument {
    pub version: String,
    pub components: Vec<AdlComponent>,
    pub connectors: Vec<Connector>,
    pub configuration: AdlConfiguration,
    pub policies: Vec<DecisionPolicy>,
}

impl AdlDocument {
    pub fn empty() -> AdlDocument {
        AdlDocument {
            version: "1".into(),
            components: vec![],
            connectors: vec![],
            configuration: AdlConfiguration::default(),
            policies: vec![],
        }
    }

    pub fn component(&self, id: &str) -> Option<&AdlComponent> {
        self.components.iter().find(|c| c.id == id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdlComponent {
    pub id: String,
    pub kind: String,
    /// Deferred components are not part of the initial configuration; they
    /// stay in the factory registry until a plan loads them.
    pub deferred: bool,
    pub static_selectors: Vec<Selector>,
    pub protocol: Vec<ProtocolEntry>,
    pub layers: Vec<AdlLayer>,
    pub observes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdlLayer {
    pub id: String,
    pub policy: Option<String>,
    pub style: Option<String>,
    pub selectors: Vec<Selector>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdlConfiguration {
    /// Layers active at startup, as (component, layer) pairs.
    pub activations: Vec<(String, String)>,
    pub properties: Vec<(String, Value)>,
}

/// Writes a value as an attribute literal. Strings that would read back as
/// another literal, or that carry an outer quote layer of their own, gain
/// one layer of double quotes; see the module doc.
pub(crate) fn value_to_attr(value: &Value) -> String {
    match value {
        Value::Str(s) => {
            let reparsed = Value::parse_literal(s);
            let quoted_shape =
                s.len() >= 2 && s.starts_with('"') && s.ends_with('"');
            if reparsed != Value::Str(s.clone()) || quoted_shape {
                format!("\"{s}\"")
            } else {
                s.clone()
            }
        }
        other => other.to_string(),
    }
}

/// Inverse of [`value_to_attr`].
pub(crate) fn value_from_attr(text: &str) -> Value {
    if text.len() >= 2 && text.starts_with('"') && text.ends_with('"') {
        Value::Str(text[1..text.len() - 1].to_string())
    } else {
        Value::parse_literal(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attr_literals_survive_the_round_trip() {
        let cases = vec![
            Value::Number(10.0),
            Value::Number(-0.25),
            Value::Bool(true),
            Value::Str("full".into()),
            Value::Str("true".into()),
            Value::Str("42".into()),
            Value::Str("".into()),
            Value::Str("\"quoted\"".into()),
            Value::Str("\"half".into()),
            Value::Str(" spaced ".into()),
        ];
        for v in cases {
            assert_eq!(value_from_attr(&value_to_attr(&v)), v, "{v:?}");
        }
    }
}
