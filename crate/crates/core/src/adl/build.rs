//! Turns a parsed document plus a factory registry into a runnable app.
//!
//! The document is the authority on architecture: protocols, layer policy
//! and style tags, and observed entities come from the declaration. The
//! factory is the authority on behavior: handlers and initial local state.
//! Reconciliation fails loudly when the two disagree on shape, because a
//! declared selector nobody implements would otherwise surface much later
//! as a dispatch failure.

use super::AdlDocument;
use crate::context::ContextError;
use crate::kernel::{App, ComponentGraph, FactoryRegistry, KernelError};
use crate::metrics::CostModel;
use crate::policy::PolicyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("no factory registered for declared component `{0}`")]
    MissingFactory(String),
    #[error("factory output for `{component}` does not match its declaration: {detail}")]
    FactoryMismatch { component: String, detail: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

pub fn instantiate_app(
    doc: &AdlDocument,
    factories: FactoryRegistry,
    model: CostModel,
) -> Result<App, BuildError> {
    let mut graph = ComponentGraph::default();

    for decl in doc.components.iter().filter(|c| !c.deferred) {
        let mut component = factories
            .instantiate(&decl.id)
            .map_err(|_| BuildError::MissingFactory(decl.id.clone()))?;
        let mismatch = |detail: String| BuildError::FactoryMismatch {
            component: decl.id.clone(),
            detail,
        };

        if component.kind != decl.kind {
            return Err(mismatch(format!(
                "declared kind `{}`, factory builds `{}`",
                decl.kind, component.kind
            )));
        }
        for selector in &decl.static_selectors {
            if !component.static_handlers.iter().any(|h| &h.selector == selector) {
                return Err(mismatch(format!("static selector `{selector}` has no handler")));
            }
        }
        for layer_decl in &decl.layers {
            let Some(layer) = component.layer_mut(&layer_decl.id) else {
                return Err(mismatch(format!("layer `{}` has no implementation", layer_decl.id)));
            };
            for selector in &layer_decl.selectors {
                if !layer.handlers.iter().any(|h| &h.selector == selector) {
                    return Err(mismatch(format!(
                        "selector `{selector}` of layer `{}` has no handler",
                        layer_decl.id
                    )));
                }
            }
            if layer_decl.policy.is_some() {
                layer.policy = layer_decl.policy.clone();
            }
            if layer_decl.style.is_some() {
                layer.style = layer_decl.style.clone();
            }
        }
        component.protocol = decl.protocol.clone();
        component.observes = decl.observes.clone();
        graph.insert(component);
    }

    for connector in &doc.connectors {
        if connector.kind == crate::kernel::ConnectorKind::Delegate {
            graph.component_mut(&connector.from)?.delegate = Some(connector.to.clone());
        }
        graph.connectors.push(connector.clone());
    }

    for (component, layer) in &doc.configuration.activations {
        graph.set_layer_active(component, layer, true)?;
    }
    for (name, value) in &doc.configuration.properties {
        graph.properties.insert(name.clone(), value.clone());
    }

    let mut app = App::new(graph, factories, model);
    for policy in &doc.policies {
        app.add_policy(policy.clone())?;
    }
    for decl in doc.components.iter().filter(|c| !c.deferred) {
        for layer in &decl.layers {
            if let Some(policy) = &layer.policy {
                app.attach_policy(&decl.id, policy);
            }
        }
        for entity in &decl.observes {
            app.context.register_observer(&decl.id, entity)?;
        }
    }
    Ok(app)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adl::{self, AdlComponent, AdlLayer};
    use crate::kernel::{Component, Handler, Layer, LocalState, ProtocolEntry, Selector};
    use crate::value::Value;

    fn sel(s: &str) -> Selector {
        Selector::new(s).unwrap()
    }

    fn noop(selector: &str) -> Handler {
        Handler::new(sel(selector), 0, |_: &mut LocalState, _: &[Value]| Value::Bool(true))
    }

    fn fixture_factories() -> FactoryRegistry {
        let mut f = FactoryRegistry::new();
        f.register("Sensor", || Component {
            id: "Sensor".into(),
            kind: "Sensor".into(),
            static_handlers: vec![noop("read")],
            layers: vec![Layer {
                id: "precise".into(),
                policy: None,
                style: None,
                active: false,
                handlers: vec![noop("read")],
            }],
            protocol: vec![],
            delegate: None,
            observes: vec![],
            state: LocalState::new(),
        });
        f
    }

    fn sensor_decl() -> AdlComponent {
        AdlComponent {
            id: "Sensor".into(),
            kind: "Sensor".into(),
            deferred: false,
            static_selectors: vec![sel("read")],
            protocol: vec![ProtocolEntry { selector: sel("read"), required: true }],
            layers: vec![AdlLayer {
                id: "precise".into(),
                policy: None,
                style: Some("exclusive:mode".into()),
                selectors: vec![sel("read")],
            }],
            observes: vec!["Temperature".into()],
        }
    }

    #[test]
    fn declaration_overlays_factory_output() {
        let mut doc = adl::AdlDocument::empty();
        doc.components.push(sensor_decl());
        doc.configuration.activations.push(("Sensor".into(), "precise".into()));
        doc.configuration.properties.push(("maxComponents".into(), Value::Number(4.0)));

        let app = instantiate_app(&doc, fixture_factories(), CostModel::default()).unwrap();
        let sensor = app.graph.component("Sensor").unwrap();
        assert_eq!(sensor.protocol.len(), 1);
        assert_eq!(sensor.layer("precise").unwrap().style.as_deref(), Some("exclusive:mode"));
        assert!(sensor.layer("precise").unwrap().active);
        assert_eq!(sensor.observes, vec!["Temperature".to_string()]);
        assert_eq!(app.context.observers_of("Temperature"), vec!["Sensor".to_string()]);
        assert_eq!(app.graph.properties.get("maxComponents"), Some(&Value::Number(4.0)));
    }

    #[test]
    fn deferred_components_stay_out_of_the_graph() {
        let mut doc = adl::AdlDocument::empty();
        let mut decl = sensor_decl();
        decl.deferred = true;
        doc.components.push(decl);
        // No factory is needed for a deferred component at build time.
        let app = instantiate_app(&doc, FactoryRegistry::new(), CostModel::default()).unwrap();
        assert!(app.graph.components.is_empty());
    }

    #[test]
    fn missing_factory_is_an_error() {
        let mut doc = adl::AdlDocument::empty();
        doc.components.push(sensor_decl());
        let err = instantiate_app(&doc, FactoryRegistry::new(), CostModel::default()).unwrap_err();
        assert!(matches!(err, BuildError::MissingFactory(id) if id == "Sensor"));
    }

    #[test]
    fn shape_disagreements_are_errors() {
        let mut doc = adl::AdlDocument::empty();
        let mut decl = sensor_decl();
        decl.static_selectors.push(sel("calibrate"));
        doc.components.push(decl);
        let err = instantiate_app(&doc, fixture_factories(), CostModel::default()).unwrap_err();
        assert!(matches!(err, BuildError::FactoryMismatch { .. }), "{err}");

        let mut doc = adl::AdlDocument::empty();
        let mut decl = sensor_decl();
        decl.layers.push(AdlLayer {
            id: "ghost".into(),
            policy: None,
            style: None,
            selectors: vec![],
        });
        doc.components.push(decl);
        let err = instantiate_app(&doc, fixture_factories(), CostModel::default()).unwrap_err();
        assert!(matches!(err, BuildError::FactoryMismatch { .. }), "{err}");
    }
}
