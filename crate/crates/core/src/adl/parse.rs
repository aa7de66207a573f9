//! Strict reader for the architecture description vocabulary. Unknown
//! elements and attributes are schema violations, not noise to skip:
//! a document that parses is a document the builder fully understands.

use super::{value_from_attr, AdlComponent, AdlConfiguration, AdlDocument, AdlError, AdlLayer};
use crate::kernel::{Connector, ConnectorKind, ProtocolEntry, Selector};
use crate::policy::{
    ActionItem, BoolExpr, Comparator, DecisionPolicy, ExternalVar, Goal, InternalVar, Rule,
    VarType,
};
use crate::adaptation::AdaptationAction;
use roxmltree::Node;
use std::collections::BTreeSet;

type Result<T> = std::result::Result<T, AdlError>;

fn schema(context: impl Into<String>, message: impl Into<String>) -> AdlError {
    AdlError::SchemaViolation {
        context: context.into(),
        message: message.into(),
    }
}

fn check_attrs(node: Node, context: &str, allowed: &[&str]) -> Result<()> {
    for attr in node.attributes() {
        if !allowed.contains(&attr.name()) {
            return Err(schema(context, format!("unknown attribute `{}`", attr.name())));
        }
    }
    Ok(())
}

fn req_attr<'a>(node: Node<'a, 'a>, context: &str, name: &str) -> Result<&'a str> {
    node.attribute(name)
        .ok_or_else(|| schema(context, format!("missing attribute `{name}`")))
}

fn elements<'a>(node: Node<'a, 'a>) -> impl Iterator<Item = Node<'a, 'a>> {
    node.children().filter(|n| n.is_element())
}

fn parse_selector(text: &str, context: &str) -> Result<Selector> {
    Selector::new(text).map_err(|e| schema(context, e.to_string()))
}

fn parse_bool(text: &str, context: &str, attr: &str) -> Result<bool> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(schema(context, format!("attribute `{attr}` must be true or false, got `{other}`"))),
    }
}

/// Parses a complete document, including document-level reference checks:
/// connectors and activations must name declared, non-deferred components,
/// layer policy references must resolve, and a component may hang at most
/// one delegate binding off itself.
pub fn parse(text: &str) -> Result<AdlDocument> {
    let xml = roxmltree::Document::parse(text)
        .map_err(|e| AdlError::MalformedXml(e.to_string()))?;
    let root = xml.root_element();
    if root.tag_name().name() != "coca-adl" {
        return Err(schema("document", "root element must be `coca-adl`"));
    }
    check_attrs(root, "coca-adl", &["version"])?;
    let version = req_attr(root, "coca-adl", "version")?;
    if version != "1" {
        return Err(schema("coca-adl", format!("unsupported version `{version}`")));
    }

    let mut doc = AdlDocument::empty();
    let mut seen_sections = BTreeSet::new();
    for section in elements(root) {
        let tag = section.tag_name().name().to_string();
        if !seen_sections.insert(tag.clone()) {
            return Err(schema("coca-adl", format!("section `{tag}` appears twice")));
        }
        match tag.as_str() {
            "components" => {
                check_attrs(section, "components", &[])?;
                for child in elements(section) {
                    doc.components.push(parse_component(child)?);
                }
            }
            "connectors" => {
                check_attrs(section, "connectors", &[])?;
                for child in elements(section) {
                    doc.connectors.push(parse_connector(child)?);
                }
            }
            "configuration" => {
                doc.configuration = parse_configuration(section)?;
            }
            "policies" => {
                check_attrs(section, "policies", &[])?;
                for child in elements(section) {
                    doc.policies.push(parse_policy(child)?);
                }
            }
            other => return Err(schema("coca-adl", format!("unknown section `{other}`"))),
        }
    }

    check_references(&doc)?;
    Ok(doc)
}

fn parse_component(node: Node) -> Result<AdlComponent> {
    if node.tag_name().name() != "component" {
        return Err(schema("components", format!("unknown element `{}`", node.tag_name().name())));
    }
    let id = req_attr(node, "component", "id")?.to_string();
    let context = format!("component `{id}`");
    // Component ids are message targets and action subjects; they follow
    // the same identifier grammar as selectors.
    parse_selector(&id, &context)?;
    check_attrs(node, &context, &["id", "kind", "deferred"])?;
    let kind = req_attr(node, &context, "kind")?.to_string();
    let deferred = match node.attribute("deferred") {
        Some(text) => parse_bool(text, &context, "deferred")?,
        None => false,
    };

    let mut component = AdlComponent {
        id,
        kind,
        deferred,
        static_selectors: vec![],
        protocol: vec![],
        layers: vec![],
        observes: vec![],
    };
    let mut seen_static = false;
    let mut seen_protocol = false;
    for child in elements(node) {
        match child.tag_name().name() {
            "static" => {
                if seen_static {
                    return Err(schema(&context, "more than one `static` block"));
                }
                seen_static = true;
                check_attrs(child, &context, &[])?;
                for sel in elements(child) {
                    if sel.tag_name().name() != "selector" {
                        return Err(schema(&context, format!("unknown element `{}` in static block", sel.tag_name().name())));
                    }
                    check_attrs(sel, &context, &["name"])?;
                    let name = req_attr(sel, &context, "name")?;
                    component.static_selectors.push(parse_selector(name, &context)?);
                }
            }
            "protocol" => {
                if seen_protocol {
                    return Err(schema(&context, "more than one `protocol` block"));
                }
                seen_protocol = true;
                check_attrs(child, &context, &[])?;
                for sel in elements(child) {
                    if sel.tag_name().name() != "selector" {
                        return Err(schema(&context, format!("unknown element `{}` in protocol block", sel.tag_name().name())));
                    }
                    check_attrs(sel, &context, &["name", "required"])?;
                    let name = req_attr(sel, &context, "name")?;
                    let required = parse_bool(req_attr(sel, &context, "required")?, &context, "required")?;
                    component.protocol.push(ProtocolEntry {
                        selector: parse_selector(name, &context)?,
                        required,
                    });
                }
            }
            "layer" => component.layers.push(parse_layer(child, &component.id)?),
            "observes" => {
                check_attrs(child, &context, &["entity"])?;
                let entity = req_attr(child, &context, "entity")?;
                // Entity names share the selector grammar so that the
                // derived WillChange/DidChange selectors stay valid.
                parse_selector(entity, &context)?;
                component.observes.push(entity.to_string());
            }
            other => return Err(schema(&context, format!("unknown element `{other}`"))),
        }
    }

    let mut layer_ids = BTreeSet::new();
    for layer in &component.layers {
        if !layer_ids.insert(layer.id.clone()) {
            return Err(AdlError::DuplicateId { what: "layer", id: layer.id.clone() });
        }
    }
    Ok(component)
}

fn parse_layer(node: Node, component: &str) -> Result<AdlLayer> {
    let id = req_attr(node, "layer", "id")?.to_string();
    let context = format!("layer `{id}` of component `{component}`");
    parse_selector(&id, &context)?;
    check_attrs(node, &context, &["id", "policy", "style"])?;
    let mut layer = AdlLayer {
        id,
        policy: node.attribute("policy").map(str::to_string),
        style: node.attribute("style").map(str::to_string),
        selectors: vec![],
    };
    for sel in elements(node) {
        if sel.tag_name().name() != "selector" {
            return Err(schema(&context, format!("unknown element `{}`", sel.tag_name().name())));
        }
        check_attrs(sel, &context, &["name"])?;
        let name = req_attr(sel, &context, "name")?;
        layer.selectors.push(parse_selector(name, &context)?);
    }
    Ok(layer)
}

fn parse_connector(node: Node) -> Result<Connector> {
    if node.tag_name().name() != "connector" {
        return Err(schema("connectors", format!("unknown element `{}`", node.tag_name().name())));
    }
    let id = req_attr(node, "connector", "id")?.to_string();
    let context = format!("connector `{id}`");
    check_attrs(node, &context, &["id", "from", "to", "type"])?;
    let kind_name = req_attr(node, &context, "type")?;
    let kind = ConnectorKind::from_name(kind_name)
        .ok_or_else(|| schema(&context, format!("unknown connector type `{kind_name}`")))?;
    Ok(Connector {
        id,
        from: req_attr(node, &context, "from")?.to_string(),
        to: req_attr(node, &context, "to")?.to_string(),
        kind,
    })
}

fn parse_configuration(node: Node) -> Result<AdlConfiguration> {
    check_attrs(node, "configuration", &[])?;
    let mut configuration = AdlConfiguration::default();
    for child in elements(node) {
        match child.tag_name().name() {
            "activate" => {
                check_attrs(child, "configuration activate", &["component", "layer"])?;
                configuration.activations.push((
                    req_attr(child, "configuration activate", "component")?.to_string(),
                    req_attr(child, "configuration activate", "layer")?.to_string(),
                ));
            }
            "property" => {
                check_attrs(child, "configuration property", &["name", "value"])?;
                let name = req_attr(child, "configuration property", "name")?.to_string();
                let value = value_from_attr(req_attr(child, "configuration property", "value")?);
                configuration.properties.push((name, value));
            }
            other => return Err(schema("configuration", format!("unknown element `{other}`"))),
        }
    }
    Ok(configuration)
}

fn parse_policy(node: Node) -> Result<DecisionPolicy> {
    if node.tag_name().name() != "policy" {
        return Err(schema("policies", format!("unknown element `{}`", node.tag_name().name())));
    }
    let id = req_attr(node, "policy", "id")?.to_string();
    let context = format!("policy `{id}`");
    check_attrs(node, &context, &["id", "suit", "style"])?;
    let mut policy = DecisionPolicy {
        id,
        suit: req_attr(node, &context, "suit")?.to_string(),
        style: node.attribute("style").map(str::to_string),
        internal_vars: vec![],
        external_vars: vec![],
        rules: vec![],
        goals: vec![],
    };

    for child in elements(node) {
        match child.tag_name().name() {
            "internal" => {
                check_attrs(child, &context, &["name", "type", "initial"])?;
                let ty_name = req_attr(child, &context, "type")?;
                let ty = VarType::from_name(ty_name)
                    .ok_or_else(|| schema(&context, format!("unknown variable type `{ty_name}`")))?;
                policy.internal_vars.push(InternalVar {
                    name: req_attr(child, &context, "name")?.to_string(),
                    ty,
                    initial: value_from_attr(req_attr(child, &context, "initial")?),
                });
            }
            "external" => {
                check_attrs(child, &context, &["name", "entity"])?;
                let entity = req_attr(child, &context, "entity")?;
                parse_selector(entity, &context)?;
                policy.external_vars.push(ExternalVar {
                    name: req_attr(child, &context, "name")?.to_string(),
                    entity: entity.to_string(),
                });
            }
            "rule" => policy.rules.push(parse_rule(child, &context)?),
            "goal" => {
                check_attrs(child, &context, &["property", "comparator", "value"])?;
                let symbol = req_attr(child, &context, "comparator")?;
                let comparator = Comparator::from_symbol(symbol)
                    .ok_or_else(|| schema(&context, format!("unknown comparator `{symbol}`")))?;
                let raw = req_attr(child, &context, "value")?;
                let limit: f64 = raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| schema(&context, format!("goal limit `{raw}` is not a finite number")))?;
                policy.goals.push(Goal {
                    property: req_attr(child, &context, "property")?.to_string(),
                    comparator,
                    limit,
                });
            }
            other => return Err(schema(&context, format!("unknown element `{other}`"))),
        }
    }

    // Full structural validation (variable declarations, assignment types,
    // rule presence) reuses the repository's rules.
    policy
        .validate()
        .map_err(|e| schema(&context, e.to_string()))?;
    Ok(policy)
}

fn parse_rule(node: Node, policy_context: &str) -> Result<Rule> {
    let context = format!("rule in {policy_context}");
    check_attrs(node, &context, &["trigger"])?;
    let trigger = node
        .attribute("trigger")
        .map(|t| parse_selector(t, &context))
        .transpose()?;

    let mut condition = None;
    let mut actions = vec![];
    let mut else_actions = vec![];
    let mut seen_action = false;
    let mut seen_else = false;
    for child in elements(node) {
        match child.tag_name().name() {
            "condition" => {
                if condition.is_some() {
                    return Err(schema(&context, "more than one `condition`"));
                }
                check_attrs(child, &context, &[])?;
                let text = child.text().unwrap_or("");
                let parsed = BoolExpr::parse(text).map_err(|e| {
                    schema(&context, format!("bad condition `{}`: {e}", text.trim()))
                })?;
                condition = Some(parsed);
            }
            "action" => {
                if seen_action {
                    return Err(schema(&context, "more than one `action` block"));
                }
                seen_action = true;
                check_attrs(child, &context, &[])?;
                for item in elements(child) {
                    actions.push(parse_action_item(item, &context)?);
                }
            }
            "else" => {
                if seen_else {
                    return Err(schema(&context, "more than one `else` block"));
                }
                seen_else = true;
                check_attrs(child, &context, &[])?;
                for item in elements(child) {
                    else_actions.push(parse_action_item(item, &context)?);
                }
            }
            other => return Err(schema(&context, format!("unknown element `{other}`"))),
        }
    }

    Ok(Rule {
        trigger,
        condition: condition.ok_or_else(|| schema(&context, "missing `condition`"))?,
        actions,
        else_actions,
    })
}

fn parse_action_item(node: Node, context: &str) -> Result<ActionItem> {
    let item = match node.tag_name().name() {
        "activate" => {
            check_attrs(node, context, &["component", "layer"])?;
            ActionItem::Adapt(AdaptationAction::ActivateLayer {
                component: req_attr(node, context, "component")?.to_string(),
                layer: req_attr(node, context, "layer")?.to_string(),
            })
        }
        "deactivate" => {
            check_attrs(node, context, &["component", "layer"])?;
            ActionItem::Adapt(AdaptationAction::DeactivateLayer {
                component: req_attr(node, context, "component")?.to_string(),
                layer: req_attr(node, context, "layer")?.to_string(),
            })
        }
        "load" => {
            check_attrs(node, context, &["component"])?;
            ActionItem::Adapt(AdaptationAction::LoadComponent {
                component: req_attr(node, context, "component")?.to_string(),
            })
        }
        "replace" => {
            check_attrs(node, context, &["old", "new"])?;
            ActionItem::Adapt(AdaptationAction::ReplaceComponent {
                old: req_attr(node, context, "old")?.to_string(),
                new: req_attr(node, context, "new")?.to_string(),
            })
        }
        "rebind" => {
            check_attrs(node, context, &["component", "target"])?;
            ActionItem::Adapt(AdaptationAction::RebindDelegate {
                component: req_attr(node, context, "component")?.to_string(),
                target: req_attr(node, context, "target")?.to_string(),
            })
        }
        "invoke" => {
            check_attrs(node, context, &["component", "selector"])?;
            let selector = parse_selector(req_attr(node, context, "selector")?, context)?;
            let mut args = vec![];
            for arg in elements(node) {
                if arg.tag_name().name() != "arg" {
                    return Err(schema(context, format!("unknown element `{}` in invoke", arg.tag_name().name())));
                }
                check_attrs(arg, context, &["value"])?;
                args.push(value_from_attr(req_attr(arg, context, "value")?));
            }
            ActionItem::Adapt(AdaptationAction::InvokeSelector {
                component: req_attr(node, context, "component")?.to_string(),
                selector,
                args,
            })
        }
        "set-internal" => {
            check_attrs(node, context, &["name", "value"])?;
            ActionItem::SetInternal {
                name: req_attr(node, context, "name")?.to_string(),
                value: value_from_attr(req_attr(node, context, "value")?),
            }
        }
        "evaluate" => {
            check_attrs(node, context, &["policy"])?;
            ActionItem::Evaluate {
                policy: req_attr(node, context, "policy")?.to_string(),
            }
        }
        other => return Err(schema(context, format!("unknown action `{other}`"))),
    };
    Ok(item)
}

fn check_references(doc: &AdlDocument) -> Result<()> {
    let mut component_ids = BTreeSet::new();
    for component in &doc.components {
        if !component_ids.insert(component.id.clone()) {
            return Err(AdlError::DuplicateId { what: "component", id: component.id.clone() });
        }
    }
    let deferred: BTreeSet<&str> = doc
        .components
        .iter()
        .filter(|c| c.deferred)
        .map(|c| c.id.as_str())
        .collect();
    let policy_ids: BTreeSet<&str> = doc.policies.iter().map(|p| p.id.as_str()).collect();

    let mut connector_ids = BTreeSet::new();
    let mut delegate_sources = BTreeSet::new();
    for connector in &doc.connectors {
        if !connector_ids.insert(connector.id.clone()) {
            return Err(AdlError::DuplicateId { what: "connector", id: connector.id.clone() });
        }
        let context = format!("connector `{}`", connector.id);
        for end in [&connector.from, &connector.to] {
            if !component_ids.contains(end) {
                return Err(AdlError::DanglingReference {
                    context: context.clone(),
                    reference: end.clone(),
                });
            }
            if deferred.contains(end.as_str()) {
                return Err(schema(&context, format!("endpoint `{end}` is deferred")));
            }
        }
        if connector.kind == ConnectorKind::Delegate
            && !delegate_sources.insert(connector.from.clone())
        {
            return Err(schema(
                &context,
                format!("component `{}` already has a delegate binding", connector.from),
            ));
        }
    }

    for (component, layer) in &doc.configuration.activations {
        let context = format!("activation of `{component}.{layer}`");
        let Some(decl) = doc.component(component) else {
            return Err(AdlError::DanglingReference { context, reference: component.clone() });
        };
        if decl.deferred {
            return Err(schema(&context, format!("component `{component}` is deferred")));
        }
        if !decl.layers.iter().any(|l| &l.id == layer) {
            return Err(AdlError::DanglingReference { context, reference: format!("{component}.{layer}") });
        }
    }

    for component in &doc.components {
        for layer in &component.layers {
            if let Some(policy) = &layer.policy {
                if !policy_ids.contains(policy.as_str()) {
                    return Err(AdlError::DanglingReference {
                        context: format!("layer `{}` of component `{}`", layer.id, component.id),
                        reference: policy.clone(),
                    });
                }
            }
        }
    }

    let mut seen_policies = BTreeSet::new();
    for policy in &doc.policies {
        if !seen_policies.insert(policy.id.clone()) {
            return Err(AdlError::DuplicateId { what: "policy", id: policy.id.clone() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adl::serialize;
    use crate::value::Value;

    const RICH: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<coca-adl version="1">
  <components>
    <component id="MapView" kind="MapView">
      <static>
        <selector name="renderMap"/>
      </static>
      <protocol>
        <selector name="locationFix" required="true"/>
      </protocol>
    </component>
    <component id="LocationManager" kind="LocationManager">
      <layer id="gps" policy="locationPolicy" style="exclusive:location">
        <selector name="locationFix"/>
      </layer>
      <layer id="wifi" policy="locationPolicy" style="exclusive:location">
        <selector name="locationFix"/>
      </layer>
      <observes entity="BatteryLevel"/>
    </component>
    <component id="WifiLocation" kind="WifiLocation" deferred="true">
      <static>
        <selector name="locationFix"/>
      </static>
    </component>
  </components>
  <connectors>
    <connector id="c1" from="MapView" to="LocationManager" type="delegate"/>
  </connectors>
  <configuration>
    <activate component="LocationManager" layer="gps"/>
    <property name="maxComponents" value="8"/>
    <property name="label" value="&quot;42&quot;"/>
  </configuration>
  <policies>
    <policy id="locationPolicy" suit="location">
      <internal name="drops" type="number" initial="0"/>
      <external name="battery" entity="BatteryLevel"/>
      <rule trigger="BatteryLevelDidChange">
        <condition>battery &gt;= 70 &amp;&amp; !(drops == 3)</condition>
        <action>
          <activate component="LocationManager" layer="gps"/>
          <set-internal name="drops" value="0"/>
        </action>
        <else>
          <evaluate policy="locationPolicy"/>
          <invoke component="MapView" selector="renderMap">
            <arg value="full"/>
            <arg value="2"/>
          </invoke>
          <load component="WifiLocation"/>
          <replace old="LocationManager" new="WifiLocation"/>
          <rebind component="MapView" target="WifiLocation"/>
          <deactivate component="LocationManager" layer="wifi"/>
        </else>
      </rule>
      <goal property="responseTime" comparator="&lt;=" value="200"/>
    </policy>
  </policies>
</coca-adl>
"#;

    #[test]
    fn rich_document_round_trips_through_both_directions() {
        let doc = parse(RICH).unwrap();
        let written = serialize(&doc);
        // Canonical output is a fixed point.
        assert_eq!(written, RICH);
        assert_eq!(parse(&written).unwrap(), doc);

        assert_eq!(doc.components.len(), 3);
        assert!(doc.component("WifiLocation").unwrap().deferred);
        assert_eq!(doc.configuration.properties[1].1, Value::Str("42".into()));
        assert_eq!(doc.policies[0].rules[0].else_actions.len(), 6);
    }

    fn assert_rejects(xml: &str, expect: &str) {
        let err = parse(xml).unwrap_err();
        assert!(err.to_string().contains(expect), "`{err}` does not mention `{expect}`");
    }

    #[test]
    fn schema_violations_are_reported() {
        assert_rejects("<not-adl version=\"1\"/>", "root element");
        assert_rejects("<coca-adl version=\"2\"/>", "unsupported version");
        assert_rejects(
            "<coca-adl version=\"1\"><gadgets/></coca-adl>",
            "unknown section",
        );
        assert_rejects(
            "<coca-adl version=\"1\"><components><component id=\"A\" kind=\"A\" color=\"red\"/></components></coca-adl>",
            "unknown attribute",
        );
        assert_rejects(
            "<coca-adl version=\"1\"><components><component id=\"A\"/></components></coca-adl>",
            "missing attribute `kind`",
        );
        assert_rejects(
            "<coca-adl version=\"1\"><components><component id=\"bad name\" kind=\"K\"/></components></coca-adl>",
            "not a valid selector",
        );
        assert_rejects("<coca-adl version=\"1\"><components/><components/></coca-adl>", "twice");
        assert_rejects("<coca-adl version=\"1\"", "malformed XML");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        assert_rejects(
            "<coca-adl version=\"1\"><components><component id=\"A\" kind=\"A\"/><component id=\"A\" kind=\"A\"/></components></coca-adl>",
            "duplicate component id",
        );
        assert_rejects(
            "<coca-adl version=\"1\"><components><component id=\"A\" kind=\"A\"><layer id=\"l\"/><layer id=\"l\"/></component></components></coca-adl>",
            "duplicate layer id",
        );
    }

    #[test]
    fn dangling_and_deferred_references_are_rejected() {
        assert_rejects(
            "<coca-adl version=\"1\"><connectors><connector id=\"c\" from=\"A\" to=\"B\" type=\"delegate\"/></connectors></coca-adl>",
            "not declared",
        );
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><components>",
                "<component id=\"A\" kind=\"A\"/><component id=\"B\" kind=\"B\" deferred=\"true\"/>",
                "</components><connectors>",
                "<connector id=\"c\" from=\"A\" to=\"B\" type=\"delegate\"/>",
                "</connectors></coca-adl>"
            ),
            "deferred",
        );
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><components>",
                "<component id=\"A\" kind=\"A\"/><component id=\"B\" kind=\"B\"/><component id=\"C\" kind=\"C\"/>",
                "</components><connectors>",
                "<connector id=\"c1\" from=\"A\" to=\"B\" type=\"delegate\"/>",
                "<connector id=\"c2\" from=\"A\" to=\"C\" type=\"delegate\"/>",
                "</connectors></coca-adl>"
            ),
            "already has a delegate",
        );
        assert_rejects(
            "<coca-adl version=\"1\"><configuration><activate component=\"A\" layer=\"l\"/></configuration></coca-adl>",
            "not declared",
        );
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><components>",
                "<component id=\"A\" kind=\"A\"><layer id=\"l\" policy=\"ghost\"/></component>",
                "</components></coca-adl>"
            ),
            "ghost",
        );
    }

    #[test]
    fn bad_policy_content_is_rejected() {
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><policies><policy id=\"p\" suit=\"s\">",
                "<rule><condition>battery &gt;= 70</condition></rule>",
                "</policy></policies></coca-adl>"
            ),
            "undeclared variable",
        );
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><policies><policy id=\"p\" suit=\"s\">",
                "<external name=\"b\" entity=\"E\"/>",
                "<rule><condition>b &gt;&gt; 1</condition></rule>",
                "</policy></policies></coca-adl>"
            ),
            "bad condition",
        );
        assert_rejects(
            concat!(
                "<coca-adl version=\"1\"><policies><policy id=\"p\" suit=\"s\">",
                "<goal property=\"g\" comparator=\"~\" value=\"1\"/>",
                "</policy></policies></coca-adl>"
            ),
            "unknown comparator",
        );
    }
}
