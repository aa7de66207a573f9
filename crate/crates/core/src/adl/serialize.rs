//! Canonical writer: fixed section order, fixed attribute order, two-space
//! indent, sections omitted when empty. [`parse`](super::parse) of the
//! output reproduces the document exactly, which also makes serialized
//! form a stable fingerprint for comparing architectures.

use super::{value_to_attr, AdlDocument};
use crate::adaptation::AdaptationAction;
use crate::policy::{ActionItem, Rule};
use std::fmt::Write;

fn esc_attr(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            other => out.push(other),
        }
    }
    out
}

fn esc_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            other => out.push(other),
        }
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

pub fn serialize(doc: &AdlDocument) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<coca-adl version=\"{}\">", esc_attr(&doc.version));

    if !doc.components.is_empty() {
        out.push_str("  <components>\n");
        for component in &doc.components {
            indent(&mut out, 2);
            let _ = write!(
                out,
                "<component id=\"{}\" kind=\"{}\"",
                esc_attr(&component.id),
                esc_attr(&component.kind)
            );
            if component.deferred {
                out.push_str(" deferred=\"true\"");
            }
            out.push_str(">\n");

            if !component.static_selectors.is_empty() {
                indent(&mut out, 3);
                out.push_str("<static>\n");
                for selector in &component.static_selectors {
                    indent(&mut out, 4);
                    let _ = writeln!(out, "<selector name=\"{}\"/>", esc_attr(selector.as_str()));
                }
                indent(&mut out, 3);
                out.push_str("</static>\n");
            }
            if !component.protocol.is_empty() {
                indent(&mut out, 3);
                out.push_str("<protocol>\n");
                for entry in &component.protocol {
                    indent(&mut out, 4);
                    let _ = writeln!(
                        out,
                        "<selector name=\"{}\" required=\"{}\"/>",
                        esc_attr(entry.selector.as_str()),
                        entry.required
                    );
                }
                indent(&mut out, 3);
                out.push_str("</protocol>\n");
            }
            for layer in &component.layers {
                indent(&mut out, 3);
                let _ = write!(out, "<layer id=\"{}\"", esc_attr(&layer.id));
                if let Some(policy) = &layer.policy {
                    let _ = write!(out, " policy=\"{}\"", esc_attr(policy));
                }
                if let Some(style) = &layer.style {
                    let _ = write!(out, " style=\"{}\"", esc_attr(style));
                }
                if layer.selectors.is_empty() {
                    out.push_str("/>\n");
                } else {
                    out.push_str(">\n");
                    for selector in &layer.selectors {
                        indent(&mut out, 4);
                        let _ = writeln!(out, "<selector name=\"{}\"/>", esc_attr(selector.as_str()));
                    }
                    indent(&mut out, 3);
                    out.push_str("</layer>\n");
                }
            }
            for entity in &component.observes {
                indent(&mut out, 3);
                let _ = writeln!(out, "<observes entity=\"{}\"/>", esc_attr(entity));
            }
            indent(&mut out, 2);
            out.push_str("</component>\n");
        }
        out.push_str("  </components>\n");
    }

    if !doc.connectors.is_empty() {
        out.push_str("  <connectors>\n");
        for connector in &doc.connectors {
            indent(&mut out, 2);
            let _ = writeln!(
                out,
                "<connector id=\"{}\" from=\"{}\" to=\"{}\" type=\"{}\"/>",
                esc_attr(&connector.id),
                esc_attr(&connector.from),
                esc_attr(&connector.to),
                connector.kind.name()
            );
        }
        out.push_str("  </connectors>\n");
    }

    if !doc.configuration.activations.is_empty() || !doc.configuration.properties.is_empty() {
        out.push_str("  <configuration>\n");
        for (component, layer) in &doc.configuration.activations {
            indent(&mut out, 2);
            let _ = writeln!(
                out,
                "<activate component=\"{}\" layer=\"{}\"/>",
                esc_attr(component),
                esc_attr(layer)
            );
        }
        for (name, value) in &doc.configuration.properties {
            indent(&mut out, 2);
            let _ = writeln!(
                out,
                "<property name=\"{}\" value=\"{}\"/>",
                esc_attr(name),
                esc_attr(&value_to_attr(value))
            );
        }
        out.push_str("  </configuration>\n");
    }

    if !doc.policies.is_empty() {
        out.push_str("  <policies>\n");
        for policy in &doc.policies {
            indent(&mut out, 2);
            let _ = write!(
                out,
                "<policy id=\"{}\" suit=\"{}\"",
                esc_attr(&policy.id),
                esc_attr(&policy.suit)
            );
            if let Some(style) = &policy.style {
                let _ = write!(out, " style=\"{}\"", esc_attr(style));
            }
            out.push_str(">\n");
            for var in &policy.internal_vars {
                indent(&mut out, 3);
                let _ = writeln!(
                    out,
                    "<internal name=\"{}\" type=\"{}\" initial=\"{}\"/>",
                    esc_attr(&var.name),
                    var.ty.name(),
                    esc_attr(&value_to_attr(&var.initial))
                );
            }
            for var in &policy.external_vars {
                indent(&mut out, 3);
                let _ = writeln!(
                    out,
                    "<external name=\"{}\" entity=\"{}\"/>",
                    esc_attr(&var.name),
                    esc_attr(&var.entity)
                );
            }
            for rule in &policy.rules {
                write_rule(&mut out, rule);
            }
            for goal in &policy.goals {
                indent(&mut out, 3);
                let _ = writeln!(
                    out,
                    "<goal property=\"{}\" comparator=\"{}\" value=\"{}\"/>",
                    esc_attr(&goal.property),
                    esc_attr(goal.comparator.symbol()),
                    goal.limit
                );
            }
            indent(&mut out, 2);
            out.push_str("</policy>\n");
        }
        out.push_str("  </policies>\n");
    }

    out.push_str("</coca-adl>\n");
    out
}

fn write_rule(out: &mut String, rule: &Rule) {
    indent(out, 3);
    match &rule.trigger {
        Some(trigger) => {
            let _ = writeln!(out, "<rule trigger=\"{}\">", esc_attr(trigger.as_str()));
        }
        None => out.push_str("<rule>\n"),
    }
    indent(out, 4);
    let _ = writeln!(out, "<condition>{}</condition>", esc_text(&rule.condition.to_string()));
    if !rule.actions.is_empty() {
        indent(out, 4);
        out.push_str("<action>\n");
        for item in &rule.actions {
            write_action_item(out, item);
        }
        indent(out, 4);
        out.push_str("</action>\n");
    }
    if !rule.else_actions.is_empty() {
        indent(out, 4);
        out.push_str("<else>\n");
        for item in &rule.else_actions {
            write_action_item(out, item);
        }
        indent(out, 4);
        out.push_str("</else>\n");
    }
    indent(out, 3);
    out.push_str("</rule>\n");
}

fn write_action_item(out: &mut String, item: &ActionItem) {
    indent(out, 5);
    match item {
        ActionItem::Adapt(action) => match action {
            AdaptationAction::ActivateLayer { component, layer } => {
                let _ = writeln!(
                    out,
                    "<activate component=\"{}\" layer=\"{}\"/>",
                    esc_attr(component),
                    esc_attr(layer)
                );
            }
            AdaptationAction::DeactivateLayer { component, layer } => {
                let _ = writeln!(
                    out,
                    "<deactivate component=\"{}\" layer=\"{}\"/>",
                    esc_attr(component),
                    esc_attr(layer)
                );
            }
            AdaptationAction::LoadComponent { component } => {
                let _ = writeln!(out, "<load component=\"{}\"/>", esc_attr(component));
            }
            AdaptationAction::ReplaceComponent { old, new } => {
                let _ = writeln!(out, "<replace old=\"{}\" new=\"{}\"/>", esc_attr(old), esc_attr(new));
            }
            AdaptationAction::RebindDelegate { component, target } => {
                let _ = writeln!(
                    out,
                    "<rebind component=\"{}\" target=\"{}\"/>",
                    esc_attr(component),
                    esc_attr(target)
                );
            }
            AdaptationAction::InvokeSelector { component, selector, args } => {
                if args.is_empty() {
                    let _ = writeln!(
                        out,
                        "<invoke component=\"{}\" selector=\"{}\"/>",
                        esc_attr(component),
                        esc_attr(selector.as_str())
                    );
                } else {
                    let _ = writeln!(
                        out,
                        "<invoke component=\"{}\" selector=\"{}\">",
                        esc_attr(component),
                        esc_attr(selector.as_str())
                    );
                    for arg in args {
                        indent(out, 6);
                        let _ = writeln!(out, "<arg value=\"{}\"/>", esc_attr(&value_to_attr(arg)));
                    }
                    indent(out, 5);
                    out.push_str("</invoke>\n");
                }
            }
        },
        ActionItem::SetInternal { name, value } => {
            let _ = writeln!(
                out,
                "<set-internal name=\"{}\" value=\"{}\"/>",
                esc_attr(name),
                esc_attr(&value_to_attr(value))
            );
        }
        ActionItem::Evaluate { policy } => {
            let _ = writeln!(out, "<evaluate policy=\"{}\"/>", esc_attr(policy));
        }
    }
}
