//! The campus navigator demo: a base map view, a location manager whose
//! gps, wifi and cell layers trade accuracy against battery drain, and a
//! feature filter that thins the map when power runs low. Everything here
//! is expressed through the public surface of the middleware: an
//! architecture document, a factory registry, and decision policies.

use crate::adaptation::AdaptationAction;
use crate::adl::{AdlComponent, AdlDocument, AdlLayer};
use crate::kernel::{
    Component, ComponentGraph, Connector, ConnectorKind, FactoryRegistry, Handler, Layer,
    LocalState, ProtocolEntry, Selector,
};
use crate::policy::{ActionItem, BoolExpr, DecisionPolicy, ExternalVar, Rule};
use crate::value::Value;
use thiserror::Error;

pub const MAP_VIEW: &str = "MapView";
pub const LOCATION_MANAGER: &str = "LocationManager";
pub const FEATURE_FILTER: &str = "FeatureFilter";
pub const WIFI_LOCATION: &str = "WifiLocation";

/// Default battery thresholds. The ladder runs gps at or above `HIGH`,
/// wifi between the two, cell below `LOW`; both are plain configuration
/// and can be overridden per run.
pub const BATTERY_HIGH: f64 = 70.0;
pub const BATTERY_LOW: f64 = 30.0;

pub const BASE_INTERVAL_MS: f64 = 1000.0;
pub const SPEED_THRESHOLD: f64 = 10.0;

/// At low detail only features scoring in this band stay on the map.
pub const REDUCED_SCORE_MIN: f64 = 0.7;
pub const REDUCED_SCORE_MAX: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum EcampusError {
    #[error("no {group} layer is active")]
    NoActiveLayer { group: &'static str },
    #[error("{group} layers {layers:?} are active at the same time")]
    MultipleActiveLayers { group: &'static str, layers: Vec<String> },
    #[error("component `{0}` is not in the graph")]
    MissingComponent(String),
    #[error("feature catalog line {line}: {message}")]
    BadFeatureLine { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocationSource {
    Gps,
    Wifi,
    Cell,
}

impl LocationSource {
    pub const ALL: [LocationSource; 3] =
        [LocationSource::Gps, LocationSource::Wifi, LocationSource::Cell];

    pub fn name(self) -> &'static str {
        match self {
            LocationSource::Gps => "gps",
            LocationSource::Wifi => "wifi",
            LocationSource::Cell => "cell",
        }
    }

    /// Abstract error radius; smaller is better.
    pub fn accuracy(self) -> f64 {
        match self {
            LocationSource::Gps => 5.0,
            LocationSource::Wifi => 15.0,
            LocationSource::Cell => 50.0,
        }
    }

    /// Abstract battery drain per fix; the ordering is what the ladder
    /// trades accuracy against.
    pub fn energy_cost(self) -> u64 {
        match self {
            LocationSource::Gps => 10,
            LocationSource::Wifi => 5,
            LocationSource::Cell => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocationFix {
    pub position: (f64, f64),
    pub accuracy: f64,
    pub source: LocationSource,
    pub energy_cost_units: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detail {
    Full,
    Reduced,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub id: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Everything a run needs: the architecture document, factories able to
/// build every component in it, and seed values for the context entities.
pub struct Fixture {
    pub doc: AdlDocument,
    pub factories: FactoryRegistry,
    pub entities: Vec<(String, Value)>,
}

pub fn fixture() -> Fixture {
    fixture_with_thresholds(BATTERY_HIGH, BATTERY_LOW)
}

pub fn fixture_with_thresholds(high: f64, low: f64) -> Fixture {
    Fixture {
        doc: fixture_doc(high, low),
        factories: fixture_factories(),
        entities: vec![
            ("BatteryLevel".to_string(), Value::Number(100.0)),
            ("Speed".to_string(), Value::Number(0.0)),
            ("SleepMode".to_string(), Value::Bool(false)),
            ("Bandwidth".to_string(), Value::Number(100.0)),
        ],
    }
}

fn sel(name: &str) -> Selector {
    Selector::new(name).expect("fixture selector")
}

fn ack(selector: &str) -> Handler {
    Handler::new(sel(selector), 0, |_: &mut LocalState, _: &[Value]| Value::Bool(true))
}

fn location_layer(source: LocationSource) -> Layer {
    Layer {
        id: source.name().to_string(),
        policy: Some("locationPolicy".to_string()),
        style: Some("exclusive:location".to_string()),
        active: false,
        handlers: vec![
            Handler::new(sel("locationFix"), 0, move |_: &mut LocalState, _: &[Value]| {
                Value::Str(source.name().to_string())
            }),
            ack("BatteryLevelDidChange"),
        ],
    }
}

fn detail_layer(name: &str) -> Layer {
    let tag = name.to_string();
    Layer {
        id: name.to_string(),
        policy: Some("featurePolicy".to_string()),
        style: Some("exclusive:detail".to_string()),
        active: false,
        handlers: vec![
            Handler::new(sel("filterFeatures"), 0, move |_: &mut LocalState, _: &[Value]| {
                Value::Str(tag.clone())
            }),
            ack("BatteryLevelDidChange"),
        ],
    }
}

fn fixture_factories() -> FactoryRegistry {
    let mut factories = FactoryRegistry::new();

    factories.register(MAP_VIEW, || Component {
        id: MAP_VIEW.to_string(),
        kind: MAP_VIEW.to_string(),
        static_handlers: vec![Handler::new(
            sel("renderMap"),
            0,
            |state: &mut LocalState, _: &[Value]| {
                let renders = state
                    .get("renders")
                    .and_then(Value::as_number)
                    .unwrap_or(0.0);
                state.insert("renders".to_string(), Value::Number(renders + 1.0));
                Value::Bool(true)
            },
        )],
        layers: vec![],
        protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
        delegate: None,
        observes: vec![],
        state: LocalState::new(),
    });

    factories.register(LOCATION_MANAGER, || Component {
        id: LOCATION_MANAGER.to_string(),
        kind: LOCATION_MANAGER.to_string(),
        static_handlers: vec![
            // Proactive speed handling rides the Will event: the interval
            // is in place before the change commits.
            Handler::new(sel("SpeedWillChange"), 0, |state: &mut LocalState, args: &[Value]| {
                let speed = args.get(1).and_then(Value::as_number).unwrap_or(0.0);
                let interval = update_interval(speed);
                state.insert("updateIntervalMs".to_string(), Value::Number(interval));
                Value::Number(interval)
            }),
            Handler::new(sel("SleepModeDidChange"), 0, |state: &mut LocalState, args: &[Value]| {
                let asleep = args.get(1).and_then(Value::as_bool).unwrap_or(false);
                state.insert("sleep".to_string(), Value::Bool(asleep));
                Value::Bool(asleep)
            }),
        ],
        layers: vec![
            location_layer(LocationSource::Gps),
            location_layer(LocationSource::Wifi),
            location_layer(LocationSource::Cell),
        ],
        protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
        delegate: None,
        observes: vec![],
        state: LocalState::new(),
    });

    factories.register(FEATURE_FILTER, || Component {
        id: FEATURE_FILTER.to_string(),
        kind: FEATURE_FILTER.to_string(),
        static_handlers: vec![],
        layers: vec![detail_layer("full"), detail_layer("reduced")],
        protocol: vec![ProtocolEntry { selector: sel("filterFeatures"), required: true }],
        delegate: None,
        observes: vec![],
        state: LocalState::new(),
    });

    factories.register(WIFI_LOCATION, || Component {
        id: WIFI_LOCATION.to_string(),
        kind: WIFI_LOCATION.to_string(),
        static_handlers: vec![
            Handler::new(sel("locationFix"), 0, |_: &mut LocalState, _: &[Value]| {
                Value::Str("wifi".to_string())
            }),
            ack("BatteryLevelDidChange"),
        ],
        layers: vec![],
        protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
        delegate: None,
        observes: vec!["BatteryLevel".to_string()],
        state: LocalState::new(),
    });

    factories
}

/// The three battery policies with the thresholds spliced in. Re-adding
/// these replaces the defaults, which is how per-run threshold overrides
/// work.
pub fn battery_policies(high: f64, low: f64) -> Vec<DecisionPolicy> {
    let battery = || ExternalVar {
        name: "battery".to_string(),
        entity: "BatteryLevel".to_string(),
    };
    let activate = |component: &str, layer: &str| {
        ActionItem::Adapt(AdaptationAction::ActivateLayer {
            component: component.to_string(),
            layer: layer.to_string(),
        })
    };
    let cond = |text: String| BoolExpr::parse(&text).expect("fixture condition");

    vec![
        DecisionPolicy {
            id: "locationPolicy".to_string(),
            suit: "location".to_string(),
            style: None,
            internal_vars: vec![],
            external_vars: vec![battery()],
            rules: vec![Rule {
                trigger: Some(sel("BatteryLevelDidChange")),
                condition: cond(format!("battery >= {high}")),
                actions: vec![activate(LOCATION_MANAGER, "gps")],
                else_actions: vec![ActionItem::Evaluate { policy: "locationMid".to_string() }],
            }],
            goals: vec![],
        },
        DecisionPolicy {
            id: "locationMid".to_string(),
            suit: "location".to_string(),
            style: None,
            internal_vars: vec![],
            external_vars: vec![battery()],
            rules: vec![Rule {
                // Untriggered: runs only when spliced in by locationPolicy
                // (or during recovery, where it has nothing to offer).
                trigger: None,
                condition: cond(format!("battery >= {low}")),
                actions: vec![activate(LOCATION_MANAGER, "wifi")],
                else_actions: vec![activate(LOCATION_MANAGER, "cell")],
            }],
            goals: vec![],
        },
        DecisionPolicy {
            id: "featurePolicy".to_string(),
            suit: "detail".to_string(),
            style: None,
            internal_vars: vec![],
            external_vars: vec![battery()],
            rules: vec![Rule {
                trigger: Some(sel("BatteryLevelDidChange")),
                condition: cond(format!("battery < {low}")),
                actions: vec![activate(FEATURE_FILTER, "reduced")],
                else_actions: vec![activate(FEATURE_FILTER, "full")],
            }],
            goals: vec![],
        },
    ]
}

fn fixture_doc(high: f64, low: f64) -> AdlDocument {
    let location_layers = ["gps", "wifi", "cell"]
        .iter()
        .map(|id| AdlLayer {
            id: id.to_string(),
            policy: Some("locationPolicy".to_string()),
            style: Some("exclusive:location".to_string()),
            selectors: vec![sel("locationFix"), sel("BatteryLevelDidChange")],
        })
        .collect();
    let detail_layers = ["full", "reduced"]
        .iter()
        .map(|id| AdlLayer {
            id: id.to_string(),
            policy: Some("featurePolicy".to_string()),
            style: Some("exclusive:detail".to_string()),
            selectors: vec![sel("filterFeatures"), sel("BatteryLevelDidChange")],
        })
        .collect();

    AdlDocument {
        version: "1".to_string(),
        components: vec![
            AdlComponent {
                id: MAP_VIEW.to_string(),
                kind: MAP_VIEW.to_string(),
                deferred: false,
                static_selectors: vec![sel("renderMap")],
                protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
                layers: vec![],
                observes: vec![],
            },
            AdlComponent {
                id: LOCATION_MANAGER.to_string(),
                kind: LOCATION_MANAGER.to_string(),
                deferred: false,
                static_selectors: vec![sel("SpeedWillChange"), sel("SleepModeDidChange")],
                protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
                layers: location_layers,
                observes: vec![
                    "BatteryLevel".to_string(),
                    "SleepMode".to_string(),
                    "Speed".to_string(),
                ],
            },
            AdlComponent {
                id: FEATURE_FILTER.to_string(),
                kind: FEATURE_FILTER.to_string(),
                deferred: false,
                static_selectors: vec![],
                protocol: vec![ProtocolEntry { selector: sel("filterFeatures"), required: true }],
                layers: detail_layers,
                observes: vec!["BatteryLevel".to_string()],
            },
            AdlComponent {
                id: WIFI_LOCATION.to_string(),
                kind: WIFI_LOCATION.to_string(),
                deferred: true,
                static_selectors: vec![sel("locationFix"), sel("BatteryLevelDidChange")],
                protocol: vec![ProtocolEntry { selector: sel("locationFix"), required: true }],
                layers: vec![],
                observes: vec!["BatteryLevel".to_string()],
            },
        ],
        connectors: vec![
            Connector {
                id: "mapToLocation".to_string(),
                from: MAP_VIEW.to_string(),
                to: LOCATION_MANAGER.to_string(),
                kind: ConnectorKind::Delegate,
            },
            Connector {
                id: "locationToFilter".to_string(),
                from: LOCATION_MANAGER.to_string(),
                to: FEATURE_FILTER.to_string(),
                kind: ConnectorKind::Delegate,
            },
        ],
        configuration: crate::adl::AdlConfiguration {
            activations: vec![
                (LOCATION_MANAGER.to_string(), "gps".to_string()),
                (FEATURE_FILTER.to_string(), "full".to_string()),
            ],
            properties: vec![("maxComponents".to_string(), Value::Number(8.0))],
        },
        policies: battery_policies(high, low),
    }
}

fn exactly_one_active(
    graph: &ComponentGraph,
    component: &str,
    group: &'static str,
    members: &[&str],
) -> Result<String, EcampusError> {
    let comp = graph
        .component(component)
        .map_err(|_| EcampusError::MissingComponent(component.to_string()))?;
    let active: Vec<String> = comp
        .layers
        .iter()
        .filter(|l| l.active && members.contains(&l.id.as_str()))
        .map(|l| l.id.clone())
        .collect();
    match active.len() {
        0 => Err(EcampusError::NoActiveLayer { group }),
        1 => Ok(active.into_iter().next().expect("len checked")),
        _ => Err(EcampusError::MultipleActiveLayers { group, layers: active }),
    }
}

/// Produces a fix from whichever location layer is active, or nothing at
/// all in sleep mode; a suppressed update costs no energy.
pub fn location_fix(graph: &ComponentGraph) -> Result<Option<LocationFix>, EcampusError> {
    let manager = graph
        .component(LOCATION_MANAGER)
        .map_err(|_| EcampusError::MissingComponent(LOCATION_MANAGER.to_string()))?;
    if manager.state.get("sleep").and_then(Value::as_bool) == Some(true) {
        return Ok(None);
    }
    let active = exactly_one_active(graph, LOCATION_MANAGER, "location", &["gps", "wifi", "cell"])?;
    let source = LocationSource::ALL
        .into_iter()
        .find(|s| s.name() == active)
        .expect("member list mirrors ALL");
    Ok(Some(LocationFix {
        position: (0.0, 0.0),
        accuracy: source.accuracy(),
        source,
        energy_cost_units: source.energy_cost(),
    }))
}

/// The detail band currently selected by the feature filter.
pub fn active_detail(graph: &ComponentGraph) -> Result<Detail, EcampusError> {
    let active = exactly_one_active(graph, FEATURE_FILTER, "detail", &["full", "reduced"])?;
    Ok(if active == "reduced" { Detail::Reduced } else { Detail::Full })
}

/// At full detail the catalog passes through untouched; at reduced detail
/// only scores within the reduced band survive.
pub fn filter_features(features: &[Feature], detail: Detail) -> Vec<Feature> {
    match detail {
        Detail::Full => features.to_vec(),
        Detail::Reduced => features
            .iter()
            .filter(|f| f.score >= REDUCED_SCORE_MIN && f.score <= REDUCED_SCORE_MAX)
            .cloned()
            .collect(),
    }
}

/// Location update interval under the proactive speed rule: the faster the
/// device moves, the longer the pause between updates, in whole multiples
/// of the base interval.
pub fn update_interval(speed: f64) -> f64 {
    let factor = (speed / SPEED_THRESHOLD).floor().max(1.0);
    BASE_INTERVAL_MS * factor
}

/// Reads a plain-text feature catalog: one feature per line as
/// `id name x y score`, `#` starting a comment, blank lines ignored.
pub fn parse_features(text: &str) -> Result<Vec<Feature>, EcampusError> {
    let mut features = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(EcampusError::BadFeatureLine {
                line,
                message: format!("expected `id name x y score`, got {} fields", fields.len()),
            });
        }
        let number = |text: &str, what: &str| -> Result<f64, EcampusError> {
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| EcampusError::BadFeatureLine {
                    line,
                    message: format!("{what} `{text}` is not a finite number"),
                })
        };
        let score = number(fields[4], "score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(EcampusError::BadFeatureLine {
                line,
                message: format!("score {score} is outside [0, 1]"),
            });
        }
        features.push(Feature {
            id: fields[0].to_string(),
            name: fields[1].to_string(),
            x: number(fields[2], "x")?,
            y: number(fields[3], "y")?,
            score,
        });
    }
    Ok(features)
}
