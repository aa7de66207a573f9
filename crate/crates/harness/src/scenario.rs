//! Scenario files: a plain-text timeline of context changes.
//!
//! One step per line, `t=<ms> <Entity>=<literal>`. Blank lines and `#`
//! comments (whole-line or trailing) are ignored. Directives set run
//! defaults that command-line flags may still override:
//!
//! ```text
//! @mode both
//! @repeat 20
//! @seed 7
//! t=0    BatteryLevel=95   # first drain reading
//! t=100  Speed=12.5
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use cosm_core::Value;
use thiserror::Error;

/// Which engine(s) a run drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Cosm,
    Daop,
    Both,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cosm => "cosm",
            Mode::Daop => "daop",
            Mode::Both => "both",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        match name {
            "cosm" => Some(Mode::Cosm),
            "daop" => Some(Mode::Daop),
            "both" => Some(Mode::Both),
            _ => None,
        }
    }
}

/// One scripted context change.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioStep {
    pub at_ms: u64,
    pub entity: String,
    pub value: Value,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scenario {
    /// Steps sorted by time; equal timestamps keep file order.
    pub steps: Vec<ScenarioStep>,
    pub repeat: Option<u32>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: entity `{entity}` is not part of the fixture")]
    UnknownEntity { line: usize, entity: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { line, message: message.into() }
}

/// Parses scenario text. `known` is the closed set of entities the fixture
/// senses; referencing anything else is an error, not a silent no-op.
pub fn parse_scenario(text: &str, known: &BTreeSet<String>) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some(directive) = line.strip_prefix('@') {
            parse_directive(directive, line_no, &mut scenario)?;
            continue;
        }

        let (time_tok, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(line_no, "expected `t=<ms> <Entity>=<literal>`"))?;
        let ms_text = time_tok
            .strip_prefix("t=")
            .ok_or_else(|| parse_err(line_no, format!("expected `t=<ms>`, found `{time_tok}`")))?;
        let at_ms: u64 = ms_text
            .parse()
            .map_err(|_| parse_err(line_no, format!("`{ms_text}` is not a millisecond count")))?;

        let (entity, literal) = rest
            .trim()
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, "expected `<Entity>=<literal>` after the time"))?;
        let entity = entity.trim();
        if entity.is_empty() {
            return Err(parse_err(line_no, "empty entity name"));
        }
        if !known.contains(entity) {
            return Err(ScenarioError::UnknownEntity { line: line_no, entity: entity.to_string() });
        }

        scenario.steps.push(ScenarioStep {
            at_ms,
            entity: entity.to_string(),
            value: Value::parse_literal(literal.trim()),
        });
    }

    scenario.steps.sort_by_key(|s| s.at_ms);
    Ok(scenario)
}

fn parse_directive(text: &str, line: usize, scenario: &mut Scenario) -> Result<(), ScenarioError> {
    let mut words = text.split_whitespace();
    let name = words.next().unwrap_or("");
    let arg = words.next();
    if words.next().is_some() {
        return Err(parse_err(line, format!("directive `@{name}` takes one argument")));
    }
    let arg = arg.ok_or_else(|| parse_err(line, format!("directive `@{name}` needs an argument")))?;

    match name {
        "repeat" => {
            if scenario.repeat.is_some() {
                return Err(parse_err(line, "duplicate @repeat directive"));
            }
            let n: u32 = arg
                .parse()
                .map_err(|_| parse_err(line, format!("`{arg}` is not a repeat count")))?;
            if n == 0 {
                return Err(parse_err(line, "@repeat must be at least 1"));
            }
            scenario.repeat = Some(n);
        }
        "seed" => {
            if scenario.seed.is_some() {
                return Err(parse_err(line, "duplicate @seed directive"));
            }
            let s: u64 = arg
                .parse()
                .map_err(|_| parse_err(line, format!("`{arg}` is not a seed")))?;
            scenario.seed = Some(s);
        }
        "mode" => {
            if scenario.mode.is_some() {
                return Err(parse_err(line, "duplicate @mode directive"));
            }
            let m = Mode::from_name(arg)
                .ok_or_else(|| parse_err(line, format!("`{arg}` is not cosm, daop, or both")))?;
            scenario.mode = Some(m);
        }
        other => return Err(parse_err(line, format!("unknown directive `@{other}`"))),
    }
    Ok(())
}

pub fn load_scenario(path: &Path, known: &BTreeSet<String>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, known)
}
