//! Reading and writing scenario files (TOML).
//!
//! Parsing reports every problem it can find, each with the line it refers
//! to: syntax errors, missing sections, unknown keys, type errors per
//! section, and semantic violations from [`Scenario::validate`].

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result, ValidationIssue};
use crate::scenario::{
    AnalysisSpec, BoundarySpec, Fluids, GridSpec, InitialSpec, Injection, Layout, MaterialSpec, OutputSpec, Scenario,
    SolverControls, TimeSpec,
};

/// Top-level keys that must be present.
pub const REQUIRED_SECTIONS: [&str; 6] = ["version", "grid", "fluids", "materials", "layout", "time"];
const OPTIONAL_SECTIONS: [&str; 7] = ["name", "boundary", "injection", "initial", "solver", "analysis", "output"];

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text).map_err(Error::Validation)
}

/// Parses and validates scenario text, returning all issues found.
pub fn parse_scenario_str(text: &str) -> std::result::Result<Scenario, Vec<ValidationIssue>> {
    let locator = Locator::new(text);
    let table: toml::Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ValidationIssue {
                key: "syntax".into(),
                line: e.span().map(|s| locator.line_of_offset(s.start)),
                message: e.message().trim().to_string(),
            }])
        }
    };

    let mut issues = Vec::new();
    for key in REQUIRED_SECTIONS {
        if !table.contains_key(key) {
            issues.push(ValidationIssue::new(key, "missing required section"));
        }
    }
    for key in table.keys() {
        if !REQUIRED_SECTIONS.contains(&key.as_str()) && !OPTIONAL_SECTIONS.contains(&key.as_str()) {
            issues.push(locator.issue(key, format!("unknown key `{key}`")));
        }
    }

    let mut check = |key: &str, f: fn(toml::Value) -> std::result::Result<(), String>| {
        if let Some(v) = table.get(key) {
            if let Err(msg) = f(v.clone()) {
                let path = match backticked(&msg) {
                    Some(field) if msg.contains("unknown field") || msg.contains("missing field") => {
                        format!("{key}.{field}")
                    }
                    _ => key.to_string(),
                };
                issues.push(locator.issue(&path, msg));
            }
        }
    };
    check("version", section::<u32>);
    check("name", section::<String>);
    check("grid", section::<GridSpec>);
    check("fluids", section::<Fluids>);
    check("materials", section::<std::collections::BTreeMap<String, MaterialSpec>>);
    check("layout", section::<Layout>);
    check("boundary", section::<BoundarySpec>);
    check("injection", section::<Vec<Injection>>);
    check("initial", section::<InitialSpec>);
    check("time", section::<TimeSpec>);
    check("solver", section::<SolverControls>);
    check("analysis", section::<AnalysisSpec>);
    check("output", section::<OutputSpec>);
    if !issues.is_empty() {
        return Err(issues);
    }

    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        vec![ValidationIssue {
            key: "scenario".into(),
            line: e.span().map(|s| locator.line_of_offset(s.start)),
            message: e.message().trim().to_string(),
        }]
    })?;
    scenario.validate().map_err(|issues| {
        issues
            .into_iter()
            .map(|i| ValidationIssue {
                line: locator.line_of_key(&i.key),
                ..i
            })
            .collect::<Vec<_>>()
    })?;
    Ok(scenario)
}

fn section<T: DeserializeOwned>(v: toml::Value) -> std::result::Result<(), String> {
    v.try_into::<T>().map(|_| ()).map_err(|e| e.message().trim().to_string())
}

fn backticked(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

/// Serializes a scenario; parsing the output gives back an equal scenario.
pub fn scenario_to_string(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenario fields are all representable in TOML")
}

pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_string(scenario)).map_err(|e| Error::io(path, e))
}

/// Maps key paths such as `injection[1].rate_kg_per_s` back to source lines.
struct Locator<'a> {
    lines: Vec<&'a str>,
    line_starts: Vec<usize>,
}

impl<'a> Locator<'a> {
    fn new(text: &'a str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        Self {
            lines: text.lines().collect(),
            line_starts,
        }
    }

    fn line_of_offset(&self, offset: usize) -> usize {
        self.line_starts.partition_point(|&s| s <= offset)
    }

    fn issue(&self, key: &str, message: String) -> ValidationIssue {
        ValidationIssue {
            key: key.to_string(),
            line: self.line_of_key(key),
            message,
        }
    }

    /// 1-based line of the deepest table header or assignment matching `key`.
    fn line_of_key(&self, key: &str) -> Option<usize> {
        // split "a.b[2].c" into ("a", None), ("b", Some(2)), ("c", None)
        let segments: Vec<(&str, Option<usize>)> = key
            .split('.')
            .map(|s| match s.split_once('[') {
                Some((name, rest)) => (name, rest.trim_end_matches(']').parse().ok()),
                None => (s, None),
            })
            .collect();

        let mut best = None;
        let mut table_end = self.lines.len();
        let mut table_start = 0;
        for depth in 1..=segments.len() {
            let prefix: Vec<&str> = segments[..depth].iter().map(|s| s.0).collect();
            let header = prefix.join(".");
            let index = segments[depth - 1].1;
            if let Some(found) = self.find_header(&header, index, table_start) {
                best = Some(found + 1);
                table_start = found + 1;
                table_end = self.next_header(table_start);
                continue;
            }
            // a plain assignment inside the current table
            let leaf = segments[depth - 1].0;
            if let Some(found) = (table_start..table_end).find(|&i| assigns(self.lines[i], leaf)) {
                best = Some(found + 1);
                break;
            }
        }
        if best.is_none() {
            // dotted header deeper than the key path, e.g. a field inside one map entry
            let leaf = segments.last()?.0;
            best = (0..self.lines.len()).find(|&i| assigns(self.lines[i], leaf)).map(|i| i + 1);
        }
        best
    }

    fn find_header(&self, header: &str, index: Option<usize>, from: usize) -> Option<usize> {
        let single = format!("[{header}]");
        let array = format!("[[{header}]]");
        let mut seen = 0;
        for (i, line) in self.lines.iter().enumerate().skip(from) {
            let t = line.trim();
            if index.is_none() && t.starts_with(&single) {
                return Some(i);
            }
            if t.starts_with(&array) {
                if index.unwrap_or(0) == seen {
                    return Some(i);
                }
                seen += 1;
            }
        }
        None
    }

    fn next_header(&self, from: usize) -> usize {
        (from..self.lines.len())
            .find(|&i| self.lines[i].trim_start().starts_with('['))
            .unwrap_or(self.lines.len())
    }
}

fn assigns(line: &str, key: &str) -> bool {
    let t = line.trim_start();
    t.strip_prefix(key)
        .map(|rest| rest.trim_start().starts_with('='))
        .unwrap_or(false)
}
