//! Flat `key=value` text reports. Each ends with the run configuration under
//! `config.` keys, so a report alone identifies the settings that made it.

use std::fmt::{Display, Write as _};

use crate::config::RunConfig;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    kind: &'static str,
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(kind: &'static str) -> Self {
        Report {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Appends `key=value` lines from an already flat text block.
    pub fn extend_flat(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(k.trim(), v.trim());
            }
        }
        self
    }

    pub fn render(&self, config: &RunConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report={}", self.kind);
        let _ = writeln!(out, "format_version={REPORT_VERSION}");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        for line in config.to_text().lines() {
            if let Some((k, v)) = line.split_once('=') {
                let _ = writeln!(out, "config.{}={}", k.trim(), v.trim());
            }
        }
        out
    }
}

/// Reads a rendered report back into ordered pairs, checking its version.
pub fn parse_report(text: &str) -> Result<Vec<(String, String)>, String> {
    let pairs: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("line without '=': {l:?}"))
        })
        .collect::<Result<_, _>>()?;
    match pairs.iter().find(|(k, _)| k == "format_version") {
        Some((_, v)) if v == &REPORT_VERSION.to_string() => Ok(pairs),
        Some((_, v)) => Err(format!("report format version {v} is not supported")),
        None => Err("report has no format_version".into()),
    }
}
