use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Non-fatal per-row problem, listed in the `warnings` block of a document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Warning {
    pub id: String,
    pub message: String,
}

/// Wall-clock bookkeeping, only emitted with `--record-timing`.
pub struct Timer {
    started: Instant,
    started_unix_ms: u128,
}

impl Timer {
    pub fn start() -> Self {
        Self {
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "started_unix_ms": self.started_unix_ms,
            "elapsed_ms": self.started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Top-level shape of every JSON artefact the CLI writes:
/// `{command, metadata, warnings, result}`.
pub struct Document<'a, T: Serialize> {
    pub command: &'a str,
    pub metadata: Value,
    pub warnings: Vec<Warning>,
    pub result: &'a T,
}

impl<T: Serialize> Document<'_, T> {
    pub fn render(&self, timer: Option<&Timer>) -> Result<String> {
        let mut metadata = self.metadata.clone();
        if let (Some(t), Value::Object(m)) = (timer, &mut metadata) {
            m.insert("timing".into(), t.to_json());
        }
        let doc = json!({
            "command": self.command,
            "metadata": metadata,
            "warnings": self.warnings,
            "result": self.result,
        });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn write(&self, path: &Path, timer: Option<&Timer>) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, self.render(timer)?)
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Error variant name for the machine-readable error line.
pub fn error_kind(e: &anyhow::Error) -> String {
    if let Some(core) = e.chain().find_map(|c| c.downcast_ref::<iragent::Error>()) {
        let dbg = format!("{core:?}");
        return dbg
            .split(['(', ' ', '{'])
            .next()
            .unwrap_or("Error")
            .to_string();
    }
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        return "Io".into();
    }
    if e.chain().any(|c| c.is::<toml::de::Error>()) {
        return "Config".into();
    }
    "Error".into()
}

/// Messages along the error chain, skipping causes already quoted by their
/// parent.
pub fn error_message(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

pub fn report_error(kind: &str, message: &str) {
    let line = json!({ "error": { "kind": kind, "message": message.trim_end() } });
    eprintln!("{line}");
}
