//! Run manifests: everything needed to repeat a command bit for bit.
//!
//! `manifest.json` holds the tool version, the full command line after
//! defaults were applied (input paths made absolute, output directory and
//! thread count left out) and the resolved library configuration. Wall-clock
//! timings go to a separate `timing.json` so that reruns produce identical
//! manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;

pub const TOOL: &str = "infraloc";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Tagged command with all of its arguments.
    pub invocation: serde_json::Value,
    /// Library configuration derived from the arguments.
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(invocation: &impl Serialize, config: serde_json::Value) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation: serde_json::to_value(invocation).expect("arguments serialize"),
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        formats::write_bytes(&dir.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&formats::read_text(path)?)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        if m.tool != TOOL {
            return Err(Error::parse(path, format!("not an {TOOL} manifest")));
        }
        Ok(m)
    }
}

/// Named wall-clock stages of one run.
#[derive(Debug)]
pub struct Timing {
    command: &'static str,
    threads: usize,
    start: Instant,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Timing {
    pub fn start(command: &'static str, threads: usize) -> Self {
        let now = Instant::now();
        Self {
            command,
            threads,
            start: now,
            last: now,
            stages: BTreeMap::new(),
        }
    }

    /// Closes the stage running since the previous lap.
    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages
            .insert(stage.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let doc = serde_json::json!({
            "command": self.command,
            "threads": self.threads,
            "stages_s": self.stages,
            "total_s": self.start.elapsed().as_secs_f64(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("timing serializes");
        s.push('\n');
        formats::write_bytes(&dir.join(TIMING_FILE), s.as_bytes())
    }
}
