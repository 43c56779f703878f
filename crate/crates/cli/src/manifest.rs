//! Sidecar manifests that tie a results file to the space, plan, executor
//! and object it came from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ecbench::runner::Policy;
use ecbench::space::ObjectConfig;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub object: ObjectConfig,
    pub space_fingerprint: String,
    pub plan_fingerprint: String,
    pub executor_hash: String,
    pub plan_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub reps: u32,
    pub policy: Policy,
    pub host: BTreeMap<String, String>,
    /// Unix seconds; recorded for wall-clock runs only so that synthetic
    /// artifacts stay byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    pub completed: bool,
    pub records: usize,
    /// SHA-256 of the canonical record lines; set once the run completes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_digest: Option<String>,
}

impl RunManifest {
    /// Whether two manifests describe the same run inputs.
    pub fn same_inputs(&self, other: &RunManifest) -> bool {
        self.object == other.object
            && self.space_fingerprint == other.space_fingerprint
            && self.plan_fingerprint == other.plan_fingerprint
            && self.executor_hash == other.executor_hash
            && self.reps == other.reps
            && self.policy == other.policy
    }
}

pub fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn first_line_with(path: &str, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines()
        .find(|l| l.starts_with(key))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
}

/// Operating system, architecture and whatever machine details the host
/// exposes (kernel release, CPU model, memory).
pub fn host_descriptor() -> BTreeMap<String, String> {
    let mut host = BTreeMap::new();
    host.insert("os".to_string(), std::env::consts::OS.to_string());
    host.insert("arch".to_string(), std::env::consts::ARCH.to_string());
    if let Ok(kernel) = std::fs::read_to_string("/proc/sys/kernel/osrelease") {
        host.insert("kernel".to_string(), kernel.trim().to_string());
    }
    if let Some(cpu) = first_line_with("/proc/cpuinfo", "model name") {
        host.insert("cpu".to_string(), cpu);
    }
    if let Some(mem) = first_line_with("/proc/meminfo", "MemTotal") {
        host.insert("memory".to_string(), mem);
    }
    host
}
