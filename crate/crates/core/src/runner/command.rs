//! Wall-clock execution of shell command templates.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::space::{ConfigSpace, Configuration};

/// Template key used when a stratum level has no template of its own.
pub const WILDCARD: &str = "*";

const POLL_INTERVAL: Duration = Duration::from_millis(2);

/// Command templates keyed by stratum level. `{factor}` placeholders are
/// replaced with the configuration's level labels; `{{` and `}}` are literal
/// braces. Commands run through `sh -c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSpec {
    #[serde(default = "default_stratum")]
    pub stratum_factor: String,
    pub templates: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    /// Unrecorded runs before the timed replicates of each measurement.
    #[serde(default)]
    pub warmup: u32,
}

fn default_stratum() -> String {
    "workload".to_string()
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Factor(usize),
}

#[derive(Debug, Clone)]
pub struct CommandExecutor {
    stratum_pos: usize,
    templates: BTreeMap<String, Vec<Piece>>,
    timeout: Option<Duration>,
    warmup: u32,
}

fn parse_template(space: &ConfigSpace, template: &str) -> Result<Vec<Piece>, RunError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => name.push(ch),
                        None => {
                            return Err(RunError::Template(format!(
                                "unterminated placeholder in `{template}`"
                            )))
                        }
                    }
                }
                let pos = space.factor_position(&name).map_err(|_| {
                    RunError::Template(format!("placeholder `{{{name}}}` is not a factor"))
                })?;
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Factor(pos));
            }
            '}' => {
                return Err(RunError::Template(format!(
                    "unmatched `}}` in `{template}`"
                )))
            }
            c => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

impl CommandExecutor {
    pub fn new(spec: &CommandSpec, space: &ConfigSpace) -> Result<Self, RunError> {
        let stratum_pos = space.factor_position(&spec.stratum_factor).map_err(|_| {
            RunError::Template(format!(
                "stratum factor `{}` is not in the space",
                spec.stratum_factor
            ))
        })?;
        let strata = &space.factors()[stratum_pos];
        let mut templates = BTreeMap::new();
        for (key, template) in &spec.templates {
            if key != WILDCARD && strata.level_index(key).is_none() {
                return Err(RunError::Template(format!(
                    "template key `{key}` is not a level of `{}`",
                    spec.stratum_factor
                )));
            }
            templates.insert(key.clone(), parse_template(space, template)?);
        }
        let timeout = match spec.timeout_secs {
            Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
            Some(t) => return Err(RunError::Template(format!("invalid timeout {t}"))),
            None => None,
        };
        Ok(Self {
            stratum_pos,
            templates,
            timeout,
            warmup: spec.warmup,
        })
    }

    /// The shell command for one configuration.
    pub fn render(&self, space: &ConfigSpace, ec: &Configuration) -> Result<String, RunError> {
        let levels: Vec<usize> = ec.levels().collect();
        let stratum = &space.factors()[self.stratum_pos].levels[levels[self.stratum_pos]];
        let pieces = self
            .templates
            .get(stratum)
            .or_else(|| self.templates.get(WILDCARD))
            .ok_or_else(|| RunError::Template(format!("no template for stratum `{stratum}`")))?;
        let mut out = String::new();
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Factor(pos) => out.push_str(&space.factors()[*pos].levels[levels[*pos]]),
            }
        }
        Ok(out)
    }

    pub fn warmup(&self) -> u32 {
        self.warmup
    }

    /// Runs the command once and returns its wall-clock duration in seconds.
    pub fn run_once(&self, command: &str) -> Result<f64, RunError> {
        let start = Instant::now();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| RunError::Launch(format!("{command}: {e}")))?;
        let status = loop {
            if let Some(status) = child
                .try_wait()
                .map_err(|e| RunError::Launch(e.to_string()))?
            {
                break status;
            }
            if let Some(limit) = self.timeout {
                if start.elapsed() >= limit {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(RunError::Timeout(limit.as_secs_f64()));
                }
            }
            thread::sleep(POLL_INTERVAL);
        };
        let elapsed = start.elapsed().as_secs_f64();
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut stderr);
            }
            return Err(RunError::ExitStatus {
                code: status.code(),
                stderr: stderr.trim().chars().take(500).collect(),
            });
        }
        if !(elapsed > 0.0) {
            return Err(RunError::NonPositiveDuration(elapsed));
        }
        Ok(elapsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_space, Factor};

    fn space() -> ConfigSpace {
        build_space(vec![
            Factor::from_labels("workload", ["a", "b"]),
            Factor::from_labels("threads", [1, 4]),
        ])
        .unwrap()
    }

    fn spec(templates: &[(&str, &str)]) -> CommandSpec {
        CommandSpec {
            stratum_factor: "workload".into(),
            templates: templates
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            timeout_secs: None,
            warmup: 0,
        }
    }

    #[test]
    fn renders_placeholders() {
        let s = space();
        let ex = CommandExecutor::new(
            &spec(&[("a", "run-a --t {threads} {{x}}"), ("*", "run {workload}")]),
            &s,
        )
        .unwrap();
        assert_eq!(
            ex.render(&s, &s.config_at(1).unwrap()).unwrap(),
            "run-a --t 4 {x}"
        );
        assert_eq!(ex.render(&s, &s.config_at(2).unwrap()).unwrap(), "run b");
    }

    #[test]
    fn rejects_unknown_placeholders() {
        let s = space();
        assert!(CommandExecutor::new(&spec(&[("a", "x {flags}")]), &s).is_err());
        assert!(CommandExecutor::new(&spec(&[("zz", "x")]), &s).is_err());
        assert!(CommandExecutor::new(&spec(&[("a", "x {threads")]), &s).is_err());
        let ex = CommandExecutor::new(&spec(&[("a", "true")]), &s).unwrap();
        assert!(ex.render(&s, &s.config_at(2).unwrap()).is_err());
    }

    #[test]
    fn runs_and_reports_failures() {
        let s = space();
        let ex = CommandExecutor::new(&spec(&[("*", "true")]), &s).unwrap();
        assert!(ex.run_once("true").unwrap() > 0.0);
        assert!(matches!(
            ex.run_once("echo oops >&2; exit 3"),
            Err(RunError::ExitStatus { code: Some(3), .. })
        ));
        let mut slow = spec(&[("*", "sleep 5")]);
        slow.timeout_secs = Some(0.05);
        let ex = CommandExecutor::new(&slow, &s).unwrap();
        assert!(matches!(ex.run_once("sleep 5"), Err(RunError::Timeout(_))));
    }
}
