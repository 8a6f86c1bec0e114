//! Line-delimited JSON encoding of [`TrialRecord`]s.
//!
//! A trial occupies one header line, one line per iteration and an end line
//! carrying the iteration count, so a file cut short at a line boundary is
//! still detected. Every line carries `schema_version`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::protocol::{
    IterationRecord, LoopConfig, MetricSnapshot, TrialRecord, Truncation,
};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("parse error at line {line} (byte offset {byte_offset}): {message}")]
    Parse { line: usize, byte_offset: usize, message: String },
    #[error("refusing to serialize non-finite value in {0}")]
    NonFinite(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    schema_version: u64,
    kind: &'static str,
    domain_id: &'a str,
    agent_id: &'a str,
    config: &'a LoopConfig,
    baseline: &'a MetricSnapshot,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncated: &'a Option<Truncation>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    log: &'a [String],
}

#[derive(Deserialize)]
struct HeaderIn {
    domain_id: String,
    agent_id: String,
    config: LoopConfig,
    baseline: MetricSnapshot,
    #[serde(default)]
    truncated: Option<Truncation>,
    #[serde(default)]
    log: Vec<String>,
}

#[derive(Serialize)]
struct IterationOut<'a> {
    schema_version: u64,
    kind: &'static str,
    #[serde(flatten)]
    record: &'a IterationRecord,
}

#[derive(Serialize)]
struct EndOut {
    schema_version: u64,
    kind: &'static str,
    n_iterations: usize,
}

fn check_finite(trial: &TrialRecord) -> Result<(), RecordError> {
    if !trial.baseline.is_finite() {
        return Err(RecordError::NonFinite("baseline".into()));
    }
    for it in &trial.iterations {
        if !it.pre.is_finite() || !it.post.is_finite() || !it.objective_delta.is_finite() {
            return Err(RecordError::NonFinite(format!("iteration {}", it.index)));
        }
    }
    Ok(())
}

pub fn write_trial<W: Write>(trial: &TrialRecord, mut out: W) -> Result<(), RecordError> {
    check_finite(trial)?;
    let io = |source| RecordError::Io { path: "<writer>".into(), source };
    let header = HeaderOut {
        schema_version: SCHEMA_VERSION,
        kind: "trial",
        domain_id: &trial.domain_id,
        agent_id: &trial.agent_id,
        config: &trial.config,
        baseline: &trial.baseline,
        truncated: &trial.truncated,
        log: &trial.log,
    };
    let line = serde_json::to_string(&header).expect("header serializes");
    writeln!(out, "{line}").map_err(io)?;
    for record in &trial.iterations {
        let line = serde_json::to_string(&IterationOut {
            schema_version: SCHEMA_VERSION,
            kind: "iteration",
            record,
        })
        .expect("iteration serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    let end = EndOut {
        schema_version: SCHEMA_VERSION,
        kind: "end",
        n_iterations: trial.iterations.len(),
    };
    writeln!(out, "{}", serde_json::to_string(&end).expect("end serializes")).map_err(io)?;
    Ok(())
}

pub fn serialize_trial(trial: &TrialRecord) -> Result<Vec<u8>, RecordError> {
    let mut buf = Vec::new();
    write_trial(trial, &mut buf)?;
    Ok(buf)
}

/// Parses exactly one trial.
pub fn deserialize_trial(bytes: &[u8]) -> Result<TrialRecord, RecordError> {
    let mut trials = deserialize_trials(bytes)?;
    match trials.len() {
        1 => Ok(trials.pop().unwrap()),
        n => Err(RecordError::Parse {
            line: 1,
            byte_offset: 0,
            message: format!("expected exactly one trial, found {n}"),
        }),
    }
}

/// Parses a stream of concatenated trials.
pub fn deserialize_trials(bytes: &[u8]) -> Result<Vec<TrialRecord>, RecordError> {
    let mut trials = Vec::new();
    let mut open: Option<TrialRecord> = None;
    let mut offset = 0usize;
    let mut last_line = 0usize;

    for (idx, raw_line) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line_offset = offset;
        offset += raw_line.len();
        let err = |message: String| RecordError::Parse {
            line: line_no,
            byte_offset: line_offset,
            message,
        };

        if !raw_line.ends_with(b"\n") {
            return Err(err("line is not newline-terminated (truncated file?)".into()));
        }
        let text = std::str::from_utf8(raw_line).map_err(|e| err(format!("invalid UTF-8: {e}")))?;
        let text = text.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let obj = value.as_object_mut().ok_or_else(|| err("line is not a JSON object".into()))?;
        match obj.remove("schema_version").and_then(|v| v.as_u64()) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => return Err(err(format!("unsupported schema_version {other}"))),
            None => return Err(err("missing schema_version".into())),
        }
        let kind = obj
            .remove("kind")
            .and_then(|v| v.as_str().map(str::to_owned))
            .ok_or_else(|| err("missing kind".into()))?;

        match kind.as_str() {
            "trial" => {
                if open.is_some() {
                    return Err(err("new trial header before end of previous trial".into()));
                }
                let h: HeaderIn =
                    serde_json::from_value(value).map_err(|e| err(format!("bad trial header: {e}")))?;
                open = Some(TrialRecord {
                    domain_id: h.domain_id,
                    agent_id: h.agent_id,
                    config: h.config,
                    iterations: Vec::new(),
                    baseline: h.baseline,
                    truncated: h.truncated,
                    log: h.log,
                });
            }
            "iteration" => {
                let trial = open.as_mut().ok_or_else(|| err("iteration outside a trial".into()))?;
                let it: IterationRecord =
                    serde_json::from_value(value).map_err(|e| err(format!("bad iteration: {e}")))?;
                if it.index as usize != trial.iterations.len() {
                    return Err(err(format!(
                        "iteration index {} out of sequence (expected {})",
                        it.index,
                        trial.iterations.len()
                    )));
                }
                trial.iterations.push(it);
            }
            "end" => {
                let trial = open.take().ok_or_else(|| err("end line outside a trial".into()))?;
                let n = value.get("n_iterations").and_then(Value::as_u64);
                if n != Some(trial.iterations.len() as u64) {
                    return Err(err(format!(
                        "end line declares {n:?} iterations, read {}",
                        trial.iterations.len()
                    )));
                }
                trials.push(trial);
            }
            other => return Err(err(format!("unknown line kind {other:?}"))),
        }
    }

    if open.is_some() {
        return Err(RecordError::Parse {
            line: last_line,
            byte_offset: offset,
            message: "trial is missing its end line (truncated file?)".into(),
        });
    }
    Ok(trials)
}

pub fn read_trials_from_path(path: &Path) -> Result<Vec<TrialRecord>, RecordError> {
    let bytes = std::fs::read(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    deserialize_trials(&bytes)
}

/// Writes a file atomically: a sibling temp file is written and renamed over
/// the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RecordError> {
    let io = |source| RecordError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_trial_file(path: &Path, trial: &TrialRecord) -> Result<(), RecordError> {
    write_atomic(path, &serialize_trial(trial)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::*;

    fn sample_trial(n: u32) -> TrialRecord {
        let snap = |v: f64, t: u64| {
            MetricSnapshot::new(v, t).with_metric("m", MetricSummary::single(v * 2.0))
        };
        let iterations = (0..n)
            .map(|i| IterationRecord {
                index: i,
                pre: snap(1.0 + i as f64, 2 * i as u64),
                decision: AgentDecision {
                    hypothesis: Hypothesis {
                        mechanism: "x \"quoted\"\nnewline".into(),
                        target_metric: "m".into(),
                        predicted_direction: Direction::Decrease,
                    },
                    action_id: "a".into(),
                    rationale: "r".into(),
                    raw_output: "{}".into(),
                    loop_marker: None,
                },
                post: snap(0.1 + i as f64 / 3.0, 2 * i as u64 + 1),
                objective_delta: 0.1 / 3.0,
                action_success: false,
                abductive_success: true,
                paradox_class: ParadoxClass::TypeB,
                flags: vec![IterationFlag::Warning { message: "w".into() }],
            })
            .collect();
        TrialRecord {
            domain_id: "d".into(),
            agent_id: "a".into(),
            config: LoopConfig::new(ObjectiveSense::Minimize, u64::MAX),
            iterations,
            baseline: snap(1.0, 0),
            truncated: None,
            log: vec![],
        }
    }

    #[test]
    fn empty_trial_round_trips() {
        let t = sample_trial(0);
        let bytes = serialize_trial(&t).unwrap();
        assert_eq!(deserialize_trial(&bytes).unwrap(), t);
    }

    #[test]
    fn trial_round_trips_byte_identically() {
        let t = sample_trial(10);
        let bytes = serialize_trial(&t).unwrap();
        let back = deserialize_trial(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(serialize_trial(&back).unwrap(), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.lines().all(|l| l.contains("\"schema_version\":1")));
    }

    #[test]
    fn truncated_file_names_offending_line() {
        let bytes = serialize_trial(&sample_trial(3)).unwrap();
        // cut in the middle of the third line
        let text = String::from_utf8(bytes.clone()).unwrap();
        let cut = text.lines().take(2).map(|l| l.len() + 1).sum::<usize>() + 10;
        match deserialize_trial(&bytes[..cut]) {
            Err(RecordError::Parse { line, byte_offset, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(byte_offset, cut - 10);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        // cut exactly at a line boundary: end line missing
        let cut = text.lines().take(4).map(|l| l.len() + 1).sum::<usize>();
        match deserialize_trial(&bytes[..cut]) {
            Err(RecordError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("end line"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let bad = b"{\"schema_version\":2,\"kind\":\"end\",\"n_iterations\":0}\n";
        assert!(matches!(deserialize_trials(bad), Err(RecordError::Parse { line: 1, .. })));
    }

    #[test]
    fn non_finite_refused() {
        let mut t = sample_trial(1);
        t.iterations[0].objective_delta = f64::NAN;
        assert!(matches!(serialize_trial(&t), Err(RecordError::NonFinite(_))));
    }

    #[test]
    fn multiple_trials_in_one_stream() {
        let mut bytes = serialize_trial(&sample_trial(1)).unwrap();
        bytes.extend(serialize_trial(&sample_trial(2)).unwrap());
        let trials = deserialize_trials(&bytes).unwrap();
        assert_eq!(trials.len(), 2);
        assert!(deserialize_trial(&bytes).is_err());
    }
}
