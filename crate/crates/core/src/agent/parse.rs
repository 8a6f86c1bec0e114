use serde_json::{Map, Value};

use super::{AgentError, AgentRequest};
use crate::protocol::{AgentDecision, Direction, Hypothesis};

/// Extracts the JSON object from a model response, tolerating code fences
/// and surrounding prose.
fn json_slice(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

fn required_str<'a>(obj: &'a Map<String, Value>, key: &str, field: &str) -> Result<&'a str, AgentError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(AgentError::schema(field, format!("expected a string, got {other}"))),
        None => Err(AgentError::schema(field, "missing required field")),
    }
}

/// Strict on required fields, tolerant of extra ones. The verbatim response
/// is kept in `raw_output`.
pub fn parse_decision(raw: &str, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
    let slice = json_slice(raw).ok_or_else(|| AgentError::schema("$", "no JSON object found in response"))?;
    let value: Value =
        serde_json::from_str(slice).map_err(|e| AgentError::schema("$", format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| AgentError::schema("$", "expected a JSON object"))?;

    let hyp = match obj.get("hypothesis") {
        Some(Value::Object(h)) => h,
        Some(_) => return Err(AgentError::schema("hypothesis", "expected an object")),
        None => return Err(AgentError::schema("hypothesis", "missing required field")),
    };
    let mechanism = required_str(hyp, "mechanism", "hypothesis.mechanism")?;
    let target_metric = required_str(hyp, "target_metric", "hypothesis.target_metric")?;
    let direction = required_str(hyp, "predicted_direction", "hypothesis.predicted_direction")?;
    let predicted_direction = match direction.trim().to_ascii_lowercase().as_str() {
        "increase" => Direction::Increase,
        "decrease" => Direction::Decrease,
        other => {
            return Err(AgentError::schema(
                "hypothesis.predicted_direction",
                format!("{other:?} is not \"increase\" or \"decrease\""),
            ))
        }
    };
    let action_id = required_str(obj, "action_id", "action_id")?;
    let rationale = required_str(obj, "rationale", "rationale")?;
    let loop_marker = match obj.get("loop_marker") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(AgentError::schema("loop_marker", format!("expected a string, got {other}"))),
    };

    request.validate(AgentDecision {
        hypothesis: Hypothesis {
            mechanism: mechanism.to_string(),
            target_metric: target_metric.to_string(),
            predicted_direction,
        },
        action_id: action_id.to_string(),
        rationale: rationale.to_string(),
        raw_output: raw.to_string(),
        loop_marker,
    })
}
