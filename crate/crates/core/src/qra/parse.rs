//! Structured-answer parsing.
//!
//! `Strict` accepts exactly one JSON object with exactly the schema keys.
//! `Lenient` is for raw model output: it pulls the last top-level JSON object
//! out of surrounding prose and repairs what it can, recording each repair.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{Decision, GroundedAnswer, GroundedObject, HazardLevel};
use crate::scene::ClassLabel;

const ANSWER_KEYS: [&str; 4] = ["decision", "hazard_level", "count", "grounded_objects"];
const OBJECT_KEYS: [&str; 4] = ["type", "bbox", "distance_m", "sensor_id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unparseable: {0}")]
    Unparseable(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("invalid field {field:?}: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("invalid-decision: {0}")]
    InvalidDecision(String),
    #[error("inconsistent: count {count} but {listed} grounded objects")]
    Inconsistent { count: u64, listed: usize },
}

impl ParseError {
    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Unparseable(_) => "unparseable",
            ParseError::MissingField(_) => "missing-field",
            ParseError::UnknownField(_) => "unknown-field",
            ParseError::InvalidField { .. } => "invalid-field",
            ParseError::InvalidDecision(_) => "invalid-decision",
            ParseError::Inconsistent { .. } => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnswer {
    pub answer: GroundedAnswer,
    /// Human-readable notes for every lenient repair; always empty in strict mode.
    pub repairs: Vec<String>,
}

pub fn parse_answer(text: &str, mode: ParseMode) -> Result<ParsedAnswer, ParseError> {
    match mode {
        ParseMode::Strict => {
            let value: Value = serde_json::from_str(text.trim()).map_err(|e| ParseError::Unparseable(e.to_string()))?;
            let Value::Object(map) = value else {
                return Err(ParseError::Unparseable("top-level value is not an object".into()));
            };
            let mut p = Parser {
                lenient: false,
                repairs: Vec::new(),
            };
            let answer = p.answer(&map)?;
            Ok(ParsedAnswer {
                answer,
                repairs: p.repairs,
            })
        }
        ParseMode::Lenient => {
            let map = last_object(text).ok_or_else(|| ParseError::Unparseable("no JSON object found".into()))?;
            let mut p = Parser {
                lenient: true,
                repairs: Vec::new(),
            };
            let answer = p.answer(&map)?;
            Ok(ParsedAnswer {
                answer,
                repairs: p.repairs,
            })
        }
    }
}

/// Last top-level JSON object in `text`, preferring objects that carry a
/// `decision` key.
fn last_object(text: &str) -> Option<Map<String, Value>> {
    let mut found: Vec<Map<String, Value>> = Vec::new();
    let mut pos = 0;
    while let Some(off) = text[pos..].find('{') {
        let start = pos + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                found.push(map);
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    let with_decision = found.iter().rposition(|m| m.contains_key("decision"));
    match with_decision {
        Some(i) => Some(found.swap_remove(i)),
        None => found.pop(),
    }
}

struct Parser {
    lenient: bool,
    repairs: Vec<String>,
}

impl Parser {
    fn repair(&mut self, note: impl Into<String>) {
        self.repairs.push(note.into());
    }

    fn check_keys(&mut self, map: &Map<String, Value>, allowed: &[&str], ctx: &str) -> Result<(), ParseError> {
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                if self.lenient {
                    self.repair(format!("ignored unknown key {ctx}{key}"));
                } else {
                    return Err(ParseError::UnknownField(format!("{ctx}{key}")));
                }
            }
        }
        if !self.lenient {
            if let Some(missing) = allowed.iter().find(|k| !map.contains_key(**k)) {
                return Err(ParseError::MissingField(format!("{ctx}{missing}")));
            }
        }
        Ok(())
    }

    fn answer(&mut self, map: &Map<String, Value>) -> Result<GroundedAnswer, ParseError> {
        self.check_keys(map, &ANSWER_KEYS, "")?;

        let decision = match map.get("decision") {
            None => return Err(ParseError::MissingField("decision".into())),
            Some(Value::String(s)) => match Decision::parse(s) {
                Some(d) => d,
                None if self.lenient => {
                    let norm = s.trim().to_ascii_lowercase();
                    let d = Decision::parse(&norm).ok_or_else(|| ParseError::InvalidDecision(s.clone()))?;
                    self.repair(format!("normalized decision {s:?}"));
                    d
                }
                None => return Err(ParseError::InvalidDecision(s.clone())),
            },
            Some(other) => return Err(ParseError::InvalidDecision(other.to_string())),
        };

        let hazard_level = match map.get("hazard_level") {
            Some(Value::String(s)) if HazardLevel::parse(s).is_some() => HazardLevel::parse(s).unwrap(),
            Some(Value::String(s)) if self.lenient && HazardLevel::parse(&s.trim().to_ascii_lowercase()).is_some() => {
                self.repair(format!("normalized hazard_level {s:?}"));
                HazardLevel::parse(&s.trim().to_ascii_lowercase()).unwrap()
            }
            None if self.lenient => {
                self.repair("defaulted missing hazard_level to none");
                HazardLevel::None
            }
            Some(other) if self.lenient => {
                self.repair(format!("replaced invalid hazard_level {other} with none"));
                HazardLevel::None
            }
            None => return Err(ParseError::MissingField("hazard_level".into())),
            Some(other) => {
                return Err(ParseError::InvalidField {
                    field: "hazard_level".into(),
                    reason: format!("unknown level {other}"),
                })
            }
        };

        let objects = match map.get("grounded_objects") {
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    if let Some(obj) = self.object(i, item)? {
                        out.push(obj);
                    }
                }
                out
            }
            None if self.lenient => {
                self.repair("defaulted missing grounded_objects to []");
                Vec::new()
            }
            Some(other) if self.lenient => {
                self.repair(format!("replaced non-array grounded_objects {other} with []"));
                Vec::new()
            }
            None => return Err(ParseError::MissingField("grounded_objects".into())),
            Some(_) => {
                return Err(ParseError::InvalidField {
                    field: "grounded_objects".into(),
                    reason: "expected an array".into(),
                })
            }
        };

        let count = match map.get("count").map(|v| self.unsigned(v)) {
            Some(Some(n)) => n,
            Some(None) if !self.lenient => {
                return Err(ParseError::InvalidField {
                    field: "count".into(),
                    reason: "expected a non-negative integer".into(),
                })
            }
            None if !self.lenient => return Err(ParseError::MissingField("count".into())),
            _ => {
                self.repair("derived count from grounded_objects");
                objects.len() as u64
            }
        };

        if count != objects.len() as u64 {
            if self.lenient {
                self.repair(format!(
                    "count {count} disagrees with {} grounded objects",
                    objects.len()
                ));
            } else {
                return Err(ParseError::Inconsistent {
                    count,
                    listed: objects.len(),
                });
            }
        }

        Ok(GroundedAnswer {
            decision,
            hazard_level,
            count,
            grounded_objects: objects,
        })
    }

    /// Strict mode fails on any defect; lenient mode drops objects whose
    /// class or distance cannot be recovered.
    fn object(&mut self, index: usize, value: &Value) -> Result<Option<GroundedObject>, ParseError> {
        let ctx = format!("grounded_objects[{index}].");
        let invalid = |field: &str, reason: &str| ParseError::InvalidField {
            field: format!("{ctx}{field}"),
            reason: reason.to_string(),
        };
        let Value::Object(map) = value else {
            if self.lenient {
                self.repair(format!("dropped non-object {ctx}"));
                return Ok(None);
            }
            return Err(invalid("", "expected an object"));
        };
        self.check_keys(map, &OBJECT_KEYS, &ctx)?;

        let class = match map.get("type").and_then(Value::as_str) {
            Some(s) => match ClassLabel::parse(s).or_else(|| {
                self.lenient
                    .then(|| ClassLabel::parse(&s.trim().to_ascii_lowercase()))
                    .flatten()
            }) {
                Some(c) => c,
                None if self.lenient => {
                    self.repair(format!("dropped {ctx} with unknown type {s:?}"));
                    return Ok(None);
                }
                None => return Err(invalid("type", "unknown class label")),
            },
            None if self.lenient => {
                self.repair(format!("dropped {ctx} without a type"));
                return Ok(None);
            }
            None => return Err(invalid("type", "expected a class label string")),
        };

        let distance_m = match map.get("distance_m").and_then(|v| self.number(v)) {
            Some(d) if d.is_finite() && d >= 0.0 => d,
            _ if self.lenient => {
                self.repair(format!("dropped {ctx} without a usable distance_m"));
                return Ok(None);
            }
            _ => return Err(invalid("distance_m", "expected a finite non-negative number")),
        };

        let bbox = match map.get("bbox").and_then(|v| self.pixel_box(v)) {
            Some(b) if b[0] < b[2] && b[1] < b[3] => b,
            Some(b) if self.lenient => {
                self.repair(format!("kept ill-ordered {ctx}bbox {b:?}"));
                b
            }
            None if self.lenient => {
                self.repair(format!("missing or malformed {ctx}bbox"));
                [0; 4]
            }
            _ => return Err(invalid("bbox", "expected four well-ordered integers")),
        };

        let sensor_id = match map.get("sensor_id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            _ if self.lenient => {
                self.repair(format!("missing {ctx}sensor_id"));
                String::new()
            }
            _ => return Err(invalid("sensor_id", "expected a non-empty string")),
        };

        Ok(Some(GroundedObject {
            class,
            bbox,
            distance_m,
            sensor_id,
        }))
    }

    fn number(&mut self, v: &Value) -> Option<f64> {
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) if self.lenient => {
                let parsed = s.trim().parse::<f64>().ok()?;
                self.repair(format!("coerced numeric string {s:?}"));
                Some(parsed)
            }
            _ => None,
        }
    }

    fn unsigned(&mut self, v: &Value) -> Option<u64> {
        if let Some(n) = v.as_u64() {
            return Some(n);
        }
        if !self.lenient {
            return None;
        }
        let f = self.number(v)?;
        (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
    }

    fn pixel_box(&mut self, v: &Value) -> Option<[i64; 4]> {
        let items = v.as_array()?;
        if items.len() != 4 {
            return None;
        }
        let mut out = [0i64; 4];
        for (slot, item) in out.iter_mut().zip(items) {
            *slot = match item.as_i64() {
                Some(i) => i,
                None if self.lenient => {
                    let f = self.number(item)?;
                    if !f.is_finite() {
                        return None;
                    }
                    if f.fract() != 0.0 {
                        self.repair(format!("rounded fractional bbox coordinate {f}"));
                    }
                    f.round() as i64
                }
                None => return None,
            };
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{ "decision": "monitor", "hazard_level": "medium", "count": 1,
  "grounded_objects": [{ "type": "car",
   "bbox": [720, 245, 862, 339], "distance_m": 37.06,
   "sensor_id": "s110_camera_basler_south1_8mm" }]}"#;

    const CANONICAL: &str = r#"{"decision":"monitor","hazard_level":"medium","count":1,"grounded_objects":[{"type":"car","bbox":[720,245,862,339],"distance_m":37.06,"sensor_id":"s110_camera_basler_south1_8mm"}]}"#;

    #[test]
    fn sample_answer_strict() {
        let p = parse_answer(SAMPLE, ParseMode::Strict).unwrap();
        let a = &p.answer;
        assert_eq!(a.decision, Decision::Monitor);
        assert_eq!(a.hazard_level, HazardLevel::Medium);
        assert_eq!(a.count, 1);
        assert_eq!(a.grounded_objects.len(), 1);
        let o = &a.grounded_objects[0];
        assert_eq!(o.class, ClassLabel::Car);
        assert_eq!(o.bbox, [720, 245, 862, 339]);
        assert_eq!(o.distance_m, 37.06);
        assert_eq!(o.sensor_id, "s110_camera_basler_south1_8mm");
        assert!(p.repairs.is_empty());
        assert_eq!(a.to_canonical_json(), CANONICAL);
        let again = parse_answer(CANONICAL, ParseMode::Strict).unwrap();
        assert_eq!(again.answer.to_canonical_json(), CANONICAL);
    }

    #[test]
    fn strict_errors() {
        assert_eq!(
            parse_answer("{}", ParseMode::Strict).unwrap_err().kind(),
            "missing-field"
        );
        assert_eq!(
            parse_answer("no json", ParseMode::Strict).unwrap_err().kind(),
            "unparseable"
        );
        assert_eq!(
            parse_answer("[1]", ParseMode::Strict).unwrap_err().kind(),
            "unparseable"
        );
        let two = CANONICAL.replace("\"count\":1", "\"count\":2");
        assert_eq!(
            parse_answer(&two, ParseMode::Strict).unwrap_err(),
            ParseError::Inconsistent { count: 2, listed: 1 }
        );
        let bad = CANONICAL.replace("monitor", "accelerate");
        assert_eq!(
            parse_answer(&bad, ParseMode::Strict).unwrap_err().kind(),
            "invalid-decision"
        );
        let extra = CANONICAL.replacen('{', "{\"note\":1,", 1);
        assert_eq!(
            parse_answer(&extra, ParseMode::Strict).unwrap_err().kind(),
            "unknown-field"
        );
        let inner = CANONICAL.replace("\"type\":\"car\"", "\"type\":\"car\",\"score\":0.9");
        assert_eq!(
            parse_answer(&inner, ParseMode::Strict).unwrap_err().kind(),
            "unknown-field"
        );
        let flipped = CANONICAL.replace("[720,245,862,339]", "[862,245,720,339]");
        assert_eq!(
            parse_answer(&flipped, ParseMode::Strict).unwrap_err().kind(),
            "invalid-field"
        );
        let stringy = CANONICAL.replace("37.06", "\"37.06\"");
        assert_eq!(
            parse_answer(&stringy, ParseMode::Strict).unwrap_err().kind(),
            "invalid-field"
        );
        let trailing = format!("{CANONICAL} trailing");
        assert_eq!(
            parse_answer(&trailing, ParseMode::Strict).unwrap_err().kind(),
            "unparseable"
        );
    }

    #[test]
    fn lenient_extracts_from_prose() {
        let text = format!("A van is visible, but a car is obscured.\nYes, a car is hidden.\n{SAMPLE}\n");
        let p = parse_answer(&text, ParseMode::Lenient).unwrap();
        assert_eq!(p.answer.to_canonical_json(), CANONICAL);
        assert!(p.repairs.is_empty());
    }

    #[test]
    fn lenient_prefers_last_answer_object() {
        let earlier = CANONICAL.replace("monitor", "stop");
        let text = format!("draft: {earlier}\nfinal: {CANONICAL}\nmeta: {{\"tokens\": 12}}");
        let p = parse_answer(&text, ParseMode::Lenient).unwrap();
        assert_eq!(p.answer.decision, Decision::Monitor);
    }

    #[test]
    fn lenient_repairs() {
        let text = r#"Answer: {"decision": "Monitor", "count": "1", "grounded_objects": [
            {"type": "car", "bbox": [720.4, "245", 862, 339], "distance_m": "37.06", "sensor_id": "cam"},
            {"type": "spaceship", "bbox": [0, 0, 1, 1], "distance_m": 3, "sensor_id": "cam"}
        ], "confidence": 0.3}"#;
        let p = parse_answer(text, ParseMode::Lenient).unwrap();
        let a = p.answer;
        assert_eq!(a.decision, Decision::Monitor);
        assert_eq!(a.hazard_level, HazardLevel::None);
        assert_eq!(a.count, 1);
        assert_eq!(a.grounded_objects.len(), 1);
        assert_eq!(a.grounded_objects[0].bbox, [720, 245, 862, 339]);
        assert_eq!(a.grounded_objects[0].distance_m, 37.06);
        assert!(p.repairs.iter().any(|r| r.contains("hazard_level")));
        assert!(p.repairs.iter().any(|r| r.contains("spaceship")));
        assert!(p.repairs.iter().any(|r| r.contains("confidence")));
    }

    #[test]
    fn lenient_still_rejects_garbage() {
        assert_eq!(
            parse_answer("I cannot tell.", ParseMode::Lenient).unwrap_err().kind(),
            "unparseable"
        );
        assert_eq!(
            parse_answer(r#"{"decision": "accelerate"}"#, ParseMode::Lenient)
                .unwrap_err()
                .kind(),
            "invalid-decision"
        );
        assert_eq!(
            parse_answer(r#"{"count": 0}"#, ParseMode::Lenient).unwrap_err().kind(),
            "missing-field"
        );
    }

    #[test]
    fn lenient_tolerates_unbalanced_braces_in_prose() {
        let text = format!("the set {{a, b is open... {CANONICAL}");
        let p = parse_answer(&text, ParseMode::Lenient).unwrap();
        assert_eq!(p.answer.to_canonical_json(), CANONICAL);
    }
}
