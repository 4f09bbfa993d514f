use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    truncate_to_token_budget, BackendError, BackendPolicy, EmotionClassifier, Throttle,
    CLASSIFIER_TOKEN_LIMIT,
};
use crate::domain::{EmotionLabel, EmotionScores, GeneratedText};

/// Accepted shapes of a classifier response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseFormat {
    /// Try every shape below.
    #[default]
    Auto,
    /// `[{"label": .., "score": ..}, ..]`
    List,
    /// `[[{"label": .., "score": ..}, ..]]`, one inner list per input.
    Nested,
    /// `{"joy": 0.1, ..}`
    Map,
}

impl FromStr for ResponseFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
    }
}

fn labelled(entries: &[Value]) -> Result<Vec<(EmotionLabel, f64)>, BackendError> {
    entries
        .iter()
        .map(|e| {
            let label = e
                .get("label")
                .and_then(Value::as_str)
                .ok_or_else(|| BackendError::Parse("entry without `label`".into()))?;
            let score = e
                .get("score")
                .and_then(Value::as_f64)
                .ok_or_else(|| BackendError::Parse(format!("no numeric score for `{label}`")))?;
            let label = label
                .parse::<EmotionLabel>()
                .map_err(|e| BackendError::Parse(e.to_string()))?;
            Ok((label, score))
        })
        .collect()
}

/// Reads emotion scores from a classifier response, keyed by label name.
pub fn parse_scores(body: &Value, format: ResponseFormat) -> Result<EmotionScores, BackendError> {
    let pairs = match (format, body) {
        (ResponseFormat::Map | ResponseFormat::Auto, Value::Object(map)) => map
            .iter()
            .map(|(k, v)| {
                let label = k
                    .parse::<EmotionLabel>()
                    .map_err(|e| BackendError::Parse(e.to_string()))?;
                let score = v
                    .as_f64()
                    .ok_or_else(|| BackendError::Parse(format!("no numeric score for `{k}`")))?;
                Ok((label, score))
            })
            .collect::<Result<Vec<_>, BackendError>>()?,
        (ResponseFormat::Nested | ResponseFormat::Auto, Value::Array(outer))
            if outer.len() == 1 && outer[0].is_array() =>
        {
            labelled(outer[0].as_array().expect("checked"))?
        }
        (ResponseFormat::List | ResponseFormat::Auto, Value::Array(entries))
            if entries.iter().all(Value::is_object) =>
        {
            labelled(entries)?
        }
        _ => {
            return Err(BackendError::Parse(format!(
                "response does not match the {format:?} shape"
            )))
        }
    };
    EmotionScores::from_pairs(pairs).map_err(|e| BackendError::Parse(e.to_string()))
}

/// Client for a hosted text-classification endpoint taking
/// `{"inputs": "<text>"}`.
pub struct HttpClassifier {
    url: String,
    token: Option<String>,
    format: ResponseFormat,
    request_all_scores: bool,
    policy: BackendPolicy,
    agent: ureq::Agent,
    throttle: Throttle,
}

impl HttpClassifier {
    pub fn new(url: impl Into<String>, policy: BackendPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClassifier {
            url: url.into(),
            token: None,
            format: ResponseFormat::Auto,
            request_all_scores: true,
            throttle: Throttle::new(policy.max_concurrent_requests),
            policy,
            agent,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_format(mut self, format: ResponseFormat) -> Self {
        self.format = format;
        self
    }

    /// Ask the server for all six scores (`parameters.top_k = 6`) rather
    /// than only the top label.
    pub fn request_all_scores(mut self, yes: bool) -> Self {
        self.request_all_scores = yes;
        self
    }

    pub fn request_body(&self, text: &str) -> Value {
        let (inputs, _) = truncate_to_token_budget(text, CLASSIFIER_TOKEN_LIMIT);
        let mut body = json!({ "inputs": inputs });
        if self.request_all_scores {
            body["parameters"] = json!({ "top_k": EmotionLabel::ALL.len() });
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<EmotionScores, BackendError> {
        let _permit = self.throttle.acquire();
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::Status(status));
        }
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Parse(e.to_string()))?;
        parse_scores(&v, self.format)
    }
}

impl EmotionClassifier for HttpClassifier {
    fn classify(&self, text: &GeneratedText) -> Result<EmotionScores, BackendError> {
        let body = self.request_body(text.as_str());
        self.policy.retry("classification", || self.attempt(&body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(order: &[(&str, f64)]) -> Value {
        Value::Array(
            order
                .iter()
                .map(|(l, s)| json!({"label": l, "score": s}))
                .collect(),
        )
    }

    const SIX: [(&str, f64); 6] = [
        ("sadness", 0.1),
        ("joy", 0.4),
        ("love", 0.05),
        ("anger", 0.15),
        ("fear", 0.2),
        ("surprise", 0.1),
    ];

    #[test]
    fn label_order_does_not_matter() {
        let a = parse_scores(&list(&SIX), ResponseFormat::Auto).unwrap();
        let mut rev = SIX;
        rev.reverse();
        let b = parse_scores(&list(&rev), ResponseFormat::List).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(EmotionLabel::Joy), 0.4);
    }

    #[test]
    fn nested_and_map_shapes() {
        let nested = Value::Array(vec![list(&SIX)]);
        let map: Value = SIX
            .iter()
            .map(|(l, s)| (l.to_uppercase(), json!(s)))
            .collect::<serde_json::Map<_, _>>()
            .into();
        let a = parse_scores(&nested, ResponseFormat::Auto).unwrap();
        let b = parse_scores(&map, ResponseFormat::Map).unwrap();
        assert_eq!(a, b);
        assert!(parse_scores(&map, ResponseFormat::List).is_err());
    }

    #[test]
    fn missing_or_unknown_labels_fail() {
        assert!(parse_scores(&list(&SIX[..5]), ResponseFormat::Auto).is_err());
        let mut odd = SIX;
        odd[0].0 = "LABEL_0";
        assert!(parse_scores(&list(&odd), ResponseFormat::Auto).is_err());
        assert!(parse_scores(&json!("joy"), ResponseFormat::Auto).is_err());
    }

    #[test]
    fn body_is_truncated() {
        let c = HttpClassifier::new("http://127.0.0.1:9", BackendPolicy::default());
        let long = "word ".repeat(1000);
        let body = c.request_body(&long);
        let sent = body["inputs"].as_str().unwrap();
        assert_eq!(sent.split_whitespace().count(), 393);
        assert_eq!(body["parameters"]["top_k"], 6);
    }
}
