use serde_json::{json, Value};

use super::{BackendError, BackendPolicy, GenerationRequest, TextGenerator, Throttle};

/// Client for an Ollama-compatible `POST /api/generate` endpoint.
pub struct OllamaClient {
    base_url: String,
    policy: BackendPolicy,
    forward_seed: bool,
    agent: ureq::Agent,
    throttle: Throttle,
}

impl OllamaClient {
    pub fn new(base_url: impl Into<String>, policy: BackendPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        OllamaClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            throttle: Throttle::new(policy.max_concurrent_requests),
            policy,
            forward_seed: false,
            agent,
        }
    }

    /// Pass `GenerationRequest::seed` to the server as `options.seed`.
    pub fn forward_seed(mut self, yes: bool) -> Self {
        self.forward_seed = yes;
        self
    }

    pub fn request_body(&self, request: &GenerationRequest) -> Value {
        let mut options = json!({
            "temperature": request.temperature,
            "num_ctx": request.context_window,
            "num_predict": request.max_output_tokens,
        });
        if !request.stop_sequences.is_empty() {
            options["stop"] = json!(request.stop_sequences);
        }
        if let (true, Some(seed)) = (self.forward_seed, request.seed) {
            options["seed"] = json!(seed);
        }
        json!({
            "model": request.model_name,
            "system": request.system,
            "prompt": request.prompt_body,
            "stream": false,
            "options": options,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let _permit = self.throttle.acquire();
        let url = format!("{}/api/generate", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
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
        v.get("response")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Parse("missing `response` field".into()))
    }
}

impl TextGenerator for OllamaClient {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = self.request_body(request);
        self.policy.retry("generation", || self.attempt(&body))
    }
}
