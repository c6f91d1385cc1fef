use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{Completion, FinishReason, LlmError, LlmRequest, LlmResponse, Usage};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "SKG_LLM_API_KEY";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base url; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            timeout: Duration::from_secs(180),
            max_in_flight: 4,
        }
    }
}

impl LiveConfig {
    /// Default config for `base_url` with the credential read from the environment.
    pub fn from_env(base_url: impl Into<String>) -> Self {
        LiveConfig {
            base_url: base_url.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            ..LiveConfig::default()
        }
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completion client with retry and an in-flight cap.
pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    slots: Slots,
}

enum Attempt {
    Done(LlmResponse),
    Retry { rate_limited: bool, message: String },
    Fatal(String),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .http_status_as_error(false)
                .build(),
        );
        let slots = Slots {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        LiveBackend { config, agent, slots }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, retry: u32) -> Duration {
        let exp = self.config.base_delay.saturating_mul(1u32 << retry.min(16));
        let capped = exp.min(self.config.max_delay);
        let factor: f64 = rand::rng().random_range(0.5..=1.0);
        capped.mul_f64(factor)
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut call = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match call.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry { rate_limited: false, message: e.to_string() };
            }
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(16 * 1024 * 1024)
            .read_to_string();
        match status {
            200..=299 => match text {
                Ok(t) => parse_chat_response(&t).map_or_else(Attempt::Fatal, Attempt::Done),
                Err(e) => Attempt::Retry { rate_limited: false, message: e.to_string() },
            },
            429 => Attempt::Retry { rate_limited: true, message: "HTTP 429".into() },
            408 | 500..=599 => Attempt::Retry { rate_limited: false, message: format!("HTTP {status}") },
            _ => Attempt::Fatal(format!(
                "HTTP {status}: {}",
                text.unwrap_or_default().chars().take(200).collect::<String>()
            )),
        }
    }
}

impl Completion for LiveBackend {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.validate()?;
        let body = json!({
            "model": req.model,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        });
        let _slot = self.slots.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(message) => return Err(LlmError::TransportError { attempts, message }),
                Attempt::Retry { rate_limited, message } => {
                    if attempts > self.config.max_retries {
                        return Err(if rate_limited {
                            LlmError::RateLimited { attempts }
                        } else {
                            LlmError::TransportError { attempts, message }
                        });
                    }
                    std::thread::sleep(self.backoff(attempts - 1));
                }
            }
        }
    }
}

fn parse_chat_response(text: &str) -> Result<LlmResponse, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("malformed response body: {e}"))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or("response has no choices")?;
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Truncated,
        Some("content_filter") => FinishReason::Filtered,
        _ => FinishReason::Normal,
    };
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str);
    let content = match (content, finish_reason) {
        (Some(c), _) => c.to_string(),
        (None, FinishReason::Normal) => return Err("response has no content".into()),
        (None, _) => String::new(),
    };
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(LlmResponse { content, finish_reason, usage })
}
