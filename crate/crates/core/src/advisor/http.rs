use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{parse_patch_response, Advisor, NoPatch, Patch};

/// The only place the API key is read from.
pub const API_KEY_VAR: &str = "CRUCIBLE_LLM_API_KEY";

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    1000
}

fn default_temperature() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: default_temperature(),
            timeout_s: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }
}

/// Chat-completions client: one user message per suggestion, the reply's
/// first fenced block is the patch.
pub struct HttpAdvisor {
    settings: HttpSettings,
}

impl HttpAdvisor {
    pub fn new(settings: HttpSettings) -> Self {
        Self { settings }
    }

    fn request_once(&self, client: &reqwest::blocking::Client, prompt: &str) -> Result<String, String> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.settings.temperature,
        });
        let mut req = client.post(&self.settings.endpoint).json(&body);
        if let Ok(key) = std::env::var(API_KEY_VAR) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let value: serde_json::Value = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl Advisor for HttpAdvisor {
    fn name(&self) -> String {
        format!("http:{}", self.settings.model)
    }

    fn suggest(&mut self, prompt: &str) -> Result<Patch, NoPatch> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(self.settings.timeout_s.max(0.001)))
            .build()
            .map_err(|e| NoPatch::Transport(e.to_string()))?;
        let mut last = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                let wait = self.settings.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.request_once(&client, prompt) {
                Ok(text) => return parse_patch_response(&text).ok_or(NoPatch::Malformed),
                Err(e) => last = e,
            }
        }
        Err(NoPatch::Transport(last))
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    use super::*;

    /// Serves the canned responses in order, one connection each, and
    /// forwards each request body.
    fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let request = read_request(&mut stream);
                tx.send(request).ok();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, rx)
    }

    fn read_request(stream: &mut std::net::TcpStream) -> String {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        loop {
            let n = stream.read(&mut chunk).unwrap();
            buf.extend_from_slice(&chunk[..n]);
            let text = String::from_utf8_lossy(&buf).to_string();
            if let Some(end) = text.find("\r\n\r\n") {
                let len = text[..end]
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                    .unwrap_or(0);
                if buf.len() >= end + 4 + len {
                    return text[end + 4..].to_string();
                }
            }
            if n == 0 {
                return text;
            }
        }
    }

    fn reply(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn settings(url: String) -> HttpSettings {
        HttpSettings {
            backoff_ms: 1,
            timeout_s: 5.0,
            ..HttpSettings::new(url, "test-model")
        }
    }

    #[test]
    fn sends_chat_request_and_extracts_patch() {
        let (url, rx) = serve(vec![(200, reply("Lower it.\n```\nreturn 0\n```"))]);
        let mut a = HttpAdvisor::new(settings(url));
        let p = a.suggest("the prompt").unwrap();
        assert_eq!(p.rationale, "Lower it.");
        assert_eq!(p.new_source, "return 0");
        let body: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "the prompt");
        assert!(body["temperature"].is_number());
    }

    #[test]
    fn retries_then_succeeds() {
        let (url, rx) = serve(vec![
            (500, "{}".into()),
            (503, "{}".into()),
            (200, reply("ok\n```\nreturn 2\n```")),
        ]);
        let mut a = HttpAdvisor::new(settings(url));
        assert_eq!(a.suggest("p").unwrap().new_source, "return 2");
        assert_eq!(rx.iter().take(3).count(), 3);
    }

    #[test]
    fn gives_up_after_two_retries() {
        let (url, _rx) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let mut a = HttpAdvisor::new(settings(url));
        assert!(matches!(a.suggest("p"), Err(NoPatch::Transport(_))));
    }

    #[test]
    fn no_fence_is_malformed() {
        let (url, _rx) = serve(vec![(200, reply("I would not change anything."))]);
        let mut a = HttpAdvisor::new(settings(url));
        assert_eq!(a.suggest("p"), Err(NoPatch::Malformed));
    }

    #[test]
    fn unreachable_endpoint_degrades() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let mut a = HttpAdvisor::new(settings(url));
        assert!(matches!(a.suggest("p"), Err(NoPatch::Transport(_))));
    }
}
