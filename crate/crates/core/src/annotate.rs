//! Prior scoring through a chat-completion endpoint.
//!
//! The bearer token is read from an environment variable when the client is
//! built and is only ever written into the `Authorization` header.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::case::{Case, PriorSimplex};
use crate::error::{Error, Result};
use crate::taxonomy::NormativeSchool;

pub const DEFAULT_TOKEN_ENV: &str = "ETHICS_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub max_retries: usize,
    pub timeout_secs: f64,
    pub temperature: f64,
    /// Pause between attempts for the same case.
    pub retry_backoff_ms: u64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            endpoint: String::new(),
            model: "deepseek-chat".into(),
            token_env: DEFAULT_TOKEN_ENV.into(),
            max_retries: 3,
            timeout_secs: 60.0,
            temperature: 0.0,
            retry_backoff_ms: 250,
        }
    }
}

impl AnnotationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::Config("annotation endpoint is not configured".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config("annotation timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    /// May contain `{summary}` and `{subtheory_definitions}`.
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system: "You rate how strongly a moral scenario is reasoned about by each of three schools of \
                     normative ethics. Consequentialism (alpha) judges acts by their outcomes. Virtue ethics \
                     (beta) judges acts by the character and relationships they express. Deontology (gamma) \
                     judges acts by duties, rules and rights."
                .into(),
            user: "Subtheories of each school:\n{subtheory_definitions}\n\nScenario:\n{summary}\n\n\
                   Reply with only a JSON object of the form {\"alpha\": a, \"beta\": b, \"gamma\": g} where \
                   a, b and g are non-negative and sum to 1."
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn subtheory_definitions() -> String {
        let mut out = String::new();
        for school in NormativeSchool::ALL {
            out.push_str(&format!("{} ({}):\n", school.name(), school.symbol()));
            for sub in school.subtheories() {
                out.push_str(&format!("- {}: {}\n", sub.name(), sub.gloss()));
            }
        }
        out
    }

    /// Rendered (system, user) messages for a case; the summary falls back to
    /// the self-text when empty.
    pub fn render(&self, case: &Case) -> (String, String) {
        let summary = if case.summary.trim().is_empty() { &case.selftext } else { &case.summary };
        let user = self
            .user
            .replace("{subtheory_definitions}", &Self::subtheory_definitions())
            .replace("{summary}", summary);
        (self.system.clone(), user)
    }
}

/// First balanced-brace object in `text`, honouring JSON string escapes.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(rel) = text[search..].find('{') {
        let start = search + rel;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=i];
                        if serde_json::from_str::<Value>(candidate).is_ok() {
                            return Some(candidate);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        search = start + 1;
    }
    None
}

/// Validates a reply body into a simplex, renormalizing small drift.
pub fn parse_scores(content: &str) -> Result<PriorSimplex> {
    let obj = extract_json_object(content)
        .ok_or_else(|| Error::InvalidAnnotation("reply contains no JSON object".into()))?;
    let value: Value = serde_json::from_str(obj).map_err(|e| Error::InvalidAnnotation(e.to_string()))?;
    let score = |name: &str| {
        value
            .get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidAnnotation(format!("missing numeric `{name}`")))
    };
    PriorSimplex::from_scores(score("alpha")?, score("beta")?, score("gamma")?)
        .map_err(|e| Error::InvalidAnnotation(e.to_string()))
}

pub struct AnnotationClient {
    config: AnnotationConfig,
    token: String,
    agent: ureq::Agent,
}

impl fmt::Debug for AnnotationClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnotationClient")
            .field("config", &self.config)
            .field("token", &"<redacted>")
            .finish()
    }
}

impl AnnotationClient {
    /// Fails before any request when the token variable is unset or empty.
    pub fn new(config: AnnotationConfig) -> Result<Self> {
        config.validate()?;
        let token = std::env::var(&config.token_env)
            .ok()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::Config(format!("environment variable {} is not set", config.token_env)))?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build();
        Ok(AnnotationClient {
            agent: ureq::Agent::new_with_config(agent_config),
            config,
            token,
        })
    }

    pub fn config(&self) -> &AnnotationConfig {
        &self.config
    }

    fn request(&self, system: &str, user: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        });
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(&body)
            .map_err(|e| Error::Http(e.to_string()))?;
        let reply: Value = resp.body_mut().read_json().map_err(|e| Error::Http(e.to_string()))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::InvalidAnnotation("completion has no choices[0].message.content".into()))
    }

    /// One case, retried on transport failures and invalid replies.
    pub fn annotate_case(&self, template: &PromptTemplate, case: &Case) -> Result<PriorSimplex> {
        let (system, user) = template.render(case);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && self.config.retry_backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms));
            }
            match self.request(&system, &user).and_then(|content| parse_scores(&content)) {
                Ok(prior) => return Ok(prior),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::AnnotationExhausted { attempts, last })
    }

    /// Annotates every case in input order, starting request `i` no earlier
    /// than `i / rate_limit` seconds after the first. Failures are recorded
    /// per case.
    pub fn annotate_dataset(
        &self,
        template: &PromptTemplate,
        cases: &[Case],
        rate_limit: f64,
    ) -> Vec<(String, std::result::Result<PriorSimplex, String>)> {
        let start = Instant::now();
        cases
            .iter()
            .enumerate()
            .map(|(i, case)| {
                if rate_limit > 0.0 && rate_limit.is_finite() {
                    let due = Duration::from_secs_f64(i as f64 / rate_limit);
                    if let Some(wait) = due.checked_sub(start.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
                let result = self.annotate_case(template, case).map_err(|e| e.to_string());
                (case.case_id.clone(), result)
            })
            .collect()
    }
}

/// Minimal in-process HTTP/1.1 server for exercising the client offline.
pub mod mock {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{SocketAddr, TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    use serde_json::{json, Value};

    #[derive(Debug, Clone)]
    pub struct MockRequest {
        pub method: String,
        pub path: String,
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    impl MockRequest {
        pub fn header(&self, name: &str) -> Option<&str> {
            self.headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(name))
                .map(|(_, v)| v.as_str())
        }

        pub fn json(&self) -> Option<Value> {
            serde_json::from_str(&self.body).ok()
        }

        /// Content of the last chat message, if the body is a chat request.
        pub fn user_message(&self) -> Option<String> {
            self.json()?
                .get("messages")?
                .as_array()?
                .last()?
                .get("content")?
                .as_str()
                .map(str::to_string)
        }
    }

    pub struct MockResponse {
        pub status: u16,
        pub body: String,
    }

    impl MockResponse {
        /// A 200 chat-completion reply whose message content is `content`.
        pub fn chat(content: &str) -> Self {
            let body = json!({
                "id": "mock",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            });
            MockResponse {
                status: 200,
                body: body.to_string(),
            }
        }

        pub fn status(status: u16) -> Self {
            MockResponse {
                status,
                body: "{}".into(),
            }
        }
    }

    type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

    /// Serves each request through `handler` and records it.
    pub struct MockServer {
        addr: SocketAddr,
        stop: Arc<AtomicBool>,
        requests: Arc<Mutex<Vec<MockRequest>>>,
        thread: Option<JoinHandle<()>>,
    }

    impl MockServer {
        pub fn start(handler: impl Fn(&MockRequest) -> MockResponse + Send + Sync + 'static) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let stop = Arc::new(AtomicBool::new(false));
            let requests = Arc::new(Mutex::new(Vec::new()));
            let handler: Arc<Handler> = Arc::new(handler);
            let thread = {
                let (stop, requests) = (stop.clone(), requests.clone());
                std::thread::spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        if let Ok(stream) = stream {
                            let _ = serve(stream, &*handler, &requests);
                        }
                    }
                })
            };
            Ok(MockServer {
                addr,
                stop,
                requests,
                thread: Some(thread),
            })
        }

        pub fn url(&self) -> String {
            format!("http://{}/v1/chat/completions", self.addr)
        }

        pub fn requests(&self) -> Vec<MockRequest> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl Drop for MockServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            if let Some(t) = self.thread.take() {
                let _ = t.join();
            }
        }
    }

    fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<MockRequest>>) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let mut parts = line.split_whitespace();
        let method = parts.next().unwrap_or_default().to_string();
        let path = parts.next().unwrap_or_default().to_string();
        let mut headers = Vec::new();
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let len = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
            .and_then(|(_, v)| v.parse::<usize>().ok())
            .unwrap_or(0);
        let mut body = vec![0; len];
        reader.read_exact(&mut body)?;
        let request = MockRequest {
            method,
            path,
            headers,
            body: String::from_utf8_lossy(&body).into_owned(),
        };
        let response = handler(&request);
        log.lock().unwrap().push(request);
        let reason = if response.status == 200 { "OK" } else { "Error" };
        let mut out = stream;
        write!(
            out,
            "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            response.status,
            response.body.len(),
            response.body
        )?;
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Subtheory;

    #[test]
    fn extraction_takes_first_balanced_object() {
        let text = r#"Sure! Here you go: {"alpha": 0.6, "beta": 0.1, "gamma": 0.3} and also {"x": 1}"#;
        assert_eq!(extract_json_object(text), Some(r#"{"alpha": 0.6, "beta": 0.1, "gamma": 0.3}"#));
        let nested = r#"note {not json} then {"a": {"b": "}"}, "c": 2}"#;
        assert_eq!(extract_json_object(nested), Some(r#"{"a": {"b": "}"}, "c": 2}"#));
        assert_eq!(extract_json_object("no braces here"), None);
        assert_eq!(extract_json_object("{unterminated"), None);
    }

    #[test]
    fn score_parsing() {
        let p = parse_scores(r#"{"alpha":0.6,"beta":0.1,"gamma":0.3}"#).unwrap();
        assert_eq!(p.components(), [0.6, 0.1, 0.3]);
        let q = parse_scores(r#"```json {"alpha":0.5,"beta":0.3,"gamma":0.21} ```"#).unwrap();
        assert!((q.alpha() - 0.5 / 1.01).abs() < 1e-9);
        assert!(matches!(parse_scores(r#"{"alpha":0.6,"beta":0.6,"gamma":0.6}"#), Err(Error::InvalidAnnotation(_))));
        assert!(matches!(parse_scores(r#"{"alpha":"high"}"#), Err(Error::InvalidAnnotation(_))));
    }

    #[test]
    fn rendered_prompt_names_all_scores() {
        let case = crate::case::fixtures::case("c1", Subtheory::ALL[0]);
        let (system, user) = PromptTemplate::default().render(&case);
        let all = format!("{system}\n{user}");
        for name in ["alpha", "beta", "gamma"] {
            assert!(all.contains(name));
        }
        assert!(user.contains("summary for c1"));
        assert!(user.contains("Ethics of Care"));
    }
}
