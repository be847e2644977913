//! Blocking HTTP clients for embedding and chat-completions endpoints.

use std::time::Duration;

use metasynth_core::embed::check_batch;
use metasynth_core::generation::{CompletionRequest, EndpointError, RetryPolicy, Sleeper, TextGenerator};
use metasynth_core::{EmbedError, Embedder, EmbeddingVector};
use serde::{Deserialize, Serialize};

/// Sleeps the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThreadSleep;

impl Sleeper for ThreadSleep {
    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn endpoint_url(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}{path}")
    }
}

fn transport_error(e: ureq::Error) -> EndpointError {
    match e {
        ureq::Error::Timeout(_) => EndpointError::Timeout,
        other => EndpointError::Transport(other.to_string()),
    }
}

/// POSTs `body` and decodes a JSON reply, retrying transient failures.
fn post_json<B, R>(
    agent: &ureq::Agent,
    url: &str,
    token: Option<&str>,
    body: &B,
    retry: &RetryPolicy,
    sleeper: &dyn Sleeper,
) -> Result<R, EndpointError>
where
    B: Serialize,
    R: for<'de> Deserialize<'de>,
{
    let mut retries = 0;
    loop {
        let attempt = || -> Result<R, EndpointError> {
            let mut req = agent.post(url);
            if let Some(t) = token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let mut resp = req.send_json(body).map_err(transport_error)?;
            let status = resp.status().as_u16();
            if !(200..300).contains(&status) {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(EndpointError::Status {
                    code: status,
                    body: text.chars().take(500).collect(),
                });
            }
            resp.body_mut()
                .read_json::<R>()
                .map_err(|e| EndpointError::Malformed(e.to_string()))
        };
        match attempt() {
            Err(e) if e.is_transient() && retries < retry.max_retries => {
                log::warn!("{url}: {e}; retrying");
                sleeper.sleep_ms(retry.delay_ms(retries));
                retries += 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

/// Client for `POST {url}/embeddings` taking `{model, input}` and returning
/// `{data: [{embedding}]}`.
pub struct HttpEmbedder {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
    sleeper: Box<dyn Sleeper>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(config: EndpointConfig, token: Option<String>) -> Self {
        let agent = agent(Duration::from_secs(config.timeout_secs));
        HttpEmbedder {
            config,
            token,
            agent,
            sleeper: Box::new(ThreadSleep),
        }
    }

    pub fn with_sleeper(mut self, sleeper: impl Sleeper + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        let url = endpoint_url(&self.config.url, "/embeddings");
        let body = EmbeddingRequest {
            model: &self.config.model,
            input: texts,
        };
        let resp: EmbeddingResponse = post_json(
            &self.agent,
            &url,
            self.token.as_deref(),
            &body,
            &self.config.retry,
            self.sleeper.as_ref(),
        )
        .map_err(|e| match e {
            EndpointError::Status { code, body } => EmbedError::Endpoint { status: code, message: body },
            EndpointError::Malformed(m) => EmbedError::Malformed(m),
            other => EmbedError::Unreachable(other.to_string()),
        })?;
        let mut data = resp.data;
        // Servers may answer out of order but tag each item with its index.
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        check_batch(data.into_iter().map(|d| d.embedding).collect(), texts.len())
    }
}

/// Client for `POST {url}/chat/completions` with a single user message.
pub struct ChatCompletionsClient {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl ChatCompletionsClient {
    pub fn new(config: EndpointConfig, token: Option<String>) -> Self {
        let agent = agent(Duration::from_secs(config.timeout_secs));
        ChatCompletionsClient { config, token, agent }
    }
}

impl TextGenerator for ChatCompletionsClient {
    fn model(&self) -> &str {
        &self.config.model
    }

    /// One attempt; retries are the caller's business so they show up in the
    /// job's attempt count.
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, EndpointError> {
        let url = endpoint_url(&self.config.url, "/chat/completions");
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: request.prompt,
            }],
            temperature: request.params.temperature,
            max_tokens: request.params.max_output_units,
            seed: request.params.seed,
        };
        let no_retry = RetryPolicy {
            max_retries: 0,
            ..self.config.retry
        };
        let resp: ChatResponse = post_json(&self.agent, &url, self.token.as_deref(), &body, &no_retry, &ThreadSleep)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| EndpointError::Malformed("no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urls_accept_base_or_full_path() {
        assert_eq!(endpoint_url("http://h/v1", "/embeddings"), "http://h/v1/embeddings");
        assert_eq!(endpoint_url("http://h/v1/", "/embeddings"), "http://h/v1/embeddings");
        assert_eq!(endpoint_url("http://h/v1/embeddings", "/embeddings"), "http://h/v1/embeddings");
    }
}
