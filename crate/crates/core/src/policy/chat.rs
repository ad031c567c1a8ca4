use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prompt::{vars, PromptTemplate, POLICY, REFLECTION};
use super::react::parse_react;
use super::{Policy, PolicyContext, PolicyError, Proposal};
use crate::remote::{HttpClient, HttpConfig, RemoteError};
use crate::trajectory::{Action, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// e.g. `http://localhost:8000/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub http: HttpConfig,
}

fn default_max_tokens() -> u32 {
    256
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_tokens: default_max_tokens(),
            http: HttpConfig::default(),
        }
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Server-reported total tokens, when present.
    pub usage_tokens: Option<u64>,
}

impl Completion {
    /// Reported usage, or a characters/4 estimate over prompt and reply.
    pub fn tokens_or_estimate(&self, prompt: &[Message]) -> u64 {
        self.usage_tokens.unwrap_or_else(|| {
            let chars: usize = prompt.iter().map(|m| m.content.chars().count()).sum::<usize>()
                + self.text.chars().count();
            (chars / 4) as u64
        })
    }
}

/// Client for the chat-completions request/response shape.
#[derive(Debug)]
pub struct ChatClient {
    endpoint: EndpointConfig,
    http: HttpClient,
}

impl ChatClient {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            http: HttpClient::new(endpoint.http.clone()),
            endpoint,
        }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    fn token(&self) -> Result<Option<String>, RemoteError> {
        match &self.endpoint.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| RemoteError::MissingToken(var.clone())),
        }
    }

    pub fn complete(
        &self,
        messages: &[Message],
        temperature: f64,
        seed: Option<u64>,
    ) -> Result<Completion, RemoteError> {
        let mut body = serde_json::json!({
            "model": self.endpoint.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": self.endpoint.max_tokens,
        });
        if let Some(seed) = seed {
            body["seed"] = serde_json::json!(seed);
        }
        let token = self.token()?;
        let resp = self.http.post_json(&self.endpoint.url(), &body, token.as_deref())?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                RemoteError::Malformed("response has no choices[0].message.content".into())
            })?
            .to_string();
        let usage_tokens = resp.pointer("/usage/total_tokens").and_then(|v| v.as_u64());
        Ok(Completion { text, usage_tokens })
    }
}

/// Policy backed by a chat model answering in the ReAct format.
///
/// A reply whose action is missing or not admissible is retried with the
/// error appended to the conversation, up to `max_parse_retries` times;
/// after that the last raw action (or `none`) is returned so the
/// environment answers it with its invalid-action observation.
pub struct ChatPolicy {
    client: Arc<ChatClient>,
    template: PromptTemplate,
    reflection_template: PromptTemplate,
    pub max_parse_retries: usize,
}

impl ChatPolicy {
    pub fn new(client: Arc<ChatClient>) -> Self {
        Self {
            client,
            template: PromptTemplate::builtin(POLICY),
            reflection_template: PromptTemplate::builtin(REFLECTION),
            max_parse_retries: 3,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn render(&self, ctx: &PolicyContext<'_>) -> Vec<Message> {
        let memory = if ctx.memory.is_empty() {
            String::new()
        } else {
            let lines: Vec<String> = ctx
                .memory
                .iter()
                .enumerate()
                .map(|(i, r)| format!("Reflection {}: {r}", i + 1))
                .collect();
            format!("Notes from earlier attempts:\n{}\n", lines.join("\n"))
        };
        let actions: Vec<&str> = ctx.valid_actions.iter().map(Action::as_str).collect();
        self.template.render(&vars([
            ("instruction", ctx.instruction.text.clone()),
            ("history", ctx.trajectory.transcript()),
            ("valid_actions", actions.join("\n")),
            ("memory", memory),
        ]))
    }

    fn one(&self, ctx: &PolicyContext<'_>, seed: u64) -> Result<Proposal, PolicyError> {
        let mut messages = self.render(ctx);
        let mut last_raw: Option<String> = None;
        for _ in 0..=self.max_parse_retries {
            let reply = self.client.complete(&messages, ctx.temperature, Some(seed))?;
            let problem = match parse_react(&reply.text) {
                Ok((thought, action)) => match ctx.admits(&action) {
                    Ok(()) => {
                        let free_form = !ctx.valid_actions.iter().any(|a| a.as_str() == action);
                        if let Ok(action) = Action::new(action) {
                            return Ok(Proposal {
                                action,
                                weight: 1.0,
                                thought: (!thought.is_empty()).then_some(thought),
                                free_form,
                            });
                        }
                        "the action is empty".to_string()
                    }
                    Err(e) => {
                        last_raw = Some(action);
                        e
                    }
                },
                Err(e) => e.to_string(),
            };
            messages.push(Message::assistant(reply.text));
            messages.push(Message::user(format!(
                "Your reply could not be used: {problem}. Reply again with one Thought and one Action."
            )));
        }
        let raw = last_raw.unwrap_or_else(|| "none".into());
        Ok(Proposal {
            action: Action::new(raw).unwrap_or_else(|_| Action::new("none").expect("valid")),
            weight: 1.0,
            thought: None,
            free_form: true,
        })
    }
}

impl Policy for ChatPolicy {
    fn name(&self) -> String {
        format!("chat:{}", self.client.endpoint().model)
    }

    fn propose(&self, ctx: &PolicyContext<'_>, k: usize) -> Result<Vec<Proposal>, PolicyError> {
        if k == 0 {
            return Err(PolicyError::ZeroK);
        }
        if ctx.valid_actions.is_empty() && !ctx.free_form {
            return Err(PolicyError::NoValidActions);
        }
        let draws = if ctx.temperature <= 0.0 { 1 } else { k };
        let mut out: Vec<Proposal> = Vec::new();
        for i in 0..draws {
            let p = self.one(ctx, crate::seed::derive(ctx.seed, "chat", i as u64))?;
            if !out.iter().any(|q| q.action == p.action) {
                out.push(p);
            }
        }
        let n = out.len() as f64;
        for (rank, p) in out.iter_mut().enumerate() {
            p.weight = (n - rank as f64) / n;
        }
        Ok(out)
    }

    fn reflect(&self, trajectory: &Trajectory, score: f64, _memory: &[String]) -> Result<String, PolicyError> {
        let messages = self.reflection_template.render(&vars([
            ("instruction", trajectory.instruction.text.clone()),
            ("history", trajectory.transcript()),
            ("score", format!("{score:.3}")),
        ]));
        Ok(self.client.complete(&messages, 0.0, None)?.text.trim().to_string())
    }
}
