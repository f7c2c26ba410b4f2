//! JSON-over-HTTP proposer.
//!
//! Each call is a `POST` of `{"model", "op", "prompt", "request"}` to the
//! configured endpoint with a bearer token read from [`API_KEY_ENV`]. The
//! token lives only in memory: it has no `Serialize` impl and its `Debug`
//! output is redacted.

use std::fmt;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::*;

pub const API_KEY_ENV: &str = "CADFORGE_API_KEY";

#[derive(Clone, PartialEq, Eq)]
pub struct ApiToken(String);

impl ApiToken {
    pub fn new(secret: impl Into<String>) -> ApiToken {
        ApiToken(secret.into())
    }

    /// Reads [`API_KEY_ENV`]; `None` when unset or blank.
    pub fn from_env() -> Option<ApiToken> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(ApiToken)
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiToken(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// In-flight request limit.
    pub max_concurrent: usize,
    /// First backoff after HTTP 429; doubles on every retry.
    pub retry_base_ms: u64,
    pub max_retries: u32,
    /// Directory with `<op>.txt` prompt overrides.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            endpoint: "http://127.0.0.1:8080/v1/propose".into(),
            model: "default".into(),
            timeout_secs: 120,
            max_concurrent: 4,
            retry_base_ms: 500,
            max_retries: 3,
            prompts_dir: None,
        }
    }
}

const OPS: [(&str, &str); 4] = [
    (
        "propose",
        include_str!("../../../../docs/prompts/propose.txt"),
    ),
    (
        "synthesize",
        include_str!("../../../../docs/prompts/synthesize.txt"),
    ),
    (
        "verify",
        include_str!("../../../../docs/prompts/verify.txt"),
    ),
    (
        "repair",
        include_str!("../../../../docs/prompts/repair.txt"),
    ),
];

/// Counting semaphore.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpProposer {
    cfg: ProposerConfig,
    token: Option<ApiToken>,
    agent: ureq::Agent,
    prompts: Vec<(String, String)>,
    slots: Slots,
}

impl fmt::Debug for HttpProposer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProposer")
            .field("cfg", &self.cfg)
            .field("token", &self.token)
            .finish()
    }
}

impl HttpProposer {
    /// Fails when a prompt override exists but cannot be read.
    pub fn new(
        cfg: ProposerConfig,
        token: Option<ApiToken>,
    ) -> Result<HttpProposer, ProposerError> {
        let mut prompts = Vec::new();
        for (op, builtin) in OPS {
            let text = match &cfg.prompts_dir {
                Some(dir) if dir.join(format!("{op}.txt")).exists() => {
                    std::fs::read_to_string(dir.join(format!("{op}.txt")))
                        .map_err(|e| ProposerError::InvalidRequest(format!("prompt {op}: {e}")))?
                }
                _ => builtin.to_string(),
            };
            prompts.push((op.to_string(), text));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Slots {
            free: Mutex::new(cfg.max_concurrent.max(1)),
            cv: Condvar::new(),
        };
        Ok(HttpProposer {
            cfg,
            token,
            agent,
            prompts,
            slots,
        })
    }

    /// Token from the environment.
    pub fn from_env(cfg: ProposerConfig) -> Result<HttpProposer, ProposerError> {
        HttpProposer::new(cfg, ApiToken::from_env())
    }

    pub fn config(&self) -> &ProposerConfig {
        &self.cfg
    }

    fn prompt(&self, op: &str) -> &str {
        self.prompts
            .iter()
            .find(|(o, _)| o == op)
            .map_or("", |(_, p)| p.as_str())
    }

    fn post(&self, op: &str, request: &Value) -> Result<Value, ProposerError> {
        let body = json!({ "model": self.cfg.model, "op": op, "prompt": self.prompt(op), "request": request });
        let _slot = self.slots.acquire();
        let mut attempt = 0;
        loop {
            let mut req = self
                .agent
                .post(&self.cfg.endpoint)
                .header("Content-Type", "application/json");
            if let Some(t) = &self.token {
                req = req.header("Authorization", format!("Bearer {}", t.expose()));
            }
            let mut resp = req
                .send_json(&body)
                .map_err(|e| ProposerError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 429 {
                if attempt >= self.cfg.max_retries {
                    return Err(ProposerError::Transport(format!(
                        "rate limited after {attempt} retries"
                    )));
                }
                let wait = self.cfg.retry_base_ms.saturating_mul(1 << attempt.min(20));
                log::warn!("{op}: rate limited, retrying in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
                attempt += 1;
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(ProposerError::Transport(format!(
                    "{op}: HTTP status {status}"
                )));
            }
            return resp
                .body_mut()
                .read_json::<Value>()
                .map_err(|e| ProposerError::MalformedResponse(format!("{op}: {e}")));
        }
    }

    /// Posts and decodes, asking once more when the reply does not decode.
    fn call<T: DeserializeOwned>(
        &self,
        op: &str,
        request: &impl Serialize,
    ) -> Result<T, ProposerError> {
        self.call_checked(op, request, Ok)
    }

    /// Like [`Self::call`]; `check` failures also count as malformed.
    fn call_checked<T: DeserializeOwned, U>(
        &self,
        op: &str,
        request: &impl Serialize,
        check: impl Fn(T) -> Result<U, String>,
    ) -> Result<U, ProposerError> {
        let request = serde_json::to_value(request)
            .map_err(|e| ProposerError::InvalidRequest(e.to_string()))?;
        let once = || {
            let t = self.post(op, &request).and_then(|v| decode::<T>(op, v))?;
            check(t).map_err(|e| ProposerError::MalformedResponse(format!("{op}: {e}")))
        };
        match once() {
            Err(ProposerError::MalformedResponse(m)) => {
                log::warn!("{m}; asking again");
                once()
            }
            r => r,
        }
    }
}

fn decode<T: DeserializeOwned>(op: &str, v: Value) -> Result<T, ProposerError> {
    serde_json::from_value(v).map_err(|e| ProposerError::MalformedResponse(format!("{op}: {e}")))
}

#[derive(Deserialize)]
struct ChildrenReply {
    children: Vec<Value>,
}

#[derive(Deserialize)]
struct CodeReply {
    code: String,
}

/// Keeps well-formed children whose parents were offered.
fn valid_children(req: &ProposeRequest, raw: Vec<Value>) -> Vec<ChildMeta> {
    let mut out = Vec::new();
    for v in raw {
        let child = match serde_json::from_value::<ChildMeta>(v) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("dropping child record: {e}");
                continue;
            }
        };
        let known = |id: &u64| req.parents.iter().any(|p| p.id == *id);
        let reason = if !is_snake_case(&child.meta.name) {
            Some("name is not snake_case")
        } else if child.meta.r#abstract.trim().is_empty() || child.meta.detailed.trim().is_empty() {
            Some("empty description")
        } else if child.parents.is_empty() || !child.parents.iter().all(known) {
            Some("parents do not match the request")
        } else {
            None
        };
        match reason {
            Some(r) => log::warn!("dropping child `{}`: {r}", child.meta.name),
            None => out.push(child),
        }
        if out.len() == req.k {
            break;
        }
    }
    out
}

fn parsed_code(r: CodeReply) -> Result<String, String> {
    check_code(&r.code)
        .map(|_| r.code)
        .map_err(|e| format!("returned code does not parse: {e}"))
}

impl Proposer for HttpProposer {
    fn propose_metadata(&self, req: &ProposeRequest) -> Result<Vec<ChildMeta>, ProposerError> {
        check_propose(req)?;
        let reply: ChildrenReply = self.call("propose", req)?;
        Ok(valid_children(req, reply.children))
    }

    fn synthesize_code(&self, req: &SynthesizeRequest) -> Result<String, ProposerError> {
        check_synthesize(req)?;
        self.call_checked("synthesize", req, parsed_code)
    }

    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, ProposerError> {
        check_verify(req)?;
        self.call("verify", req)
    }

    fn repair(&self, req: &RepairRequest) -> Result<String, ProposerError> {
        self.call_checked("repair", req, parsed_code)
    }
}
