use std::path::Path;
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

use super::{ChatBackend, ChatRequest, ChatResponse};

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// One scripted `(pattern -> replies)` row.
///
/// The pattern is a regex matched against `system + "\n" + user`. Replies are
/// served in order; the last one repeats once the list is exhausted. `$1`-style
/// capture references in a reply are expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Answer unmatched kernel prompts with a faster variant of the parent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_improver: Option<KernelImprover>,
}

/// Offline stand-in for a code model, paired with the mock executor: reads the
/// `@mock latency_ns=N` directive of the kernel being modified and replies
/// with a boxed description plus a kernel at `max(floor_ns, N - step_ns)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelImprover {
    pub step_ns: u64,
    pub floor_ns: u64,
    pub default_ns: u64,
}

impl Default for KernelImprover {
    fn default() -> Self {
        KernelImprover {
            step_ns: 50,
            floor_ns: 100,
            default_ns: 1000,
        }
    }
}

impl KernelImprover {
    /// The kernel being modified: the first parent in an evolution prompt
    /// (ignoring appended reference context), else the reference kernel.
    fn parent_latency(&self, request: &ChatRequest) -> u64 {
        static DIRECTIVE: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"@mock[^\n]*latency_ns=(\d+)").expect("static regex"));
        let user = request
            .user
            .split(crate::rag::CONTEXT_HEADER)
            .next()
            .unwrap_or_default();
        let found = if request.tag.starts_with("eoh:") {
            DIRECTIVE.captures(user)
        } else {
            DIRECTIVE.captures(&request.system)
        };
        found
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(self.default_ns)
    }

    pub fn reply(&self, request: &ChatRequest) -> Option<String> {
        if request.tag != "seed_init" && !request.tag.starts_with("eoh:") {
            return None;
        }
        let latency = self.parent_latency(request).saturating_sub(self.step_ns).max(self.floor_ns);
        Some(format!(
            "boxed {{Trim the kernel to {latency} ns}}\n```c\nvoid kernel(void) {{}}\n// @mock latency_ns={latency}\n```\n"
        ))
    }
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        util::read_json(path)
    }
}

struct CompiledRule {
    pattern: Regex,
    replies: Vec<String>,
}

/// Scripted chat backend. Unmatched requests are a protocol error unless a
/// responder closure is installed.
pub struct MockChat {
    rules: Vec<CompiledRule>,
    served: Mutex<Vec<usize>>,
    responder: Option<Responder>,
}

impl Default for MockChat {
    fn default() -> Self {
        Self::new()
    }
}

impl MockChat {
    pub fn new() -> Self {
        MockChat {
            rules: Vec::new(),
            served: Mutex::new(Vec::new()),
            responder: None,
        }
    }

    pub fn rule<I, S>(mut self, pattern: &str, replies: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("mock pattern `{pattern}`: {e}")))?;
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        if replies.is_empty() {
            return Err(Error::Config("mock rule needs at least one reply".into()));
        }
        self.rules.push(CompiledRule { pattern, replies });
        self.served.get_mut().expect("mock state poisoned").push(0);
        Ok(self)
    }

    /// Fallback consulted when no rule matches. It must be a pure function of
    /// the request for runs to stay reproducible.
    pub fn with_responder(
        mut self,
        f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    pub fn from_script(script: &MockScript) -> Result<Self> {
        let mock = script.rules.iter().try_fold(MockChat::new(), |mock, rule| {
            let mut replies = rule.replies.clone();
            if let Some(r) = &rule.reply {
                replies.insert(0, r.clone());
            }
            mock.rule(&rule.pattern, replies)
        })?;
        Ok(match script.kernel_improver {
            Some(improver) => mock.with_responder(move |r| improver.reply(r)),
            None => mock,
        })
    }
}

impl ChatBackend for MockChat {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let haystack = format!("{}\n{}", request.system, request.user);
        let text = self
            .rules
            .iter()
            .enumerate()
            .find_map(|(i, rule)| {
                let caps = rule.pattern.captures(&haystack)?;
                let mut served = self.served.lock().expect("mock state poisoned");
                let idx = served[i].min(rule.replies.len() - 1);
                served[i] += 1;
                let mut out = String::new();
                caps.expand(&rule.replies[idx], &mut out);
                Some(out)
            })
            .or_else(|| self.responder.as_ref().and_then(|f| f(request)))
            .ok_or_else(|| {
                Error::Protocol(format!("mock backend has no script for `{}` request", request.tag))
            })?;
        Ok(ChatResponse {
            prompt_tokens: haystack.split_whitespace().count() as u64,
            completion_tokens: text.split_whitespace().count() as u64,
            text,
            backend: self.id(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(user: &str) -> ChatRequest {
        ChatRequest {
            tag: "t".into(),
            system: "sys".into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 10,
            reprompt: false,
        }
    }

    #[test]
    fn matching_reply_returned() {
        let m = MockChat::new().rule("dgemm", ["Apply unrolling"]).unwrap();
        assert_eq!(m.complete(&req("fast dgemm")).unwrap().text, "Apply unrolling");
    }

    #[test]
    fn replies_advance_then_stick() {
        let m = MockChat::new().rule("x", ["a", "b"]).unwrap();
        let got: Vec<_> = (0..3).map(|_| m.complete(&req("x")).unwrap().text).collect();
        assert_eq!(got, ["a", "b", "b"]);
    }

    #[test]
    fn captures_expand() {
        let m = MockChat::new().rule(r"kernel=(\w+)", ["got $1"]).unwrap();
        assert_eq!(m.complete(&req("kernel=mish")).unwrap().text, "got mish");
    }

    #[test]
    fn unscripted_is_protocol_error() {
        let m = MockChat::new().rule("dgemm", ["a"]).unwrap();
        assert!(matches!(m.complete(&req("sgemv")), Err(Error::Protocol(_))));
    }

    #[test]
    fn responder_is_fallback() {
        let m = MockChat::new().with_responder(|r| Some(r.user.to_uppercase()));
        assert_eq!(m.complete(&req("abc")).unwrap().text, "ABC");
    }

    #[test]
    fn script_json_shape() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"pattern":"a","reply":"first","replies":["second"]}]}"#,
        )
        .unwrap();
        let m = MockChat::from_script(&script).unwrap();
        assert_eq!(m.complete(&req("a")).unwrap().text, "first");
        assert_eq!(m.complete(&req("a")).unwrap().text, "second");
    }

    #[test]
    fn improver_steps_down_to_floor() {
        let imp = KernelImprover { step_ns: 300, floor_ns: 500, default_ns: 1000 };
        let mut r = req("Parent kernel 1 code:\n// @mock latency_ns=900\n");
        r.tag = "eoh:m1".into();
        assert!(imp.reply(&r).unwrap().contains("latency_ns=600"));
        r.user = "// @mock latency_ns=700\n".into();
        assert!(imp.reply(&r).unwrap().contains("latency_ns=500"));
        r.tag = "seed_init".into();
        assert!(imp.reply(&r).unwrap().contains("latency_ns=700"));
        r.tag = "summarize_thought".into();
        assert!(imp.reply(&r).is_none());
    }
}
