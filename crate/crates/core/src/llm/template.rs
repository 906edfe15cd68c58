//! The three prompt families: commit/thought summarization, seeded
//! initialization, and the RAG-augmented evolution step.
//!
//! Template syntax: `{name}` is a placeholder, `{{` and `}}` are literal braces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUMMARIZE_SYSTEM: &str = "You are an expert in high-performance computing kernel optimization and try to learn the existing kernel optimization methods.";

const SUMMARIZE_BASE: &str = "Based on the given materials from a well-maintained code repository, please summarize the key idea of the commit messages and code diff records.

Your summarization should only contain the information and be no longer than 20 words and begin with an action verb (e.g., \"Apply\", \"Utilize\")
    {commit messages and code diff records}";

const KERNEL_SYSTEM: &str = "You are an expert in high-performance computing kernel optimization, trying to reduce the runtime of a {operation} kernel in RISC-V. Make sure the kernel returns the correct result. The kernel will be run on {hardware_type} with {extensions}.

Here is a reference implementation of the kernel:
    {code_of_reference_implementation}";

const SEED_BASE: &str = "Please modify the code by the given thought and its code examples.
    {thought}
    {code_examples}";

const EOH_BASE: &str = "1. First, describe your new thought and main steps in one sentence. The description must be inside within boxed {{}}.

2. Next, optimize the following kernel by your new thought with RISC-V extensions:
    {kernel code}

Do not give additional explanations.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SummarizeIdea,
    SeedInit,
    EohStep,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::SummarizeIdea, TemplateId::SeedInit, TemplateId::EohStep];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SummarizeIdea => "summarize_idea",
            TemplateId::SeedInit => "seed_init",
            TemplateId::EohStep => "eoh_step",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == name)
            .ok_or_else(|| Error::Config(format!("unknown template `{name}`")))
    }

    fn sources(self) -> (&'static str, &'static str) {
        match self {
            TemplateId::SummarizeIdea => (SUMMARIZE_SYSTEM, SUMMARIZE_BASE),
            TemplateId::SeedInit => (KERNEL_SYSTEM, SEED_BASE),
            TemplateId::EohStep => (KERNEL_SYSTEM, EOH_BASE),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A parsed template text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateText {
    segments: Vec<Segment>,
}

impl TemplateText {
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if matches!(chars.peek(), Some((_, '{'))) => {
                    chars.next();
                    literal.push('{');
                }
                '}' if matches!(chars.peek(), Some((_, '}'))) => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let rest = &source[i + 1..];
                    let end = rest.find('}').ok_or_else(|| {
                        Error::Parse {
                            offset: i,
                            detail: "unterminated placeholder".into(),
                        }
                    })?;
                    let name = &rest[..end];
                    if !is_placeholder_name(name) {
                        return Err(Error::Parse {
                            offset: i,
                            detail: format!("invalid placeholder name `{name}`"),
                        });
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder(name.to_string()));
                    for _ in 0..=end {
                        chars.next();
                    }
                }
                '}' => {
                    return Err(Error::Parse {
                        offset: i,
                        detail: "unmatched `}`".into(),
                    })
                }
                _ => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(TemplateText { segments })
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.segments {
            if let Segment::Placeholder(name) = s {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
        }
        out
    }

    /// Re-serializes into template syntax.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal(text) => out.push_str(&text.replace('{', "{{").replace('}', "}}")),
                Segment::Placeholder(name) => {
                    out.push('{');
                    out.push_str(name);
                    out.push('}');
                }
            }
        }
        out
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal(text) => out.push_str(text),
                Segment::Placeholder(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| Error::Template(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

fn is_placeholder_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ' ')
        && !name.ends_with(' ')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub system: TemplateText,
    pub base: TemplateText,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> Self {
        let (system, base) = id.sources();
        PromptTemplate {
            id,
            system: TemplateText::parse(system).expect("built-in template parses"),
            base: TemplateText::parse(base).expect("built-in template parses"),
        }
    }

    pub fn source(id: TemplateId) -> (&'static str, &'static str) {
        id.sources()
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut names = self.system.placeholders();
        for name in self.base.placeholders() {
            if !names.contains(&name) {
                names.push(name);
            }
        }
        names
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<RenderedPrompt> {
        Ok(RenderedPrompt {
            system: self.system.render(bindings)?,
            user: self.base.render(bindings)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// Renders a built-in template. Every placeholder must be bound.
pub fn render_prompt<K, V, I>(id: TemplateId, bindings: I) -> Result<RenderedPrompt>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    let map: BTreeMap<String, String> = bindings
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect();
    PromptTemplate::get(id).render(&map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed_bindings() -> Vec<(&'static str, &'static str)> {
        vec![
            ("operation", "Mish"),
            ("hardware_type", "Spacemit K1"),
            ("extensions", "RVV1.0"),
            ("code_of_reference_implementation", "void mish(float*x,int n){}"),
            ("thought", "Unroll loops"),
            ("code_examples", "// diff"),
        ]
    }

    #[test]
    fn placeholder_sets() {
        assert_eq!(
            PromptTemplate::get(TemplateId::SeedInit).placeholders(),
            vec![
                "operation",
                "hardware_type",
                "extensions",
                "code_of_reference_implementation",
                "thought",
                "code_examples"
            ]
        );
        assert_eq!(
            PromptTemplate::get(TemplateId::SummarizeIdea).placeholders(),
            vec!["commit messages and code diff records"]
        );
        assert!(PromptTemplate::get(TemplateId::EohStep)
            .placeholders()
            .contains(&"kernel code"));
    }

    #[test]
    fn escaped_braces_render_literally() {
        let mut b: Vec<(&str, &str)> = seed_bindings();
        b.push(("kernel code", "int k;"));
        let p = render_prompt(TemplateId::EohStep, b).unwrap();
        assert!(p.user.contains("description must be inside within boxed {}."));
        assert!(p.user.contains("    int k;"));
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let b: Vec<_> = seed_bindings()
            .into_iter()
            .filter(|(k, _)| *k != "extensions")
            .collect();
        match render_prompt(TemplateId::SeedInit, b) {
            Err(Error::Template(name)) => assert_eq!(name, "extensions"),
            other => panic!("expected template error, got {other:?}"),
        }
    }

    #[test]
    fn parse_to_source_is_lossless() {
        for id in TemplateId::ALL {
            let (system, base) = PromptTemplate::source(id);
            let t = PromptTemplate::get(id);
            assert_eq!(t.system.to_source(), system);
            assert_eq!(t.base.to_source(), base);
        }
    }

    #[test]
    fn malformed_templates_rejected() {
        assert!(TemplateText::parse("a { b").is_err());
        assert!(TemplateText::parse("a } b").is_err());
        assert!(TemplateText::parse("{1abc}").is_err());
    }
}
