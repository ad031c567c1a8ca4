//! Plain-text prompt templates.
//!
//! A template file is a sequence of `### system`, `### user` and
//! `### assistant` sections. Earlier user/assistant pairs are few-shot
//! examples; the final user section carries `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use super::chat::Message;

pub type TemplateVars = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub few_shot: Vec<(String, String)>,
    pub user: String,
}

pub const POLICY: &str = include_str!("../../assets/prompts/policy.txt");
pub const REFLECTION: &str = include_str!("../../assets/prompts/reflection.txt");
pub const JUDGE: &str = include_str!("../../assets/prompts/judge.txt");
pub const INSTRUCTION_GAME24: &str = include_str!("../../assets/prompts/instruction_game24.txt");
pub const INSTRUCTION_SHOP: &str = include_str!("../../assets/prompts/instruction_shop.txt");
pub const REFINE_SHOP: &str = include_str!("../../assets/prompts/refine_shop.txt");

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            if let Some(role) = line.strip_prefix("### ") {
                sections.push((role.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err("template text before the first `### role` header".into());
            }
        }
        let mut system = String::new();
        let mut turns: Vec<(String, String)> = Vec::new();
        for (role, body) in sections {
            let body = body.trim().to_string();
            match role.as_str() {
                "system" => system = body,
                "user" | "assistant" => turns.push((role, body)),
                other => return Err(format!("unknown section `{other}`")),
            }
        }
        let Some((last_role, user)) = turns.pop() else {
            return Err("template has no user section".into());
        };
        if last_role != "user" {
            return Err("template must end with a user section".into());
        }
        let mut few_shot = Vec::new();
        let mut it = turns.into_iter();
        while let Some((r1, u)) = it.next() {
            match (r1.as_str(), it.next()) {
                ("user", Some((r2, a))) if r2 == "assistant" => few_shot.push((u, a)),
                _ => return Err("few-shot turns must alternate user/assistant".into()),
            }
        }
        Ok(Self {
            system,
            few_shot,
            user,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn builtin(text: &str) -> Self {
        Self::parse(text).expect("bundled template parses")
    }

    /// Substitutes `{{name}}` placeholders; unknown names are left as is.
    pub fn fill(text: &str, vars: &TemplateVars) -> String {
        let mut out = text.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        out
    }

    pub fn render(&self, vars: &TemplateVars) -> Vec<Message> {
        let mut messages = Vec::new();
        if !self.system.is_empty() {
            messages.push(Message::system(Self::fill(&self.system, vars)));
        }
        for (u, a) in &self.few_shot {
            messages.push(Message::user(Self::fill(u, vars)));
            messages.push(Message::assistant(Self::fill(a, vars)));
        }
        messages.push(Message::user(Self::fill(&self.user, vars)));
        messages
    }
}

pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> TemplateVars {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_parse() {
        for t in [POLICY, REFLECTION, JUDGE, INSTRUCTION_GAME24, INSTRUCTION_SHOP, REFINE_SHOP] {
            PromptTemplate::parse(t).unwrap();
        }
        assert_eq!(PromptTemplate::builtin(JUDGE).few_shot.len(), 1);
    }

    #[test]
    fn render_is_pure_and_fills_placeholders() {
        let t = PromptTemplate::builtin(POLICY);
        let v = vars([
            ("instruction", "Input: 1 2 3 4".into()),
            ("history", "Observation: 1 2 3 4".into()),
            ("valid_actions", "1 + 2 = 3 (left: 3 3 4)".into()),
            ("memory", String::new()),
        ]);
        let a = t.render(&v);
        assert_eq!(a, t.render(&v));
        let last = &a.last().unwrap().content;
        assert!(last.contains("Instruction: Input: 1 2 3 4"));
        assert!(!last.contains("{{"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(PromptTemplate::parse("### user\nhi\n### assistant\nyo").is_err());
        assert!(PromptTemplate::parse("text first\n### user\nhi").is_err());
        assert!(PromptTemplate::parse("### system\nonly").is_err());
    }
}
