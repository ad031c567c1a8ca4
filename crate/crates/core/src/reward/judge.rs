use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::{RewardError, Scorer};
use crate::policy::prompt::{vars, PromptTemplate, JUDGE};
use crate::policy::ChatClient;
use crate::trajectory::{EpisodeInfo, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JudgeScore {
    pub value: f64,
    /// The reply's number was outside `[0, 1]`.
    pub clamped: bool,
}

fn score_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*>").expect("valid regex"))
}

/// First `<number>` in the reply, clamped to `[0, 1]`.
pub fn parse_judge_score(reply: &str) -> Result<JudgeScore, RewardError> {
    let caps = score_pattern()
        .captures(reply)
        .ok_or_else(|| RewardError::ScoreParse(excerpt(reply)))?;
    let raw: f64 = caps[1].parse().map_err(|_| RewardError::ScoreParse(excerpt(reply)))?;
    let value = raw.clamp(0.0, 1.0);
    let clamped = value != raw;
    if clamped {
        log::warn!("judge score {raw} outside [0, 1], clamped to {value}");
    }
    Ok(JudgeScore { value, clamped })
}

fn excerpt(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Few-shot LLM judge.
pub struct JudgeScorer {
    client: Arc<ChatClient>,
    template: PromptTemplate,
}

impl JudgeScorer {
    pub fn new(client: Arc<ChatClient>) -> Self {
        Self {
            client,
            template: PromptTemplate::builtin(JUDGE),
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn judge(&self, trajectory: &Trajectory) -> Result<JudgeScore, RewardError> {
        let messages = self.template.render(&vars([
            ("instruction", trajectory.instruction.text.clone()),
            ("history", trajectory.transcript()),
        ]));
        let reply = self.client.complete(&messages, 0.0, None)?;
        parse_judge_score(&reply.text)
    }
}

impl Scorer for JudgeScorer {
    fn name(&self) -> String {
        "judge".into()
    }

    fn score(&self, trajectory: &Trajectory, _info: &EpisodeInfo) -> Result<f64, RewardError> {
        Ok(self.judge(trajectory)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::EndpointConfig;
    use crate::remote::HttpConfig;
    use crate::testing::StubServer;
    use crate::trajectory::{Instruction, Observation};

    #[test]
    fn parses_first_bracketed_number() {
        let s = parse_judge_score("Reasoning... Therefore, the task completion score is <0.750>").unwrap();
        assert_eq!(s, JudgeScore { value: 0.75, clamped: false });
        assert_eq!(parse_judge_score("<1> then <0.2>").unwrap().value, 1.0);
        assert_eq!(parse_judge_score("< .5 >").unwrap().value, 0.5);
    }

    #[test]
    fn clamps_out_of_range() {
        assert_eq!(parse_judge_score("<1.5>").unwrap(), JudgeScore { value: 1.0, clamped: true });
        assert_eq!(parse_judge_score("<-0.25>").unwrap(), JudgeScore { value: 0.0, clamped: true });
    }

    #[test]
    fn missing_score() {
        for reply in ["score is 0.75", "<high>", "", "<>"] {
            assert!(matches!(parse_judge_score(reply), Err(RewardError::ScoreParse(_))), "{reply}");
        }
    }

    #[test]
    fn judge_over_stub() {
        let body = serde_json::json!({"choices": [{"message": {"content": "so the score is <0.250>"}}]});
        let server = StubServer::start(vec![(200, body.to_string())]);
        let mut ep = EndpointConfig::new(server.url("/v1"), "judge");
        ep.http = HttpConfig { max_retries: 0, ..HttpConfig::default() };
        let judge = JudgeScorer::new(Arc::new(ChatClient::new(ep)));
        let t = Trajectory::new(Instruction::new("i", "buy a hat").unwrap(), Observation::new("o"));
        assert_eq!(judge.score(&t, &EpisodeInfo::default()).unwrap(), 0.25);
        let sent = &server.requests()[0].body;
        assert!(sent.contains("buy a hat"));
    }
}
