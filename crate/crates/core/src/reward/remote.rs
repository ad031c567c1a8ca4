use super::{trajectory_payload, RewardError, Scorer};
use crate::remote::{HttpClient, HttpConfig, RemoteError};
use crate::trajectory::{EpisodeInfo, Trajectory};

/// Scores by POSTing `{instruction, o0, steps}` and reading `{"score"}`.
#[derive(Debug)]
pub struct RemoteScorer {
    url: String,
    token_env: Option<String>,
    http: HttpClient,
}

impl RemoteScorer {
    pub fn new(url: impl Into<String>, http: HttpConfig) -> Self {
        Self {
            url: url.into(),
            token_env: None,
            http: HttpClient::new(http),
        }
    }

    pub fn with_token_env(mut self, var: impl Into<String>) -> Self {
        self.token_env = Some(var.into());
        self
    }
}

impl Scorer for RemoteScorer {
    fn name(&self) -> String {
        "remote".into()
    }

    fn score(&self, trajectory: &Trajectory, _info: &EpisodeInfo) -> Result<f64, RewardError> {
        let token = match &self.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| RemoteError::MissingToken(var.clone()))?),
            None => None,
        };
        let resp = self.http.post_json(&self.url, &trajectory_payload(trajectory), token.as_deref())?;
        let score = resp
            .get("score")
            .ok_or_else(|| RewardError::Contract("response has no \"score\" field".into()))?
            .as_f64()
            .ok_or_else(|| RewardError::Contract("\"score\" is not a number".into()))?;
        if !score.is_finite() {
            return Err(RewardError::Contract("\"score\" is not finite".into()));
        }
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::StubServer;
    use crate::trajectory::{Action, Instruction, Observation};

    fn fast() -> HttpConfig {
        HttpConfig { max_retries: 0, timeout_secs: 2.0, ..HttpConfig::default() }
    }

    fn traj() -> Trajectory {
        let mut t = Trajectory::new(Instruction::new("i", "Input: 1 2 3 4").unwrap(), Observation::new("1 2 3 4"));
        t.push(Action::new("1 + 2 = 3 (left: 3 3 4)").unwrap(), Observation::new("3 3 4"), 10).unwrap();
        t
    }

    #[test]
    fn reads_score_and_sends_contract_body() {
        let server = StubServer::start(vec![(200, r#"{"score": 0.42}"#.into())]);
        let s = RemoteScorer::new(server.url("/score"), fast());
        assert_eq!(s.score(&traj(), &EpisodeInfo::default()).unwrap(), 0.42);
        let body: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
        assert_eq!(body["o0"], "1 2 3 4");
        assert_eq!(body["steps"][0]["a"], "1 + 2 = 3 (left: 3 3 4)");
        assert_eq!(body["steps"][0]["o"], "3 3 4");
    }

    #[test]
    fn wrong_field_is_contract_error() {
        let server = StubServer::start(vec![(200, r#"{"reward": 0.42}"#.into())]);
        let s = RemoteScorer::new(server.url("/score"), fast());
        assert!(matches!(s.score(&traj(), &EpisodeInfo::default()), Err(RewardError::Contract(_))));
    }

    #[test]
    fn unreachable_is_remote_error() {
        let s = RemoteScorer::new("http://127.0.0.1:9/score", fast());
        assert!(matches!(s.score(&traj(), &EpisodeInfo::default()), Err(RewardError::Remote(_))));
    }
}
