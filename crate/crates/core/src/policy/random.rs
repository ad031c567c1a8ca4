use super::{tempered_weights, weighted_order, Policy, PolicyContext, PolicyError, Proposal};

/// Samples among the valid actions with weights `exp(score / T)` over a
/// uniform base score: uniform at any `T > 0`, greedy at `T = 0`. Greedy
/// ties resolve to the lexicographically smallest action.
#[derive(Debug, Clone, Default)]
pub struct RandomPolicy;

impl RandomPolicy {
    pub fn new() -> Self {
        Self
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn propose(&self, ctx: &PolicyContext<'_>, k: usize) -> Result<Vec<Proposal>, PolicyError> {
        if k == 0 {
            return Err(PolicyError::ZeroK);
        }
        if ctx.valid_actions.is_empty() {
            return Err(PolicyError::NoValidActions);
        }
        let scores = vec![0.0; ctx.valid_actions.len()];
        let weights = tempered_weights(&scores, ctx.temperature);
        if ctx.temperature <= 0.0 {
            let best = ctx
                .valid_actions
                .iter()
                .zip(&weights)
                .filter(|(_, &w)| w > 0.0)
                .min_by(|a, b| a.0.cmp(b.0))
                .expect("non-empty");
            return Ok(vec![Proposal::new(best.0.clone(), 1.0)]);
        }
        let mut rng = crate::seed::rng(ctx.seed);
        Ok(weighted_order(&weights, &mut rng)
            .into_iter()
            .take(k)
            .map(|i| Proposal::new(ctx.valid_actions[i].clone(), weights[i]))
            .collect())
    }
}
