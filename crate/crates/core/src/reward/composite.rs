use super::{RewardError, Scorer};
use crate::trajectory::{EpisodeInfo, Trajectory};

/// `base - λ·actions - μ·price`. The price is only required when `μ > 0`.
pub fn composite_score(
    base: f64,
    actions: usize,
    price: Option<f64>,
    lambda_length: f64,
    mu_price: f64,
) -> Result<f64, RewardError> {
    let mut value = base - lambda_length * actions as f64;
    if mu_price > 0.0 {
        value -= mu_price * price.ok_or(RewardError::MissingPrice)?;
    }
    Ok(value)
}

/// Wraps a base scorer with length and price penalties.
pub struct CompositeScorer<S> {
    pub base: S,
    pub lambda_length: f64,
    pub mu_price: f64,
}

impl<S: Scorer> CompositeScorer<S> {
    pub fn new(base: S, lambda_length: f64, mu_price: f64) -> Result<Self, RewardError> {
        if !(lambda_length >= 0.0 && mu_price >= 0.0) {
            return Err(RewardError::Config("penalty weights must be >= 0".into()));
        }
        Ok(Self { base, lambda_length, mu_price })
    }
}

impl<S: Scorer> Scorer for CompositeScorer<S> {
    fn name(&self) -> String {
        format!("{}-{}len-{}price", self.base.name(), self.lambda_length, self.mu_price)
    }

    fn score(&self, trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError> {
        let base = self.base.score(trajectory, info)?;
        composite_score(base, trajectory.len(), info.price, self.lambda_length, self.mu_price)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert!((composite_score(0.9, 5, None, 0.05, 0.0).unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(composite_score(0.4, 7, None, 0.0, 0.0).unwrap(), 0.4);
        assert_eq!(composite_score(0.4, 7, None, 0.0, 0.01), Err(RewardError::MissingPrice));
        let cheap = composite_score(1.0, 4, Some(28.36), 0.0, 0.01).unwrap();
        let dear = composite_score(1.0, 4, Some(42.66), 0.0, 0.01).unwrap();
        assert!(cheap > dear);
    }
}
