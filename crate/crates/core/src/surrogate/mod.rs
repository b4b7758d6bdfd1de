//! Score surrogate m(h(E); θ) with a last-layer NeuralUCB uncertainty term.

pub mod mlp;
pub mod uncertainty;

use serde::{Deserialize, Serialize};

use crate::domain::History;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};

pub use mlp::{train, Dense, SurrogateParams, TrainOutcome, TrainSpec};
pub use uncertainty::{update_uncertainty, UncertaintyState};

/// Network shape and fitting schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateSpec {
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainSpec,
    pub lambda: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            train: TrainSpec::default(),
            lambda: 1.0,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        self.train.validate()
    }
}

/// Fits the surrogate to a history, one embedding per observation.
pub fn train_on_history(
    history: &History,
    embeddings: &[EmbeddingVector],
    spec: &SurrogateSpec,
    start: Option<&SurrogateParams>,
) -> Result<TrainOutcome> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if embeddings.len() != history.len() {
        return Err(Error::DimensionMismatch {
            expected: history.len(),
            got: embeddings.len(),
        });
    }
    let inputs: Vec<&[f64]> = embeddings.iter().map(EmbeddingVector::values).collect();
    train(&inputs, &history.scores(), &spec.hidden, &spec.train, start)
}

pub fn predict(params: &SurrogateParams, embedding: &EmbeddingVector) -> Result<f64> {
    params.predict(embedding)
}

pub fn gradient_features(params: &SurrogateParams, embedding: &EmbeddingVector) -> Result<Vec<f64>> {
    params.gradient_features(embedding)
}

pub fn uncertainty(state: &UncertaintyState, g: &[f64]) -> Result<f64> {
    state.uncertainty(g)
}

/// NeuralUCB value `m(h) + ν·σ(g(h))`.
pub fn acquisition(
    params: &SurrogateParams,
    state: &UncertaintyState,
    embedding: &EmbeddingVector,
    nu: f64,
) -> Result<f64> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Config(format!("exploration weight must be >= 0, got {nu}")));
    }
    let (mean, hidden) = params.forward_features(embedding.values())?;
    if nu == 0.0 {
        return Ok(mean);
    }
    Ok(mean + nu * state.uncertainty(&hidden)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ExemplarSequence, Observation};
    use ndarray::array;

    fn tiny() -> SurrogateParams {
        SurrogateParams::from_layers(vec![
            Dense {
                weights: array![[1.0, 0.0], [0.0, 1.0]],
                bias: array![0.0, 0.0],
            },
            Dense {
                weights: array![[0.5, 0.25]],
                bias: array![0.1],
            },
        ])
        .unwrap()
    }

    #[test]
    fn acquisition_arithmetic() {
        let p = tiny();
        let e = EmbeddingVector::new(vec![0.4, 0.0]).unwrap();
        // mean = 0.2 + 0.1 = 0.3, g = (0.4, 0, 1)
        let state = UncertaintyState::new(3, 1.0).unwrap();
        let sigma = state.uncertainty(&[0.4, 0.0, 1.0]).unwrap();
        let a = acquisition(&p, &state, &e, 0.01).unwrap();
        assert!((a - (0.3 + 0.01 * sigma)).abs() < 1e-15);
        assert_eq!(acquisition(&p, &state, &e, 0.0).unwrap(), predict(&p, &e).unwrap());
        assert!(acquisition(&p, &state, &e, 0.1).unwrap() > a);
        assert!(acquisition(&p, &state, &e, -1.0).is_err());
    }

    #[test]
    fn acquisition_is_mean_plus_scaled_sigma() {
        // Choose λ so that σ = 0.2 at g = (0, 0, 1): σ² = 1/λ.
        let p = SurrogateParams::from_layers(vec![
            Dense {
                weights: array![[0.0, 0.0], [0.0, 0.0]],
                bias: array![0.0, 0.0],
            },
            Dense {
                weights: array![[0.0, 0.0]],
                bias: array![0.5],
            },
        ])
        .unwrap();
        let state = UncertaintyState::new(3, 25.0).unwrap();
        let e = EmbeddingVector::new(vec![1.0, 1.0]).unwrap();
        assert!((acquisition(&p, &state, &e, 0.01).unwrap() - 0.502).abs() < 1e-12);
    }

    #[test]
    fn history_training_checks_lengths() {
        let mut h = History::new();
        h.push(Observation::new(ExemplarSequence::new(vec![0], None).unwrap(), 0.5, 0).unwrap())
            .unwrap();
        let spec = SurrogateSpec {
            hidden: vec![4],
            ..SurrogateSpec::default()
        };
        assert!(train_on_history(&h, &[], &spec, None).is_err());
        assert!(matches!(
            train_on_history(&History::new(), &[], &spec, None),
            Err(Error::EmptyHistory)
        ));
        let e = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        assert!(train_on_history(&h, &[e], &spec, None).is_ok());
    }
}
