use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Flat parameter vector laid out per [`NetworkConfig::layer_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    pub(crate) values: Vec<T>,
}

/// Partial derivatives of a scalar loss, shape-congruent with a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStore<T> {
    pub(crate) values: Vec<T>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            values: vec![T::ZERO; config.param_count()],
        }
    }

    pub fn from_values(config: &NetworkConfig, values: Vec<T>) -> Result<Self> {
        if values.len() != config.param_count() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: config.param_count(),
                actual: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Converts element type, e.g. to run an `f32` network in `f64`.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

impl<T: Scalar> GradientStore<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::ZERO; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == T::ZERO)
    }
}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Draws every weight from `U[-L, L]` with the Glorot limit of its layer and
/// sets all biases to zero. Deterministic for a given seed.
pub fn glorot_init<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<ParameterStore<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::zeros(config);
    for spec in config.layer_specs() {
        let limit = glorot_limit(spec.fan_in, spec.fan_out);
        for w in &mut store.values[spec.weight_range()] {
            *w = T::from_f64(rng.gen_range(-limit..=limit));
        }
    }
    Ok(store)
}
