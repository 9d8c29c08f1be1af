//! Central finite-difference check of backpropagated gradients.

use rand::Rng;

use super::{glorot_init, Head, Network, NetworkConfig, ParameterStore};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_param: usize,
    pub params_checked: usize,
}

/// Compares backprop against central differences of `L = Σ wᵢ·yᵢ` for every
/// parameter. Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn check_gradients(
    net: &mut Network<f64>,
    input: &[f64],
    batch: usize,
    weights: &[f64],
    step: f64,
) -> Result<GradientCheck> {
    let loss = |net: &Network<f64>| -> Result<f64> {
        Ok(net.forward(input, batch)?.iter().zip(weights).map(|(y, w)| y * w).sum())
    };
    net.forward_train(input, batch)?;
    let analytic = net.backward(weights)?;
    let mut worst = (0.0, 0);
    let n = analytic.len();
    for i in 0..n {
        let orig = net.params().as_slice()[i];
        net.params_mut().as_mut_slice()[i] = orig + step;
        let up = loss(net)?;
        net.params_mut().as_mut_slice()[i] = orig - step;
        let down = loss(net)?;
        net.params_mut().as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_param: worst.1,
        params_checked: n,
    })
}

/// Network, input batch, batch size and upstream output weights.
pub type CheckCase = (Network<f64>, Vec<f64>, usize, Vec<f64>);

/// A random small network (either head) with at most `max_params`
/// parameters and non-zero biases, plus a matching random input batch and
/// output weights.
pub fn random_check_case<R: Rng>(rng: &mut R, max_params: usize) -> Result<CheckCase> {
    let cfg = loop {
        let head = if rng.gen_bool(0.5) { Head::Linear } else { Head::Sigmoid };
        let cfg = NetworkConfig {
            input_height: rng.gen_range(3..=9),
            input_width: rng.gen_range(3..=9),
            input_channels: rng.gen_range(1..=3),
            conv_layers: rng.gen_range(1..=3),
            kernel_size: 3,
            stride: rng.gen_range(1..=2),
            filters_per_layer: rng.gen_range(2..=4),
            hidden_units: rng.gen_range(3..=8),
            output_units: if head == Head::Sigmoid { 2 } else { 3 },
            head,
        };
        if cfg.param_count() <= max_params {
            break cfg;
        }
    };
    let mut values = glorot_init::<f64>(&cfg, rng.gen())?.as_slice().to_vec();
    for spec in cfg.layer_specs() {
        for b in &mut values[spec.bias_range()] {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    let params = ParameterStore::from_values(&cfg, values)?;
    let batch = rng.gen_range(1..=3);
    let input = (0..batch * cfg.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weights = (0..batch * cfg.output_units)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Ok((Network::new(cfg, params)?, input, batch, weights))
}
