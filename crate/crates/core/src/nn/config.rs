use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied to the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Unbounded outputs, one Q-value per action.
    Linear,
    /// Outputs squashed into (0, 1), used for normalized keypoint coordinates.
    Sigmoid,
}

/// Topology of the convolutional trunk plus fully connected head.
///
/// Every convolution uses a square kernel with symmetric zero padding of
/// `(kernel_size - 1) / 2`, so each layer maps a spatial size `n` to
/// `ceil(n / stride)`. All hidden units use ELU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub conv_layers: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub filters_per_layer: usize,
    pub hidden_units: usize,
    pub output_units: usize,
    pub head: Head,
}

impl NetworkConfig {
    /// Four stride-2 3×3 convolutions with 32 filters, FC-512, 3 linear Q outputs.
    pub fn q_network(height: usize, width: usize) -> Self {
        Self {
            input_height: height,
            input_width: width,
            input_channels: 3,
            conv_layers: 4,
            kernel_size: 3,
            stride: 2,
            filters_per_layer: 32,
            hidden_units: 512,
            output_units: 3,
            head: Head::Linear,
        }
    }

    /// Same trunk as [`NetworkConfig::q_network`] with a 2-unit sigmoid head.
    pub fn keypoint_network(height: usize, width: usize) -> Self {
        Self {
            output_units: 2,
            head: Head::Sigmoid,
            ..Self::q_network(height, width)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_height", self.input_height),
            ("input_width", self.input_width),
            ("input_channels", self.input_channels),
            ("conv_layers", self.conv_layers),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("filters_per_layer", self.filters_per_layer),
            ("hidden_units", self.hidden_units),
            ("output_units", self.output_units),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        let expected = match self.head {
            Head::Linear => 3,
            Head::Sigmoid => 2,
        };
        if self.output_units != expected {
            return Err(Error::Config(format!(
                "{:?} head requires {expected} outputs, got {}",
                self.head, self.output_units
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    /// `(channels, height, width)` entering each conv layer, followed by the
    /// trunk output shape. Length is `conv_layers + 1`.
    pub fn feature_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::with_capacity(self.conv_layers + 1);
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        shapes.push((c, h, w));
        for _ in 0..self.conv_layers {
            c = self.filters_per_layer;
            h = h.div_ceil(self.stride);
            w = w.div_ceil(self.stride);
            shapes.push((c, h, w));
        }
        shapes
    }

    pub fn flattened_len(&self) -> usize {
        let (c, h, w) = *self.feature_shapes().last().expect("non-empty");
        c * h * w
    }

    /// Parameter blocks in storage order: each conv layer, the hidden dense
    /// layer, then the output layer.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let k2 = self.kernel_size * self.kernel_size;
        let shapes = self.feature_shapes();
        let mut specs = Vec::with_capacity(self.conv_layers + 2);
        let mut offset = 0;
        let mut push = |kind, rows: usize, cols: usize, fan_in, fan_out| {
            let spec = LayerSpec {
                kind,
                rows,
                cols,
                weight_offset: offset,
                bias_offset: offset + rows * cols,
                fan_in,
                fan_out,
            };
            offset = spec.bias_offset + rows;
            specs.push(spec);
        };
        for (c_in, _, _) in shapes.iter().take(self.conv_layers) {
            let f = self.filters_per_layer;
            push(LayerKind::Conv, f, c_in * k2, c_in * k2, f * k2);
        }
        let flat = self.flattened_len();
        push(LayerKind::Dense, self.hidden_units, flat, flat, self.hidden_units);
        push(
            LayerKind::Dense,
            self.output_units,
            self.hidden_units,
            self.hidden_units,
            self.output_units,
        );
        specs
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs().last().map_or(0, |s| s.bias_offset + s.rows)
    }

    /// Parameters shared by every head: conv layers plus the hidden layer.
    pub fn trunk_param_count(&self) -> usize {
        let specs = self.layer_specs();
        let hidden = &specs[specs.len() - 2];
        hidden.bias_offset + hidden.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Dense,
}

/// Location of one layer's weights (`rows × cols`, row-major) and biases
/// (`rows`) inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Output size of a padded strided convolution, from the textbook formula
    /// `floor((n + 2p - k) / s) + 1`.
    fn conv_out(n: usize, k: usize, s: usize, p: usize) -> usize {
        (n + 2 * p - k) / s + 1
    }

    #[test]
    fn shape_chain_for_128_input() {
        let cfg = NetworkConfig::q_network(128, 128);
        let mut n = 128;
        let mut chain = vec![n];
        for _ in 0..4 {
            n = conv_out(n, 3, 2, 1);
            chain.push(n);
        }
        assert_eq!(chain, vec![128, 64, 32, 16, 8]);
        let got: Vec<usize> = cfg.feature_shapes().iter().map(|s| s.1).collect();
        assert_eq!(got, chain);
        assert_eq!(cfg.flattened_len(), 8 * 8 * 32);
        assert_eq!(cfg.flattened_len(), 2048);
    }

    #[test]
    fn odd_sizes_round_up() {
        let cfg = NetworkConfig::q_network(33, 17);
        for s in cfg.feature_shapes().windows(2) {
            assert_eq!(s[1].1, conv_out(s[0].1, 3, 2, 1));
            assert_eq!(s[1].1, s[0].1.div_ceil(2));
            assert_eq!(s[1].2, s[0].2.div_ceil(2));
        }
    }

    #[test]
    fn heads_share_the_trunk() {
        let q = NetworkConfig::q_network(64, 64);
        let k = NetworkConfig::keypoint_network(64, 64);
        assert_eq!(q.trunk_param_count(), k.trunk_param_count());
        assert_eq!(q.param_count() - k.param_count(), 512 + 1);
    }

    #[test]
    fn rejects_zero_dimensions_and_bad_heads() {
        let mut cfg = NetworkConfig::q_network(32, 32);
        cfg.filters_per_layer = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = NetworkConfig::q_network(32, 32);
        cfg.output_units = 2;
        assert!(cfg.validate().is_err());
        assert!(NetworkConfig::keypoint_network(32, 32).validate().is_ok());
    }
}
