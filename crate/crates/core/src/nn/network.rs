use super::config::{Head, LayerSpec, NetworkConfig};
use super::params::{GradientStore, ParameterStore};
use super::scalar::{matmul, Layout, Scalar};
use crate::error::{Error, Result};

/// Samples unfolded and multiplied together; keeps the patch matrix in cache.
const SAMPLES_PER_GEMM: usize = 8;

#[inline]
pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::ZERO {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative expressed through the activation output `y = elu(x)`.
#[inline]
fn elu_grad_from_output<T: Scalar>(y: T) -> T {
    if y > T::ZERO {
        T::ONE
    } else {
        y + T::ONE
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

/// Activations retained from a training forward pass.
#[derive(Debug, Clone)]
struct Trace<T> {
    batch: usize,
    input: Vec<T>,
    conv_out: Vec<Vec<T>>,
    hidden: Vec<T>,
    output: Vec<T>,
}

/// Convolutional network with exact reverse-mode gradients.
///
/// Each input sample is a `height × width × channels` tensor (channels
/// fastest); a batch is samples laid out back to back. Activations keep the
/// same channels-last layout, and conv weights are stored as
/// `filters × (ky, kx, channel)`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    specs: Vec<LayerSpec>,
    params: ParameterStore<T>,
    trace: Option<Trace<T>>,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    c_in: usize,
    h_in: usize,
    w_in: usize,
    c_out: usize,
    h_out: usize,
    w_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }
    fn in_len(&self) -> usize {
        self.c_in * self.h_in * self.w_in
    }
    fn out_pixels(&self) -> usize {
        self.h_out * self.w_out
    }
    fn out_len(&self) -> usize {
        self.c_out * self.out_pixels()
    }

    fn source(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    /// Kernel columns `[lo, hi)` that land inside the image for output
    /// column `ox`, and the input column of `lo`.
    fn kernel_span(&self, ox: usize) -> (usize, usize, usize) {
        let left = (ox * self.stride) as isize - self.pad as isize;
        let lo = (-left).max(0) as usize;
        let hi = (self.w_in as isize - left).clamp(0, self.kernel as isize) as usize;
        (lo.min(hi), hi, (left + lo as isize).max(0) as usize)
    }

    /// Unfolds one sample into `out_pixels × patch_len` rows, one receptive
    /// field per output pixel.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (k, c) = (self.kernel, self.c_in);
        let patch = self.patch_len();
        for oy in 0..self.h_out {
            for ox in 0..self.w_out {
                let row = &mut cols[(oy * self.w_out + ox) * patch..][..patch];
                let (lo, hi, ix) = self.kernel_span(ox);
                for ky in 0..k {
                    let dst = &mut row[ky * k * c..(ky + 1) * k * c];
                    match self.source(oy, ky, self.h_in) {
                        Some(iy) if lo < hi => {
                            dst[..lo * c].fill(T::ZERO);
                            dst[hi * c..].fill(T::ZERO);
                            let src = &x[(iy * self.w_in + ix) * c..][..(hi - lo) * c];
                            for (d, &v) in dst[lo * c..hi * c].iter_mut().zip(src) {
                                *d = v;
                            }
                        }
                        _ => dst.fill(T::ZERO),
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: accumulates rows back onto `dx`.
    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (k, c) = (self.kernel, self.c_in);
        let patch = self.patch_len();
        dx.fill(T::ZERO);
        for oy in 0..self.h_out {
            for ox in 0..self.w_out {
                let row = &cols[(oy * self.w_out + ox) * patch..][..patch];
                let (lo, hi, ix) = self.kernel_span(ox);
                if lo >= hi {
                    continue;
                }
                for ky in 0..k {
                    let Some(iy) = self.source(oy, ky, self.h_in) else {
                        continue;
                    };
                    let dst = &mut dx[(iy * self.w_in + ix) * c..][..(hi - lo) * c];
                    let src = &row[(ky * k + lo) * c..(ky * k + hi) * c];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(config: NetworkConfig, params: ParameterStore<T>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(Error::Dimension {
                context: "parameter store",
                expected: config.param_count(),
                actual: params.len(),
            });
        }
        let specs = config.layer_specs();
        Ok(Self {
            config,
            specs,
            params,
            trace: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    /// Mutable access to parameters. Invalidates any stored forward trace.
    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        self.trace = None;
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore<T> {
        self.params
    }

    fn geometry(&self, layer: usize) -> ConvGeometry {
        let shapes = self.config.feature_shapes();
        let (c_in, h_in, w_in) = shapes[layer];
        let (c_out, h_out, w_out) = shapes[layer + 1];
        ConvGeometry {
            c_in,
            h_in,
            w_in,
            c_out,
            h_out,
            w_out,
            kernel: self.config.kernel_size,
            stride: self.config.stride,
            pad: self.config.padding(),
        }
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<()> {
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let expected = batch * self.config.input_len();
        if input.len() != expected {
            return Err(Error::Dimension {
                context: "network input",
                expected,
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Inference pass. Returns `batch × output_units` values.
    pub fn forward(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(input, batch)?;
        Ok(self.run_forward(input, batch, false).output)
    }

    /// Forward pass that keeps the activations needed by [`Network::backward`].
    pub fn forward_train(&mut self, input: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(input, batch)?;
        let trace = self.run_forward(input, batch, true);
        let out = trace.output.clone();
        self.trace = Some(trace);
        Ok(out)
    }

    fn run_forward(&self, input: &[T], batch: usize, keep: bool) -> Trace<T> {
        let p = self.params.as_slice();
        let mut conv_out: Vec<Vec<T>> = Vec::with_capacity(self.config.conv_layers);
        let mut cols = Vec::new();
        for layer in 0..self.config.conv_layers {
            let g = self.geometry(layer);
            let spec = &self.specs[layer];
            let w = &p[spec.weight_range()];
            let bias = &p[spec.bias_range()];
            let (n, patch) = (g.out_pixels(), g.patch_len());
            let layer_in: &[T] = conv_out.last().map_or(input, |v| v.as_slice());
            let mut out = vec![T::ZERO; batch * g.out_len()];
            for start in (0..batch).step_by(SAMPLES_PER_GEMM) {
                let count = SAMPLES_PER_GEMM.min(batch - start);
                cols.resize(count * n * patch, T::ZERO);
                for (i, chunk) in cols.chunks_exact_mut(n * patch).enumerate() {
                    let b = start + i;
                    g.im2col(&layer_in[b * g.in_len()..(b + 1) * g.in_len()], chunk);
                }
                let y = &mut out[start * g.out_len()..(start + count) * g.out_len()];
                // rows: output pixels of every sample in the chunk; columns: filters
                matmul(
                    count * n,
                    patch,
                    g.c_out,
                    &cols,
                    Layout::Plain,
                    w,
                    Layout::Transposed,
                    y,
                    false,
                );
            }
            bias_elu_rows(&mut out, bias);
            if !keep {
                conv_out.clear();
            }
            conv_out.push(out);
        }
        let trunk: &[T] = conv_out.last().map_or(input, |v| v.as_slice());

        let flat = self.config.flattened_len();
        let hidden_spec = &self.specs[self.config.conv_layers];
        let hu = self.config.hidden_units;
        let mut hidden = vec![T::ZERO; batch * hu];
        matmul(
            batch,
            flat,
            hu,
            trunk,
            Layout::Plain,
            &p[hidden_spec.weight_range()],
            Layout::Transposed,
            &mut hidden,
            false,
        );
        bias_elu_rows(&mut hidden, &p[hidden_spec.bias_range()]);

        let out_spec = &self.specs[self.config.conv_layers + 1];
        let ou = self.config.output_units;
        let mut output = vec![T::ZERO; batch * ou];
        matmul(
            batch,
            hu,
            ou,
            &hidden,
            Layout::Plain,
            &p[out_spec.weight_range()],
            Layout::Transposed,
            &mut output,
            false,
        );
        let ob = &p[out_spec.bias_range()];
        for row in output.chunks_exact_mut(ou) {
            for (v, &b) in row.iter_mut().zip(ob) {
                *v += b;
                if self.config.head == Head::Sigmoid {
                    *v = sigmoid(*v);
                }
            }
        }

        if !keep {
            return Trace {
                batch,
                input: Vec::new(),
                conv_out: Vec::new(),
                hidden: Vec::new(),
                output,
            };
        }
        Trace {
            batch,
            input: input.to_vec(),
            conv_out,
            hidden,
            output,
        }
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `dLoss/dOutput` for the batch seen by the last [`Network::forward_train`].
    pub fn backward(&self, grad_output: &[T]) -> Result<GradientStore<T>> {
        let trace = self.trace.as_ref().ok_or(Error::NoForwardContext)?;
        let batch = trace.batch;
        let ou = self.config.output_units;
        if grad_output.len() != batch * ou {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: batch * ou,
                actual: grad_output.len(),
            });
        }
        let p = self.params.as_slice();
        let mut grads = GradientStore::zeros(p.len());
        let gv = &mut grads.values;
        let nconv = self.config.conv_layers;
        let hu = self.config.hidden_units;
        let flat = self.config.flattened_len();

        let mut d_out: Vec<T> = grad_output.to_vec();
        if self.config.head == Head::Sigmoid {
            for (d, &y) in d_out.iter_mut().zip(&trace.output) {
                *d *= y * (T::ONE - y);
            }
        }
        let out_spec = self.specs[nconv + 1];
        matmul(
            ou,
            batch,
            hu,
            &d_out,
            Layout::Transposed,
            &trace.hidden,
            Layout::Plain,
            &mut gv[out_spec.weight_range()],
            false,
        );
        column_sums(&d_out, ou, &mut gv[out_spec.bias_range()]);

        let mut d_hidden = vec![T::ZERO; batch * hu];
        matmul(
            batch,
            ou,
            hu,
            &d_out,
            Layout::Plain,
            &p[out_spec.weight_range()],
            Layout::Plain,
            &mut d_hidden,
            false,
        );
        for (d, &y) in d_hidden.iter_mut().zip(&trace.hidden) {
            *d *= elu_grad_from_output(y);
        }

        let hidden_spec = self.specs[nconv];
        let trunk = trace.conv_out.last().expect("trace has trunk output");
        matmul(
            hu,
            batch,
            flat,
            &d_hidden,
            Layout::Transposed,
            trunk,
            Layout::Plain,
            &mut gv[hidden_spec.weight_range()],
            false,
        );
        column_sums(&d_hidden, hu, &mut gv[hidden_spec.bias_range()]);

        let mut d_act = vec![T::ZERO; batch * flat];
        matmul(
            batch,
            hu,
            flat,
            &d_hidden,
            Layout::Plain,
            &p[hidden_spec.weight_range()],
            Layout::Plain,
            &mut d_act,
            false,
        );

        let mut cols = Vec::new();
        for layer in (0..nconv).rev() {
            for (d, &y) in d_act.iter_mut().zip(&trace.conv_out[layer]) {
                *d *= elu_grad_from_output(y);
            }
            let g = self.geometry(layer);
            let spec = self.specs[layer];
            let layer_in: &[T] = if layer == 0 {
                &trace.input
            } else {
                &trace.conv_out[layer - 1]
            };
            let (n, patch) = (g.out_pixels(), g.patch_len());
            let mut d_in = if layer > 0 {
                vec![T::ZERO; batch * g.in_len()]
            } else {
                Vec::new()
            };
            for start in (0..batch).step_by(SAMPLES_PER_GEMM) {
                let count = SAMPLES_PER_GEMM.min(batch - start);
                let rows = count * n;
                let dy = &d_act[start * g.out_len()..(start + count) * g.out_len()];
                cols.resize(rows * patch, T::ZERO);
                for (i, chunk) in cols.chunks_exact_mut(n * patch).enumerate() {
                    let b = start + i;
                    g.im2col(&layer_in[b * g.in_len()..(b + 1) * g.in_len()], chunk);
                }
                // dW (filters × patch) += dYᵀ · cols
                matmul(
                    g.c_out,
                    rows,
                    patch,
                    dy,
                    Layout::Transposed,
                    &cols,
                    Layout::Plain,
                    &mut gv[spec.weight_range()],
                    start > 0,
                );
                if layer > 0 {
                    matmul(
                        rows,
                        g.c_out,
                        patch,
                        dy,
                        Layout::Plain,
                        &p[spec.weight_range()],
                        Layout::Plain,
                        &mut cols,
                        false,
                    );
                    for (i, chunk) in cols.chunks_exact(n * patch).enumerate() {
                        let b = start + i;
                        g.col2im(chunk, &mut d_in[b * g.in_len()..(b + 1) * g.in_len()]);
                    }
                }
            }
            column_sums(&d_act, g.c_out, &mut gv[spec.bias_range()]);
            d_act = d_in;
        }
        Ok(grads)
    }
}

/// Adds a per-column bias to a row-major matrix and applies ELU in place.
fn bias_elu_rows<T: Scalar>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_exact_mut(bias.len()) {
        T::bias_elu(row, bias);
    }
}

/// Sums a `rows × cols` row-major matrix over rows, accumulating in f64.
fn column_sums<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    let mut acc = vec![0.0f64; cols];
    for row in m.chunks_exact(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v.to_f64();
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = T::from_f64(a);
    }
}
