//! Small feed-forward network with manual forward/backward passes.
//!
//! Layout: optional input layer normalization, then dense layers with tanh or
//! identity activations. The backward pass returns exact gradients for every
//! parameter plus the gradient with respect to the input.

use super::matrix::Matrix;
use super::rng::Rng;

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    /// out x in
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Learned elementwise gain/offset applied after input standardization:
/// y = gain * (x - mean(x)) / (std(x) + 1e-5) + offset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpParams {
    pub input_norm: Option<LayerNorm>,
    pub layers: Vec<Layer>,
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// (centered input, std) when input_norm is present
    norm: Option<(Vec<f64>, f64)>,
    /// input seen by each layer
    layer_inputs: Vec<Vec<f64>>,
    /// post-activation output of each layer
    layer_outputs: Vec<Vec<f64>>,
}

/// Gradients with the same shape as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub input_norm: Option<LayerNorm>,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Builds a zero-initialized network. `sizes` lists the widths from the
    /// input to the output; `activations` has one entry per layer.
    pub fn new(sizes: &[usize], activations: &[Activation], input_norm: bool) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        assert_eq!(
            activations.len(),
            sizes.len() - 1,
            "one activation per layer"
        );
        let layers = sizes
            .windows(2)
            .zip(activations.iter())
            .map(|(w, &activation)| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
                activation,
            })
            .collect();
        let input_norm = input_norm.then(|| LayerNorm {
            gain: vec![1.0; sizes[0]],
            offset: vec![0.0; sizes[0]],
        });
        MlpParams { input_norm, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().bias.len()
    }

    /// Orthogonal-style initialization: each weight matrix gets orthonormal
    /// rows (or columns, whichever fit), scaled by the per-layer gain.
    /// Biases stay zero.
    pub fn init_orthogonal(&mut self, gains: &[f64], rng: &mut Rng) {
        assert_eq!(gains.len(), self.layers.len(), "one gain per layer");
        for (layer, &gain) in self.layers.iter_mut().zip(gains.iter()) {
            orthogonal_init(&mut layer.weight, gain, rng);
        }
    }

    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(input.len(), self.input_dim(), "mlp input width mismatch");
        let mut cache = MlpCache {
            norm: None,
            layer_inputs: Vec::with_capacity(self.layers.len()),
            layer_outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.to_vec();
        if let Some(norm) = &self.input_norm {
            let n = x.len();
            if n > 0 {
                let mean = x.iter().sum::<f64>() / n as f64;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let std = var.sqrt();
                let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
                x = centered
                    .iter()
                    .zip(norm.gain.iter().zip(norm.offset.iter()))
                    .map(|(c, (g, o))| g * (c / (std + NORM_EPS)) + o)
                    .collect();
                cache.norm = Some((centered, std));
            } else {
                cache.norm = Some((Vec::new(), 0.0));
            }
        }
        for layer in &self.layers {
            cache.layer_inputs.push(x.clone());
            let mut out = layer.weight.matvec(&x);
            for (o, b) in out.iter_mut().zip(layer.bias.iter()) {
                *o += b;
            }
            if layer.activation == Activation::Tanh {
                for o in out.iter_mut() {
                    *o = o.tanh();
                }
            }
            cache.layer_outputs.push(out.clone());
            x = out;
        }
        (x, cache)
    }

    /// Backpropagates `output_grad` through the cached forward pass.
    /// Returns parameter gradients and the gradient w.r.t. the raw input.
    pub fn backward(&self, cache: &MlpCache, output_grad: &[f64]) -> (MlpGrads, Vec<f64>) {
        assert_eq!(output_grad.len(), self.output_dim());
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = output_grad.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Tanh {
                // tanh'(z) = 1 - tanh(z)^2, and the cache holds tanh(z)
                for (gi, out) in g.iter_mut().zip(cache.layer_outputs[idx].iter()) {
                    *gi *= 1.0 - out * out;
                }
            }
            let input = &cache.layer_inputs[idx];
            let lg = &mut grads.layers[idx];
            for r in 0..layer.weight.rows() {
                let gr = g[r];
                lg.bias[r] += gr;
                let row = lg.weight.row_mut(r);
                for (w, x) in row.iter_mut().zip(input.iter()) {
                    *w += gr * x;
                }
            }
            g = layer.weight.matvec_transpose(&g);
        }
        if let (Some(norm), Some((centered, std))) = (&self.input_norm, &cache.norm) {
            let n = centered.len();
            if n == 0 {
                return (grads, Vec::new());
            }
            let denom = std + NORM_EPS;
            let ng = grads.input_norm.as_mut().unwrap();
            // gradient w.r.t. gain/offset, and pull the gain into g
            for i in 0..n {
                let xhat = centered[i] / denom;
                ng.gain[i] += g[i] * xhat;
                ng.offset[i] += g[i];
                g[i] *= norm.gain[i];
            }
            // through u / (std + eps) with u = x - mean(x), std = sqrt(mean(u^2)):
            // dL/du_k = g_k / denom - (sum_i g_i u_i) u_k / (n std denom^2)
            // dL/dx_j = dL/du_j - mean_k dL/du_k
            let dot: f64 = g.iter().zip(centered.iter()).map(|(a, b)| a * b).sum();
            let mut du = vec![0.0; n];
            for k in 0..n {
                du[k] = g[k] / denom;
                if *std > 0.0 {
                    du[k] -= dot * centered[k] / (n as f64 * std * denom * denom);
                }
            }
            let mean_du = du.iter().sum::<f64>() / n as f64;
            let dx: Vec<f64> = du.iter().map(|v| v - mean_du).collect();
            (grads, dx)
        } else {
            (grads, g)
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        if let Some(norm) = &self.input_norm {
            n += norm.gain.len() + norm.offset.len();
        }
        for layer in &self.layers {
            n += layer.weight.data().len() + layer.bias.len();
        }
        n
    }

    /// Flattens all parameters in a fixed order (norm gain, norm offset, then
    /// per layer weight row-major and bias). The order matches `MlpGrads::to_flat`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        if let Some(norm) = &self.input_norm {
            out.extend_from_slice(&norm.gain);
            out.extend_from_slice(&norm.offset);
        }
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &flat[pos..pos + n];
            pos += n;
            s
        };
        if let Some(norm) = &mut self.input_norm {
            let n = norm.gain.len();
            norm.gain.copy_from_slice(take(n));
            norm.offset.copy_from_slice(take(n));
        }
        for layer in &mut self.layers {
            let w = layer.weight.data().len();
            layer.weight.data_mut().copy_from_slice(take(w));
            let b = layer.bias.len();
            layer.bias.copy_from_slice(take(b));
        }
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            input_norm: params.input_norm.as_ref().map(|n| LayerNorm {
                gain: vec![0.0; n.gain.len()],
                offset: vec![0.0; n.offset.len()],
            }),
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        if let (Some(a), Some(b)) = (self.input_norm.as_mut(), other.input_norm.as_ref()) {
            for (x, y) in a.gain.iter_mut().zip(b.gain.iter()) {
                *x += y;
            }
            for (x, y) in a.offset.iter_mut().zip(b.offset.iter()) {
                *x += y;
            }
        }
        for (la, lb) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in la.weight.data_mut().iter_mut().zip(lb.weight.data().iter()) {
                *x += y;
            }
            for (x, y) in la.bias.iter_mut().zip(lb.bias.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        if let Some(n) = self.input_norm.as_mut() {
            for x in n.gain.iter_mut().chain(n.offset.iter_mut()) {
                *x *= factor;
            }
        }
        for l in self.layers.iter_mut() {
            for x in l.weight.data_mut().iter_mut() {
                *x *= factor;
            }
            for x in l.bias.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Same order as `MlpParams::to_flat`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(norm) = &self.input_norm {
            out.extend_from_slice(&norm.gain);
            out.extend_from_slice(&norm.offset);
        }
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}

/// Orthonormalizes the rows (out <= in) or columns (out > in) of a random
/// Gaussian matrix by modified Gram-Schmidt, then scales by `gain`.
fn orthogonal_init(weight: &mut Matrix, gain: f64, rng: &mut Rng) {
    let (rows, cols) = (weight.rows(), weight.cols());
    if rows == 0 || cols == 0 {
        return;
    }
    rng.fill_normal(weight.data_mut());
    if rows <= cols {
        for i in 0..rows {
            for j in 0..i {
                let dot: f64 = (0..cols).map(|c| weight.get(i, c) * weight.get(j, c)).sum();
                for c in 0..cols {
                    let v = weight.get(i, c) - dot * weight.get(j, c);
                    weight.set(i, c, v);
                }
            }
            let norm: f64 = (0..cols)
                .map(|c| weight.get(i, c) * weight.get(i, c))
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            for c in 0..cols {
                let v = weight.get(i, c) / norm * gain;
                weight.set(i, c, v);
            }
        }
    } else {
        for j in 0..cols {
            for i in 0..j {
                let dot: f64 = (0..rows).map(|r| weight.get(r, j) * weight.get(r, i)).sum();
                for r in 0..rows {
                    let v = weight.get(r, j) - dot * weight.get(r, i);
                    weight.set(r, j, v);
                }
            }
            let norm: f64 = (0..rows)
                .map(|r| weight.get(r, j) * weight.get(r, j))
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            for r in 0..rows {
                let v = weight.get(r, j) / norm * gain;
                weight.set(r, j, v);
            }
        }
    }
}
