//! Small convolutional classifier with hand-written backpropagation.
//!
//! Layout: optional 3x3 input projection to three channels, then blocks of
//! (3x3 conv, SiLU, 2x2 average pool), global average pooling and a dense
//! head. Activations are stored channel-major as `[C][B][H][W]`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::anneal::{anneal, annealed_bce};
use crate::data::{ChannelPolicy, Image, InputSpec};
use crate::error::{Error, Result};
use crate::metrics::ScoreMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Channels of preprocessed input images.
    pub input_channels: usize,
    pub prefix_projection: bool,
    /// Output channels of each conv block.
    pub widths: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn for_input(spec: &InputSpec, num_classes: usize, widths: &[usize]) -> Result<Self> {
        if !(2..=4).contains(&widths.len()) {
            return Err(Error::Config(format!(
                "network depth must be 2 to 4 conv blocks, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) || num_classes == 0 {
            return Err(Error::Config("layer widths and class count must be positive".into()));
        }
        Ok(Self {
            input_channels: spec.out_channels(),
            prefix_projection: spec.channel_policy == ChannelPolicy::PrefixProjection,
            widths: widths.to_vec(),
            num_classes,
        })
    }

    /// (in, out) channels of every conv layer, projection first.
    pub fn conv_channels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cin = self.input_channels;
        if self.prefix_projection {
            out.push((cin, 3));
            cin = 3;
        }
        for &w in &self.widths {
            out.push((cin, w));
            cin = w;
        }
        out
    }

    pub fn feature_width(&self) -> usize {
        *self.widths.last().expect("validated depth")
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for (cin, cout) in self.conv_channels() {
            shapes.push(vec![cout, cin, 3, 3]);
            shapes.push(vec![cout]);
        }
        shapes.push(vec![self.num_classes, self.feature_width()]);
        shapes.push(vec![self.num_classes]);
        shapes
    }

    /// Same conv stack; the head may differ.
    pub fn body_compatible(&self, other: &Architecture) -> bool {
        self.conv_channels() == other.conv_channels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

fn xavier_normal(shape: &[usize], rng: &mut rng::Rng) -> Tensor {
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor {
        shape: shape.to_vec(),
        data: (0..shape.iter().product::<usize>())
            .map(|_| normal.sample(rng))
            .collect(),
    }
}

/// A batch of preprocessed images in `[C][B][H][W]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub channels: usize,
    pub size: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Self> {
        let images: Vec<&Image> = images.into_iter().collect();
        let first = images.first().ok_or_else(|| Error::Config("empty batch".into()))?;
        let (h, w, c) = (first.height(), first.width(), first.channels());
        let b = images.len();
        let hw = h * w;
        let mut data = vec![0.0; c * b * hw];
        for (bi, img) in images.iter().enumerate() {
            if img.shape() != (h, w) || img.channels() != c {
                return Err(Error::Format("batch images differ in shape".into()));
            }
            for (p, px) in img.pixels().chunks(c).enumerate() {
                for (ch, &v) in px.iter().enumerate() {
                    data[(ch * b + bi) * hw + p] = f64::from(v);
                }
            }
        }
        Ok(Self {
            channels: c,
            size: b,
            height: h,
            width: w,
            data,
        })
    }
}

/// C (m x n) = op(A) (m x k) * op(B) (k x n) + beta * C, all row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], cin: usize, b: usize, h: usize, w: usize) -> Vec<f64> {
    let n = b * h * w;
    let mut cols = vec![0.0; cin * 9 * n];
    for ci in 0..cin {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for bi in 0..b {
                    let src = &x[(ci * b + bi) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut row[(bi * h + y) * w..][..w];
                        let srow = &src[sy as usize * w..][..w];
                        let x_lo = usize::from(kx == 0);
                        let x_hi = if kx == 2 { w - 1 } else { w };
                        for xx in x_lo..x_hi {
                            dst[xx] = srow[xx + kx - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], cin: usize, b: usize, h: usize, w: usize) -> Vec<f64> {
    let n = b * h * w;
    let mut x = vec![0.0; cin * n];
    for ci in 0..cin {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for bi in 0..b {
                    let dst = &mut x[(ci * b + bi) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &row[(bi * h + y) * w..][..w];
                        let drow = &mut dst[sy as usize * w..][..w];
                        let x_lo = usize::from(kx == 0);
                        let x_hi = if kx == 2 { w - 1 } else { w };
                        for xx in x_lo..x_hi {
                            drow[xx + kx - 1] += src[xx];
                        }
                    }
                }
            }
        }
    }
    x
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// 2x2 average pooling; odd edges average the cells that exist.
fn avg_pool(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut out[p * ho * wo..][..ho * wo];
        for oy in 0..ho {
            let ys = 2 * oy..(2 * oy + 2).min(h);
            for ox in 0..wo {
                let xs = 2 * ox..(2 * ox + 2).min(w);
                let count = (ys.len() * xs.len()) as f64;
                let mut acc = 0.0;
                for y in ys.clone() {
                    for xx in xs.clone() {
                        acc += src[y * w + xx];
                    }
                }
                dst[oy * wo + ox] = acc / count;
            }
        }
    }
    (out, ho, wo)
}

fn avg_pool_backward(d_out: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &d_out[p * ho * wo..][..ho * wo];
        let dst = &mut dx[p * h * w..][..h * w];
        for oy in 0..ho {
            let ys = 2 * oy..(2 * oy + 2).min(h);
            for ox in 0..wo {
                let xs = 2 * ox..(2 * ox + 2).min(w);
                let g = src[oy * wo + ox] / (ys.len() * xs.len()) as f64;
                for y in ys.clone() {
                    for xx in xs.clone() {
                        dst[y * w + xx] = g;
                    }
                }
            }
        }
    }
    dx
}

struct LayerTrace {
    cols: Vec<f64>,
    pre: Vec<f64>,
    h: usize,
    w: usize,
}

struct Trace {
    layers: Vec<LayerTrace>,
    features: Vec<f64>,
    final_hw: (usize, usize),
}

/// Network parameters; tensors ordered (weight, bias) per conv layer, then the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: Vec<Tensor>,
}

impl Model {
    /// Xavier-normal weights, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut body_rng = rng::stream(seed, &[rng::tag::INIT, 0]);
        let shapes = arch.param_shapes();
        let mut params: Vec<Tensor> = shapes[..shapes.len() - 2]
            .iter()
            .map(|s| {
                if s.len() == 4 {
                    xavier_normal(s, &mut body_rng)
                } else {
                    Tensor::zeros(s)
                }
            })
            .collect();
        let (head_w, head_b) = Self::fresh_head(&arch, seed);
        params.push(head_w);
        params.push(head_b);
        Self { arch, params }
    }

    fn fresh_head(arch: &Architecture, seed: u64) -> (Tensor, Tensor) {
        let mut head_rng = rng::stream(seed, &[rng::tag::INIT, 1]);
        (
            xavier_normal(&[arch.num_classes, arch.feature_width()], &mut head_rng),
            Tensor::zeros(&[arch.num_classes]),
        )
    }

    pub fn from_parts(arch: Architecture, params: Vec<Tensor>) -> Result<Self> {
        let shapes = arch.param_shapes();
        if shapes.len() != params.len()
            || shapes
                .iter()
                .zip(&params)
                .any(|(s, p)| *s != p.shape || p.data.len() != s.iter().product::<usize>())
        {
            return Err(Error::Checkpoint(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        Ok(Self { arch, params })
    }

    /// Copies the conv stack of `source` and draws a fresh Xavier head.
    pub fn warm_started(arch: Architecture, source: &Model, seed: u64) -> Result<Self> {
        if !arch.body_compatible(&source.arch) {
            return Err(Error::Checkpoint(format!(
                "checkpoint conv stack {:?} is incompatible with {:?}",
                source.arch.conv_channels(),
                arch.conv_channels()
            )));
        }
        let body = source.params.len() - 2;
        let mut params = source.params[..body].to_vec();
        let (head_w, head_b) = Self::fresh_head(&arch, seed);
        params.push(head_w);
        params.push(head_b);
        Self::from_parts(arch, params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    fn forward(&self, batch: &Batch, keep: bool) -> (Vec<f64>, Trace) {
        let b = batch.size;
        let (mut h, mut w) = (batch.height, batch.width);
        let mut x = batch.data.clone();
        let mut layers = Vec::new();
        let convs = self.arch.conv_channels();
        let projection = usize::from(self.arch.prefix_projection);
        for (l, &(cin, cout)) in convs.iter().enumerate() {
            let weight = &self.params[2 * l].data;
            let bias = &self.params[2 * l + 1].data;
            let n = b * h * w;
            let cols = im2col(&x, cin, b, h, w);
            let mut z = vec![0.0; cout * n];
            for (co, row) in z.chunks_mut(n).enumerate() {
                row.fill(bias[co]);
            }
            gemm(cout, cin * 9, n, weight, false, &cols, false, &mut z, 1.0);
            if l < projection {
                x = z.clone();
                if keep {
                    layers.push(LayerTrace { cols, pre: z, h, w });
                }
                continue;
            }
            let act: Vec<f64> = z.iter().map(|&v| v * sigmoid(v)).collect();
            let (pooled, ho, wo) = avg_pool(&act, cout * b, h, w);
            if keep {
                layers.push(LayerTrace { cols, pre: z, h, w });
            }
            x = pooled;
            h = ho;
            w = wo;
        }
        let c = self.arch.feature_width();
        let hw = (h * w) as f64;
        let mut features = vec![0.0; b * c];
        for ci in 0..c {
            for bi in 0..b {
                let plane = &x[(ci * b + bi) * h * w..][..h * w];
                features[bi * c + ci] = plane.iter().sum::<f64>() / hw;
            }
        }
        let k = self.arch.num_classes;
        let head_w = &self.params[self.params.len() - 2].data;
        let head_b = &self.params[self.params.len() - 1].data;
        let mut logits = vec![0.0; b * k];
        for row in logits.chunks_mut(k) {
            row.copy_from_slice(head_b);
        }
        gemm(b, c, k, &features, false, head_w, true, &mut logits, 1.0);
        (
            logits,
            Trace {
                layers,
                features,
                final_hw: (h, w),
            },
        )
    }

    pub fn logits(&self, batch: &Batch) -> Vec<f64> {
        self.forward(batch, false).0
    }

    /// Summed per-sample loss over the batch and the gradient of that sum.
    pub fn loss_and_grad(&self, batch: &Batch, targets: &[u8], tau: f64) -> (f64, Vec<Tensor>) {
        let b = batch.size;
        let k = self.arch.num_classes;
        let (logits, trace) = self.forward(batch, true);
        let mut d_logits = vec![0.0; b * k];
        let mut loss = 0.0;
        for i in 0..b {
            loss += annealed_bce(
                &logits[i * k..(i + 1) * k],
                &targets[i * k..(i + 1) * k],
                tau,
                &mut d_logits[i * k..(i + 1) * k],
            );
        }
        (loss, self.backward(batch, &trace, &d_logits))
    }

    /// Summed per-sample loss without gradients.
    pub fn loss(&self, batch: &Batch, targets: &[u8], tau: f64) -> f64 {
        let k = self.arch.num_classes;
        let logits = self.logits(batch);
        let mut scratch = vec![0.0; k];
        (0..batch.size)
            .map(|i| {
                annealed_bce(
                    &logits[i * k..(i + 1) * k],
                    &targets[i * k..(i + 1) * k],
                    tau,
                    &mut scratch,
                )
            })
            .sum()
    }

    fn backward(&self, batch: &Batch, trace: &Trace, d_logits: &[f64]) -> Vec<Tensor> {
        let b = batch.size;
        let k = self.arch.num_classes;
        let c = self.arch.feature_width();
        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        let np = self.params.len();

        gemm(
            k,
            b,
            c,
            d_logits,
            true,
            &trace.features,
            false,
            &mut grads[np - 2].data,
            0.0,
        );
        for row in d_logits.chunks(k) {
            for (g, d) in grads[np - 1].data.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut d_features = vec![0.0; b * c];
        gemm(
            b,
            k,
            c,
            d_logits,
            false,
            &self.params[np - 2].data,
            false,
            &mut d_features,
            0.0,
        );

        let (h, w) = trace.final_hw;
        let hw = h * w;
        let mut d_x = vec![0.0; c * b * hw];
        for ci in 0..c {
            for bi in 0..b {
                let g = d_features[bi * c + ci] / hw as f64;
                d_x[(ci * b + bi) * hw..][..hw].fill(g);
            }
        }

        let convs = self.arch.conv_channels();
        let projection = usize::from(self.arch.prefix_projection);
        for l in (0..convs.len()).rev() {
            let (cin, cout) = convs[l];
            let lt = &trace.layers[l];
            let n = b * lt.h * lt.w;
            let d_z = if l < projection {
                d_x
            } else {
                let d_act = avg_pool_backward(&d_x, cout * b, lt.h, lt.w);
                d_act
                    .iter()
                    .zip(&lt.pre)
                    .map(|(&g, &z)| {
                        let s = sigmoid(z);
                        g * s * (1.0 + z * (1.0 - s))
                    })
                    .collect()
            };
            gemm(
                cout,
                n,
                cin * 9,
                &d_z,
                false,
                &lt.cols,
                true,
                &mut grads[2 * l].data,
                0.0,
            );
            for (co, row) in d_z.chunks(n).enumerate() {
                grads[2 * l + 1].data[co] = row.iter().sum();
            }
            if l == 0 {
                break;
            }
            let mut d_cols = vec![0.0; cin * 9 * n];
            gemm(
                cin * 9,
                cout,
                n,
                &self.params[2 * l].data,
                true,
                &d_z,
                false,
                &mut d_cols,
                0.0,
            );
            d_x = col2im(&d_cols, cin, b, lt.h, lt.w);
        }
        grads
    }

    /// Annealed class probabilities for preprocessed images.
    pub fn predict(&self, images: &[Image], tau: f64) -> Result<ScoreMatrix> {
        const CHUNK: usize = 256;
        let k = self.arch.num_classes;
        let mut scores = Vec::with_capacity(images.len() * k);
        for chunk in images.chunks(CHUNK) {
            let batch = Batch::from_images(chunk)?;
            self.check_input(&batch)?;
            for row in self.logits(&batch).chunks(k) {
                if k == 1 {
                    scores.push(sigmoid(row[0] / tau));
                } else {
                    scores.extend(anneal(row, tau));
                }
            }
        }
        ScoreMatrix::new(images.len(), k, scores)
    }

    pub(crate) fn check_input(&self, batch: &Batch) -> Result<()> {
        if batch.channels != self.arch.input_channels {
            return Err(Error::Format(format!(
                "model expects {} input channels, batch has {}",
                self.arch.input_channels, batch.channels
            )));
        }
        Ok(())
    }
}
