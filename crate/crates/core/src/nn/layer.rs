use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// Identity. Used on logits; softmax is folded into the loss.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    Conv1d,
    MaxPool1d,
}

/// Fully connected layer. Inputs of any rank are flattened past the batch dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[in_features, out_features]`
    pub weights: Tensor,
    /// `[out_features]`
    pub biases: Tensor,
    pub activation: Activation,
}

/// Stride-1 "valid" 1-D convolution over `[batch, channels, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    /// `[out_channels, in_channels, kernel_width]`
    pub weights: Tensor,
    /// `[out_channels]`
    pub biases: Tensor,
    pub activation: Activation,
}

/// Non-overlapping max pooling (stride equals window). A trailing partial window is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool1d {
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
}

/// Parameter gradients of one learnable layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub biases: Tensor,
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        in_features: usize,
        out_features: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w = glorot(rng, in_features, out_features, in_features * out_features);
        Self {
            weights: Tensor::new(vec![in_features, out_features], w).expect("dense shape"),
            biases: Tensor::zeros(vec![out_features]),
            activation,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[1]
    }
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let n = out_channels * in_channels * kernel_width;
        let w = glorot(rng, in_channels * kernel_width, out_channels * kernel_width, n);
        Self {
            weights: Tensor::new(vec![out_channels, in_channels, kernel_width], w)
                .expect("conv shape"),
            biases: Tensor::zeros(vec![out_channels]),
            activation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_width(&self) -> usize {
        self.weights.shape()[2]
    }
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv1d(_) => LayerKind::Conv1d,
            Layer::MaxPool1d(_) => LayerKind::MaxPool1d,
        }
    }

    pub fn is_learnable(&self) -> bool {
        !matches!(self, Layer::MaxPool1d(_))
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(d) => d.activation,
            Layer::Conv1d(c) => c.activation,
            Layer::MaxPool1d(_) => Activation::None,
        }
    }

    /// `(weights, biases)` for learnable layers.
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.biases)),
            Layer::Conv1d(c) => Some((&c.weights, &c.biases)),
            Layer::MaxPool1d(_) => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.biases)),
            Layer::Conv1d(c) => Some((&mut c.weights, &mut c.biases)),
            Layer::MaxPool1d(_) => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }

    /// Per-sample output shape for a per-sample input shape, or an error if
    /// the input cannot feed this layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                let features: usize = input.iter().product();
                if features != d.in_features() {
                    return Err(Error::shape("dense input", vec![d.in_features()], input.to_vec()));
                }
                Ok(vec![d.out_features()])
            }
            Layer::Conv1d(c) => match *input {
                [ch, len] if ch == c.in_channels() && len >= c.kernel_width() => {
                    Ok(vec![c.out_channels(), len - c.kernel_width() + 1])
                }
                _ => Err(Error::shape(
                    "conv1d input [channels, length]",
                    vec![c.in_channels(), c.kernel_width()],
                    input.to_vec(),
                )),
            },
            Layer::MaxPool1d(p) => match *input {
                [ch, len] if p.window > 0 && len >= p.window => Ok(vec![ch, len / p.window]),
                _ => Err(Error::shape(
                    "maxpool1d input [channels, length]",
                    vec![1, p.window],
                    input.to_vec(),
                )),
            },
        }
    }
}

/// Values each layer keeps from the forward pass for backprop.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Dense { input: Tensor, output: Tensor },
    Conv1d { input: Tensor, output: Tensor },
    MaxPool1d { input_shape: Vec<usize>, argmax: Vec<usize> },
}

impl LayerCache {
    pub(crate) fn kind(&self) -> LayerKind {
        match self {
            LayerCache::Dense { .. } => LayerKind::Dense,
            LayerCache::Conv1d { .. } => LayerKind::Conv1d,
            LayerCache::MaxPool1d { .. } => LayerKind::MaxPool1d,
        }
    }

    pub(crate) fn input(&self) -> Option<&Tensor> {
        match self {
            LayerCache::Dense { input, .. } | LayerCache::Conv1d { input, .. } => Some(input),
            LayerCache::MaxPool1d { .. } => None,
        }
    }

    fn output_shape(&self) -> Vec<usize> {
        match self {
            LayerCache::Dense { output, .. } | LayerCache::Conv1d { output, .. } => {
                output.shape().to_vec()
            }
            LayerCache::MaxPool1d { input_shape, argmax } => {
                let mut s = input_shape.clone();
                s[2] = argmax.len() / (s[0] * s[1]);
                s
            }
        }
    }
}

/// Stored inputs/outputs of every layer in a segment, produced by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) input_shape: Vec<usize>,
    pub(crate) output_shape: Vec<usize>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}

fn apply_activation(act: Activation, values: &mut [f64]) {
    if act == Activation::Relu {
        for v in values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Turns an upstream gradient into a pre-activation gradient in place.
fn activation_backward(act: Activation, output: &Tensor, grad: &mut [f64]) {
    if act == Activation::Relu {
        for (g, &o) in grad.iter_mut().zip(output.data()) {
            if o <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

fn dense_forward(d: &Dense, input: &Tensor) -> Tensor {
    let b = input.batch_size();
    let (fin, fout) = (d.in_features(), d.out_features());
    let mut out = vec![0.0; b * fout];
    for row in out.chunks_exact_mut(fout) {
        row.copy_from_slice(d.biases.data());
    }
    gemm(
        Mat::new(input.data(), b, fin),
        Mat::new(d.weights.data(), fin, fout),
        1.0,
        &mut out,
    );
    apply_activation(d.activation, &mut out);
    Tensor::new(vec![b, fout], out).expect("dense output shape")
}

fn dense_backward(d: &Dense, input: &Tensor, output: &Tensor, upstream: &Tensor) -> (LayerGrads, Tensor) {
    let b = input.batch_size();
    let (fin, fout) = (d.in_features(), d.out_features());
    let mut dz = upstream.data().to_vec();
    activation_backward(d.activation, output, &mut dz);

    let mut dw = vec![0.0; fin * fout];
    gemm(Mat::new(input.data(), b, fin).t(), Mat::new(&dz, b, fout), 0.0, &mut dw);
    let mut db = vec![0.0; fout];
    for row in dz.chunks_exact(fout) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; b * fin];
    gemm(Mat::new(&dz, b, fout), Mat::new(d.weights.data(), fin, fout).t(), 0.0, &mut dx);

    let grads = LayerGrads {
        weights: Tensor::new(vec![fin, fout], dw).expect("dense dw"),
        biases: Tensor::new(vec![fout], db).expect("dense db"),
    };
    (grads, Tensor::new(input.shape().to_vec(), dx).expect("dense dx"))
}

/// Unfolds one sample `[cin, len]` into `[cin * k, len_out]`.
fn im2col(sample: &[f64], cin: usize, len: usize, k: usize, col: &mut [f64]) {
    let lout = len - k + 1;
    for c in 0..cin {
        let src = &sample[c * len..(c + 1) * len];
        for j in 0..k {
            let dst = &mut col[(c * k + j) * lout..(c * k + j + 1) * lout];
            dst.copy_from_slice(&src[j..j + lout]);
        }
    }
}

fn conv_forward(c: &Conv1d, input: &Tensor) -> Tensor {
    let (b, cin, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, k) = (c.out_channels(), c.kernel_width());
    let lout = len - k + 1;
    let mut col = vec![0.0; cin * k * lout];
    let mut out = vec![0.0; b * cout * lout];
    for (s, out_s) in out.chunks_exact_mut(cout * lout).enumerate() {
        im2col(input.row(s), cin, len, k, &mut col);
        for (o, row) in out_s.chunks_exact_mut(lout).enumerate() {
            row.fill(c.biases.data()[o]);
        }
        gemm(
            Mat::new(c.weights.data(), cout, cin * k),
            Mat::new(&col, cin * k, lout),
            1.0,
            out_s,
        );
    }
    apply_activation(c.activation, &mut out);
    Tensor::new(vec![b, cout, lout], out).expect("conv output shape")
}

fn conv_backward(c: &Conv1d, input: &Tensor, output: &Tensor, upstream: &Tensor) -> (LayerGrads, Tensor) {
    let (b, cin, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, k) = (c.out_channels(), c.kernel_width());
    let lout = len - k + 1;
    let mut dz = upstream.data().to_vec();
    activation_backward(c.activation, output, &mut dz);

    let mut col = vec![0.0; cin * k * lout];
    let mut dcol = vec![0.0; cin * k * lout];
    let mut dw = vec![0.0; cout * cin * k];
    let mut db = vec![0.0; cout];
    let mut dx = vec![0.0; b * cin * len];
    for s in 0..b {
        let dz_s = &dz[s * cout * lout..(s + 1) * cout * lout];
        im2col(input.row(s), cin, len, k, &mut col);
        gemm(Mat::new(dz_s, cout, lout), Mat::new(&col, cin * k, lout).t(), 1.0, &mut dw);
        for (o, row) in dz_s.chunks_exact(lout).enumerate() {
            db[o] += row.iter().sum::<f64>();
        }
        gemm(
            Mat::new(c.weights.data(), cout, cin * k).t(),
            Mat::new(dz_s, cout, lout),
            0.0,
            &mut dcol,
        );
        let dx_s = &mut dx[s * cin * len..(s + 1) * cin * len];
        for ch in 0..cin {
            for j in 0..k {
                let src = &dcol[(ch * k + j) * lout..(ch * k + j + 1) * lout];
                let dst = &mut dx_s[ch * len + j..ch * len + j + lout];
                for (d, g) in dst.iter_mut().zip(src) {
                    *d += g;
                }
            }
        }
    }
    let grads = LayerGrads {
        weights: Tensor::new(vec![cout, cin, k], dw).expect("conv dw"),
        biases: Tensor::new(vec![cout], db).expect("conv db"),
    };
    (grads, Tensor::new(input.shape().to_vec(), dx).expect("conv dx"))
}

fn pool_forward(p: &MaxPool1d, input: &Tensor) -> (Tensor, Vec<usize>) {
    let (b, ch, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let lout = len / p.window;
    let mut out = Vec::with_capacity(b * ch * lout);
    let mut argmax = Vec::with_capacity(b * ch * lout);
    let data = input.data();
    for bc in 0..b * ch {
        let base = bc * len;
        for t in 0..lout {
            let start = base + t * p.window;
            let mut best = start;
            for i in start + 1..start + p.window {
                if data[i] > data[best] {
                    best = i;
                }
            }
            out.push(data[best]);
            argmax.push(best);
        }
    }
    (Tensor::new(vec![b, ch, lout], out).expect("pool output shape"), argmax)
}

fn pool_backward(input_shape: &[usize], argmax: &[usize], upstream: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        d[i] += g;
    }
    dx
}

/// Flattens `[B, ...]` to `[B, features]` for dense layers.
fn flatten(input: &Tensor) -> Tensor {
    if input.shape().len() == 2 {
        return input.clone();
    }
    let b = input.batch_size();
    let f = input.sample_len();
    input.clone().reshape(vec![b, f]).expect("flatten preserves size")
}

fn check_input(layers: &[Layer], batch: &Tensor) -> Result<Vec<usize>> {
    if batch.is_empty() || batch.shape().len() < 2 {
        return Err(Error::EmptyBatch("forward"));
    }
    let mut shape = batch.sample_shape().to_vec();
    for (i, layer) in layers.iter().enumerate() {
        shape = layer.output_shape(&shape).map_err(|e| match e {
            Error::Shape {
                context,
                expected,
                actual,
            } => Error::Shape {
                context: format!("layer {i}: {context}"),
                expected,
                actual,
            },
            other => other,
        })?;
    }
    Ok(shape)
}

fn layer_forward(layer: &Layer, input: &Tensor) -> (Tensor, LayerCache) {
    match layer {
        Layer::Dense(d) => {
            let x = flatten(input);
            let y = dense_forward(d, &x);
            let cache = LayerCache::Dense {
                input: input.clone(),
                output: y.clone(),
            };
            (y, cache)
        }
        Layer::Conv1d(c) => {
            let y = conv_forward(c, input);
            let cache = LayerCache::Conv1d {
                input: input.clone(),
                output: y.clone(),
            };
            (y, cache)
        }
        Layer::MaxPool1d(p) => {
            let (y, argmax) = pool_forward(p, input);
            let cache = LayerCache::MaxPool1d {
                input_shape: input.shape().to_vec(),
                argmax,
            };
            (y, cache)
        }
    }
}

/// Runs `batch` through `layers` in order, keeping what backprop needs.
///
/// An empty layer list is the identity.
pub fn forward(layers: &[Layer], batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let out_sample = check_input(layers, batch)?;
    let mut caches = Vec::with_capacity(layers.len());
    let mut x = batch.clone();
    for layer in layers {
        let (y, cache) = layer_forward(layer, &x);
        caches.push(cache);
        x = y;
    }
    let mut output_shape = vec![batch.batch_size()];
    output_shape.extend(out_sample);
    debug_assert_eq!(x.shape(), output_shape.as_slice());
    Ok((
        x,
        ForwardCache {
            layers: caches,
            input_shape: batch.shape().to_vec(),
            output_shape,
        },
    ))
}

/// Forward pass without a cache, for evaluation.
pub fn predict(layers: &[Layer], batch: &Tensor) -> Result<Tensor> {
    check_input(layers, batch)?;
    let mut x = batch.clone();
    for layer in layers {
        x = match layer {
            Layer::Dense(d) => dense_forward(d, &flatten(&x)),
            Layer::Conv1d(c) => conv_forward(c, &x),
            Layer::MaxPool1d(p) => pool_forward(p, &x).0,
        };
    }
    Ok(x)
}

/// Backpropagates `upstream` (gradient w.r.t. the forward output) through
/// `layers`. Returns one entry per layer (`None` for parameterless layers)
/// and the gradient w.r.t. the forward input.
pub fn backward(
    layers: &[Layer],
    cache: &ForwardCache,
    upstream: &Tensor,
) -> Result<(Vec<Option<LayerGrads>>, Tensor)> {
    if cache.layers.len() != layers.len() {
        return Err(Error::CacheMismatch(format!(
            "cache has {} layers, segment has {}",
            cache.layers.len(),
            layers.len()
        )));
    }
    for (i, (layer, lc)) in layers.iter().zip(&cache.layers).enumerate() {
        if layer.kind() != lc.kind() {
            return Err(Error::CacheMismatch(format!(
                "layer {i} is {:?} but cache holds {:?}",
                layer.kind(),
                lc.kind()
            )));
        }
        if let Some(input) = lc.input() {
            if layer.output_shape(input.sample_shape()).ok().as_deref()
                != Some(&lc.output_shape()[1..])
            {
                return Err(Error::CacheMismatch(format!(
                    "layer {i} parameters no longer fit the cached activations"
                )));
            }
        }
    }
    if upstream.shape() != cache.output_shape.as_slice() {
        return Err(Error::shape(
            "upstream gradient",
            cache.output_shape.clone(),
            upstream.shape().to_vec(),
        ));
    }

    let mut grads: Vec<Option<LayerGrads>> = vec![None; layers.len()];
    let mut g = upstream.clone();
    for (i, (layer, lc)) in layers.iter().zip(&cache.layers).enumerate().rev() {
        g = match (layer, lc) {
            (Layer::Dense(d), LayerCache::Dense { input, output }) => {
                let (lg, dx) = dense_backward(d, &flatten(input), output, &g);
                grads[i] = Some(lg);
                dx.reshape(input.shape().to_vec())?
            }
            (Layer::Conv1d(c), LayerCache::Conv1d { input, output }) => {
                let (lg, dx) = conv_backward(c, input, output, &g);
                grads[i] = Some(lg);
                dx
            }
            (Layer::MaxPool1d(_), LayerCache::MaxPool1d { input_shape, argmax }) => {
                pool_backward(input_shape, argmax, &g)
            }
            _ => unreachable!("kinds checked above"),
        };
    }
    Ok((grads, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn identity_dense(act: Activation) -> Layer {
        Layer::Dense(Dense {
            weights: t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]),
            biases: t(&[2], &[0.0, 0.0]),
            activation: act,
        })
    }

    #[test]
    fn identity_dense_relu_clamps() {
        let (y, _) = forward(&[identity_dense(Activation::Relu)], &t(&[1, 2], &[1.0, -2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn empty_segment_is_identity() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (y, cache) = forward(&[], &x).unwrap();
        assert!(y.bitwise_eq(&x));
        let (grads, dx) = backward(&[], &cache, &x).unwrap();
        assert!(grads.is_empty());
        assert!(dx.bitwise_eq(&x));
    }

    #[test]
    fn rejects_shape_mismatch_and_empty_batch() {
        let layer = identity_dense(Activation::None);
        let err = forward(&[layer.clone()], &t(&[1, 3], &[1.0, 2.0, 3.0])).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
        let empty = Tensor::zeros(vec![1]);
        assert!(matches!(forward(&[layer], &empty), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn hand_derived_dense_input_grad() {
        // y = x W + b; dL/dx = g W^T
        let layer = Layer::Dense(Dense {
            weights: t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]),
            biases: t(&[2], &[0.5, -0.5]),
            activation: Activation::None,
        });
        let x = t(&[1, 2], &[0.3, -0.7]);
        let (_, cache) = forward(std::slice::from_ref(&layer), &x).unwrap();
        let g = t(&[1, 2], &[1.0, -1.0]);
        let (grads, dx) = backward(&[layer], &cache, &g).unwrap();
        // [1, -1] * [[1, 3], [2, 4]] = [1 - 2, 3 - 4]
        assert_eq!(dx.data(), &[-1.0, -1.0]);
        let lg = grads[0].as_ref().unwrap();
        // x^T g
        assert_eq!(lg.weights.data(), &[0.3, -0.3, -0.7, 0.7]);
        assert_eq!(lg.biases.data(), &[1.0, -1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layers = vec![
            Layer::Conv1d(Conv1d::new(1, 3, 3, Activation::Relu, &mut rng)),
            Layer::MaxPool1d(MaxPool1d { window: 2 }),
            Layer::Dense(Dense::new(3 * 4, 4, Activation::None, &mut rng)),
        ];
        let x = Tensor::new(vec![2, 1, 10], (0..20).map(|i| (i as f64).cos()).collect()).unwrap();
        let (y, cache) = forward(&layers, &x).unwrap();
        let (grads, dx) = backward(&layers, &cache, &Tensor::zeros(y.shape().to_vec())).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        for g in grads.iter().flatten() {
            assert!(g.weights.data().iter().chain(g.biases.data()).all(|&v| v == 0.0));
        }
        assert!(grads[1].is_none());
    }

    #[test]
    fn maxpool_routes_each_gradient_once() {
        let layers = [Layer::MaxPool1d(MaxPool1d { window: 2 })];
        let x = t(&[1, 2, 4], &[1.0, 3.0, 2.0, 2.0, -1.0, -5.0, 0.0, 7.0]);
        let (y, cache) = forward(&layers, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0, -1.0, 7.0]);
        let g = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (_, dx) = backward(&layers, &cache, &g).unwrap();
        // ties go to the first position
        assert_eq!(dx.data(), &[0.0, 1.0, 2.0, 0.0, 3.0, 0.0, 0.0, 4.0]);
        assert_eq!(dx.sum(), g.sum());
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = vec![Layer::Dense(Dense::new(2, 2, Activation::Relu, &mut rng))];
        let b = vec![Layer::Dense(Dense::new(3, 2, Activation::Relu, &mut rng))];
        let (y, cache) = forward(&a, &t(&[1, 2], &[0.1, 0.2])).unwrap();
        assert!(matches!(backward(&b, &cache, &y), Err(Error::CacheMismatch(_))));
        let two = vec![a[0].clone(), a[0].clone()];
        assert!(matches!(backward(&two, &cache, &y), Err(Error::CacheMismatch(_))));
        let bad = Tensor::zeros(vec![2, 2]);
        assert!(matches!(backward(&a, &cache, &bad), Err(Error::Shape { .. })));
    }
}
