//! Reference implementations used as test oracles. Deliberately naive.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sflpl::data::Dataset;
use sflpl::model::Model;
use sflpl::nn::{self, Activation, Layer};
use sflpl::poisoning::LabeledBatch;
use sflpl::protocol::{epoch_order, TrainOptions};
use sflpl::Tensor;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::None => v,
    }
}

/// Gives every bias a random value so that no ReLU input sits exactly on
/// the kink at zero, where central differences see half the slope.
pub fn jitter_biases(layers: &mut [Layer], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in layers {
        if let Some((_, b)) = layer.params_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
}

/// Triple-loop dense layer: `y[b][o] = act(sum_i x[b][i] w[i][o] + bias[o])`.
pub fn naive_dense(x: &[f64], batch: usize, w: &Tensor, bias: &Tensor, a: Activation) -> Vec<f64> {
    let (inp, out) = (w.shape()[0], w.shape()[1]);
    let mut y = vec![0.0; batch * out];
    for b in 0..batch {
        for o in 0..out {
            let mut s = bias.data()[o];
            for i in 0..inp {
                s += x[b * inp + i] * w.data()[i * out + o];
            }
            y[b * out + o] = act(a, s);
        }
    }
    y
}

/// Direct valid cross-correlation, stride 1.
pub fn naive_conv1d(x: &[f64], batch: usize, len: usize, w: &Tensor, bias: &Tensor, a: Activation) -> Vec<f64> {
    let (oc, ic, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let out_len = len - k + 1;
    let mut y = vec![0.0; batch * oc * out_len];
    for b in 0..batch {
        for o in 0..oc {
            for t in 0..out_len {
                let mut s = bias.data()[o];
                for c in 0..ic {
                    for j in 0..k {
                        s += x[(b * ic + c) * len + t + j] * w.data()[(o * ic + c) * k + j];
                    }
                }
                y[(b * oc + o) * out_len + t] = act(a, s);
            }
        }
    }
    y
}

pub fn naive_maxpool(x: &[f64], rows: usize, len: usize, window: usize) -> Vec<f64> {
    let out_len = len / window;
    let mut y = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        for t in 0..out_len {
            let s = &x[r * len + t * window..r * len + (t + 1) * window];
            y.push(s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    y
}

/// Forward pass built only from the naive layer oracles.
pub fn naive_forward(layers: &[Layer], input: &Tensor) -> Vec<f64> {
    let batch = input.batch_size();
    let mut shape = input.sample_shape().to_vec();
    let mut x = input.data().to_vec();
    for layer in layers {
        match layer {
            Layer::Dense(d) => {
                x = naive_dense(&x, batch, &d.weights, &d.biases, d.activation);
                shape = vec![d.weights.shape()[1]];
            }
            Layer::Conv1d(c) => {
                let len = shape[1];
                x = naive_conv1d(&x, batch, len, &c.weights, &c.biases, c.activation);
                shape = vec![c.weights.shape()[0], len - c.weights.shape()[2] + 1];
            }
            Layer::MaxPool1d(p) => {
                x = naive_maxpool(&x, batch * shape[0], shape[1], p.window);
                shape = vec![shape[0], shape[1] / p.window];
            }
        }
    }
    x
}

/// Single-machine training of the unsplit model, visiting samples in the
/// same order a lone SplitFed client would.
pub fn centralized_train(model: &Model, data: &Dataset, epochs: usize, opts: &TrainOptions) -> Model {
    let mut layers = model.layers.clone();
    for epoch in 0..epochs {
        let order = epoch_order(opts.seed, 0, epoch, data.len(), opts.shuffle);
        for idx in order.chunks(opts.batch_size) {
            let x = model.shape_batch(data.inputs.select_rows(idx).unwrap()).unwrap();
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (logits, cache) = nn::forward(&layers, &x).unwrap();
            let (_, g) = nn::softmax_cross_entropy(&logits, &y).unwrap();
            let (grads, _) = nn::backward(&layers, &cache, &g).unwrap();
            nn::sgd_step(&mut layers, &grads, opts.lr).unwrap();
        }
    }
    Model {
        spec: model.spec.clone(),
        layers,
    }
}

pub fn models_bitwise_eq(a: &Model, b: &Model) -> bool {
    a.layers.len() == b.layers.len()
        && a.layers.iter().zip(&b.layers).all(|(x, y)| match (x.params(), y.params()) {
            (Some((wa, ba)), Some((wb, bb))) => wa.bitwise_eq(wb) && ba.bitwise_eq(bb),
            (None, None) => true,
            _ => false,
        })
}

pub fn max_param_diff(a: &Model, b: &Model) -> f64 {
    a.layers
        .iter()
        .zip(&b.layers)
        .filter_map(|(x, y)| Some((x.params()?, y.params()?)))
        .map(|((wa, ba), (wb, bb))| wa.max_abs_diff(wb).unwrap().max(ba.max_abs_diff(bb).unwrap()))
        .fold(0.0, f64::max)
}

/// Exhaustive farthest-partner search, written independently of the library.
pub fn distance_oracle(batch: &LabeledBatch, source: usize) -> Vec<usize> {
    let n = batch.labels.len();
    let mut out = batch.labels.clone();
    for i in 0..n {
        if batch.labels[i] != source {
            continue;
        }
        let mut far = None::<(f64, usize)>;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d: f64 = batch
                .inputs
                .row(i)
                .iter()
                .zip(batch.inputs.row(j))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            match far {
                Some((fd, _)) if d <= fd => {}
                _ => far = Some((d, j)),
            }
        }
        if let Some((_, j)) = far {
            out[i] = batch.labels[j];
        }
    }
    out
}
