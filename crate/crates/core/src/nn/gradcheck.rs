//! Finite-difference checks of analytic gradients.
//!
//! Every coordinate is differentiated along a one-dimensional line. Within a
//! fixed ReLU/max-pool pattern the logits are linear in a single parameter, so
//! the loss is smooth there; the step is shrunk until no unit changes side and
//! then refined with Ridders' extrapolation, which also lets the step start
//! large enough for roundoff to stay well below the relative-error floor.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{backward, forward, Activation, Layer, LayerCache, LayerGrads};
use super::loss::softmax_cross_entropy;
use crate::error::Result;
use crate::tensor::Tensor;

/// Denominator floor in the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Smallest step tried when looking for a pattern-stable interval.
const MIN_STEP: f64 = 1e-9;
/// Ridders tableau: step shrink factor and size.
const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_TABLE: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Largest step tried.
    pub eps: f64,
    /// Check at most this many coordinates per parameter tensor, chosen with
    /// `seed`. `None` checks every coordinate.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
    /// Plain central difference at `eps`, no pattern search or extrapolation.
    pub plain: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_coords_per_tensor: None,
            seed: 0,
            plain: false,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Max relative error between backprop and finite differences over every
/// parameter of `layers`, with mean softmax cross-entropy as the loss.
/// `eps` is the largest step tried.
pub fn grad_check(layers: &[Layer], batch: &Tensor, labels: &[usize], eps: f64) -> Result<f64> {
    grad_check_with(
        layers,
        batch,
        labels,
        &GradCheckOptions {
            eps,
            ..Default::default()
        },
    )
}

pub fn grad_check_with(
    layers: &[Layer],
    batch: &Tensor,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<f64> {
    let (logits, cache) = forward(layers, batch)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let (grads, _) = backward(layers, &cache, &dlogits)?;
    compare_gradients(layers, batch, labels, &grads, opts)
}

/// Which side of every kink the forward pass landed on.
#[derive(PartialEq)]
struct Pattern(Vec<Vec<usize>>);

fn pattern(layers: &[Layer], caches: &[LayerCache]) -> Pattern {
    Pattern(
        layers
            .iter()
            .zip(caches)
            .map(|(layer, cache)| match cache {
                LayerCache::Dense { output, .. } | LayerCache::Conv1d { output, .. } => {
                    if layer.activation() == Activation::Relu {
                        output.data().iter().map(|&v| usize::from(v > 0.0)).collect()
                    } else {
                        Vec::new()
                    }
                }
                LayerCache::MaxPool1d { argmax, .. } => argmax.clone(),
            })
            .collect(),
    )
}

struct Line<'a> {
    suffix: Vec<Layer>,
    input: &'a Tensor,
    labels: &'a [usize],
    which: usize,
    coord: usize,
    origin: f64,
    base: Pattern,
}

impl Line<'_> {
    fn eval(&mut self, t: f64) -> Result<(f64, Pattern)> {
        param_slot(&mut self.suffix[0], self.which)[self.coord] = self.origin + t;
        let out = forward(&self.suffix, self.input);
        param_slot(&mut self.suffix[0], self.which)[self.coord] = self.origin;
        let (logits, cache) = out?;
        let loss = softmax_cross_entropy(&logits, self.labels)?.0;
        Ok((loss, pattern(&self.suffix, &cache.layers)))
    }

    fn central(&mut self, h: f64) -> Result<(f64, bool)> {
        let (plus, pp) = self.eval(h)?;
        let (minus, pm) = self.eval(-h)?;
        Ok(((plus - minus) / (2.0 * h), pp == self.base && pm == self.base))
    }

    /// Ridders' polynomial extrapolation of central differences to zero
    /// step, started from the largest step with a stable pattern.
    fn derivative(&mut self, max_step: f64) -> Result<f64> {
        let mut h = max_step;
        loop {
            let (_, stable) = self.central(h)?;
            if stable || h * 0.1 < MIN_STEP {
                break;
            }
            h *= 0.1;
        }
        let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
        let mut table = vec![vec![0.0; RIDDERS_TABLE]; RIDDERS_TABLE];
        table[0][0] = self.central(h)?.0;
        let mut best = table[0][0];
        let mut err = f64::INFINITY;
        for i in 1..RIDDERS_TABLE {
            h /= RIDDERS_SHRINK;
            table[0][i] = self.central(h)?.0;
            let mut fac = c2;
            for j in 1..=i {
                table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
                fac *= c2;
                let e = (table[j][i] - table[j - 1][i])
                    .abs()
                    .max((table[j][i] - table[j - 1][i - 1]).abs());
                if e <= err {
                    err = e;
                    best = table[j][i];
                }
            }
            if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
                break;
            }
        }
        Ok(best)
    }
}

/// Checks caller-supplied analytic gradients against finite differences.
pub fn compare_gradients(
    layers: &[Layer],
    batch: &Tensor,
    labels: &[usize],
    analytic: &[Option<LayerGrads>],
    opts: &GradCheckOptions,
) -> Result<f64> {
    let (_, cache) = forward(layers, batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;

    for (i, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let input = cache.layers[i]
            .input()
            .expect("learnable layers cache their input");
        let base = pattern(&layers[i..], &cache.layers[i..]);
        let mut line = Line {
            suffix: layers[i..].to_vec(),
            input,
            labels,
            which: 0,
            coord: 0,
            origin: 0.0,
            base,
        };

        for which in 0..2 {
            let g = if which == 0 { &grad.weights } else { &grad.biases };
            let n = g.len();
            let coords: Vec<usize> = match opts.max_coords_per_tensor {
                Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
                _ => (0..n).collect(),
            };
            for c in coords {
                line.which = which;
                line.coord = c;
                line.origin = param_slot(&mut line.suffix[0], which)[c];
                let numeric = if opts.plain {
                    line.central(opts.eps)?.0
                } else {
                    line.derivative(opts.eps)?
                };
                worst = worst.max(relative_error(g.data()[c], numeric));
            }
        }
    }
    Ok(worst)
}

fn param_slot(layer: &mut Layer, which: usize) -> &mut [f64] {
    let (w, b) = layer.params_mut().expect("learnable layer");
    if which == 0 {
        w.data_mut()
    } else {
        b.data_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{Activation, Conv1d, Dense, MaxPool1d};
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layers = vec![Layer::Dense(Dense::new(6, 4, Activation::None, &mut rng))];
        let x = random_batch(&mut rng, &[5, 6]);
        let err = grad_check(&layers, &x, &[0, 1, 2, 3, 0], 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn conv_conv_dense_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layers = vec![
            Layer::Conv1d(Conv1d::new(1, 3, 3, Activation::Relu, &mut rng)),
            Layer::Conv1d(Conv1d::new(3, 4, 3, Activation::Relu, &mut rng)),
            Layer::MaxPool1d(MaxPool1d { window: 2 }),
            Layer::Dense(Dense::new(4 * 4, 3, Activation::None, &mut rng)),
        ];
        let x = random_batch(&mut rng, &[3, 1, 12]);
        let err = grad_check(&layers, &x, &[2, 0, 1], 1e-3).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn detects_corrupted_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layers = vec![
            Layer::Dense(Dense::new(5, 6, Activation::Relu, &mut rng)),
            Layer::Dense(Dense::new(6, 3, Activation::None, &mut rng)),
        ];
        let x = random_batch(&mut rng, &[4, 5]);
        let labels = [0, 1, 2, 1];
        let (logits, cache) = forward(&layers, &x).unwrap();
        let (_, dl) = softmax_cross_entropy(&logits, &labels).unwrap();
        let (mut grads, _) = backward(&layers, &cache, &dl).unwrap();
        let opts = GradCheckOptions::default();
        assert!(compare_gradients(&layers, &x, &labels, &grads, &opts).unwrap() < 1e-4);
        for g in grads.iter_mut().flatten() {
            g.weights.data_mut().iter_mut().for_each(|v| *v *= 1.01);
        }
        let err = compare_gradients(&layers, &x, &labels, &grads, &opts).unwrap();
        assert!(err > 1e-3, "{err}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
