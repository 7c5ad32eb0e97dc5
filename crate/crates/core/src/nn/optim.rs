use super::layer::{Layer, LayerGrads};
use crate::error::{Error, Result};

/// Plain SGD default learning rate.
pub const DEFAULT_LR: f64 = 0.01;

/// `params -= lr * grads` for every learnable layer.
///
/// All gradients are checked before any parameter is touched, so a rejected
/// step leaves the layers unchanged.
pub fn sgd_step(layers: &mut [Layer], grads: &[Option<LayerGrads>], lr: f64) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::LearningRate(lr));
    }
    if grads.len() != layers.len() {
        return Err(Error::shape("gradient list", vec![layers.len()], vec![grads.len()]));
    }
    for (i, (layer, grad)) in layers.iter().zip(grads).enumerate() {
        match (layer.params(), grad) {
            (None, None) => {}
            (Some((w, b)), Some(g)) => {
                if g.weights.shape() != w.shape() || g.biases.shape() != b.shape() {
                    return Err(Error::shape(
                        format!("layer {i} gradient"),
                        w.shape().to_vec(),
                        g.weights.shape().to_vec(),
                    ));
                }
                if !g.weights.is_finite() || !g.biases.is_finite() {
                    return Err(Error::NonFiniteGradient { layer: i });
                }
            }
            _ => {
                return Err(Error::Shape {
                    context: format!("layer {i} gradient presence"),
                    expected: vec![layer.is_learnable() as usize],
                    actual: vec![grad.is_some() as usize],
                })
            }
        }
    }
    for (layer, grad) in layers.iter_mut().zip(grads) {
        if let (Some((w, b)), Some(g)) = (layer.params_mut(), grad) {
            for (p, d) in w.data_mut().iter_mut().zip(g.weights.data()) {
                *p -= lr * d;
            }
            for (p, d) in b.data_mut().iter_mut().zip(g.biases.data()) {
                *p -= lr * d;
            }
        }
    }
    Ok(())
}
