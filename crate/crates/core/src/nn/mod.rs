//! Dense neural building blocks with exact analytic gradients.
//!
//! Backward passes do not build a general autodiff graph. Each parameter
//! group records the pair of tensors its gradient is an outer product of
//! (layer input and output delta, or normalized activations and delta), which
//! gives batch gradients as a matrix product and per-sample gradients as row
//! slices of the same record. See [`GradTape`].

pub mod checkpoint;
mod grad;
mod loss;
mod mlp;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

pub use grad::{GradTape, GradientBundle, ParamTrace};
pub use loss::{cross_entropy, cross_entropy_per_sample, predict, softmax};
pub use mlp::{
    selu, selu_derivative, BatchNorm, GroupNorm, Linear, Mlp, MlpSpec, MlpTrace, Mode, Norm, NormKind,
    NORM_EPS, SELU_ALPHA, SELU_LAMBDA,
};

use crate::error::{Error, Result};

/// Anything holding trainable tensors in a fixed canonical order.
pub trait Parameterized {
    fn param_shapes(&self) -> Vec<Vec<usize>>;

    fn for_each_param(&self, f: &mut dyn FnMut(&[f64]));

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_param(&mut |p| out.extend_from_slice(p));
        out
    }

    fn load_flat_params(&mut self, src: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if src.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} parameters, got {}",
                src.len()
            )));
        }
        let mut offset = 0;
        self.for_each_param_mut(&mut |p| {
            p.copy_from_slice(&src[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }
}

/// Jumping-knowledge combiner in concatenation mode: `[x0 | x1 | ... ]`.
///
/// Concatenation has no parameters of its own; the head that follows it
/// learns how to weigh the stages.
pub fn jk_concat(embeddings: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::Shape("JK needs at least one embedding".into()))?;
    if let Some(bad) = embeddings.iter().find(|e| e.nrows() != first.nrows()) {
        return Err(Error::Shape(format!(
            "JK inputs have {} and {} rows",
            first.nrows(),
            bad.nrows()
        )));
    }
    concatenate(Axis(1), embeddings).map_err(|e| Error::Shape(e.to_string()))
}

/// Routes the gradient of a concatenation back to its inputs.
pub fn jk_split(grad: &Array2<f64>, widths: &[usize]) -> Result<Vec<Array2<f64>>> {
    let total: usize = widths.iter().sum();
    if total != grad.ncols() {
        return Err(Error::Shape(format!(
            "JK gradient has {} columns but inputs sum to {total}",
            grad.ncols()
        )));
    }
    let mut start = 0;
    Ok(widths
        .iter()
        .map(|&w| {
            let part = grad.slice(s![.., start..start + w]).to_owned();
            start += w;
            part
        })
        .collect())
}
