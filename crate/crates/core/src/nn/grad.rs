use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, Axis, IxDyn};

use crate::error::{Error, Result};

/// What one parameter group needs to produce its gradient.
///
/// Both variants describe a (weight-like, bias-like) pair whose batch
/// gradient is a sum over rows and whose per-sample gradient is one row.
#[derive(Debug, Clone)]
pub enum ParamTrace {
    /// Linear map `y = x W + b`: `dW = xᵀ δ`, `db = Σ δ`.
    Linear { input: Array2<f64>, delta: Array2<f64> },
    /// Elementwise affine `y = γ ⊙ x̂ + β`: `dγ = Σ x̂ ⊙ δ`, `dβ = Σ δ`.
    Affine { xhat: Array2<f64>, delta: Array2<f64> },
}

impl ParamTrace {
    fn shapes(&self) -> [Vec<usize>; 2] {
        match self {
            ParamTrace::Linear { input, delta } => {
                [vec![input.ncols(), delta.ncols()], vec![delta.ncols()]]
            }
            ParamTrace::Affine { delta, .. } => [vec![delta.ncols()], vec![delta.ncols()]],
        }
    }

    fn len(&self) -> usize {
        self.shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn rows(&self) -> usize {
        match self {
            ParamTrace::Linear { delta, .. } | ParamTrace::Affine { delta, .. } => delta.nrows(),
        }
    }

    fn write_batch(&self, out: &mut [f64]) {
        match self {
            ParamTrace::Linear { input, delta } => {
                let w = input.t().dot(delta);
                let n = w.len();
                out[..n].copy_from_slice(w.as_standard_layout().as_slice().unwrap());
                write_iter(&mut out[n..], delta.sum_axis(Axis(0)).iter().copied());
            }
            ParamTrace::Affine { xhat, delta } => {
                let c = delta.ncols();
                write_iter(&mut out[..c], (xhat * delta).sum_axis(Axis(0)).iter().copied());
                write_iter(&mut out[c..], delta.sum_axis(Axis(0)).iter().copied());
            }
        }
    }

    fn write_sample(&self, row: usize, out: &mut [f64]) {
        match self {
            ParamTrace::Linear { input, delta } => {
                let x = input.row(row);
                let d = delta.row(row);
                let width = d.len();
                for (i, &xi) in x.iter().enumerate() {
                    for (j, &dj) in d.iter().enumerate() {
                        out[i * width + j] = xi * dj;
                    }
                }
                write_iter(&mut out[x.len() * width..], d.iter().copied());
            }
            ParamTrace::Affine { xhat, delta } => {
                let x = xhat.row(row);
                let d = delta.row(row);
                let c = d.len();
                write_iter(&mut out[..c], x.iter().zip(d.iter()).map(|(a, b)| a * b));
                write_iter(&mut out[c..], d.iter().copied());
            }
        }
    }
}

fn write_iter(out: &mut [f64], values: impl Iterator<Item = f64>) {
    for (slot, v) in out.iter_mut().zip(values) {
        *slot = v;
    }
}

/// Ordered parameter-group traces from one backward pass.
#[derive(Debug, Clone, Default)]
pub struct GradTape {
    traces: Vec<ParamTrace>,
    /// Set when a layer mixed rows (batch statistics); per-sample gradients
    /// are then undefined.
    cross_sample: bool,
}

impl GradTape {
    pub fn new(traces: Vec<ParamTrace>, cross_sample: bool) -> Self {
        Self { traces, cross_sample }
    }

    pub fn extend(&mut self, other: GradTape) {
        self.traces.extend(other.traces);
        self.cross_sample |= other.cross_sample;
    }

    pub fn is_cross_sample(&self) -> bool {
        self.cross_sample
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.traces.iter().flat_map(|t| t.shapes()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.traces.iter().map(ParamTrace::len).sum()
    }

    fn batch_size(&self) -> usize {
        self.traces.first().map_or(0, ParamTrace::rows)
    }

    /// Gradient summed over the batch rows.
    pub fn batch_gradient(&self) -> GradientBundle {
        let mut data = Array2::zeros((1, self.num_params()));
        let row = data.as_slice_mut().unwrap();
        let mut offset = 0;
        for t in &self.traces {
            let n = t.len();
            t.write_batch(&mut row[offset..offset + n]);
            offset += n;
        }
        GradientBundle {
            shapes: self.shapes(),
            data,
            per_sample: false,
        }
    }

    /// One gradient row per batch row.
    pub fn per_sample_gradients(&self) -> Result<GradientBundle> {
        if self.cross_sample {
            return Err(Error::Shape(
                "per-sample gradients are undefined through batch-statistics normalization".into(),
            ));
        }
        let rows = self.batch_size();
        let p = self.num_params();
        let mut data = Array2::zeros((rows, p));
        for (r, mut out) in data.outer_iter_mut().enumerate() {
            let out = out.as_slice_mut().unwrap();
            let mut offset = 0;
            for t in &self.traces {
                let n = t.len();
                t.write_sample(r, &mut out[offset..offset + n]);
                offset += n;
            }
        }
        Ok(GradientBundle {
            shapes: self.shapes(),
            data,
            per_sample: true,
        })
    }
}

/// Gradients laid out like the parameters they belong to.
///
/// `data` has one row for a batch gradient or one row per sample; each row
/// is the concatenation of all parameter tensors in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub shapes: Vec<Vec<usize>>,
    pub data: Array2<f64>,
    pub per_sample: bool,
}

impl GradientBundle {
    pub fn num_params(&self) -> usize {
        self.data.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.data.row(r)
    }

    /// Sum over rows; for a batch bundle this is the gradient itself.
    pub fn summed(&self) -> Array1<f64> {
        self.data.sum_axis(Axis(0))
    }

    pub fn row_norms(&self) -> Array1<f64> {
        self.data.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
    }

    /// Tensor `index` of row `r`, in its parameter shape.
    pub fn tensor(&self, r: usize, index: usize) -> ArrayViewD<'_, f64> {
        let start: usize = self.shapes[..index].iter().map(|s| s.iter().product::<usize>()).sum();
        let shape = &self.shapes[index];
        let len: usize = shape.iter().product();
        let row = self.data.row(r);
        row.slice_move(ndarray::s![start..start + len])
            .into_shape_with_order(IxDyn(shape))
            .expect("bundle shapes are consistent with row width")
    }
}
