use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grad::{GradTape, ParamTrace};
use super::Parameterized;
use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const NORM_EPS: f64 = 1e-5;
const BATCH_NORM_MOMENTUM: f64 = 0.1;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    Batch,
    /// Group normalization with a single group (per-row layer norm).
    Group,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`, applied as `x W`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Norm {
    Batch(BatchNorm),
    Group(GroupNorm),
}

#[derive(Debug, Clone)]
enum NormTrace {
    Batch {
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
        batch_stats: bool,
    },
    Group {
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
}

impl Norm {
    fn new(kind: NormKind, channels: usize) -> Option<Self> {
        let gamma = Array1::ones(channels);
        let beta = Array1::zeros(channels);
        match kind {
            NormKind::None => None,
            NormKind::Batch => Some(Norm::Batch(BatchNorm {
                gamma,
                beta,
                running_mean: Array1::zeros(channels),
                running_var: Array1::ones(channels),
            })),
            NormKind::Group => Some(Norm::Group(GroupNorm { gamma, beta })),
        }
    }

    fn affine(&self) -> (&Array1<f64>, &Array1<f64>) {
        match self {
            Norm::Batch(b) => (&b.gamma, &b.beta),
            Norm::Group(g) => (&g.gamma, &g.beta),
        }
    }

    fn affine_mut(&mut self) -> (&mut Array1<f64>, &mut Array1<f64>) {
        match self {
            Norm::Batch(b) => (&mut b.gamma, &mut b.beta),
            Norm::Group(g) => (&mut g.gamma, &mut g.beta),
        }
    }

    fn forward(&mut self, z: &Array2<f64>, mode: Mode) -> (Array2<f64>, NormTrace) {
        match self {
            Norm::Batch(bn) => {
                let use_batch = mode == Mode::Train;
                let (mean, var) = if use_batch {
                    let mean = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(z.ncols()));
                    let var = z.var_axis(Axis(0), 0.0);
                    let rows = z.nrows() as f64;
                    if rows > 1.0 {
                        let unbiased = &var * (rows / (rows - 1.0));
                        bn.running_mean = &bn.running_mean * (1.0 - BATCH_NORM_MOMENTUM) + &mean * BATCH_NORM_MOMENTUM;
                        bn.running_var = &bn.running_var * (1.0 - BATCH_NORM_MOMENTUM) + unbiased * BATCH_NORM_MOMENTUM;
                    }
                    (mean, var)
                } else {
                    (bn.running_mean.clone(), bn.running_var.clone())
                };
                let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
                let xhat = (z - &mean) * &inv_std;
                let y = &xhat * &bn.gamma + &bn.beta;
                (
                    y,
                    NormTrace::Batch {
                        xhat,
                        inv_std,
                        batch_stats: use_batch,
                    },
                )
            }
            Norm::Group(gn) => {
                let (y, xhat, inv_std) = group_norm(z, &gn.gamma, &gn.beta);
                (y, NormTrace::Group { xhat, inv_std })
            }
        }
    }

    fn forward_eval(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Norm::Batch(bn) => {
                let inv_std = bn.running_var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
                (z - &bn.running_mean) * &inv_std * &bn.gamma + &bn.beta
            }
            Norm::Group(gn) => group_norm(z, &gn.gamma, &gn.beta).0,
        }
    }
}

fn group_norm(z: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let c = z.ncols().max(1) as f64;
    let mut xhat = z.clone();
    let mut inv_std = Array1::zeros(z.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / c;
        row.mapv_inplace(|v| v - mean);
        let var = row.dot(&row) / c;
        *s = 1.0 / (var + NORM_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gamma + beta;
    (y, xhat, inv_std)
}

/// Gradient of `x̂ = (z - mean) * inv_std` normalized along `axis`, given `dx̂`.
fn normalize_backward(dxhat: &Array2<f64>, xhat: &Array2<f64>, inv_std: &Array1<f64>, axis: Axis) -> Array2<f64> {
    let n = dxhat.len_of(axis) as f64;
    let sum_d = dxhat.sum_axis(axis).insert_axis(axis);
    let sum_dx = (dxhat * xhat).sum_axis(axis).insert_axis(axis);
    let inv = inv_std.view().insert_axis(axis);
    (dxhat * n - &sum_d - xhat * &sum_dx) * inv / n
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub num_layers: usize,
    pub norm: NormKind,
    /// When set, the last layer is a bare linear map (no norm, no SeLU).
    pub plain_last: bool,
}

/// Multi-layer perceptron: each layer is `linear -> norm -> SeLU`, except a
/// plain last layer which is only `linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    norms: Vec<Option<Norm>>,
    plain_last: bool,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Array2<f64>,
    norm: Option<NormTrace>,
    pre_activation: Option<Array2<f64>>,
}

/// Activations recorded by a traced forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    layers: Vec<LayerTrace>,
}

impl Mlp {
    pub fn new(spec: &MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.num_layers == 0 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        let mut dims = vec![spec.input_dim];
        dims.extend(std::iter::repeat_n(spec.hidden_dim, spec.num_layers - 1));
        dims.push(spec.output_dim);
        let layers: Vec<Linear> = dims.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Self::from_layers(layers, spec.norm, spec.plain_last))
    }

    pub fn from_layers(layers: Vec<Linear>, norm: NormKind, plain_last: bool) -> Self {
        let last = layers.len().saturating_sub(1);
        let norms = layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if plain_last && i == last {
                    None
                } else {
                    Norm::new(norm, l.weight.ncols())
                }
            })
            .collect();
        Self {
            layers,
            norms,
            plain_last,
        }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn norms(&self) -> &[Option<Norm>] {
        &self.norms
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    /// True when any layer normalizes with statistics taken across rows.
    pub fn uses_batch_norm(&self) -> bool {
        self.norms.iter().any(|n| matches!(n, Some(Norm::Batch(_))))
    }

    /// Non-trainable state (batch-norm running mean and variance), in layer order.
    pub fn for_each_buffer(&self, f: &mut dyn FnMut(&[f64])) {
        for norm in self.norms.iter().flatten() {
            if let Norm::Batch(bn) = norm {
                f(bn.running_mean.as_slice().unwrap());
                f(bn.running_var.as_slice().unwrap());
            }
        }
    }

    pub fn for_each_buffer_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for norm in self.norms.iter_mut().flatten() {
            if let Norm::Batch(bn) = norm {
                f(bn.running_mean.as_slice_mut().unwrap());
                f(bn.running_var.as_slice_mut().unwrap());
            }
        }
    }

    fn activated(&self, layer: usize) -> bool {
        !(self.plain_last && layer + 1 == self.layers.len())
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "MLP expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Forward pass. Train mode normalizes batch-norm layers with batch
    /// statistics and updates their running averages.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => self.forward_traced(x, mode).map(|(y, _)| y),
        }
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight) + &layer.bias;
            if self.activated(i) {
                if let Some(norm) = &self.norms[i] {
                    z = norm.forward_eval(&z);
                }
                z.mapv_inplace(selu);
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_traced(&mut self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, MlpTrace)> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            let layer = &self.layers[i];
            let mut z = h.dot(&layer.weight) + &layer.bias;
            let mut norm_trace = None;
            let mut pre_activation = None;
            if self.activated(i) {
                if let Some(norm) = &mut self.norms[i] {
                    let (y, t) = norm.forward(&z, mode);
                    z = y;
                    norm_trace = Some(t);
                }
                let out = z.mapv(selu);
                pre_activation = Some(z);
                z = out;
            }
            traces.push(LayerTrace {
                input: h,
                norm: norm_trace,
                pre_activation,
            });
            h = z;
        }
        Ok((h, MlpTrace { layers: traces }))
    }

    /// Backpropagates `upstream = dL/d(output)` through a traced pass.
    ///
    /// Returns the parameter tape (canonical order) and `dL/d(input)`.
    pub fn backward(&self, trace: &MlpTrace, upstream: &Array2<f64>) -> Result<(GradTape, Array2<f64>)> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace does not belong to this MLP".into()));
        }
        let expected = (trace.layers[0].input.nrows(), self.output_dim());
        if upstream.dim() != expected {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, expected {:?}",
                upstream.dim(),
                expected
            )));
        }

        let mut cross_sample = false;
        let mut rev = Vec::with_capacity(2 * self.layers.len());
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let t = &trace.layers[i];
            if let Some(pre) = &t.pre_activation {
                g *= &pre.mapv(selu_derivative);
            }
            if let (Some(norm), Some(nt)) = (&self.norms[i], &t.norm) {
                let (gamma, _) = norm.affine();
                let dxhat = &g * gamma;
                let dz = match nt {
                    NormTrace::Batch {
                        xhat,
                        inv_std,
                        batch_stats,
                    } => {
                        rev.push(ParamTrace::Affine {
                            xhat: xhat.clone(),
                            delta: g.clone(),
                        });
                        if *batch_stats {
                            cross_sample = true;
                            normalize_backward(&dxhat, xhat, inv_std, Axis(0))
                        } else {
                            dxhat * inv_std
                        }
                    }
                    NormTrace::Group { xhat, inv_std } => {
                        rev.push(ParamTrace::Affine {
                            xhat: xhat.clone(),
                            delta: g.clone(),
                        });
                        normalize_backward(&dxhat, xhat, inv_std, Axis(1))
                    }
                };
                g = dz;
            }
            let layer = &self.layers[i];
            rev.push(ParamTrace::Linear {
                input: t.input.clone(),
                delta: g.clone(),
            });
            g = g.dot(&layer.weight.t());
        }
        rev.reverse();
        Ok((GradTape::new(rev, cross_sample), g))
    }
}

impl Parameterized for Mlp {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for (layer, norm) in self.layers.iter().zip(&self.norms) {
            shapes.push(layer.weight.shape().to_vec());
            shapes.push(vec![layer.bias.len()]);
            if let Some(norm) = norm {
                let (g, b) = norm.affine();
                shapes.push(vec![g.len()]);
                shapes.push(vec![b.len()]);
            }
        }
        shapes
    }

    fn for_each_param(&self, f: &mut dyn FnMut(&[f64])) {
        for (layer, norm) in self.layers.iter().zip(&self.norms) {
            f(layer.weight.as_slice().expect("standard layout"));
            f(layer.bias.as_slice().unwrap());
            if let Some(norm) = norm {
                let (g, b) = norm.affine();
                f(g.as_slice().unwrap());
                f(b.as_slice().unwrap());
            }
        }
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for (layer, norm) in self.layers.iter_mut().zip(&mut self.norms) {
            f(layer.weight.as_slice_mut().expect("standard layout"));
            f(layer.bias.as_slice_mut().unwrap());
            if let Some(norm) = norm {
                let (g, b) = norm.affine_mut();
                f(g.as_slice_mut().unwrap());
                f(b.as_slice_mut().unwrap());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed_rng, Domain};
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = keyed_rng(seed, Domain::Init, 99);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn spec(norm: NormKind, layers: usize, plain_last: bool) -> MlpSpec {
        MlpSpec {
            input_dim: 5,
            hidden_dim: 6,
            output_dim: 3,
            num_layers: layers,
            norm,
            plain_last,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(vec![Linear::identity(3)], NormKind::None, true);
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(mlp.forward_eval(&x).unwrap(), x);
    }

    #[test]
    fn selu_constants() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.0507).abs() < 1e-4);
        assert!((selu(-50.0) + 1.7581).abs() < 1e-4);
        assert!((SELU_LAMBDA * SELU_ALPHA - 1.758_099_340_847_376_6).abs() < 1e-12);
    }

    #[test]
    fn group_norm_of_constant_row_outputs_bias() {
        let mut norm = Norm::new(NormKind::Group, 4).unwrap();
        if let Norm::Group(g) = &mut norm {
            g.beta = array![0.1, 0.2, 0.3, 0.4];
            g.gamma = array![5.0, 5.0, 5.0, 5.0];
        }
        let z = array![[2.0, 2.0, 2.0, 2.0]];
        let (y, _) = norm.forward(&z, Mode::Train);
        assert_eq!(y, array![[0.1, 0.2, 0.3, 0.4]]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = keyed_rng(0, Domain::Init, 0);
        let mlp = Mlp::new(&spec(NormKind::None, 2, true), &mut rng).unwrap();
        assert!(matches!(mlp.forward_eval(&Array2::zeros((2, 4))), Err(Error::Shape(_))));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = keyed_rng(1, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(NormKind::Batch, 2, false), &mut rng).unwrap();
        let x = random_matrix(10, 5, 1);
        mlp.forward(&x, Mode::Train).unwrap();
        let a = mlp.forward(&x, Mode::Eval).unwrap();
        let b = mlp.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    /// Central-difference check of `L = Σ W ⊙ mlp(x)` for every parameter.
    fn finite_difference_check(norm: NormKind, plain_last: bool, seed: u64) {
        let mut rng = keyed_rng(seed, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(norm, 2, plain_last), &mut rng).unwrap();
        let x = random_matrix(7, 5, seed);
        let w = random_matrix(7, 3, seed + 1000);
        let (_, trace) = mlp.forward_traced(&x, Mode::Train).unwrap();
        let (tape, dx) = mlp.backward(&trace, &w).unwrap();
        let analytic = tape.batch_gradient().summed();

        let loss = |m: &mut Mlp, x: &Array2<f64>| (&m.forward_traced(x, Mode::Train).unwrap().0 * &w).sum();
        let theta = mlp.flat_params();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut probe = mlp.clone();
            let mut t = theta.clone();
            t[i] += h;
            probe.load_flat_params(&t).unwrap();
            let up = loss(&mut probe, &x);
            t[i] -= 2.0 * h;
            probe.load_flat_params(&t).unwrap();
            let down = loss(&mut probe, &x);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} vs analytic {}", analytic[i]);
        }
        for ((r, c), &g) in dx.indexed_iter() {
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let up = loss(&mut mlp.clone(), &xp);
            xp[[r, c]] -= 2.0 * h;
            let down = loss(&mut mlp.clone(), &xp);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            finite_difference_check(NormKind::None, true, seed);
            finite_difference_check(NormKind::Group, false, seed);
            finite_difference_check(NormKind::Batch, true, seed);
        }
    }

    #[test]
    fn per_sample_gradients_sum_to_batch_gradient() {
        let mut rng = keyed_rng(3, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(NormKind::Group, 2, true), &mut rng).unwrap();
        let x = random_matrix(9, 5, 3);
        let up = random_matrix(9, 3, 4);
        let (_, trace) = mlp.forward_traced(&x, Mode::Train).unwrap();
        let (tape, _) = mlp.backward(&trace, &up).unwrap();
        let per = tape.per_sample_gradients().unwrap();
        assert_eq!(per.num_rows(), 9);
        let batch = tape.batch_gradient().summed();
        let diff = (&per.summed() - &batch).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-10, "max diff {diff}");
        assert_eq!(per.shapes, mlp.param_shapes());
    }

    #[test]
    fn per_sample_gradients_refuse_batch_statistics() {
        let mut rng = keyed_rng(3, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(NormKind::Batch, 2, true), &mut rng).unwrap();
        let x = random_matrix(4, 5, 3);
        let (_, trace) = mlp.forward_traced(&x, Mode::Train).unwrap();
        let (tape, _) = mlp.backward(&trace, &Array2::ones((4, 3))).unwrap();
        assert!(tape.per_sample_gradients().is_err());
        // Eval-mode batch norm is a fixed affine map per row.
        let (_, trace) = mlp.forward_traced(&x, Mode::Eval).unwrap();
        let (tape, _) = mlp.backward(&trace, &Array2::ones((4, 3))).unwrap();
        assert!(tape.per_sample_gradients().is_ok());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = keyed_rng(5, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(NormKind::Group, 2, false), &mut rng).unwrap();
        let x = random_matrix(3, 5, 5);
        let (_, trace) = mlp.forward_traced(&x, Mode::Train).unwrap();
        let (tape, dx) = mlp.backward(&trace, &Array2::zeros((3, 3))).unwrap();
        assert!(tape.batch_gradient().data.iter().all(|&v| v == 0.0));
        assert!(tape.per_sample_gradients().unwrap().data.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_respects_bound() {
        let mut rng = keyed_rng(0, Domain::Init, 0);
        let l = Linear::init(10, 6, &mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(l.weight.iter().all(|w| w.abs() <= bound));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = keyed_rng(2, Domain::Init, 0);
        let mut mlp = Mlp::new(&spec(NormKind::Batch, 2, false), &mut rng).unwrap();
        let mut theta = mlp.flat_params();
        assert_eq!(theta.len(), 5 * 6 + 6 + 12 + 6 * 3 + 3 + 6);
        theta.iter_mut().for_each(|v| *v += 1.0);
        mlp.load_flat_params(&theta).unwrap();
        assert_eq!(mlp.flat_params(), theta);
        assert!(mlp.load_flat_params(&theta[1..]).is_err());
    }
}
