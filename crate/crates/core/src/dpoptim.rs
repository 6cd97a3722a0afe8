//! Adam and the DP-SGD gradient privatizer used by DP-Adam.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::GradientBundle;
use crate::rng::{keyed_rng, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn adam_step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
            self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
            let m_hat = self.first[i] / correction1;
            let v_hat = self.second[i] / correction2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip: f64,
    pub noise_std: f64,
    pub sampling_rate: f64,
    pub seed: u64,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) {
            return Err(Error::Validation(format!("clip {} must be positive", self.clip)));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::Validation(format!(
                "sampling rate {} is outside (0, 1]",
                self.sampling_rate
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Validation("gradient noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Poisson sampling: each of `0..n` is kept independently with probability `q`.
/// The batch may be empty.
pub fn poisson_sample(n: usize, q: f64, seed: u64, step: u64) -> Vec<usize> {
    if q >= 1.0 {
        return (0..n).collect();
    }
    let mut rng = keyed_rng(seed, Domain::BatchSampling, step);
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

/// DP-SGD privatization of per-sample gradients.
///
/// Each row is scaled by `min(1, C / ‖g‖)`, the rows are summed, Gaussian
/// noise of std `noise_std` is added per coordinate, and the result is divided
/// by the expected batch size `q · n_train`.
pub fn clip_and_noise(per_sample: &GradientBundle, cfg: &DpConfig, n_train: usize, step: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !per_sample.per_sample {
        return Err(Error::Shape("clip_and_noise needs per-sample gradients".into()));
    }
    let mut sum = vec![0.0; per_sample.num_params()];
    for row in per_sample.data.rows() {
        let norm = row.dot(&row).sqrt();
        let scale = if norm > cfg.clip { cfg.clip / norm } else { 1.0 };
        for (acc, &g) in sum.iter_mut().zip(row.iter()) {
            *acc += scale * g;
        }
    }
    if cfg.noise_std > 0.0 {
        let mut rng = keyed_rng(cfg.seed, Domain::GradientNoise, step);
        for acc in sum.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *acc += cfg.noise_std * z;
        }
    }
    let expected_batch = cfg.sampling_rate * n_train as f64;
    if expected_batch > 0.0 {
        sum.iter_mut().for_each(|v| *v /= expected_batch);
    }
    Ok(sum)
}

/// Per-row scaling used by [`clip_and_noise`], exposed for inspection.
pub fn clip_rows(per_sample: &GradientBundle, clip: f64) -> GradientBundle {
    let mut out = per_sample.clone();
    for mut row in out.data.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > clip {
            row *= clip / norm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn bundle(data: Array2<f64>) -> GradientBundle {
        GradientBundle {
            shapes: vec![vec![data.ncols()]],
            data,
            per_sample: true,
        }
    }

    fn cfg(clip: f64, noise_std: f64, q: f64) -> DpConfig {
        DpConfig {
            clip,
            noise_std,
            sampling_rate: q,
            seed: 1,
        }
    }

    #[test]
    fn full_rate_samples_everything() {
        assert_eq!(poisson_sample(5, 1.0, 3, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn inclusion_frequency_matches_rate() {
        let (n, q, steps) = (20, 0.3, 10_000u64);
        let mut counts = vec![0usize; n];
        let mut empty = 0;
        for step in 0..steps {
            let batch = poisson_sample(n, q, 42, step);
            empty += batch.is_empty() as usize;
            for i in batch {
                counts[i] += 1;
            }
        }
        let sd = (steps as f64 * q * (1.0 - q)).sqrt();
        for c in counts {
            assert!((c as f64 - q * steps as f64).abs() <= 3.0 * sd + 1.0, "count {c}");
        }
        // P(empty) = 0.7^20 ≈ 8e-4, so a handful of empty batches is expected.
        assert!(empty < 40);
        assert_eq!(poisson_sample(n, q, 42, 7), poisson_sample(n, q, 42, 7));
    }

    #[test]
    fn empty_batch_is_possible() {
        let found = (0..2000).any(|s| poisson_sample(3, 0.05, 1, s).is_empty());
        assert!(found);
    }

    #[test]
    fn clipping_binds_at_twice_the_norm() {
        let b = bundle(array![[3.0, 4.0]]); // norm 5 = 2C for C = 2.5
        let clipped = clip_rows(&b, 2.5);
        assert!((clipped.row_norms()[0] - 2.5).abs() < 1e-12);
        let out = clip_and_noise(&b, &cfg(2.5, 0.0, 1.0), 1, 0).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-12 && (out[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_small_gradients_pass_through() {
        let data = array![[0.1, -0.2], [0.3, 0.05], [0.0, 0.4]];
        let b = bundle(data.clone());
        // Realized batch 3, expected batch 0.5 * 8 = 4.
        let out = clip_and_noise(&b, &cfg(1.0, 0.0, 0.5), 8, 0).unwrap();
        let mean = data.mean_axis(ndarray::Axis(0)).unwrap() * (3.0 / 4.0);
        for (a, b) in out.iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_is_deterministic_per_step() {
        let b = bundle(array![[0.1, 0.2]]);
        let c = cfg(1.0, 1.0, 0.5);
        assert_eq!(clip_and_noise(&b, &c, 2, 5).unwrap(), clip_and_noise(&b, &c, 2, 5).unwrap());
        assert_ne!(clip_and_noise(&b, &c, 2, 5).unwrap(), clip_and_noise(&b, &c, 2, 6).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let b = bundle(array![[0.1]]);
        assert!(clip_and_noise(&b, &cfg(0.0, 1.0, 0.5), 2, 0).is_err());
        assert!(clip_and_noise(&b, &cfg(1.0, 1.0, 0.0), 2, 0).is_err());
        let batch = GradientBundle { per_sample: false, ..b };
        assert!(clip_and_noise(&batch, &cfg(1.0, 1.0, 0.5), 2, 0).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = OptimizerState::new(3, AdamConfig::with_lr(0.1));
        let mut p = vec![1.0, -2.0, 3.0];
        state.adam_step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert!(state.adam_step(&mut p, &[0.0; 2]).is_err());
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let lr = 0.01;
        let mut state = OptimizerState::new(1, AdamConfig::with_lr(lr));
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..500 {
            state.adam_step(&mut p, &[-3.0]).unwrap();
            let step = p[0] - prev;
            assert!((step - lr).abs() < 1e-6);
            prev = p[0];
        }
    }

    #[test]
    fn three_step_hand_trajectory() {
        // Hand computation, lr 0.1, gradients 1.0, -2.0, 0.5:
        // t=1: m=0.1     v=0.001      m̂=1            v̂=1            Δ=-0.1/(1+1e-8)
        // t=2: m=-0.11   v=0.004999   m̂=-0.11/0.19   v̂=0.004999/0.001999
        // t=3: m=-0.049  v=0.00524400 m̂=-0.049/0.271 v̂=0.0052440010/0.002997001
        let mut state = OptimizerState::new(1, AdamConfig::with_lr(0.1));
        let mut p = vec![0.5];
        let mut expected = 0.5;
        let cases = [
            (1.0, 1.0, 1.0),
            (-2.0, -0.11 / 0.19, 0.004999 / 0.001999),
            (0.5, -0.049 / 0.271, (0.999 * 0.004999 + 0.001 * 0.25) / (1.0 - 0.999f64.powi(3))),
        ];
        for (g, m_hat, v_hat) in cases {
            state.adam_step(&mut p, &[g]).unwrap();
            expected -= 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
            assert!((p[0] - expected).abs() < 1e-12, "{} vs {expected}", p[0]);
        }
    }

    proptest! {
        #[test]
        fn clipped_norms_never_exceed_bound(
            vals in proptest::collection::vec(-100.0f64..100.0, 40),
            clip in 0.01f64..10.0,
        ) {
            let b = bundle(Array2::from_shape_vec((8, 5), vals).unwrap());
            for n in clip_rows(&b, clip).row_norms() {
                prop_assert!(n <= clip + 1e-9);
            }
        }
    }
}
