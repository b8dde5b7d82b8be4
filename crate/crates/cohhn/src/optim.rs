//! Parameter storage, initialization, and the Adam update rule.
//!
//! Parameters live in a [`ParamStore`] keyed by name (a `BTreeMap`, so
//! iteration order — and therefore everything derived from it — is
//! deterministic). Initialization draws from `U(-1/√d, 1/√d)` where `d`
//! is the column count, using a seeded ChaCha20 stream so the same seed
//! always produces the same model.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::NumericError;
use crate::tape::GradientMap;
use crate::tensor::Tensor;

/// Adam hyperparameters. Defaults are the standard
/// `lr=0.001, β₁=0.9, β₂=0.999, ε=1e-8`.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Named parameters plus Adam moment buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    first_moment: BTreeMap<String, Tensor>,
    second_moment: BTreeMap<String, Tensor>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericError> {
        self.params
            .get(name)
            .ok_or_else(|| NumericError::UnknownParam(name.to_string()))
    }

    /// Overwrite an existing parameter's value.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), NumericError> {
        match self.params.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(NumericError::UnknownParam(name.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    #[cfg(test)]
    fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first_moment.get(name)
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// One Adam update. Only parameters present in `grads` move;
    /// moment buffers are created lazily on first use. Bias correction
    /// uses a single step counter shared by all parameters.
    pub fn adam_step(&mut self, grads: &GradientMap, cfg: &AdamConfig) -> Result<(), NumericError> {
        for name in grads.keys() {
            if !self.params.contains_key(name) {
                return Err(NumericError::UnknownParam(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);

        for (name, grad) in grads {
            if !grad.all_finite() {
                return Err(NumericError::NonFiniteGradient);
            }
            let param = self.params.get_mut(name).expect("checked above");
            if grad.shape() != param.shape() {
                return Err(NumericError::ShapeMismatch {
                    op: "adam_step",
                    details: format!(
                        "parameter '{}' is {}, gradient is {}",
                        name,
                        param.shape_string(),
                        grad.shape_string()
                    ),
                });
            }
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));
            let p = param.data_mut();
            for ((pi, mi), (vi, gi)) in p
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut().iter_mut().zip(grad.data()))
            {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            if !param.all_finite() {
                return Err(NumericError::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}

/// Deterministic RNG for a seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Sample a `rows×cols` matrix from `U(-1/√cols, 1/√cols)`.
pub fn uniform_init(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let mut out = Tensor::zeros(rows, cols);
    for v in out.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_map(name: &str, g: Tensor) -> GradientMap {
        let mut m = GradientMap::new();
        m.insert(name.to_string(), g);
        m
    }

    #[test]
    fn first_step_moves_by_almost_exactly_lr() {
        // With fresh moments and bias correction, m̂=g and v̂=g², so the
        // update is lr·g/(|g|+ε) ≈ lr·sign(g) regardless of magnitude.
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(&[1.0, -2.0, 0.5]));
        let cfg = AdamConfig::default();
        store
            .adam_step(&grad_map("w", Tensor::row(&[0.3, -0.7, 4.0])), &cfg)
            .unwrap();
        let w = store.get("w").unwrap();
        let expected = [1.0 - 0.001, -2.0 + 0.001, 0.5 - 0.001];
        for (got, want) in w.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_gradient_steps_are_equal_sized() {
        // Bias correction cancels the moment decay exactly when the
        // gradient never changes, so each step has the same size.
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(&[0.0]));
        let cfg = AdamConfig::default();
        for _ in 0..3 {
            store
                .adam_step(&grad_map("w", Tensor::row(&[2.0])), &cfg)
                .unwrap();
        }
        let w = store.get("w").unwrap().data()[0];
        assert!((w - (-3.0 * 0.001)).abs() < 1e-8, "{w}");
    }

    #[test]
    fn two_steps_differ_from_one_double_lr_step() {
        // Minimize (x−3)² from x=0. Recomputing the gradient between
        // steps changes the moment mix, so two lr-steps do not equal a
        // single 2·lr step — even though both land near x ≈ 0.002.
        let gradient = |x: f64| 2.0 * (x - 3.0);

        let mut twice = ParamStore::new();
        twice.insert("x", Tensor::scalar(0.0));
        let lr = AdamConfig::default();
        for _ in 0..2 {
            let x = twice.get("x").unwrap().scalar_value();
            twice
                .adam_step(&grad_map("x", Tensor::scalar(gradient(x))), &lr)
                .unwrap();
        }

        let mut once = ParamStore::new();
        once.insert("x", Tensor::scalar(0.0));
        once.adam_step(
            &grad_map("x", Tensor::scalar(gradient(0.0))),
            &AdamConfig::with_lr(0.002),
        )
        .unwrap();

        let a = twice.get("x").unwrap().scalar_value();
        let b = once.get("x").unwrap().scalar_value();
        assert!((a - 0.002).abs() < 1e-4 && (b - 0.002).abs() < 1e-4);
        assert!((a - b).abs() > 1e-10, "paths coincided: {a} vs {b}");
    }

    #[test]
    fn zero_gradient_leaves_fresh_param_unchanged_then_decays_moments() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(1.5));
        let cfg = AdamConfig::default();

        // Fresh moments: zero gradient moves nothing.
        store
            .adam_step(&grad_map("w", Tensor::scalar(0.0)), &cfg)
            .unwrap();
        assert_eq!(store.get("w").unwrap().scalar_value(), 1.5);

        // After a real step the first moment is (1−β₁)·g; a following
        // zero-gradient step decays it by β₁.
        store
            .adam_step(&grad_map("w", Tensor::scalar(2.0)), &cfg)
            .unwrap();
        let m1 = store.first_moment("w").unwrap().scalar_value();
        store
            .adam_step(&grad_map("w", Tensor::scalar(0.0)), &cfg)
            .unwrap();
        let m2 = store.first_moment("w").unwrap().scalar_value();
        assert!((m1 - 0.2).abs() < 1e-12);
        assert!((m2 - 0.18).abs() < 1e-12);
    }

    #[test]
    fn params_without_gradients_do_not_move() {
        let mut store = ParamStore::new();
        store.insert("used", Tensor::row(&[1.0]));
        store.insert("idle", Tensor::row(&[5.0]));
        store
            .adam_step(
                &grad_map("used", Tensor::row(&[1.0])),
                &AdamConfig::default(),
            )
            .unwrap();
        assert_eq!(store.get("idle").unwrap().data(), &[5.0]);
        assert!(store.get("used").unwrap().data()[0] < 1.0);
    }

    #[test]
    fn gradient_for_unknown_param_is_an_error() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(&[1.0]));
        let err = store
            .adam_step(
                &grad_map("typo", Tensor::row(&[1.0])),
                &AdamConfig::default(),
            )
            .unwrap_err();
        assert!(matches!(err, NumericError::UnknownParam(_)));
    }

    #[test]
    fn same_seed_same_init_different_seed_different() {
        let a = uniform_init(&mut seeded_rng(7), 4, 8);
        let b = uniform_init(&mut seeded_rng(7), 4, 8);
        let c = uniform_init(&mut seeded_rng(8), 4, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_stays_within_bound_and_centers_near_zero() {
        let cols = 16;
        let t = uniform_init(&mut seeded_rng(42), 500, cols);
        let bound = 1.0 / (cols as f64).sqrt();
        assert!(t.data().iter().all(|v| v.abs() < bound));
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < bound / 10.0, "mean {mean}");
    }
}
