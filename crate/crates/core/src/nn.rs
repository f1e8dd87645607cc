//! Parameter storage, initialization, diagonal AdaGrad, dropout and a
//! finite-difference gradient checker.
//!
//! All randomness goes through [`Rng`], ChaCha with 8 rounds seeded from a
//! `u64` via `SeedableRng::seed_from_u64`, so draws replay across platforms.

use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};

/// The generator used for initialization, dropout, shuffling and sampling.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    XavierUniform,
    Zeros,
}

/// A named trainable tensor with its gradient buffer and AdaGrad state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    adagrad_acc: Vec<f64>,
}

impl ParamTensor {
    pub fn from_values(name: &str, shape: &[usize], values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(shape.to_vec()));
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                found: values.len(),
            });
        }
        Ok(ParamTensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
            grad: vec![0.0; n],
            adagrad_acc: vec![0.0; n],
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn adagrad_acc(&self) -> &[f64] {
        &self.adagrad_acc
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all dimensions after the first.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }
}

/// Creates a tensor filled according to `scheme`.
///
/// Xavier-uniform uses `fan_in = prod(shape[1..])` and
/// `fan_out = shape[0] * prod(shape[2..])`; a 1-d shape uses its length for
/// both.
pub fn init_params(
    name: &str,
    shape: &[usize],
    seed: u64,
    scheme: InitScheme,
) -> Result<ParamTensor> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    let n: usize = shape.iter().product();
    let values = match scheme {
        InitScheme::Zeros => vec![0.0; n],
        InitScheme::XavierUniform => {
            let bound = xavier_bound(shape);
            let mut rng = seeded_rng(seed);
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        }
    };
    ParamTensor::from_values(name, shape, values)
}

pub fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = if shape.len() == 1 {
        (shape[0], shape[0])
    } else {
        let receptive: usize = shape[2..].iter().product();
        (shape[1] * receptive, shape[0] * receptive)
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-2,
            epsilon: 1e-6,
        }
    }
}

/// One diagonal AdaGrad update, then clears the gradient.
///
/// Per element: `acc += g^2; value -= lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_step(p: &mut ParamTensor, cfg: &OptimizerConfig) -> Result<()> {
    if p.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    for ((v, g), acc) in p
        .values
        .iter_mut()
        .zip(p.grad.iter_mut())
        .zip(p.adagrad_acc.iter_mut())
    {
        *acc += *g * *g;
        if *acc > 0.0 {
            *v -= cfg.learning_rate * *g / (acc.sqrt() + cfg.epsilon);
        }
        *g = 0.0;
    }
    Ok(())
}

/// Inverted dropout. Identity outside training.
pub fn dropout(v: &[f64], p: f64, rng: &mut Rng, training: bool) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if !training || p == 0.0 {
        return Ok(v.to_vec());
    }
    let keep = 1.0 / (1.0 - p);
    Ok(v.iter()
        .map(|&x| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                x * keep
            }
        })
        .collect())
}

/// Anything that exposes a fixed, ordered list of tensors.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&ParamTensor>;
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Vec<ParamTensor> {
    fn tensors(&self) -> Vec<&ParamTensor> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.iter_mut().collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradients already stored in `params` with central
/// differences of `loss`, returning the worst relative error.
///
/// `loss` must be deterministic. Values are restored after each probe.
pub fn grad_check<P, F>(params: &mut P, h: f64, mut loss: F) -> Result<f64>
where
    P: ParamSet + ?Sized,
    F: FnMut(&P) -> f64,
{
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut worst = 0.0f64;
    for (ti, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            let original = params.tensors()[ti].values[j];
            let analytic = params.tensors()[ti].grad[j];

            params.tensors_mut()[ti].values[j] = original + h;
            let plus = loss(params);
            params.tensors_mut()[ti].values[j] = original - h;
            let minus = loss(params);
            params.tensors_mut()[ti].values[j] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

/// `out += W x` for a row-major matrix of shape `[rows, cols]`.
pub(crate) fn mat_vec_acc(out: &mut [f64], w: &ParamTensor, x: &[f64]) {
    let cols = w.cols();
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.values.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T dy`.
pub(crate) fn mat_t_vec_acc(out: &mut [f64], w: &ParamTensor, dy: &[f64]) {
    let cols = w.cols();
    for (d, row) in dy.iter().zip(w.values.chunks_exact(cols)) {
        if *d != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += d * a;
            }
        }
    }
}

/// `grad(W) += dy x^T`.
pub(crate) fn outer_acc(w: &mut ParamTensor, dy: &[f64], x: &[f64]) {
    let cols = w.cols();
    for (d, row) in dy.iter().zip(w.grad.chunks_exact_mut(cols)) {
        if *d != 0.0 {
            for (g, a) in row.iter_mut().zip(x) {
                *g += d * a;
            }
        }
    }
}

pub(crate) fn vec_acc(grad: &mut ParamTensor, dy: &[f64]) {
    for (g, d) in grad.grad.iter_mut().zip(dy) {
        *g += d;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamTensor {
        ParamTensor::from_values("s", &[1], vec![v]).unwrap()
    }

    #[test]
    fn zeros_init() {
        let p = init_params("b", &[3], 7, InitScheme::Zeros).unwrap();
        assert_eq!(p.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(p.grad(), &[0.0, 0.0, 0.0]);
        assert_eq!(p.adagrad_acc(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let bound = (6.0f64 / 500.0).sqrt();
        assert!((bound - 0.1095).abs() < 1e-4);
        for seed in [0, 1, 99] {
            let p = init_params("w", &[200, 300], seed, InitScheme::XavierUniform).unwrap();
            assert!(p.values().iter().all(|v| v.abs() <= bound));
            let q = init_params("w", &[200, 300], seed, InitScheme::XavierUniform).unwrap();
            assert_eq!(p, q);
        }
        let a = init_params("w", &[4, 4], 1, InitScheme::XavierUniform).unwrap();
        let b = init_params("w", &[4, 4], 2, InitScheme::XavierUniform).unwrap();
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn zero_sized_shapes_rejected() {
        assert!(init_params("w", &[3, 0], 0, InitScheme::Zeros).is_err());
        assert!(init_params("w", &[], 0, InitScheme::Zeros).is_err());
    }

    #[test]
    fn adagrad_two_scalar_steps() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            epsilon: 0.0,
        };
        let mut p = scalar(1.0);
        p.grad_mut()[0] = 1.0;
        adagrad_step(&mut p, &cfg).unwrap();
        assert_eq!(p.adagrad_acc()[0], 1.0);
        assert!((p.values()[0] - 0.9).abs() < 1e-12);
        assert_eq!(p.grad()[0], 0.0);

        p.grad_mut()[0] = 1.0;
        adagrad_step(&mut p, &cfg).unwrap();
        assert_eq!(p.adagrad_acc()[0], 2.0);
        assert!((p.values()[0] - (0.9 - 0.1 / 2f64.sqrt())).abs() < 1e-12);
        assert!((p.values()[0] - 0.829289).abs() < 1e-6);
    }

    #[test]
    fn adagrad_zero_gradient_is_noop() {
        let mut p = ParamTensor::from_values("w", &[2], vec![0.3, -0.2]).unwrap();
        adagrad_step(&mut p, &OptimizerConfig::default()).unwrap();
        assert_eq!(p.values(), &[0.3, -0.2]);
        assert_eq!(p.adagrad_acc(), &[0.0, 0.0]);
    }

    #[test]
    fn adagrad_sign_symmetry() {
        let cfg = OptimizerConfig::default();
        let mut a = ParamTensor::from_values("w", &[2], vec![0.0, 0.0]).unwrap();
        let mut b = a.clone();
        a.grad_mut().copy_from_slice(&[0.3, -1.2]);
        b.grad_mut().copy_from_slice(&[-0.3, 1.2]);
        adagrad_step(&mut a, &cfg).unwrap();
        adagrad_step(&mut b, &cfg).unwrap();
        assert_eq!(a.adagrad_acc(), b.adagrad_acc());
        for i in 0..2 {
            assert_eq!(a.values()[i], -b.values()[i]);
        }
    }

    #[test]
    fn adagrad_rejects_non_finite() {
        let mut p = ParamTensor::from_values("w_gate", &[2], vec![0.0, 0.0]).unwrap();
        p.grad_mut()[1] = f64::NAN;
        match adagrad_step(&mut p, &OptimizerConfig::default()) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w_gate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = seeded_rng(3);
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&v, 0.0, &mut rng, true).unwrap(), v);
        assert_eq!(dropout(&v, 0.5, &mut rng, false).unwrap(), v);
        assert!(dropout(&v, 1.0, &mut rng, true).is_err());
        assert!(dropout(&v, -0.1, &mut rng, false).is_err());
    }

    #[test]
    fn dropout_survivors_are_scaled() {
        let mut rng = seeded_rng(11);
        let out = dropout(&[2.0; 64], 0.2, &mut rng, true).unwrap();
        assert!(out.iter().all(|&x| x == 0.0 || (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn grad_check_quadratic() {
        let mut params = vec![ParamTensor::from_values("t", &[2], vec![1.0, 2.0]).unwrap()];
        params[0].grad_mut().copy_from_slice(&[2.0, 4.0]);
        let err = grad_check(&mut params, 1e-4, |p| {
            p[0].values().iter().map(|x| x * x).sum()
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
        assert_eq!(params[0].values(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_check_constant_and_corrupted() {
        let mut params = vec![ParamTensor::from_values("t", &[2], vec![1.0, 2.0]).unwrap()];
        assert_eq!(grad_check(&mut params, 1e-4, |_| 3.0).unwrap(), 0.0);

        params[0].grad_mut().copy_from_slice(&[2.1, 4.0]);
        let err = grad_check(&mut params, 1e-4, |p| {
            p[0].values().iter().map(|x| x * x).sum()
        })
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn grad_check_non_finite_loss() {
        let mut params = vec![scalar(1.0)];
        assert!(matches!(
            grad_check(&mut params, 1e-4, |_| f64::NAN),
            Err(Error::NonFiniteLoss)
        ));
    }
}
