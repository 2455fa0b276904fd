//! Dense tanh networks with hand-written backprop.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing
//! its weight matrix row-major as `in x out` followed by its bias. Hidden
//! layers use tanh, the output layer is linear.

pub mod checkpoint;
pub mod optim;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use rand::Rng;
use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, NetKind};
pub use optim::{Adam, OptimState, Optimizer, RmsProp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("expected input width {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("gradient has a non-finite entry at {0}")]
    NonFinite(usize),
}

/// Floating-point type a network computes in.
pub trait Scalar:
    Copy + Default + Debug + PartialOrd + Send + Sync + 'static + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    /// `c = alpha * a.b + beta * c` for row-major `a: m x k`, `b: k x n`,
    /// with optional transposes given as strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, beta: Self, c: &mut [Self]);
}

macro_rules! scalar_impl {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the asserts above bound every index the strides reach.
                unsafe {
                    $gemm(
                        m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }
        }
    };
}

scalar_impl!(f32, matrixmultiply::sgemm);
scalar_impl!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Layer outputs kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    rows: usize,
    acts: Vec<Vec<T>>,
}

impl<T> Cache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("at least input and output")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> Mlp<T> {
    /// Weights and biases uniform in +-1/sqrt(fan_in).
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Mlp<T> {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(T::from_f64(rng.gen_range(-bound..bound)));
            }
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn zeros(sizes: &[usize]) -> Mlp<T> {
        Mlp { sizes: sizes.to_vec(), params: vec![T::ZERO; param_count(sizes)] }
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Mlp<T>, NnError> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NnError::Shape { expected, got: params.len() });
        }
        Ok(Mlp { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// (weights, bias) offsets of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let start = param_count(&self.sizes[..=l]);
        (start, start + self.sizes[l] * self.sizes[l + 1])
    }

    fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (w, b) = self.offsets(l);
        let n = self.sizes[l + 1];
        (&self.params[w..b], &self.params[b..b + n])
    }

    fn dense(&self, l: usize, x: &[T], rows: usize) -> Vec<T> {
        let (w, b) = self.layer(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(b);
        }
        T::gemm(rows, i, o, x, false, w, false, T::ONE, &mut y);
        y
    }

    fn activate(&self, l: usize, y: &mut [T]) {
        if l + 1 < self.layers() {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
    }

    /// Runs `rows` inputs stored row-major in `x`.
    pub fn forward(&self, x: &[T], rows: usize) -> Result<Cache<T>, NnError> {
        let expected = rows * self.input_dim();
        if x.len() != expected {
            return Err(NnError::Shape { expected, got: x.len() });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let mut y = self.dense(l, acts.last().unwrap(), rows);
            self.activate(l, &mut y);
            acts.push(y);
        }
        Ok(Cache { rows, acts })
    }

    /// Outputs only, without keeping intermediate layers.
    pub fn predict(&self, x: &[T], rows: usize) -> Result<Vec<T>, NnError> {
        let expected = rows * self.input_dim();
        if x.len() != expected {
            return Err(NnError::Shape { expected, got: x.len() });
        }
        let mut cur = x.to_vec();
        for l in 0..self.layers() {
            cur = self.dense(l, &cur, rows);
            self.activate(l, &mut cur);
        }
        Ok(cur)
    }

    /// Outputs for inputs that share a common prefix: each row is `prefix`
    /// followed by one `suffix_dim` chunk of `suffixes`. The prefix part of
    /// the first layer is computed once and the suffix part is added
    /// sparsely, which suits one state scored against many actions.
    pub fn predict_shared_prefix(&self, prefix: &[T], suffixes: &[T], suffix_dim: usize) -> Result<Vec<T>, NnError> {
        let in_dim = self.input_dim();
        if prefix.len() + suffix_dim != in_dim || suffix_dim == 0 || !suffixes.len().is_multiple_of(suffix_dim) {
            return Err(NnError::Shape { expected: in_dim, got: prefix.len() + suffix_dim });
        }
        let rows = suffixes.len() / suffix_dim;
        let (w, b) = self.layer(0);
        let o = self.sizes[1];
        let p = prefix.len();
        let mut base = b.to_vec();
        T::gemm(1, p, o, prefix, false, &w[..p * o], false, T::ONE, &mut base);
        let mut cur = Vec::with_capacity(rows * o);
        for r in 0..rows {
            let start = cur.len();
            cur.extend_from_slice(&base);
            let row = &mut cur[start..];
            for (j, &a) in suffixes[r * suffix_dim..(r + 1) * suffix_dim].iter().enumerate() {
                if a != T::ZERO {
                    let wrow = &w[(p + j) * o..(p + j + 1) * o];
                    for (y, &wv) in row.iter_mut().zip(wrow) {
                        *y += a * wv;
                    }
                }
            }
        }
        self.activate(0, &mut cur);
        for l in 1..self.layers() {
            cur = self.dense(l, &cur, rows);
            self.activate(l, &mut cur);
        }
        Ok(cur)
    }

    /// Parameter gradients of `sum(out_grad * output)`.
    pub fn backward(&self, cache: &Cache<T>, out_grad: &[T]) -> Result<Vec<T>, NnError> {
        let rows = cache.rows;
        let expected = rows * self.output_dim();
        if out_grad.len() != expected {
            return Err(NnError::Shape { expected, got: out_grad.len() });
        }
        let mut grads = vec![T::ZERO; self.params.len()];
        let mut delta = out_grad.to_vec();
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = self.offsets(l);
            let x = &cache.acts[l];
            T::gemm(i, rows, o, x, true, &delta, false, T::ZERO, &mut grads[wo..bo]);
            let gb = &mut grads[bo..bo + o];
            for r in 0..rows {
                for (g, &d) in gb.iter_mut().zip(&delta[r * o..(r + 1) * o]) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut prev = vec![T::ZERO; rows * i];
                T::gemm(rows, o, i, &delta, false, &self.params[wo..bo], true, T::ZERO, &mut prev);
                // x holds tanh outputs of the previous layer
                for (p, &a) in prev.iter_mut().zip(x) {
                    *p = *p * (T::ONE - a * a);
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp { sizes: self.sizes.clone(), params: self.params.iter().map(|p| U::from_f64(p.to_f64())).collect() }
    }
}

/// Fails on the first non-finite gradient entry.
pub fn check_finite<T: Scalar>(grads: &[T]) -> Result<(), NnError> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(NnError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Widths of the value network used by the Monte Carlo learner.
pub fn q_net_sizes(hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![crate::features::Q_INPUT_DIM];
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

/// Widths of the policy/value network over `k` candidate slots; the last
/// layer has `k` logits followed by one value output.
pub fn ppo_net_sizes(hidden: &[usize], k: usize) -> Vec<usize> {
    let mut s = vec![crate::features::ppo_input_dim(k)];
    s.extend_from_slice(hidden);
    s.push(k + 1);
    s
}

pub const Q_HIDDEN: [usize; 4] = [512; 4];
pub const PPO_HIDDEN: [usize; 4] = [512, 512, 512, 256];
