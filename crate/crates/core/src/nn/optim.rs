use serde::{Deserialize, Serialize};

use super::{check_finite, NnError, Scalar};

/// Serializable optimizer state, stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OptimState {
    RmsProp { lr: f64, alpha: f64, eps: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64 },
}

pub trait Optimizer<T: Scalar>: Send {
    /// Updates `params` in place. A non-finite gradient leaves both the
    /// parameters and the optimizer state untouched.
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError>;
    fn state(&self) -> OptimState;
    /// Accumulator buffers in a fixed order.
    fn buffers(&self) -> Vec<&[T]>;
    fn buffers_mut(&mut self) -> Vec<&mut Vec<T>>;
}

/// Plain (uncentered) RMSProp.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    pub sq: Vec<T>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(n: usize, lr: f64, alpha: f64, eps: f64) -> RmsProp<T> {
        RmsProp { lr, alpha, eps, sq: vec![T::ZERO; n] }
    }

    pub fn with_defaults(n: usize) -> RmsProp<T> {
        RmsProp::new(n, 1e-3, 0.99, 1e-5)
    }
}

impl<T: Scalar> Optimizer<T> for RmsProp<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        check_finite(grads)?;
        let (lr, a, eps) = (T::from_f64(self.lr), T::from_f64(self.alpha), T::from_f64(self.eps));
        let one_a = T::ONE - a;
        for ((p, &g), s) in params.iter_mut().zip(grads).zip(self.sq.iter_mut()) {
            *s = a * *s + one_a * g * g;
            *p = *p - lr * g / (s.sqrt() + eps);
        }
        Ok(())
    }

    fn state(&self) -> OptimState {
        OptimState::RmsProp { lr: self.lr, alpha: self.alpha, eps: self.eps }
    }

    fn buffers(&self) -> Vec<&[T]> {
        vec![&self.sq]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        vec![&mut self.sq]
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64) -> Adam<T> {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![T::ZERO; n], v: vec![T::ZERO; n] }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        check_finite(grads)?;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let step = T::from_f64(self.lr / c1);
        let c2 = T::from_f64(c2);
        let eps = T::from_f64(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (T::ONE - b1) * g;
            *v = b2 * *v + (T::ONE - b2) * g * g;
            let denom = (*v / c2).sqrt() + eps;
            *p = *p - step * *m / denom;
        }
        Ok(())
    }

    fn state(&self) -> OptimState {
        OptimState::Adam { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, t: self.t }
    }

    fn buffers(&self) -> Vec<&[T]> {
        vec![&self.m, &self.v]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        vec![&mut self.m, &mut self.v]
    }
}

/// Rebuilds an optimizer from its stored state and buffers.
pub fn restore<T: Scalar>(state: &OptimState, n: usize, buffers: Vec<Vec<T>>) -> Box<dyn Optimizer<T>> {
    match *state {
        OptimState::RmsProp { lr, alpha, eps } => {
            let mut o = RmsProp::new(n, lr, alpha, eps);
            if let Some(sq) = buffers.into_iter().next() {
                o.sq = sq;
            }
            Box::new(o)
        }
        OptimState::Adam { lr, beta1, beta2, eps, t } => {
            let mut o = Adam::new(n, lr);
            o.beta1 = beta1;
            o.beta2 = beta2;
            o.eps = eps;
            o.t = t;
            let mut it = buffers.into_iter();
            if let (Some(m), Some(v)) = (it.next(), it.next()) {
                o.m = m;
                o.v = v;
            }
            Box::new(o)
        }
    }
}
