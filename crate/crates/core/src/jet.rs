//! Forward-mode derivative carrier for one segment's three coordinates.
//!
//! A [`Jet`] tracks a scalar `f(q)` along a trajectory `q(t)` together with
//! its time derivative, its gradient with respect to the segment coordinates,
//! and the time derivative of that gradient:
//! `(f, ḟ, ∂f/∂q, d/dt ∂f/∂q)`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Vector3;

use crate::smooth::Taylor2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub val: f64,
    pub dot: f64,
    pub grad: Vector3<f64>,
    pub grad_dot: Vector3<f64>,
}

impl Jet {
    pub fn constant(val: f64) -> Self {
        Self {
            val,
            dot: 0.0,
            grad: Vector3::zeros(),
            grad_dot: Vector3::zeros(),
        }
    }

    /// Coordinate `index` scaled by `scale`, moving at rate `rate`.
    pub fn coordinate(index: usize, value: f64, rate: f64, scale: f64) -> Self {
        let mut grad = Vector3::zeros();
        grad[index] = scale;
        Self {
            val: scale * value,
            dot: scale * rate,
            grad,
            grad_dot: Vector3::zeros(),
        }
    }

    /// Chain rule through a scalar function given its value and two derivatives
    /// at `self.val`.
    pub fn compose(self, f: Taylor2) -> Self {
        Self {
            val: f.value,
            dot: f.d1 * self.dot,
            grad: self.grad * f.d1,
            grad_dot: self.grad * (f.d2 * self.dot) + self.grad_dot * f.d1,
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            val: self.val * k,
            dot: self.dot * k,
            grad: self.grad * k,
            grad_dot: self.grad_dot * k,
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            val: self.val + o.val,
            dot: self.dot + o.dot,
            grad: self.grad + o.grad,
            grad_dot: self.grad_dot + o.grad_dot,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            val: self.val * o.val,
            dot: self.dot * o.val + self.val * o.dot,
            grad: self.grad * o.val + o.grad * self.val,
            grad_dot: self.grad_dot * o.val
                + self.grad * o.dot
                + o.grad * self.dot
                + o.grad_dot * self.val,
        }
    }
}
