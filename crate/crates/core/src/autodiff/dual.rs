use std::ops::{Add, Mul, Neg, Sub};

use super::tape::{NodeId, Tape};
use crate::error::Result;

/// Forward-mode number: a value and its derivative along one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    pub primal: f64,
    pub tangent: f64,
}

impl DualValue {
    pub fn new(primal: f64, tangent: f64) -> Self {
        Self { primal, tangent }
    }

    pub fn constant(primal: f64) -> Self {
        Self::new(primal, 0.0)
    }

    /// The differentiation variable itself.
    pub fn variable(primal: f64) -> Self {
        Self::new(primal, 1.0)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.primal.sin_cos();
        Self::new(s, c * self.tangent)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.primal.sin_cos();
        Self::new(c, -s * self.tangent)
    }

    pub fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Self::constant(1.0);
        }
        Self::new(self.primal.powi(k), k as f64 * self.primal.powi(k - 1) * self.tangent)
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(self.primal * c, self.tangent * c)
    }
}

impl Add for DualValue {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.primal + o.primal, self.tangent + o.tangent)
    }
}

impl Sub for DualValue {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.primal - o.primal, self.tangent - o.tangent)
    }
}

impl Mul for DualValue {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.primal * o.primal, self.primal * o.tangent + self.tangent * o.primal)
    }
}

impl Neg for DualValue {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.primal, -self.tangent)
    }
}

/// A primal node and its tangent node recorded on the same tape.
///
/// Propagating tangents as ordinary tape nodes keeps them differentiable, so
/// a loss built from tangents can still be reverse-differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DualNode {
    pub primal: NodeId,
    pub tangent: NodeId,
}

impl Tape {
    /// `x · w` for a dual `x` and a parameter `w` that does not depend on the
    /// differentiation variable.
    pub fn dual_matmul(&mut self, x: DualNode, w: NodeId) -> Result<DualNode> {
        Ok(DualNode {
            primal: self.matmul(x.primal, w)?,
            tangent: self.matmul(x.tangent, w)?,
        })
    }

    /// Adds a variable-independent term (a bias) to the primal only.
    pub fn dual_add_const(&mut self, x: DualNode, b: NodeId) -> Result<DualNode> {
        Ok(DualNode {
            primal: self.add(x.primal, b)?,
            tangent: x.tangent,
        })
    }

    /// `sin(ω x)` with tangent `ω cos(ω x) dx`.
    pub fn dual_sin_scaled(&mut self, x: DualNode, omega: f64) -> Result<DualNode> {
        let arg = if omega == 1.0 { x.primal } else { self.scale(x.primal, omega) };
        let primal = self.sin(arg);
        let cos = self.cos(arg);
        let dx = if omega == 1.0 { x.tangent } else { self.scale(x.tangent, omega) };
        let tangent = self.mul(cos, dx)?;
        Ok(DualNode { primal, tangent })
    }
}
