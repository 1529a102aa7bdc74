//! Forward-mode dual numbers carrying one directional derivative.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A number `value + ε·deriv` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualNumber {
    pub value: f64,
    pub deriv: f64,
}

impl DualNumber {
    pub const fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    pub const fn constant(value: f64) -> Self {
        Self { value, deriv: 0.0 }
    }

    /// Seeds an independent variable (`d/dx x = 1`).
    pub const fn variable(value: f64) -> Self {
        Self { value, deriv: 1.0 }
    }
}

impl fmt::Display for DualNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}ε", self.value, self.deriv)
    }
}

impl Add for DualNumber {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.deriv + rhs.deriv)
    }
}

impl Sub for DualNumber {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.deriv - rhs.deriv)
    }
}

impl Mul for DualNumber {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.value * rhs.deriv + self.deriv * rhs.value,
        )
    }
}

impl Div for DualNumber {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let v = self.value / rhs.value;
        Self::new(v, (self.deriv - v * rhs.deriv) / rhs.value)
    }
}

impl Neg for DualNumber {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.deriv)
    }
}

/// Arithmetic shared by the real and dual evaluators of [`crate::expr::ExprNode`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    /// Caller guarantees `re() >= 0` (and `> 0` where a derivative is carried).
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// True when a square root at this value has no finite derivative.
    fn sqrt_singular(&self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sqrt_singular(&self) -> bool {
        false
    }
}

impl Scalar for DualNumber {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn re(&self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        Self::new(self.value.sin(), self.deriv * self.value.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.value.cos(), -self.deriv * self.value.sin())
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, self.deriv * e)
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Self::new(s, self.deriv / (2.0 * s))
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        let p = self.value.powi(n - 1);
        Self::new(p * self.value, f64::from(n) * p * self.deriv)
    }
    fn sqrt_singular(&self) -> bool {
        self.value == 0.0 && self.deriv != 0.0
    }
}
