//! Extended reals `ℝ ∪ {+∞}`.
//!
//! Grid storage keeps raw `f64` with `f64::INFINITY` as the only non-finite
//! value allowed; `ExtReal` is the checked view over one such value.

use std::fmt;
use std::ops::Add;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INF: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Returns `None` for NaN and -inf.
    pub fn new(v: f64) -> Option<Self> {
        if v.is_nan() || v == f64::NEG_INFINITY {
            None
        } else {
            Some(ExtReal(v))
        }
    }

    pub fn finite(v: f64) -> Option<Self> {
        v.is_finite().then_some(ExtReal(v))
    }

    pub fn is_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        !self.is_inf()
    }

    pub fn value(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    pub fn raw(self) -> f64 {
        self.0
    }

    /// e^{-x}, with e^{-inf} = 0.
    pub fn exp_neg(self) -> f64 {
        if self.is_inf() {
            0.0
        } else {
            (-self.0).exp()
        }
    }

    /// Multiplication by a nonnegative scalar; 0 * inf = 0 is *not* assumed,
    /// the result stays +inf.
    pub fn scale(self, c: f64) -> ExtReal {
        debug_assert!(c >= 0.0);
        if self.is_inf() {
            self
        } else {
            ExtReal(self.0 * c)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_inf() || rhs.is_inf() {
            ExtReal::INF
        } else {
            ExtReal(self.0 + rhs.0)
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        debug_assert!(rhs.is_finite());
        self + ExtReal(rhs)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}
