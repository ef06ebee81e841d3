use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear activation `h(t) = max(s_plus t, 0) + min(s_minus t, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    s_plus: f64,
    s_minus: f64,
}

impl Activation {
    pub fn new(s_plus: f64, s_minus: f64) -> Result<Self> {
        let valid = s_plus.is_finite()
            && s_minus.is_finite()
            && s_plus > 0.0
            && s_minus >= 0.0
            && s_plus != s_minus;
        if !valid {
            return Err(Error::InvalidActivation { s_plus, s_minus });
        }
        Ok(Self { s_plus, s_minus })
    }

    pub fn relu() -> Self {
        Self {
            s_plus: 1.0,
            s_minus: 0.0,
        }
    }

    pub fn leaky(s_minus: f64) -> Result<Self> {
        Self::new(1.0, s_minus)
    }

    pub fn s_plus(&self) -> f64 {
        self.s_plus
    }

    pub fn s_minus(&self) -> f64 {
        self.s_minus
    }

    pub fn apply(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.s_plus * t
        } else {
            self.s_minus * t
        }
    }

    /// Derivative with the convention `h'(0) = s_plus`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.s_plus
        } else {
            self.s_minus
        }
    }

    /// Slope selected by a side `sigma` in {-1, +1}; `sigma = 0` maps to `s_plus`.
    pub fn slope(&self, sigma: i8) -> f64 {
        if sigma < 0 {
            self.s_minus
        } else {
            self.s_plus
        }
    }

    pub fn lower(&self) -> f64 {
        self.s_plus.min(self.s_minus)
    }

    pub fn upper(&self) -> f64 {
        self.s_plus.max(self.s_minus)
    }
}

impl Default for Activation {
    fn default() -> Self {
        Self::relu()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_slopes() {
        assert!(Activation::new(1.0, 1.0).is_err());
        assert!(Activation::new(0.0, 0.5).is_err());
        assert!(Activation::new(1.0, -0.1).is_err());
        assert!(Activation::new(f64::NAN, 0.0).is_err());
        assert!(Activation::new(0.5, 2.0).is_ok());
    }

    #[test]
    fn branches() {
        let relu = Activation::relu();
        assert_eq!(relu.apply(2.0), 2.0);
        assert_eq!(relu.apply(-1.0), 0.0);
        assert_eq!(relu.derivative(0.0), 1.0);
        let leaky = Activation::leaky(0.1).unwrap();
        assert_eq!(leaky.apply(-1.0), -0.1);
        assert_eq!(leaky.slope(-1), 0.1);
        assert_eq!(leaky.slope(1), 1.0);
        let inverted = Activation::new(0.5, 2.0).unwrap();
        assert_eq!((inverted.lower(), inverted.upper()), (0.5, 2.0));
    }
}
