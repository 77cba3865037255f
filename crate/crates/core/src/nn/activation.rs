use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied elementwise after a layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// `a / (1 + exp(-beta a))`; linear at `beta = 0`, tends to ReLU as `beta` grows.
    Swish { beta: f64 },
    Identity,
}

impl Activation {
    pub const DEFAULT_SWISH_BETA: f64 = 1.0;

    pub fn swish() -> Self {
        Activation::Swish {
            beta: Self::DEFAULT_SWISH_BETA,
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, Activation::Relu)
    }

    pub fn apply(&self, a: f64) -> f64 {
        match *self {
            Activation::Relu => relu(a),
            Activation::Swish { beta } => swish(a, beta),
            Activation::Identity => a,
        }
    }

    /// Exact derivative; errors at the ReLU kink.
    pub fn derivative(&self, a: f64) -> Result<f64> {
        match *self {
            Activation::Relu => {
                if a > 0.0 {
                    Ok(1.0)
                } else if a < 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::KinkDerivative)
                }
            }
            Activation::Swish { beta } => Ok(swish_derivative(a, beta)),
            Activation::Identity => Ok(1.0),
        }
    }
}

/// ReLU(0) = 0.
pub fn relu(a: f64) -> f64 {
    if a > 0.0 {
        a
    } else {
        0.0
    }
}

/// Numerically stable logistic function.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn swish(a: f64, beta: f64) -> f64 {
    a * logistic(beta * a)
}

/// `σ(βa) + βa σ(βa)(1 − σ(βa))`
pub fn swish_derivative(a: f64, beta: f64) -> f64 {
    let s = logistic(beta * a);
    s + beta * a * s * (1.0 - s)
}

/// Scalar activation value (`activation_scalar`).
pub fn activation_scalar(kind: Activation, a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("activation argument".into()));
    }
    Ok(kind.apply(a))
}

/// Scalar activation derivative (`activation_derivative`).
pub fn activation_derivative(kind: Activation, a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("activation argument".into()));
    }
    kind.derivative(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_values() {
        assert_eq!(activation_scalar(Activation::swish(), 0.0).unwrap(), 0.0);
        assert_eq!(activation_scalar(Activation::Swish { beta: 0.0 }, 4.0).unwrap(), 2.0);
        assert_eq!(activation_scalar(Activation::Relu, -2.0).unwrap(), 0.0);
        assert_eq!(activation_scalar(Activation::Relu, 3.0).unwrap(), 3.0);
    }

    #[test]
    fn relu_derivative_kink() {
        assert_eq!(activation_derivative(Activation::Relu, 2.0).unwrap(), 1.0);
        assert_eq!(activation_derivative(Activation::Relu, -2.0).unwrap(), 0.0);
        assert!(matches!(
            activation_derivative(Activation::Relu, 0.0),
            Err(Error::KinkDerivative)
        ));
    }

    #[test]
    fn swish_derivative_matches_finite_difference() {
        for &beta in &[0.0, 0.5, 1.0, 3.0] {
            for &a in &[-4.0, -0.3, 0.0, 0.7, 5.0] {
                let h = 1e-6;
                let fd = (swish(a + h, beta) - swish(a - h, beta)) / (2.0 * h);
                assert!((fd - swish_derivative(a, beta)).abs() < 1e-8, "beta {beta} a {a}");
            }
        }
        assert_eq!(swish_derivative(1.3, 0.0), 0.5);
    }

    #[test]
    fn logistic_is_stable_for_large_arguments() {
        assert_eq!(logistic(1000.0), 1.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert!(swish(-800.0, 1.0).abs() < 1e-300);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(activation_scalar(Activation::Relu, f64::NAN).is_err());
    }
}
