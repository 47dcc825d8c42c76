use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pointwise nonlinearity shared by every layer of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sin,
    Cos,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Sin,
        Activation::Cos,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Sin => z.sin(),
            Activation::Cos => z.cos(),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// `[σ(z), σ'(z), σ''(z), σ'''(z)]`, all in closed form.
    ///
    /// The third derivative is needed by the reverse pass through a
    /// second-order jet.
    #[inline]
    pub fn derivs(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Sin => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Cos => {
                let (s, c) = z.sin_cos();
                [c, -s, -c, s]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                [t, d1, -2.0 * t * d1, -2.0 * d1 * (1.0 - 3.0 * t * t)]
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                let d1 = s * (1.0 - s);
                let d2 = d1 * (1.0 - 2.0 * s);
                [s, d1, d2, d2 * (1.0 - 2.0 * s) - 2.0 * d1 * d1]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sin => "sin",
            Activation::Cos => "cos",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sin" => Ok(Activation::Sin),
            "cos" => Ok(Activation::Cos),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::config(
                "activation",
                format!("unknown activation `{other}` (expected sin|cos|tanh|sigmoid)"),
            )),
        }
    }
}

/// Deliberate corruption of the analytic activation derivatives.
///
/// Only used to demonstrate that the derivative oracles catch a wrong
/// second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub second_derivative_scale: f64,
}

impl Fault {
    #[inline]
    pub(crate) fn apply(&self, mut d: [f64; 4]) -> [f64; 4] {
        d[2] *= self.second_derivative_scale;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    #[test]
    fn derivative_chain_matches_finite_differences() {
        let h = 1e-5;
        for act in Activation::ALL {
            for &z in &[-2.3, -0.4, 0.0, 0.5, 1.7] {
                let d = act.derivs(z);
                let fd1 = central(|x| act.derivs(x)[0], z, h);
                let fd2 = central(|x| act.derivs(x)[1], z, h);
                let fd3 = central(|x| act.derivs(x)[2], z, h);
                assert!((d[0] - act.eval(z)).abs() < 1e-15);
                assert!((d[1] - fd1).abs() < 1e-8, "{act} σ' at {z}");
                assert!((d[2] - fd2).abs() < 1e-8, "{act} σ'' at {z}");
                assert!((d[3] - fd3).abs() < 1e-8, "{act} σ''' at {z}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("Sigmoid".parse::<Activation>().unwrap(), Activation::Sigmoid);
        assert!("relu".parse::<Activation>().is_err());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
    }
}
