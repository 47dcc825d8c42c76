use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;
pub const MAX_HESS: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Index of `(i, j)` in a row-major packed upper triangle of a `dim × dim`
/// symmetric matrix.
#[inline]
pub const fn tri_index(i: usize, j: usize, dim: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * dim - i + 1) / 2 + (j - i)
}

/// Addresses one component of a 2-jet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partial {
    Value,
    /// `∂u/∂x_i`
    D(usize),
    /// `∂²u/∂x_i∂x_j`; `D2(i, j)` and `D2(j, i)` name the same entry.
    D2(usize, usize),
}

impl Partial {
    /// Canonical form with `i <= j` for second derivatives.
    pub fn canonical(self) -> Partial {
        match self {
            Partial::D2(i, j) if i > j => Partial::D2(j, i),
            p => p,
        }
    }
}

/// Value, gradient and Hessian of a scalar field at a point.
///
/// Only the upper triangle of the Hessian is stored, so symmetry holds by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    dim: usize,
    pub value: f64,
    grad: [f64; MAX_DIM],
    hess: [f64; MAX_HESS],
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::config(
            "dim",
            format!("input dimension must be 1..={MAX_DIM}, got {dim}"),
        ))
    }
}

/// Coordinate jets for `point`: component `i` carries value `point[i]`,
/// unit gradient `e_i` and a zero Hessian.
pub fn jet_seed(point: &[f64]) -> Result<Vec<Jet2>> {
    let dim = point.len();
    check_dim(dim)?;
    Ok(point
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut j = Jet2::constant(dim, x);
            j.grad[i] = 1.0;
            j
        })
        .collect())
}

impl Jet2 {
    pub fn constant(dim: usize, value: f64) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Jet2 {
            dim,
            value,
            grad: [0.0; MAX_DIM],
            hess: [0.0; MAX_HESS],
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn from_parts(dim: usize, value: f64, grad: &[f64], hess_upper: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        let nh = dim * (dim + 1) / 2;
        if grad.len() != dim || hess_upper.len() != nh {
            return Err(Error::usage(format!(
                "jet parts have lengths {}/{}; expected {dim}/{nh}",
                grad.len(),
                hess_upper.len()
            )));
        }
        let mut j = Jet2::constant(dim, value);
        j.grad[..dim].copy_from_slice(grad);
        j.hess[..nh].copy_from_slice(hess_upper);
        Ok(j)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn grad(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn grad_slice(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[tri_index(i, j, self.dim)]
    }

    /// Packed upper triangle, row-major.
    pub fn hess_upper(&self) -> &[f64] {
        &self.hess[..self.dim * (self.dim + 1) / 2]
    }

    pub fn get(&self, p: Partial) -> f64 {
        match p {
            Partial::Value => self.value,
            Partial::D(i) => self.grad[i],
            Partial::D2(i, j) => self.hess(i, j),
        }
    }

    pub fn set(&mut self, p: Partial, v: f64) {
        match p {
            Partial::Value => self.value = v,
            Partial::D(i) => self.grad[i] = v,
            Partial::D2(i, j) => {
                let k = tri_index(i, j, self.dim);
                self.hess[k] = v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_slice().iter().all(|g| g.is_finite())
            && self.hess_upper().iter().all(|h| h.is_finite())
    }

    /// Jet of `f(self)` given `[f, f', f'']` evaluated at `self.value`.
    #[inline]
    pub fn chain(&self, f: [f64; 3]) -> Jet2 {
        let d = self.dim;
        let mut out = Jet2::constant(d, f[0]);
        for i in 0..d {
            out.grad[i] = f[1] * self.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri_index(i, j, d);
                out.hess[k] = f[2] * self.grad[i] * self.grad[j] + f[1] * self.hess[k];
            }
        }
        out
    }

    pub fn activate(&self, act: Activation) -> Jet2 {
        let d = act.derivs(self.value);
        self.chain([d[0], d[1], d[2]])
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain([s, c, -s])
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain([c, -s, -c])
    }

    pub fn tanh(&self) -> Jet2 {
        self.activate(Activation::Tanh)
    }

    pub fn sigmoid(&self) -> Jet2 {
        self.activate(Activation::Sigmoid)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.chain([e, e, e])
    }

    pub fn powi(&self, n: i32) -> Jet2 {
        let v = self.value;
        let nf = n as f64;
        let f2 = if n >= 2 || n < 0 {
            nf * (nf - 1.0) * v.powi(n - 2)
        } else {
            0.0
        };
        let f1 = if n != 0 { nf * v.powi(n - 1) } else { 0.0 };
        self.chain([v.powi(n), f1, f2])
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        let mut out = *self;
        out.value *= c;
        out.grad.iter_mut().for_each(|g| *g *= c);
        out.hess.iter_mut().for_each(|h| *h *= c);
        out
    }

    /// Quotient rule; fails when the denominator value is exactly zero.
    pub fn checked_div(&self, rhs: &Jet2) -> Result<Jet2> {
        if rhs.value == 0.0 {
            return Err(Error::DivideByZero { point: None });
        }
        let inv = 1.0 / rhs.value;
        let recip = rhs.chain([inv, -inv * inv, 2.0 * inv * inv * inv]);
        Ok(*self * recip)
    }

    /// `Σ_k weights[k]·args[k] + bias`.
    pub fn affine(weights: &[f64], args: &[Jet2], bias: f64) -> Result<Jet2> {
        let first = args
            .first()
            .ok_or_else(|| Error::usage("affine needs at least one operand"))?;
        if weights.len() != args.len() {
            return Err(Error::usage(format!(
                "affine has {} weights for {} operands",
                weights.len(),
                args.len()
            )));
        }
        let mut out = Jet2::constant(first.dim, bias);
        for (w, a) in weights.iter().zip(args) {
            if a.dim != first.dim {
                return Err(Error::usage("affine operands differ in dimension"));
            }
            out = out + a.scale(*w);
        }
        Ok(out)
    }

    /// Evaluate one primitive on jet operands.
    pub fn apply(op: &Primitive, args: &[Jet2]) -> Result<Jet2> {
        let dim = args
            .first()
            .map(|a| a.dim)
            .ok_or_else(|| Error::usage("primitive applied to no operands"))?;
        if args.iter().any(|a| a.dim != dim) {
            return Err(Error::usage("operands differ in dimension"));
        }
        let binary = |args: &[Jet2]| -> Result<(Jet2, Jet2)> {
            match args {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::usage(format!(
                    "binary primitive expects 2 operands, got {}",
                    args.len()
                ))),
            }
        };
        match op {
            Primitive::Add => binary(args).map(|(a, b)| a + b),
            Primitive::Sub => binary(args).map(|(a, b)| a - b),
            Primitive::Mul => binary(args).map(|(a, b)| a * b),
            Primitive::Div => {
                let (a, b) = binary(args)?;
                a.checked_div(&b)
            }
            Primitive::Activation(act) => match args {
                [a] => Ok(a.activate(*act)),
                _ => Err(Error::usage("activation expects one operand")),
            },
            Primitive::Affine { weights, bias } => Jet2::affine(weights, args, *bias),
        }
    }
}

/// Operations understood by [`Jet2::apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Activation(Activation),
    Affine { weights: Vec<f64>, bias: f64 },
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        debug_assert_eq!(self.dim, rhs.dim);
        self.value += rhs.value;
        for i in 0..MAX_DIM {
            self.grad[i] += rhs.grad[i];
        }
        for k in 0..MAX_HESS {
            self.hess[k] += rhs.hess[k];
        }
        self
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: f64) -> Jet2 {
        self.value += rhs;
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, rhs: f64) -> Jet2 {
        self.value -= rhs;
        self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        debug_assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut out = Jet2::constant(d, self.value * rhs.value);
        for i in 0..d {
            out.grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri_index(i, j, d);
                out.hess[k] = self.hess[k] * rhs.value
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i]
                    + self.value * rhs.hess[k];
            }
        }
        out
    }
}
