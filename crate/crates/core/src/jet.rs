//! Truncated univariate Taylor arithmetic.
//!
//! A [`Jet`] of order `K` stores the Taylor coefficients `c_0..=c_K` of a
//! function about a base point, `f(t0 + h) = sum c_i h^i + O(h^(K+1))`.
//! Every quantity evaluated along a curve travels through the engine as a jet,
//! so derivatives along the curve come for free from the coefficients.
//!
//! Binary operators (`+ - * /`) are implemented for convenience and panic on
//! order mismatch, the way shape mismatches panic in array libraries. The
//! `checked_*` methods and [`jet_arith`] report the mismatch as an error.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("division by a jet with zero constant term")]
    ZeroDivisor,
    #[error("{function} is undefined at constant term {value}")]
    Domain { function: &'static str, value: f64 },
    #[error("jet order exhausted")]
    OrderExhausted,
    #[error("derivative index {index} exceeds jet order {order}")]
    IndexOutOfRange { index: usize, order: usize },
    #[error("series reversion needs a nonzero linear coefficient")]
    NotInvertible,
}

/// Univariate analytic functions available for jet composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analytic {
    Sqrt,
    Ln,
    Exp,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    /// `a^p` for a real constant exponent `p`; requires a positive base.
    PowConst(f64),
}

#[derive(Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{:?}", self.coeffs)
    }
}

/// Threshold below which `cos(a0)` is treated as a pole of `tan`.
const POLE_EPS: f64 = 1e-12;

impl Jet {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet has at least one coefficient");
        Jet { coeffs }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Jet { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Jet::constant(0.0, order)
    }

    /// The identity function `t` expanded about `t0`.
    pub fn variable(t0: f64, order: usize) -> Self {
        let mut j = Jet::constant(t0, order);
        if order >= 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Constant term, i.e. the value at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `i`-th derivative at the base point, `i! * c_i`.
    pub fn derivative(&self, i: usize) -> Result<f64, JetError> {
        let c = self.coeffs.get(i).ok_or(JetError::IndexOutOfRange {
            index: i,
            order: self.order(),
        })?;
        Ok(c * factorial(i))
    }

    /// Jet of `f'` (one order lower).
    pub fn shift_derivative(&self) -> Result<Jet, JetError> {
        if self.order() == 0 {
            return Err(JetError::OrderExhausted);
        }
        let coeffs = (1..self.coeffs.len())
            .map(|i| i as f64 * self.coeffs[i])
            .collect();
        Ok(Jet { coeffs })
    }

    /// Antiderivative with the given constant term (one order higher).
    pub fn integrate(&self, c0: f64) -> Jet {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(c0);
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c / (i as f64 + 1.0)),
        );
        Jet { coeffs }
    }

    /// Drops coefficients above `order`. Panics if `order` exceeds the current order.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(
            order <= self.order(),
            "cannot truncate a jet of order {} to order {}",
            self.order(),
            order
        );
        Jet {
            coeffs: self.coeffs[..=order].to_vec(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn same_order(&self, rhs: &Jet) -> Result<(), JetError> {
        if self.order() == rhs.order() {
            Ok(())
        } else {
            Err(JetError::OrderMismatch {
                left: self.order(),
                right: rhs.order(),
            })
        }
    }

    pub fn checked_add(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_order(rhs)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn checked_sub(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_order(rhs)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn checked_mul(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_order(rhs)?;
        let n = self.coeffs.len();
        let (a, b) = (&self.coeffs, &rhs.coeffs);
        // seeded with the j = 0 term so that order-0 products are plain f64 products
        let coeffs = (0..n)
            .map(|k| (1..=k).fold(a[0] * b[k], |acc, j| acc + a[j] * b[k - j]))
            .collect();
        Ok(Jet { coeffs })
    }

    pub fn checked_div(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.same_order(rhs)?;
        let b = &rhs.coeffs;
        if b[0] == 0.0 {
            return Err(JetError::ZeroDivisor);
        }
        let n = self.coeffs.len();
        let mut c = vec![0.0; n];
        for k in 0..n {
            let s: f64 = (1..=k).map(|j| b[j] * c[k - j]).sum();
            c[k] = (self.coeffs[k] - s) / b[0];
        }
        Ok(Jet { coeffs: c })
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        Jet::constant(1.0, self.order()).checked_div(self)
    }

    /// Integer power by repeated squaring; negative exponents go through [`Jet::recip`].
    pub fn powi(&self, n: i32) -> Result<Jet, JetError> {
        let mut base = self.clone();
        let mut acc = Jet::constant(1.0, self.order());
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            Ok(acc)
        }
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a = &self.coeffs;
        if a[0] < 0.0 || (a[0] == 0.0 && self.order() > 0) {
            return Err(JetError::Domain {
                function: "sqrt",
                value: a[0],
            });
        }
        let n = a.len();
        let mut b = vec![0.0; n];
        b[0] = a[0].sqrt();
        for k in 1..n {
            let s: f64 = (1..k).map(|j| b[j] * b[k - j]).sum();
            b[k] = (a[k] - s) / (2.0 * b[0]);
        }
        Ok(Jet { coeffs: b })
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = &self.coeffs;
        if a[0] <= 0.0 {
            return Err(JetError::Domain {
                function: "ln",
                value: a[0],
            });
        }
        let n = a.len();
        let mut b = vec![0.0; n];
        b[0] = a[0].ln();
        for k in 1..n {
            let s: f64 = (1..k).map(|j| j as f64 * b[j] * a[k - j]).sum();
            b[k] = (k as f64 * a[k] - s) / (k as f64 * a[0]);
        }
        Ok(Jet { coeffs: b })
    }

    pub fn exp(&self) -> Jet {
        let a = &self.coeffs;
        let n = a.len();
        let mut b = vec![0.0; n];
        b[0] = a[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| j as f64 * a[j] * b[k - j]).sum();
            b[k] = s / k as f64;
        }
        Jet { coeffs: b }
    }

    /// `(sin a, cos a)` or, with `hyperbolic`, `(sinh a, cosh a)`.
    fn sin_cos_pair(&self, hyperbolic: bool) -> (Jet, Jet) {
        let a = &self.coeffs;
        let n = a.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        if hyperbolic {
            s[0] = a[0].sinh();
            c[0] = a[0].cosh();
        } else {
            s[0] = a[0].sin();
            c[0] = a[0].cos();
        }
        let sign = if hyperbolic { 1.0 } else { -1.0 };
        for k in 1..n {
            let ds: f64 = (1..=k).map(|j| j as f64 * a[j] * c[k - j]).sum();
            let dc: f64 = (1..=k).map(|j| j as f64 * a[j] * s[k - j]).sum();
            s[k] = ds / k as f64;
            c[k] = sign * dc / k as f64;
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos_pair(false).0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos_pair(false).1
    }

    pub fn sinh(&self) -> Jet {
        self.sin_cos_pair(true).0
    }

    pub fn cosh(&self) -> Jet {
        self.sin_cos_pair(true).1
    }

    /// `t' = (1 + sign * t^2) a'`, shared by `tan` (sign +1) and `tanh` (sign -1).
    fn tan_like(&self, t0: f64, sign: f64) -> Jet {
        let a = &self.coeffs;
        let n = a.len();
        let mut t = vec![0.0; n];
        let mut w = vec![0.0; n];
        t[0] = t0;
        w[0] = 1.0 + sign * t0 * t0;
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| j as f64 * a[j] * w[k - j]).sum();
            t[k] = s / k as f64;
            let sq: f64 = (0..=k).map(|i| t[i] * t[k - i]).sum();
            w[k] = sign * sq;
        }
        Jet { coeffs: t }
    }

    pub fn tan(&self) -> Result<Jet, JetError> {
        let a0 = self.coeffs[0];
        if a0.cos().abs() < POLE_EPS {
            return Err(JetError::Domain {
                function: "tan",
                value: a0,
            });
        }
        Ok(self.tan_like(a0.tan(), 1.0))
    }

    pub fn tanh(&self) -> Jet {
        let a0 = self.coeffs[0];
        self.tan_like(a0.tanh(), -1.0)
    }

    /// `a^p` for real `p`; the base must have a positive constant term.
    pub fn powf(&self, p: f64) -> Result<Jet, JetError> {
        let a = &self.coeffs;
        if a[0] <= 0.0 {
            return Err(JetError::Domain {
                function: "pow",
                value: a[0],
            });
        }
        let n = a.len();
        let mut b = vec![0.0; n];
        b[0] = a[0].powf(p);
        for k in 1..n {
            let s: f64 = (1..=k)
                .map(|j| ((p + 1.0) * j as f64 - k as f64) * a[j] * b[k - j])
                .sum();
            b[k] = s / (k as f64 * a[0]);
        }
        Ok(Jet { coeffs: b })
    }

    pub fn apply(&self, f: Analytic) -> Result<Jet, JetError> {
        match f {
            Analytic::Sqrt => self.sqrt(),
            Analytic::Ln => self.ln(),
            Analytic::Exp => Ok(self.exp()),
            Analytic::Sin => Ok(self.sin()),
            Analytic::Cos => Ok(self.cos()),
            Analytic::Tan => self.tan(),
            Analytic::Sinh => Ok(self.sinh()),
            Analytic::Cosh => Ok(self.cosh()),
            Analytic::Tanh => Ok(self.tanh()),
            Analytic::PowConst(p) => self.powf(p),
        }
    }

    /// Substitutes `inner` into the series of `self`.
    ///
    /// `self` is read as the expansion of `f` about `inner.value()`, so the
    /// result is the jet of `f(inner(h))`, truncated to `inner.order()`.
    pub fn compose(&self, inner: &Jet) -> Result<Jet, JetError> {
        let k = inner.order();
        if self.order() < k {
            return Err(JetError::OrderMismatch {
                left: self.order(),
                right: k,
            });
        }
        let mut delta = inner.clone();
        delta.coeffs[0] = 0.0;
        let mut acc = Jet::constant(self.coeffs[k], k);
        for i in (0..k).rev() {
            acc = &acc * &delta;
            acc.coeffs[0] += self.coeffs[i];
        }
        Ok(acc)
    }

    /// Jet of the inverse function about `self.value()`, with constant term `t0`.
    ///
    /// If `self` expands `g` about `t0`, the result expands `g^{-1}` about `g(t0)`.
    pub fn invert(&self, t0: f64) -> Result<Jet, JetError> {
        let k = self.order();
        if k == 0 {
            return Ok(Jet::constant(t0, 0));
        }
        let a1 = self.coeffs[1];
        if a1 == 0.0 {
            return Err(JetError::NotInvertible);
        }
        let ident = Jet::variable(0.0, k);
        let mut phi = ident.scale(1.0 / a1);
        for _ in 1..k {
            // phi <- (h - sum_{j>=2} a_j phi^j) / a1
            let mut higher = Jet::zero(k);
            let mut pw = &phi * &phi;
            for j in 2..=k {
                higher += &pw.scale(self.coeffs[j]);
                pw = &pw * &phi;
            }
            phi = (&ident - &higher).scale(1.0 / a1);
        }
        phi.coeffs[0] = t0;
        Ok(phi)
    }
}

/// Fallible binary arithmetic between jets of equal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn jet_arith(a: &Jet, b: &Jet, op: ArithOp) -> Result<Jet, JetError> {
    match op {
        ArithOp::Add => a.checked_add(b),
        ArithOp::Sub => a.checked_sub(b),
        ArithOp::Mul => a.checked_mul(b),
        ArithOp::Div => a.checked_div(b),
    }
}

pub(crate) fn factorial(i: usize) -> f64 {
    (1..=i).fold(1.0, |acc, k| acc * k as f64)
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                match self.$checked(rhs) {
                    Ok(j) => j,
                    Err(e) => panic!("{}", e),
                }
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);
forward_binop!(Div, div, checked_div);

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] += s;
        j
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        assert_eq!(self.order(), rhs.order(), "jet order mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self += &rhs;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        assert_eq!(self.order(), rhs.order(), "jet order mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl SubAssign<Jet> for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self -= &rhs;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, s: f64) {
        for a in &mut self.coeffs {
            *a *= s;
        }
    }
}

/// Sum of pairwise products of two equally long jet slices.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let mut acc = &a[0] * &b[0];
    for (x, y) in a.iter().zip(b).skip(1) {
        acc += x * y;
    }
    acc
}
