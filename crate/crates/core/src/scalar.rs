//! Scalar abstraction shared by the kinematics, the equations of motion and
//! the integrator.
//!
//! Everything upstream of the optimizer is written against [`Real`], so the
//! same code runs in `f32`, `f64`, and on the forward-mode [`Dual`] numbers
//! the adjoint gradient uses to differentiate one integration step.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{FloatConst, Num, NumAssign, One, Zero};

/// Real-valued scalar: field arithmetic from `num-traits` plus the handful of
/// elementary functions the model needs.
pub trait Real:
    Copy + Debug + PartialOrd + Num + NumAssign + Neg<Output = Self> + FloatConst + Send + Sync + 'static
{
    /// Lift an `f64` literal. Lossy for `f32`.
    fn lit(x: f64) -> Self;
    /// Primal value as `f64` (drops any derivative part).
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    fn powi(self, n: u32) -> Self {
        (0..n).fold(Self::one(), |acc, _| acc * self)
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn powi(self, n: u32) -> Self {
                <$t>::powi(self, n as i32)
            }
        }
    };
}

impl_real_float!(f32);
impl_real_float!(f64);

/// Forward-mode dual number carrying `N` directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub const fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }

    /// Independent variable number `k` (seed derivative 1 in slot `k`).
    pub fn variable(re: f64, k: usize) -> Self {
        let mut eps = [0.0; N];
        eps[k] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= df;
        }
        Self { re: f, eps }
    }
}

impl<const N: usize> PartialOrd for Dual<N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = self.eps[k] * rhs.re + self.re * rhs.eps[k];
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[k] - re * rhs.eps[k]) * inv;
        }
        Self { re, eps }
    }
}

impl<const N: usize> std::ops::Rem for Dual<N> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        // d(a mod b) = da - trunc(a/b) db
        let q = (self.re / rhs.re).trunc();
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(rhs.eps) {
            *a -= q * b;
        }
        Self { re: self.re % rhs.re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

macro_rules! dual_assign {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<const N: usize> std::ops::$tr for Dual<N> {
            #[inline]
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}
dual_assign!(AddAssign, add_assign, +);
dual_assign!(SubAssign, sub_assign, -);
dual_assign!(MulAssign, mul_assign, *);
dual_assign!(DivAssign, div_assign, /);
dual_assign!(RemAssign, rem_assign, %);

impl<const N: usize> Zero for Dual<N> {
    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.eps.iter().all(|e| *e == 0.0)
    }
}

impl<const N: usize> One for Dual<N> {
    fn one() -> Self {
        Self::constant(1.0)
    }
}

impl<const N: usize> Num for Dual<N> {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::constant)
    }
}

macro_rules! dual_consts {
    ($($name:ident),*) => {
        $(
            #[inline]
            fn $name() -> Self {
                Self::constant(f64::$name())
            }
        )*
    };
}

impl<const N: usize> FloatConst for Dual<N> {
    dual_consts!(
        E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4,
        FRAC_PI_6, FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
    );
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn lit(x: f64) -> Self {
        Self::constant(x)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(s, c)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(c, -s)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
    #[inline]
    fn abs(self) -> Self {
        if self.re < 0.0 {
            -self
        } else {
            self
        }
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.iter().all(|e| e.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<2>;

    #[test]
    fn product_and_quotient_rules() {
        let x = D2::variable(1.5, 0);
        let y = D2::variable(-0.7, 1);
        let f = x * y / (x + D2::lit(2.0));
        // f = xy/(x+2): df/dx = 2y/(x+2)^2, df/dy = x/(x+2)
        let d = 3.5_f64;
        assert!((f.eps[0] - 2.0 * -0.7 / (d * d)).abs() < 1e-15);
        assert!((f.eps[1] - 1.5 / d).abs() < 1e-15);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        let g = |x: f64| (x.sin() * x.cos()).abs().sqrt() + x.powi(3);
        let gd = |x: D2| (x.sin() * x.cos()).abs().sqrt() + x.powi(3);
        for &x0 in &[0.3, 1.1, 2.0, -0.8] {
            let h = 1e-6;
            let fd = (g(x0 + h) - g(x0 - h)) / (2.0 * h);
            let ad = gd(D2::variable(x0, 0));
            assert!((ad.re - g(x0)).abs() < 1e-14);
            assert!((ad.eps[0] - fd).abs() < 1e-7, "x0={x0}: {} vs {fd}", ad.eps[0]);
            assert_eq!(ad.eps[1], 0.0);
        }
    }

    #[test]
    fn powi_default_matches_float() {
        assert_eq!(Real::powi(2.0_f64, 5), 32.0);
        assert_eq!(D2::lit(2.0).powi(3).re, 8.0);
        assert_eq!(D2::lit(2.0).powi(0).re, 1.0);
    }
}
