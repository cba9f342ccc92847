//! Scalar math shims and small dense helpers.
//!
//! With `std` enabled the float methods forward to the standard library;
//! without it they go through `libm`, keeping call sites identical.

/// Float operations used throughout the crate, available with and without `std`.
pub trait FloatExt {
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn floor(self) -> Self;
    fn ceil(self) -> Self;
    fn round(self) -> Self;
    fn hypot(self, other: Self) -> Self;
    fn powi_(self, n: i32) -> Self;
}

#[cfg(feature = "std")]
impl FloatExt for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    #[inline]
    fn floor(self) -> f64 {
        f64::floor(self)
    }
    #[inline]
    fn ceil(self) -> f64 {
        f64::ceil(self)
    }
    #[inline]
    fn round(self) -> f64 {
        f64::round(self)
    }
    #[inline]
    fn hypot(self, other: f64) -> f64 {
        f64::hypot(self, other)
    }
    #[inline]
    fn powi_(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
}

#[cfg(not(feature = "std"))]
impl FloatExt for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    #[inline]
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    #[inline]
    fn ceil(self) -> f64 {
        libm::ceil(self)
    }
    #[inline]
    fn round(self) -> f64 {
        libm::round(self)
    }
    #[inline]
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
    #[inline]
    fn powi_(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
}

/// Plane vector helpers over `[f64; 2]`; 1D geometry uses the first slot.
pub mod vec2 {
    #[allow(unused_imports)]
    use super::FloatExt;

    pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }

    pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
        a[0] * b[0] + a[1] * b[1]
    }

    pub fn norm(a: [f64; 2]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        norm(sub(a, b))
    }
}

/// Quintic smoothstep: 0 for `u <= 0`, 1 for `u >= 1`, C² in between.
///
/// The quintic profile has vanishing first and second derivatives at both
/// ends, so ramps built from it keep `|∇p|²/p` bounded near the support edge.
pub fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Derivative of [`smoothstep5`] with respect to `u`.
pub fn smoothstep5_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        u * u * (30.0 + u * (-60.0 + 30.0 * u))
    }
}
