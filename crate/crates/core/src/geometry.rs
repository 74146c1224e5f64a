//! Kinematics of the elliptic-torus track, the fixed riding line and the two
//! point masses (bike on the surface, rider at the end of a link of length
//! `l` along the line's "up" direction).
//!
//! The azimuth `phi` is never wrapped so that it measures distance travelled
//! over several laps.
//!
//! The link direction used here, `(-cos b cos phi, -cos b sin phi, sin b)`, is
//! exactly unit length but is only normal to the stretched torus where
//! `phi` is a multiple of `pi/2`. It is kept verbatim because the equations of
//! motion are derived from it.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shape constants of the elliptic torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackGeometry<T = f64> {
    /// Distance from the torus centre to the tube centre, `R` [m].
    pub major_radius: T,
    /// Tube radius `r` [m].
    pub tube_radius: T,
    /// Stretch of the torus along the second axis, `lambda` [-].
    pub stretch: T,
}

impl<T: Real> TrackGeometry<T> {
    pub fn new(major_radius: T, tube_radius: T, stretch: T) -> Result<Self> {
        let g = Self { major_radius, tube_radius, stretch };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (big, small, lam) = (self.major_radius, self.tube_radius, self.stretch);
        if !(big.is_finite() && small.is_finite() && lam.is_finite()) {
            return Err(Error::invalid("track geometry must be finite"));
        }
        if !(small > T::zero()) {
            return Err(Error::invalid("tube radius r must be positive"));
        }
        if !(big > small) {
            return Err(Error::invalid("major radius R must exceed tube radius r"));
        }
        if !(lam >= T::one()) {
            return Err(Error::invalid("stretch lambda must be >= 1"));
        }
        Ok(())
    }

    /// Lossy conversion to another scalar type.
    pub fn cast<U: Real>(&self) -> TrackGeometry<U> {
        TrackGeometry {
            major_radius: U::lit(self.major_radius.value()),
            tube_radius: U::lit(self.tube_radius.value()),
            stretch: U::lit(self.stretch.value()),
        }
    }
}

impl Default for TrackGeometry<f64> {
    fn default() -> Self {
        Self { major_radius: 3.0, tube_radius: 1.0, stretch: 3.0 }
    }
}

/// Surface parameters `(phi, theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceCoord<T = f64> {
    pub phi: T,
    pub theta: T,
}

impl SurfaceCoord<f64> {
    /// Builds a coordinate with `theta` reduced into `[0, 2pi)`.
    pub fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta: theta.rem_euclid(TAU) }
    }
}

/// Cartesian point or velocity, `(x1, x2, x3) = (x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T = f64> {
    pub x1: T,
    pub x2: T,
    pub x3: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x1: T, x2: T, x3: T) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x1 * other.x1 + self.x2 * other.x2 + self.x3 * other.x3
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x1, self.x2, self.x3]
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x1 * s, self.x2 * s, self.x3 * s)
    }
}

/// Tube angle of the riding line, `b(phi) = pi/2 cos^2 phi`: inner line on the
/// straights (`phi = 0, pi`), outer line at the curve apices.
pub fn path_theta<T: Real>(phi: T) -> T {
    let c = phi.cos();
    T::FRAC_PI_2() * c * c
}

/// `b'(phi) = -pi cos phi sin phi`.
pub fn path_theta_prime<T: Real>(phi: T) -> T {
    -T::PI() * phi.cos() * phi.sin()
}

/// Torus parameterization `g(phi, theta)`.
pub fn surface_point<T: Real>(geom: &TrackGeometry<T>, c: SurfaceCoord<T>) -> Vec3<T> {
    let (cp, sp) = (c.phi.cos(), c.phi.sin());
    let (ct, st) = (c.theta.cos(), c.theta.sin());
    let r = geom.tube_radius;
    Vec3::new(
        (geom.major_radius + r * ct) * cp,
        (geom.stretch * geom.major_radius + r * ct) * sp,
        r * (T::one() - st),
    )
}

pub fn bike_position<T: Real>(geom: &TrackGeometry<T>, phi: T) -> Vec3<T> {
    surface_point(geom, SurfaceCoord { phi, theta: path_theta(phi) })
}

/// Unit vector from the bike to the rider.
pub fn link_direction<T: Real>(phi: T) -> Vec3<T> {
    let b = path_theta(phi);
    let cb = b.cos();
    Vec3::new(-cb * phi.cos(), -cb * phi.sin(), b.sin())
}

pub fn rider_position<T: Real>(geom: &TrackGeometry<T>, phi: T, l: T) -> Vec3<T> {
    let b = path_theta(phi);
    let (cb, sb) = (b.cos(), b.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    let r = geom.tube_radius;
    let offset = (r - l) * cb;
    Vec3::new(
        (geom.major_radius + offset) * cp,
        (geom.stretch * geom.major_radius + offset) * sp,
        r * (T::one() - sb) + l * sb,
    )
}

/// `d g(phi, b(phi)) / d phi`, the bike velocity per unit `phidot`.
pub fn bike_tangent<T: Real>(geom: &TrackGeometry<T>, phi: T) -> Vec3<T> {
    rider_phi_tangent(geom, phi, T::zero())
}

/// `d g~(phi, l) / d phi` at fixed `l`.
fn rider_phi_tangent<T: Real>(geom: &TrackGeometry<T>, phi: T, l: T) -> Vec3<T> {
    let b = path_theta(phi);
    let db = path_theta_prime(phi);
    let (cb, sb) = (b.cos(), b.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    let arm = geom.tube_radius - l;
    // derivative of the in-plane offset (r - l) cos b
    let d_offset = -arm * sb * db;
    Vec3::new(
        -(geom.major_radius + arm * cb) * sp + d_offset * cp,
        (geom.stretch * geom.major_radius + arm * cb) * cp + d_offset * sp,
        -arm * cb * db,
    )
}

pub fn bike_velocity<T: Real>(geom: &TrackGeometry<T>, phi: T, phidot: T) -> Vec3<T> {
    bike_tangent(geom, phi) * phidot
}

pub fn rider_velocity<T: Real>(geom: &TrackGeometry<T>, phi: T, phidot: T, l: T, ldot: T) -> Vec3<T> {
    rider_phi_tangent(geom, phi, l) * phidot + link_direction(phi) * ldot
}
