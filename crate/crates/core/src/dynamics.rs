//! Energies and equations of motion of the bike-rider system.
//!
//! The motion obeys the implicit scalar ODE
//!
//! ```text
//! 0 = M(phi, l) phi'' + F(phi, l) phi'^2 + Q(phi, l, l') phi' + P(phi, l, l', l'')
//! ```
//!
//! with `l'' = u` as the control. The four coefficients are closed-form
//! expressions built from 25 intermediate terms; [`oracle`] re-derives the
//! same residual numerically from the energies alone.

use crate::error::{Error, Result};
use crate::geometry::{
    bike_position, bike_velocity, rider_position, rider_velocity, TrackGeometry,
};
use crate::scalar::Real;

pub mod oracle;

pub use oracle::euler_lagrange_residual_numeric;

/// Threshold below which `|M|` is treated as singular.
pub const SINGULAR_MASS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams<T = f64> {
    /// Bike mass `m_b` [kg].
    pub bike_mass: T,
    /// Rider mass `m_r` [kg].
    pub rider_mass: T,
    /// Gravitational acceleration [m/s^2].
    pub gravity: T,
}

impl<T: Real> SystemParams<T> {
    pub fn new(bike_mass: T, rider_mass: T, gravity: T) -> Result<Self> {
        let p = Self { bike_mass, rider_mass, gravity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.bike_mass, "m_b"), (self.rider_mass, "m_r"), (self.gravity, "g_grav")] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> SystemParams<U> {
        SystemParams {
            bike_mass: U::lit(self.bike_mass.value()),
            rider_mass: U::lit(self.rider_mass.value()),
            gravity: U::lit(self.gravity.value()),
        }
    }
}

impl Default for SystemParams<f64> {
    fn default() -> Self {
        Self { bike_mass: 15.0, rider_mass: 80.0, gravity: 9.8067 }
    }
}

/// Generalized state `(phi, phi', l, l')`.
///
/// The same layout doubles as the state derivative `(phi', phi'', l', l'')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State<T = f64> {
    pub phi: T,
    pub phidot: T,
    pub l: T,
    pub ldot: T,
}

/// Time derivative of a [`State`]; slot names follow the state they belong to.
pub type StateDerivative<T = f64> = State<T>;

impl<T: Real> State<T> {
    pub fn new(phi: T, phidot: T, l: T, ldot: T) -> Self {
        Self { phi, phidot, l, ldot }
    }

    pub fn from_array([phi, phidot, l, ldot]: [T; 4]) -> Self {
        Self { phi, phidot, l, ldot }
    }

    pub fn to_array(self) -> [T; 4] {
        [self.phi, self.phidot, self.l, self.ldot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `self + h * rate`
    pub fn advanced(self, rate: &Self, h: T) -> Self {
        Self {
            phi: self.phi + h * rate.phi,
            phidot: self.phidot + h * rate.phidot,
            l: self.l + h * rate.l,
            ldot: self.ldot + h * rate.ldot,
        }
    }
}

/// Link acceleration `l''` [m/s^2].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Control<T = f64> {
    pub u: T,
}

impl<T: Real> Control<T> {
    pub fn new(u: T) -> Self {
        Self { u }
    }
}

/// The four scalar terms of the implicit equation of motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EomCoefficients<T = f64> {
    pub m: T,
    pub f: T,
    pub q: T,
    pub p: T,
}

pub fn kinetic_energy<T: Real>(geom: &TrackGeometry<T>, params: &SystemParams<T>, s: &State<T>) -> T {
    let vb = bike_velocity(geom, s.phi, s.phidot);
    let vr = rider_velocity(geom, s.phi, s.phidot, s.l, s.ldot);
    T::lit(0.5) * (params.bike_mass * vb.norm_sq() + params.rider_mass * vr.norm_sq())
}

pub fn potential_energy<T: Real>(geom: &TrackGeometry<T>, params: &SystemParams<T>, s: &State<T>) -> T {
    let zb = bike_position(geom, s.phi).x3;
    let zr = rider_position(geom, s.phi, s.l).x3;
    params.gravity * (params.bike_mass * zb + params.rider_mass * zr)
}

pub fn total_energy<T: Real>(geom: &TrackGeometry<T>, params: &SystemParams<T>, s: &State<T>) -> T {
    kinetic_energy(geom, params, s) + potential_energy(geom, params, s)
}

/// Closed-form `M, F, Q, P` at `(phi, l, l', l'')`.
///
/// The intermediate names `s1..s25` follow the published term list one to
/// one; keep them that way so each can be checked against the source.
pub fn eom_coefficients<T: Real>(
    geom: &TrackGeometry<T>,
    params: &SystemParams<T>,
    phi: T,
    l: T,
    ldot: T,
    lddot: T,
) -> Result<EomCoefficients<T>> {
    if !(phi.is_finite() && l.is_finite() && ldot.is_finite() && lddot.is_finite()) {
        return Err(Error::NonFinite("eom_coefficients"));
    }
    Ok(coefficients_unchecked(geom, params, phi, l, ldot, lddot))
}

#[allow(clippy::many_single_char_names)]
fn coefficients_unchecked<T: Real>(
    geom: &TrackGeometry<T>,
    params: &SystemParams<T>,
    phi: T,
    l: T,
    ld: T,
    ldd: T,
) -> EomCoefficients<T> {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let six = T::lit(6.0);
    let half = T::lit(0.5);
    let pi = T::PI();
    let pi2 = pi * pi;
    let pi3 = pi2 * pi;

    let big_r = geom.major_radius;
    let r = geom.tube_radius;
    let lam = geom.stretch;
    let (mb, mr, g) = (params.bike_mass, params.rider_mass, params.gravity);

    let c = phi.cos();
    let s = phi.sin();
    let c2 = c * c;
    let s2 = s * s;
    let c3 = c2 * c;
    let s3 = s2 * s;

    let s25 = pi * c2 / two;
    let cb = s25.cos();
    let sb = s25.sin();
    let lr = l - r;

    let s24 = cb * lr;
    let s23 = pi * l * cb * c2 - pi * r * cb * c2 - pi * l * cb * s2 + pi * r * cb * s2
        + l * pi2 * sb * c2 * s2
        - r * pi2 * sb * c2 * s2;
    let s22 = ld * cb * s - pi * ld * sb * c2 * s;
    let s21 = pi * ld * sb * c * s2 + ld * cb * c;
    let s20 = big_r + r * cb;
    let s19 = r * cb + big_r * lam;
    let s18 = c * (big_r - s24);
    let s17 = s * (big_r * lam - s24);
    let s16 = pi * sb * s2 * lr - pi * sb * c2 * lr + pi2 * cb * c2 * s2 * lr;
    let s15 = two * ld * sb * s23;
    let s14 = two * pi * ld * ld * cb * sb * c * s;
    let s13 = two * ld * cb * c * s22;
    let s12 = two * ld * cb * s * s21;
    let s11 = s * s20 - pi * r * sb * c2 * s;
    let s10 = pi * r * sb * c * s2 + c * s19;
    let s9 = c * s20 - pi * r * sb * c3 + r * pi2 * cb * c3 * s2 + three * pi * r * sb * c * s2;
    let s8 = s * s19 + pi * r * sb * s3 + r * pi2 * cb * c2 * s3 - three * pi * r * sb * c2 * s;
    let s7 = s18 + pi * sb * c3 * lr - pi2 * cb * c3 * s2 * lr - three * pi * sb * c * s2 * lr;
    let s6 = s17 - pi * sb * s3 * lr - pi2 * cb * c2 * s3 * lr + three * pi * sb * c2 * s * lr;
    let s5 = -s18 + c * s16 + two * pi * sb * c * s2 * lr;
    let s4 = s17 - s * s16 + two * pi * sb * c2 * s * lr;
    let s3_ = pi * l * cb * c * s - pi * r * cb * c * s;
    let s2_ = s * (big_r - s24) + pi * sb * c2 * s * lr;
    let s1 = c * (big_r * lam - s24) - pi * sb * c * s2 * lr;

    let r2 = r * r;
    let m = mb / two * (s10 * s10 * two + two * s11 * s11 + two * r2 * pi2 * cb * cb * c2 * s2)
        + mr / two * (two * s1 * s1 + two * s2_ * s2_ + two * s3_ * s3_);

    let bike_f1 = two * s11 * s9 - s10 * s8 * two - two * r2 * pi2 * cb * cb * c * s3
        + two * r2 * pi2 * cb * cb * c3 * s
        + two * r2 * pi3 * cb * sb * c3 * s3;
    let bike_f2 = four * s11 * s9 - s10 * s8 * four - four * r2 * pi2 * cb * cb * c * s3
        + four * r2 * pi2 * cb * cb * c3 * s
        + four * r2 * pi3 * cb * sb * c3 * s3;
    let rider_f1 = s1 * s4 * two - two * s3_ * s23 + s2_ * s5 * two;
    let rider_f2 = -two * s2_ * s7 + s1 * s4 * two - four * s3_ * s23 + s2_ * s5 * two + two * s1 * s6;
    let f = half * (-mb * bike_f1 + mb * bike_f2 + mr * rider_f1 - mr * rider_f2);

    let q1 = s1 * s21 * two
        + s1 * (two * ld * pi * sb * c * s2 + two * ld * cb * c) * two
        + two * s2_ * s22
        + two * s2_ * (two * ld * cb * s - two * pi * ld * sb * c2 * s)
        + s15
        - two * ld * cb * s * s6
        - two * ld * cb * c * s7
        - six * pi * ld * cb * c * s * s3_;
    let q2 = s1 * s21 * two + two * s2_ * s22 + s15 - ld * cb * s * s4 * two + ld * cb * c * s5 * two
        - two * pi * ld * cb * c * s * s3_;
    let q = half * (-mr * q1 + mr * q2);

    let p = -g * (mr * s3_ - pi * mb * r * cb * c * s)
        - mr / two
            * (two * ldd * sb * s3_ - two * ldd * cb * c * s2_ - s12 + s13 + two * ldd * cb * s * s1 + s14)
        + mr / two * (-s12 + s13 + s14);

    EomCoefficients { m, f, q, p }
}

/// `M phi'' + F phi'^2 + Q phi' + P` for a candidate derivative `sdot`.
///
/// `sdot.phidot` carries `phi''`; `l''` is taken from `u`.
pub fn implicit_residual<T: Real>(
    geom: &TrackGeometry<T>,
    params: &SystemParams<T>,
    sdot: &StateDerivative<T>,
    s: &State<T>,
    u: Control<T>,
) -> Result<T> {
    let k = eom_coefficients(geom, params, s.phi, s.l, s.ldot, u.u)?;
    Ok(k.m * sdot.phidot + k.f * s.phidot * s.phidot + k.q * s.phidot + k.p)
}

/// Explicit form `(phi', -(F phi'^2 + Q phi' + P)/M, l', u)`.
pub fn explicit_rhs<T: Real>(
    geom: &TrackGeometry<T>,
    params: &SystemParams<T>,
    s: &State<T>,
    u: Control<T>,
) -> Result<StateDerivative<T>> {
    let k = eom_coefficients(geom, params, s.phi, s.l, s.ldot, u.u)?;
    if k.m.abs() < T::lit(SINGULAR_MASS) {
        return Err(Error::SingularMass { mass: k.m.value(), phi: s.phi.value(), l: s.l.value() });
    }
    let phiddot = -(k.f * s.phidot * s.phidot + k.q * s.phidot + k.p) / k.m;
    Ok(State { phi: s.phidot, phidot: phiddot, l: s.ldot, ldot: u.u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    const L_MIN: f64 = 0.278028432325324;
    const L_MAX: f64 = 0.595589962783839;
    const L_MID: f64 = 0.5 * (L_MIN + L_MAX);

    fn g() -> TrackGeometry {
        TrackGeometry::default()
    }
    fn p() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn energies_at_start() {
        let s = State::new(0.0, PI / 3.0, 0.4368, 0.0);
        // both masses move at 3 pi m/s on the straight
        assert_relative_eq!(kinetic_energy(&g(), &p(), &s), 0.5 * 95.0 * 9.0 * PI * PI, max_relative = 1e-13);
        assert_relative_eq!(kinetic_energy(&g(), &p(), &s), 4219.256, epsilon = 0.001);
        assert_relative_eq!(potential_energy(&g(), &p(), &s), 9.8067 * 80.0 * 0.4368, max_relative = 1e-13);
        assert_relative_eq!(potential_energy(&g(), &p(), &s), 342.7, epsilon = 0.05);
        let apex = State::new(PI / 2.0, 0.0, 0.5, 0.0);
        assert_relative_eq!(potential_energy(&g(), &p(), &apex), 9.8067 * 95.0, max_relative = 1e-13);
        assert_eq!(kinetic_energy(&g(), &p(), &State::new(0.7, 0.0, 0.4, 0.0)), 0.0);
    }

    #[test]
    fn kinetic_energy_is_quadratic_and_potential_ignores_rates() {
        let s = State::new(1.1, 0.9, 0.35, -0.4);
        let s2 = State::new(1.1, 1.8, 0.35, -0.8);
        assert_relative_eq!(kinetic_energy(&g(), &p(), &s2), 4.0 * kinetic_energy(&g(), &p(), &s), max_relative = 1e-13);
        let s3 = State::new(1.1, -2.0, 0.35, 1.5);
        assert_eq!(potential_energy(&g(), &p(), &s), potential_energy(&g(), &p(), &s3));
    }

    #[test]
    fn coefficients_on_the_straight() {
        for l in [L_MIN, 0.4368, L_MAX] {
            let k = eom_coefficients(&g(), &p(), 0.0, l, 0.0, 0.0).unwrap();
            assert_relative_eq!(k.m, 7695.0, max_relative = 1e-13);
            assert!(k.q.abs() < 1e-12);
            assert!(k.p.abs() < 1e-10);
            // gravity term vanishes for any l'' and l' at phi = 0
            let k2 = eom_coefficients(&g(), &p(), 0.0, l, 0.0, 7.0).unwrap();
            assert!(k2.p.abs() < 1e-10, "P = {}", k2.p);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            eom_coefficients(&g(), &p(), f64::NAN, 0.4, 0.0, 0.0),
            Err(Error::NonFinite(_))
        ));
        assert!(eom_coefficients(&g(), &p(), 0.0, 0.4, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn explicit_form_examples() {
        let rest = State::new(0.0, 0.0, 0.4368, 0.0);
        let d = explicit_rhs(&g(), &p(), &rest, Control::new(0.0)).unwrap();
        assert_eq!(d.phi, 0.0);
        assert!(d.phidot.abs() < 1e-14);
        assert_eq!((d.l, d.ldot), (0.0, 0.0));

        let x0 = State::new(0.0, PI / 3.0, 0.4368, 0.0);
        let d = explicit_rhs(&g(), &p(), &x0, Control::new(0.0)).unwrap();
        let k = eom_coefficients(&g(), &p(), 0.0, 0.4368, 0.0, 0.0).unwrap();
        assert_relative_eq!(d.phidot, -k.f * (PI / 3.0).powi(2) / k.m, max_relative = 1e-12);
        let oracle = euler_lagrange_residual_numeric(&g(), &p(), &x0, d.phidot, Control::new(0.0));
        assert!(oracle.abs() < 1e-3, "oracle residual {oracle}");

        let s = State::new(2.1, -1.2, 0.31, 0.7);
        let d = explicit_rhs(&g(), &p(), &s, Control::new(-3.5)).unwrap();
        assert_eq!(d.phi, s.phidot);
        assert_eq!(d.l, s.ldot);
        assert_eq!(d.ldot, -3.5);
    }

    #[test]
    fn residual_vanishes_on_explicit_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = State::new(rng.gen_range(0.0..TAU), rng.gen_range(-3.0..3.0), rng.gen_range(L_MIN..L_MAX), rng.gen_range(-2.0..2.0));
            let u = Control::new(rng.gen_range(-9.0..31.0));
            let d = explicit_rhs(&g(), &p(), &s, u).unwrap();
            let res = implicit_residual(&g(), &p(), &d, &s, u).unwrap();
            let k = eom_coefficients(&g(), &p(), s.phi, s.l, s.ldot, u.u).unwrap();
            let scale = k.m.abs() * d.phidot.abs() + k.p.abs() + 1.0;
            assert!(res.abs() < 1e-10 * scale, "residual {res}");
        }
        let eq = State::new(0.0, 0.0, 0.4, 0.0);
        let zero = State::new(0.0, 0.0, 0.0, 0.0);
        assert!(implicit_residual(&g(), &p(), &zero, &eq, Control::new(0.0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mass_term_positive_on_operating_grid() {
        for i in 0..360 {
            let phi = TAU * i as f64 / 360.0;
            for j in 0..50 {
                let l = L_MIN + (L_MAX - L_MIN) * j as f64 / 49.0;
                let k = eom_coefficients(&g(), &p(), phi, l, 0.0, 0.0).unwrap();
                assert!(k.m > 0.0, "M = {} at phi = {phi}, l = {l}", k.m);
            }
        }
    }

    #[test]
    fn argument_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let phi = rng.gen_range(0.0..TAU);
            let l = rng.gen_range(L_MIN..L_MAX);
            let (ld1, ld2) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (u1, u2) = (rng.gen_range(-9.0..31.0), rng.gen_range(-9.0..31.0));
            let a = eom_coefficients(&g(), &p(), phi, l, ld1, u1).unwrap();
            let b = eom_coefficients(&g(), &p(), phi, l, ld2, u2).unwrap();
            assert_eq!(a.m, b.m);
            assert_eq!(a.f, b.f);
            let still = eom_coefficients(&g(), &p(), phi, l, 0.0, u1).unwrap();
            assert!(still.q.abs() < 1e-12);
            // Q is linear in l'
            let half = eom_coefficients(&g(), &p(), phi, l, 0.5 * ld1, u1).unwrap();
            assert_relative_eq!(half.q, 0.5 * a.q, epsilon = 1e-9, max_relative = 1e-10);
        }
    }

    #[test]
    fn coefficients_are_pi_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let phi = rng.gen_range(0.0..TAU);
            let l = rng.gen_range(L_MIN..L_MAX);
            let ld = rng.gen_range(-2.0..2.0);
            let u = rng.gen_range(-9.0..31.0);
            let a = eom_coefficients(&g(), &p(), phi, l, ld, u).unwrap();
            let b = eom_coefficients(&g(), &p(), phi + PI, l, ld, u).unwrap();
            for (x, y) in [(a.m, b.m), (a.f, b.f), (a.q, b.q), (a.p, b.p)] {
                assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let s = State::new(rng.gen_range(0.0..TAU), rng.gen_range(-3.0..3.0), rng.gen_range(L_MIN..L_MAX), rng.gen_range(-2.0..2.0));
            let u = Control::new(rng.gen_range(-9.0..31.0));
            let phiddot = rng.gen_range(-3.0..3.0);
            let sdot = State::new(s.phidot, phiddot, s.ldot, u.u);
            let closed = implicit_residual(&g(), &p(), &sdot, &s, u).unwrap();
            let numeric = euler_lagrange_residual_numeric(&g(), &p(), &s, phiddot, u);
            assert!((closed - numeric).abs() / closed.abs().max(1.0) < 1e-4, "{closed} vs {numeric}");
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let k64 = eom_coefficients(&g(), &p(), 0.9, L_MID, 0.3, 2.0).unwrap();
        let k32 = eom_coefficients(&g().cast::<f32>(), &p().cast::<f32>(), 0.9, L_MID as f32, 0.3, 2.0).unwrap();
        assert_relative_eq!(k32.m as f64, k64.m, max_relative = 1e-4);
        assert_relative_eq!(k32.p as f64, k64.p, max_relative = 1e-4);
    }
}
