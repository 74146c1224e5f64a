//! Numerical Euler-Lagrange residual built only from the energy functions.
//!
//! Independent of the closed-form coefficients: every partial derivative of
//! `L = K - U` is a second-order central difference, and the total time
//! derivative of `dL/dphi'` is expanded by the chain rule.
//!
//! `K` is a quadratic form in the rates `(phi', l')`, so central differences
//! along the rate axes are exact for any step. Those axes use a unit step,
//! which keeps round-off in the second differences far below the tolerance;
//! the configuration axes `(phi, l)` use [`STEP`].

use super::{kinetic_energy, potential_energy, Control, State, SystemParams};
use crate::geometry::TrackGeometry;

/// Finite-difference step along `phi` and `l`.
pub const STEP: f64 = 1e-5;
/// Finite-difference step along `phi'` and `l'`.
pub const RATE_STEP: f64 = 1.0;

fn lagrangian(geom: &TrackGeometry, params: &SystemParams, x: [f64; 4]) -> f64 {
    let s = State::from_array(x);
    kinetic_energy(geom, params, &s) - potential_energy(geom, params, &s)
}

fn shifted(mut x: [f64; 4], moves: &[(usize, f64)]) -> [f64; 4] {
    for &(i, d) in moves {
        x[i] += d;
    }
    x
}

/// `d/dt(dL/dphi') - dL/dphi` evaluated at `s` with the given `phi''` and
/// `l'' = u`.
pub fn euler_lagrange_residual_numeric(
    geom: &TrackGeometry,
    params: &SystemParams,
    s: &State,
    phiddot: f64,
    u: Control,
) -> f64 {
    const PHI: usize = 0;
    const PHIDOT: usize = 1;
    const L: usize = 2;
    const LDOT: usize = 3;
    let step = |i: usize| if i == PHIDOT || i == LDOT { RATE_STEP } else { STEP };
    let x = s.to_array();
    let lag = |moves: &[(usize, f64)]| lagrangian(geom, params, shifted(x, moves));

    let h = step(PHI);
    let d_phi = (lag(&[(PHI, h)]) - lag(&[(PHI, -h)])) / (2.0 * h);
    let hr = step(PHIDOT);
    let d_rate_rate = (lag(&[(PHIDOT, hr)]) - 2.0 * lag(&[]) + lag(&[(PHIDOT, -hr)])) / (hr * hr);
    let mixed = |j: usize| {
        let hj = step(j);
        (lag(&[(PHIDOT, hr), (j, hj)]) - lag(&[(PHIDOT, hr), (j, -hj)]) - lag(&[(PHIDOT, -hr), (j, hj)])
            + lag(&[(PHIDOT, -hr), (j, -hj)]))
            / (4.0 * hr * hj)
    };

    d_rate_rate * phiddot + mixed(PHI) * s.phidot + mixed(L) * s.ldot + mixed(LDOT) * u.u - d_phi
}
