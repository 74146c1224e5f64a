//! Fixed-step RK4 integration, rollouts under a zero-order-hold control
//! sequence, coasting baselines and speed metrics.

use std::io::Write;

use log::warn;

use crate::dynamics::{explicit_rhs, kinetic_energy, potential_energy, Control, State, SystemParams};
use crate::error::{Error, Result};
use crate::format::sig;
use crate::geometry::{bike_position, bike_velocity, TrackGeometry, Vec3};
use crate::scalar::Real;

/// Box limits on the link length and its acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub l_min: f64,
    pub l_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l_min, self.l_max, self.u_min, self.u_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bounds must be finite"));
        }
        if !(self.l_min < self.l_max) {
            return Err(Error::invalid(format!("l_min ({}) must be < l_max ({})", self.l_min, self.l_max)));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::invalid(format!("u_min ({}) must be < u_max ({})", self.u_min, self.u_max)));
        }
        Ok(())
    }

    pub fn l_mid(&self) -> f64 {
        0.5 * (self.l_min + self.l_max)
    }

    pub fn clamp_u(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

impl Default for Bounds {
    /// Limits extracted from the shipped motion-capture series.
    fn default() -> Self {
        Self {
            l_min: 0.278028432325324,
            l_max: 0.595589962783839,
            u_min: -8.66483516272901,
            u_max: 30.1478116762068,
        }
    }
}

/// Everything needed to roll the model out over a fixed horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub geom: TrackGeometry,
    pub params: SystemParams,
    /// Horizon `T` [s].
    pub horizon: f64,
    /// Integration step `h` [s].
    pub step: f64,
    pub x0: State,
    pub bounds: Bounds,
    /// Linear state weights of the running cost.
    pub q: [f64; 4],
    /// Rollouts abort when `l` leaves `[l_min - m, l_max + m]`; `None` disables.
    pub corridor_margin: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        let bounds = Bounds::default();
        Self {
            geom: TrackGeometry::default(),
            params: SystemParams::default(),
            horizon: 5.0,
            step: 0.01,
            x0: State::new(0.0, std::f64::consts::FRAC_PI_3, 0.43681, 0.0),
            bounds,
            q: [-65.0, -65.0, 0.0, 0.0],
            corridor_margin: Some(0.05),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        self.params.validate()?;
        self.bounds.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon T must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step h must be positive"));
        }
        let ratio = self.horizon / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::invalid(format!("T/h = {ratio} is not a positive integer")));
        }
        if !self.x0.is_finite() {
            return Err(Error::invalid("x0 must be finite"));
        }
        if self.x0.l < self.bounds.l_min || self.x0.l > self.bounds.l_max {
            return Err(Error::invalid(format!(
                "x0 link length {} outside [l_min, l_max] = [{}, {}]",
                self.x0.l, self.bounds.l_min, self.bounds.l_max
            )));
        }
        if self.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("q must be finite"));
        }
        Ok(())
    }

    /// Number of integration steps `N = T/h`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Grid time `t_k = k h`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub(crate) fn corridor(&self) -> Option<(f64, f64)> {
        self.corridor_margin.map(|m| (self.bounds.l_min - m, self.bounds.l_max + m))
    }
}

/// One classical RK4 step of the explicit dynamics with `u` held constant.
pub fn rk4_step<T: Real>(
    geom: &TrackGeometry<T>,
    params: &SystemParams<T>,
    s: &State<T>,
    u: Control<T>,
    h: T,
) -> Result<State<T>> {
    let half = T::lit(0.5) * h;
    let k1 = explicit_rhs(geom, params, s, u)?;
    let k2 = explicit_rhs(geom, params, &s.advanced(&k1, half), u)?;
    let k3 = explicit_rhs(geom, params, &s.advanced(&k2, half), u)?;
    let k4 = explicit_rhs(geom, params, &s.advanced(&k3, h), u)?;
    let two = T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let a = s.to_array();
    let (d1, d2, d3, d4) = (k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    let mut out = a;
    for i in 0..4 {
        out[i] = a[i] + sixth * (d1[i] + two * d2[i] + two * d3[i] + d4[i]);
    }
    Ok(State::from_array(out))
}

/// Sampled solution on the integration grid plus derived signals.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Held control of each step; one fewer than `states`.
    pub controls: Vec<f64>,
    pub bike_position: Vec<Vec3>,
    pub bike_speed: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
}

impl Trajectory {
    fn from_states(geom: &TrackGeometry, params: &SystemParams, step: f64, states: Vec<State>, controls: Vec<f64>) -> Self {
        let times = (0..states.len()).map(|k| k as f64 * step).collect();
        let bike_position = states.iter().map(|s| bike_position(geom, s.phi)).collect();
        let bike_speed = states.iter().map(|s| bike_velocity(geom, s.phi, s.phidot).norm()).collect();
        let kinetic = states.iter().map(|s| kinetic_energy(geom, params, s)).collect();
        let potential = states.iter().map(|s| potential_energy(geom, params, s)).collect();
        Self { times, states, controls, bike_position, bike_speed, kinetic, potential }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &State {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn total_energy(&self) -> impl Iterator<Item = f64> + '_ {
        self.kinetic.iter().zip(&self.potential).map(|(k, u)| k + u)
    }

    /// Largest `|E_k - E_0| / |E_0|` of the total energy.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.kinetic[0] + self.potential[0];
        self.total_energy().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE)
    }

    /// Linear interpolation of the bike speed at the first sample where `phi`
    /// reaches `phi_target`.
    pub fn speed_at_phi(&self, phi_target: f64) -> Result<f64> {
        let (k, w) = self.crossing(phi_target).ok_or(Error::NotReached(phi_target))?;
        if k == 0 {
            return Ok(self.bike_speed[0]);
        }
        Ok(self.bike_speed[k - 1] + w * (self.bike_speed[k] - self.bike_speed[k - 1]))
    }

    /// Interpolated time at which `phi` first reaches `phi_target`.
    pub fn time_at_phi(&self, phi_target: f64) -> Result<f64> {
        let (k, w) = self.crossing(phi_target).ok_or(Error::NotReached(phi_target))?;
        if k == 0 {
            return Ok(self.times[0]);
        }
        Ok(self.times[k - 1] + w * (self.times[k] - self.times[k - 1]))
    }

    // First index k with phi_k >= target and the weight within [k-1, k].
    fn crossing(&self, target: f64) -> Option<(usize, f64)> {
        let phi = |k: usize| self.states[k].phi;
        if phi(0) >= target {
            return (phi(0) == target).then_some((0, 0.0));
        }
        (1..self.states.len()).find(|&k| phi(k) >= target).map(|k| {
            let (a, b) = (phi(k - 1), phi(k));
            (k, (target - a) / (b - a))
        })
    }

    /// Plot-ready CSV: one row per grid point, final row repeats the last control.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,phi,phidot,l,ldot,u,xb1,xb2,xb3,vb_mag,K,U")?;
        for k in 0..self.states.len() {
            let s = &self.states[k];
            let u = self.controls.get(k).or(self.controls.last()).copied().unwrap_or(0.0);
            let p = self.bike_position[k];
            let row = [
                self.times[k], s.phi, s.phidot, s.l, s.ldot, u, p.x1, p.x2, p.x3,
                self.bike_speed[k], self.kinetic[k], self.potential[k],
            ];
            let line: Vec<String> = row.iter().map(|v| sig(*v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Integrates the scenario under `controls` (one held value per step).
pub fn rollout(scenario: &Scenario, controls: &[f64]) -> Result<Trajectory> {
    let n = scenario.steps();
    if controls.len() != n {
        return Err(Error::invalid(format!("expected {n} controls, got {}", controls.len())));
    }
    let b = &scenario.bounds;
    if let Some((k, u)) = controls.iter().enumerate().find(|(_, u)| **u < b.u_min || **u > b.u_max) {
        warn!("control u[{k}] = {u} outside [{}, {}]", b.u_min, b.u_max);
    }
    let states = integrate(scenario, scenario.x0, controls.iter().copied())?;
    Ok(Trajectory::from_states(&scenario.geom, &scenario.params, scenario.step, states, controls.to_vec()))
}

pub(crate) fn integrate(scenario: &Scenario, x0: State, controls: impl IntoIterator<Item = f64>) -> Result<Vec<State>> {
    let corridor = scenario.corridor();
    let mut states = vec![x0];
    let mut s = x0;
    for (k, u) in controls.into_iter().enumerate() {
        if !u.is_finite() {
            return Err(Error::NonFinite("rollout control"));
        }
        s = rk4_step(&scenario.geom, &scenario.params, &s, Control::new(u), scenario.step)?;
        if let Some((lo, hi)) = corridor {
            if !(s.l >= lo && s.l <= hi) {
                return Err(Error::OutOfCorridor { step: k + 1, l: s.l, lo, hi });
            }
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("rollout state"));
        }
        states.push(s);
    }
    Ok(states)
}

/// Time for the unpumped system (`u = 0`, `l = l_fixed`, `l' = 0`) to reach
/// `phi_target`, giving up after `4 T`.
pub fn coast_time_to(scenario: &Scenario, phi_target: f64, l_fixed: f64) -> Result<f64> {
    coast_time_to_with_cap(scenario, phi_target, l_fixed, 4.0 * scenario.horizon)
}

pub fn coast_time_to_with_cap(scenario: &Scenario, phi_target: f64, l_fixed: f64, cap: f64) -> Result<f64> {
    let x0 = State::new(scenario.x0.phi, scenario.x0.phidot, l_fixed, 0.0);
    if !(l_fixed > 0.0 && l_fixed.is_finite()) {
        return Err(Error::invalid("coasting link length must be positive"));
    }
    if !phi_target.is_finite() {
        return Err(Error::NonFinite("coast target"));
    }
    if phi_target == x0.phi {
        return Ok(0.0);
    }
    if phi_target < x0.phi {
        return Err(Error::invalid("coast target must lie ahead of x0.phi"));
    }
    if !(x0.phidot > 0.0) {
        return Err(Error::invalid("coasting needs a positive initial rate phidot"));
    }
    let h = scenario.step;
    let max_steps = (cap / h).ceil() as usize;
    let mut s = x0;
    for k in 0..max_steps {
        let next = rk4_step(&scenario.geom, &scenario.params, &s, Control::new(0.0), h)?;
        if next.phi >= phi_target {
            let w = (phi_target - s.phi) / (next.phi - s.phi);
            return Ok((k as f64 + w) * h);
        }
        s = next;
    }
    Err(Error::HorizonExceeded { target: phi_target, horizon: cap })
}

/// Bike speed at `phi_b` minus bike speed at `phi_a` along `traj`.
pub fn speed_gain(traj: &Trajectory, phi_a: f64, phi_b: f64) -> Result<f64> {
    if phi_a == phi_b {
        traj.speed_at_phi(phi_a)?;
        return Ok(0.0);
    }
    Ok(traj.speed_at_phi(phi_b)? - traj.speed_at_phi(phi_a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_3, PI};

    fn coasting(l: f64, horizon: f64) -> Scenario {
        let mut sc = Scenario { horizon, ..Scenario::default() };
        sc.x0.l = l;
        sc
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (g, p) = (TrackGeometry::default(), SystemParams::default());
        let s = State::new(0.0, 0.0, 0.4368, 0.0);
        let next = rk4_step(&g, &p, &s, Control::new(0.0), 0.01).unwrap();
        assert_eq!(next.phi, 0.0);
        assert!(next.phidot.abs() < 1e-15);
        assert_eq!((next.l, next.ldot), (s.l, 0.0));
    }

    #[test]
    fn control_drives_the_link_chain_exactly() {
        let (g, p) = (TrackGeometry::default(), SystemParams::default());
        let s = State::new(0.0, 0.0, 0.4368, 0.0);
        let b = Bounds::default();
        let lo = rk4_step(&g, &p, &s, Control::new(b.u_min), 0.01).unwrap();
        let hi = rk4_step(&g, &p, &s, Control::new(b.u_max), 0.01).unwrap();
        assert_relative_eq!(hi.ldot - lo.ldot, (b.u_max - b.u_min) * 0.01, max_relative = 1e-12);
        assert_relative_eq!(hi.l - lo.l, 0.5 * (b.u_max - b.u_min) * 1e-4, max_relative = 1e-10);
    }

    #[test]
    fn zero_controls_keep_l_constant_and_conserve_energy() {
        let sc = Scenario::default();
        let traj = rollout(&sc, &vec![0.0; sc.steps()]).unwrap();
        assert_eq!(traj.len(), 501);
        assert_eq!(traj.controls.len(), 500);
        assert!(traj.states.iter().all(|s| s.l == sc.x0.l && s.ldot == 0.0));
        assert!(traj.energy_drift() < 1e-6, "drift {}", traj.energy_drift());
    }

    #[test]
    fn derived_signals_recompute() {
        let sc = Scenario { horizon: 0.5, ..Scenario::default() };
        let u: Vec<f64> = (0..sc.steps()).map(|k| 10.0 * (k as f64 * 0.2).cos()).collect();
        let traj = rollout(&sc, &u).unwrap();
        for (k, s) in traj.states.iter().enumerate() {
            assert_eq!(traj.times[k], k as f64 * 0.01);
            let v = bike_velocity(&sc.geom, s.phi, s.phidot).norm();
            assert!((traj.bike_speed[k] - v).abs() <= 1e-12);
            assert!((traj.kinetic[k] - kinetic_energy(&sc.geom, &sc.params, s)).abs() <= 1e-12 * traj.kinetic[k]);
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let sc = Scenario::default();
        let u: Vec<f64> = (0..sc.steps()).map(|k| 5.0 * (k as f64 * 0.2).cos()).collect();
        assert_eq!(rollout(&sc, &u).unwrap(), rollout(&sc, &u).unwrap());
    }

    #[test]
    fn rollout_rejects_wrong_length_and_corridor_exit() {
        let sc = Scenario::default();
        assert!(rollout(&sc, &[0.0; 3]).is_err());
        let push = vec![30.0; sc.steps()];
        assert!(matches!(rollout(&sc, &push), Err(Error::OutOfCorridor { .. })));
        let free = Scenario { corridor_margin: None, horizon: 0.2, ..Scenario::default() };
        assert!(rollout(&free, &vec![30.0; free.steps()]).is_ok());
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::default().validate().is_ok());
        let bad_ratio = Scenario { horizon: 5.0, step: 0.03, ..Scenario::default() };
        assert!(bad_ratio.validate().is_err());
        let mut bad_l = Scenario::default();
        bad_l.x0.l = 0.7;
        assert!(bad_l.validate().is_err());
        let mut bad_bounds = Scenario::default();
        bad_bounds.bounds.l_min = 0.9;
        assert!(bad_bounds.validate().unwrap_err().to_string().contains("l_min"));
    }

    #[test]
    fn coast_small_step_is_first_order() {
        let sc = Scenario::default();
        let eps = 1e-4;
        let t = coast_time_to(&sc, eps, sc.x0.l).unwrap();
        assert_relative_eq!(t, eps / FRAC_PI_3, max_relative = 1e-4);
        assert_eq!(coast_time_to(&sc, 0.0, sc.x0.l).unwrap(), 0.0);
        assert!(coast_time_to(&sc, -1.0, sc.x0.l).is_err());
        assert!(matches!(
            coast_time_to_with_cap(&sc, 100.0, sc.x0.l, 1.0),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn longer_link_coasts_faster() {
        let sc = Scenario::default();
        let b = sc.bounds;
        let t_max = coast_time_to(&sc, 2.0 * PI, b.l_max).unwrap();
        let t_mid = coast_time_to(&sc, 2.0 * PI, b.l_mid()).unwrap();
        let t_min = coast_time_to(&sc, 2.0 * PI, b.l_min).unwrap();
        assert!(t_max < t_mid && t_mid < t_min, "{t_max} {t_mid} {t_min}");
    }

    #[test]
    fn coast_time_matches_rollout_crossing() {
        let sc = coasting(Bounds::default().l_max, 5.0);
        let traj = rollout(&sc, &vec![0.0; sc.steps()]).unwrap();
        let t_roll = traj.time_at_phi(4.0).unwrap();
        let t_coast = coast_time_to(&sc, 4.0, sc.x0.l).unwrap();
        assert!((t_roll - t_coast).abs() < 1e-12);
    }

    #[test]
    fn conservative_speed_returns_on_straights() {
        let sc = coasting(Bounds::default().l_max, 5.0);
        let traj = rollout(&sc, &vec![0.0; sc.steps()]).unwrap();
        assert!(speed_gain(&traj, 0.0, PI).unwrap().abs() < 0.02);
        assert!(speed_gain(&traj, PI, 2.0 * PI).unwrap().abs() < 0.02);
        assert_eq!(speed_gain(&traj, 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(speed_gain(&traj, 0.0, 50.0), Err(Error::NotReached(_))));
    }

    #[test]
    fn csv_layout() {
        let sc = Scenario { horizon: 0.03, ..Scenario::default() };
        let traj = rollout(&sc, &[1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,phi,phidot,l,ldot,u,xb1,xb2,xb3,vb_mag,K,U");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,1.0471975511966,"));
        let last: Vec<&str> = lines[4].split(',').collect();
        assert_eq!(last[0], "0.03");
        assert_eq!(last[5], "3");
    }
}
