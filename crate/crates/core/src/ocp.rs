//! Optimal pumping by single shooting.
//!
//! Decision variables are the held controls `u_0..u_{N-1}`. The running cost
//! `sum_k (q.x_k + u_k^2) h` is evaluated on the RK4 grid (left rectangle
//! rule, matching the zero-order hold). Box limits on `u` are enforced by
//! projection; the link-length limits at the grid points `k = 1..N` enter an
//! augmented-Lagrangian merit that an active-set projected L-BFGS minimizes.
//! Gradients come from a discrete adjoint sweep whose per-step Jacobians are
//! exact forward-mode derivatives of [`rk4_step`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, info};

use crate::dynamics::{Control, State};
use crate::error::{Error, Result};
use crate::format::sig;
use crate::scalar::Dual;
use crate::simulate::{coast_time_to, integrate, rk4_step, rollout, speed_gain, Bounds, Scenario, Trajectory};

/// How the solver differentiates the merit function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradMode {
    /// Discrete adjoint through the RK4 rollout.
    #[default]
    Adjoint,
    /// One-sided finite differences, one extra rollout per control.
    ForwardDifference,
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradMode::Adjoint => "adjoint",
            GradMode::ForwardDifference => "forward_difference",
        })
    }
}

impl FromStr for GradMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(GradMode::Adjoint),
            "forward_difference" | "fd" => Ok(GradMode::ForwardDifference),
            other => Err(Error::invalid(format!("unknown grad_mode `{other}` (adjoint | forward_difference)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Budget of quasi-Newton iterations summed over all outer rounds.
    pub max_iters: usize,
    /// Allowed link-length violation [m] at the grid points.
    pub feas_tol: f64,
    pub grad_mode: GradMode,
    pub max_outer: usize,
    /// Stop an inner solve when the projected gradient falls below this.
    pub grad_tol: f64,
    /// Stop an inner solve when one iteration lowers the merit by less than
    /// `rel_decrease * max(1, |merit|)`.
    pub rel_decrease: f64,
    pub memory: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 20000,
            feas_tol: 1e-4,
            grad_mode: GradMode::Adjoint,
            max_outer: 40,
            grad_tol: 1e-6,
            rel_decrease: 1e-11,
            memory: 12,
            initial_penalty: 1e3,
            penalty_growth: 4.0,
        }
    }
}

/// The transcribed problem: a scenario plus its box limits.
#[derive(Clone, Debug)]
pub struct OcpProblem {
    pub scenario: Scenario,
}

impl OcpProblem {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self { scenario })
    }

    pub fn steps(&self) -> usize {
        self.scenario.steps()
    }
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    pub controls: Vec<f64>,
    pub trajectory: Trajectory,
    pub objective: f64,
    /// Quasi-Newton iterations over all outer rounds.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Largest link-length violation [m] over the grid.
    pub constraint_violation: f64,
    /// Merit values of the accepted iterates, one list per outer round.
    pub merit_history: Vec<Vec<f64>>,
    pub wall_time: Duration,
}

/// Running cost `sum_{k<N} (q.x_k + u_k^2) h` of the rollout under `controls`.
pub fn objective(scenario: &Scenario, controls: &[f64]) -> Result<f64> {
    let traj = rollout(scenario, controls)?;
    Ok(objective_of(scenario, &traj.states, controls))
}

fn objective_of(scenario: &Scenario, states: &[State], controls: &[f64]) -> f64 {
    let q = scenario.q;
    let h = scenario.step;
    states
        .iter()
        .zip(controls)
        .map(|(s, u)| {
            let x = s.to_array();
            (q[0] * x[0] + q[1] * x[1] + q[2] * x[2] + q[3] * x[3] + u * u) * h
        })
        .sum()
}

/// Gradient of [`objective`] by the discrete adjoint.
pub fn gradient(scenario: &Scenario, controls: &[f64]) -> Result<Vec<f64>> {
    gradient_with_mode(scenario, controls, GradMode::Adjoint)
}

pub fn gradient_with_mode(scenario: &Scenario, controls: &[f64], mode: GradMode) -> Result<Vec<f64>> {
    let merit = Merit { scenario, penalty: None };
    merit.check_len(controls)?;
    match mode {
        GradMode::Adjoint => merit.value_and_adjoint(controls).map(|(_, g)| g),
        GradMode::ForwardDifference => merit.forward_difference(controls).map(|(_, g)| g),
    }
}

/// Augmented-Lagrangian multipliers and weight for the link limits.
struct Penalty<'a> {
    /// `[upper_1..upper_N, lower_1..lower_N]`.
    multipliers: &'a [f64],
    weight: f64,
}

struct Merit<'a> {
    scenario: &'a Scenario,
    penalty: Option<Penalty<'a>>,
}

// Per-step Jacobian rows: d x_{k+1,i} / d (x_k, u_k).
type StepJacobian = [[f64; 5]; 4];

impl Merit<'_> {
    fn check_len(&self, controls: &[f64]) -> Result<()> {
        let n = self.scenario.steps();
        if controls.len() != n {
            return Err(Error::invalid(format!("expected {n} controls, got {}", controls.len())));
        }
        Ok(())
    }

    /// Penalty value and its derivative with respect to `l` at grid point `k >= 1`.
    fn link_penalty(&self, k: usize, l: f64) -> (f64, f64) {
        let Some(p) = &self.penalty else { return (0.0, 0.0) };
        let n = self.scenario.steps();
        let b = &self.scenario.bounds;
        let mu = p.weight;
        let term = |lambda: f64, g: f64| {
            let shifted = (lambda + mu * g).max(0.0);
            ((shifted * shifted - lambda * lambda) / (2.0 * mu), shifted)
        };
        let (vu, du) = term(p.multipliers[k - 1], l - b.l_max);
        let (vl, dl) = term(p.multipliers[n + k - 1], b.l_min - l);
        (vu + vl, du - dl)
    }

    fn penalty_total(&self, states: &[State]) -> f64 {
        states.iter().enumerate().skip(1).map(|(k, s)| self.link_penalty(k, s.l).0).sum()
    }

    fn value(&self, controls: &[f64]) -> Result<f64> {
        let states = integrate(self.scenario, self.scenario.x0, controls.iter().copied())?;
        Ok(objective_of(self.scenario, &states, controls) + self.penalty_total(&states))
    }

    fn value_and_adjoint(&self, controls: &[f64]) -> Result<(f64, Vec<f64>)> {
        let sc = self.scenario;
        let n = controls.len();
        let geom = sc.geom.cast::<Dual<5>>();
        let params = sc.params.cast::<Dual<5>>();
        let h = Dual::<5>::constant(sc.step);
        let corridor = sc.corridor();

        let mut states = Vec::with_capacity(n + 1);
        let mut jacobians: Vec<StepJacobian> = Vec::with_capacity(n);
        states.push(sc.x0);
        for (k, &u) in controls.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::NonFinite("rollout control"));
            }
            let x = states[k].to_array();
            let seeded = State::from_array([0, 1, 2, 3].map(|i| Dual::variable(x[i], i)));
            let next = rk4_step(&geom, &params, &seeded, Control::new(Dual::variable(u, 4)), h)?;
            let next = next.to_array();
            let s = State::from_array(next.map(|d| d.re));
            if let Some((lo, hi)) = corridor {
                if !(s.l >= lo && s.l <= hi) {
                    return Err(Error::OutOfCorridor { step: k + 1, l: s.l, lo, hi });
                }
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("rollout state"));
            }
            jacobians.push(next.map(|d| d.eps));
            states.push(s);
        }

        let value = objective_of(sc, &states, controls) + self.penalty_total(&states);

        let q = sc.q;
        let h = sc.step;
        let mut grad = vec![0.0; n];
        // costate of x_N: only the link penalty acts on the terminal state
        let mut costate = [0.0; 4];
        costate[2] = self.link_penalty(n, states[n].l).1;
        for k in (0..n).rev() {
            let jac = &jacobians[k];
            let mut next_costate = [0.0; 4];
            let mut du = 2.0 * controls[k] * h;
            for (i, row) in jac.iter().enumerate() {
                du += row[4] * costate[i];
                for (j, c) in next_costate.iter_mut().enumerate() {
                    *c += row[j] * costate[i];
                }
            }
            grad[k] = du;
            for j in 0..4 {
                next_costate[j] += q[j] * h;
            }
            if k >= 1 {
                next_costate[2] += self.link_penalty(k, states[k].l).1;
            }
            costate = next_costate;
        }
        Ok((value, grad))
    }

    fn forward_difference(&self, controls: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f0 = self.value(controls)?;
        let mut work = controls.to_vec();
        let mut grad = vec![0.0; controls.len()];
        for k in 0..controls.len() {
            let d = 1e-7 * controls[k].abs().max(1.0);
            work[k] = controls[k] + d;
            grad[k] = (self.value(&work)? - f0) / d;
            work[k] = controls[k];
        }
        Ok((f0, grad))
    }

    fn evaluate(&self, controls: &[f64], mode: GradMode) -> Result<(f64, Vec<f64>)> {
        match mode {
            GradMode::Adjoint => self.value_and_adjoint(controls),
            GradMode::ForwardDifference => self.forward_difference(controls),
        }
    }
}

/// Largest violation of `l_min <= l_k <= l_max` over `k = 1..N`.
pub fn link_violation(bounds: &Bounds, states: &[State]) -> f64 {
    states
        .iter()
        .skip(1)
        .map(|s| (s.l - bounds.l_max).max(bounds.l_min - s.l).max(0.0))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InnerStatus {
    Stationary,
    SmallDecrease,
    LineSearchFailed,
    IterationLimit,
}

struct InnerResult {
    x: Vec<f64>,
    iterations: usize,
    status: InnerStatus,
    history: Vec<f64>,
}

fn project(x: &mut [f64], b: &Bounds) {
    for v in x {
        *v = b.clamp_u(*v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn projected_gradient(x: &[f64], g: &[f64], b: &Bounds) -> Vec<f64> {
    x.iter().zip(g).map(|(&xi, &gi)| xi - b.clamp_u(xi - gi)).collect()
}

/// Active-set projected L-BFGS on the control box.
fn minimize_box(
    merit: &Merit<'_>,
    x0: &[f64],
    opts: &SolverOptions,
    budget: usize,
) -> Result<InnerResult> {
    let b = merit.scenario.bounds;
    let mut x = x0.to_vec();
    project(&mut x, &b);
    let (mut f, mut g) = merit.evaluate(&x, opts.grad_mode)?;
    let mut history = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let n = x.len();

    for iter in 0..budget {
        let pg = projected_gradient(&x, &g, &b);
        if inf_norm(&pg) <= opts.grad_tol {
            return Ok(InnerResult { x, iterations: iter, status: InnerStatus::Stationary, history });
        }
        // variables held at a bound by the gradient
        let eps = 1e-12;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= b.u_min + eps && g[i] > 0.0) || (x[i] >= b.u_max - eps && g[i] < 0.0)))
            .collect();

        let mut accepted = None;
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !memory.is_empty();
            let dir = if use_memory {
                two_loop(&g, &free, &memory)
            } else {
                g.iter().zip(&free).map(|(gi, &fr)| if fr { -gi } else { 0.0 }).collect()
            };
            let slope = dot(&dir, &g);
            if !(slope < 0.0) {
                memory.clear();
                continue;
            }
            let mut alpha = if use_memory { 1.0 } else { (1.0 / inf_norm(&dir)).min(1.0) };
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut trial, &b);
                let step: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
                let decrease = dot(&g, &step);
                if decrease < 0.0 {
                    if let Ok(ft) = merit.value(&trial) {
                        if ft <= f + 1e-4 * decrease {
                            accepted = Some(trial);
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }

        let Some(x_new) = accepted else {
            return Ok(InnerResult { x, iterations: iter, status: InnerStatus::LineSearchFailed, history });
        };
        let (f_new, g_new) = merit.evaluate(&x_new, opts.grad_mode)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, c)| a - c).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, c)| a - c).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let drop = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if drop <= opts.rel_decrease * f.abs().max(1.0) {
            return Ok(InnerResult { x, iterations: iter + 1, status: InnerStatus::SmallDecrease, history });
        }
    }
    Ok(InnerResult { x, iterations: budget, status: InnerStatus::IterationLimit, history })
}

fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &mut [f64]| {
        for (vi, &fr) in v.iter_mut().zip(free) {
            if !fr {
                *vi = 0.0;
            }
        }
    };
    let mut q = g.to_vec();
    mask(&mut q);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (a - beta) * si;
        }
    }
    mask(&mut r);
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Solves the problem from the all-zero control sequence.
pub fn solve(problem: &OcpProblem, options: &SolverOptions) -> Result<OcpSolution> {
    solve_from(problem, options, &vec![0.0; problem.steps()])
}

pub fn solve_from(problem: &OcpProblem, options: &SolverOptions, initial: &[f64]) -> Result<OcpSolution> {
    let started = Instant::now();
    let sc = &problem.scenario;
    sc.validate()?;
    let n = sc.steps();
    if initial.len() != n {
        return Err(Error::invalid(format!("expected {n} initial controls, got {}", initial.len())));
    }
    let mut u = initial.to_vec();
    project(&mut u, &sc.bounds);
    integrate(sc, sc.x0, u.iter().copied())?;

    let mut multipliers = vec![0.0; 2 * n];
    let mut weight = options.initial_penalty;
    let mut iterations = 0;
    let mut merit_history = Vec::new();
    let mut prev_violation = f64::INFINITY;
    let mut converged = false;
    let mut outer = 0;

    while outer < options.max_outer && iterations < options.max_iters {
        outer += 1;
        let merit = Merit { scenario: sc, penalty: Some(Penalty { multipliers: &multipliers, weight }) };
        let inner = minimize_box(&merit, &u, options, options.max_iters - iterations)?;
        iterations += inner.iterations;
        merit_history.push(inner.history);
        u = inner.x;

        let states = integrate(sc, sc.x0, u.iter().copied())?;
        let violation = link_violation(&sc.bounds, &states);
        for (k, s) in states.iter().enumerate().skip(1) {
            let up = &mut multipliers[k - 1];
            *up = (*up + weight * (s.l - sc.bounds.l_max)).max(0.0);
            let lo = &mut multipliers[n + k - 1];
            *lo = (*lo + weight * (sc.bounds.l_min - s.l)).max(0.0);
        }
        debug!(
            "outer {outer}: objective {} violation {violation:e} weight {weight:e} inner {:?} ({} its)",
            objective_of(sc, &states, &u),
            inner.status,
            inner.iterations
        );
        if violation <= options.feas_tol && inner.status != InnerStatus::IterationLimit {
            converged = inner.status != InnerStatus::LineSearchFailed || violation < 0.1 * options.feas_tol;
            if converged {
                break;
            }
        }
        if violation > 0.25 * prev_violation {
            weight *= options.penalty_growth;
        }
        prev_violation = violation;
    }

    let trajectory = rollout(sc, &u)?;
    let objective = objective_of(sc, &trajectory.states, &u);
    let constraint_violation = link_violation(&sc.bounds, &trajectory.states);
    let converged = converged && constraint_violation <= options.feas_tol;
    info!(
        "solve finished: objective {objective} violation {constraint_violation:e} converged {converged} in {iterations} iterations"
    );
    Ok(OcpSolution {
        controls: u,
        trajectory,
        objective,
        iterations,
        outer_iterations: outer,
        converged,
        constraint_violation,
        merit_history,
        wall_time: started.elapsed(),
    })
}

/// Which bound a contact interval touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Maximal run of grid points with `l` within `tol` of one bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundContact {
    pub side: Side,
    pub first: usize,
    pub last: usize,
    pub phi_start: f64,
    pub phi_end: f64,
}

pub fn bound_contacts(traj: &Trajectory, bounds: &Bounds, tol: f64) -> Vec<BoundContact> {
    let side_of = |l: f64| {
        if (l - bounds.l_max).abs() <= tol {
            Some(Side::Upper)
        } else if (l - bounds.l_min).abs() <= tol {
            Some(Side::Lower)
        } else {
            None
        }
    };
    let mut out: Vec<BoundContact> = Vec::new();
    for (k, s) in traj.states.iter().enumerate() {
        let Some(side) = side_of(s.l) else { continue };
        match out.last_mut() {
            Some(c) if c.side == side && c.last + 1 == k => {
                c.last = k;
                c.phi_end = s.phi;
            }
            _ => out.push(BoundContact { side, first: k, last: k, phi_start: s.phi, phi_end: s.phi }),
        }
    }
    out
}

/// Comparison of a pumped run against coasting at fixed `l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LapComparison {
    pub terminal_phi: f64,
    pub pumped_time: f64,
    pub coast_time: f64,
    /// `(coast_time - pumped_time) / coast_time`.
    pub reduction: f64,
}

/// Time the coasting system at `l_fixed` needs to reach the pumped run's
/// terminal azimuth.
pub fn lap_comparison(scenario: &Scenario, traj: &Trajectory, l_fixed: f64) -> Result<LapComparison> {
    let terminal_phi = traj.terminal().phi;
    let pumped_time = *traj.times.last().expect("non-empty trajectory");
    let coast_time = coast_time_to(scenario, terminal_phi, l_fixed)?;
    Ok(LapComparison { terminal_phi, pumped_time, coast_time, reduction: (coast_time - pumped_time) / coast_time })
}

/// Speed gain between the straight at `x0.phi` and the straight after the
/// first curve (`x0.phi + pi`).
pub fn curve_one_gain(scenario: &Scenario, traj: &Trajectory) -> Result<f64> {
    let phi0 = scenario.x0.phi;
    speed_gain(traj, phi0, phi0 + std::f64::consts::PI)
}

/// Key-value report of a solve.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub constraint_violation: f64,
    pub speed_gain_curve_one: Option<f64>,
    pub terminal_phi: f64,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, sol: &OcpSolution) -> Self {
        Self {
            objective: sol.objective,
            iterations: sol.iterations,
            converged: sol.converged,
            constraint_violation: sol.constraint_violation,
            speed_gain_curve_one: curve_one_gain(scenario, &sol.trajectory).ok(),
            terminal_phi: sol.trajectory.terminal().phi,
            wall_time: sol.wall_time,
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "objective = {}", sig(self.objective))?;
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "converged = {}", self.converged)?;
        writeln!(f, "max_constraint_violation = {}", sig(self.constraint_violation))?;
        match self.speed_gain_curve_one {
            Some(dv) => writeln!(f, "delta_v_curve_one = {}", sig(dv))?,
            None => writeln!(f, "delta_v_curve_one = unreached")?,
        }
        writeln!(f, "terminal_phi = {}", sig(self.terminal_phi))?;
        writeln!(f, "wall_time_s = {}", sig(self.wall_time.as_secs_f64()))
    }
}
