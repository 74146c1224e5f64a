//! Flat `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment, vector values are
//! whitespace or comma separated. Keys absent from a file keep their
//! defaults. Serialisation writes every key with the shortest decimal that
//! parses back to the same `f64`, so parse and serialise are inverse.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ocp::{GradMode, SolverOptions};
use crate::simulate::Scenario;

/// Every recognised key, in serialisation order.
pub const KEYS: [&str; 19] = [
    "R", "r", "lambda", "m_b", "m_r", "g_grav", "T", "h", "q", "x0", "l_min", "l_max", "u_min", "u_max",
    "corridor_margin", "max_iters", "feas_tol", "grad_mode", "max_outer",
];

/// Keys written by a bounds report.
pub const BOUNDS_KEYS: [&str; 4] = ["l_min", "l_max", "u_min", "u_max"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub solver: SolverOptions,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses onto the defaults and validates the result.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg = Self::default().overlay(text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` on top of `self` without validating.
    pub fn overlay(mut self, text: &str, path: &Path) -> Result<Self> {
        let mut seen = HashSet::new();
        for (line, key, value) in assignments(text, path)? {
            if !seen.insert(key) {
                return Err(Error::parse(path, line, format!("duplicate key `{key}`")));
            }
            self.set(key, value).map_err(|msg| Error::parse(path, line, msg))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let s = &self.solver;
        if s.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if s.max_outer == 0 {
            return Err(Error::invalid("max_outer must be positive"));
        }
        if !(s.feas_tol > 0.0 && s.feas_tol.is_finite()) {
            return Err(Error::invalid("feas_tol must be positive"));
        }
        if let Some(m) = self.scenario.corridor_margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid("corridor_margin must be non-negative"));
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let sc = &mut self.scenario;
        match key {
            "R" => sc.geom.major_radius = num(value)?,
            "r" => sc.geom.tube_radius = num(value)?,
            "lambda" => sc.geom.stretch = num(value)?,
            "m_b" => sc.params.bike_mass = num(value)?,
            "m_r" => sc.params.rider_mass = num(value)?,
            "g_grav" => sc.params.gravity = num(value)?,
            "T" => sc.horizon = num(value)?,
            "h" => sc.step = num(value)?,
            "q" => sc.q = vec4(value)?,
            "x0" => {
                let [phi, phidot, l, ldot] = vec4(value)?;
                sc.x0.phi = phi;
                sc.x0.phidot = phidot;
                sc.x0.l = l;
                sc.x0.ldot = ldot;
            }
            "l_min" => sc.bounds.l_min = num(value)?,
            "l_max" => sc.bounds.l_max = num(value)?,
            "u_min" => sc.bounds.u_min = num(value)?,
            "u_max" => sc.bounds.u_max = num(value)?,
            "corridor_margin" => {
                sc.corridor_margin = if value == "none" { None } else { Some(num(value)?) };
            }
            "max_iters" => self.solver.max_iters = count(value)?,
            "max_outer" => self.solver.max_outer = count(value)?,
            "feas_tol" => self.solver.feas_tol = num(value)?,
            "grad_mode" => self.solver.grad_mode = value.parse::<GradMode>().map_err(|e| e.to_string())?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Value of one key as it would be serialised.
    pub fn get(&self, key: &str) -> Option<String> {
        let sc = &self.scenario;
        let x = &sc.x0;
        Some(match key {
            "R" => sc.geom.major_radius.to_string(),
            "r" => sc.geom.tube_radius.to_string(),
            "lambda" => sc.geom.stretch.to_string(),
            "m_b" => sc.params.bike_mass.to_string(),
            "m_r" => sc.params.rider_mass.to_string(),
            "g_grav" => sc.params.gravity.to_string(),
            "T" => sc.horizon.to_string(),
            "h" => sc.step.to_string(),
            "q" => join(&sc.q),
            "x0" => join(&[x.phi, x.phidot, x.l, x.ldot]),
            "l_min" => sc.bounds.l_min.to_string(),
            "l_max" => sc.bounds.l_max.to_string(),
            "u_min" => sc.bounds.u_min.to_string(),
            "u_max" => sc.bounds.u_max.to_string(),
            "corridor_margin" => sc.corridor_margin.map_or_else(|| "none".to_string(), |m| m.to_string()),
            "max_iters" => self.solver.max_iters.to_string(),
            "max_outer" => self.solver.max_outer.to_string(),
            "feas_tol" => self.solver.feas_tol.to_string(),
            "grad_mode" => self.solver.grad_mode.to_string(),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }
}

/// Rewrites `text` so that each `(key, value)` pair is assigned exactly once.
/// Existing assignments are replaced in place, keeping comments and layout;
/// keys not yet present are appended.
pub fn merge_assignments(text: &str, updates: &[(&str, String)]) -> String {
    let mut done = vec![false; updates.len()];
    let mut out = String::new();
    for raw in text.lines() {
        let key = raw.split('#').next().and_then(|s| s.split_once('=')).map(|(k, _)| k.trim());
        match key.and_then(|k| updates.iter().position(|(u, _)| *u == k)) {
            Some(i) if done[i] => {}
            Some(i) => {
                let comment = raw.find('#').map(|p| &raw[p..]);
                let _ = write!(out, "{} = {}", updates[i].0, updates[i].1);
                if let Some(c) = comment {
                    let _ = write!(out, "  {c}");
                }
                out.push('\n');
                done[i] = true;
            }
            None => {
                out.push_str(raw);
                out.push('\n');
            }
        }
    }
    for (i, (k, v)) in updates.iter().enumerate() {
        if !done[i] {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

fn assignments<'a>(text: &'a str, path: &Path) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line, format!("expected `key = value`, found `{body}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::parse(path, line, "empty key or value"));
        }
        out.push((line, k, v));
    }
    Ok(out)
}

fn num(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("cannot parse `{s}` as a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}` as a non-negative integer"))
}

fn vec4(s: &str) -> std::result::Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()).collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 values, found {}", parts.len()));
    }
    let mut v = [0.0; 4];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = num(p)?;
    }
    Ok(v)
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
R = 3
r = 1
lambda = 3
m_b = 15
m_r = 80
g_grav = 9.8067
T = 5
h = 0.01
q = -65 -65 0 0
x0 = 0 1.0471975511965979 0.43681 0
l_min = 0.278028432325324
l_max = 0.595589962783839
u_min = -8.66483516272901
u_max = 30.1478116762068
corridor_margin = 0.05
max_iters = 20000
feas_tol = 0.0001
grad_mode = adjoint
max_outer = 40
";

    fn p() -> &'static Path {
        Path::new("test.cfg")
    }

    #[test]
    fn defaults_match_golden() {
        assert_eq!(ScenarioConfig::default().to_text(), GOLDEN);
        assert_eq!(ScenarioConfig::parse(GOLDEN, p()).unwrap(), ScenarioConfig::default());
        assert_eq!(ScenarioConfig::parse("", p()).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn round_trip_on_odd_values() {
        let text = "R = 2.5\nq = -1e-300, 3.141592653589793, 0.1 7\nx0 = 0.2 2 0.5 -0.125\nT = 0.3\nh = 0.1\n\
                    corridor_margin = none\ngrad_mode = fd\nmax_iters = 7\n";
        let a = ScenarioConfig::parse(text, p()).unwrap();
        let b = ScenarioConfig::parse(&a.to_text(), p()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenario.q[0], -1e-300);
        assert_eq!(a.scenario.corridor_margin, None);
        assert_eq!(a.solver.grad_mode, GradMode::ForwardDifference);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ScenarioConfig::parse("# header\n\n  m_r = 70   # lighter rider\n", p()).unwrap();
        assert_eq!(c.scenario.params.rider_mass, 70.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match ScenarioConfig::parse(text, p()) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("R = 3\nbogus = 1\n"), 2);
        assert_eq!(line_of("\n\nq = 1 2 3\n"), 3);
        assert_eq!(line_of("h 0.01\n"), 1);
        assert_eq!(line_of("T = 5\nT = 6\n"), 2);
        assert_eq!(line_of("g_grav = inf\n"), 1);
    }

    #[test]
    fn validation_names_the_invariant() {
        let err = ScenarioConfig::parse("l_min = 0.6\nl_max = 0.5\n", p()).unwrap_err().to_string();
        assert!(err.contains("l_min") && err.contains("l_max"), "{err}");
    }

    #[test]
    fn merge_replaces_and_appends() {
        let text = "# mine\nR = 4\nl_min = 0.1  # old\n";
        let merged = merge_assignments(text, &[("l_min", "0.2".into()), ("u_max", "9".into())]);
        assert_eq!(merged, "# mine\nR = 4\nl_min = 0.2  # old\nu_max = 9\n");
    }
}
