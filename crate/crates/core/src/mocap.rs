//! Motion-capture post-processing: rider centre of mass from marker
//! trajectories, rider-to-bike distance, its second derivative, and the
//! box limits that feed the optimal control problem.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::geometry::Vec3;
use crate::simulate::Bounds;

pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;

const DEFAULT_SEGMENTS: &str = include_str!("../data/segments_default.csv");

/// Relative tolerance on the spacing of timestamps.
const UNIFORM_TOL: f64 = 1e-6;

/// Named 3-D marker positions, one row per frame.
///
/// A `None` entry is a marker that was not tracked in that frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSeries {
    pub sample_rate: f64,
    pub start_time: f64,
    names: Vec<String>,
    frames: Vec<Vec<Option<Vec3>>>,
}

impl MarkerSeries {
    pub fn new(sample_rate: f64, names: Vec<String>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::invalid(format!("duplicate marker `{n}`")));
            }
        }
        Ok(Self { sample_rate, start_time: 0.0, names, frames: Vec::new() })
    }

    pub fn push_frame(&mut self, frame: Vec<Option<Vec3>>) -> Result<()> {
        if frame.len() != self.names.len() {
            return Err(Error::LengthMismatch(frame.len(), self.names.len()));
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn index_of(&self, marker: &str) -> Option<usize> {
        self.names.iter().position(|n| n == marker)
    }

    pub fn get(&self, frame: usize, marker: usize) -> Option<Vec3> {
        self.frames.get(frame).and_then(|f| f.get(marker).copied().flatten())
    }

    /// Full trajectory of one marker; fails on the first untracked frame.
    pub fn track(&self, marker: &str) -> Result<Vec<Vec3>> {
        let missing = |frame| Error::MissingMarker { frame, marker: marker.to_string() };
        let j = self.index_of(marker).ok_or_else(|| missing(0))?;
        (0..self.len()).map(|k| self.get(k, j).ok_or_else(|| missing(k))).collect()
    }

    /// Reads `t,<marker>_x,<marker>_y,<marker>_z,...`. Empty or `nan` cells
    /// mark an untracked marker.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(f, path)
    }

    pub fn from_reader<R: Read>(rdr: R, path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(rdr);
        let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        if cols.first() != Some(&"t") {
            return Err(Error::parse(path, 1, "first column must be `t`"));
        }
        if (cols.len() - 1) % 3 != 0 || cols.len() == 1 {
            return Err(Error::parse(path, 1, "expected `t` followed by x,y,z column triples"));
        }
        let mut names = Vec::new();
        for triple in cols[1..].chunks(3) {
            let name = triple[0]
                .strip_suffix("_x")
                .ok_or_else(|| Error::parse(path, 1, format!("column `{}` should end in `_x`", triple[0])))?;
            for (c, axis) in triple.iter().zip(["_x", "_y", "_z"]) {
                if c.strip_suffix(axis) != Some(name) {
                    return Err(Error::parse(path, 1, format!("expected `{name}{axis}`, found `{c}`")));
                }
            }
            names.push(name.to_string());
        }
        let mut out = Self::new(DEFAULT_SAMPLE_RATE, names)?;
        let mut times = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            let line = record_line(&rec);
            if rec.len() != cols.len() {
                return Err(Error::parse(path, line, format!("expected {} fields, found {}", cols.len(), rec.len())));
            }
            times.push(parse_number(rec.get(0).unwrap_or(""), path, line, "t")?);
            let mut frame = Vec::with_capacity(out.names.len());
            for j in 0..out.names.len() {
                let mut xyz = [0.0; 3];
                let mut present = true;
                for (a, v) in xyz.iter_mut().enumerate() {
                    let cell = rec.get(1 + 3 * j + a).unwrap_or("").trim();
                    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                        present = false;
                    } else {
                        *v = parse_number(cell, path, line, cols[1 + 3 * j + a])?;
                    }
                }
                frame.push(present.then(|| Vec3::new(xyz[0], xyz[1], xyz[2])));
            }
            out.frames.push(frame);
        }
        if let Some((rate, t0)) = sampling(&times, path)? {
            out.sample_rate = rate;
            out.start_time = t0;
        }
        Ok(out)
    }
}

/// One segment of the rigid-body rider model.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub mass_fraction: f64,
    pub proximal: String,
    pub distal: String,
    /// Position of the segment CoM along proximal→distal, in `[0, 1]`.
    pub com_ratio: f64,
}

impl Segment {
    pub fn com(&self, proximal: Vec3, distal: Vec3) -> Vec3 {
        proximal + (distal - proximal) * self.com_ratio
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentModel {
    segments: Vec<Segment>,
}

impl SegmentModel {
    pub const FRACTION_TOL: f64 = 1e-6;

    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("segment model has no segments"));
        }
        for s in &segments {
            if !(s.mass_fraction >= 0.0 && s.mass_fraction.is_finite()) {
                return Err(Error::invalid(format!("segment `{}`: mass fraction must be non-negative", s.name)));
            }
            if !(0.0..=1.0).contains(&s.com_ratio) {
                return Err(Error::invalid(format!("segment `{}`: CoM ratio must lie in [0, 1]", s.name)));
            }
        }
        let total: f64 = segments.iter().map(|s| s.mass_fraction).sum();
        if (total - 1.0).abs() > Self::FRACTION_TOL {
            return Err(Error::invalid(format!("mass fractions sum to {total}, expected 1")));
        }
        Ok(Self { segments })
    }

    /// Generic adult anthropometric model with 16 segments, loaded from the
    /// bundled table.
    pub fn default_16() -> Self {
        Self::from_reader(DEFAULT_SEGMENTS.as_bytes(), Path::new("segments_default.csv"))
            .expect("bundled segment table is valid")
    }

    /// Reads `segment,mass_fraction,proximal,distal,com_ratio` with `#` comments.
    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, path)
    }

    pub fn from_reader<R: Read>(rdr: R, path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(rdr);
        let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
        let want = ["segment", "mass_fraction", "proximal", "distal", "com_ratio"];
        if header.iter().map(str::trim).ne(want) {
            return Err(Error::parse(path, record_line(&header), format!("header must be `{}`", want.join(","))));
        }
        let mut segments = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            let line = record_line(&rec);
            if rec.len() != want.len() {
                return Err(Error::parse(path, line, format!("expected {} fields", want.len())));
            }
            segments.push(Segment {
                name: rec[0].trim().to_string(),
                mass_fraction: parse_number(&rec[1], path, line, "mass_fraction")?,
                proximal: rec[2].trim().to_string(),
                distal: rec[3].trim().to_string(),
                com_ratio: parse_number(&rec[4], path, line, "com_ratio")?,
            });
        }
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Uniformly sampled scalar signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSeries {
    pub sample_rate: f64,
    pub start_time: f64,
    values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(sample_rate: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {k} is not finite")));
        }
        Ok(Self { sample_rate, start_time: 0.0, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    /// Reads a two-column `t,<name>` file. A single sample gets the default
    /// 100 Hz rate.
    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, path)
    }

    pub fn from_reader<R: Read>(rdr: R, path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(rdr);
        let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
        if header.len() != 2 || header[0].trim() != "t" {
            return Err(Error::parse(path, 1, "expected a `t,<value>` header"));
        }
        let name = header[1].trim().to_string();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            let line = record_line(&rec);
            if rec.len() != 2 {
                return Err(Error::parse(path, line, format!("expected 2 fields, found {}", rec.len())));
            }
            times.push(parse_number(&rec[0], path, line, "t")?);
            values.push(parse_number(&rec[1], path, line, &name)?);
        }
        if values.is_empty() {
            return Err(Error::parse(path, 1, "no samples"));
        }
        let mut s = Self::new(DEFAULT_SAMPLE_RATE, values)?;
        if let Some((rate, t0)) = sampling(&times, path)? {
            s.sample_rate = rate;
            s.start_time = t0;
        } else {
            s.start_time = times[0];
        }
        Ok(s)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, name: &str) -> Result<()> {
        writeln!(w, "t,{name}")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", sig(self.time(k)), sig(*v))?;
        }
        Ok(())
    }
}

/// Mass-weighted sum of the segment centres of mass, frame by frame.
pub fn rider_com(markers: &MarkerSeries, model: &SegmentModel) -> Result<Vec<Vec3>> {
    let mut lookup: HashMap<&str, usize> = HashMap::new();
    for (j, n) in markers.names().iter().enumerate() {
        lookup.insert(n.as_str(), j);
    }
    let resolve = |name: &str| {
        lookup.get(name).copied().ok_or_else(|| Error::MissingMarker { frame: 0, marker: name.to_string() })
    };
    let idx = model
        .segments()
        .iter()
        .map(|s| Ok((resolve(&s.proximal)?, resolve(&s.distal)?)))
        .collect::<Result<Vec<_>>>()?;

    (0..markers.len())
        .map(|k| {
            let fetch = |j: usize| {
                markers.get(k, j).ok_or_else(|| Error::MissingMarker { frame: k, marker: markers.names()[j].clone() })
            };
            let mut com = Vec3::new(0.0, 0.0, 0.0);
            for (s, &(p, d)) in model.segments().iter().zip(&idx) {
                com = com + s.com(fetch(p)?, fetch(d)?) * s.mass_fraction;
            }
            Ok(com)
        })
        .collect()
}

/// Euclidean distance between two point tracks.
pub fn distance_series(a: &[Vec3], b: &[Vec3], sample_rate: f64) -> Result<ScalarSeries> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    ScalarSeries::new(sample_rate, a.iter().zip(b).map(|(p, q)| (*p - *q).norm()).collect())
}

/// Distance between the `com` and `ref` tracks of a two-point capture.
pub fn two_point_distance(markers: &MarkerSeries) -> Result<ScalarSeries> {
    let mut s = distance_series(&markers.track("com")?, &markers.track("ref")?, markers.sample_rate)?;
    s.start_time = markers.start_time;
    Ok(s)
}

/// Second derivative by finite differences.
///
/// Interior points use the three-point central stencil. The ends use the
/// four-point one-sided stencil `(2, -5, 4, -1)`, which is second-order
/// accurate; with exactly three samples only the three-point one-sided
/// stencil is available. A centred moving average of `smoothing` samples
/// (odd, shrinking near the ends) may be applied first.
pub fn accel_series(l: &ScalarSeries, smoothing: Option<usize>) -> Result<ScalarSeries> {
    let n = l.len();
    if n < 3 {
        return Err(Error::TooShort { need: 3, got: n });
    }
    let x = match smoothing {
        Some(w) if w > 1 => moving_average(l.values(), w)?,
        _ => l.values().to_vec(),
    };
    let inv_h2 = l.sample_rate * l.sample_rate;
    let mut a = vec![0.0; n];
    for k in 1..n - 1 {
        a[k] = (x[k + 1] - 2.0 * x[k] + x[k - 1]) * inv_h2;
    }
    if n == 3 {
        a[0] = a[1];
        a[2] = a[1];
    } else {
        a[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) * inv_h2;
        a[n - 1] = (2.0 * x[n - 1] - 5.0 * x[n - 2] + 4.0 * x[n - 3] - x[n - 4]) * inv_h2;
    }
    let mut out = ScalarSeries::new(l.sample_rate, a)?;
    out.start_time = l.start_time;
    Ok(out)
}

fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(Error::invalid(format!("smoothing window must be odd, got {window}")));
    }
    let half = window / 2;
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            let r = half.min(k).min(n - 1 - k);
            let s = &x[k - r..=k + r];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect())
}

/// Extremes of the link length and its acceleration as optimisation limits.
pub fn extract_bounds(l: &ScalarSeries, a: &ScalarSeries) -> Result<Bounds> {
    let (l_min, l_max) = extremes(l.values()).ok_or(Error::TooShort { need: 1, got: 0 })?;
    let (u_min, u_max) = extremes(a.values()).ok_or(Error::TooShort { need: 1, got: 0 })?;
    Ok(Bounds { l_min, l_max, u_min, u_max })
}

fn extremes(v: &[f64]) -> Option<(f64, f64)> {
    let first = *v.first()?;
    Some(v.iter().fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x))))
}

/// `key = value` block accepted by the scenario configuration parser.
pub struct BoundsReport<'a>(pub &'a Bounds);

impl fmt::Display for BoundsReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        writeln!(f, "l_min = {}", sig(b.l_min))?;
        writeln!(f, "l_max = {}", sig(b.l_max))?;
        writeln!(f, "u_min = {}", sig(b.u_min))?;
        writeln!(f, "u_max = {}", sig(b.u_max))
    }
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).trim(csv::Trim::All).from_reader(rdr)
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::parse(path, line, format!("read failed: {e}")),
        _ => Error::parse(path, line, e.to_string()),
    }
}

fn parse_number(cell: &str, path: &Path, line: usize, col: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::parse(path, line, format!("`{col}`: cannot parse `{cell}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("`{col}`: non-finite value")));
    }
    Ok(v)
}

/// Sample rate and start time from timestamps, checking they are strictly
/// increasing and evenly spaced. `None` for fewer than two samples.
fn sampling(times: &[f64], path: &Path) -> Result<Option<(f64, f64)>> {
    if times.len() < 2 {
        return Ok(None);
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (k, w) in times.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) {
            return Err(Error::parse(path, k + 3, "timestamps must be strictly increasing"));
        }
        if (d - dt).abs() > UNIFORM_TOL * dt.max(1.0) {
            return Err(Error::parse(path, k + 3, format!("non-uniform sampling: step {d} vs mean {dt}")));
        }
    }
    Ok(Some((1.0 / dt, times[0])))
}
