//! Flat `key=value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! skipped. Unknown keys and repeated keys are errors, so a typo never
//! silently falls back to a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::approx::{ApproxParams, RadiusSchedule};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Cylinder, Height, Plane, Point};
use crate::numeric::{parse_f64, Exponent};
use crate::varifold::Constants;

/// Parses `key=value` lines into an ordered map.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key {k:?}"),
            });
        }
    }
    Ok(out)
}

/// Takes entries out of a parsed map, rejecting leftovers at the end.
struct Entries(BTreeMap<String, String>);

impl Entries {
    fn take<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        match self.0.remove(key) {
            Some(v) => parse(&v).map(Some).map_err(|e| invalid(format!("{key}: {e}"))),
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(invalid(format!("unknown configuration key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| invalid(format!("cannot parse integer {s:?}")))
}

fn parse_exponent(s: &str) -> Result<Exponent> {
    s.parse()
}

/// Colon-separated numbers, e.g. `0:0:0.5`.
pub fn parse_point(s: &str) -> Result<Point> {
    let xs = s.split(':').map(parse_f64).collect::<Result<Vec<f64>>>()?;
    Ok(Point::from_vec(xs))
}

/// A coordinate plane given by colon-separated axis indices, e.g. `0:1`.
pub fn parse_axes(s: &str, ambient_dim: usize) -> Result<Plane> {
    let axes = s.split(':').map(parse_usize).collect::<Result<Vec<usize>>>()?;
    Plane::coordinate(ambient_dim, &axes)
}

/// `a,r,h,T` with `a` a colon-separated point, `h` a number or `inf`, and
/// `T` colon-separated coordinate axes: `0:0:0,0.5,0.5,0:1`.
pub fn parse_cylinder(s: &str) -> Result<Cylinder> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(invalid(format!("cylinder must be a,r,h,T, got {s:?}")));
    }
    let center = parse_point(parts[0])?;
    let axis = parse_axes(parts[3], center.len())?;
    Cylinder::new(center, parse_f64(parts[1])?, Height::new(parse_f64(parts[2])?)?, axis)
}

/// Inputs of the experiment drivers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Tilt exponent of the fixed-scale inequality.
    pub q: Exponent,
    /// Tilt exponent of the decay experiment.
    pub q1: Exponent,
    /// Height exponent of the decay experiment.
    pub q2: Exponent,
    pub alpha: f64,
    /// Curvature integrability exponent.
    pub p: f64,
    /// Largest decay radius; radii are `r0 · 2^{-k}` for `k < levels`.
    pub r0: f64,
    pub levels: usize,
    /// Atom spacing; each driver picks a default when absent.
    pub mesh: Option<f64>,
    /// Fiber cell width; defaults to the mesh.
    pub cell_width: Option<f64>,
    pub constants: Constants,
    /// Threshold defining `A` and bounding the first variation and tilt.
    pub eps: f64,
    pub eps1: f64,
    /// `δ_1..δ_5` of the approximation construction.
    pub approx_delta: [Option<f64>; 5],
    /// `δ` of the fixed-scale theorem and of the monotonicity checks.
    pub delta: f64,
    pub lip: f64,
    /// Mass bound `M`; the fixed-scale default is `12 Q`.
    pub mass_bound: Option<f64>,
    /// Fixed-scale cylinder radius and height.
    pub radius: f64,
    pub height: f64,
    pub schedule: RadiusSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            q: Exponent::Finite(1.0),
            q1: Exponent::Finite(1.0),
            q2: Exponent::Finite(2.0),
            alpha: 1.0,
            p: 1.0,
            r0: 0.4,
            levels: 5,
            mesh: None,
            cell_width: None,
            constants: Constants::for_dim(2),
            eps: 1.0,
            eps1: 0.1,
            approx_delta: [None; 5],
            delta: 0.5,
            lip: 1.0,
            mass_bound: None,
            radius: 0.5,
            height: 0.5,
            schedule: RadiusSchedule::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a configuration for an `n`-dimensional scenario.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut e = Entries(parse_key_values(text)?);
        let mut c = Self {
            constants: Constants::for_dim(n),
            ..Self::default()
        };
        if let Some(v) = e.take("q", parse_exponent)? {
            c.q = v;
        }
        if let Some(v) = e.take("q1", parse_exponent)? {
            c.q1 = v;
        }
        if let Some(v) = e.take("q2", parse_exponent)? {
            c.q2 = v;
        }
        if let Some(v) = e.take("alpha", parse_f64)? {
            c.alpha = v;
        }
        if let Some(v) = e.take("p", parse_f64)? {
            c.p = v;
        }
        if let Some(v) = e.take("r0", parse_f64)? {
            c.r0 = v;
        }
        if let Some(v) = e.take("levels", parse_usize)? {
            c.levels = v;
        }
        c.mesh = e.take("mesh", parse_f64)?;
        c.cell_width = e.take("cell_width", parse_f64)?;
        if let Some(v) = e.take("gamma", parse_f64)? {
            c.constants = c.constants.with_isoperimetric_gamma(v)?;
        }
        if let Some(v) = e.take("besicovitch", parse_f64)? {
            c.constants = c.constants.with_besicovitch(v)?;
        }
        if let Some(v) = e.take("eps", parse_f64)? {
            c.eps = v;
        }
        if let Some(v) = e.take("eps1", parse_f64)? {
            c.eps1 = v;
        }
        for (i, slot) in c.approx_delta.iter_mut().enumerate() {
            *slot = e.take(&format!("delta{}", i + 1), parse_f64)?;
        }
        if let Some(v) = e.take("delta", parse_f64)? {
            c.delta = v;
        }
        if let Some(v) = e.take("lip", parse_f64)? {
            c.lip = v;
        }
        c.mass_bound = e.take("mass_bound", parse_f64)?;
        if let Some(v) = e.take("radius", parse_f64)? {
            c.radius = v;
        }
        if let Some(v) = e.take("height", parse_f64)? {
            c.height = v;
        }
        let count = e.take("schedule_count", parse_usize)?;
        let ratio = e.take("schedule_ratio", parse_f64)?;
        if count.is_some() || ratio.is_some() {
            let RadiusSchedule::Geometric { count: c0, ratio: r0 } = RadiusSchedule::default() else {
                unreachable!("the default schedule is geometric")
            };
            c.schedule = RadiusSchedule::Geometric {
                count: count.unwrap_or(c0),
                ratio: ratio.unwrap_or(r0),
            };
        }
        e.finish()?;
        c.validate(n)?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, n)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.p >= 1.0 && self.p <= n as f64) {
            return Err(invalid(format!("p must lie in [1, {n}], got {}", self.p)));
        }
        let positive = [("r0", self.r0), ("radius", self.radius), ("height", self.height), ("delta", self.delta)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.delta > 1.0 {
            return Err(invalid("delta must lie in (0, 1]"));
        }
        if self.levels == 0 {
            return Err(invalid("levels must be positive"));
        }
        for (name, v) in [("mesh", self.mesh), ("cell_width", self.cell_width), ("mass_bound", self.mass_bound)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{name} must be positive and finite, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Decay radii `r0 · 2^{-k}`, `k = 0..levels`.
    pub fn decay_radii(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.r0 * 0.5f64.powi(k as i32)).collect()
    }

    /// Violations of the exponent conditions of the decay theorem.
    ///
    /// For `p < n`: `1 <= q1 < n` and
    /// `q2 <= min{n q1/(n - q1), (1/α) n p/(n - p)}`. For `p = n`: `q1 > n`.
    pub fn limit_mode_violations(&self, n: usize) -> Vec<String> {
        let nf = n as f64;
        let mut out = Vec::new();
        if self.p < nf {
            let q1 = self.q1.value();
            if q1 >= nf {
                out.push(format!("limit_mode: q1={} must be < n={n} when p < n", self.q1));
                return out;
            }
            let bound = (nf * q1 / (nf - q1)).min(nf * self.p / ((nf - self.p) * self.alpha));
            if self.q2.value() > bound * (1.0 + 1e-12) {
                out.push(format!("limit_mode: q2={} exceeds min(n q1/(n-q1), n p/((n-p) alpha))={bound}", self.q2));
            }
        } else if self.q1.value() <= nf {
            out.push(format!("limit_mode: q1={} must be > n={n} when p = n", self.q1));
        }
        out
    }

    /// Approximation parameters for `Q` sheets, filling unset entries from
    /// [`ApproxParams::new`].
    pub fn approx_params(&self, q: usize, n: usize) -> ApproxParams {
        let mut params = ApproxParams::new(q, n, &self.constants);
        params.eps = self.eps;
        params.eps1 = self.eps1.min(self.eps);
        for (slot, v) in params.delta.iter_mut().zip(self.approx_delta) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        params.lip = self.lip;
        if let Some(m) = self.mass_bound {
            params.mass_bound = m;
        }
        params.schedule = self.schedule.clone();
        params.cell_width = self.cell_width;
        params
    }
}

/// Approximation parameters and the cylinder, read from one flat file.
///
/// Cylinder keys are `center` (colon-separated point), `radius`, `height`
/// and `axes` (colon-separated coordinate indices); the remaining keys are
/// `q`, `eps`, `eps1`, `delta1..delta5`, `lip`, `mass_bound`,
/// `cell_width`, `schedule_count`, `schedule_ratio`, `gamma` and
/// `besicovitch`.
pub fn parse_approx_file(text: &str, n: usize) -> Result<(Cylinder, ApproxParams, Constants)> {
    let mut e = Entries(parse_key_values(text)?);
    let center = e.take("center", parse_point)?.ok_or_else(|| invalid("missing key center"))?;
    let radius = e.take("radius", parse_f64)?.ok_or_else(|| invalid("missing key radius"))?;
    let height = e.take("height", parse_f64)?.unwrap_or(f64::INFINITY);
    let axes = e.take("axes", |s| parse_axes(s, center.len()))?;
    let axis = match axes {
        Some(a) => a,
        None => Plane::coordinate(center.len(), &(0..n).collect::<Vec<_>>())?,
    };
    let cylinder = Cylinder::new(center, radius, Height::new(height)?, axis)?;
    let mut constants = Constants::for_dim(n);
    if let Some(v) = e.take("gamma", parse_f64)? {
        constants = constants.with_isoperimetric_gamma(v)?;
    }
    if let Some(v) = e.take("besicovitch", parse_f64)? {
        constants = constants.with_besicovitch(v)?;
    }
    let q = e.take("q", parse_usize)?.unwrap_or(1);
    let mut params = ApproxParams::new(q, n, &constants);
    if let Some(v) = e.take("eps", parse_f64)? {
        params.eps = v;
    }
    if let Some(v) = e.take("eps1", parse_f64)? {
        params.eps1 = v;
    }
    for i in 0..5 {
        if let Some(v) = e.take(&format!("delta{}", i + 1), parse_f64)? {
            params.delta[i] = v;
        }
    }
    if let Some(v) = e.take("lip", parse_f64)? {
        params.lip = v;
    }
    if let Some(v) = e.take("mass_bound", parse_f64)? {
        params.mass_bound = v;
    }
    params.cell_width = e.take("cell_width", parse_f64)?;
    let count = e.take("schedule_count", parse_usize)?;
    let ratio = e.take("schedule_ratio", parse_f64)?;
    if let RadiusSchedule::Geometric { count: c0, ratio: r0 } = params.schedule {
        params.schedule = RadiusSchedule::Geometric {
            count: count.unwrap_or(c0),
            ratio: ratio.unwrap_or(r0),
        };
    }
    e.finish()?;
    params.validate(n, &constants)?;
    Ok((cylinder, params, constants))
}
