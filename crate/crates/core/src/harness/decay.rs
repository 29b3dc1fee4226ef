//! Height and tilt decay at probe points with known tangent plane.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{Plane, Point};
use crate::numeric::{fmt_f64, lq_norm, Exponent};
use crate::varifold::DiscreteVarifold;

use super::config::ExperimentConfig;
use super::fixed_scale::side_ratio;
use super::report::{DecayRow, Report, Summary};
use super::scenario::{Probe, Scenario};

/// Radii below `RESOLUTION · mesh` are not used for the estimates.
pub const RESOLUTION: f64 = 8.0;
/// Number of smallest usable radii entering the limsup estimate.
pub const WINDOW: usize = 3;

/// Normalized height and tilt of `μ ⌞ B(a, r)` relative to `t`.
///
/// For `p < n` the height is
/// `r^{-α-1-n/q2} ‖dist(· - a, T)‖_{L^{q2}}` and for `p = n` it is
/// `r^{-α-1} ‖dist(· - a, T)‖_{L^∞}`; the tilt is
/// `r^{-α-n/q1} ‖P - P_T‖_{L^{q1}}`. Balls are open.
pub fn decay_pair(v: &DiscreteVarifold, a: &Point, t: &Plane, r: f64, cfg: &ExperimentConfig) -> (f64, f64) {
    let n = v.n() as f64;
    let mut dists = Vec::new();
    let mut tilts = Vec::new();
    for atom in v.atoms() {
        let d = &atom.position - a;
        if d.norm() < r {
            dists.push((t.dist(&d), atom.mass()));
            tilts.push((atom.tangent.dist_sq_unchecked(t).sqrt(), atom.mass()));
        }
    }
    let q2 = if cfg.p < n { cfg.q2 } else { Exponent::Infinity };
    let lhs = r.powf(-cfg.alpha - 1.0 - n * q2.reciprocal()) * lq_norm(dists, q2);
    let rhs = r.powf(-cfg.alpha - n * cfg.q1.reciprocal()) * lq_norm(tilts, cfg.q1);
    (lhs, rhs)
}

/// Limsup estimates for one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayEstimate {
    pub probe: usize,
    /// Maximum over the [`WINDOW`] smallest usable radii (NaN without any).
    pub lhs_limsup: f64,
    pub rhs_limsup: f64,
    pub ratio: f64,
    /// Maximum over every usable radius.
    pub lhs_sup: f64,
    pub rhs_sup: f64,
    pub usable: usize,
    pub flags: Vec<String>,
}

/// Estimates per probe from decay rows, in probe order.
pub fn decay_estimates(rows: &[DecayRow]) -> Vec<DecayEstimate> {
    let mut probes: Vec<usize> = rows.iter().map(|r| r.probe).collect();
    probes.sort_unstable();
    probes.dedup();
    probes
        .into_iter()
        .map(|probe| {
            let mut usable: Vec<&DecayRow> = rows.iter().filter(|r| r.probe == probe && r.usable).collect();
            usable.sort_by(|a, b| b.r.total_cmp(&a.r));
            let max = |it: &[&DecayRow], f: fn(&DecayRow) -> f64| {
                if it.is_empty() {
                    f64::NAN
                } else {
                    it.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max)
                }
            };
            let window = &usable[usable.len().saturating_sub(WINDOW)..];
            let lhs_limsup = max(window, |r| r.lhs);
            let rhs_limsup = max(window, |r| r.rhs);
            let mut flags = Vec::new();
            let ratio = side_ratio(lhs_limsup, rhs_limsup, &mut flags);
            DecayEstimate {
                probe,
                lhs_limsup,
                rhs_limsup,
                ratio,
                lhs_sup: max(&usable, |r| r.lhs),
                rhs_sup: max(&usable, |r| r.rhs),
                usable: usable.len(),
                flags,
            }
        })
        .collect()
}

/// Generates the scenario around its probes at `mesh = r_min / 8` (unless
/// configured) and runs [`decay_on`].
pub fn run_decay(s: &Scenario, cfg: &ExperimentConfig) -> Result<Report<DecayRow>> {
    let radii = cfg.decay_radii();
    let r_min = radii.last().copied().unwrap_or(cfg.r0);
    let mesh = cfg.mesh.unwrap_or(r_min / RESOLUTION);
    let reach = s
        .probes
        .iter()
        .map(|p| s.axis.project(&(&p.point - &s.center)).map(|d| d.norm()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let v = s.generate(mesh, reach + 1.05 * cfg.r0 + 2.0 * mesh)?;
    let mut report = decay_on(&v, s.name(), &s.probes, mesh, cfg)?;
    report.summary.0.insert(1, ("mesh".into(), fmt_f64(mesh)));
    Ok(report)
}

/// Decay rows for every probe and radius, with per-probe estimates in the
/// summary.
pub fn decay_on(v: &DiscreteVarifold, name: &str, probes: &[Probe], mesh: f64, cfg: &ExperimentConfig) -> Result<Report<DecayRow>> {
    let radii = cfg.decay_radii();
    let cut = RESOLUTION * mesh * (1.0 - 1e-12);
    let jobs: Vec<(usize, f64)> = (0..probes.len()).flat_map(|i| radii.iter().map(move |&r| (i, r))).collect();
    let rows: Vec<DecayRow> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (lhs, rhs) = decay_pair(v, &probes[i].point, &probes[i].tangent, r, cfg);
            DecayRow {
                scenario: name.to_string(),
                probe: i,
                r,
                lhs,
                rhs,
                usable: r >= cut,
            }
        })
        .collect();
    let hyp = cfg.limit_mode_violations(v.n());
    let mut summary = Summary::default();
    summary.push("scenario", name);
    summary.push("q1", cfg.q1);
    summary.push("q2", cfg.q2);
    summary.push_f64("alpha", cfg.alpha);
    summary.push_f64("p", cfg.p);
    summary.push("atoms", v.len());
    let truncated: Vec<String> = radii.iter().filter(|&&r| r < cut).map(|&r| fmt_f64(r)).collect();
    summary.push("truncated_radii", truncated.join(";"));
    for e in decay_estimates(&rows) {
        let key = |k: &str| format!("probe{}.{k}", e.probe);
        let p = &probes[e.probe];
        summary.push(&key("point"), p.point.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(":"));
        summary.push(&key("multiplicity"), p.multiplicity);
        summary.push(&key("usable_radii"), e.usable);
        summary.push_f64(&key("lhs_limsup"), e.lhs_limsup);
        summary.push_f64(&key("rhs_limsup"), e.rhs_limsup);
        summary.push_f64(&key("ratio"), e.ratio);
        summary.push_f64(&key("lhs_sup"), e.lhs_sup);
        summary.push_f64(&key("rhs_sup"), e.rhs_sup);
        summary.push(&key("flags"), e.flags.join(";"));
    }
    summary.push(
        "note",
        "finitely many probe points are evaluated; the exceptional null set of the almost-everywhere statement is not represented",
    );
    summary.push("hypotheses", if hyp.is_empty() { "ok".to_string() } else { hyp.join(";") });
    Ok(Report {
        rows,
        summary,
        hypothesis_flags: hyp,
    })
}
