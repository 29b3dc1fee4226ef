//! Empirical checks of the monotonicity conclusions and of the layered
//! structure of flat stationary fixtures.

use crate::error::Result;
use crate::geometry::Plane;
use crate::numeric::fmt_f64;
use crate::varifold::DiscreteVarifold;

use super::config::ExperimentConfig;
use super::report::{MonoRow, Report, Summary};
use super::scenario::{Probe, Scenario};

/// Offset of the quasi-monotonicity bound above the probe density, keeping
/// `M` off the integers.
pub const QUASI_OFFSET: f64 = 0.5;

/// Sweep radii `radius · (1 - k/levels)`, `k = 0..levels`.
pub fn sweep_radii(cfg: &ExperimentConfig) -> Vec<f64> {
    let l = cfg.levels as f64;
    (0..cfg.levels).map(|k| cfg.radius * (1.0 - k as f64 / l)).collect()
}

/// Generates the scenario at `mesh = ρ_min / 8` (unless configured) and
/// runs [`monotonicity_on`].
pub fn run_monotonicity(s: &Scenario, cfg: &ExperimentConfig) -> Result<Report<MonoRow>> {
    let radii = sweep_radii(cfg);
    let rho_min = radii.last().copied().unwrap_or(cfg.radius);
    let mesh = cfg.mesh.unwrap_or(rho_min / 8.0);
    let reach = s
        .probes
        .iter()
        .map(|p| (&p.point - &s.center).norm())
        .fold(0.0, f64::max);
    let v = s.generate(mesh, reach + 1.05 * cfg.radius + 2.0 * mesh)?;
    let mut report = monotonicity_on(&v, s.name(), &s.probes, s.flat.then_some(&s.axis), cfg)?;
    report.summary.0.insert(1, ("mesh".into(), fmt_f64(mesh)));
    Ok(report)
}

/// Coverage and quasi-monotonicity rows per radius. With `flat_axis` set,
/// also checks that layer heights are discrete.
pub fn monotonicity_on(
    v: &DiscreteVarifold,
    name: &str,
    probes: &[Probe],
    flat_axis: Option<&Plane>,
    cfg: &ExperimentConfig,
) -> Result<Report<MonoRow>> {
    let n = v.n() as i32;
    let omega = cfg.constants.unit_ball_volume;
    let radii = sweep_radii(cfg);
    let mut rows = Vec::new();
    let mut summary = Summary::default();
    summary.push("scenario", name);
    summary.push("atoms", v.len());
    let row = |predicate: &str, rho: f64, value: f64, bound: f64, margin: f64| MonoRow {
        scenario: name.to_string(),
        predicate: predicate.to_string(),
        rho,
        value,
        bound,
        margin,
        pass: margin >= 0.0,
    };

    // Multilayer coverage of the open balls around the whole probe set.
    let total: usize = probes.iter().map(|p| p.multiplicity).sum();
    let q_bound = total as f64 - cfg.delta;
    let mut cone = 0.0f64;
    for (i, x) in probes.iter().enumerate() {
        for y in &probes[i + 1..] {
            let d = &y.point - &x.point;
            cone = cone.max(x.tangent.project(&d)?.norm() / d.norm());
        }
    }
    summary.push_f64("multilayer.cone_s", cone);
    for &rho in &radii {
        let covered = v.measure(|p| probes.iter().any(|x| (p - &x.point).norm() < rho));
        let value = covered / (omega * rho.powi(n));
        rows.push(row("multilayer", rho, value, q_bound, value - q_bound));
    }

    // Quasi monotonicity with a non-integer bound at each probe.
    for (i, a) in probes.iter().enumerate() {
        let bound = a.multiplicity as f64 + QUASI_OFFSET;
        let mut worst_tilt = 0.0f64;
        for &rho in &radii {
            let ball = |p: &crate::geometry::Point| (p - &a.point).norm() <= rho;
            let mass = v.measure(ball);
            let tilt: f64 = v
                .atoms()
                .iter()
                .filter(|at| ball(&at.position))
                .map(|at| at.mass() * at.tangent.dist_sq_unchecked(&a.tangent).sqrt())
                .sum();
            if mass > 0.0 {
                worst_tilt = worst_tilt.max(tilt / mass);
            }
            let value = mass / (omega * rho.powi(n));
            rows.push(row(&format!("quasi{i}"), rho, value, bound, bound - value));
        }
        summary.push_f64(&format!("quasi{i}.max_mean_tilt"), worst_tilt);
    }

    // Layer heights over the axis: finitely many, each covering the same base.
    if let Some(axis) = flat_axis {
        let rho = cfg.radius;
        let center = &probes[0].point;
        let mut heights: Vec<(f64, usize)> = Vec::new();
        let comp = axis.complement_basis();
        for at in v.atoms() {
            let d = &at.position - center;
            if axis.project(&d)?.norm() >= rho {
                continue;
            }
            let z = comp.iter().map(|e| e.dot(&at.position)).collect::<Vec<_>>();
            let key = z.first().copied().unwrap_or(0.0);
            match heights.iter_mut().find(|(h, _)| (h - key).abs() <= 1e-9) {
                Some(slot) => slot.1 += at.multiplicity as usize,
                None => heights.push((key, at.multiplicity as usize)),
            }
        }
        heights.sort_by(|a, b| a.0.total_cmp(&b.0));
        let uniform = heights.windows(2).all(|w| w[0].1 == w[1].1);
        let layers = heights.len() as f64;
        let bound = total as f64;
        let margin = if uniform { bound - layers } else { -1.0 };
        rows.push(row("planes", rho, layers, bound, margin));
        summary.push(
            "planes.heights",
            heights.iter().map(|(h, _)| fmt_f64(*h)).collect::<Vec<_>>().join(";"),
        );
        summary.push("planes.uniform", uniform);
    }
    let hyp: Vec<String> = if cone < 1.0 {
        Vec::new()
    } else {
        vec![format!("cone: probe set has |P_T(y-x)|/|y-x| = {} >= 1", fmt_f64(cone))]
    };
    let failed = rows.iter().filter(|r| !r.pass).count();
    summary.push("failed_rows", failed);
    summary.push("hypotheses", if hyp.is_empty() { "ok".to_string() } else { hyp.join(";") });
    Ok(Report {
        rows,
        summary,
        hypothesis_flags: hyp,
    })
}
