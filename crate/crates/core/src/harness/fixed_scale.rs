//! The fixed-scale height/tilt inequality on one cylinder.

use crate::approx::good_sets_g_a;
use crate::error::{invalid, Result};
use crate::excess::{h_q_best_seeded, t_q};
use crate::geometry::{Cylinder, Height, Plane, Point};
use crate::numeric::{fmt_f64, pairwise_sum, Exponent};
use crate::varifold::DiscreteVarifold;

use super::config::ExperimentConfig;
use super::report::{FixedScaleRow, Report, Summary};
use super::scenario::Scenario;

/// Where and how to evaluate both sides.
#[derive(Clone, Debug)]
pub struct FixedScaleSetup<'a> {
    pub name: &'a str,
    pub q_sheets: usize,
    pub center: &'a Point,
    pub axis: &'a Plane,
    pub seed: u64,
}

/// Height exponent paired with the tilt exponent `q`: `nq/(n-q)` below the
/// dimension, `∞` above it.
pub fn conjugate_exponent(q: Exponent, n: usize) -> Result<Exponent> {
    if let Some(star) = q.sobolev_conjugate(n) {
        return Ok(star);
    }
    if q.value() > n as f64 {
        Ok(Exponent::Infinity)
    } else {
        Err(invalid(format!("q = n = {n} has no fixed-scale inequality")))
    }
}

/// `x^{1/q}` with `0^0 = 0`, so an empty bad set contributes nothing for
/// `q = ∞`.
fn root(x: f64, q: Exponent) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(q.reciprocal())
    }
}

/// `lhs / rhs` with `0/0 = 0` flagged `exact` and `x/0 = ∞` flagged
/// `unbounded`.
pub fn side_ratio(lhs: f64, rhs: f64, flags: &mut Vec<String>) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        flags.push("exact".to_string());
        0.0
    } else {
        flags.push("unbounded".to_string());
        f64::INFINITY
    }
}

/// Generates the scenario and runs [`fixed_scale_on`] at its center.
pub fn run_fixed_scale(s: &Scenario, cfg: &ExperimentConfig) -> Result<Report<FixedScaleRow>> {
    let mesh = cfg.mesh.unwrap_or(s.default_mesh);
    let v = s.generate(mesh, 3.0 * cfg.radius + 3.0 * mesh)?;
    let setup = FixedScaleSetup {
        name: s.name(),
        q_sheets: s.q,
        center: &s.center,
        axis: &s.axis,
        seed: s.seed,
    };
    let mut report = fixed_scale_on(&v, &setup, cfg)?;
    report.summary.0.insert(1, ("mesh".into(), fmt_f64(mesh)));
    Ok(report)
}

/// Both sides of the fixed-scale inequality for `v` on
/// `C(a, r, h, T)` with the enlarged cylinder `C(a, 3r, h + 2r, T)`.
///
/// Failed hypotheses are recorded, never fatal.
pub fn fixed_scale_on(v: &DiscreteVarifold, setup: &FixedScaleSetup, cfg: &ExperimentConfig) -> Result<Report<FixedScaleRow>> {
    let n = v.n();
    let nf = n as f64;
    let (r, h) = (cfg.radius, cfg.height);
    let qq = setup.q_sheets;
    let omega = cfg.constants.unit_ball_volume;
    let vol = omega * r.powi(n as i32);
    let delta = cfg.delta;
    let eps = cfg.eps;
    let mass_bound = cfg.mass_bound.unwrap_or(12.0 * qq as f64);
    let c = Cylinder::new(setup.center.clone(), r, Height::new(h)?, setup.axis.clone())?;
    let c3 = Cylinder::new(setup.center.clone(), 3.0 * r, Height::new(h + 2.0 * r)?, setup.axis.clone())?;
    let q = cfg.q;
    let q_star = conjugate_exponent(q, n)?;

    let mut hyp = Vec::new();
    let mut check = |ok: bool, msg: String| {
        if !ok {
            hyp.push(msg);
        }
    };
    check(delta * r < h, format!("height: delta r={} >= h={}", fmt_f64(delta * r), fmt_f64(h)));
    let mass_c = v.measure(|x| c.contains(x));
    let lower = (qq as f64 - 1.0 + delta) * vol;
    let upper = (qq as f64 + 1.0 - delta) * vol;
    check(mass_c >= lower, format!("mass_lower: mu(C)={} < {}", fmt_f64(mass_c), fmt_f64(lower)));
    check(mass_c <= upper, format!("mass_upper: mu(C)={} > {}", fmt_f64(mass_c), fmt_f64(upper)));
    let outer = c.resized(r, Height::new(h + delta * r)?)?;
    let inner = (h - delta * r > 0.0).then(|| c.resized(r, Height::Finite(h - delta * r))).transpose()?;
    let slab = v.measure(|x| outer.contains(x) && !inner.as_ref().is_some_and(|i| i.contains(x)));
    check(slab <= (1.0 - delta) * vol, format!("slab: mass {} > {}", fmt_f64(slab), fmt_f64((1.0 - delta) * vol)));
    let mass3 = v.measure(|x| c3.contains(x));
    check(mass3 <= mass_bound * vol, format!("mass_bound: mu(C3)={} > M omega r^n={}", fmt_f64(mass3), fmt_f64(mass_bound * vol)));
    let variation3 = v.first_variation_norm(|x| c3.contains(x));
    let variation_bound = eps * r.powi(n as i32 - 1);
    check(
        variation3 <= variation_bound,
        format!("first_variation: |delta mu|(C3)={} > eps r^(n-1)={}", fmt_f64(variation3), fmt_f64(variation_bound)),
    );
    let tilt1 = t_q(v, &c3, Exponent::Finite(1.0))?;
    check(tilt1 <= eps, format!("tilt: T_1(C3)={} > eps={}", fmt_f64(tilt1), fmt_f64(eps)));

    let params = cfg.approx_params(qq, n);
    let (g, a) = good_sets_g_a(v, &c, &params, &cfg.constants)?;
    let dx = cfg.cell_width.unwrap_or(v.mesh_scale());
    let height = h_q_best_seeded(&v.restrict_to(&g), &c, qq, q_star, dx, setup.seed)?;
    let lhs = height.total;
    let tilt = t_q(v, &c3, q)?;
    let mut in_a = vec![false; v.len()];
    for &i in &a {
        in_a[i] = true;
    }
    let bad_masses: Vec<f64> = v
        .atoms()
        .iter()
        .enumerate()
        .filter(|(i, at)| !in_a[*i] && c.contains(&at.position))
        .map(|(_, at)| at.mass())
        .collect();
    let bad_mass = pairwise_sum(&bad_masses);
    let bad_mass_term = root(bad_mass / r.powi(n as i32), q);
    let rhs = tilt + bad_mass_term;

    let mut flags = Vec::new();
    let ratio = side_ratio(lhs, rhs, &mut flags);
    flags.extend(height.flags.iter().cloned());
    flags.extend(hyp.iter().map(|m| m.split(':').next().unwrap_or(m).to_string()));

    let mut summary = Summary::default();
    summary.push("scenario", setup.name);
    summary.push_f64("r", r);
    summary.push_f64("h", h);
    summary.push("q", q);
    summary.push("q_star", q_star);
    summary.push("atoms", v.len());
    summary.push("g_atoms", g.len());
    summary.push("a_atoms", a.len());
    summary.push_f64("mass_c", mass_c);
    summary.push_f64("mass_c3", mass3);
    summary.push_f64("lhs", lhs);
    summary.push_f64("t_q", tilt);
    summary.push_f64("bad_mass", bad_mass);
    summary.push_f64("bad_mass_term", bad_mass_term);
    summary.push_f64("rhs", rhs);
    summary.push_f64("ratio", ratio);
    // Curvature form over C(a, 3r, 3r), usable when p < n and q < n.
    let cpsi = Cylinder::new(setup.center.clone(), 3.0 * r, Height::Finite(3.0 * r), setup.axis.clone())?;
    let psi = v.hp_integrand_norm(|x| cpsi.contains(x), cfg.p)?;
    summary.push_f64("p", cfg.p);
    summary.push_f64("psi", psi);
    if cfg.p < nf && q.value() < nf {
        let qv = q.value();
        let psi_term = (r.powf(cfg.p - nf) * psi).powf((nf - qv) / (qv * (nf - cfg.p)));
        let t_psi = t_q(v, &cpsi, q)?;
        summary.push_f64("psi_term", psi_term);
        summary.push_f64("psi_t_q", t_psi);
        summary.push_f64("psi_rhs", t_psi + psi_term);
    }
    summary.push_block("height", &height.to_key_values());
    summary.push("hypotheses", if hyp.is_empty() { "ok".to_string() } else { hyp.join(";") });
    summary.push("constants", cfg.constants.placeholder_flags().join(";"));

    let row = FixedScaleRow {
        scenario: setup.name.to_string(),
        r,
        q,
        lhs,
        t_q: tilt,
        bad_mass_term,
        ratio,
        flags,
    };
    Ok(Report {
        rows: vec![row],
        summary,
        hypothesis_flags: hyp,
    })
}
