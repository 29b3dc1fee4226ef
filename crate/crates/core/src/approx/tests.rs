use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::Plane;
use crate::varifold::{gen_plane, gen_qgraph, gen_qgraph_analytic, AffineSheets, Atom, BumpSheets};

fn pt(xs: &[f64]) -> Point {
    Point::from_column_slice(xs)
}

fn cylinder(r: f64, h: f64) -> Cylinder {
    Cylinder::new(Point::zeros(3), r, Height::Finite(h), Plane::horizontal(2, 1).unwrap()).unwrap()
}

fn params(q: usize, eps: f64) -> ApproxParams {
    let mut p = ApproxParams::new(q, 2, &Constants::for_dim(2));
    p.eps = eps;
    p.eps1 = eps;
    p.mass_bound = 20.0;
    p
}

fn two_sheet_field(amplitude: f64, radius: f64, dx: f64) -> QField {
    QField::from_fn(2, 1, 2, radius, dx, |x| {
        QValue::from_scalars(&[0.2 + amplitude * x[0].sin(), -0.2 + amplitude * x[1].cos()]).ok()
    })
    .unwrap()
}

#[test]
fn geometric_schedule_radii() {
    let r = RadiusSchedule::default().radii(1.0).unwrap();
    assert_eq!(r.len(), 24);
    assert!((r[0] - 2.0 / 1.3).abs() < 1e-15);
    assert!(r.windows(2).all(|w| w[1] < w[0]));
    assert!(RadiusSchedule::Explicit(vec![0.5, 0.6]).radii(1.0).is_err());
    assert!(RadiusSchedule::Explicit(vec![2.5]).radii(1.0).is_err());
    assert!(RadiusSchedule::Explicit(vec![]).radii(1.0).is_err());
}

#[test]
fn params_validation() {
    let c = Constants::for_dim(2);
    let p = ApproxParams::new(2, 2, &c);
    assert!(p.validate(2, &c).is_ok());
    assert!((p.delta[4] - 1.0 / (16.0 * std::f64::consts::PI)).abs() < 1e-15);
    let mut bad = p.clone();
    bad.delta[4] = 0.1;
    assert!(bad.validate(2, &c).is_err());
    let mut bad = p.clone();
    bad.eps1 = 2.0 * bad.eps;
    assert!(bad.validate(2, &c).is_err());
    let mut bad = p;
    bad.mass_bound = 0.5;
    assert!(bad.validate(2, &c).is_err());
}

#[test]
fn gamma3_examples() {
    assert_eq!(gamma3(2, 2, 0.5), 757.0);
    assert_eq!(gamma3(1, 1, 0.01), 1200.0);
}

#[test]
fn q_plane_fixture_is_fully_graphical() {
    let v = gen_plane(2, 1, 2, 1.6, 0.05).unwrap();
    let c = cylinder(1.0, 1.5);
    let consts = Constants::for_dim(2);
    let res = build_approximation(&v, &c, &params(2, 0.1), &consts).unwrap();
    let inside: Vec<usize> = (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).collect();
    assert!(res.bad.is_empty());
    assert_eq!(res.graphical, inside);
    assert_eq!(res.preliminary, inside);
    assert_eq!(res.good, inside);
    assert_eq!(res.y.len(), res.cells.len());
    assert_eq!(res.diagnostics.lip_f, 0.0);
    assert_eq!(res.diagnostics.conclusion3.ratio, None);
    assert!(res.diagnostics.counting_holds);
    for s in res.f.samples() {
        assert_eq!(s.as_ref().unwrap(), &QValue::from_scalars(&[0.0, 0.0]).unwrap());
    }
}

#[test]
fn tilted_plane_beyond_threshold_is_all_bad() {
    let sheets = AffineSheets {
        offsets: vec![DVector::zeros(1)],
        slopes: vec![DMatrix::from_row_slice(1, 2, &[0.3, 0.0])],
    };
    let v = gen_qgraph_analytic(&sheets, 1.6, 0.05).unwrap();
    let c = cylinder(1.0, 1.0);
    let tilt = v.atoms()[0].tangent.dist_sq_unchecked(c.axis()).sqrt();
    let p = params(1, 0.9 * tilt);
    let bad = bad_set(&v, &c, &p).unwrap();
    let inside = (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).count();
    assert_eq!(bad.len(), inside);
}

fn bump_fixture(mesh: f64) -> DiscreteVarifold {
    let sheets = BumpSheets {
        base: vec![-0.2, 0.2],
        bumped_sheet: 1,
        amplitude: 0.15,
        center: vec![0.3, -0.2],
        width: 0.2,
    };
    gen_qgraph_analytic(&sheets, 1.6, mesh).unwrap()
}

#[test]
fn bad_set_shrinks_as_threshold_grows() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let sets: Vec<Vec<usize>> = [0.01, 0.1, 0.5].iter().map(|&e| bad_set(&v, &c, &params(2, e)).unwrap()).collect();
    for w in sets.windows(2) {
        assert!(w[1].iter().all(|i| w[0].contains(i)));
    }
    assert!(sets[0].len() > sets[2].len());
}

#[test]
fn bad_set_grows_with_schedule_refinement() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let mut coarse = params(2, 0.1);
    coarse.schedule = RadiusSchedule::Explicit(vec![1.0, 0.5, 0.25]);
    let mut fine = coarse.clone();
    fine.schedule = RadiusSchedule::Explicit(vec![1.0, 0.7, 0.5, 0.35, 0.25, 0.12]);
    let b0 = bad_set(&v, &c, &coarse).unwrap();
    let b1 = bad_set(&v, &c, &fine).unwrap();
    assert!(b0.iter().all(|i| b1.contains(i)));
}

#[test]
fn dust_is_excluded_from_preliminary_part() {
    let v = gen_plane(2, 1, 1, 1.6, 0.05).unwrap();
    let dust = Atom::new(pt(&[0.1, 0.1, 0.8]), Plane::horizontal(2, 1).unwrap(), 1, 1e-6).unwrap();
    let w = v.union(&DiscreteVarifold::new(2, 1, vec![dust], 0.05).unwrap()).unwrap();
    let c = cylinder(1.0, 1.5);
    let consts = Constants::for_dim(2);
    let h = preliminary_graphical_part(&w, &c, &params(1, 0.1), &consts).unwrap();
    let dust_index = w.len() - 1;
    assert!(!h.contains(&dust_index));
    assert_eq!(h.len(), (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).count());
}

#[test]
fn preliminary_part_shrinks_as_density_threshold_grows() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let consts = Constants::for_dim(2);
    let mut p = params(2, 0.5);
    let mut last = usize::MAX;
    for d5 in [0.001, 0.01, 0.019] {
        p.delta[4] = d5;
        let h = preliminary_graphical_part(&v, &c, &p, &consts).unwrap().len();
        assert!(h <= last);
        last = h;
    }
}

#[test]
fn graphical_atoms_lie_in_preliminary_part() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let consts = Constants::for_dim(2);
    for _ in 0..5 {
        let (a, b) = (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        let field = QField::from_fn(2, 1, 2, 1.6, 0.05, |x| {
            QValue::from_scalars(&[0.25 + a * x[0] + 0.02 * x[1].sin(), -0.25 + b * x[1]]).ok()
        })
        .unwrap();
        let v = gen_qgraph(&field, 1.0).unwrap();
        let c = cylinder(1.0, 1.0);
        let res = build_approximation(&v, &c, &params(2, 0.3), &consts).unwrap();
        assert_eq!(res.diagnostics.conclusion4.a_outside_h, 0);
    }
}

#[test]
fn stationary_fixture_has_full_good_sets() {
    let v = gen_plane(2, 1, 1, 1.6, 0.05).unwrap();
    let c = cylinder(1.0, 1.0);
    let consts = Constants::for_dim(2);
    let (g, a) = good_sets_g_a(&v, &c, &params(1, 0.01), &consts).unwrap();
    let inside: Vec<usize> = (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).collect();
    assert_eq!(g, inside);
    assert_eq!(a, inside);
}

#[test]
fn curved_sphere_with_tiny_eps_has_empty_a() {
    let v = crate::varifold::gen_sphere(2, 0.3, 0.02).unwrap();
    let c = Cylinder::new(pt(&[0.0, 0.0, 0.3]), 0.25, Height::Finite(0.2), Plane::horizontal(2, 1).unwrap()).unwrap();
    let consts = Constants::for_dim(2);
    let (g, a) = good_sets_g_a(&v, &c, &params(1, 1e-3), &consts).unwrap();
    assert!(a.is_empty());
    assert!(a.iter().all(|i| g.contains(i)));
}

#[test]
fn qgraph_round_trip_reproduces_heights() {
    let field = two_sheet_field(0.03, 1.6, 0.05);
    let v = gen_qgraph(&field, 1.0).unwrap();
    let c = cylinder(1.0, 1.0);
    let consts = Constants::for_dim(2);
    let res = build_approximation(&v, &c, &params(2, 1.0), &consts).unwrap();
    assert!(res.bad.is_empty());
    assert!(res.diagnostics.counting_holds);
    let mut exact = 0;
    for i in 0..res.f.node_count() {
        let k = res.f.node_lattice(i);
        let original = field.node_at(k).and_then(|j| field.sample(j));
        if res.f.sample(i) == original {
            exact += 1;
        }
    }
    assert_eq!(exact, res.f.node_count());
    assert!(res.diagnostics.lip_f <= 0.1);
}

#[test]
fn bump_fixture_conclusions() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let consts = Constants::for_dim(2);
    let res = build_approximation(&v, &c, &params(2, 0.2), &consts).unwrap();
    assert!(!res.bad.is_empty());
    let c3 = &res.diagnostics.conclusion3;
    assert!(c3.ratio.is_some());
    assert!(c3.holds(), "{c3:?}");
    assert!(res.diagnostics.conclusion4.lambda > 0.0);
    assert!(res.diagnostics.counting_holds);
    for &i in &res.y {
        let m: u32 = res.cell_atoms[i].iter().map(|&j| v.atoms()[j].multiplicity).sum();
        assert_eq!(m, 2);
    }
}

#[test]
fn cell_classes_partition_the_cells() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let res = build_approximation(&v, &c, &params(2, 0.2), &Constants::for_dim(2)).unwrap();
    assert_eq!(res.y.len() + res.z.len() + res.n_set.len(), res.cells.len());
    let inside = (0..v.len()).filter(|&i| c.contains(&v.atoms()[i].position)).count();
    assert_eq!(res.graphical.len() + res.bad.len(), inside);
}

#[test]
fn conclusion6_on_exact_plane() {
    let v = gen_plane(2, 1, 2, 1.6, 0.05).unwrap();
    let c = cylinder(1.0, 1.5);
    let consts = Constants::for_dim(2);
    let res = build_approximation(&v, &c, &params(2, 0.1), &consts).unwrap();
    let p = QPlane::new(c.axis().clone(), QValue::from_scalars(&[0.0, 0.0]).unwrap()).unwrap();
    let r = conclusion6_check(&v, &c, &res, &p, Exponent::new(1.0).unwrap(), &consts).unwrap();
    assert!(r.applicable);
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.g_norm, 0.0);
    assert_eq!(r.gamma_empirical, 0.0);
    assert!(r.sup_holds());
}

#[test]
fn conclusion6_on_perturbed_graph() {
    let field = two_sheet_field(0.03, 1.6, 0.05);
    let v = gen_qgraph(&field, 1.0).unwrap();
    let c = cylinder(1.0, 1.0);
    let consts = Constants::for_dim(2);
    let res = build_approximation(&v, &c, &params(2, 1.0), &consts).unwrap();
    let p = QPlane::new(c.axis().clone(), QValue::from_scalars(&[-0.2, 0.2]).unwrap()).unwrap();
    let r = conclusion6_check(&v, &c, &res, &p, Exponent::new(1.0).unwrap(), &consts).unwrap();
    assert!(r.lhs > 0.0);
    assert!(r.lhs <= r.factor * r.g_norm);
    assert!(r.sup_holds());
}

#[test]
fn coarea_defect_shrinks_linearly() {
    let consts = Constants::for_dim(2);
    let c = cylinder(1.0, 1.0);
    let defect = |mesh: f64| {
        let v = crate::varifold::gen_qgraph_analytic(&crate::varifold::SineSheet { amplitude: 0.1 }, 1.6, mesh).unwrap();
        build_approximation(&v, &c, &params(1, 1.0), &consts).unwrap().diagnostics
    };
    let (d1, d2) = (defect(0.08), defect(0.04));
    assert!(d1.coarea_margin >= 0.0 && d2.coarea_margin >= 0.0);
    // At least first order; the smooth fixture converges faster.
    let ratio = d2.coarea_defect / d1.coarea_defect;
    assert!(ratio < 0.65, "ratio {ratio}");
}

#[test]
fn index_sets_do_not_depend_on_atom_order() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let p = params(2, 0.2);
    let mut perm: Vec<usize> = (0..v.len()).collect();
    perm.reverse();
    let w = v.restrict_to(&perm);
    let consts = Constants::for_dim(2);
    let a = build_approximation(&v, &c, &p, &consts).unwrap();
    let b = build_approximation(&w, &c, &p, &consts).unwrap();
    let mut mapped: Vec<usize> = b.bad.iter().map(|&i| perm[i]).collect();
    mapped.sort_unstable();
    assert_eq!(a.bad, mapped);
    assert_eq!(a.class, b.class);
}

#[test]
fn result_directory_is_written() {
    let v = bump_fixture(0.05);
    let c = cylinder(1.0, 1.0);
    let res = build_approximation(&v, &c, &params(2, 0.2), &Constants::for_dim(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    res.write_dir(dir.path()).unwrap();
    for f in ["bad.csv", "y.csv", "cells.csv", "f.csv", "diagnostics.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let f = crate::qvalued::read_qfield_csv(dir.path().join("f.csv")).unwrap();
    assert_eq!(f, res.f);
    let kv = std::fs::read_to_string(dir.path().join("diagnostics.txt")).unwrap();
    assert!(kv.contains("c3_holds=true"));
}

#[test]
fn hypothesis_warnings_name_the_inequality() {
    let v = gen_plane(2, 1, 1, 1.6, 0.05).unwrap();
    let c = cylinder(1.0, 1.5);
    let w = check_hypotheses(&v, &c, &params(3, 0.1), &Constants::for_dim(2));
    assert!(w.iter().any(|s| s.starts_with("mass_lower")));
}
