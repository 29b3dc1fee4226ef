//! Named fixtures with their analytic facts.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Plane, Point};
use crate::qvalued::{QField, QValue};
use crate::varifold::{
    gen_catenoid, gen_parallel_planes, gen_plane, gen_plane_union_catenoid, gen_qgraph, gen_qgraph_analytic,
    gen_sphere, AffineSheets, BumpSheets, DiscreteVarifold, ParaboloidSheet, SineSheet, UNION_PLANE_EXTENT,
};

/// Every registered scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Plane,
    TwoPlanes,
    TiltedPlane,
    SineGraph,
    Paraboloid,
    CrossingPlanes,
    Catenoid,
    Sphere,
    PlaneUnionCatenoid,
    Bump,
    QGraph2,
    QGraph3,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 12] = [
        ScenarioKind::Plane,
        ScenarioKind::TwoPlanes,
        ScenarioKind::TiltedPlane,
        ScenarioKind::SineGraph,
        ScenarioKind::Paraboloid,
        ScenarioKind::CrossingPlanes,
        ScenarioKind::Catenoid,
        ScenarioKind::Sphere,
        ScenarioKind::PlaneUnionCatenoid,
        ScenarioKind::Bump,
        ScenarioKind::QGraph2,
        ScenarioKind::QGraph3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Plane => "plane",
            ScenarioKind::TwoPlanes => "two_planes",
            ScenarioKind::TiltedPlane => "tilted_plane",
            ScenarioKind::SineGraph => "sine_graph",
            ScenarioKind::Paraboloid => "paraboloid",
            ScenarioKind::CrossingPlanes => "crossing_planes",
            ScenarioKind::Catenoid => "catenoid",
            ScenarioKind::Sphere => "sphere",
            ScenarioKind::PlaneUnionCatenoid => "plane_union_catenoid",
            ScenarioKind::Bump => "bump",
            ScenarioKind::QGraph2 => "qgraph2",
            ScenarioKind::QGraph3 => "qgraph3",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown scenario {s:?}")))
    }
}

/// A point with known tangent plane and density.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub point: Point,
    pub tangent: Plane,
    pub multiplicity: usize,
}

/// A fixture with its generator parameters and analytic facts.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Number of sheets over the reference plane near the probes.
    pub q: usize,
    pub stationary: bool,
    /// Every tangent plane equals the reference plane.
    pub flat: bool,
    /// Reference plane `T`.
    pub axis: Plane,
    /// Cylinder center for fixed-scale runs.
    pub center: Point,
    pub probes: Vec<Probe>,
    pub default_mesh: f64,
    /// Registry seed, fixed per scenario.
    pub seed: u64,
}

/// Tilted plane slope.
pub const TILT_SLOPE: f64 = 0.1;
/// Sine graph amplitude `ε`.
pub const SINE_AMPLITUDE: f64 = 0.1;
/// Paraboloid `u = c|x|²`.
pub const PARABOLOID_CURVATURE: f64 = 0.5;
/// Full crossing angle of the two planes.
pub const CROSSING_ANGLE: f64 = 0.4;
/// Offsets of the two parallel planes.
pub const TWO_PLANE_OFFSETS: [f64; 2] = [-0.1, 0.15];
/// Sphere radius.
pub const SPHERE_RADIUS: f64 = 1.0;
/// Catenoid parameter extent `|t| < T`.
pub const CATENOID_EXTENT: f64 = 1.0;

fn pt(xs: &[f64]) -> Point {
    Point::from_column_slice(xs)
}

fn horizontal() -> Plane {
    Plane::horizontal(2, 1).expect("valid dimensions")
}

fn bump_sheets() -> BumpSheets {
    BumpSheets {
        base: vec![-0.2, 0.2],
        bumped_sheet: 1,
        amplitude: 0.15,
        center: vec![0.3, -0.2],
        width: 0.2,
    }
}

fn crossing_sheets() -> AffineSheets {
    let s = (CROSSING_ANGLE / 2.0).tan();
    AffineSheets {
        offsets: vec![DVector::zeros(1), DVector::zeros(1)],
        slopes: vec![DMatrix::from_row_slice(1, 2, &[s, 0.0]), DMatrix::from_row_slice(1, 2, &[-s, 0.0])],
    }
}

/// The two- and three-valued fields behind `qgraph2` and `qgraph3`.
pub fn qgraph_field(q: usize, radius: f64, dx: f64) -> Result<QField> {
    QField::from_fn(2, 1, q, radius, dx, |x| {
        let mut v = vec![0.2 + 0.03 * x[0].sin(), -0.2 + 0.03 * x[1].cos()];
        if q == 3 {
            v.push(0.03 * x[0] * x[1]);
        }
        QValue::from_scalars(&v).ok()
    })
}

impl Scenario {
    pub fn get(kind: ScenarioKind) -> Self {
        let origin = pt(&[0.0, 0.0, 0.0]);
        let flat_probe = |q| Probe {
            point: origin.clone(),
            tangent: horizontal(),
            multiplicity: q,
        };
        let base = Scenario {
            kind,
            q: 1,
            stationary: false,
            flat: false,
            axis: horizontal(),
            center: origin.clone(),
            probes: vec![flat_probe(1)],
            default_mesh: 0.04,
            seed: 0x5ce0 + kind as u64,
        };
        match kind {
            ScenarioKind::Plane => Scenario {
                stationary: true,
                flat: true,
                ..base
            },
            ScenarioKind::TwoPlanes => Scenario {
                q: 2,
                stationary: true,
                flat: true,
                probes: TWO_PLANE_OFFSETS
                    .iter()
                    .map(|&z| Probe {
                        point: pt(&[0.0, 0.0, z]),
                        tangent: horizontal(),
                        multiplicity: 1,
                    })
                    .collect(),
                ..base
            },
            ScenarioKind::TiltedPlane => Scenario {
                stationary: true,
                probes: vec![Probe {
                    point: origin.clone(),
                    tangent: Plane::from_spanning(&[pt(&[1.0, 0.0, TILT_SLOPE]), pt(&[0.0, 1.0, 0.0])]).expect("independent"),
                    multiplicity: 1,
                }],
                ..base
            },
            ScenarioKind::SineGraph => {
                let p = pt(&[FRAC_PI_2, 0.0, SINE_AMPLITUDE]);
                Scenario {
                    center: p.clone(),
                    probes: vec![Probe {
                        point: p.clone(),
                        tangent: horizontal(),
                        multiplicity: 1,
                    }],
                    ..base
                }
            }
            ScenarioKind::Paraboloid => base,
            ScenarioKind::CrossingPlanes => Scenario {
                q: 2,
                stationary: true,
                probes: vec![flat_probe(2)],
                ..base
            },
            ScenarioKind::Catenoid => {
                let neck = pt(&[1.0, 0.0, 0.0]);
                Scenario {
                    stationary: true,
                    axis: Plane::coordinate(3, &[1, 2]).expect("valid axes"),
                    center: neck.clone(),
                    probes: vec![Probe {
                        point: neck.clone(),
                        tangent: Plane::coordinate(3, &[1, 2]).expect("valid axes"),
                        multiplicity: 1,
                    }],
                    ..base
                }
            }
            ScenarioKind::Sphere => {
                let pole = pt(&[0.0, 0.0, SPHERE_RADIUS]);
                Scenario {
                    center: pole.clone(),
                    probes: vec![Probe {
                        point: pole.clone(),
                        tangent: horizontal(),
                        multiplicity: 1,
                    }],
                    ..base
                }
            }
            ScenarioKind::PlaneUnionCatenoid => {
                let a = pt(&[0.0, 0.0, 0.5]);
                Scenario {
                    stationary: true,
                    center: a.clone(),
                    probes: vec![Probe {
                        point: a.clone(),
                        tangent: horizontal(),
                        multiplicity: 1,
                    }],
                    default_mesh: 0.05,
                    ..base
                }
            }
            ScenarioKind::Bump => Scenario {
                q: 2,
                probes: vec![Probe {
                    point: pt(&[-0.5, 0.5, -0.2]),
                    tangent: horizontal(),
                    multiplicity: 1,
                }],
                ..base
            },
            ScenarioKind::QGraph2 | ScenarioKind::QGraph3 => Scenario {
                q: if kind == ScenarioKind::QGraph2 { 2 } else { 3 },
                ..base
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::get(name.parse()?))
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// The fixture at mesh scale `mesh`, covering at least the ball of
    /// radius `extent` around the scenario's region of interest.
    pub fn generate(&self, mesh: f64, extent: f64) -> Result<DiscreteVarifold> {
        match self.kind {
            ScenarioKind::Plane => gen_plane(2, 1, 1, extent, mesh),
            ScenarioKind::TwoPlanes => {
                let offsets: Vec<DVector<f64>> = TWO_PLANE_OFFSETS.iter().map(|&z| DVector::from_element(1, z)).collect();
                gen_parallel_planes(2, &offsets, extent, mesh)
            }
            ScenarioKind::TiltedPlane => gen_qgraph_analytic(
                &AffineSheets {
                    offsets: vec![DVector::zeros(1)],
                    slopes: vec![DMatrix::from_row_slice(1, 2, &[TILT_SLOPE, 0.0])],
                },
                extent,
                mesh,
            ),
            ScenarioKind::SineGraph => {
                // Generated around the crest, then moved into place.
                let v = gen_qgraph_analytic(&ShiftedSine, extent, mesh)?;
                v.translated(&pt(&[FRAC_PI_2, 0.0, 0.0]))
            }
            ScenarioKind::Paraboloid => gen_qgraph_analytic(
                &ParaboloidSheet {
                    n: 2,
                    curvature: PARABOLOID_CURVATURE,
                },
                extent,
                mesh,
            ),
            ScenarioKind::CrossingPlanes => gen_qgraph_analytic(&crossing_sheets(), extent, mesh),
            ScenarioKind::Catenoid => gen_catenoid(CATENOID_EXTENT.max(extent.min(3.0)), mesh),
            ScenarioKind::Sphere => gen_sphere(2, SPHERE_RADIUS, mesh),
            ScenarioKind::PlaneUnionCatenoid => {
                if extent > UNION_PLANE_EXTENT {
                    return Err(invalid(format!("plane_union_catenoid covers radius {UNION_PLANE_EXTENT} only")));
                }
                gen_plane_union_catenoid(mesh)
            }
            ScenarioKind::Bump => gen_qgraph_analytic(&bump_sheets(), extent, mesh),
            ScenarioKind::QGraph2 | ScenarioKind::QGraph3 => {
                let field = qgraph_field(self.q, extent, mesh)?;
                gen_qgraph(&field, 1.0)
            }
        }
    }
}

/// `u(y) = ε sin(y_1 + π/2)`, i.e. the sine graph seen from the probe.
struct ShiftedSine;

impl crate::varifold::QSheets for ShiftedSine {
    fn n(&self) -> usize {
        2
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        1
    }
    fn value(&self, _: usize, x: &[f64]) -> DVector<f64> {
        SineSheet { amplitude: SINE_AMPLITUDE }.value(0, &[x[0] + FRAC_PI_2, x[1]])
    }
    fn jacobian(&self, _: usize, x: &[f64]) -> DMatrix<f64> {
        SineSheet { amplitude: SINE_AMPLITUDE }.jacobian(0, &[x[0] + FRAC_PI_2, x[1]])
    }
    fn hessian(&self, _: usize, x: &[f64]) -> Vec<DMatrix<f64>> {
        SineSheet { amplitude: SINE_AMPLITUDE }.hessian(0, &[x[0] + FRAC_PI_2, x[1]])
    }
}
