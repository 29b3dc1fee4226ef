//! Small numerical helpers shared across modules.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Structural tolerance for projection invariants.
pub const TOL_STRUCTURAL: f64 = 1e-10;
/// Tolerance for identities derived from several floating point operations.
pub const TOL_COMPOSITE: f64 = 1e-9;

/// Pairwise (cascade) summation. Deterministic for a given input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().fold(0.0, |acc, x| acc + x);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// A Lebesgue exponent `1 <= q <= ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_infinite() && q > 0.0 {
            Ok(Exponent::Infinity)
        } else if q.is_finite() && q >= 1.0 {
            Ok(Exponent::Finite(q))
        } else {
            Err(invalid(format!("exponent must satisfy 1 <= q <= inf, got {q}")))
        }
    }

    /// `1/q`, zero for `q = ∞`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Exponent::Finite(q) => 1.0 / q,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(q) => q,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// Sobolev conjugate `nq/(n-q)` for `q < n`, `None` otherwise.
    pub fn sobolev_conjugate(self, n: usize) -> Option<Exponent> {
        match self {
            Exponent::Finite(q) if q < n as f64 => {
                Some(Exponent::Finite(q * n as f64 / (n as f64 - q)))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(q) => write!(f, "{q}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Exponent::Infinity);
        }
        let q: f64 = t
            .parse()
            .map_err(|_| invalid(format!("cannot parse exponent {s:?}")))?;
        Exponent::new(q)
    }
}

/// `L^q` norm of a function given by `(value, weight)` samples.
///
/// For `q = ∞` the weights only select the support (`weight > 0`).
pub fn lq_norm<I>(samples: I, q: Exponent) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    match q {
        Exponent::Finite(q) => {
            let terms: Vec<f64> = samples
                .into_iter()
                .filter(|&(_, w)| w > 0.0)
                .map(|(v, w)| w * v.abs().powf(q))
                .collect();
            pairwise_sum(&terms).powf(1.0 / q)
        }
        Exponent::Infinity => samples
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max),
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    let n = order as f64;
    for i in 0..order {
        // Newton iteration on P_n starting from the Chebyshev guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 1 { x } else { p1 };
            let pm1 = if order == 1 { 1.0 } else { p0 };
            dp = n * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// Volume of the unit ball in `R^n`, `π^{n/2} / Γ(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // ω_0 = 1, ω_1 = 2, ω_n = 2π/n ω_{n-2}
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Formats a float with 17 significant digits; parses back bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| invalid(format!("cannot parse number {s:?}")))
}
