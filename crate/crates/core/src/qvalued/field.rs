//! Sampled `Q`-valued fields on a lattice over a closed ball of `R^n`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numeric::{fmt_f64, parse_f64};

use super::{metric_g, QValue};

/// A `Q`-valued function sampled at the lattice nodes `k · dx` lying in the
/// closed ball `|x| <= radius` of `R^n`. Nodes outside the domain mask carry
/// no value.
#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    n: usize,
    m: usize,
    q: usize,
    dx: f64,
    radius: f64,
    lattice: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    samples: Vec<Option<QValue>>,
}

/// Lattice points of the closed ball in lexicographic order.
fn ball_lattice(n: usize, radius: f64, dx: f64) -> Vec<Vec<i64>> {
    let limit = (radius / dx) * (1.0 + 1e-12);
    let kmax = limit.floor() as i64;
    let mut out = Vec::new();
    let mut k = vec![-kmax; n];
    loop {
        let norm = k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if norm <= limit {
            out.push(k.clone());
        }
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            k[i] += 1;
            if k[i] <= kmax {
                break;
            }
            k[i] = -kmax;
        }
    }
}

impl QField {
    /// Samples `f` at every lattice node; `None` leaves the node masked out.
    pub fn from_fn<F>(n: usize, m: usize, q: usize, radius: f64, dx: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Option<QValue>,
    {
        if n == 0 || m == 0 || q == 0 {
            return Err(invalid("field dimensions and Q must be positive"));
        }
        if !(dx > 0.0 && dx.is_finite()) || !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("grid spacing and radius must be positive"));
        }
        let lattice = ball_lattice(n, radius, dx);
        let mut samples = Vec::with_capacity(lattice.len());
        for k in &lattice {
            let x: Vec<f64> = k.iter().map(|&v| v as f64 * dx).collect();
            let s = f(&x);
            if let Some(v) = &s {
                check_dim(q, v.q())?;
                check_dim(m, v.m())?;
            }
            samples.push(s);
        }
        let index = lattice.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(Self {
            n,
            m,
            q,
            dx,
            radius,
            lattice,
            index,
            samples,
        })
    }

    /// The constant field on the whole ball.
    pub fn constant(n: usize, radius: f64, dx: f64, value: QValue) -> Result<Self> {
        let (m, q) = (value.m(), value.q());
        Self::from_fn(n, m, q, radius, dx, |_| Some(value.clone()))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.lattice.len()
    }

    /// Integer lattice coordinates of a node.
    pub fn node_lattice(&self, node: usize) -> &[i64] {
        &self.lattice[node]
    }

    pub fn node_position(&self, node: usize) -> DVector<f64> {
        DVector::from_iterator(self.n, self.lattice[node].iter().map(|&k| k as f64 * self.dx))
    }

    /// The node at lattice coordinates `k`, if it lies in the ball.
    pub fn node_at(&self, k: &[i64]) -> Option<usize> {
        self.index.get(k).copied()
    }

    pub fn sample(&self, node: usize) -> Option<&QValue> {
        self.samples[node].as_ref()
    }

    pub fn samples(&self) -> &[Option<QValue>] {
        &self.samples
    }

    pub fn is_masked_in(&self, node: usize) -> bool {
        self.samples[node].is_some()
    }

    pub fn masked_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    /// `𝓛^n` measure of the masked domain, `#nodes · dx^n`.
    pub fn domain_volume(&self) -> f64 {
        self.masked_count() as f64 * self.cell_volume()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.n as i32)
    }

    /// Sets or clears the value at a node.
    pub fn set_sample(&mut self, node: usize, value: Option<QValue>) -> Result<()> {
        if let Some(v) = &value {
            check_dim(self.q, v.q())?;
            check_dim(self.m, v.m())?;
        }
        self.samples[node] = value;
        Ok(())
    }

    /// The field with every node outside `keep` masked out.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for (i, s) in out.samples.iter_mut().enumerate() {
            if !keep(i) {
                *s = None;
            }
        }
        out
    }

    /// Every field value shifted by `v`.
    pub fn translated(&self, v: &DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        for s in out.samples.iter_mut().flatten() {
            *s = s.translated(v)?;
        }
        Ok(out)
    }

    /// The neighbor of `node` one step along `axis` in direction `sign`.
    pub fn neighbor(&self, node: usize, axis: usize, sign: i64) -> Option<usize> {
        let mut k = self.lattice[node].clone();
        k[axis] += sign;
        self.node_at(&k)
    }

    /// Pairs of masked-in nodes adjacent along a coordinate axis, each pair
    /// listed once with the lower node first.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.node_count() {
            if !self.is_masked_in(i) {
                continue;
            }
            for axis in 0..self.n {
                if let Some(j) = self.neighbor(i, axis, 1) {
                    if self.is_masked_in(j) {
                        out.push((i, j));
                    }
                }
            }
        }
        out
    }

    /// `max 𝒢(f(x), f(y)) / |x - y|` over adjacent masked-in pairs, with the
    /// maximizing pair.
    pub fn lipschitz_witness(&self) -> (f64, Option<(usize, usize)>) {
        let mut best = (0.0, None);
        for (i, j) in self.adjacent_pairs() {
            let a = self.samples[i].as_ref().expect("masked in");
            let b = self.samples[j].as_ref().expect("masked in");
            let r = metric_g(a, b).expect("uniform shape") / self.dx;
            if r > best.0 {
                best = (r, Some((i, j)));
            }
        }
        best
    }

    /// Measured Lipschitz constant over adjacent masked-in pairs.
    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz_witness().0
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Writes the field: a preamble `n,m,Q,dx,radius` with values, then one
/// row per node with its index, mask bit and `Q·m` coordinates in canonical
/// order (zeros for masked-out nodes).
pub fn write_qfield<W: Write>(f: &QField, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "n,m,Q,dx,radius")?;
    writeln!(w, "{},{},{},{},{}", f.n, f.m, f.q, fmt_f64(f.dx), fmt_f64(f.radius))?;
    for (i, s) in f.samples.iter().enumerate() {
        write!(w, "{},{}", i, u8::from(s.is_some()))?;
        match s {
            Some(v) => {
                for p in v.points() {
                    for x in p.iter() {
                        write!(w, ",{}", fmt_f64(*x))?;
                    }
                }
            }
            None => {
                for _ in 0..f.q * f.m {
                    write!(w, ",{}", fmt_f64(0.0))?;
                }
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qfield_csv(f: &QField, path: impl AsRef<Path>) -> Result<()> {
    write_qfield(f, File::create(path)?)
}

/// Reads a field written by [`write_qfield`].
pub fn read_qfield<R: Read>(reader: R) -> Result<QField> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let _ = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let (ln, pre) = lines.next().ok_or_else(|| parse_err(2, "missing preamble values"))?;
    let pre: Vec<&str> = pre.split(',').collect();
    if pre.len() != 5 {
        return Err(parse_err(ln, "expected n,m,Q,dx,radius"));
    }
    let int = |s: &str| s.trim().parse::<usize>().map_err(|_| parse_err(ln, format!("bad integer {s:?}")));
    let (n, m, q) = (int(pre[0])?, int(pre[1])?, int(pre[2])?);
    let dx = parse_f64(pre[3])?;
    let radius = parse_f64(pre[4])?;
    let mut field = QField::from_fn(n, m, q, radius, dx, |_| None)?;
    let mut seen = 0usize;
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + q * m {
            return Err(parse_err(ln, format!("expected {} columns", 2 + q * m)));
        }
        let node = int(cols[0]).map_err(|_| parse_err(ln, "bad node index"))?;
        if node >= field.node_count() {
            return Err(parse_err(ln, format!("node {node} out of range")));
        }
        let coords = cols[2..]
            .iter()
            .map(|c| parse_f64(c).map_err(|e| parse_err(ln, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        let value = match cols[1].trim() {
            "1" => Some(QValue::new(coords.chunks(m).map(DVector::from_column_slice).collect())?),
            "0" => None,
            other => return Err(parse_err(ln, format!("bad mask bit {other:?}"))),
        };
        field.set_sample(node, value)?;
        seen += 1;
    }
    if seen != field.node_count() {
        return Err(parse_err(0, format!("expected {} node rows, found {seen}", field.node_count())));
    }
    Ok(field)
}

pub fn read_qfield_csv(path: impl AsRef<Path>) -> Result<QField> {
    read_qfield(File::open(path)?)
}
