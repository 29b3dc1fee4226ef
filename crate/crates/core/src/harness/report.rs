//! Report rows with their CSV form, and key-value summaries.
//!
//! Floats are written with 17 significant digits, so parsing an emitted
//! file gives back the exact values.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numeric::{fmt_f64, parse_f64, Exponent};

/// A row type with a fixed column order.
pub trait CsvRow: Sized {
    const HEADER: &'static [&'static str];
    fn to_record(&self) -> Vec<String>;
    fn from_record(fields: &[&str]) -> Result<Self>;
}

/// Writes a header and one line per row; no rows gives a header-only file.
pub fn write_rows<R: CsvRow, W: Write>(rows: &[R], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.to_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses rows written by [`write_rows`], checking the header.
pub fn read_rows<R: CsvRow, Rd: Read>(reader: Rd) -> Result<Vec<R>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", R::HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        out.push(R::from_record(&fields).map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn emit_csv<R: CsvRow>(rows: &[R], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

pub fn read_csv<R: CsvRow>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    read_rows(File::open(path)?)
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt_f64(value));
    }

    /// Appends every line of a `key=value` block under `prefix.`.
    pub fn push_block(&mut self, prefix: &str, block: &str) {
        for line in block.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(&format!("{prefix}.{k}"), v);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Rows plus the summary and hypothesis flags raised while producing them.
#[derive(Clone, Debug, PartialEq)]
pub struct Report<R> {
    pub rows: Vec<R>,
    pub summary: Summary,
    /// Failed hypotheses; a non-empty list makes the CLI exit with 2.
    pub hypothesis_flags: Vec<String>,
}

impl<R> Report<R> {
    pub fn flagged(&self) -> bool {
        !self.hypothesis_flags.is_empty()
    }
}

fn join_flags(flags: &[String]) -> String {
    flags.join(";")
}

fn split_flags(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(';').map(str::to_string).collect()
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(invalid(format!("expected true or false, got {other:?}"))),
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| invalid(format!("cannot parse integer {s:?}")))
}

fn fmt_exponent(q: Exponent) -> String {
    fmt_f64(q.value())
}

fn parse_exponent(s: &str) -> Result<Exponent> {
    Exponent::new(parse_f64(s)?)
}

fn check_len(fields: &[&str], n: usize) -> Result<()> {
    if fields.len() == n {
        Ok(())
    } else {
        Err(invalid(format!("expected {n} columns, found {}", fields.len())))
    }
}

/// One fixed-scale comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedScaleRow {
    pub scenario: String,
    pub r: f64,
    pub q: Exponent,
    /// Best height of `μ ⌞ G` with the conjugate exponent.
    pub lhs: f64,
    /// Tilt over the enlarged cylinder.
    pub t_q: f64,
    /// `(r^{-n} μ(C ∖ A))^{1/q}`.
    pub bad_mass_term: f64,
    /// `lhs / (t_q + bad_mass_term)`.
    pub ratio: f64,
    pub flags: Vec<String>,
}

impl FixedScaleRow {
    pub fn rhs(&self) -> f64 {
        self.t_q + self.bad_mass_term
    }
}

impl CsvRow for FixedScaleRow {
    const HEADER: &'static [&'static str] = &["scenario", "r", "q", "lhs", "t_q", "bad_mass_term", "ratio", "flags"];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            fmt_f64(self.r),
            fmt_exponent(self.q),
            fmt_f64(self.lhs),
            fmt_f64(self.t_q),
            fmt_f64(self.bad_mass_term),
            fmt_f64(self.ratio),
            join_flags(&self.flags),
        ]
    }

    fn from_record(f: &[&str]) -> Result<Self> {
        check_len(f, Self::HEADER.len())?;
        Ok(Self {
            scenario: f[0].to_string(),
            r: parse_f64(f[1])?,
            q: parse_exponent(f[2])?,
            lhs: parse_f64(f[3])?,
            t_q: parse_f64(f[4])?,
            bad_mass_term: parse_f64(f[5])?,
            ratio: parse_f64(f[6])?,
            flags: split_flags(f[7]),
        })
    }
}

/// Both normalized quantities of the decay experiment at one radius.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub scenario: String,
    pub probe: usize,
    pub r: f64,
    /// Normalized height of `μ ⌞ B(a, r)` above the tangent plane.
    pub lhs: f64,
    /// Normalized tilt of `μ ⌞ B(a, r)` against the tangent plane.
    pub rhs: f64,
    /// `r >= 8 · mesh`.
    pub usable: bool,
}

impl CsvRow for DecayRow {
    const HEADER: &'static [&'static str] = &["scenario", "probe", "r", "lhs", "rhs", "usable"];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.probe.to_string(),
            fmt_f64(self.r),
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            self.usable.to_string(),
        ]
    }

    fn from_record(f: &[&str]) -> Result<Self> {
        check_len(f, Self::HEADER.len())?;
        Ok(Self {
            scenario: f[0].to_string(),
            probe: parse_usize(f[1])?,
            r: parse_f64(f[2])?,
            lhs: parse_f64(f[3])?,
            rhs: parse_f64(f[4])?,
            usable: parse_bool(f[5])?,
        })
    }
}

/// One evaluation of a monotonicity predicate.
#[derive(Clone, Debug, PartialEq)]
pub struct MonoRow {
    pub scenario: String,
    pub predicate: String,
    pub rho: f64,
    pub value: f64,
    pub bound: f64,
    /// Signed slack; non-negative when the predicate holds.
    pub margin: f64,
    pub pass: bool,
}

impl CsvRow for MonoRow {
    const HEADER: &'static [&'static str] = &["scenario", "predicate", "rho", "value", "bound", "margin", "pass"];

    fn to_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.predicate.clone(),
            fmt_f64(self.rho),
            fmt_f64(self.value),
            fmt_f64(self.bound),
            fmt_f64(self.margin),
            self.pass.to_string(),
        ]
    }

    fn from_record(f: &[&str]) -> Result<Self> {
        check_len(f, Self::HEADER.len())?;
        Ok(Self {
            scenario: f[0].to_string(),
            predicate: f[1].to_string(),
            rho: parse_f64(f[2])?,
            value: parse_f64(f[3])?,
            bound: parse_f64(f[4])?,
            margin: parse_f64(f[5])?,
            pass: parse_bool(f[6])?,
        })
    }
}

/// A single excess functional value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcessRow {
    /// `tilt` or `height`.
    pub quantity: String,
    pub q: Exponent,
    pub value: f64,
    pub flags: Vec<String>,
}

impl CsvRow for ExcessRow {
    const HEADER: &'static [&'static str] = &["quantity", "q", "value", "flags"];

    fn to_record(&self) -> Vec<String> {
        vec![self.quantity.clone(), fmt_exponent(self.q), fmt_f64(self.value), join_flags(&self.flags)]
    }

    fn from_record(f: &[&str]) -> Result<Self> {
        check_len(f, Self::HEADER.len())?;
        Ok(Self {
            quantity: f[0].to_string(),
            q: parse_exponent(f[1])?,
            value: parse_f64(f[2])?,
            flags: split_flags(f[3]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_of<R: CsvRow>(rows: &[R]) -> String {
        let mut buf = Vec::new();
        write_rows(rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(csv_of::<FixedScaleRow>(&[]), "scenario,r,q,lhs,t_q,bad_mass_term,ratio,flags\n");
        assert_eq!(csv_of::<DecayRow>(&[]).lines().count(), 1);
        assert!(read_rows::<MonoRow, _>(csv_of::<MonoRow>(&[]).as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = csv_of(&[DecayRow {
            scenario: "plane".into(),
            probe: 0,
            r: 0.1,
            lhs: 0.0,
            rhs: 0.0,
            usable: true,
        }]);
        assert!(read_rows::<MonoRow, _>(text.as_bytes()).is_err());
    }

    #[test]
    fn summary_text() {
        let mut s = Summary::default();
        s.push("a", 1);
        s.push_f64("b", 0.5);
        s.push_block("h", "x=1\ny=2\n");
        assert_eq!(s.to_text(), "a=1\nb=5.0000000000000000e-1\nh.x=1\nh.y=2\n");
        assert_eq!(s.get("h.y"), Some("2"));
    }

    fn any_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("not NaN", |x| !x.is_nan()),
            Just(f64::INFINITY),
            Just(0.0),
            Just(-0.0),
        ]
    }

    proptest! {
        #[test]
        fn fixed_scale_rows_round_trip_bit_exactly(
            r in any_f64(), lhs in any_f64(), t in any_f64(), b in any_f64(), ratio in any_f64(),
            q in prop_oneof![(1.0f64..10.0).prop_map(Exponent::Finite), Just(Exponent::Infinity)],
            flags in proptest::collection::vec("[a-z_]{1,8}", 0..3),
        ) {
            let row = FixedScaleRow { scenario: "s,\"x".into(), r, q, lhs, t_q: t, bad_mass_term: b, ratio, flags };
            let back: Vec<FixedScaleRow> = read_rows(csv_of(std::slice::from_ref(&row)).as_bytes()).unwrap();
            prop_assert_eq!(back.len(), 1);
            let b = &back[0];
            prop_assert_eq!(b.r.to_bits(), row.r.to_bits());
            prop_assert_eq!(b.lhs.to_bits(), row.lhs.to_bits());
            prop_assert_eq!(b.t_q.to_bits(), row.t_q.to_bits());
            prop_assert_eq!(b.bad_mass_term.to_bits(), row.bad_mass_term.to_bits());
            prop_assert_eq!(b.ratio.to_bits(), row.ratio.to_bits());
            prop_assert_eq!(b, &row);
        }

        #[test]
        fn decay_and_mono_rows_round_trip(r in any_f64(), v in any_f64(), w in any_f64(), pass in any::<bool>()) {
            let d = DecayRow { scenario: "p".into(), probe: 3, r, lhs: v, rhs: w, usable: pass };
            let back: Vec<DecayRow> = read_rows(csv_of(std::slice::from_ref(&d)).as_bytes()).unwrap();
            prop_assert_eq!(back[0].lhs.to_bits(), v.to_bits());
            prop_assert_eq!(&back[0], &d);
            let m = MonoRow { scenario: "p".into(), predicate: "quasi".into(), rho: r, value: v, bound: w, margin: v, pass };
            let back: Vec<MonoRow> = read_rows(csv_of(std::slice::from_ref(&m)).as_bytes()).unwrap();
            prop_assert_eq!(&back[0], &m);
        }
    }
}
