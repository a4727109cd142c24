//! Metric-space primitives: torus and interval points, symbol windows, and
//! sampled arcs.
//!
//! Arcs are polylines in a fixed coordinate chart. Images of arcs are taken
//! samplewise and then refined, so every consumer sees a mesh-controlled
//! polyline rather than an abstract continuum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("point kinds differ: {0} vs {1}")]
    KindMismatch(&'static str, &'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("sample index {index} out of range for an arc of {len} samples")]
    Index { index: usize, len: usize },
    #[error("shift by {requested} exceeds reliable radius {radius}")]
    Precision { requested: usize, radius: usize },
}

/// Distance on a single point kind.
pub trait Metric {
    fn dist(&self, other: &Self) -> f64;
}

/// Point kinds that carry a coordinate chart, so arcs can be interpolated.
pub trait Chart: Metric + Clone {
    /// Point at fraction `s` of the chart segment from `self` to `other`.
    fn lerp(&self, other: &Self, s: f64) -> Self;
}

#[inline]
pub(crate) fn wrap01(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    // rem_euclid of a tiny negative number rounds up to 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed representative of `v` modulo 1 in [-0.5, 0.5).
#[inline]
pub(crate) fn wrap_half(v: f64) -> f64 {
    let r = wrap01(v + 0.5) - 0.5;
    if r < -0.5 {
        r + 1.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint {
            x: wrap01(x),
            y: wrap01(y),
        }
    }

    /// Shortest displacement from `self` to `other` in the universal cover.
    pub fn delta(&self, other: &TorusPoint) -> (f64, f64) {
        (wrap_half(other.x - self.x), wrap_half(other.y - self.y))
    }

    pub fn offset(&self, dx: f64, dy: f64) -> TorusPoint {
        TorusPoint::new(self.x + dx, self.y + dy)
    }
}

impl Metric for TorusPoint {
    #[inline]
    fn dist(&self, other: &Self) -> f64 {
        let mut dx = (self.x - other.x).abs();
        let mut dy = (self.y - other.y).abs();
        if dx > 0.5 {
            dx = 1.0 - dx;
        }
        if dy > 0.5 {
            dy = 1.0 - dy;
        }
        (dx * dx + dy * dy).sqrt()
    }
}

impl Chart for TorusPoint {
    fn lerp(&self, other: &Self, s: f64) -> Self {
        let (dx, dy) = self.delta(other);
        self.offset(s * dx, s * dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPoint {
    pub x: f64,
}

impl IntervalPoint {
    pub fn new(x: f64) -> Result<Self, SpaceError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(SpaceError::Parameter(format!(
                "interval point {x} outside [0,1]"
            )));
        }
        Ok(IntervalPoint { x })
    }
}

impl Metric for IntervalPoint {
    fn dist(&self, other: &Self) -> f64 {
        (self.x - other.x).abs()
    }
}

impl Chart for IntervalPoint {
    fn lerp(&self, other: &Self, s: f64) -> Self {
        IntervalPoint {
            x: self.x + s * (other.x - self.x),
        }
    }
}

/// A finite window of a bi-infinite symbol sequence, indexed over
/// [-radius, radius]. Only the stored window is reliable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolWord {
    pub k: u8,
    pub radius: usize,
    syms: Vec<u8>,
}

impl SymbolWord {
    pub fn new(k: u8, radius: usize, syms: Vec<u8>) -> Result<Self, SpaceError> {
        if k < 2 {
            return Err(SpaceError::Parameter(
                "alphabet needs at least 2 symbols".into(),
            ));
        }
        if syms.len() != 2 * radius + 1 {
            return Err(SpaceError::Parameter(format!(
                "window of radius {radius} needs {} symbols, got {}",
                2 * radius + 1,
                syms.len()
            )));
        }
        if let Some(s) = syms.iter().find(|&&s| s >= k) {
            return Err(SpaceError::Parameter(format!(
                "symbol {s} not in alphabet of size {k}"
            )));
        }
        Ok(SymbolWord { k, radius, syms })
    }

    pub fn zeros(k: u8, radius: usize) -> Self {
        SymbolWord {
            k,
            radius,
            syms: vec![0; 2 * radius + 1],
        }
    }

    /// Symbol at index `i`; `None` outside the reliable window.
    pub fn get(&self, i: i64) -> Option<u8> {
        let r = self.radius as i64;
        if i < -r || i > r {
            return None;
        }
        Some(self.syms[(i + r) as usize])
    }

    pub fn set(&mut self, i: i64, s: u8) {
        let r = self.radius as i64;
        assert!(i >= -r && i <= r && s < self.k);
        self.syms[(i + r) as usize] = s;
    }

    pub fn symbols(&self) -> &[u8] {
        &self.syms
    }

    /// Left shift by `power` (negative shifts right). The reliable radius
    /// shrinks by |power|.
    pub fn shift(&self, power: i64) -> Result<SymbolWord, SpaceError> {
        let p = power.unsigned_abs() as usize;
        if p > self.radius {
            return Err(SpaceError::Precision {
                requested: p,
                radius: self.radius,
            });
        }
        let nr = self.radius - p;
        let start = (self.radius as i64 + power - nr as i64) as usize;
        Ok(SymbolWord {
            k: self.k,
            radius: nr,
            syms: self.syms[start..start + 2 * nr + 1].to_vec(),
        })
    }

    /// Index of the first disagreement within the common reliable window.
    pub fn first_difference(&self, other: &SymbolWord) -> Option<usize> {
        let r = self.radius.min(other.radius);
        let (a, b) = (self.radius, other.radius);
        (0..=r).find(|&m| {
            self.syms[a + m] != other.syms[b + m] || self.syms[a - m] != other.syms[b - m]
        })
    }
}

impl Metric for SymbolWord {
    fn dist(&self, other: &Self) -> f64 {
        match self.first_difference(other) {
            Some(m) => 0.5f64.powi(m as i32),
            None => 0.0,
        }
    }
}

/// Dynamically typed point, for callers that only know the kind at runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Point {
    Torus(TorusPoint),
    Interval(IntervalPoint),
    Word(SymbolWord),
}

impl Point {
    pub fn kind(&self) -> &'static str {
        match self {
            Point::Torus(_) => "torus",
            Point::Interval(_) => "interval",
            Point::Word(_) => "word",
        }
    }
}

pub fn distance(p: &Point, q: &Point) -> Result<f64, SpaceError> {
    match (p, q) {
        (Point::Torus(a), Point::Torus(b)) => Ok(a.dist(b)),
        (Point::Interval(a), Point::Interval(b)) => Ok(a.dist(b)),
        (Point::Word(a), Point::Word(b)) => {
            if a.k != b.k {
                return Err(SpaceError::Parameter(format!(
                    "alphabets differ: {} vs {}",
                    a.k, b.k
                )));
            }
            Ok(a.dist(b))
        }
        _ => Err(SpaceError::KindMismatch(p.kind(), q.kind())),
    }
}

/// Sampled continuum: an ordered polyline with arclength parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc<P> {
    samples: Vec<P>,
    mesh: f64,
    params: Vec<f64>,
}

impl<P: Chart> Arc<P> {
    pub fn new(samples: Vec<P>) -> Result<Self, SpaceError> {
        if samples.is_empty() {
            return Err(SpaceError::Parameter(
                "an arc needs at least one sample".into(),
            ));
        }
        let mut cum = Vec::with_capacity(samples.len());
        let mut mesh = 0.0f64;
        let mut total = 0.0;
        cum.push(0.0);
        for w in samples.windows(2) {
            let d = w[0].dist(&w[1]);
            mesh = mesh.max(d);
            total += d;
            cum.push(total);
        }
        let n = samples.len();
        let params = if total > 0.0 {
            cum.iter().map(|c| c / total).collect()
        } else if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        Ok(Arc {
            samples,
            mesh,
            params,
        })
    }

    pub fn singleton(p: P) -> Self {
        Arc {
            samples: vec![p],
            mesh: 0.0,
            params: vec![0.0],
        }
    }

    /// Uniformly sampled chart segment from `a` to `b`.
    pub fn segment(a: &P, b: &P, n: usize) -> Result<Self, SpaceError> {
        if n < 2 {
            return Err(SpaceError::Parameter(
                "a segment needs at least two samples".into(),
            ));
        }
        Arc::new(
            (0..n)
                .map(|i| a.lerp(b, i as f64 / (n - 1) as f64))
                .collect(),
        )
    }

    pub fn samples(&self) -> &[P] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.samples.len() == 1
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].dist(&w[1])).sum()
    }

    pub fn diameter(&self) -> f64 {
        arc_diameter(self)
    }

    pub fn refine(&self, target_mesh: f64) -> Result<Self, SpaceError> {
        refine_arc(self, target_mesh)
    }

    pub fn sub_arc(&self, r: f64, anchor: usize) -> Result<Self, SpaceError> {
        sub_arc(self, r, anchor)
    }
}

pub fn arc_diameter<P: Chart>(a: &Arc<P>) -> f64 {
    let s = &a.samples;
    let mut best = 0.0f64;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.max(s[i].dist(&s[j]));
        }
    }
    best
}

pub fn refine_arc<P: Chart>(a: &Arc<P>, target_mesh: f64) -> Result<Arc<P>, SpaceError> {
    if !(target_mesh > 0.0) {
        return Err(SpaceError::Parameter(format!(
            "target mesh must be positive, got {target_mesh}"
        )));
    }
    let mut out = Vec::with_capacity(a.samples.len());
    out.push(a.samples[0].clone());
    for w in a.samples.windows(2) {
        let d = w[0].dist(&w[1]);
        let pieces = (d / target_mesh).ceil().max(1.0) as usize;
        for j in 1..pieces {
            out.push(w[0].lerp(&w[1], j as f64 / pieces as f64));
        }
        out.push(w[1].clone());
    }
    Arc::new(out)
}

/// Arclength window `[lo, hi]` (in [0,1]) of the sub-arc of fraction `r`
/// around `anchor`. Grows symmetrically and slides when it hits an end, so
/// windows are nested in `r`.
pub fn sub_arc_window<P: Chart>(
    a: &Arc<P>,
    r: f64,
    anchor: usize,
) -> Result<(f64, f64), SpaceError> {
    if anchor >= a.len() {
        return Err(SpaceError::Index {
            index: anchor,
            len: a.len(),
        });
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(SpaceError::Parameter(format!(
            "sub-arc fraction {r} outside [0,1]"
        )));
    }
    let sa = a.params[anchor];
    let lo = (sa - r / 2.0).min(1.0 - r).max(0.0);
    Ok((lo, (lo + r).min(1.0)))
}

pub fn sub_arc<P: Chart>(a: &Arc<P>, r: f64, anchor: usize) -> Result<Arc<P>, SpaceError> {
    let (lo, hi) = sub_arc_window(a, r, anchor)?;
    if r == 0.0 || a.is_singleton() {
        return Ok(Arc::singleton(a.samples[anchor].clone()));
    }
    if r == 1.0 {
        return Ok(a.clone());
    }
    const TOL: f64 = 1e-12;
    let p = &a.params;
    let at = |s: f64| -> P {
        // first segment whose right end reaches s
        let j = p.partition_point(|&v| v < s).clamp(1, p.len() - 1);
        let span = p[j] - p[j - 1];
        let f = if span > 0.0 {
            (s - p[j - 1]) / span
        } else {
            0.0
        };
        a.samples[j - 1].lerp(&a.samples[j], f.clamp(0.0, 1.0))
    };
    let mut out = Vec::new();
    let first_inside = p.iter().position(|&v| v >= lo - TOL).unwrap_or(p.len());
    if first_inside == p.len() || (p[first_inside] - lo).abs() > TOL {
        out.push(at(lo));
    }
    for (i, &v) in p.iter().enumerate() {
        if v >= lo - TOL && v <= hi + TOL {
            out.push(a.samples[i].clone());
        }
    }
    let last_inside = p.iter().rposition(|&v| v <= hi + TOL);
    if last_inside.map_or(true, |i| (p[i] - hi).abs() > TOL) {
        out.push(at(hi));
    }
    Arc::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(k: u8, r: usize, f: impl Fn(i64) -> u8) -> SymbolWord {
        SymbolWord::new(k, r, (-(r as i64)..=r as i64).map(f).collect()).unwrap()
    }

    #[test]
    fn torus_wraparound() {
        let d = TorusPoint::new(0.9, 0.0).dist(&TorusPoint::new(0.1, 0.0));
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn torus_diameter_below_one() {
        let d = TorusPoint::new(0.0, 0.0).dist(&TorusPoint::new(0.5, 0.5));
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_at_zero() {
        let p = Point::Torus(TorusPoint::new(0.3, 0.7));
        assert_eq!(distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn word_first_difference_at_two() {
        let a = SymbolWord::zeros(2, 5);
        let b = word(2, 5, |i| (i == -2) as u8);
        assert_eq!(a.dist(&b), 0.25);
        let c = word(2, 5, |i| (i == 2) as u8);
        assert_eq!(a.dist(&c), 0.25);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let p = Point::Torus(TorusPoint::new(0.0, 0.0));
        let q = Point::Interval(IntervalPoint::new(0.5).unwrap());
        assert!(matches!(
            distance(&p, &q),
            Err(SpaceError::KindMismatch(..))
        ));
    }

    #[test]
    fn shift_consumes_radius() {
        let w = word(2, 3, |i| (i == 1) as u8);
        let s = w.shift(1).unwrap();
        assert_eq!(s.radius, 2);
        assert_eq!(s.get(0), Some(1));
        assert!(matches!(w.shift(4), Err(SpaceError::Precision { .. })));
        let back = w.shift(-2).unwrap();
        assert_eq!(back.get(-1), Some(0));
        assert_eq!(back.get(2), None);
    }

    #[test]
    fn straight_segment_diameter() {
        let a = TorusPoint::new(0.0, 0.0);
        let arc = Arc::segment(&a, &TorusPoint::new(0.3, 0.0), 7).unwrap();
        assert!((arc.diameter() - 0.3).abs() < 1e-12);
        assert_eq!(Arc::singleton(a).diameter(), 0.0);
    }

    #[test]
    fn long_segment_wraps() {
        let arc = Arc::segment(&TorusPoint::new(0.0, 0.0), &TorusPoint::new(0.6, 0.0), 41).unwrap();
        // brute force over pairs with the quotient metric
        let mut best = 0.0f64;
        for p in arc.samples() {
            for q in arc.samples() {
                let dx = (p.x - q.x).abs();
                best = best.max(dx.min(1.0 - dx));
            }
        }
        assert!((best - 0.4).abs() < 1e-12);
        assert!((arc.diameter() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn refine_short_segment() {
        let arc = Arc::segment(&TorusPoint::new(0.0, 0.0), &TorusPoint::new(0.3, 0.0), 2).unwrap();
        let r = arc.refine(0.1).unwrap();
        assert!(r.len() >= 4);
        assert!(r.mesh() <= 0.1 + 1e-12);
        assert!(matches!(arc.refine(0.0), Err(SpaceError::Parameter(_))));
    }

    #[test]
    fn refine_scan() {
        let arc = Arc::segment(&TorusPoint::new(0.1, 0.2), &TorusPoint::new(0.6, 0.2), 3).unwrap();
        let r = arc.refine(0.05).unwrap();
        let worst = r
            .samples()
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .fold(0.0, f64::max);
        assert!(worst <= 0.05 + 1e-12);
    }

    #[test]
    fn sub_arc_endpoints() {
        let arc = Arc::segment(&TorusPoint::new(0.0, 0.0), &TorusPoint::new(0.5, 0.0), 11).unwrap();
        assert!(arc.sub_arc(0.0, 3).unwrap().is_singleton());
        assert_eq!(arc.sub_arc(1.0, 3).unwrap(), arc);
        assert!(matches!(
            arc.sub_arc(0.5, 11),
            Err(SpaceError::Index { .. })
        ));
    }

    #[test]
    fn half_sub_arc_from_start() {
        let arc = Arc::segment(&TorusPoint::new(0.0, 0.0), &TorusPoint::new(0.5, 0.0), 11).unwrap();
        // accumulate arclength independently and keep samples within half of it
        let total: f64 = (1..11)
            .map(|i| arc.samples()[i].dist(&arc.samples()[i - 1]))
            .sum();
        let mut acc = 0.0;
        let mut expect = vec![arc.samples()[0]];
        for i in 1..11 {
            acc += arc.samples()[i].dist(&arc.samples()[i - 1]);
            if acc <= 0.5 * total + 1e-12 {
                expect.push(arc.samples()[i]);
            }
        }
        let sub = arc.sub_arc(0.5, 0).unwrap();
        assert_eq!(sub.samples(), &expect[..]);
        assert_eq!(sub.len(), 6);
    }

    fn torus_pt() -> impl Strategy<Value = TorusPoint> {
        (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| TorusPoint::new(x, y))
    }

    fn word_pt() -> impl Strategy<Value = SymbolWord> {
        prop::collection::vec(0u8..2, 9).prop_map(|s| SymbolWord::new(2, 4, s).unwrap())
    }

    fn torus_arc() -> impl Strategy<Value = Arc<TorusPoint>> {
        (
            torus_pt(),
            prop::collection::vec((-0.05..0.05f64, -0.05..0.05f64), 1..12),
        )
            .prop_map(|(p, steps)| {
                let mut pts = vec![p];
                for (dx, dy) in steps {
                    let last = *pts.last().unwrap();
                    pts.push(last.offset(dx, dy));
                }
                Arc::new(pts).unwrap()
            })
    }

    proptest! {
        #[test]
        fn torus_metric_axioms(a in torus_pt(), b in torus_pt(), c in torus_pt()) {
            prop_assert!((a.dist(&b) - b.dist(&a)).abs() < 1e-15);
            prop_assert_eq!(a.dist(&a), 0.0);
            prop_assert!(a.dist(&c) <= a.dist(&b) + b.dist(&c) + 1e-12);
            prop_assert!(a.dist(&b) < 1.0);
        }

        #[test]
        fn interval_metric_axioms(a in 0.0..=1.0f64, b in 0.0..=1.0f64, c in 0.0..=1.0f64) {
            let (a, b, c) = (IntervalPoint::new(a).unwrap(), IntervalPoint::new(b).unwrap(), IntervalPoint::new(c).unwrap());
            prop_assert_eq!(a.dist(&b), b.dist(&a));
            prop_assert!(a.dist(&c) <= a.dist(&b) + b.dist(&c) + 1e-15);
        }

        #[test]
        fn word_metric_axioms(a in word_pt(), b in word_pt(), c in word_pt()) {
            prop_assert_eq!(a.dist(&b), b.dist(&a));
            prop_assert_eq!(a.dist(&b) == 0.0, a == b);
            prop_assert!(a.dist(&c) <= a.dist(&b) + b.dist(&c));
        }

        #[test]
        fn refine_never_coarsens(arc in torus_arc(), target in 0.001..0.2f64) {
            let r = arc.refine(target).unwrap();
            prop_assert!(r.diameter() <= arc.diameter() + 1e-12);
            prop_assert!(r.mesh() <= arc.mesh() + 1e-12);
            prop_assert!(r.len() >= arc.len());
        }

        #[test]
        fn sub_arcs_nest(arc in torus_arc(), r in 0.0..=1.0f64, s in 0.0..=1.0f64, pick in 0usize..64) {
            let anchor = pick % arc.len();
            let (r, s) = if r <= s { (r, s) } else { (s, r) };
            let (lo_r, hi_r) = sub_arc_window(&arc, r, anchor).unwrap();
            let (lo_s, hi_s) = sub_arc_window(&arc, s, anchor).unwrap();
            prop_assert!(lo_s <= lo_r + 1e-12 && hi_r <= hi_s + 1e-12);
            // original samples kept at r are kept at s
            let small = arc.sub_arc(r, anchor).unwrap();
            let big = arc.sub_arc(s, anchor).unwrap();
            for (i, p) in arc.samples().iter().enumerate() {
                if small.samples().contains(p) && arc.params()[i] >= lo_r && arc.params()[i] <= hi_r {
                    prop_assert!(big.samples().contains(p));
                }
            }
            prop_assert!(small.diameter() <= big.diameter() + 1e-12);
        }
    }
}
