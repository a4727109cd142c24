//! Base homeomorphisms, unit-roof suspensions and their chain metric, and a
//! closed-form flow on [0,1] with two fixed points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spaces::{
    wrap01, Chart, IntervalPoint, Metric, Point, SpaceError, SymbolWord, TorusPoint,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("map {map} cannot act on {point} points")]
    KindMismatch {
        map: &'static str,
        point: &'static str,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Largest eigenvalue of the cat matrix [[2,1],[1,1]].
pub fn cat_lambda() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

/// Unit vectors along the expanding and contracting directions of the cat map.
pub fn cat_unstable_dir() -> (f64, f64) {
    let v = (1.0, cat_lambda() - 2.0);
    let n = (v.0 * v.0 + v.1 * v.1).sqrt();
    (v.0 / n, v.1 / n)
}

pub fn cat_stable_dir() -> (f64, f64) {
    let (a, b) = cat_unstable_dir();
    (-b, a)
}

/// Golden-mean and silver-mean rotation numbers used by the rotation system.
pub const ROTATION_A: f64 = 0.618_033_988_749_894_8;
pub const ROTATION_B: f64 = 0.414_213_562_373_095_1;

/// Invertible change of coordinates on the torus, with Lipschitz bounds for
/// both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartChange {
    Identity,
    /// (x, y) -> (x + amp sin 2πy, y)
    Shear {
        amp: f64,
    },
    Translate {
        dx: f64,
        dy: f64,
    },
}

impl ChartChange {
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        match *self {
            ChartChange::Identity => *p,
            ChartChange::Shear { amp } => {
                TorusPoint::new(p.x + amp * (2.0 * std::f64::consts::PI * p.y).sin(), p.y)
            }
            ChartChange::Translate { dx, dy } => p.offset(dx, dy),
        }
    }

    pub fn inverse(&self) -> ChartChange {
        match *self {
            ChartChange::Identity => ChartChange::Identity,
            ChartChange::Shear { amp } => ChartChange::Shear { amp: -amp },
            ChartChange::Translate { dx, dy } => ChartChange::Translate { dx: -dx, dy: -dy },
        }
    }

    pub fn apply_inverse(&self, p: &TorusPoint) -> TorusPoint {
        self.inverse().apply(p)
    }

    /// Lipschitz constant of `apply` for the quotient metric.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            ChartChange::Identity | ChartChange::Translate { .. } => 1.0,
            ChartChange::Shear { amp } => 1.0 + 2.0 * std::f64::consts::PI * amp.abs(),
        }
    }

    pub fn inverse_lipschitz(&self) -> f64 {
        self.inverse().lipschitz()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseMap {
    Cat,
    InverseCat,
    FullShift {
        k: u8,
    },
    Rotation {
        a: f64,
        b: f64,
    },
    Conjugated {
        inner: Box<BaseMap>,
        chart: ChartChange,
    },
}

impl BaseMap {
    pub fn name(&self) -> &'static str {
        match self {
            BaseMap::Cat => "cat",
            BaseMap::InverseCat => "inverse-cat",
            BaseMap::FullShift { .. } => "full-shift",
            BaseMap::Rotation { .. } => "rotation",
            BaseMap::Conjugated { .. } => "conjugated",
        }
    }

    pub fn golden_rotation() -> Self {
        BaseMap::Rotation {
            a: ROTATION_A,
            b: ROTATION_B,
        }
    }

    pub fn acts_on_torus(&self) -> bool {
        !matches!(self, BaseMap::FullShift { .. })
    }

    /// Lipschitz constant of one forward step, when known.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            BaseMap::Cat | BaseMap::InverseCat => Some(cat_lambda()),
            BaseMap::FullShift { .. } => Some(2.0),
            BaseMap::Rotation { .. } => Some(1.0),
            BaseMap::Conjugated { inner, chart } => inner
                .lipschitz()
                .map(|l| l * chart.lipschitz() * chart.inverse_lipschitz()),
        }
    }

    fn torus_step(&self, p: &TorusPoint, forward: bool) -> Result<TorusPoint, SystemError> {
        Ok(match (self, forward) {
            (BaseMap::Cat, true) | (BaseMap::InverseCat, false) => {
                TorusPoint::new(2.0 * p.x + p.y, p.x + p.y)
            }
            (BaseMap::Cat, false) | (BaseMap::InverseCat, true) => {
                TorusPoint::new(p.x - p.y, 2.0 * p.y - p.x)
            }
            (BaseMap::Rotation { a, b }, true) => p.offset(*a, *b),
            (BaseMap::Rotation { a, b }, false) => p.offset(-a, -b),
            (BaseMap::Conjugated { inner, chart }, _) => {
                let q = chart.apply_inverse(p);
                chart.apply(&inner.torus_step(&q, forward)?)
            }
            (BaseMap::FullShift { .. }, _) => {
                return Err(SystemError::KindMismatch {
                    map: self.name(),
                    point: "torus",
                })
            }
        })
    }
}

/// Point kinds a base map can act on.
pub trait BaseSpace: Metric + Clone + Send + Sync + fmt::Debug {
    const KIND: &'static str;
    fn iterate(map: &BaseMap, p: &Self, power: i64) -> Result<Self, SystemError>;
}

impl BaseSpace for TorusPoint {
    const KIND: &'static str = "torus";

    fn iterate(map: &BaseMap, p: &Self, power: i64) -> Result<Self, SystemError> {
        if let BaseMap::Rotation { a, b } = map {
            let n = power as f64;
            return Ok(p.offset(n * a, n * b));
        }
        let mut q = *p;
        for _ in 0..power.unsigned_abs() {
            q = map.torus_step(&q, power > 0)?;
        }
        Ok(q)
    }
}

impl BaseSpace for SymbolWord {
    const KIND: &'static str = "word";

    fn iterate(map: &BaseMap, p: &Self, power: i64) -> Result<Self, SystemError> {
        match map {
            BaseMap::FullShift { k } if *k == p.k => Ok(p.shift(power)?),
            BaseMap::FullShift { .. } => Err(SystemError::Parameter(format!(
                "word over {} symbols given to a shift on a different alphabet",
                p.k
            ))),
            _ => Err(SystemError::KindMismatch {
                map: map.name(),
                point: "word",
            }),
        }
    }
}

pub fn apply_map(f: &BaseMap, p: &Point, power: i64) -> Result<Point, SystemError> {
    match p {
        Point::Torus(t) => Ok(Point::Torus(TorusPoint::iterate(f, t, power)?)),
        Point::Word(w) => Ok(Point::Word(SymbolWord::iterate(f, w, power)?)),
        Point::Interval(_) => Err(SystemError::KindMismatch {
            map: f.name(),
            point: "interval",
        }),
    }
}

/// Point of the unit-roof suspension, always stored with height in [0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspensionPoint<P> {
    pub base: P,
    pub height: f64,
}

impl<P: BaseSpace> SuspensionPoint<P> {
    /// Reduce an arbitrary height by applying `f` once per roof crossing.
    pub fn reduced(f: &BaseMap, base: P, height: f64) -> Result<Self, SystemError> {
        let (k, h) = split_height(height);
        let base = if k == 0 {
            base
        } else {
            P::iterate(f, &base, k)?
        };
        Ok(SuspensionPoint { base, height: h })
    }
}

fn split_height(h: f64) -> (i64, f64) {
    let k = h.floor();
    let mut frac = h - k;
    let mut k = k as i64;
    if frac >= 1.0 {
        frac = 0.0;
        k += 1;
    }
    (k, frac.max(0.0))
}

pub fn suspension_flow<P: BaseSpace>(
    f: &BaseMap,
    p: &SuspensionPoint<P>,
    t: f64,
) -> Result<SuspensionPoint<P>, SystemError> {
    SuspensionPoint::reduced(f, p.base.clone(), p.height + t)
}

/// Horizontal cost at level `l`: (1-l) d(a,b) + l d(fa,fb).
fn level_cost<P: BaseSpace>(f: &BaseMap, a: &P, b: &P, l: f64) -> Result<f64, SystemError> {
    let d0 = a.dist(b);
    if l == 0.0 {
        return Ok(d0);
    }
    let d1 = P::iterate(f, a, 1)?.dist(&P::iterate(f, b, 1)?);
    Ok((1.0 - l) * d0 + l * d1)
}

/// Levels scanned by the horizontal chains, besides the two heights and 0.
pub const CHAIN_LEVELS: usize = 32;

/// Shortest chain over vertical, vertical-horizontal-vertical, and one-wrap
/// chains. An upper bound for the infimum over all finite chains.
pub fn suspension_distance<P: BaseSpace>(
    f: &BaseMap,
    p: &SuspensionPoint<P>,
    q: &SuspensionPoint<P>,
) -> Result<f64, SystemError> {
    let (x, s) = (&p.base, p.height);
    let (y, u) = (&q.base, q.height);
    let mut best = f64::INFINITY;

    let fx = P::iterate(f, x, 1)?;
    let fy = P::iterate(f, y, 1)?;
    if x.dist(y) == 0.0 {
        best = best.min((s - u).abs());
    }
    if fx.dist(y) == 0.0 {
        best = best.min((1.0 - s) + u);
    }
    if fy.dist(x) == 0.0 {
        best = best.min((1.0 - u) + s);
    }

    let mut levels: Vec<f64> = (0..CHAIN_LEVELS)
        .map(|j| j as f64 / CHAIN_LEVELS as f64)
        .collect();
    levels.extend([s, u]);

    let gx = P::iterate(f, x, -1)?;
    let gy = P::iterate(f, y, -1)?;
    for &l in &levels {
        best = best.min((s - l).abs() + level_cost(f, x, y, l)? + (l - u).abs());
        // p wraps over the roof, or under the floor, before the horizontal leg
        best = best.min((1.0 - s + l) + level_cost(f, &fx, y, l)? + (l - u).abs());
        best = best.min((s + 1.0 - l) + level_cost(f, &gx, y, l)? + (l - u).abs());
        // same for q
        best = best.min((s - l).abs() + level_cost(f, x, &fy, l)? + (1.0 - u + l));
        best = best.min((s - l).abs() + level_cost(f, x, &gy, l)? + (u + 1.0 - l));
    }
    Ok(best)
}

/// Closed-form solution of x' = x(1-x).
pub fn interval_flow(p: &IntervalPoint, t: f64) -> IntervalPoint {
    let x = p.x;
    if x == 0.0 || x == 1.0 {
        return *p;
    }
    let v = if t >= 0.0 {
        x / (x + (1.0 - x) * (-t).exp())
    } else {
        let e = t.exp();
        x * e / (1.0 - x + x * e)
    };
    IntervalPoint {
        x: v.clamp(0.0, 1.0),
    }
}

/// Named systems accepted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    CatSuspension,
    Shift2Suspension,
    RotationSuspension,
    IntervalLogistic,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [
        SystemKind::CatSuspension,
        SystemKind::Shift2Suspension,
        SystemKind::RotationSuspension,
        SystemKind::IntervalLogistic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::CatSuspension => "cat-suspension",
            SystemKind::Shift2Suspension => "shift2-suspension",
            SystemKind::RotationSuspension => "rotation-suspension",
            SystemKind::IntervalLogistic => "interval-logistic",
        }
    }

    pub fn base_map(&self) -> Option<BaseMap> {
        match self {
            SystemKind::CatSuspension => Some(BaseMap::Cat),
            SystemKind::Shift2Suspension => Some(BaseMap::FullShift { k: 2 }),
            SystemKind::RotationSuspension => Some(BaseMap::golden_rotation()),
            SystemKind::IntervalLogistic => None,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = SystemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SystemError::Parameter(format!("unknown system '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowHandle {
    pub kind: SystemKind,
    pub tolerance: f64,
}

impl FlowHandle {
    pub fn new(kind: SystemKind) -> Self {
        FlowHandle {
            kind,
            tolerance: 1e-9,
        }
    }

    pub fn base_map(&self) -> Option<BaseMap> {
        self.kind.base_map()
    }

    pub fn is_suspension(&self) -> bool {
        self.kind != SystemKind::IntervalLogistic
    }
}

/// A flow whose states carry a coordinate chart, so arcs of states can be
/// sampled and refined.
pub trait Flow: Sync {
    type State: Chart + Send + Sync + Serialize + fmt::Debug;
    fn evolve(&self, p: &Self::State, t: f64) -> Result<Self::State, SystemError>;
    fn state_distance(&self, p: &Self::State, q: &Self::State) -> Result<f64, SystemError>;
}

/// Suspension of a torus map, as a [`Flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionFlow {
    pub map: BaseMap,
}

impl Flow for SuspensionFlow {
    type State = SuspensionPoint<TorusPoint>;

    fn evolve(&self, p: &Self::State, t: f64) -> Result<Self::State, SystemError> {
        suspension_flow(&self.map, p, t)
    }

    fn state_distance(&self, p: &Self::State, q: &Self::State) -> Result<f64, SystemError> {
        suspension_distance(&self.map, p, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntervalFlow;

impl Flow for IntervalFlow {
    type State = IntervalPoint;

    fn evolve(&self, p: &IntervalPoint, t: f64) -> Result<IntervalPoint, SystemError> {
        Ok(interval_flow(p, t))
    }

    fn state_distance(&self, p: &IntervalPoint, q: &IntervalPoint) -> Result<f64, SystemError> {
        Ok(p.dist(q))
    }
}

// Chart on the suspension: base chart times the height coordinate. Only used
// for sampling and mesh control; orbit distances go through the chain metric.
impl Metric for SuspensionPoint<TorusPoint> {
    fn dist(&self, other: &Self) -> f64 {
        let d = self.base.dist(&other.base);
        let h = self.height - other.height;
        (d * d + h * h).sqrt()
    }
}

impl Chart for SuspensionPoint<TorusPoint> {
    fn lerp(&self, other: &Self, s: f64) -> Self {
        SuspensionPoint {
            base: self.base.lerp(&other.base, s),
            height: wrap01(self.height + s * (other.height - self.height)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Arc;
    use proptest::prelude::*;

    fn tp(x: f64, y: f64) -> TorusPoint {
        TorusPoint::new(x, y)
    }

    fn sp(x: f64, y: f64, h: f64) -> SuspensionPoint<TorusPoint> {
        SuspensionPoint {
            base: tp(x, y),
            height: h,
        }
    }

    #[test]
    fn cat_fixes_origin() {
        for n in [-5, -1, 0, 1, 7] {
            assert_eq!(
                TorusPoint::iterate(&BaseMap::Cat, &tp(0.0, 0.0), n).unwrap(),
                tp(0.0, 0.0)
            );
        }
    }

    #[test]
    fn cat_half_point() {
        let q = TorusPoint::iterate(&BaseMap::Cat, &tp(0.5, 0.5), 1).unwrap();
        assert_eq!(q, tp(0.5, 0.0));
    }

    #[test]
    fn inverse_cat_undoes_cat() {
        let p = tp(0.123, 0.877);
        let q = TorusPoint::iterate(&BaseMap::Cat, &p, 1).unwrap();
        let r = TorusPoint::iterate(&BaseMap::InverseCat, &q, 1).unwrap();
        assert!(p.dist(&r) < 1e-12);
    }

    #[test]
    fn shift_on_torus_is_rejected() {
        let e = apply_map(&BaseMap::FullShift { k: 2 }, &Point::Torus(tp(0.1, 0.1)), 1);
        assert!(matches!(e, Err(SystemError::KindMismatch { .. })));
    }

    #[test]
    fn shift_precision() {
        let w = SymbolWord::zeros(2, 3);
        assert!(SymbolWord::iterate(&BaseMap::FullShift { k: 2 }, &w, 4).is_err());
        assert_eq!(
            SymbolWord::iterate(&BaseMap::FullShift { k: 2 }, &w, -2)
                .unwrap()
                .radius,
            1
        );
    }

    #[test]
    fn flow_examples() {
        let f = BaseMap::Cat;
        let p = sp(0.3, 0.4, 0.25);
        assert_eq!(suspension_flow(&f, &p, 0.0).unwrap(), p);
        let q = suspension_flow(&f, &sp(0.0, 0.0, 0.2), 0.5).unwrap();
        assert_eq!(q.base, tp(0.0, 0.0));
        assert!((q.height - 0.7).abs() < 1e-12);
        let r = suspension_flow(&f, &sp(0.5, 0.5, 0.9), 0.2).unwrap();
        assert_eq!(r.base, TorusPoint::iterate(&f, &tp(0.5, 0.5), 1).unwrap());
        assert!((r.height - 0.1).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let f = BaseMap::Cat;
        let p = sp(0.3, 0.4, 0.2);
        assert_eq!(suspension_distance(&f, &p, &p).unwrap(), 0.0);
        let d = suspension_distance(&f, &p, &sp(0.3, 0.4, 0.5)).unwrap();
        assert!(d <= 0.3 + 1e-12);
    }

    #[test]
    fn distance_on_floor_is_base_distance() {
        let f = BaseMap::Cat;
        let (x, y) = (tp(0.2, 0.2), tp(0.5, 0.2));
        let d = suspension_distance(&f, &sp(x.x, x.y, 0.0), &sp(y.x, y.y, 0.0)).unwrap();
        // every chain in the family, evaluated by hand
        let fx = TorusPoint::iterate(&f, &x, 1).unwrap();
        let fy = TorusPoint::iterate(&f, &y, 1).unwrap();
        let mut oracle = f64::INFINITY;
        for j in 0..CHAIN_LEVELS {
            let l = j as f64 / CHAIN_LEVELS as f64;
            oracle = oracle.min(2.0 * l + (1.0 - l) * x.dist(&y) + l * fx.dist(&fy));
        }
        assert!((x.dist(&y) - 0.3).abs() < 1e-12);
        assert!(d <= 0.3 + 1e-12);
        assert!(d >= oracle.min(0.3) - 1e-12);
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn equal_heights_give_level_cost() {
        let f = BaseMap::Cat;
        let (x, y) = (tp(0.2, 0.3), tp(0.22, 0.31));
        for h in [0.0, 0.25, 0.5, 0.9] {
            let d = suspension_distance(&f, &sp(x.x, x.y, h), &sp(y.x, y.y, h)).unwrap();
            assert!((d - level_cost(&f, &x, &y, h).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_chain_across_roof() {
        let f = BaseMap::Cat;
        let x = tp(0.3, 0.1);
        let fx = TorusPoint::iterate(&f, &x, 1).unwrap();
        let d = suspension_distance(
            &f,
            &sp(x.x, x.y, 0.95),
            &SuspensionPoint {
                base: fx,
                height: 0.05,
            },
        )
        .unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn interval_examples() {
        assert_eq!(interval_flow(&IntervalPoint { x: 0.0 }, 3.0).x, 0.0);
        assert_eq!(interval_flow(&IntervalPoint { x: 1.0 }, -3.0).x, 1.0);
        let v = interval_flow(&IntervalPoint { x: 0.5 }, 3f64.ln()).x;
        assert!((v - 0.75).abs() < 1e-12);
        assert!(interval_flow(&IntervalPoint { x: 0.5 }, 40.0).x > 1.0 - 1e-12);
    }

    #[test]
    fn unstable_stretch() {
        let lam = cat_lambda();
        let (ux, uy) = cat_unstable_dir();
        for len in [0.05, 0.01, 0.001] {
            let a = tp(0.31, 0.47);
            let arc = Arc::segment(&a, &a.offset(len * ux, len * uy), 20).unwrap();
            let img: Vec<_> = arc
                .samples()
                .iter()
                .map(|p| TorusPoint::iterate(&BaseMap::Cat, p, 1).unwrap())
                .collect();
            let d = Arc::new(img).unwrap().diameter();
            assert!((d / (lam * len) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn rotation_is_isometric_on_arcs() {
        let f = BaseMap::golden_rotation();
        let arc = Arc::segment(&tp(0.1, 0.2), &tp(0.3, 0.25), 15).unwrap();
        let img: Vec<_> = arc
            .samples()
            .iter()
            .map(|p| TorusPoint::iterate(&f, p, 3).unwrap())
            .collect();
        assert!((Arc::new(img).unwrap().diameter() - arc.diameter()).abs() < 1e-12);
    }

    #[test]
    fn conjugated_map_matches_composition() {
        let h = ChartChange::Shear { amp: 0.05 };
        let f = BaseMap::Conjugated {
            inner: Box::new(BaseMap::Cat),
            chart: h,
        };
        let p = tp(0.37, 0.61);
        let direct = h.apply(&TorusPoint::iterate(&BaseMap::Cat, &h.apply_inverse(&p), 1).unwrap());
        assert!(TorusPoint::iterate(&f, &p, 1).unwrap().dist(&direct) < 1e-12);
        let back = TorusPoint::iterate(&f, &TorusPoint::iterate(&f, &p, 2).unwrap(), -2).unwrap();
        assert!(back.dist(&p) < 1e-9);
    }

    #[test]
    fn system_names_round_trip() {
        for k in SystemKind::ALL {
            assert_eq!(k.as_str().parse::<SystemKind>().unwrap(), k);
        }
        assert!("lorenz".parse::<SystemKind>().is_err());
    }

    fn susp() -> impl Strategy<Value = SuspensionPoint<TorusPoint>> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, h)| sp(x, y, h))
    }

    proptest! {
        #[test]
        fn group_law(p in susp(), s in -5.0..5.0f64, t in -5.0..5.0f64) {
            let f = BaseMap::Cat;
            let a = suspension_flow(&f, &p, s + t).unwrap();
            let b = suspension_flow(&f, &suspension_flow(&f, &p, t).unwrap(), s).unwrap();
            let d = suspension_distance(&f, &a, &b).unwrap();
            // ten cat steps amplify rounding by at most λ^10
            prop_assert!(d < 1e-7, "d = {}", d);
        }

        #[test]
        fn interval_group_law(x in 0.0..=1.0f64, s in -5.0..5.0f64, t in -5.0..5.0f64) {
            let p = IntervalPoint::new(x).unwrap();
            let a = interval_flow(&p, s + t);
            let b = interval_flow(&interval_flow(&p, t), s);
            prop_assert!((a.x - b.x).abs() < 1e-9);
        }

        #[test]
        fn interval_monotone(x in 0.0..1.0f64, dx in 1e-6..0.5f64, t in -10.0..10.0f64) {
            let y = (x + dx).min(1.0);
            let a = interval_flow(&IntervalPoint { x }, t).x;
            let b = interval_flow(&IntervalPoint { x: y }, t).x;
            prop_assert!(a <= b);
        }

        #[test]
        fn chain_distance_is_pseudometric(p in susp(), q in susp(), r in susp()) {
            let f = BaseMap::Cat;
            let pq = suspension_distance(&f, &p, &q).unwrap();
            let qp = suspension_distance(&f, &q, &p).unwrap();
            prop_assert!((pq - qp).abs() < 1e-12);
            let pr = suspension_distance(&f, &p, &r).unwrap();
            let rq = suspension_distance(&f, &r, &q).unwrap();
            // the family is not closed under concatenation; allow its level spacing
            prop_assert!(pq <= pr + rq + 2.0 / CHAIN_LEVELS as f64);
        }

        #[test]
        fn vertical_bound(x in 0.0..1.0f64, y in 0.0..1.0f64, s in 0.0..1.0f64, u in 0.0..1.0f64) {
            let f = BaseMap::Cat;
            let d = suspension_distance(&f, &sp(x, y, s), &sp(x, y, u)).unwrap();
            prop_assert!(d <= (s - u).abs() + 1e-12);
        }

        #[test]
        fn time_offset_never_helps_on_floor(x in 0.0..1.0f64, y in 0.0..1.0f64, dx in -0.05..0.05f64, dy in -0.05..0.05f64, tau in -0.2..0.2f64) {
            let f = BaseMap::Cat;
            let p = sp(x, y, 0.5);
            let q = SuspensionPoint { base: tp(x + dx, y + dy), height: 0.5 };
            let d = suspension_distance(&f, &p, &q).unwrap();
            let shifted = suspension_flow(&f, &q, tau).unwrap();
            prop_assert!(suspension_distance(&f, &p, &shifted).unwrap() >= d.min(tau.abs()) - 1e-12);
        }
    }
}
