//! Adequate families of cross-sections for unit-roof suspensions.
//!
//! All patches live on the floor slice (height 0). On the torus the small
//! patches T_i are the half-open cells of a k×k grid and each S_i is the
//! concentric square enlarged by a fixed margin. On the shift both families
//! are the cylinders fixing a central block.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spaces::{Arc, Chart, Metric, SpaceError, SymbolWord, TorusPoint};
use crate::systems::{
    suspension_flow, BaseMap, BaseSpace, FlowHandle, SuspensionPoint, SystemError, SystemKind,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectionError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("unsupported system: {0}")]
    Unsupported(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

impl From<SpaceError> for SectionError {
    fn from(e: SpaceError) -> Self {
        SectionError::System(SystemError::Space(e))
    }
}

/// Tolerance for "lies on the floor slice".
pub const SLICE_TOL: f64 = 1e-12;

/// Largest 2^-j not above `v` (j ≥ 0).
pub fn dyadic_floor(v: f64) -> f64 {
    let mut d = 1.0;
    while d > v && d > 1e-300 {
        d *= 0.5;
    }
    d
}

/// Largest 2^-j strictly below `v`.
pub fn dyadic_below(v: f64) -> f64 {
    let mut d = 1.0;
    while d >= v && d > 1e-300 {
        d *= 0.5;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// k×k grid. A point belongs to T of its nearest cell when within
    /// `t_half` (cyclic L∞) of the centre; S_i is the closed square of
    /// half-side `s_half`.
    TorusGrid { k: usize, t_half: f64, s_half: f64 },
    /// Cylinders fixing indices [-p, p] over an alphabet of `k` symbols.
    Cylinders { p: usize, k: u8 },
}

impl Layout {
    pub fn patch_count(&self) -> usize {
        match *self {
            Layout::TorusGrid { k, .. } => k * k,
            Layout::Cylinders { p, k } => (k as usize).pow((2 * p + 1) as u32),
        }
    }

    /// Diameter of the largest S patch.
    pub fn s_diameter(&self) -> f64 {
        match *self {
            Layout::TorusGrid { s_half, .. } => 2.0 * s_half * 2f64.sqrt(),
            Layout::Cylinders { p, .. } => 0.5f64.powi(p as i32 + 1),
        }
    }

    /// Distance in L∞ from a T patch to the complement of its S patch.
    pub fn margin(&self) -> f64 {
        match *self {
            Layout::TorusGrid { t_half, s_half, .. } => s_half - t_half,
            Layout::Cylinders { p, .. } => 0.5f64.powi(p as i32),
        }
    }
}

fn cyc(v: f64) -> f64 {
    let d = v.rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Base point kinds that can carry section patches.
pub trait SectionBase: BaseSpace {
    fn t_cell(layout: &Layout, p: &Self) -> Option<usize>;
    fn in_s(layout: &Layout, p: &Self, i: usize) -> bool;
    /// Every patch whose T contains `p` (T patches may overlap).
    fn t_cells(layout: &Layout, p: &Self) -> Vec<usize>;
    /// Sample points of T_i at `res` points per side (or free symbols).
    fn t_samples(layout: &Layout, i: usize, res: usize) -> Vec<Self>;
    /// Points at distance just under `r` from `p`, in a fixed set of directions.
    fn near_points(p: &Self, r: f64) -> Vec<Self>;
}

impl SectionBase for TorusPoint {
    fn t_cell(layout: &Layout, p: &Self) -> Option<usize> {
        let Layout::TorusGrid { k, t_half, .. } = *layout else {
            return None;
        };
        let kf = k as f64;
        let ix = ((p.x * kf).floor() as usize).min(k - 1);
        let iy = ((p.y * kf).floor() as usize).min(k - 1);
        let (cx, cy) = ((ix as f64 + 0.5) / kf, (iy as f64 + 0.5) / kf);
        if cyc(p.x - cx).max(cyc(p.y - cy)) <= t_half + 1e-15 {
            Some(ix * k + iy)
        } else {
            None
        }
    }

    fn in_s(layout: &Layout, p: &Self, i: usize) -> bool {
        let Layout::TorusGrid { k, s_half, .. } = *layout else {
            return false;
        };
        let kf = k as f64;
        let (cx, cy) = (((i / k) as f64 + 0.5) / kf, ((i % k) as f64 + 0.5) / kf);
        cyc(p.x - cx).max(cyc(p.y - cy)) <= s_half
    }

    fn t_cells(layout: &Layout, p: &Self) -> Vec<usize> {
        let Layout::TorusGrid { k, t_half, .. } = *layout else {
            return vec![];
        };
        let kf = k as f64;
        let reach = (t_half * kf).ceil() as i64;
        let (ix, iy) = ((p.x * kf).floor() as i64, (p.y * kf).floor() as i64);
        let mut out = Vec::new();
        for a in ix - reach..=ix + reach {
            for b in iy - reach..=iy + reach {
                let (a, b) = (
                    a.rem_euclid(k as i64) as usize,
                    b.rem_euclid(k as i64) as usize,
                );
                let (cx, cy) = ((a as f64 + 0.5) / kf, (b as f64 + 0.5) / kf);
                let i = a * k + b;
                if cyc(p.x - cx).max(cyc(p.y - cy)) <= t_half + 1e-15 && !out.contains(&i) {
                    out.push(i);
                }
            }
        }
        out
    }

    fn t_samples(layout: &Layout, i: usize, res: usize) -> Vec<Self> {
        let Layout::TorusGrid { k, t_half, .. } = *layout else {
            return vec![];
        };
        let kf = k as f64;
        let (cx, cy) = (((i / k) as f64 + 0.5) / kf, ((i % k) as f64 + 0.5) / kf);
        let w = 2.0 * t_half;
        let lo = (cx - w / 2.0, cy - w / 2.0);
        let res = res.max(2);
        let mut out = Vec::with_capacity(res * res);
        for a in 0..res {
            for b in 0..res {
                // include the left edge, stop just short of the right one
                let fa = a as f64 / (res - 1) as f64 * (1.0 - 1e-9);
                let fb = b as f64 / (res - 1) as f64 * (1.0 - 1e-9);
                out.push(TorusPoint::new(lo.0 + fa * w, lo.1 + fb * w));
            }
        }
        out
    }

    fn near_points(p: &Self, r: f64) -> Vec<Self> {
        let r = r * (1.0 - 1e-9);
        (0..16)
            .map(|j| {
                let a = j as f64 * std::f64::consts::PI / 8.0;
                p.offset(r * a.cos(), r * a.sin())
            })
            .collect()
    }
}

fn cylinder_index(w: &SymbolWord, p: usize) -> Option<usize> {
    let mut idx = 0usize;
    for i in -(p as i64)..=p as i64 {
        idx = idx * w.k as usize + w.get(i)? as usize;
    }
    Some(idx)
}

impl SectionBase for SymbolWord {
    fn t_cell(layout: &Layout, p: &Self) -> Option<usize> {
        match *layout {
            Layout::Cylinders { p: r, k } if k == p.k => cylinder_index(p, r),
            _ => None,
        }
    }

    fn in_s(layout: &Layout, p: &Self, i: usize) -> bool {
        Self::t_cell(layout, p) == Some(i)
    }

    fn t_cells(layout: &Layout, p: &Self) -> Vec<usize> {
        Self::t_cell(layout, p).into_iter().collect()
    }

    fn t_samples(layout: &Layout, i: usize, res: usize) -> Vec<Self> {
        let Layout::Cylinders { p, k } = *layout else {
            return vec![];
        };
        let base = cylinder_word(k, p, i, p + res + 4);
        let free = res.min(12);
        let count = (k as usize).pow(free as u32);
        (0..count)
            .map(|mut c| {
                let mut w = base.clone();
                for j in 0..free {
                    w.set((p + 1 + j) as i64, (c % k as usize) as u8);
                    c /= k as usize;
                }
                w
            })
            .collect()
    }

    fn near_points(p: &Self, r: f64) -> Vec<Self> {
        // flip the first index whose mismatch keeps the distance below r
        let mut m = 0usize;
        while 0.5f64.powi(m as i32) >= r {
            m += 1;
        }
        let mut out = Vec::new();
        for i in [m as i64, -(m as i64)] {
            if let Some(s) = p.get(i) {
                let mut q = p.clone();
                q.set(i, (s + 1) % p.k);
                out.push(q);
            }
        }
        out
    }
}

/// Word whose block [-p, p] spells cylinder `i`, zero elsewhere.
pub fn cylinder_word(k: u8, p: usize, mut i: usize, radius: usize) -> SymbolWord {
    let mut w = SymbolWord::zeros(k, radius.max(p));
    for j in (-(p as i64)..=p as i64).rev() {
        w.set(j, (i % k as usize) as u8);
        i /= k as usize;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverCheck {
    pub identity: String,
    pub pass: bool,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub covering: Vec<CoverCheck>,
    pub cross_section: bool,
    pub t_inside_s: bool,
    pub rho_inequalities: bool,
    pub compatibility: bool,
    pub resolution: usize,
    pub samples: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.covering.iter().all(|c| c.pass)
            && self.cross_section
            && self.t_inside_s
            && self.rho_inequalities
            && self.compatibility
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionFamilyPair {
    pub system: SystemKind,
    pub map: BaseMap,
    pub layout: Layout,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub rho: f64,
    pub eps0: f64,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    /// Grid cell side as a fraction of the S side.
    pub shrink: f64,
    /// Lattice points per side (torus) or free symbols (shift) for checks.
    pub resolution: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            shrink: 0.45,
            resolution: 9,
        }
    }
}

pub fn build_pair(flow: &FlowHandle, delta: f64) -> Result<SectionFamilyPair, SectionError> {
    build_pair_with(flow, delta, &PairOptions::default())
}

pub fn build_pair_with(
    flow: &FlowHandle,
    delta: f64,
    opts: &PairOptions,
) -> Result<SectionFamilyPair, SectionError> {
    let map = flow.base_map().ok_or_else(|| {
        SectionError::Unsupported(format!(
            "{} has fixed points; no global cross-section",
            flow.kind
        ))
    })?;
    if !(delta > 0.0) {
        return Err(SectionError::Validation(format!(
            "patch diameter bound must be positive, got {delta}"
        )));
    }
    if !(opts.shrink > 0.0 && opts.shrink < 1.0) {
        return Err(SectionError::Parameter(format!(
            "shrink factor {} outside (0,1)",
            opts.shrink
        )));
    }
    let layout = default_layout(&map, delta, opts.shrink)?;
    pair_from_layout(flow.kind, map, layout, delta, opts.resolution)
}

fn default_layout(map: &BaseMap, delta: f64, shrink: f64) -> Result<Layout, SectionError> {
    match map {
        BaseMap::FullShift { k } => {
            let mut p = 0usize;
            while 0.5f64.powi(p as i32 + 1) > delta {
                p += 1;
            }
            Ok(Layout::Cylinders { p, k: *k })
        }
        _ => {
            let side_s = (delta / 2f64.sqrt()).min(0.5);
            let k = (1.0 / (shrink * side_s)).ceil() as usize;
            let w = 1.0 / k as f64;
            Ok(Layout::TorusGrid {
                k,
                t_half: w / 2.0,
                s_half: side_s / 2.0,
            })
        }
    }
}

/// Constants and validation for an explicit layout.
pub fn pair_from_layout(
    system: SystemKind,
    map: BaseMap,
    layout: Layout,
    delta: f64,
    resolution: usize,
) -> Result<SectionFamilyPair, SectionError> {
    let pair = match layout {
        Layout::TorusGrid { .. } => assemble::<TorusPoint>(system, map, layout, delta, resolution)?,
        Layout::Cylinders { .. } => assemble::<SymbolWord>(system, map, layout, delta, resolution)?,
    };
    if !pair.report.passed() {
        return Err(SectionError::Validation(format!(
            "pair is not adequate at resolution {}: {}",
            pair.report.resolution,
            serde_json::to_string(&pair.report).unwrap_or_default()
        )));
    }
    Ok(pair)
}

fn assemble<P: SectionBase>(
    system: SystemKind,
    map: BaseMap,
    layout: Layout,
    delta: f64,
    res: usize,
) -> Result<SectionFamilyPair, SectionError> {
    let eps = 1.0;
    let heights = [0.0, 0.25, 0.5, 0.75, 1.0 - 1e-9];
    let patches = layout.patch_count();
    let mut floor = Vec::new();
    for i in 0..patches {
        floor.extend(P::t_samples(&layout, i, res));
    }

    // first-return times from sampled floor points: the next slice hit is a
    // roof crossing, so the time is 1 whenever the image lands on some T
    let mut theta = f64::INFINITY;
    for x in &floor {
        let fx = P::iterate(&map, x, 1)?;
        if P::t_cell(&layout, &fx).is_some() {
            theta = theta.min(1.0);
        }
    }
    if !theta.is_finite() {
        return Err(SectionError::Validation(
            "no sampled return to the sections".into(),
        ));
    }

    let mut fwd_t = 0;
    let mut bwd_t = 0;
    let mut fwd_s = 0;
    let mut bwd_s = 0;
    for x in &floor {
        for &h in &heights {
            // forward: the orbit reaches the floor at time 1-h (or 0)
            let up = if h == 0.0 {
                x.clone()
            } else {
                P::iterate(&map, x, 1)?
            };
            // backward: it reaches the floor at time -h, base unchanged
            let down = x.clone();
            for (pt, t_miss, s_miss) in [
                (&up, &mut fwd_t, &mut fwd_s),
                (&down, &mut bwd_t, &mut bwd_s),
            ] {
                match P::t_cell(&layout, pt) {
                    Some(i) => {
                        if !P::in_s(&layout, pt, i) {
                            *s_miss += 1;
                        }
                    }
                    None => {
                        *t_miss += 1;
                        *s_miss += 1;
                    }
                }
            }
        }
    }
    let covering = vec![
        CoverCheck {
            identity: "forward-T".into(),
            pass: fwd_t == 0,
            failures: fwd_t,
        },
        CoverCheck {
            identity: "backward-T".into(),
            pass: bwd_t == 0,
            failures: bwd_t,
        },
        CoverCheck {
            identity: "forward-S".into(),
            pass: fwd_s == 0,
            failures: fwd_s,
        },
        CoverCheck {
            identity: "backward-S".into(),
            pass: bwd_s == 0,
            failures: bwd_s,
        },
    ];

    // the slice is met by each orbit at integer times only
    let cross_section = floor.iter().all(|x| {
        (1..8).all(|j| {
            let t = eps * j as f64 / 8.0;
            [t, -t].iter().all(|&s| {
                let q = suspension_flow(
                    &map,
                    &SuspensionPoint {
                        base: x.clone(),
                        height: 0.0,
                    },
                    s,
                );
                q.map_or(false, |q| q.height > SLICE_TOL || s.abs() >= eps)
            })
        })
    });

    let t_inside_s = layout.margin() > 0.0;

    let mut rho = 1.0;
    while !(5.0 * rho < eps && 2.0 * rho < theta) {
        rho *= 0.5;
    }
    let rho_ok = 5.0 * rho < eps && 2.0 * rho < theta;

    let eps0 = calibrate_eps0::<P>(&map, &layout, &floor, delta, theta)?;

    let report = ValidationReport {
        covering,
        cross_section,
        t_inside_s,
        rho_inequalities: rho_ok,
        compatibility: eps0.is_some(),
        resolution: res,
        samples: floor.len() * heights.len(),
    };
    Ok(SectionFamilyPair {
        system,
        map,
        layout,
        eps,
        delta,
        theta,
        rho,
        eps0: eps0.unwrap_or(0.0),
        report,
    })
}

/// Largest dyadic value below θ/2 for which sampled close pairs on the floor
/// stay in the S patch matching the other point's T patch, for every integer
/// shift |t| < 3δ.
fn calibrate_eps0<P: SectionBase>(
    map: &BaseMap,
    layout: &Layout,
    floor: &[P],
    delta: f64,
    theta: f64,
) -> Result<Option<f64>, SectionError> {
    let tmax = (3.0 * delta).ceil() as i64;
    let shifts: Vec<i64> = (-tmax..=tmax)
        .filter(|t| (*t as f64).abs() < 3.0 * delta)
        .collect();
    let mut e = dyadic_below(theta / 2.0);
    while e > 1e-6 {
        let ok = floor.iter().all(|x| {
            P::near_points(x, e).iter().all(|y| {
                shifts.iter().all(|&t| {
                    let (Ok(xt), Ok(yt)) = (P::iterate(map, x, t), P::iterate(map, y, t)) else {
                        return false;
                    };
                    P::t_cells(layout, &xt)
                        .into_iter()
                        .all(|j| P::in_s(layout, &yt, j))
                })
            })
        });
        if ok {
            return Ok(Some(e));
        }
        e *= 0.5;
    }
    Ok(None)
}

impl SectionFamilyPair {
    pub fn t_cell<P: SectionBase>(&self, p: &P) -> Option<usize> {
        P::t_cell(&self.layout, p)
    }

    pub fn in_s<P: SectionBase>(&self, p: &P, i: usize) -> bool {
        P::in_s(&self.layout, p, i)
    }

    /// Same families, new T half-side and S half-side (torus only).
    pub fn with_halves(
        &self,
        t_half: f64,
        s_half: f64,
        resolution: usize,
    ) -> Result<Self, SectionError> {
        let Layout::TorusGrid { k, .. } = self.layout else {
            return Ok(self.clone());
        };
        pair_from_layout(
            self.system,
            self.map.clone(),
            Layout::TorusGrid { k, t_half, s_half },
            self.delta,
            resolution,
        )
    }
}

pub fn first_return<P: SectionBase>(
    pair: &SectionFamilyPair,
    x: &SuspensionPoint<P>,
) -> Result<(SuspensionPoint<P>, f64), SectionError> {
    if x.height > SLICE_TOL || pair.t_cell(&x.base).is_none() {
        return Err(SectionError::Domain("point is not on any T patch".into()));
    }
    let y = suspension_flow(
        &pair.map,
        &SuspensionPoint {
            base: x.base.clone(),
            height: 0.0,
        },
        1.0,
    )?;
    if pair.t_cell(&y.base).is_none() {
        return Err(SectionError::Domain("orbit leaves the T patches".into()));
    }
    Ok((y, 1.0))
}

/// Flow `x` by less than ρ onto S_i.
pub fn project_p_rho<P: SectionBase>(
    pair: &SectionFamilyPair,
    x: &SuspensionPoint<P>,
    i: usize,
) -> Result<(SuspensionPoint<P>, f64), SectionError> {
    let h = x.height;
    let t = if h <= SLICE_TOL {
        0.0
    } else if h < pair.rho {
        -h
    } else if 1.0 - h < pair.rho {
        1.0 - h
    } else {
        return Err(SectionError::Domain(format!(
            "height {h} is not within flow time ρ of the slice"
        )));
    };
    let y = if t == 0.0 {
        SuspensionPoint {
            base: x.base.clone(),
            height: 0.0,
        }
    } else {
        let mut y = suspension_flow(&pair.map, x, t)?;
        y.height = 0.0;
        y
    };
    if !pair.in_s(&y.base, i) {
        return Err(SectionError::Domain(format!("flowed point misses S_{i}")));
    }
    Ok((y, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "index", rename_all = "kebab-case")]
pub enum OrbitStatus {
    Complete,
    DivergedAt(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowEntry<P> {
    pub index: i64,
    pub point: SuspensionPoint<P>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnOrbit<P> {
    pub anchor: SuspensionPoint<P>,
    pub companion: SuspensionPoint<P>,
    pub entries: Vec<ShadowEntry<P>>,
    pub status: OrbitStatus,
}

pub fn shadow_sequence<P: SectionBase>(
    pair: &SectionFamilyPair,
    x: &SuspensionPoint<P>,
    y: &SuspensionPoint<P>,
    n: i64,
) -> Result<ReturnOrbit<P>, SectionError> {
    let i0 = match pair.t_cell(&x.base) {
        Some(i) if x.height <= SLICE_TOL => i,
        _ => {
            return Err(SectionError::Precondition(
                "anchor is not on a T patch".into(),
            ))
        }
    };
    if y.height > SLICE_TOL || !pair.in_s(&y.base, i0) {
        return Err(SectionError::Precondition(
            "companion is not on the anchor's S patch".into(),
        ));
    }
    if x.base.dist(&y.base) >= pair.eps0 {
        return Err(SectionError::Precondition(
            "companion is not within ε₀ of the anchor".into(),
        ));
    }
    let step = n.signum();
    let mut entries = vec![ShadowEntry {
        index: 0,
        point: y.clone(),
        offset: 0.0,
    }];
    let mut xi = x.base.clone();
    let mut yi = y.clone();
    let mut status = OrbitStatus::Complete;
    for j in 1..=n.abs() {
        xi = P::iterate(&pair.map, &xi, step)?;
        let Some(l) = pair.t_cell(&xi) else {
            return Err(SectionError::Domain(
                "anchor orbit leaves the T patches".into(),
            ));
        };
        // the anchor takes return time ±1; flow the companion as long, then project
        let moved = suspension_flow(&pair.map, &yi, step as f64)?;
        match project_p_rho(pair, &moved, l) {
            Ok((p, t)) if xi.dist(&p.base) < pair.eps0 => {
                yi = p;
                entries.push(ShadowEntry {
                    index: j * step,
                    point: yi.clone(),
                    offset: t,
                });
            }
            _ => {
                status = OrbitStatus::DivergedAt(j * step);
                break;
            }
        }
    }
    Ok(ReturnOrbit {
        anchor: x.clone(),
        companion: y.clone(),
        entries,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ContinuumReturn {
    Complete {
        arc: Arc<TorusPoint>,
        anchor: usize,
        diameters: Vec<f64>,
    },
    /// Diameter reached ε₀ at `step` (1-based count of returns).
    Overflow {
        step: usize,
        diameter: f64,
        diameters: Vec<f64>,
    },
}

impl ContinuumReturn {
    pub fn diameters(&self) -> &[f64] {
        match self {
            ContinuumReturn::Complete { diameters, .. }
            | ContinuumReturn::Overflow { diameters, .. } => diameters,
        }
    }

    pub fn arc(&self) -> Option<&Arc<TorusPoint>> {
        match self {
            ContinuumReturn::Complete { arc, .. } => Some(arc),
            ContinuumReturn::Overflow { .. } => None,
        }
    }
}

/// Default faithfulness bound on image gaps, as a fraction of ε₀.
pub const MESH_FRACTION: f64 = 1.0 / 64.0;

fn image_step(
    map: &BaseMap,
    arc: &[TorusPoint],
    anchor: usize,
    dir: i64,
    bound: f64,
) -> Result<(Vec<TorusPoint>, usize), SectionError> {
    let mut out = Vec::with_capacity(arc.len() * 2);
    let mut new_anchor = 0;
    let first = TorusPoint::iterate(map, &arc[0], dir)?;
    out.push(first);
    for (i, w) in arc.windows(2).enumerate() {
        let ia = TorusPoint::iterate(map, &w[0], dir)?;
        let ib = TorusPoint::iterate(map, &w[1], dir)?;
        // bisect in the source until image gaps fall below the bound
        let mut stack = vec![(0.0f64, 1.0f64, ia, ib, 0u32)];
        let mut pieces = Vec::new();
        while let Some((s0, s1, a, b, depth)) = stack.pop() {
            if a.dist(&b) <= bound || depth >= 30 {
                pieces.push(b);
                continue;
            }
            let sm = 0.5 * (s0 + s1);
            let m = TorusPoint::iterate(map, &w[0].lerp(&w[1], sm), dir)?;
            stack.push((sm, s1, m, b, depth + 1));
            stack.push((s0, sm, a, m, depth + 1));
        }
        out.extend(pieces);
        if i + 1 == anchor {
            new_anchor = out.len() - 1;
        }
    }
    Ok((out, new_anchor))
}

/// Return images φ^n(A, x) of a torus arc on the floor slice.
pub fn return_continuum(
    pair: &SectionFamilyPair,
    a: &Arc<TorusPoint>,
    anchor: usize,
    n: i64,
) -> Result<ContinuumReturn, SectionError> {
    return_continuum_with(pair, a, anchor, n, pair.eps0 * MESH_FRACTION)
}

pub fn return_continuum_with(
    pair: &SectionFamilyPair,
    a: &Arc<TorusPoint>,
    anchor: usize,
    n: i64,
    mesh_bound: f64,
) -> Result<ContinuumReturn, SectionError> {
    if anchor >= a.len() {
        return Err(SpaceError::Index {
            index: anchor,
            len: a.len(),
        }
        .into());
    }
    let j0 = pair
        .t_cell(&a.samples()[anchor])
        .ok_or_else(|| SectionError::Precondition("anchor is not on a T patch".into()))?;
    if let Some(p) = a.samples().iter().find(|p| !pair.in_s(*p, j0)) {
        return Err(SectionError::Precondition(format!(
            "arc leaves S_{j0} at {p:?}"
        )));
    }
    let d0 = a.diameter();
    if d0 >= pair.eps0 / 2.0 {
        return Err(SectionError::Precondition(format!(
            "arc diameter {d0} is not below ε₀/2 = {}",
            pair.eps0 / 2.0
        )));
    }
    let dir = n.signum();
    let mut cur: Vec<TorusPoint> = a.samples().to_vec();
    let mut anc = anchor;
    let mut diameters = vec![d0];
    for step in 1..=n.unsigned_abs() as usize {
        let (img, na) = image_step(&pair.map, &cur, anc, dir, mesh_bound)?;
        let arc = Arc::new(img)?;
        let d = arc.diameter();
        diameters.push(d);
        let fits = pair
            .t_cell(&arc.samples()[na])
            .map_or(false, |l| arc.samples().iter().all(|p| pair.in_s(p, l)));
        if d >= pair.eps0 || !fits {
            return Ok(ContinuumReturn::Overflow {
                step,
                diameter: d,
                diameters,
            });
        }
        cur = arc.samples().to_vec();
        anc = na;
    }
    Ok(ContinuumReturn::Complete {
        arc: Arc::new(cur)?,
        anchor: anc,
        diameters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    InWs,
    InWu,
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub verdict: Membership,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub forward_overflow: Option<usize>,
    pub backward_overflow: Option<usize>,
}

pub fn stable_membership(
    pair: &SectionFamilyPair,
    a: &Arc<TorusPoint>,
    anchor: usize,
    eta: f64,
    n_max: usize,
) -> Result<MembershipReport, SectionError> {
    if !(eta > 0.0 && eta < pair.eps0) {
        return Err(SectionError::Parameter(format!(
            "η = {eta} must lie in (0, ε₀ = {})",
            pair.eps0
        )));
    }
    let trace = |dir: i64| -> Result<(bool, Vec<f64>, Option<usize>), SectionError> {
        let r = return_continuum(pair, a, anchor, dir * n_max as i64)?;
        let ds = r.diameters().to_vec();
        let over = match &r {
            ContinuumReturn::Overflow { step, .. } => Some(*step),
            _ => None,
        };
        let stays = over.is_none() && ds.iter().all(|&d| d < eta);
        Ok((stays, ds, over))
    };
    let (s, forward, fo) = trace(1)?;
    let (u, backward, bo) = trace(-1)?;
    let verdict = match (s, u) {
        (true, true) => Membership::Both,
        (true, false) => Membership::InWs,
        (false, true) => Membership::InWu,
        (false, false) => Membership::Neither,
    };
    Ok(MembershipReport {
        verdict,
        forward,
        backward,
        forward_overflow: fo,
        backward_overflow: bo,
    })
}

/// Three pairs with T¹ = T², T³ = S², S³ = S¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleFamilies {
    pub first: SectionFamilyPair,
    pub second: SectionFamilyPair,
    pub third: SectionFamilyPair,
    pub theta_prime: f64,
}

impl TripleFamilies {
    pub fn pairs(&self) -> [&SectionFamilyPair; 3] {
        [&self.first, &self.second, &self.third]
    }

    pub fn hop_bound(&self) -> usize {
        (self.first.eps / self.theta_prime).floor() as usize
    }
}

pub fn build_triple(flow: &FlowHandle, delta: f64) -> Result<TripleFamilies, SectionError> {
    let opts = PairOptions::default();
    let first = build_pair_with(flow, delta, &opts)?;
    let (second, third) = match first.layout {
        Layout::TorusGrid { t_half, s_half, .. } => {
            let mid = 0.5 * (t_half + s_half);
            (
                first.with_halves(t_half, mid, opts.resolution)?,
                first.with_halves(mid, s_half, opts.resolution)?,
            )
        }
        Layout::Cylinders { .. } => (first.clone(), first.clone()),
    };
    let mut triple = TripleFamilies {
        first,
        second,
        third,
        theta_prime: f64::INFINITY,
    };
    // smallest first-hit time from S² samples to ∪T¹
    let theta_prime = match triple.first.layout {
        Layout::TorusGrid { .. } => first_hit_floor::<TorusPoint>(&triple)?,
        Layout::Cylinders { .. } => first_hit_floor::<SymbolWord>(&triple)?,
    };
    triple.theta_prime = theta_prime;
    Ok(triple)
}

fn first_hit_floor<P: SectionBase>(triple: &TripleFamilies) -> Result<f64, SectionError> {
    let s2 = &triple.second;
    let mut best = f64::INFINITY;
    for i in 0..s2.layout.patch_count() {
        // T³ = S², so T³ samples are S² samples
        for x in P::t_samples(&triple.third.layout, i, 5) {
            let (_, t, _) = varphi_return(
                triple,
                &SuspensionPoint {
                    base: x,
                    height: 0.0,
                },
            )?;
            best = best.min(t);
        }
    }
    Ok(best)
}

/// Next strict hit of ∪T¹ from a point of ∪S², with the number of ∪T³
/// crossings on the way.
pub fn varphi_return<P: SectionBase>(
    triple: &TripleFamilies,
    x: &SuspensionPoint<P>,
) -> Result<(SuspensionPoint<P>, f64, usize), SectionError> {
    let s2 = &triple.second;
    let on_s2 = x.height <= SLICE_TOL && (0..s2.layout.patch_count()).any(|i| s2.in_s(&x.base, i));
    if !on_s2 {
        return Err(SectionError::Domain("point is not on ∪S²".into()));
    }
    let mut base = x.base.clone();
    let mut hops = 0;
    for step in 1..=64 {
        base = P::iterate(&s2.map, &base, 1)?;
        if triple.third.t_cell(&base).is_some() {
            hops += 1;
        }
        if triple.first.t_cell(&base).is_some() {
            return Ok((SuspensionPoint { base, height: 0.0 }, step as f64, hops));
        }
    }
    Err(SectionError::Domain(
        "no hit of ∪T¹ within 64 returns".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{cat_lambda, cat_stable_dir, cat_unstable_dir};

    fn cat_pair(delta: f64) -> SectionFamilyPair {
        build_pair(&FlowHandle::new(SystemKind::CatSuspension), delta).unwrap()
    }

    fn floor(x: f64, y: f64) -> SuspensionPoint<TorusPoint> {
        SuspensionPoint {
            base: TorusPoint::new(x, y),
            height: 0.0,
        }
    }

    fn segment(p: TorusPoint, dir: (f64, f64), len: f64, n: usize) -> Arc<TorusPoint> {
        Arc::segment(&p, &p.offset(len * dir.0, len * dir.1), n).unwrap()
    }

    #[test]
    fn dyadic_helpers() {
        assert_eq!(dyadic_floor(0.063), 0.0625);
        assert_eq!(dyadic_below(0.5), 0.25);
        assert_eq!(dyadic_floor(1.0), 1.0);
    }

    #[test]
    fn cat_pair_constants() {
        let p = cat_pair(0.2);
        assert_eq!(p.theta, 1.0);
        assert!(5.0 * p.rho < p.eps && 2.0 * p.rho < p.theta);
        assert_eq!(p.rho, 0.125);
        assert!(p.report.passed());
        assert!(p.layout.s_diameter() <= 0.2 + 1e-12);
        assert_eq!(p.eps0, 1.0 / 32.0);
        let q = cat_pair(0.32);
        assert_eq!(
            q.layout,
            Layout::TorusGrid {
                k: 10,
                t_half: 0.05,
                s_half: 0.32 / 2f64.sqrt() / 2.0
            }
        );
        assert_eq!(q.eps0, 1.0 / 16.0);
    }

    #[test]
    fn shift_pair_constants() {
        let p = build_pair(&FlowHandle::new(SystemKind::Shift2Suspension), 0.2).unwrap();
        assert_eq!(p.layout, Layout::Cylinders { p: 2, k: 2 });
        assert_eq!(p.layout.patch_count(), 32);
        assert_eq!(p.eps0, 0.25);
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.0);
        assert!(matches!(e, Err(SectionError::Validation(_))));
        let e = build_pair(&FlowHandle::new(SystemKind::IntervalLogistic), 0.2);
        assert!(matches!(e, Err(SectionError::Unsupported(_))));
    }

    #[test]
    fn first_return_is_one_roof_crossing() {
        let pair = cat_pair(0.2);
        let x = floor(0.3, 0.7);
        let (y, t) = first_return(&pair, &x).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(
            y.base,
            TorusPoint::iterate(&BaseMap::Cat, &x.base, 1).unwrap()
        );
        let (z, _) = first_return(&pair, &y).unwrap();
        let oracle = suspension_flow(&BaseMap::Cat, &x, 2.0).unwrap();
        assert!(z.base.dist(&oracle.base) < 1e-12 && oracle.height < 1e-12);
        let off = SuspensionPoint {
            base: x.base,
            height: 0.4,
        };
        assert!(matches!(
            first_return(&pair, &off),
            Err(SectionError::Domain(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let pair = cat_pair(0.2);
        let s = floor(0.33, 0.41);
        let i = pair.t_cell(&s.base).unwrap();
        let (p, t) = project_p_rho(&pair, &s, i).unwrap();
        assert_eq!((p.clone(), t), (s.clone(), 0.0));
        let up = suspension_flow(&pair.map, &s, pair.rho / 2.0).unwrap();
        let (q, t) = project_p_rho(&pair, &up, i).unwrap();
        assert!(q.base.dist(&s.base) < 1e-12 && (t + pair.rho / 2.0).abs() < 1e-12);
        let below = suspension_flow(&pair.map, &s, -pair.rho / 2.0).unwrap();
        let (q, t) = project_p_rho(&pair, &below, i).unwrap();
        assert!(q.base.dist(&s.base) < 1e-12);
        // flowing back by the returned time recovers the input
        let back = suspension_flow(&pair.map, &q, -t).unwrap();
        assert!(back.base.dist(&below.base) < 1e-12);
        let mid = SuspensionPoint {
            base: s.base,
            height: 0.5,
        };
        assert!(project_p_rho(&pair, &mid, i).is_err());
    }

    #[test]
    fn shadow_of_itself_is_the_orbit() {
        let pair = cat_pair(0.2);
        let x = floor(0.21, 0.68);
        let orbit = shadow_sequence(&pair, &x, &x, 6).unwrap();
        assert_eq!(orbit.status, OrbitStatus::Complete);
        for e in &orbit.entries {
            let fx = TorusPoint::iterate(&pair.map, &x.base, e.index).unwrap();
            assert!(e.point.base.dist(&fx) < 1e-12);
        }
        let back = shadow_sequence(&pair, &x, &x, -4).unwrap();
        assert_eq!(back.entries.last().unwrap().index, -4);
    }

    #[test]
    fn shadow_along_stable_line_contracts() {
        let pair = cat_pair(0.2);
        let lam = cat_lambda();
        let x = floor(0.45, 0.55);
        let (sx, sy) = cat_stable_dir();
        let d0 = pair.eps0 / 4.0;
        let y = SuspensionPoint {
            base: x.base.offset(d0 * sx, d0 * sy),
            height: 0.0,
        };
        let orbit = shadow_sequence(&pair, &x, &y, 8).unwrap();
        assert_eq!(orbit.status, OrbitStatus::Complete);
        for e in &orbit.entries {
            let fx = TorusPoint::iterate(&pair.map, &x.base, e.index).unwrap();
            let expect = d0 * lam.powi(-(e.index as i32));
            assert!((e.point.base.dist(&fx) / expect - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shadow_along_unstable_line_diverges_on_time() {
        let pair = cat_pair(0.2);
        let lam = cat_lambda();
        let x = floor(0.45, 0.55);
        let (ux, uy) = cat_unstable_dir();
        let d0 = pair.eps0 / 2.0 * 0.999;
        let y = SuspensionPoint {
            base: x.base.offset(d0 * ux, d0 * uy),
            height: 0.0,
        };
        let orbit = shadow_sequence(&pair, &x, &y, 8).unwrap();
        let first = (1..).find(|i| d0 * lam.powi(*i) >= pair.eps0).unwrap();
        assert_eq!(orbit.status, OrbitStatus::DivergedAt(first as i64));
    }

    #[test]
    fn shadow_preconditions() {
        let pair = cat_pair(0.2);
        let x = floor(0.45, 0.55);
        let far = floor(0.45 + pair.eps0, 0.55);
        assert!(matches!(
            shadow_sequence(&pair, &x, &far, 2),
            Err(SectionError::Precondition(_))
        ));
    }

    #[test]
    fn continuum_singleton_and_stretch() {
        let pair = cat_pair(0.2);
        let lam = cat_lambda();
        let p = TorusPoint::new(0.52, 0.47);
        let r = return_continuum(&pair, &Arc::singleton(p), 0, 3).unwrap();
        let img = r.arc().unwrap();
        assert!(img.is_singleton());
        assert!(img.samples()[0].dist(&TorusPoint::iterate(&pair.map, &p, 3).unwrap()) < 1e-12);

        let len = pair.eps0 / 8.0;
        let u = segment(p, cat_unstable_dir(), len, 5);
        let r = return_continuum(&pair, &u, 0, 1).unwrap();
        assert!((r.arc().unwrap().diameter() / (lam * len) - 1.0).abs() < 1e-6);
        assert!(r.arc().unwrap().mesh() <= pair.eps0 * MESH_FRACTION + 1e-15);

        let s = segment(p, cat_stable_dir(), len, 5);
        let r = return_continuum(&pair, &s, 0, -1).unwrap();
        assert!((r.arc().unwrap().diameter() / (lam * len) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn continuum_overflow_is_reported() {
        let pair = cat_pair(0.2);
        let u = segment(
            TorusPoint::new(0.52, 0.47),
            cat_unstable_dir(),
            pair.eps0 / 3.0,
            5,
        );
        match return_continuum(&pair, &u, 0, 5).unwrap() {
            ContinuumReturn::Overflow { step, .. } => assert_eq!(step, 2),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn membership_examples() {
        let pair = cat_pair(0.2);
        let lam = cat_lambda();
        let eta = pair.eps0 / 2.0;
        let p = TorusPoint::new(0.52, 0.47);
        let single = stable_membership(&pair, &Arc::singleton(p), 0, eta, 8).unwrap();
        assert_eq!(single.verdict, Membership::Both);

        let u = segment(p, cat_unstable_dir(), eta / 2.0, 9);
        let r = stable_membership(&pair, &u, 0, eta, 8).unwrap();
        assert_eq!(r.verdict, Membership::InWu);
        for (n, d) in r.backward.iter().enumerate() {
            assert!((d / (eta / 2.0 * lam.powi(-(n as i32))) - 1.0).abs() < 0.05);
        }

        let s = segment(p, cat_stable_dir(), eta / 2.0, 9);
        let r = stable_membership(&pair, &s, 0, eta, 8).unwrap();
        assert_eq!(r.verdict, Membership::InWs);
        assert!(*r.forward.last().unwrap() < 0.1 * eta);
    }

    #[test]
    fn triple_nesting_and_hops() {
        let triple = build_triple(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let (
            Layout::TorusGrid {
                t_half: t1,
                s_half: s1,
                ..
            },
            Layout::TorusGrid {
                t_half: t2,
                s_half: s2,
                ..
            },
            Layout::TorusGrid {
                t_half: t3,
                s_half: s3,
                ..
            },
        ) = (
            triple.first.layout,
            triple.second.layout,
            triple.third.layout,
        )
        else {
            panic!("torus layouts expected")
        };
        assert_eq!(t1, t2);
        assert_eq!(t3, s2);
        assert_eq!(s3, s1);
        assert!(t1 < s2 && s2 < s1);
        assert_eq!(triple.theta_prime, 1.0);
        assert_eq!(triple.hop_bound(), 1);
        assert_eq!(triple.first.eps0, 1.0 / 16.0);
        assert_eq!(triple.second.eps0, 1.0 / 32.0);
        assert_eq!(triple.third.eps0, 1.0 / 32.0);
        let x = floor(0.3, 0.3);
        let (_, t, hops) = varphi_return(&triple, &x).unwrap();
        assert!(t >= triple.third.theta && hops <= triple.hop_bound());
    }
}
