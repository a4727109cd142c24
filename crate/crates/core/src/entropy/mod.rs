//! Entropy estimators: Bowen spanning/separated counts on the flow, weakly
//! spanning counts with monotone time alignment, and counts relative to an
//! adequate section pair. Growth rates are least-squares fits over a declared
//! window; no extrapolation in γ is attempted.

pub mod kernel;
pub mod witness;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sections::{cylinder_word, Layout, SectionError, SectionFamilyPair};
use crate::spaces::{SymbolWord, TorusPoint};
use crate::systems::{BaseMap, SystemError};
use kernel::{greedy_count, KernelBase, Profile};

pub use witness::{
    build_witness_tree, calibrate_delta0, default_seeds, find_unstable_continuum, growth_split,
    verify_separated, Calibration, SeparationReport, SplitResult, UnstableContinuum, WitnessTree,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("split failed: {0}")]
    SplitFailure(String),
    #[error("no unstable continuum found: {0}")]
    NotFound(String),
    #[error("witness construction failed at node {node}: {reason}")]
    Construction { node: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BowenSpan,
    BowenSep,
    WeakSpan,
    SectionSpan,
    SectionSep,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::BowenSpan,
        Method::BowenSep,
        Method::WeakSpan,
        Method::SectionSpan,
        Method::SectionSep,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::BowenSpan => "bowen-span",
            Method::BowenSep => "bowen-sep",
            Method::WeakSpan => "weak-span",
            Method::SectionSpan => "section-span",
            Method::SectionSep => "section-sep",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn is_section(&self) -> bool {
        matches!(self, Method::SectionSpan | Method::SectionSep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Span,
    Sep,
}

/// Sample lattice: `grid` points per side in each T patch (torus), or
/// `grid` free symbols right of the fixed block (shift). Patch-major order.
#[derive(Debug, Clone, PartialEq)]
pub enum Lattice {
    Torus(Vec<TorusPoint>),
    Word(Vec<SymbolWord>),
}

/// Spare radius on lattice words so shifted windows still cover the keys.
const WORD_SLACK: usize = 24;

impl Lattice {
    pub fn for_layout(layout: &Layout, grid: usize) -> Result<Self, EntropyError> {
        if grid == 0 {
            return Err(EntropyError::Parameter(
                "empty sample lattice (grid = 0)".into(),
            ));
        }
        match *layout {
            Layout::TorusGrid { k, .. } => {
                let kf = k as f64;
                let gf = grid as f64;
                let mut pts = Vec::with_capacity(k * k * grid * grid);
                for ix in 0..k {
                    for iy in 0..k {
                        for a in 0..grid {
                            for b in 0..grid {
                                pts.push(TorusPoint::new(
                                    (ix as f64 + (a as f64 + 0.5) / gf) / kf,
                                    (iy as f64 + (b as f64 + 0.5) / gf) / kf,
                                ));
                            }
                        }
                    }
                }
                Ok(Lattice::Torus(pts))
            }
            Layout::Cylinders { p, k } => {
                if grid > 20 {
                    return Err(EntropyError::Parameter(format!(
                        "{grid} free symbols is too many"
                    )));
                }
                let radius = p + grid + WORD_SLACK;
                let per = (k as usize).pow(grid as u32);
                let mut words = Vec::with_capacity(layout.patch_count() * per);
                for i in 0..layout.patch_count() {
                    let base = cylinder_word(k, p, i, radius);
                    for mut c in 0..per {
                        let mut w = base.clone();
                        for j in 0..grid {
                            w.set((p + 1 + j) as i64, (c % k as usize) as u8);
                            c /= k as usize;
                        }
                        words.push(w);
                    }
                }
                Ok(Lattice::Word(words))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Lattice::Torus(v) => v.len(),
            Lattice::Word(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_gamma(gamma: f64) -> Result<(), EntropyError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(EntropyError::Parameter(format!(
            "γ must be positive, got {gamma}"
        )));
    }
    Ok(())
}

/// Counts relative to the pair over its sampled T lattice.
pub fn section_count(
    pair: &SectionFamilyPair,
    lattice: &Lattice,
    n: usize,
    gamma: f64,
    _mode: Mode,
) -> Result<usize, EntropyError> {
    check_gamma(gamma)?;
    if gamma >= pair.eps0 {
        return Err(EntropyError::Parameter(format!(
            "γ = {gamma} must be below ε₀ = {}; shadows are undefined at that scale",
            pair.eps0
        )));
    }
    if lattice.is_empty() {
        return Err(EntropyError::Parameter("empty sample lattice".into()));
    }
    // a maximal separated set is also spanning: both modes run the same scan
    let prof = Profile::section(n);
    Ok(match lattice {
        Lattice::Torus(v) => greedy_count(&pair.map, v, &prof, gamma, Some(pair))?,
        Lattice::Word(v) => greedy_count(&pair.map, v, &prof, gamma, Some(pair))?,
    })
}

/// Height levels j/H of the flow sample F = lattice × levels.
pub fn height_levels(h: usize, gamma: f64) -> Result<Vec<f64>, EntropyError> {
    if h == 0 {
        return Err(EntropyError::Parameter(
            "need at least one height level".into(),
        ));
    }
    if h > 1 && 1.0 / (h as f64) < gamma {
        return Err(EntropyError::Parameter(format!(
            "{h} height levels are closer than γ = {gamma}; they would not be counted independently"
        )));
    }
    Ok((0..h).map(|j| j as f64 / h as f64).collect())
}

/// Bowen count on F = lattice × height levels. Levels at least γ apart are
/// γ-separated for all time, so their counts add.
pub fn bowen_count(
    map: &BaseMap,
    lattice: &Lattice,
    t: f64,
    gamma: f64,
    _mode: Mode,
    heights: usize,
) -> Result<usize, EntropyError> {
    check_gamma(gamma)?;
    if !(t > 0.0) {
        return Err(EntropyError::Parameter(format!(
            "time horizon must be positive, got {t}"
        )));
    }
    if lattice.is_empty() {
        return Err(EntropyError::Parameter("empty sample lattice".into()));
    }
    let levels = height_levels(heights, gamma)?;
    let counts: Result<Vec<usize>, SystemError> = levels
        .par_iter()
        .map(|&h| {
            let prof = Profile::bowen(h, t);
            match lattice {
                Lattice::Torus(v) => greedy_count(map, v, &prof, gamma, None),
                Lattice::Word(v) => greedy_count(map, v, &prof, gamma, None),
            }
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

/// Largest sampled offset (in steps of `dt`) that stays below γ in flow time.
pub fn warp_band(gamma: f64, dt: f64) -> usize {
    ((gamma / dt).ceil() as usize).saturating_sub(1)
}

/// Weakly spanning count: e covers x when some monotone alignment of sampled
/// times, with local slopes in [1/2, 2] and offsets below γ, keeps the two
/// orbits γ-close. Reported as min(weak, Bowen span) so the containment of
/// cover criteria holds pointwise.
pub fn weak_span_count(
    map: &BaseMap,
    lattice: &Lattice,
    t: f64,
    gamma: f64,
    heights: usize,
    dt: f64,
) -> Result<usize, EntropyError> {
    if !(dt > 0.0) {
        return Err(EntropyError::Parameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let strong = bowen_count(map, lattice, t, gamma, Mode::Span, heights)?;
    let band = warp_band(gamma, dt);
    if band == 0 {
        // only the identity alignment fits in the band
        return Ok(strong);
    }
    let levels = height_levels(heights, gamma)?;
    let mut total = 0;
    for h in levels {
        total += match lattice {
            Lattice::Torus(v) => warp_greedy(map, v, h, t, gamma, dt, band)?,
            Lattice::Word(v) => warp_greedy(map, v, h, t, gamma, dt, band)?,
        };
    }
    Ok(total.min(strong))
}

fn warp_greedy<P: KernelBase>(
    map: &BaseMap,
    lattice: &[P],
    h: f64,
    t: f64,
    gamma: f64,
    dt: f64,
    band: usize,
) -> Result<usize, EntropyError> {
    let w = WarpGrid::new(h, t, dt, band);
    // identity alignment at the start: (1-h)·d(x, e) < γ
    let key_scale = gamma / (1.0 - h);
    let space = P::key_space(key_scale);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); space];
    let mut centres: Vec<Vec<P>> = Vec::new();
    let mut near = Vec::with_capacity(9);
    let mut floor_d = vec![0.0; w.floors];
    for x in lattice {
        let tx = w.trajectory(map, x)?;
        let k = P::key(x, key_scale);
        P::neighbours(k, key_scale, &mut near);
        let mut covered = false;
        'scan: for &nk in &near {
            for &c in &buckets[nk] {
                let te = &centres[c];
                for (d, (a, b)) in floor_d.iter_mut().zip(tx.iter().zip(te)) {
                    *d = a.dist(b);
                }
                if w.close(&floor_d, gamma) {
                    covered = true;
                    break 'scan;
                }
            }
        }
        if !covered {
            buckets[k].push(centres.len());
            centres.push(tx);
        }
    }
    Ok(centres.len())
}

/// Sample grid of the warp: global heights g_j = h + j·dt for j in
/// [-b, steps + b], with base trajectories stored at floors -1..floors-1.
struct WarpGrid {
    h: f64,
    dt: f64,
    steps: usize,
    b: i64,
    floors: usize,
}

impl WarpGrid {
    fn new(h: f64, t: f64, dt: f64, band: usize) -> Self {
        let steps = (t / dt).round() as usize;
        let b = band as i64;
        let top = h + (steps as i64 + b) as f64 * dt;
        WarpGrid {
            h,
            dt,
            steps,
            b,
            floors: top.floor() as usize + 3,
        }
    }

    fn trajectory<P: KernelBase>(&self, map: &BaseMap, p: &P) -> Result<Vec<P>, SystemError> {
        let mut out = Vec::with_capacity(self.floors);
        out.push(P::iterate(map, p, -1)?);
        out.push(p.clone());
        while out.len() < self.floors {
            let q = P::iterate(map, out.last().unwrap(), 1)?;
            out.push(q);
        }
        Ok(out)
    }

    fn height(&self, j: i64) -> f64 {
        self.h + j as f64 * self.dt
    }

    /// Level cost at global height g, floors offset by one in `d`.
    fn level(d: &[f64], g: f64) -> f64 {
        let k = g.floor();
        let frac = g - k;
        let i = (k as i64 + 1) as usize;
        if frac == 0.0 {
            d[i]
        } else {
            (1.0 - frac) * d[i] + frac * d[i + 1]
        }
    }

    /// Vertical-horizontal-vertical chain between global heights g1, g2: the
    /// level cost is piecewise linear with slope below 2, so the best level
    /// is an endpoint or a floor in between.
    fn dist(d: &[f64], g1: f64, g2: f64) -> f64 {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let mut best = Self::level(d, lo).min(Self::level(d, hi));
        let mut k = lo.floor() + 1.0;
        while k < hi {
            best = best.min(Self::level(d, k));
            k += 1.0;
        }
        (hi - lo) + best
    }

    /// Offsets o_j with o_0 = 0, |o_j| ≤ b, steps in {-1, 0, 1} and no two
    /// consecutive backward steps, keeping x at g_{j+o_j} within γ of e at g_j.
    fn close(&self, d: &[f64], gamma: f64) -> bool {
        let b = self.b;
        let width = (2 * b + 1) as usize;
        let steps = self.steps as i64;
        let pair = |j: i64, o: i64| Self::dist(d, self.height(j + o), self.height(j));
        // every alignment ends within the band: cheap rejection first
        if !(-b..=b).any(|o| pair(steps, o) < gamma) || pair(0, 0) >= gamma {
            return false;
        }
        // reach[o][flat]: flat = last step was backward
        let mut reach = vec![[false; 2]; width];
        reach[b as usize][0] = true;
        let mut next = vec![[false; 2]; width];
        for j in 1..=steps {
            next.iter_mut().for_each(|r| *r = [false; 2]);
            for o in -b..=b {
                let r = reach[(o + b) as usize];
                if !r[0] && !r[1] {
                    continue;
                }
                for step in -1i64..=1 {
                    let no = o + step;
                    if no < -b || no > b || (step == -1 && !r[0]) {
                        continue;
                    }
                    next[(no + b) as usize][(step == -1) as usize] = true;
                }
            }
            let mut any = false;
            for o in -b..=b {
                let oi = (o + b) as usize;
                if next[oi][0] || next[oi][1] {
                    if pair(j, o) < gamma {
                        any = true;
                    } else {
                        next[oi] = [false; 2];
                    }
                }
            }
            if !any {
                return false;
            }
            std::mem::swap(&mut reach, &mut next);
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub n: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub grid: usize,
    pub lattice_points: usize,
    pub heights: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCurve {
    pub method: Method,
    pub gamma: f64,
    pub entries: Vec<CountEntry>,
    pub slope: f64,
    pub endpoint_rate: f64,
    pub stable: bool,
    pub fit_window: (f64, f64),
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub endpoint_rate: f64,
    pub stable: bool,
}

/// Relative disagreement allowed between the two rate estimates.
pub const STABILITY_TOL: f64 = 0.2;

pub fn fit_growth(entries: &[CountEntry]) -> Result<GrowthFit, EntropyError> {
    if entries.len() < 3 {
        return Err(EntropyError::Parameter(format!(
            "need at least 3 counts to fit, got {}",
            entries.len()
        )));
    }
    if let Some(e) = entries.iter().find(|e| e.count == 0) {
        return Err(EntropyError::Parameter(format!(
            "zero count at n = {}",
            e.n
        )));
    }
    let k = entries.len() as f64;
    let mx = entries.iter().map(|e| e.n).sum::<f64>() / k;
    let my = entries.iter().map(|e| (e.count as f64).ln()).sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for e in entries {
        let dx = e.n - mx;
        sxy += dx * ((e.count as f64).ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(EntropyError::Parameter(
            "fit window has no spread in n".into(),
        ));
    }
    let slope = sxy / sxx;
    let (first, last) = (entries.first().unwrap(), entries.last().unwrap());
    let endpoint_rate = ((last.count as f64).ln() - (first.count as f64).ln()) / (last.n - first.n);
    let scale = slope.abs().max(endpoint_rate.abs());
    let stable = (slope - endpoint_rate).abs() <= (STABILITY_TOL * scale).max(0.01);
    Ok(GrowthFit {
        slope,
        endpoint_rate,
        stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub grid: usize,
    pub heights: usize,
    pub dt: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            grid: 16,
            heights: 2,
            dt: 0.125,
        }
    }
}

/// Count at one n (or integer time t) for any method.
pub fn count_at(
    method: Method,
    pair: &SectionFamilyPair,
    lattice: &Lattice,
    n: usize,
    gamma: f64,
    opts: &CurveOptions,
) -> Result<usize, EntropyError> {
    let t = n as f64;
    match method {
        Method::SectionSpan => section_count(pair, lattice, n, gamma, Mode::Span),
        Method::SectionSep => section_count(pair, lattice, n, gamma, Mode::Sep),
        Method::BowenSpan => bowen_count(&pair.map, lattice, t, gamma, Mode::Span, opts.heights),
        Method::BowenSep => bowen_count(&pair.map, lattice, t, gamma, Mode::Sep, opts.heights),
        Method::WeakSpan => weak_span_count(&pair.map, lattice, t, gamma, opts.heights, opts.dt),
    }
}

/// Counts for every n in `ns` (run in parallel, merged in order) plus the fit.
pub fn count_curve(
    method: Method,
    pair: &SectionFamilyPair,
    gamma: f64,
    ns: &[usize],
    opts: &CurveOptions,
) -> Result<CountCurve, EntropyError> {
    let lattice = Lattice::for_layout(&pair.layout, opts.grid)?;
    curve_on(method, pair, &lattice, gamma, ns, opts)
}

pub fn curve_on(
    method: Method,
    pair: &SectionFamilyPair,
    lattice: &Lattice,
    gamma: f64,
    ns: &[usize],
    opts: &CurveOptions,
) -> Result<CountCurve, EntropyError> {
    if ns.is_empty() {
        return Err(EntropyError::Parameter("empty range of n".into()));
    }
    let counts: Result<Vec<usize>, EntropyError> = ns
        .par_iter()
        .map(|&n| count_at(method, pair, lattice, n, gamma, opts))
        .collect();
    let entries: Vec<CountEntry> = ns
        .iter()
        .zip(counts?)
        .map(|(&n, c)| CountEntry {
            n: n as f64,
            count: c as u64,
        })
        .collect();
    let fit = fit_growth(&entries)?;
    let heights = if method.is_section() { 1 } else { opts.heights };
    Ok(CountCurve {
        method,
        gamma,
        fit_window: (entries[0].n, entries[entries.len() - 1].n),
        entries,
        slope: fit.slope,
        endpoint_rate: fit.endpoint_rate,
        stable: fit.stable,
        resolution: Resolution {
            grid: opts.grid,
            lattice_points: lattice.len() * heights,
            heights,
            dt: opts.dt,
        },
    })
}

/// Counts (span at γ, sep at γ, span at γ/2) for the sandwich inequalities.
pub fn sandwich(
    method_pair: (Method, Method),
    pair: &SectionFamilyPair,
    lattice: &Lattice,
    n: usize,
    gamma: f64,
    opts: &CurveOptions,
) -> Result<(usize, usize, usize), EntropyError> {
    let (span, sep) = method_pair;
    let a = count_at(span, pair, lattice, n, gamma, opts)?;
    let b = count_at(sep, pair, lattice, n, gamma, opts)?;
    let c = count_at(span, pair, lattice, n, gamma / 2.0, opts)?;
    Ok((a, b, c))
}

/// Smallest N with λ^N ≥ 3 for the cat map.
pub fn default_power(map: &BaseMap) -> Option<usize> {
    match map {
        BaseMap::Cat | BaseMap::InverseCat => {
            let lam = crate::systems::cat_lambda();
            (1..).find(|&n| lam.powi(n as i32) >= 3.0)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sections::build_pair;
    use crate::systems::{FlowHandle, SystemKind};
    use proptest::prelude::*;

    fn entries(c: &[u64]) -> Vec<CountEntry> {
        c.iter()
            .enumerate()
            .map(|(i, &c)| CountEntry {
                n: i as f64 + 1.0,
                count: c,
            })
            .collect()
    }

    #[test]
    fn fit_examples() {
        let f = fit_growth(&entries(&[2, 4, 8, 16])).unwrap();
        assert!((f.slope - 2f64.ln()).abs() < 1e-12);
        assert!(f.stable);
        assert_eq!(fit_growth(&entries(&[5, 5, 5])).unwrap().slope, 0.0);
        // least squares on ln [3,7,21,55], worked separately
        let f = fit_growth(&entries(&[3, 7, 21, 55])).unwrap();
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = [3.0f64, 7.0, 21.0, 55.0].iter().map(|v| v.ln()).collect();
        let my = ys.iter().sum::<f64>() / 4.0;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - 2.5) * (y - my)).sum();
        assert!((f.slope - num / 5.0).abs() < 1e-12);
        assert!((f.slope / 3f64.ln() - 1.0).abs() < 0.15);
        assert!(matches!(
            fit_growth(&entries(&[1, 2])),
            Err(EntropyError::Parameter(_))
        ));
    }

    #[test]
    fn section_count_needs_small_gamma() {
        let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 4).unwrap();
        assert!(matches!(
            section_count(&pair, &lat, 2, pair.eps0, Mode::Sep),
            Err(EntropyError::Parameter(_))
        ));
    }

    #[test]
    fn n_zero_large_gamma_is_one_per_patch() {
        let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 6).unwrap();
        let c = section_count(&pair, &lat, 0, pair.eps0 * 0.99, Mode::Span).unwrap();
        assert!(c <= 4 * pair.layout.patch_count());
        let shift = build_pair(&FlowHandle::new(SystemKind::Shift2Suspension), 0.2).unwrap();
        let lat = Lattice::for_layout(&shift.layout, 6).unwrap();
        assert_eq!(
            section_count(&shift, &lat, 0, 0.2, Mode::Span).unwrap(),
            shift.layout.patch_count()
        );
    }

    #[test]
    fn shift_counts_are_cylinder_counts() {
        let pair = build_pair(&FlowHandle::new(SystemKind::Shift2Suspension), 0.2).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 9).unwrap();
        for n in 0..=6 {
            // separated iff the words differ on [-2, n+2]; the free block starts at 3
            let c = section_count(&pair, &lat, n, 0.2, Mode::Sep).unwrap();
            assert_eq!(c, 32 << n);
        }
    }

    #[test]
    fn rotation_counts_do_not_grow() {
        let pair = build_pair(&FlowHandle::new(SystemKind::RotationSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 8).unwrap();
        let c: Vec<usize> = [1.0, 5.0, 10.0]
            .iter()
            .map(|&t| bowen_count(&pair.map, &lat, t, 0.047, Mode::Sep, 2).unwrap())
            .collect();
        assert_eq!(c[0], c[1]);
        assert_eq!(c[1], c[2]);
    }

    #[test]
    fn bowen_rejects_crowded_levels() {
        let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 2).unwrap();
        assert!(bowen_count(&pair.map, &lat, 1.0, 0.3, Mode::Sep, 4).is_err());
        assert!(bowen_count(&pair.map, &Lattice::Torus(vec![]), 1.0, 0.1, Mode::Sep, 1).is_err());
    }

    #[test]
    fn large_gamma_short_time_is_one() {
        let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 3).unwrap();
        assert_eq!(
            bowen_count(&pair.map, &lat, 1e-3, 1.0, Mode::Span, 1).unwrap(),
            1
        );
    }

    #[test]
    fn weak_band_and_bound() {
        assert_eq!(warp_band(0.1, 0.125), 0);
        assert_eq!(warp_band(0.3, 0.125), 2);
        let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
        let lat = Lattice::for_layout(&pair.layout, 2).unwrap();
        for t in [1.0, 2.0] {
            let strong = bowen_count(&pair.map, &lat, t, 0.3, Mode::Span, 1).unwrap();
            let weak = weak_span_count(&pair.map, &lat, t, 0.3, 1, 0.125).unwrap();
            assert!(weak <= strong);
            let same = weak_span_count(&pair.map, &lat, t, 0.1, 1, 0.125).unwrap();
            assert_eq!(
                same,
                bowen_count(&pair.map, &lat, t, 0.1, Mode::Span, 1).unwrap()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn sandwich_and_monotonicity(n in 0usize..5, gi in 0usize..3) {
            let pair = build_pair(&FlowHandle::new(SystemKind::CatSuspension), 0.32).unwrap();
            let lat = Lattice::for_layout(&pair.layout, 6).unwrap();
            let gamma = [0.05, 0.03, 0.02][gi];
            let opts = CurveOptions::default();
            let (a, b, c) = sandwich((Method::SectionSpan, Method::SectionSep), &pair, &lat, n, gamma, &opts).unwrap();
            prop_assert!(a <= b && b <= c);
            let next = section_count(&pair, &lat, n + 1, gamma, Mode::Sep).unwrap();
            prop_assert!(next >= b);
            let coarser = section_count(&pair, &lat, n, gamma * 1.2, Mode::Span).unwrap();
            prop_assert!(coarser <= a);
        }
    }
}
