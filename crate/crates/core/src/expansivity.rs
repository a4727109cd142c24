//! Continuum-wise expansivity: reparametrized orbit diameters, a budgeted
//! search for violations, the fixed-point construction, the continuous to
//! discrete reparametrization bridge, the discrete check for base maps and
//! transport of verdicts through chart changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spaces::{Arc, Chart, IntervalPoint, Metric, TorusPoint};
use crate::systems::{
    cat_stable_dir, cat_unstable_dir, BaseMap, BaseSpace, ChartChange, Flow, IntervalFlow,
    SuspensionPoint, SystemError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpansivityError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("range exhausted: {0}")]
    RangeExhausted(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

type Result<T> = std::result::Result<T, ExpansivityError>;

fn param(msg: impl Into<String>) -> ExpansivityError {
    ExpansivityError::Parameter(msg.into())
}

/// Increasing piecewise-linear homeomorphism of ℝ fixing 0. Knots are
/// (t, value) pairs; outside the knots the slope is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    knots: Vec<(f64, f64)>,
}

impl TimeChange {
    pub fn identity() -> Self {
        TimeChange {
            knots: vec![(0.0, 0.0)],
        }
    }

    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if !knots.iter().any(|&(t, v)| t == 0.0 && v == 0.0) {
            return Err(param("time change must pass through (0, 0)"));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(param(format!(
                    "time change not strictly increasing near t = {}",
                    w[0].0
                )));
            }
        }
        if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(param("non-finite knot"));
        }
        Ok(TimeChange { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        let last = k[k.len() - 1];
        if t <= first.0 {
            return first.1 + (t - first.0);
        }
        if t >= last.0 {
            return last.1 + (t - last.0);
        }
        let i = k.partition_point(|&(kt, _)| kt <= t) - 1;
        let (t0, v0) = k[i];
        let (t1, v1) = k[i + 1];
        v0 + (t - t0) * (v1 - v0) / (t1 - t0)
    }

    /// Largest slope over all pieces, including the unit slope outside.
    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .fold(1.0, f64::max)
    }

    pub fn min_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .fold(1.0, f64::min)
    }

    pub fn is_identity(&self) -> bool {
        self.knots.iter().all(|&(t, v)| t == v)
    }

    /// (1-c)·Id + c·self.
    pub fn blend(&self, c: f64) -> TimeChange {
        TimeChange {
            knots: self
                .knots
                .iter()
                .map(|&(t, v)| (t, (1.0 - c) * t + c * v))
                .collect(),
        }
    }
}

/// The time change of the fixed-point construction: t+1 off (-2, 1), 2t on
/// [0, 1), t/2 on (-2, 0).
pub fn fixed_point_h() -> TimeChange {
    TimeChange {
        knots: vec![(-2.0, -1.0), (0.0, 0.0), (1.0, 2.0)],
    }
}

/// One time change per arc sample plus the index of the identity sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamFamily {
    pub changes: Vec<TimeChange>,
    pub guide_index: usize,
}

impl ReparamFamily {
    pub fn identity(samples: usize, guide_index: usize) -> Self {
        ReparamFamily {
            changes: vec![TimeChange::identity(); samples],
            guide_index,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.changes.get(self.guide_index).ok_or_else(|| {
            ExpansivityError::Structural(format!("guide index {} out of range", self.guide_index))
        })?;
        if !g.is_identity() {
            return Err(ExpansivityError::Structural(
                "guide time change is not the identity".into(),
            ));
        }
        Ok(())
    }

    /// Max over adjacent samples and all knots of |α_i(t) - α_{i+1}(t)|.
    pub fn adjacent_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.changes.windows(2) {
            for &(t, _) in w[0].knots().iter().chain(w[1].knots()) {
                worst = worst.max((w[0].eval(t) - w[1].eval(t)).abs());
            }
        }
        worst
    }

    pub fn max_slope(&self) -> f64 {
        self.changes
            .iter()
            .map(TimeChange::max_slope)
            .fold(1.0, f64::max)
    }
}

/// Diameter under the flow metric of {X^{α(x)(t)}(x) : x ∈ A}.
pub fn reparam_orbit_diameter<F: Flow>(
    flow: &F,
    a: &Arc<F::State>,
    alpha: &ReparamFamily,
    t: f64,
) -> Result<f64> {
    let pts = reparam_image(flow, a, alpha, t)?;
    diameter_of(flow, &pts, f64::INFINITY)
}

fn reparam_image<F: Flow>(
    flow: &F,
    a: &Arc<F::State>,
    alpha: &ReparamFamily,
    t: f64,
) -> Result<Vec<F::State>> {
    if alpha.changes.len() != a.len() {
        return Err(ExpansivityError::Structural(format!(
            "{} time changes for {} samples",
            alpha.changes.len(),
            a.len()
        )));
    }
    a.samples()
        .iter()
        .zip(&alpha.changes)
        .map(|(x, h)| flow.evolve(x, h.eval(t)).map_err(Into::into))
        .collect()
}

/// Diameter of a finite set; stops early once it reaches `cap`.
fn diameter_of<F: Flow>(flow: &F, pts: &[F::State], cap: f64) -> Result<f64> {
    let mut d = 0.0f64;
    // cheap lower bound against the first point
    for q in &pts[1..] {
        d = d.max(flow.state_distance(&pts[0], q)?);
        if d >= cap {
            return Ok(d);
        }
    }
    for i in 1..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(flow.state_distance(&pts[i], &pts[j])?);
            if d >= cap {
                return Ok(d);
            }
        }
    }
    Ok(d)
}

/// Sampled times 0, ±dt, ±2dt, … out to ±window, nearest first.
pub fn window_times(window: f64, dt: f64) -> Vec<f64> {
    let n = (window / dt).round() as i64;
    let mut out = vec![0.0];
    for k in 1..=n {
        out.push(k as f64 * dt);
        out.push(-(k as f64) * dt);
    }
    out
}

/// Sup of the reparametrized diameter over the sampled window; returns as
/// soon as it reaches `cap`.
pub fn sup_diameter<F: Flow>(
    flow: &F,
    a: &Arc<F::State>,
    alpha: &ReparamFamily,
    window: f64,
    dt: f64,
    cap: f64,
) -> Result<f64> {
    let mut sup = 0.0f64;
    for t in window_times(window, dt) {
        let pts = reparam_image(flow, a, alpha, t)?;
        sup = sup.max(diameter_of(flow, &pts, cap)?);
        if sup >= cap {
            break;
        }
    }
    Ok(sup)
}

/// Max over samples of the distance to the sampled orbit segment
/// X^{(-ε, ε)}(guide).
pub fn tube_excess<F: Flow>(flow: &F, a: &Arc<F::State>, guide: usize, eps: f64) -> Result<f64> {
    let g = a
        .samples()
        .get(guide)
        .ok_or_else(|| param(format!("guide {guide} out of range")))?;
    let steps = 256;
    let seg: Vec<F::State> = (0..=steps)
        .map(|k| flow.evolve(g, -eps + 2.0 * eps * k as f64 / steps as f64))
        .collect::<std::result::Result<_, _>>()?;
    let mut worst = 0.0f64;
    for x in a.samples() {
        let mut best = f64::INFINITY;
        for s in &seg {
            best = best.min(flow.state_distance(x, s)?);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    NoCounterexample,
    Counterexample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample<P> {
    pub arc: Arc<P>,
    /// Absent for the discrete check, where iterates replace time changes.
    pub alpha: Option<ReparamFamily>,
    pub guide_index: usize,
    pub sup_diameter: f64,
    pub window: f64,
    /// Distance from the arc to the guide's ε orbit segment.
    pub tube_excess: f64,
    pub seed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub seeds: usize,
    pub perturbations_per_seed: usize,
    pub window: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwVerdict<P> {
    pub outcome: Outcome,
    pub delta: f64,
    pub eps: f64,
    pub budget_used: usize,
    pub census: Census,
    pub counterexample: Option<Counterexample<P>>,
}

/// A seed arc with its guide and an optional preferred time-change family,
/// tried before the generated perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed<P> {
    pub arc: Arc<P>,
    pub guide: usize,
    pub alpha: Option<ReparamFamily>,
}

impl<P> Seed<P> {
    pub fn plain(arc: Arc<P>, guide: usize) -> Self {
        Seed {
            arc,
            guide,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub dt: f64,
    pub knots: usize,
    pub rng_seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            dt: 0.5,
            knots: 16,
            rng_seed: 0,
        }
    }
}

/// Perturbation `k` of the identity for an arc of `n` samples: slopes in
/// [1/4, 4] on a uniform knot grid over the window, scaled by the sample's
/// parameter distance from the guide so neighbours stay close.
pub fn perturbation(
    n: usize,
    guide: usize,
    k: usize,
    window: f64,
    opts: &SearchOptions,
    seed: usize,
) -> ReparamFamily {
    if k == 0 || n < 2 {
        return ReparamFamily::identity(n, guide);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ ((seed as u64) << 32) ^ k as u64);
    let m = opts.knots.max(2);
    let g = 2.0 * window / m as f64;
    let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let ln4 = 4f64.ln();
    let changes = (0..n)
        .map(|i| {
            let w = (i as f64 - guide as f64) / (n - 1) as f64;
            let slope = |j: usize| (ln4 * w * c[j]).exp();
            let half = m / 2;
            let mut knots = vec![(0.0, 0.0)];
            let mut v = 0.0;
            for j in half..m {
                v += slope(j) * g;
                knots.push(((j - half + 1) as f64 * g, v));
            }
            v = 0.0;
            for j in (0..half).rev() {
                v -= slope(j) * g;
                knots.push((-((half - j) as f64) * g, v));
            }
            knots.sort_by(|a, b| a.0.total_cmp(&b.0));
            TimeChange { knots }
        })
        .collect();
    ReparamFamily {
        changes,
        guide_index: guide,
    }
}

/// Searches seeds × time-change perturbations for an arc whose
/// reparametrized images stay below δ on the window but which does not lie
/// in the ε orbit segment of its guide. The first counterexample in seed
/// order wins.
pub fn cw_search<F: Flow>(
    flow: &F,
    seeds: &[Seed<F::State>],
    eps: f64,
    delta: f64,
    window: f64,
    budget: usize,
    opts: &SearchOptions,
) -> Result<CwVerdict<F::State>> {
    if !(eps > 0.0 && delta > 0.0 && window > 0.0) {
        return Err(param("ε, δ and the window must be positive"));
    }
    if budget == 0 {
        return Err(param("zero search budget"));
    }
    if seeds.is_empty() {
        return Err(param("no seeds"));
    }
    let per = budget.div_ceil(seeds.len());
    let census = Census {
        seeds: seeds.len(),
        perturbations_per_seed: per,
        window,
        dt: opts.dt,
    };
    let found: Vec<(usize, Option<Counterexample<F::State>>)> = seeds
        .par_iter()
        .enumerate()
        .map(
            |(si, seed)| -> Result<(usize, Option<Counterexample<F::State>>)> {
                let n = seed.arc.len();
                // singletons, and arcs inside the orbit segment, satisfy the conclusion
                let excess = tube_excess(flow, &seed.arc, seed.guide, eps)?;
                if n < 2 || excess <= seed.arc.mesh() {
                    return Ok((per, None));
                }
                for k in 0..per {
                    let alpha = match (&seed.alpha, k) {
                        (Some(a), 0) => a.clone(),
                        (Some(_), k) => perturbation(n, seed.guide, k, window, opts, si),
                        (None, k) => perturbation(n, seed.guide, k, window, opts, si),
                    };
                    let sup = sup_diameter(flow, &seed.arc, &alpha, window, opts.dt, delta)?;
                    if sup < delta {
                        return Ok((
                            k + 1,
                            Some(Counterexample {
                                arc: seed.arc.clone(),
                                alpha: Some(alpha),
                                guide_index: seed.guide,
                                sup_diameter: sup,
                                window,
                                tube_excess: excess,
                                seed: si,
                            }),
                        ));
                    }
                }
                Ok((per, None))
            },
        )
        .collect::<Result<_>>()?;
    let mut used = 0;
    let mut winner = None;
    for (u, c) in found {
        used += u;
        if winner.is_none() {
            winner = c;
        }
    }
    Ok(CwVerdict {
        outcome: if winner.is_some() {
            Outcome::Counterexample
        } else {
            Outcome::NoCounterexample
        },
        delta,
        eps,
        budget_used: used,
        census,
        counterexample: winner,
    })
}

/// Re-checks a flow counterexample from scratch.
pub fn reverify<F: Flow>(
    flow: &F,
    cx: &Counterexample<F::State>,
    delta: f64,
    eps: f64,
    dt: f64,
) -> Result<bool> {
    let alpha = cx
        .alpha
        .as_ref()
        .ok_or_else(|| param("flow counterexample without time changes"))?;
    alpha.validate()?;
    if alpha.guide_index != cx.guide_index {
        return Err(ExpansivityError::Structural(
            "guide index disagrees with the time changes".into(),
        ));
    }
    let sup = sup_diameter(flow, &cx.arc, alpha, cx.window, dt, delta)?;
    let excess = tube_excess(flow, &cx.arc, cx.guide_index, eps)?;
    Ok(sup < delta && excess > cx.arc.mesh())
}

/// Seed arcs on the suspension: axis and eigen segments at dyadic lengths
/// and two heights, then a short flow segment.
pub fn suspension_seeds(samples: usize) -> Result<Vec<Seed<SuspensionPoint<TorusPoint>>>> {
    let dirs = [cat_unstable_dir(), cat_stable_dir(), (1.0, 0.0), (0.0, 1.0)];
    let anchors = [(0.31, 0.47), (0.62, 0.13)];
    let mut out = Vec::new();
    for &h in &[0.25, 0.5] {
        for &(x, y) in &anchors {
            for j in 4..=7 {
                let len = 0.5f64.powi(j);
                for &(dx, dy) in &dirs {
                    let p = TorusPoint::new(x, y);
                    let a = SuspensionPoint { base: p, height: h };
                    let b = SuspensionPoint {
                        base: p.offset(len * dx, len * dy),
                        height: h,
                    };
                    out.push(Seed::plain(seg(&a, &b, samples)?, 0));
                }
            }
        }
    }
    // along the flow: lies in the guide's orbit segment
    let p = TorusPoint::new(0.31, 0.47);
    let a = SuspensionPoint {
        base: p,
        height: 0.25,
    };
    let b = SuspensionPoint {
        base: p,
        height: 0.375,
    };
    out.push(Seed::plain(seg(&a, &b, samples)?, 0));
    Ok(out)
}

fn seg<P: Chart>(a: &P, b: &P, n: usize) -> Result<Arc<P>> {
    Arc::segment(a, b, n).map_err(|e| ExpansivityError::System(e.into()))
}

/// Arc X^{[0,1]}(x) with α(X^s x) = h_{1-s}; the guide is X^1(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointWitness<P> {
    pub arc: Arc<P>,
    pub alpha: ReparamFamily,
    pub x: P,
    pub sup_diameter: f64,
    pub window: f64,
}

pub const WITNESS_SAMPLES: usize = 65;

/// Fixed-point construction at `p` using the first candidate whose orbit
/// piece X^{[-3,3]}(x) stays in B(p, δ/2). The flow must fix `p`.
pub fn fixed_point_witness<F: Flow>(
    flow: &F,
    p: &F::State,
    candidates: &[F::State],
    delta: f64,
    window: f64,
    dt: f64,
) -> Result<FixedPointWitness<F::State>> {
    if !(delta > 0.0) {
        return Err(param("δ must be positive"));
    }
    const TOL: f64 = 1e-12;
    for k in -30..=30 {
        let q = flow.evolve(p, k as f64 * 0.1)?;
        if flow.state_distance(&q, p)? > TOL {
            return Err(ExpansivityError::NotApplicable(
                "the given point is not fixed".into(),
            ));
        }
    }
    'cand: for x in candidates {
        if flow.state_distance(x, p)? <= TOL {
            continue;
        }
        for k in -30..=30 {
            let q = flow.evolve(x, k as f64 * 0.1)?;
            if flow.state_distance(&q, p)? >= delta / 2.0 {
                continue 'cand;
            }
        }
        let n = WITNESS_SAMPLES;
        let samples: Vec<F::State> = (0..n)
            .map(|i| flow.evolve(x, i as f64 / (n - 1) as f64))
            .collect::<std::result::Result<_, _>>()?;
        let arc = Arc::new(samples).map_err(|e| ExpansivityError::System(e.into()))?;
        let h = fixed_point_h();
        let changes = (0..n)
            .map(|i| h.blend(1.0 - i as f64 / (n - 1) as f64))
            .collect();
        let alpha = ReparamFamily {
            changes,
            guide_index: n - 1,
        };
        let sup = sup_diameter(flow, &arc, &alpha, window, dt, f64::INFINITY)?;
        if sup < delta {
            return Ok(FixedPointWitness {
                arc,
                alpha,
                x: x.clone(),
                sup_diameter: sup,
                window,
            });
        }
    }
    Err(ExpansivityError::NotApplicable(format!(
        "no candidate orbit stays within δ/2 = {} of the fixed point",
        delta / 2.0
    )))
}

/// Candidates p ± δ·10^{-j} for the interval flow.
pub fn interval_candidates(p: f64, delta: f64) -> Vec<IntervalPoint> {
    let mut out = Vec::new();
    for j in 1..=12 {
        let s = delta * 10f64.powi(-j);
        for x in [p + s, p - s] {
            if let Ok(q) = IntervalPoint::new(x) {
                out.push(q);
            }
        }
    }
    out
}

/// Seeds for the interval flow: the fixed-point witness near 0 first, then
/// short segments near each fixed point and in the middle.
pub fn interval_seeds(delta: f64, window: f64, dt: f64) -> Result<Vec<Seed<IntervalPoint>>> {
    let mut out = Vec::new();
    let zero = IntervalPoint { x: 0.0 };
    if let Ok(w) = fixed_point_witness(
        &IntervalFlow,
        &zero,
        &interval_candidates(0.0, delta),
        delta,
        window,
        dt,
    ) {
        out.push(Seed {
            guide: w.alpha.guide_index,
            arc: w.arc,
            alpha: Some(w.alpha),
        });
    }
    for (a, b) in [(0.001, 0.002), (0.4, 0.45), (0.998, 0.999)] {
        out.push(Seed::plain(
            seg(&IntervalPoint { x: a }, &IntervalPoint { x: b }, 9)?,
            0,
        ));
    }
    Ok(out)
}

/// Sequences β(x)_i = α(x)(t_i) on a uniform grid t_i = i·step, with step
/// chosen so every per-sample increment is below δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteReparam {
    pub step: f64,
    /// Grid indices run from -`back` to `forward`; entry `back` is index 0.
    pub back: usize,
    pub forward: usize,
    pub sequences: Vec<Vec<f64>>,
    pub guide_index: usize,
}

impl DiscreteReparam {
    pub fn at(&self, sample: usize, i: i64) -> Option<f64> {
        let k = i + self.back as i64;
        if k < 0 {
            return None;
        }
        self.sequences.get(sample)?.get(k as usize).copied()
    }

    pub fn max_increment(&self) -> f64 {
        self.sequences
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (w[1] - w[0]).abs()))
            .fold(0.0, f64::max)
    }
}

/// Grid pushed through α over [-range, range].
pub fn alpha_to_beta<P: Chart>(
    a: &Arc<P>,
    alpha: &ReparamFamily,
    delta: f64,
    range: f64,
) -> Result<DiscreteReparam> {
    if !(delta > 0.0) {
        return Err(param("δ must be positive"));
    }
    if alpha.changes.len() != a.len() {
        return Err(ExpansivityError::Structural(format!(
            "{} time changes for {} samples",
            alpha.changes.len(),
            a.len()
        )));
    }
    alpha.validate()?;
    let step = 0.8 * delta / alpha.max_slope();
    let count = (range / step).floor() as usize;
    if count == 0 {
        return Err(ExpansivityError::RangeExhausted(format!(
            "grid step {step} does not fit in the stored range {range}"
        )));
    }
    let sequences = alpha
        .changes
        .iter()
        .map(|h| {
            (-(count as i64)..=count as i64)
                .map(|i| h.eval(i as f64 * step))
                .collect()
        })
        .collect();
    Ok(DiscreteReparam {
        step,
        back: count,
        forward: count,
        sequences,
        guide_index: alpha.guide_index,
    })
}

/// Searches torus seeds and their halves for a nondegenerate arc whose
/// iterates f^n, |n| ≤ n_max, all have sampled diameter below δ.
pub fn discrete_cw_check(
    map: &BaseMap,
    delta: f64,
    n_max: usize,
    seeds: &[Arc<TorusPoint>],
) -> Result<CwVerdict<TorusPoint>> {
    if !map.acts_on_torus() {
        return Err(ExpansivityError::Unsupported(format!(
            "{} acts on symbol windows; sampled arcs need a torus map",
            map.name()
        )));
    }
    if !(delta > 0.0) {
        return Err(param("δ must be positive"));
    }
    let census = Census {
        seeds: seeds.len(),
        perturbations_per_seed: 3,
        window: n_max as f64,
        dt: 1.0,
    };
    let mut used = 0;
    for (si, seed) in seeds.iter().enumerate() {
        let mid = seed.len() / 2;
        for r in [1.0, 0.5, 0.25] {
            used += 1;
            let arc = if r == 1.0 {
                seed.clone()
            } else {
                seed.sub_arc(r, mid)
                    .map_err(|e| ExpansivityError::System(e.into()))?
            };
            if arc.diameter() == 0.0 {
                continue;
            }
            let sup = discrete_sup(map, &arc, n_max, delta)?;
            if sup < delta {
                return Ok(CwVerdict {
                    outcome: Outcome::Counterexample,
                    delta,
                    eps: 0.0,
                    budget_used: used,
                    census,
                    counterexample: Some(Counterexample {
                        guide_index: arc.len() / 2,
                        tube_excess: arc.diameter(),
                        arc,
                        alpha: None,
                        sup_diameter: sup,
                        window: n_max as f64,
                        seed: si,
                    }),
                });
            }
        }
    }
    Ok(CwVerdict {
        outcome: Outcome::NoCounterexample,
        delta,
        eps: 0.0,
        budget_used: used,
        census,
        counterexample: None,
    })
}

fn discrete_sup(map: &BaseMap, arc: &Arc<TorusPoint>, n_max: usize, cap: f64) -> Result<f64> {
    let mut sup = 0.0f64;
    for dir in [1i64, -1] {
        let mut pts = arc.samples().to_vec();
        sup = sup.max(arc.diameter());
        for _ in 0..n_max {
            for p in pts.iter_mut() {
                *p = TorusPoint::iterate(map, p, dir)?;
            }
            let d = sample_diameter(&pts);
            sup = sup.max(d);
            if sup >= cap {
                return Ok(sup);
            }
        }
    }
    Ok(sup)
}

fn sample_diameter(pts: &[TorusPoint]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(pts[i].dist(&pts[j]));
        }
    }
    d
}

/// Re-checks a discrete counterexample.
pub fn reverify_discrete(
    map: &BaseMap,
    cx: &Counterexample<TorusPoint>,
    delta: f64,
) -> Result<bool> {
    let n = cx.window as usize;
    Ok(cx.arc.diameter() > 0.0 && discrete_sup(map, &cx.arc, n, delta)? < delta)
}

/// Lipschitz constants of a chart change and of its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusBounds {
    pub forward: f64,
    pub inverse: f64,
}

impl ModulusBounds {
    pub fn of(h: &ChartChange) -> Self {
        ModulusBounds {
            forward: h.lipschitz(),
            inverse: h.inverse_lipschitz(),
        }
    }
}

/// Points a chart change acts on.
pub trait Transport: Sized {
    fn transport(&self, h: &ChartChange) -> Self;
}

impl Transport for TorusPoint {
    fn transport(&self, h: &ChartChange) -> Self {
        h.apply(self)
    }
}

impl Transport for SuspensionPoint<TorusPoint> {
    fn transport(&self, h: &ChartChange) -> Self {
        SuspensionPoint {
            base: h.apply(&self.base),
            height: self.height,
        }
    }
}

/// Carries a verdict to the conjugated system: the arc maps pointwise, time
/// changes are kept, and δ scales by the forward bound for counterexamples
/// or by the inverse bound otherwise.
pub fn conjugacy_transport<P: Transport + Chart + Clone>(
    verdict: &CwVerdict<P>,
    h: &ChartChange,
    bounds: Option<ModulusBounds>,
) -> Result<CwVerdict<P>> {
    let b =
        bounds.ok_or_else(|| param("conjugacy transport needs modulus-of-continuity bounds"))?;
    if !(b.forward >= 1.0 && b.inverse >= 1.0) && *h != ChartChange::Identity {
        return Err(param(
            "Lipschitz bounds of a homeomorphism of the torus are at least 1",
        ));
    }
    let mut out = verdict.clone();
    match &verdict.counterexample {
        Some(cx) => {
            let pts: Vec<P> = cx.arc.samples().iter().map(|p| p.transport(h)).collect();
            let arc = Arc::new(pts).map_err(|e| ExpansivityError::System(e.into()))?;
            out.delta = verdict.delta * b.forward;
            out.counterexample = Some(Counterexample {
                arc,
                sup_diameter: cx.sup_diameter * b.forward,
                ..cx.clone()
            });
        }
        None => out.delta = verdict.delta / b.inverse,
    }
    Ok(out)
}
