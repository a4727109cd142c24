//! Unstable continua and the binary tree of separated points.
//!
//! Everything here works on torus arcs lying on the floor slice and uses
//! [`return_continuum`] for the return images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EntropyError;
use crate::sections::{
    dyadic_floor, return_continuum, shadow_sequence, ContinuumReturn, OrbitStatus,
    SectionFamilyPair, TripleFamilies,
};
use crate::spaces::{sub_arc, Arc, Metric, TorusPoint};
use crate::systems::{cat_stable_dir, cat_unstable_dir, BaseSpace, SuspensionPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub delta0: f64,
    pub witness_min: f64,
    pub window_hits: usize,
    pub trials: usize,
}

fn frac(v: f64) -> f64 {
    v - v.floor()
}

fn trial_arc(pair: &SectionFamilyPair, i: usize) -> Arc<TorusPoint> {
    let g1 = 0.754_877_666_246_692_8;
    let g2 = 0.569_840_290_998_053_2;
    let anchor = TorusPoint::new(frac(0.1 + i as f64 * g1), frac(0.3 + i as f64 * g2));
    let dirs = [
        cat_unstable_dir(),
        (1.0, 0.0),
        (0.0, 1.0),
        (0.5f64.sqrt(), 0.5f64.sqrt()),
    ];
    let (dx, dy) = dirs[i % dirs.len()];
    let len = pair.eps0 / 2.0 * (0.05 + 0.9 * frac(0.37 + i as f64 * 0.618_033_988_749_894_8));
    Arc::segment(&anchor, &anchor.offset(len * dx, len * dy), 9).expect("segment of 9 samples")
}

/// Lower bound for terminal diameters of arcs whose running sup of return
/// diameters enters [ε₀, 2ε₀]. Every n ≥ 1 of every trial whose sup over
/// steps 1..=n lies in the window contributes its step-n diameter.
pub fn calibrate_delta0(
    pair: &SectionFamilyPair,
    eps0: f64,
    trials: usize,
) -> Result<Calibration, EntropyError> {
    if !(eps0 > 0.0 && eps0 <= pair.eps0 / 2.0) {
        return Err(EntropyError::Parameter(format!(
            "ε₀ = {eps0} must lie in (0, {}]",
            pair.eps0 / 2.0
        )));
    }
    let mut hits = 0;
    let mut min_terminal = f64::INFINITY;
    for i in 0..trials {
        let arc = trial_arc(pair, i);
        let r = return_continuum(pair, &arc, 0, 32)?;
        let ds = r.diameters();
        let mut sup = 0.0f64;
        for &d in &ds[1..] {
            sup = sup.max(d);
            if sup >= eps0 && sup <= 2.0 * eps0 {
                hits += 1;
                min_terminal = min_terminal.min(d);
            }
        }
    }
    if hits == 0 {
        return Err(EntropyError::Inconclusive(format!(
            "no trial of {trials} reached the window [ε₀, 2ε₀]"
        )));
    }
    Ok(Calibration {
        delta0: dyadic_floor(min_terminal).min(eps0),
        witness_min: min_terminal,
        window_hits: hits,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub arc: Arc<TorusPoint>,
    pub anchor: usize,
    pub r: f64,
    pub terminal: f64,
    pub steps: usize,
    /// φ^N of the returned arc.
    pub image: Arc<TorusPoint>,
    pub image_anchor: usize,
}

enum Probe {
    Below(f64),
    Above,
    Hit(f64, Arc<TorusPoint>, usize),
}

fn anchor_in(sub: &Arc<TorusPoint>, p: &TorusPoint) -> usize {
    sub.samples()
        .iter()
        .position(|q| q.dist(p) == 0.0)
        .unwrap_or(0)
}

/// Bisection over nested sub-arcs around `anchor` for a sub-arc whose N-th
/// return has diameter `target` (relative tolerance `tol`) while every
/// earlier return stays at most `eps0`.
pub fn growth_split(
    pair: &SectionFamilyPair,
    a: &Arc<TorusPoint>,
    anchor: usize,
    n: usize,
    target: f64,
    eps0: f64,
) -> Result<SplitResult, EntropyError> {
    const TOL: f64 = 1e-6;
    const MAX_STEPS: usize = 40;
    if n == 0 {
        return Err(EntropyError::Parameter(
            "split needs at least one return".into(),
        ));
    }
    let anchor_pt = *a
        .samples()
        .get(anchor)
        .ok_or_else(|| EntropyError::Parameter(format!("anchor {anchor} out of range")))?;
    let probe = |r: f64| -> Result<(Probe, Arc<TorusPoint>, usize), EntropyError> {
        let sub = sub_arc(a, r, anchor).map_err(crate::systems::SystemError::from)?;
        let idx = anchor_in(&sub, &anchor_pt);
        let p = match return_continuum(pair, &sub, idx, n as i64)? {
            ContinuumReturn::Overflow { .. } => Probe::Above,
            ContinuumReturn::Complete {
                arc,
                anchor,
                diameters,
            } => {
                let inter = diameters[1..n].iter().cloned().fold(0.0, f64::max);
                let term = diameters[n];
                if inter > eps0 || term > target * (1.0 + TOL) {
                    Probe::Above
                } else if term < target * (1.0 - TOL) {
                    Probe::Below(term)
                } else {
                    Probe::Hit(term, arc, anchor)
                }
            }
        };
        Ok((p, sub, idx))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    match probe(1.0)? {
        (Probe::Hit(term, image, ia), arc, idx) => {
            return Ok(SplitResult {
                arc,
                anchor: idx,
                r: 1.0,
                terminal: term,
                steps: 0,
                image,
                image_anchor: ia,
            })
        }
        (Probe::Below(term), _, _) => {
            return Err(EntropyError::SplitFailure(format!(
                "whole arc only reaches {term} after {n} returns, below the target {target}"
            )))
        }
        (Probe::Above, _, _) => {}
    }
    for step in 1..=MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            (Probe::Hit(term, image, ia), arc, idx) => {
                return Ok(SplitResult {
                    arc,
                    anchor: idx,
                    r: mid,
                    terminal: term,
                    steps: step,
                    image,
                    image_anchor: ia,
                })
            }
            (Probe::Below(_), _, _) => lo = mid,
            (Probe::Above, _, _) => hi = mid,
        }
    }
    Err(EntropyError::SplitFailure(format!(
        "no bracket closed within {MAX_STEPS} steps (r in [{lo}, {hi}], target {target})"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableContinuum {
    pub arc: Arc<TorusPoint>,
    pub anchor: usize,
    pub seed: usize,
    pub power: usize,
    pub backward: Vec<f64>,
}

/// Seeds on the floor: short segments along the unstable, stable and
/// coordinate directions from a few anchors.
pub fn default_seeds(pair: &SectionFamilyPair) -> Vec<(Arc<TorusPoint>, usize)> {
    let len = pair.eps0 / 4.0;
    let anchors = [(0.31, 0.47), (0.62, 0.13), (0.05, 0.81), (0.77, 0.58)];
    let dirs = [cat_unstable_dir(), (1.0, 0.0), (0.0, 1.0), cat_stable_dir()];
    let mut out = Vec::new();
    for (dx, dy) in dirs {
        for &(x, y) in &anchors {
            let a = TorusPoint::new(x, y);
            out.push((
                Arc::segment(&a, &a.offset(len * dx, len * dy), 9).expect("9 samples"),
                0,
            ));
        }
    }
    out
}

/// Search seeds for an arc of diameter `delta0` (an N-th return of a sub-arc
/// of the seed) whose backward returns stay below `eps0` for `n_max` steps.
pub fn find_unstable_continuum(
    pair: &SectionFamilyPair,
    seeds: &[(Arc<TorusPoint>, usize)],
    delta0: f64,
    eps0: f64,
    n_max: usize,
) -> Result<UnstableContinuum, EntropyError> {
    const MAX_POWER: i64 = 40;
    let mut collapsed = 0;
    for (si, (seed, anchor)) in seeds.iter().enumerate() {
        // a seed already at the target size shows no growth
        if seed.diameter() >= delta0 {
            continue;
        }
        let trace = return_continuum(pair, seed, *anchor, MAX_POWER)?;
        let ds = trace.diameters();
        let power = match &trace {
            ContinuumReturn::Overflow { step, .. } => {
                (1..*step).find(|&n| ds[n] >= delta0).unwrap_or(*step)
            }
            ContinuumReturn::Complete { .. } => match (1..ds.len()).find(|&n| ds[n] >= delta0) {
                Some(n) => n,
                None => {
                    collapsed += 1;
                    continue;
                }
            },
        };
        let Ok(split) = growth_split(pair, seed, *anchor, power, delta0, eps0) else {
            continue;
        };
        let back = return_continuum(pair, &split.image, split.image_anchor, -(n_max as i64))?;
        if let ContinuumReturn::Complete { diameters, .. } = back {
            if diameters.iter().all(|&d| d < eps0) {
                return Ok(UnstableContinuum {
                    arc: split.image,
                    anchor: split.image_anchor,
                    seed: si,
                    power,
                    backward: diameters,
                });
            }
        }
    }
    Err(EntropyError::NotFound(format!(
        "{} seeds tried, {collapsed} never reached diameter {delta0}",
        seeds.len()
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessNode {
    pub path: String,
    pub anchor: TorusPoint,
    pub ends: (TorusPoint, TorusPoint),
    pub diameter: f64,
    pub samples: usize,
    /// Diameter of the N-th return of the split sub-arc (internal nodes).
    pub image_diameter: Option<f64>,
    /// Distance between the two children (internal nodes).
    pub children_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessLeaf {
    pub path: String,
    pub point: TorusPoint,
    /// Orbit c(j) = f^j(point) for j = 0..=m·N·hop.
    pub chain: Vec<TorusPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessTree {
    pub m: usize,
    pub power: usize,
    pub delta1: f64,
    pub hop: usize,
    pub target: f64,
    pub nodes: Vec<WitnessNode>,
    pub leaves: Vec<WitnessLeaf>,
}

struct Live {
    path: String,
    arc: Arc<TorusPoint>,
    anchor: usize,
}

/// Sub-arc around `anchor` whose diameter is `target` within the arc's mesh.
fn shrink_to(
    a: &Arc<TorusPoint>,
    anchor: usize,
    target: f64,
) -> Result<Arc<TorusPoint>, EntropyError> {
    if a.diameter() < target {
        return Err(EntropyError::Parameter(format!(
            "arc diameter {} is below the requested {target}",
            a.diameter()
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = sub_arc(a, 0.0, anchor).map_err(crate::systems::SystemError::from)?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let s = sub_arc(a, mid, anchor).map_err(crate::systems::SystemError::from)?;
        let d = s.diameter();
        if d <= target {
            lo = mid;
            best = s;
            if target - d <= 1e-9 * target {
                break;
            }
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

fn gap(a: &Arc<TorusPoint>, b: &Arc<TorusPoint>) -> f64 {
    let mut best = f64::INFINITY;
    for p in a.samples() {
        for q in b.samples() {
            best = best.min(p.dist(q));
        }
    }
    best
}

/// Depth-`m` binary tree: each node's sub-arc is grown by `power` returns of
/// the first pair to diameter 0.9·ε₀, and two end pieces of diameter δ₁/3
/// become its children.
pub fn build_witness_tree(
    triple: &TripleFamilies,
    root: &Arc<TorusPoint>,
    root_anchor: usize,
    m: usize,
    power: usize,
    delta1: f64,
) -> Result<WitnessTree, EntropyError> {
    let pair = &triple.first;
    let third = delta1 / 3.0;
    let target = 0.9 * pair.eps0;
    let hop = triple.hop_bound();
    if hop == 0 {
        return Err(EntropyError::Parameter("hop bound is zero".into()));
    }
    if !(delta1 > 0.0 && delta1 <= target) {
        return Err(EntropyError::Parameter(format!(
            "δ₁ = {delta1} must lie in (0, {target}] so two δ₁/3 pieces fit δ₁/3 apart"
        )));
    }
    if power == 0 {
        return Err(EntropyError::Parameter("power N must be positive".into()));
    }
    let rd = root.diameter();
    if (rd - third).abs() > 0.01 * third {
        return Err(EntropyError::Parameter(format!(
            "root diameter {rd} is not δ₁/3 = {third}"
        )));
    }
    let returns = power * hop;
    let mut nodes = Vec::new();
    let mut level = vec![Live {
        path: String::new(),
        arc: root.clone(),
        anchor: root_anchor,
    }];
    for _depth in 0..m {
        let expanded: Result<Vec<(WitnessNode, [Live; 2])>, EntropyError> = level
            .par_iter()
            .map(|node| {
                let fail = |reason: String| EntropyError::Construction {
                    node: node.path.clone(),
                    reason,
                };
                let split = growth_split(pair, &node.arc, node.anchor, returns, target, pair.eps0)
                    .map_err(|e| fail(e.to_string()))?;
                let img = &split.image;
                let last = img.len() - 1;
                let c0 = shrink_to(img, 0, third).map_err(|e| fail(e.to_string()))?;
                let c1 = shrink_to(img, last, third).map_err(|e| fail(e.to_string()))?;
                let g = gap(&c0, &c1);
                if g < third {
                    return Err(fail(format!(
                        "children only {g} apart (image diameter {}), need {third}",
                        img.diameter()
                    )));
                }
                let c1_anchor = c1.len() - 1;
                let info = WitnessNode {
                    path: node.path.clone(),
                    anchor: node.arc.samples()[node.anchor],
                    ends: (node.arc.samples()[0], *node.arc.samples().last().unwrap()),
                    diameter: node.arc.diameter(),
                    samples: node.arc.len(),
                    image_diameter: Some(img.diameter()),
                    children_gap: Some(g),
                };
                Ok((
                    info,
                    [
                        Live {
                            path: format!("{}0", node.path),
                            arc: c0,
                            anchor: 0,
                        },
                        Live {
                            path: format!("{}1", node.path),
                            arc: c1,
                            anchor: c1_anchor,
                        },
                    ],
                ))
            })
            .collect();
        let mut next = Vec::with_capacity(level.len() * 2);
        for (info, kids) in expanded? {
            nodes.push(info);
            next.extend(kids);
        }
        level = next;
    }
    let total = m * returns;
    let mut leaves = Vec::with_capacity(level.len());
    for node in &level {
        nodes.push(WitnessNode {
            path: node.path.clone(),
            anchor: node.arc.samples()[node.anchor],
            ends: (node.arc.samples()[0], *node.arc.samples().last().unwrap()),
            diameter: node.arc.diameter(),
            samples: node.arc.len(),
            image_diameter: None,
            children_gap: None,
        });
        let mid = node.arc.samples()[node.arc.len() / 2];
        let b = TorusPoint::iterate(&pair.map, &mid, -(total as i64))?;
        let mut chain = Vec::with_capacity(total + 1);
        chain.push(b);
        for _ in 0..total {
            chain.push(TorusPoint::iterate(&pair.map, chain.last().unwrap(), 1)?);
        }
        leaves.push(WitnessLeaf {
            path: node.path.clone(),
            point: b,
            chain,
        });
    }
    Ok(WitnessTree {
        m,
        power,
        delta1,
        hop,
        target,
        nodes,
        leaves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub first: usize,
    pub second: usize,
    pub expected_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub passed: bool,
    pub pairs_checked: usize,
    pub steps: usize,
    pub gamma: f64,
    pub lower_bound: f64,
    pub failure: Option<PairFailure>,
}

/// Separation of leaf `i` from leaf `j` relative to `pair` within `steps`
/// returns: the shadow is undefined or reaches γ somewhere.
fn separated(
    pair: &SectionFamilyPair,
    a: &TorusPoint,
    b: &TorusPoint,
    steps: usize,
    gamma: f64,
) -> Result<bool, EntropyError> {
    let x = SuspensionPoint {
        base: *a,
        height: 0.0,
    };
    let y = SuspensionPoint {
        base: *b,
        height: 0.0,
    };
    let orbit = match shadow_sequence(pair, &x, &y, steps as i64) {
        Ok(o) => o,
        Err(crate::sections::SectionError::Precondition(_)) => return Ok(true),
        Err(e) => return Err(e.into()),
    };
    if let OrbitStatus::DivergedAt(_) = orbit.status {
        return Ok(true);
    }
    let mut xi = *a;
    for e in &orbit.entries {
        if e.index > 0 {
            xi = TorusPoint::iterate(&pair.map, &xi, 1)?;
        }
        if xi.dist(&e.point.base) >= gamma {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn verify_separated(
    tree: &WitnessTree,
    pair: &SectionFamilyPair,
) -> Result<SeparationReport, EntropyError> {
    let steps = tree.m * tree.power * tree.hop;
    let gamma = tree.delta1 / 3.0;
    if gamma >= pair.eps0 {
        return Err(EntropyError::Parameter(format!(
            "γ = δ₁/3 = {gamma} is not below ε₀ = {}",
            pair.eps0
        )));
    }
    let n = tree.leaves.len();
    let failures: Result<Vec<Option<PairFailure>>, EntropyError> = (0..n)
        .into_par_iter()
        .map(|i| {
            for j in i + 1..n {
                let (a, b) = (&tree.leaves[i], &tree.leaves[j]);
                if !separated(pair, &a.point, &b.point, steps, gamma)? {
                    let common = a
                        .path
                        .chars()
                        .zip(b.path.chars())
                        .take_while(|(x, y)| x == y)
                        .count();
                    return Ok(Some(PairFailure {
                        first: i,
                        second: j,
                        expected_step: (common + 1) * tree.power * tree.hop,
                    }));
                }
            }
            Ok(None)
        })
        .collect();
    let failure = failures?.into_iter().flatten().next();
    let lower_bound = 2f64.ln() / (tree.power * tree.hop) as f64;
    Ok(SeparationReport {
        passed: failure.is_none(),
        pairs_checked: n * n.saturating_sub(1) / 2,
        steps,
        gamma,
        lower_bound: if failure.is_none() { lower_bound } else { 0.0 },
        failure,
    })
}
