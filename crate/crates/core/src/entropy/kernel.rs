//! Greedy scan-and-keep over a fixed lattice.
//!
//! Two lattice points are *close* when every check of a [`Profile`] is below
//! γ. A point is kept when no earlier kept point is close to it. The kept set
//! is γ-separated and, being maximal, also γ-spanning, so the span and sep
//! counts at one γ come from the same scan.
//!
//! Kept points are indexed in a flat bucket table keyed by their cells at two
//! profile steps; closeness at those steps forces adjacent cells.

use crate::sections::{SectionBase, SectionFamilyPair};
use crate::spaces::{SymbolWord, TorusPoint};
use crate::systems::{BaseMap, SystemError};

/// One closeness check: (1-w)·d(x_i, e_i) + w·d(x_{i+1}, e_{i+1}) < γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub step: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub checks: Vec<Check>,
    /// Pure steps used for bucketing; `None` scans one bucket.
    pub key_steps: Option<(usize, usize)>,
    /// Require each trajectory to stay in the other's S patches.
    pub membership: bool,
}

impl Profile {
    /// Pure steps 0..=n with patch membership.
    pub fn section(n: usize) -> Self {
        Profile {
            checks: (0..=n)
                .rev()
                .map(|i| Check {
                    step: i,
                    weight: 0.0,
                })
                .collect(),
            key_steps: Some((0, n)),
            membership: true,
        }
    }

    /// Sup over s ∈ [0,t] of the level distance for two points at height h.
    /// The level distance is affine between floor crossings, so the sup is
    /// attained at s = 0, at each crossing, or at s = t.
    pub fn bowen(h: f64, t: f64) -> Self {
        let top = h + t;
        let k_last = top.floor() as usize;
        let frac = top - top.floor();
        let mut checks = vec![Check { step: 0, weight: h }];
        for k in 1..=k_last {
            checks.push(Check {
                step: k,
                weight: 0.0,
            });
        }
        if frac > 0.0 {
            checks.push(Check {
                step: k_last,
                weight: frac,
            });
        }
        let pure: Vec<usize> = checks
            .iter()
            .filter(|c| c.weight == 0.0)
            .map(|c| c.step)
            .collect();
        let key_steps = match (pure.first(), pure.last()) {
            (Some(&a), Some(&b)) => Some((a, b)),
            _ => None,
        };
        checks.reverse();
        Profile {
            checks,
            key_steps,
            membership: false,
        }
    }

    pub fn horizon(&self) -> usize {
        self.checks
            .iter()
            .map(|c| if c.weight > 0.0 { c.step + 1 } else { c.step })
            .max()
            .unwrap_or(0)
    }
}

/// Base kinds the kernel can bucket.
pub trait KernelBase: SectionBase {
    /// Number of distinct cell keys at scale γ.
    fn key_space(gamma: f64) -> usize;
    fn key(p: &Self, gamma: f64) -> usize;
    /// Keys of cells that may hold a point within γ of a point in `key`,
    /// starting with `key` itself.
    fn neighbours(key: usize, gamma: f64, out: &mut Vec<usize>);
}

fn torus_cells(gamma: f64) -> usize {
    ((1.0 / gamma).floor() as usize).clamp(1, 48)
}

impl KernelBase for TorusPoint {
    fn key_space(gamma: f64) -> usize {
        let m = torus_cells(gamma);
        m * m
    }

    fn key(p: &Self, gamma: f64) -> usize {
        let m = torus_cells(gamma);
        let cx = ((p.x * m as f64) as usize).min(m - 1);
        let cy = ((p.y * m as f64) as usize).min(m - 1);
        cx * m + cy
    }

    fn neighbours(key: usize, gamma: f64, out: &mut Vec<usize>) {
        let m = torus_cells(gamma) as i64;
        out.clear();
        out.push(key);
        let (cx, cy) = ((key as i64) / m, (key as i64) % m);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let k = ((cx + dx).rem_euclid(m) * m + (cy + dy).rem_euclid(m)) as usize;
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
    }
}

/// Central half-width fixed by closeness at scale γ, capped to keep the key
/// space small.
fn word_radius(gamma: f64) -> usize {
    let mut r = 0usize;
    while 0.5f64.powi(r as i32 + 1) >= gamma && r < 4 {
        r += 1;
    }
    r
}

impl KernelBase for SymbolWord {
    fn key_space(gamma: f64) -> usize {
        // binary keys; larger alphabets fold into the same range
        1 << (2 * word_radius(gamma) + 1)
    }

    fn key(p: &Self, gamma: f64) -> usize {
        let r = word_radius(gamma) as i64;
        let mut key = 0usize;
        for i in -r..=r {
            key = (key << 1) | (p.get(i).unwrap_or(0) as usize & 1);
        }
        key
    }

    fn neighbours(key: usize, _gamma: f64, out: &mut Vec<usize>) {
        out.clear();
        out.push(key);
    }
}

const EMPTY: u32 = u32::MAX;

struct Buckets {
    space: usize,
    heads: Vec<u32>,
    next: Vec<u32>,
    members: Vec<u32>,
}

impl Buckets {
    fn new(space: usize) -> Self {
        Buckets {
            space,
            heads: vec![EMPTY; space * space],
            next: Vec::new(),
            members: Vec::new(),
        }
    }

    fn insert(&mut self, k0: usize, k1: usize, lattice_index: usize) {
        let slot = k0 * self.space + k1;
        self.next.push(self.heads[slot]);
        self.members.push(lattice_index as u32);
        self.heads[slot] = (self.members.len() - 1) as u32;
    }
}

fn trajectory<P: KernelBase>(
    map: &BaseMap,
    p: &P,
    horizon: usize,
    out: &mut Vec<P>,
) -> Result<(), SystemError> {
    out.clear();
    out.push(p.clone());
    for _ in 0..horizon {
        let q = P::iterate(map, out.last().unwrap(), 1)?;
        out.push(q);
    }
    Ok(())
}

fn close<P: KernelBase>(
    a: &[P],
    b: &[P],
    profile: &Profile,
    gamma: f64,
    pair: Option<&SectionFamilyPair>,
) -> bool {
    for c in &profile.checks {
        let d0 = a[c.step].dist(&b[c.step]);
        let v = if c.weight > 0.0 {
            (1.0 - c.weight) * d0 + c.weight * a[c.step + 1].dist(&b[c.step + 1])
        } else {
            d0
        };
        if v >= gamma {
            return false;
        }
    }
    if let (true, Some(pair)) = (profile.membership, pair) {
        for c in &profile.checks {
            let (x, e) = (&a[c.step], &b[c.step]);
            let ok = pair.t_cell(x).map_or(false, |i| pair.in_s(e, i))
                && pair.t_cell(e).map_or(false, |i| pair.in_s(x, i));
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Greedy count over `lattice` in index order. Returns the kept indices.
pub fn greedy_keep<P: KernelBase>(
    map: &BaseMap,
    lattice: &[P],
    profile: &Profile,
    gamma: f64,
    pair: Option<&SectionFamilyPair>,
) -> Result<Vec<usize>, SystemError> {
    let horizon = profile.horizon();
    let (space, steps) = match profile.key_steps {
        Some(s) => (P::key_space(gamma), Some(s)),
        None => (1, None),
    };
    let mut buckets = Buckets::new(space);
    let stride = horizon + 1;
    // trajectories of kept points, `stride` entries each, in bucket-member order
    let mut kept_traj: Vec<P> = Vec::new();
    let mut tx = Vec::with_capacity(stride);
    let (mut n0, mut n1) = (Vec::with_capacity(9), Vec::with_capacity(9));
    let mut kept = Vec::new();
    for (idx, x) in lattice.iter().enumerate() {
        trajectory(map, x, horizon, &mut tx)?;
        let (k0, k1) = match steps {
            Some((a, b)) => (P::key(&tx[a], gamma), P::key(&tx[b], gamma)),
            None => (0, 0),
        };
        if steps.is_some() {
            P::neighbours(k0, gamma, &mut n0);
            P::neighbours(k1, gamma, &mut n1);
        } else {
            n0.clear();
            n0.push(0);
            n1.clear();
            n1.push(0);
        }
        let mut covered = false;
        'scan: for &a in &n0 {
            for &b in &n1 {
                let mut cur = buckets.heads[a * space + b];
                while cur != EMPTY {
                    let m = cur as usize;
                    if close(
                        &tx,
                        &kept_traj[m * stride..(m + 1) * stride],
                        profile,
                        gamma,
                        pair,
                    ) {
                        covered = true;
                        break 'scan;
                    }
                    cur = buckets.next[m];
                }
            }
        }
        if !covered {
            buckets.insert(k0, k1, idx);
            kept_traj.extend(tx.drain(..));
            kept.push(idx);
        }
    }
    Ok(kept)
}

pub fn greedy_count<P: KernelBase>(
    map: &BaseMap,
    lattice: &[P],
    profile: &Profile,
    gamma: f64,
    pair: Option<&SectionFamilyPair>,
) -> Result<usize, SystemError> {
    Ok(greedy_keep(map, lattice, profile, gamma, pair)?.len())
}

/// Pairwise closeness without bucketing; reference for tests and small lattices.
pub fn is_close<P: KernelBase>(
    map: &BaseMap,
    a: &P,
    b: &P,
    profile: &Profile,
    gamma: f64,
    pair: Option<&SectionFamilyPair>,
) -> Result<bool, SystemError> {
    let h = profile.horizon();
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    trajectory(map, a, h, &mut ta)?;
    trajectory(map, b, h, &mut tb)?;
    Ok(close(&ta, &tb, profile, gamma, pair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Metric;
    use crate::systems::{suspension_distance, SuspensionPoint};
    use proptest::prelude::*;

    fn lattice(g: usize) -> Vec<TorusPoint> {
        let mut v = Vec::new();
        for i in 0..g {
            for j in 0..g {
                v.push(TorusPoint::new(
                    (i as f64 + 0.5) / g as f64,
                    (j as f64 + 0.5) / g as f64,
                ));
            }
        }
        v
    }

    fn brute_force_keep(lat: &[TorusPoint], profile: &Profile, gamma: f64) -> usize {
        let mut kept: Vec<&TorusPoint> = Vec::new();
        for x in lat {
            if !kept
                .iter()
                .any(|e| is_close(&BaseMap::Cat, x, *e, profile, gamma, None).unwrap())
            {
                kept.push(x);
            }
        }
        kept.len()
    }

    #[test]
    fn bucketed_scan_matches_brute_force() {
        let lat = lattice(40);
        for (n, gamma) in [(0, 0.1), (2, 0.1), (3, 0.05), (4, 0.2)] {
            let prof = Profile {
                membership: false,
                ..Profile::section(n)
            };
            let fast = greedy_count(&BaseMap::Cat, &lat, &prof, gamma, None).unwrap();
            assert_eq!(
                fast,
                brute_force_keep(&lat, &prof, gamma),
                "n={n} γ={gamma}"
            );
        }
        let prof = Profile::bowen(0.5, 2.0);
        let fast = greedy_count(&BaseMap::Cat, &lat, &prof, 0.1, None).unwrap();
        assert_eq!(fast, brute_force_keep(&lat, &prof, 0.1));
    }

    #[test]
    fn bowen_profile_shape() {
        let p = Profile::bowen(0.5, 2.0);
        let mut steps: Vec<(usize, f64)> = p.checks.iter().map(|c| (c.step, c.weight)).collect();
        steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(steps, vec![(0, 0.5), (1, 0.0), (2, 0.0), (2, 0.5)]);
        assert_eq!(p.key_steps, Some((1, 2)));
        assert_eq!(p.horizon(), 3);
        let q = Profile::bowen(0.0, 3.0);
        assert_eq!(q.key_steps, Some((0, 3)));
        assert_eq!(q.horizon(), 3);
    }

    #[test]
    fn one_point_spans_everything_at_large_scale() {
        let lat = lattice(10);
        assert_eq!(
            greedy_count(&BaseMap::Cat, &lat, &Profile::bowen(0.0, 0.01), 1.0, None).unwrap(),
            1
        );
    }

    proptest! {
        // the bowen check value at s = 0 is the chain distance of the two lifted points
        #[test]
        fn level_check_matches_chain_metric(x in 0.0..1.0f64, y in 0.0..1.0f64, dx in -0.02..0.02f64, dy in -0.02..0.02f64, h in 0.0..0.99f64) {
            let f = BaseMap::Cat;
            let a = TorusPoint::new(x, y);
            let b = a.offset(dx, dy);
            let fa = TorusPoint::iterate(&f, &a, 1).unwrap();
            let fb = TorusPoint::iterate(&f, &b, 1).unwrap();
            let level = (1.0 - h) * a.dist(&b) + h * fa.dist(&fb);
            let chain = suspension_distance(&f, &SuspensionPoint { base: a, height: h }, &SuspensionPoint { base: b, height: h }).unwrap();
            prop_assert!((level - chain).abs() < 1e-12);
        }
    }

    use crate::systems::BaseSpace;
}
