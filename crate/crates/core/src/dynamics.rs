//! Piecewise-monotone self-maps of the unit interval.
//!
//! A [`PiecewiseMap`] is a finite (or, for the continued-fraction map,
//! countable) family of monotone branches with explicit inverses and inverse
//! derivatives. This module provides forward evaluation, orbits, exact set
//! preimages with truncation accounting, and the named builtin maps; the
//! transfer-operator action on densities lives in [`crate::transfer`].

use crate::error::{Error, Result};
use crate::interval_set::{Interval, IntervalSet, DEFAULT_COMPONENT_CAP};
use crate::measures::GridLayout;

/// One monotone branch: a closed domain and the formula family on it.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub domain: Interval,
    pub kind: BranchKind,
}

#[derive(Debug, Clone, Copy)]
pub enum BranchKind {
    /// `x -> slope * x + offset`
    Affine { slope: f64, offset: f64 },
    /// `x -> 4x(1-x)` on the left half; inverse `(1 - sqrt(1-y)) / 2`.
    LogisticLeft,
    /// `x -> 4x(1-x)` on the right half; inverse `(1 + sqrt(1-y)) / 2`.
    LogisticRight,
    /// Branch `k` of the continued-fraction map: `x -> 1/x - k` on
    /// `(1/(k+1), 1/k]`; inverse `1/(y + k)`.
    Reciprocal { k: u64 },
}

impl Branch {
    pub fn forward(&self, x: f64) -> f64 {
        match self.kind {
            BranchKind::Affine { slope, offset } => slope * x + offset,
            BranchKind::LogisticLeft | BranchKind::LogisticRight => 4.0 * x * (1.0 - x),
            BranchKind::Reciprocal { k } => 1.0 / x - k as f64,
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self.kind {
            BranchKind::Affine { slope, offset } => (y - offset) / slope,
            BranchKind::LogisticLeft => 0.5 * (1.0 - (1.0 - y).max(0.0).sqrt()),
            BranchKind::LogisticRight => 0.5 * (1.0 + (1.0 - y).max(0.0).sqrt()),
            BranchKind::Reciprocal { k } => 1.0 / (y + k as f64),
        }
    }

    /// `|g'(y)|` of the inverse branch; may be infinite at an image endpoint
    /// (logistic at `y = 1`).
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match self.kind {
            BranchKind::Affine { slope, .. } => 1.0 / slope.abs(),
            BranchKind::LogisticLeft | BranchKind::LogisticRight => {
                0.25 / (1.0 - y).max(0.0).sqrt()
            }
            BranchKind::Reciprocal { k } => {
                let d = y + k as f64;
                1.0 / (d * d)
            }
        }
    }

    pub fn increasing(&self) -> bool {
        match self.kind {
            BranchKind::Affine { slope, .. } => slope > 0.0,
            BranchKind::LogisticLeft => true,
            BranchKind::LogisticRight => false,
            BranchKind::Reciprocal { .. } => false,
        }
    }

    pub fn affine_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            BranchKind::Affine { slope, offset } => Some((slope, offset)),
            _ => None,
        }
    }

    /// Image interval `(lo, hi)` of the closed branch domain.
    pub fn image(&self) -> (f64, f64) {
        let a = self.forward(self.domain.lo());
        let b = self.forward(self.domain.hi());
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// Truncation policy for the countable branch family of the
/// continued-fraction map.
#[derive(Debug, Clone, Copy)]
pub struct GaussTruncation {
    /// Target bound on omitted preimage mass; branch enumeration stops once
    /// `1/(K+1)` drops below this, subject to the hard cap.
    pub eps_tail: f64,
    /// Hard cap on enumerated branches in geometric preimages.
    pub preimage_branch_cap: u64,
    /// Branches summed explicitly per transfer-operator evaluation; the rest
    /// are folded into an exact integral tail correction.
    pub transfer_branch_cap: u64,
}

impl Default for GaussTruncation {
    fn default() -> Self {
        GaussTruncation {
            eps_tail: 1e-8,
            preimage_branch_cap: 10_000,
            transfer_branch_cap: 128,
        }
    }
}

impl GaussTruncation {
    /// Number of branches geometric preimages enumerate under this policy.
    pub fn preimage_branches(&self) -> u64 {
        let from_eps = (1.0 / self.eps_tail).ceil() as u64;
        from_eps.min(self.preimage_branch_cap).max(1)
    }

    /// Branch `k` of the continued-fraction map (`k >= 1`).
    pub fn branch(&self, k: u64) -> Branch {
        Branch {
            domain: Interval::clamped(1.0 / (k as f64 + 1.0), 1.0 / k as f64),
            kind: BranchKind::Reciprocal { k },
        }
    }
}

#[derive(Debug, Clone)]
enum MapKind {
    Finite(Vec<Branch>),
    Gauss(GaussTruncation),
}

/// A piecewise-monotone self-map of `[0, 1]`.
///
/// Immutable after construction; evaluation at a branch junction uses the
/// left branch (junctions are null sets, so measure-level results never see
/// the choice).
#[derive(Debug, Clone)]
pub struct PiecewiseMap {
    name: String,
    kind: MapKind,
    dither_orbits: bool,
    component_cap: usize,
}

/// Result of an orbit computation. `degenerate_from` marks the first step at
/// which the orbit reached an excluded point (the continued-fraction map at
/// 0); from there on the orbit sits at the adjoined fixed point 0.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub points: Vec<f64>,
    pub degenerate_from: Option<usize>,
}

/// A set preimage along with the bound on omitted branch mass.
#[derive(Debug, Clone)]
pub struct Preimage {
    pub set: IntervalSet,
    pub tail_bound: f64,
}

impl PiecewiseMap {
    fn finite(name: &str, branches: Vec<Branch>, dither: bool) -> Self {
        debug_assert!(branches.windows(2).all(|w| w[0].domain.hi() <= w[1].domain.lo() + 1e-12));
        PiecewiseMap {
            name: name.into(),
            kind: MapKind::Finite(branches),
            dither_orbits: dither,
            component_cap: DEFAULT_COMPONENT_CAP,
        }
    }

    /// The named builtin maps. `baker` is accepted as an alias for `tent`.
    pub fn builtin(name: &str) -> Result<Self> {
        let iv = |a: f64, b: f64| Interval::clamped(a, b);
        match name.to_ascii_lowercase().as_str() {
            "tent" | "baker" => Ok(Self::finite(
                "tent",
                vec![
                    Branch { domain: iv(0.0, 0.5), kind: BranchKind::Affine { slope: 2.0, offset: 0.0 } },
                    Branch { domain: iv(0.5, 1.0), kind: BranchKind::Affine { slope: -2.0, offset: 2.0 } },
                ],
                true,
            )),
            "doubling" => Ok(Self::finite(
                "doubling",
                vec![
                    Branch { domain: iv(0.0, 0.5), kind: BranchKind::Affine { slope: 2.0, offset: 0.0 } },
                    Branch { domain: iv(0.5, 1.0), kind: BranchKind::Affine { slope: 2.0, offset: -1.0 } },
                ],
                true,
            )),
            "halving" => Ok(Self::finite(
                "halving",
                vec![Branch { domain: iv(0.0, 1.0), kind: BranchKind::Affine { slope: 0.5, offset: 0.0 } }],
                false,
            )),
            "logistic" => Ok(Self::finite(
                "logistic",
                vec![
                    Branch { domain: iv(0.0, 0.5), kind: BranchKind::LogisticLeft },
                    Branch { domain: iv(0.5, 1.0), kind: BranchKind::LogisticRight },
                ],
                false,
            )),
            "gauss" => Ok(PiecewiseMap {
                name: "gauss".into(),
                kind: MapKind::Gauss(GaussTruncation::default()),
                dither_orbits: false,
                component_cap: DEFAULT_COMPONENT_CAP,
            }),
            other => Err(Error::UnknownMap(other.to_string())),
        }
    }

    /// Builds a piecewise-affine map from a breakpoint table: one `x y` pair
    /// per line, `x` strictly increasing from 0 to 1, `y` in `[0, 1]`, no
    /// flat segments.
    pub fn piecewise_affine_from_table(name: &str, text: &str) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64> {
                tok.and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::MapTable(format!("line {}: expected `x y`", lineno + 1)))
            };
            pts.push((parse(it.next())?, parse(it.next())?));
        }
        if pts.len() < 2 {
            return Err(Error::MapTable("need at least two breakpoints".into()));
        }
        if pts[0].0 != 0.0 || pts.last().unwrap().0 != 1.0 {
            return Err(Error::MapTable("breakpoints must span x = 0 to x = 1".into()));
        }
        let mut branches = Vec::with_capacity(pts.len() - 1);
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 > x0) {
                return Err(Error::MapTable("breakpoint x values must strictly increase".into()));
            }
            if !(0.0..=1.0).contains(&y0) || !(0.0..=1.0).contains(&y1) {
                return Err(Error::MapTable("breakpoint y values must lie in [0, 1]".into()));
            }
            let slope = (y1 - y0) / (x1 - x0);
            if slope == 0.0 || !slope.is_finite() {
                return Err(Error::MapTable("flat segments are not monotone".into()));
            }
            branches.push(Branch {
                domain: Interval::clamped(x0, x1),
                kind: BranchKind::Affine { slope, offset: y0 - slope * x0 },
            });
        }
        Ok(Self::finite(name, branches, false))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether orbit experiments should dither (binary-shift maps collapse
    /// double-precision orbits to 0 within ~53 steps).
    pub fn dither_orbits(&self) -> bool {
        self.dither_orbits
    }

    pub fn is_countable(&self) -> bool {
        matches!(self.kind, MapKind::Gauss(_))
    }

    pub fn gauss_truncation(&self) -> Option<GaussTruncation> {
        match &self.kind {
            MapKind::Gauss(t) => Some(*t),
            MapKind::Finite(_) => None,
        }
    }

    /// Adjusts the truncation policy (continued-fraction map only; ignored
    /// otherwise).
    pub fn with_gauss_truncation(mut self, trunc: GaussTruncation) -> Self {
        if let MapKind::Gauss(t) = &mut self.kind {
            *t = trunc;
        }
        self
    }

    pub fn with_component_cap(mut self, cap: usize) -> Self {
        self.component_cap = cap;
        self
    }

    pub fn component_cap(&self) -> usize {
        self.component_cap
    }

    pub fn finite_branches(&self) -> Option<&[Branch]> {
        match &self.kind {
            MapKind::Finite(b) => Some(b),
            MapKind::Gauss(_) => None,
        }
    }

    /// Grid layout the transfer engine should use for this map.
    pub fn default_grid_layout(&self) -> GridLayout {
        if self.name == "logistic" {
            GridLayout::Cosine
        } else {
            GridLayout::Uniform
        }
    }

    /// Forward evaluation with the junction-point convention (left branch).
    /// Points outside every branch domain (the continued-fraction map at 0)
    /// return the adjoined fixed point 0.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_flagged(x).0
    }

    /// Forward evaluation; the flag reports a degenerate point.
    pub fn eval_flagged(&self, x: f64) -> (f64, bool) {
        debug_assert!((0.0..=1.0).contains(&x), "x = {x} outside [0, 1]");
        match &self.kind {
            MapKind::Finite(branches) => {
                let i = branches.partition_point(|b| b.domain.hi() < x);
                let i = i.min(branches.len() - 1);
                ((branches[i].forward(x)).clamp(0.0, 1.0), false)
            }
            MapKind::Gauss(_) => {
                if x <= 0.0 {
                    return (0.0, true);
                }
                let r = 1.0 / x;
                ((r - r.floor()).clamp(0.0, 1.0), false)
            }
        }
    }

    /// The orbit `[x0, phi(x0), ..., phi^(n-1)(x0)]`.
    pub fn orbit(&self, x0: f64, n: usize) -> Result<Orbit> {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "n", value: 0.0, constraint: ">= 1" });
        }
        if !(0.0..=1.0).contains(&x0) || !x0.is_finite() {
            return Err(Error::EndpointOutOfRange(x0));
        }
        let mut points = Vec::with_capacity(n);
        let mut degenerate_from = None;
        let mut x = x0;
        for step in 0..n {
            points.push(x);
            if step + 1 == n {
                break;
            }
            let (next, degenerate) = self.eval_flagged(x);
            if degenerate && degenerate_from.is_none() {
                degenerate_from = Some(step);
            }
            x = next;
        }
        Ok(Orbit { points, degenerate_from })
    }

    /// Exact set preimage `{x : phi(x) in A}`.
    ///
    /// For the countable map, branches are enumerated per the truncation
    /// policy and the omitted preimage mass bound is reported; finite maps
    /// report a zero tail.
    pub fn preimage(&self, set: &IntervalSet) -> Result<Preimage> {
        match &self.kind {
            MapKind::Finite(branches) => {
                let mut out: Vec<Interval> = Vec::with_capacity(2 * set.len() + 2);
                for branch in branches {
                    push_branch_preimage(branch, set, &mut out);
                }
                Ok(Preimage {
                    set: IntervalSet::from_sorted(out, self.component_cap)?,
                    tail_bound: 0.0,
                })
            }
            MapKind::Gauss(trunc) => {
                if set.is_empty() {
                    return Ok(Preimage { set: IntervalSet::empty(), tail_bound: 0.0 });
                }
                let kmax = trunc.preimage_branches();
                let mut out: Vec<Interval> = Vec::with_capacity(set.len() * kmax as usize);
                // Branch domains ascend as k descends; emit in domain order.
                for k in (1..=kmax).rev() {
                    let branch = trunc.branch(k);
                    push_branch_preimage(&branch, set, &mut out);
                }
                Ok(Preimage {
                    set: IntervalSet::from_sorted(out, self.component_cap)?,
                    tail_bound: 1.0 / (kmax as f64 + 1.0),
                })
            }
        }
    }

    /// `k`-fold preimage; the reported tail bound is the sum of per-step
    /// bounds. `k = 0` returns the set unchanged.
    pub fn iterated_preimage(&self, set: &IntervalSet, k: usize) -> Result<Preimage> {
        let mut current = Preimage { set: set.clone(), tail_bound: 0.0 };
        for _ in 0..k {
            let next = self.preimage(&current.set)?;
            current = Preimage {
                set: next.set,
                tail_bound: current.tail_bound + next.tail_bound,
            };
        }
        Ok(current)
    }
}

/// Appends the preimage of `set` under one branch, in ascending order,
/// clamped into the branch domain.
fn push_branch_preimage(branch: &Branch, set: &IntervalSet, out: &mut Vec<Interval>) {
    let (im_lo, im_hi) = branch.image();
    let (dom_lo, dom_hi) = (branch.domain.lo(), branch.domain.hi());
    let clamp = |v: f64| v.clamp(dom_lo, dom_hi);
    if branch.increasing() {
        for iv in set.components() {
            let lo = iv.lo().max(im_lo);
            let hi = iv.hi().min(im_hi);
            if hi > lo {
                out.push(Interval::clamped(clamp(branch.inverse(lo)), clamp(branch.inverse(hi))));
            }
        }
    } else {
        let start = out.len();
        for iv in set.components() {
            let lo = iv.lo().max(im_lo);
            let hi = iv.hi().min(im_hi);
            if hi > lo {
                out.push(Interval::clamped(clamp(branch.inverse(hi)), clamp(branch.inverse(lo))));
            }
        }
        out[start..].reverse();
    }
}

// ---------------------------------------------------------------------
// Exact pullback lengths for affine-branch maps.
//
// Iterated preimages of a set under an affine-branch map have endpoints
// whose sub-ulp tails are shared across all components (every endpoint is
// an affine image of one of the original endpoints). Rounding those tails
// identically in every component turns per-endpoint noise into a length
// bias that grows linearly with the component count (~2^k * eps at depth
// k). Double-double endpoints make the branch transforms exact, so the
// pullback lengths used by the geometric engine stay at machine precision
// along the whole sequence.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// Renormalization: |hi| must dominate |lo| on entry.
    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        let e = lo - (s - hi);
        Dd { hi: s, lo: e }
    }

    /// Error-free difference of two f64 values (Knuth TwoSum).
    fn exact_diff(a: f64, b: f64) -> Self {
        let s = a - b;
        let bb = s - a;
        let err = (a - (s - bb)) + ((-b) - bb);
        Dd { hi: s, lo: err }
    }

    fn sub(self, other: Dd) -> Dd {
        let d = Dd::exact_diff(self.hi, other.hi);
        Dd::renorm(d.hi, d.lo + (self.lo - other.lo))
    }

    fn div_f64(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let rem = (-q1).mul_add(d, self.hi) + self.lo;
        Dd::renorm(q1, rem / d)
    }

    /// `(x - offset) / slope`, exact up to the double-double representation.
    fn affine_inverse(self, slope: f64, offset: f64) -> Self {
        let t = Dd::exact_diff(self.hi, offset);
        Dd::renorm(t.hi, t.lo + self.lo).div_f64(slope)
    }
}

/// Pullback lengths `|phi^{-k} A|`, `k = 0..n-1`, for maps whose branches
/// are all affine, computed with exact endpoint arithmetic.
pub(crate) fn affine_pullback_lengths(
    branches: &[Branch],
    set: &IntervalSet,
    n: usize,
    cap: usize,
) -> Option<Result<Vec<f64>>> {
    let params: Option<Vec<(f64, f64, f64, f64)>> = branches
        .iter()
        .map(|b| {
            b.affine_params().map(|(slope, offset)| {
                let (im_lo, im_hi) = b.image();
                (slope, offset, im_lo, im_hi)
            })
        })
        .collect();
    let params = params?;
    Some(affine_pullback_lengths_inner(&params, set, n, cap))
}

fn affine_pullback_lengths_inner(
    branches: &[(f64, f64, f64, f64)],
    set: &IntervalSet,
    n: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    let mut cur: Vec<(Dd, Dd)> = set
        .components()
        .iter()
        .map(|iv| (Dd::from_f64(iv.lo()), Dd::from_f64(iv.hi())))
        .collect();
    let mut out = Vec::with_capacity(n);
    out.push(dd_total_length(&cur));
    let mut next: Vec<(Dd, Dd)> = Vec::new();
    for _ in 1..n {
        next.clear();
        for &(slope, offset, im_lo, im_hi) in branches {
            let start = next.len();
            for &(lo, hi) in &cur {
                let a = if lo.value() > im_lo { lo } else { Dd::from_f64(im_lo) };
                let b = if hi.value() < im_hi { hi } else { Dd::from_f64(im_hi) };
                if b.value() <= a.value() {
                    continue;
                }
                let (x, y) = (a.affine_inverse(slope, offset), b.affine_inverse(slope, offset));
                if slope > 0.0 {
                    next.push((x, y));
                } else {
                    next.push((y, x));
                }
            }
            if slope < 0.0 {
                next[start..].reverse();
            }
        }
        // Merge near-touching neighbours, same policy as normalization.
        let mut merged: Vec<(Dd, Dd)> = Vec::with_capacity(next.len());
        for &(lo, hi) in &next {
            match merged.last_mut() {
                Some(last) if lo.value() - last.1.value() <= crate::interval_set::MERGE_EPS => {
                    if hi.value() > last.1.value() {
                        last.1 = hi;
                    }
                }
                _ => merged.push((lo, hi)),
            }
        }
        if merged.len() > cap {
            return Err(Error::ComponentCapExceeded { cap });
        }
        cur = merged;
        out.push(dd_total_length(&cur));
    }
    Ok(out)
}

fn dd_total_length(comps: &[(Dd, Dd)]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &(lo, hi) in comps {
        let y = hi.sub(lo).value() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::from_pairs(pairs).unwrap()
    }

    #[test]
    fn eval_examples() {
        let tent = PiecewiseMap::builtin("tent").unwrap();
        assert_eq!(tent.eval(0.25), 0.5);
        assert_eq!(tent.eval(0.75), 0.5);
        assert_eq!(tent.eval(0.5), 1.0); // branch junction
        let gauss = PiecewiseMap::builtin("gauss").unwrap();
        assert!((gauss.eval(0.4) - 0.5).abs() < 1e-12);
        let logistic = PiecewiseMap::builtin("logistic").unwrap();
        assert_eq!(logistic.eval(0.5), 1.0);
        assert!(PiecewiseMap::builtin("baker").is_ok());
        assert!(PiecewiseMap::builtin("nosuch").is_err());
    }

    #[test]
    fn gauss_zero_is_degenerate() {
        let gauss = PiecewiseMap::builtin("gauss").unwrap();
        let (v, degenerate) = gauss.eval_flagged(0.0);
        assert_eq!(v, 0.0);
        assert!(degenerate);
        let orbit = gauss.orbit(0.5, 4).unwrap();
        // 0.5 -> 0 (1/0.5 = 2, fractional part 0) -> flagged.
        assert_eq!(orbit.points, vec![0.5, 0.0, 0.0, 0.0]);
        assert_eq!(orbit.degenerate_from, Some(1));
    }

    #[test]
    fn orbit_examples() {
        let tent = PiecewiseMap::builtin("tent").unwrap();
        assert_eq!(tent.orbit(0.25, 4).unwrap().points, vec![0.25, 0.5, 1.0, 0.0]);
        assert_eq!(tent.orbit(0.3, 1).unwrap().points, vec![0.3]);
        let halving = PiecewiseMap::builtin("halving").unwrap();
        assert_eq!(halving.orbit(1.0, 3).unwrap().points, vec![1.0, 0.5, 0.25]);
        assert!(tent.orbit(0.3, 0).is_err());
        assert!(tent.orbit(1.5, 3).is_err());
    }

    #[test]
    fn tent_preimage_example() {
        let tent = PiecewiseMap::builtin("tent").unwrap();
        let pre = tent.preimage(&set(&[(0.0, 0.5)])).unwrap();
        assert_eq!(pre.tail_bound, 0.0);
        assert!(pre.set.approx_eq(&set(&[(0.0, 0.25), (0.75, 1.0)]), 1e-14));
    }

    #[test]
    fn halving_preimage_example() {
        let halving = PiecewiseMap::builtin("halving").unwrap();
        let pre = halving.preimage(&set(&[(0.0, 0.25)])).unwrap();
        assert!(pre.set.approx_eq(&set(&[(0.0, 0.5)]), 1e-14));
    }

    #[test]
    fn gauss_preimage_structure() {
        let gauss = PiecewiseMap::builtin("gauss").unwrap().with_gauss_truncation(GaussTruncation {
            eps_tail: 1e-8,
            preimage_branch_cap: 50,
            transfer_branch_cap: 128,
        });
        let pre = gauss.preimage(&set(&[(0.5, 1.0)])).unwrap();
        assert!((pre.tail_bound - 1.0 / 51.0).abs() < 1e-15);
        // Branch k contributes (1/(k+1), 2/(2k+1)).
        assert_eq!(pre.set.len(), 50);
        let last = pre.set.components().last().unwrap();
        assert!((last.lo() - 0.5).abs() < 1e-15);
        assert!((last.hi() - 2.0 / 3.0).abs() < 1e-15);
        let first = pre.set.components()[0];
        assert!((first.lo() - 1.0 / 51.0).abs() < 1e-15);
        assert!((first.hi() - 2.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn iterated_preimage_examples() {
        let tent = PiecewiseMap::builtin("tent").unwrap();
        let pre = tent.iterated_preimage(&set(&[(0.0, 0.5)]), 2).unwrap();
        let expect = set(&[(0.0, 0.125), (0.375, 0.625), (0.875, 1.0)]);
        assert!(pre.set.approx_eq(&expect, 1e-14));
        assert!((pre.set.total_length() - 0.5).abs() < 1e-14);

        let id = tent.iterated_preimage(&set(&[(0.2, 0.3)]), 0).unwrap();
        assert!(id.set.approx_eq(&set(&[(0.2, 0.3)]), 0.0));

        let halving = PiecewiseMap::builtin("halving").unwrap();
        let pre = halving.iterated_preimage(&set(&[(0.0, 0.125)]), 3).unwrap();
        assert!(pre.set.approx_eq(&IntervalSet::unit(), 1e-14));
    }

    #[test]
    fn component_cap_redirects_to_transfer() {
        let tent = PiecewiseMap::builtin("tent").unwrap().with_component_cap(64);
        let r = tent.iterated_preimage(&set(&[(0.2, 0.3)]), 10);
        assert!(matches!(r, Err(Error::ComponentCapExceeded { .. })));
    }

    #[test]
    fn logistic_branches_invert() {
        let logistic = PiecewiseMap::builtin("logistic").unwrap();
        let branches = logistic.finite_branches().unwrap();
        for b in branches {
            for i in 1..20 {
                let x = b.domain.lo() + (b.domain.hi() - b.domain.lo()) * i as f64 / 20.0;
                let y = b.forward(x);
                assert!((b.inverse(y) - x).abs() < 1e-12, "round trip at {x}");
            }
        }
    }

    #[test]
    fn gauss_branch_derivative() {
        let trunc = GaussTruncation::default();
        for k in [1u64, 2, 7] {
            let b = trunc.branch(k);
            for &y in &[0.1, 0.5, 0.9] {
                let expect = 1.0 / ((y + k as f64) * (y + k as f64));
                assert!((b.inverse_derivative(y) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_pullback_lengths_stay_flat() {
        let tent = PiecewiseMap::builtin("tent").unwrap();
        let a = set(&[(0.2137615283, 0.7886431258)]);
        let lens =
            affine_pullback_lengths(tent.finite_branches().unwrap(), &a, 21, 1 << 21)
                .unwrap()
                .unwrap();
        let expect = a.total_length();
        for (k, &l) in lens.iter().enumerate() {
            assert!((l - expect).abs() < 1e-13, "k={k}: {l} vs {expect}");
        }
    }

    #[test]
    fn affine_table_maps() {
        let text = "0 0\n0.5 1\n1 0\n";
        let m = PiecewiseMap::piecewise_affine_from_table("tent-table", text).unwrap();
        assert_eq!(m.eval(0.25), 0.5);
        assert_eq!(m.eval(0.75), 0.5);
        assert!(PiecewiseMap::piecewise_affine_from_table("bad", "0 0\n0.5 0\n1 1\n").is_err());
        assert!(PiecewiseMap::piecewise_affine_from_table("bad", "0.1 0\n1 1\n").is_err());
    }
}
