//! Finite disjoint unions of subintervals of `[0, 1]`.
//!
//! [`IntervalSet`] is the canonical set representation used throughout the
//! crate: components are sorted, pairwise disjoint and nonempty, and all
//! endpoints lie in the unit interval. Set operations are understood up to
//! Lebesgue-null sets, so single points are never distinguished and touching
//! components are merged.

use crate::error::{Error, Result};

/// Components closer than this are fused during normalization, so that
/// floating-point branch inverses cannot shatter a set into dust.
pub const MERGE_EPS: f64 = 1e-15;

/// Default bound on the number of components a set may reach.
pub const DEFAULT_COMPONENT_CAP: usize = 1 << 20;

/// A closed subinterval of `[0, 1]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Validated constructor: endpoints must be finite, ordered and in `[0, 1]`.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("interval endpoint"));
        }
        if !(0.0..=1.0).contains(&lo) {
            return Err(Error::EndpointOutOfRange(lo));
        }
        if !(0.0..=1.0).contains(&hi) {
            return Err(Error::EndpointOutOfRange(hi));
        }
        if lo > hi {
            return Err(Error::InvalidParameter {
                name: "interval",
                value: lo,
                constraint: "lo <= hi",
            });
        }
        Ok(Interval { lo, hi })
    }

    /// Clamps endpoints into `[0, 1]` and reorders; used internally where
    /// rounding may push a computed endpoint marginally outside.
    pub(crate) fn clamped(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        Interval {
            lo: lo.clamp(0.0, 1.0),
            hi: hi.clamp(0.0, 1.0),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Canonical finite union of subintervals of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    components: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { components: Vec::new() }
    }

    /// The whole unit interval.
    pub fn unit() -> Self {
        IntervalSet {
            components: vec![Interval { lo: 0.0, hi: 1.0 }],
        }
    }

    /// Builds the canonical form from arbitrary raw intervals: sorts,
    /// drops degenerate components, merges overlaps and near-touches.
    pub fn normalize(raw: &[Interval]) -> Result<Self> {
        Self::normalize_capped(raw, DEFAULT_COMPONENT_CAP)
    }

    pub fn normalize_capped(raw: &[Interval], cap: usize) -> Result<Self> {
        let mut v: Vec<Interval> = raw.iter().copied().filter(|i| !i.is_empty()).collect();
        v.sort_by(|a, b| a.lo.partial_cmp(&b.lo).expect("finite endpoints"));
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.lo - last.hi <= MERGE_EPS => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        if out.len() > cap {
            return Err(Error::ComponentCapExceeded { cap });
        }
        Ok(IntervalSet { components: out })
    }

    /// Convenience constructor from `(lo, hi)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let raw: Result<Vec<Interval>> = pairs.iter().map(|&(a, b)| Interval::new(a, b)).collect();
        Self::normalize(&raw?)
    }

    /// Internal constructor for component lists that are already sorted and
    /// disjoint (preimage machinery produces these in order). Still merges
    /// near-touching neighbours and enforces the cap.
    pub(crate) fn from_sorted(mut comps: Vec<Interval>, cap: usize) -> Result<Self> {
        comps.retain(|i| !i.is_empty());
        let mut out: Vec<Interval> = Vec::with_capacity(comps.len());
        for iv in comps {
            match out.last_mut() {
                Some(last) if iv.lo - last.hi <= MERGE_EPS => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        if out.len() > cap {
            return Err(Error::ComponentCapExceeded { cap });
        }
        Ok(IntervalSet { components: out })
    }

    pub fn components(&self) -> &[Interval] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Total Lebesgue length; compensated summation keeps the error near
    /// machine precision even for sets with ~2^20 components.
    pub fn total_length(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for iv in &self.components {
            let y = iv.length() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// Membership test (closed components; endpoint hits count as inside).
    pub fn contains(&self, x: f64) -> bool {
        let mut lo = 0usize;
        let mut hi = self.components.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.components[mid].hi < x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo < self.components.len() && self.components[lo].lo <= x
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0usize, 0usize);
        let a = &self.components;
        let b = &other.components;
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if hi > lo {
                out.push(Interval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { components: out }
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut merged: Vec<Interval> = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.components.len() || j < other.components.len() {
            let take_a = match (self.components.get(i), other.components.get(j)) {
                (Some(a), Some(b)) => a.lo <= b.lo,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let iv = if take_a {
                i += 1;
                self.components[i - 1]
            } else {
                j += 1;
                other.components[j - 1]
            };
            match merged.last_mut() {
                Some(last) if iv.lo - last.hi <= MERGE_EPS => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => merged.push(iv),
            }
        }
        IntervalSet { components: merged }
    }

    /// Complement within `[0, 1]`, up to null sets.
    pub fn complement(&self) -> IntervalSet {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut cursor = 0.0f64;
        for iv in &self.components {
            if iv.lo - cursor > MERGE_EPS {
                out.push(Interval { lo: cursor, hi: iv.lo });
            }
            cursor = cursor.max(iv.hi);
        }
        if 1.0 - cursor > MERGE_EPS {
            out.push(Interval { lo: cursor, hi: 1.0 });
        }
        IntervalSet { components: out }
    }

    /// Length of the symmetric difference.
    pub fn symmetric_difference_length(&self, other: &IntervalSet) -> f64 {
        let inter = self.intersect(other).total_length();
        (self.total_length() - inter) + (other.total_length() - inter)
    }

    /// True iff the symmetric difference has length at most `tol`.
    pub fn approx_eq(&self, other: &IntervalSet, tol: f64) -> bool {
        debug_assert!(tol >= 0.0);
        self.symmetric_difference_length(other) <= tol
    }

    /// Parses the CLI set syntax: comma-separated `lo:hi` pairs, e.g.
    /// `0:0.25,0.75:1`. The word `empty` denotes the empty set.
    pub fn parse(expr: &str) -> Result<Self> {
        let trimmed = expr.trim();
        if trimmed.is_empty() || trimmed == "empty" {
            return Ok(IntervalSet::empty());
        }
        let mut raw = Vec::new();
        for piece in trimmed.split(',') {
            let mut it = piece.split(':');
            let (lo, hi) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(Error::SetSyntax {
                        expr: expr.to_string(),
                        reason: format!("`{piece}` is not of the form lo:hi"),
                    })
                }
            };
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::SetSyntax {
                    expr: expr.to_string(),
                    reason: format!("`{s}` is not a number"),
                })
            };
            raw.push(Interval::new(parse(lo)?, parse(hi)?)?);
        }
        Self::normalize(&raw)
    }
}

impl std::fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.components.is_empty() {
            return write!(f, "empty");
        }
        for (i, iv) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", iv.lo, iv.hi)?;
        }
        Ok(())
    }
}
