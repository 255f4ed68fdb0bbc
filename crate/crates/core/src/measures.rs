//! Finite measures on the unit interval, given by densities.
//!
//! [`DensityMeasure`] evaluates measures on [`IntervalSet`]s (closed-form
//! cumulative functions where available, adaptive quadrature otherwise) and
//! integrates bounded test functions. [`GridDensity`] is the piecewise-linear
//! numerical carrier used by the transfer-operator engine.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interval_set::IntervalSet;
use crate::quad;

/// Absolute tolerance for measure evaluations that fall back to quadrature.
pub const MEASURE_QUAD_TOL: f64 = 1e-10;
/// Absolute tolerance for integrals of test functions.
pub const INTEGRATE_TOL: f64 = 1e-9;
/// Evaluation budget per component before quadrature gives up.
pub const QUAD_MAX_EVALS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    Uniform,
    /// Cosine-spaced nodes, clustered at both endpoints. Used for maps whose
    /// invariant density has integrable endpoint singularities (logistic).
    Cosine,
    Custom,
}

/// Nonnegative piecewise-linear density sampled on grid nodes in `[0, 1]`.
///
/// Mass is defined as the trapezoid quadrature of the samples, which is exact
/// for the piecewise-linear interpolant; `cum_mass_to` and `integrate_over`
/// are likewise exact for the interpolant.
#[derive(Debug, Clone)]
pub struct GridDensity {
    nodes: Vec<f64>,
    values: Vec<f64>,
    prefix: Vec<f64>,
    layout: GridLayout,
}

impl GridDensity {
    /// Uniform grid with `cells` cells (so `cells + 1` nodes).
    pub fn uniform(cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let nodes: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        Self::build(nodes, values, GridLayout::Uniform)
    }

    /// Endpoint-clustered grid: `x_i = (1 - cos(pi i / n)) / 2`.
    pub fn cosine(cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = cells as f64;
        let nodes: Vec<f64> = (0..=cells)
            .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n).cos()))
            .collect();
        let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        Self::build(nodes, values, GridLayout::Cosine)
    }

    /// Builds from explicit samples (the plain-text `x y` table format).
    pub fn from_samples(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(nodes, values, GridLayout::Custom)
    }

    fn build(nodes: Vec<f64>, values: Vec<f64>, layout: GridLayout) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::MapTable("grid needs at least two matching nodes/values".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::MapTable("grid must span [0, 1]".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::MapTable("grid nodes must be strictly increasing".into()));
            }
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite("grid density value"));
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "density",
                    value: v,
                    constraint: ">= 0",
                });
            }
        }
        let mut g = GridDensity { nodes, values, prefix: Vec::new(), layout };
        g.rebuild_prefix();
        Ok(g)
    }

    /// Internal constructor for transfer output; values already validated.
    pub(crate) fn from_parts(nodes: Vec<f64>, values: Vec<f64>, layout: GridLayout) -> Self {
        let mut g = GridDensity { nodes, values, prefix: Vec::new(), layout };
        g.rebuild_prefix();
        g
    }

    fn rebuild_prefix(&mut self) {
        let n = self.nodes.len();
        let mut prefix = Vec::with_capacity(n);
        prefix.push(0.0);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for i in 1..n {
            let cell = 0.5 * (self.values[i - 1] + self.values[i]) * (self.nodes[i] - self.nodes[i - 1]);
            let y = cell - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            prefix.push(sum);
        }
        self.prefix = prefix;
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the cell containing `x` (clamped to `[0, 1]`).
    fn cell_of(&self, x: f64) -> usize {
        let n = self.cells();
        let guess = match self.layout {
            GridLayout::Uniform => (x * n as f64) as usize,
            GridLayout::Cosine => {
                ((1.0 - 2.0 * x).clamp(-1.0, 1.0).acos() * n as f64 / std::f64::consts::PI) as usize
            }
            GridLayout::Custom => self.nodes.partition_point(|&v| v <= x).saturating_sub(1),
        };
        let mut i = guess.min(n - 1);
        while i > 0 && self.nodes[i] > x {
            i -= 1;
        }
        while i + 1 < n && self.nodes[i + 1] <= x {
            i += 1;
        }
        i
    }

    /// Piecewise-linear evaluation; `x` outside `[0, 1]` clamps.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let i = self.cell_of(x);
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let t = (x - a) / (b - a);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Total mass (trapezoid quadrature of the samples).
    pub fn mass(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    /// Exact integral of the interpolant over `[0, x]`.
    pub fn cum_mass_to(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let i = self.cell_of(x);
        let a = self.nodes[i];
        self.prefix[i] + 0.5 * (self.values[i] + self.eval(x)) * (x - a)
    }

    /// Exact integral of the interpolant over an interval set.
    pub fn integrate_over(&self, set: &IntervalSet) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for iv in set.components() {
            let piece = self.cum_mass_to(iv.hi()) - self.cum_mass_to(iv.lo());
            let y = piece - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// Multiplies all values by `factor` (used for mass renormalization).
    pub(crate) fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
        self.rebuild_prefix();
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// L1-type estimate of the interpolation error the grid commits on its
    /// own density: sum over interior nodes of |second difference| * h / 8.
    pub fn interp_error_estimate(&self) -> f64 {
        let mut e = 0.0;
        for i in 1..self.nodes.len() - 1 {
            let h = 0.5 * (self.nodes[i + 1] - self.nodes[i - 1]);
            let d2 = self.values[i - 1] - 2.0 * self.values[i] + self.values[i + 1];
            e += d2.abs() * h / 8.0;
        }
        e
    }

    /// Inverse-CDF sample given a uniform draw `u` in `[0, 1)`.
    pub fn sample_inverse(&self, u: f64) -> f64 {
        let target = u * self.mass();
        // Find the cell whose prefix brackets the target.
        let mut i = self.prefix.partition_point(|&p| p <= target);
        i = i.clamp(1, self.prefix.len() - 1) - 1;
        let rem = target - self.prefix[i];
        let h = self.nodes[i + 1] - self.nodes[i];
        let v0 = self.values[i];
        let dv = self.values[i + 1] - v0;
        // Solve v0*t + dv*t^2/(2h) = rem for t in [0, h] (stable root form).
        let t = if rem <= 0.0 {
            0.0
        } else {
            let disc = (v0 * v0 + 2.0 * dv * rem / h).max(0.0).sqrt();
            if v0 + disc > 0.0 {
                2.0 * rem / (v0 + disc)
            } else {
                h
            }
        };
        (self.nodes[i] + t.clamp(0.0, h)).clamp(0.0, 1.0)
    }
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Lebesgue,
    Gauss,
    Grid(GridDensity),
    Analytic { density: DensityFn, cdf: Option<DensityFn> },
}

/// A finite measure on `[0, 1]` described by a nonnegative density and, when
/// available, a closed-form cumulative function.
#[derive(Clone)]
pub struct DensityMeasure {
    name: String,
    kind: Kind,
    total_mass: f64,
}

impl std::fmt::Debug for DensityMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityMeasure")
            .field("name", &self.name)
            .field("total_mass", &self.total_mass)
            .finish()
    }
}

/// The stationary measure of the continued-fraction map: density
/// `1 / (ln 2 (1 + x))`, cumulative `log2(1 + x)`, total mass 1.
pub fn gauss_measure() -> DensityMeasure {
    DensityMeasure {
        name: "gauss".into(),
        kind: Kind::Gauss,
        total_mass: 1.0,
    }
}

impl DensityMeasure {
    pub fn lebesgue() -> Self {
        DensityMeasure {
            name: "lebesgue".into(),
            kind: Kind::Lebesgue,
            total_mass: 1.0,
        }
    }

    pub fn gauss() -> Self {
        gauss_measure()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lebesgue" => Ok(Self::lebesgue()),
            "gauss" => Ok(Self::gauss()),
            other => Err(Error::UnknownMeasure(other.to_string())),
        }
    }

    /// Wraps a sampled density table as a measure.
    pub fn from_grid(name: &str, grid: GridDensity) -> Self {
        let total_mass = grid.mass();
        DensityMeasure {
            name: name.into(),
            kind: Kind::Grid(grid),
            total_mass,
        }
    }

    /// Parses the plain-text sample table format: one `x y` pair per line,
    /// `#`-prefixed comment lines ignored.
    pub fn from_table(name: &str, text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut values = Vec::new();
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
            nodes.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        Ok(Self::from_grid(name, GridDensity::from_samples(nodes, values)?))
    }

    /// A measure defined by an arbitrary density function, with an optional
    /// closed-form cumulative. Without a cumulative, all measure evaluations
    /// go through adaptive quadrature.
    pub fn from_density_fn(
        name: &str,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Result<Self> {
        let density: DensityFn = Arc::new(density);
        let cdf: Option<DensityFn> = cdf.map(Arc::from);
        let total_mass = match &cdf {
            Some(c) => c(1.0) - c(0.0),
            None => quad::adaptive(&|x| density(x), 0.0, 1.0, MEASURE_QUAD_TOL, QUAD_MAX_EVALS)?,
        };
        Ok(DensityMeasure {
            name: name.into(),
            kind: Kind::Analytic { density, cdf },
            total_mass,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// True for the uniform measure; enables exact length fast paths.
    pub fn is_lebesgue(&self) -> bool {
        matches!(self.kind, Kind::Lebesgue)
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Lebesgue => 1.0,
            Kind::Gauss => 1.0 / (std::f64::consts::LN_2 * (1.0 + x)),
            Kind::Grid(g) => g.eval(x),
            Kind::Analytic { density, .. } => density(x),
        }
    }

    /// Closed-form cumulative function, when one exists.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match &self.kind {
            Kind::Lebesgue => Some(x),
            Kind::Gauss => Some((1.0 + x).log2()),
            Kind::Grid(g) => Some(g.cum_mass_to(x)),
            Kind::Analytic { cdf, .. } => cdf.as_ref().map(|c| c(x)),
        }
    }

    /// Measure of an interval set: cumulative differences in closed form when
    /// available, adaptive quadrature (abs tol 1e-10) otherwise.
    pub fn measure_of(&self, set: &IntervalSet) -> Result<f64> {
        let mut sum = 0.0;
        for iv in set.components() {
            let piece = match self.cdf(iv.hi()) {
                Some(hi) => hi - self.cdf(iv.lo()).expect("cdf defined everywhere"),
                None => quad::adaptive(
                    &|x| self.density(x),
                    iv.lo(),
                    iv.hi(),
                    MEASURE_QUAD_TOL,
                    QUAD_MAX_EVALS,
                )?,
            };
            sum += piece;
        }
        Ok(sum.clamp(0.0, self.total_mass))
    }

    /// Integral of a bounded test function against the measure
    /// (adaptive quadrature, abs tol 1e-9).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        quad::adaptive(
            &|x| f(x) * self.density(x),
            0.0,
            1.0,
            INTEGRATE_TOL,
            QUAD_MAX_EVALS,
        )
    }

    /// Draws one sample. Uses inverse-CDF transformation when a cumulative is
    /// available (bisection for analytic cumulatives), rejection sampling with
    /// a scanned envelope otherwise.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        match &self.kind {
            Kind::Lebesgue => rng.gen::<f64>(),
            Kind::Gauss => {
                let u: f64 = rng.gen();
                (u.exp2() - 1.0).clamp(0.0, 1.0)
            }
            Kind::Grid(g) => g.sample_inverse(rng.gen()),
            Kind::Analytic { density, cdf } => match cdf {
                Some(c) => {
                    let base = c(0.0);
                    let target = base + rng.gen::<f64>() * (c(1.0) - base);
                    let (mut lo, mut hi) = (0.0f64, 1.0f64);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if c(mid) < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                }
                None => {
                    // Envelope scanned on a fixed grid with 50% headroom.
                    let sup = (0..=4096)
                        .map(|i| density(i as f64 / 4096.0))
                        .fold(0.0f64, f64::max)
                        * 1.5
                        + 1e-12;
                    loop {
                        let x: f64 = rng.gen();
                        let y: f64 = rng.gen::<f64>() * sup;
                        if y <= density(x) {
                            return x;
                        }
                    }
                }
            },
        }
    }
}

/// Signed set function `A -> mu(A) - s * mu(preimage(A))` for `|s| < 1`.
///
/// Exists only as an evaluator; the combination can be negative on some sets
/// and is never materialized as a density.
pub struct SignedPullback<'a> {
    mu: &'a DensityMeasure,
    map: &'a crate::dynamics::PiecewiseMap,
    s: f64,
}

pub fn signed_pullback_combination<'a>(
    mu: &'a DensityMeasure,
    map: &'a crate::dynamics::PiecewiseMap,
    s: f64,
) -> Result<SignedPullback<'a>> {
    if !(s.abs() < 1.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            value: s,
            constraint: "|s| < 1",
        });
    }
    Ok(SignedPullback { mu, map, s })
}

impl SignedPullback<'_> {
    pub fn eval(&self, set: &IntervalSet) -> Result<f64> {
        let direct = self.mu.measure_of(set)?;
        if self.s == 0.0 {
            return Ok(direct);
        }
        let pre = self.map.preimage(set)?;
        Ok(direct - self.s * self.mu.measure_of(&pre.set)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::from_pairs(pairs).unwrap()
    }

    #[test]
    fn lebesgue_measure_examples() {
        let mu = DensityMeasure::lebesgue();
        let v = mu.measure_of(&set(&[(0.1, 0.4), (0.6, 0.9)])).unwrap();
        assert!((v - 0.6).abs() < 1e-14);
    }

    #[test]
    fn gauss_measure_examples() {
        let mu = gauss_measure();
        assert!((mu.measure_of(&IntervalSet::unit()).unwrap() - 1.0).abs() < 1e-14);
        let half = mu.measure_of(&set(&[(0.0, 0.5)])).unwrap();
        assert!((half - 1.5f64.log2()).abs() < 1e-14);
        let digit1 = mu.measure_of(&set(&[(0.5, 1.0)])).unwrap();
        assert!((digit1 - (4.0f64 / 3.0).log2()).abs() < 1e-14);
        let digit2 = mu.measure_of(&set(&[(1.0 / 3.0, 0.5)])).unwrap();
        assert!((digit2 - (9.0f64 / 8.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn integrate_examples() {
        let mu = DensityMeasure::lebesgue();
        assert!((mu.integrate(|_| 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((mu.integrate(|x| x).unwrap() - 0.5).abs() < 1e-9);
        let g = gauss_measure();
        // mean of x under the stationary measure: (1 - ln 2) / ln 2
        let expect = (1.0 - std::f64::consts::LN_2) / std::f64::consts::LN_2;
        assert!((g.integrate(|x| x).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn quadrature_fallback_matches_closed_form() {
        // Same density as the gauss measure, but without a cumulative.
        let mu = DensityMeasure::from_density_fn(
            "gauss-quad",
            |x| 1.0 / (std::f64::consts::LN_2 * (1.0 + x)),
            None,
        )
        .unwrap();
        let closed = gauss_measure();
        let a = set(&[(0.12, 0.57)]);
        let v1 = mu.measure_of(&a).unwrap();
        let v2 = closed.measure_of(&a).unwrap();
        assert!((v1 - v2).abs() < 1e-9, "quad {v1} vs closed {v2}");
        assert!((mu.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_density_mass_and_integrals() {
        let g = GridDensity::uniform(64, |_| 1.0).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-14);
        assert!((g.cum_mass_to(0.37) - 0.37).abs() < 1e-14);
        let tri = GridDensity::uniform(64, |x| 2.0 * x).unwrap();
        assert!((tri.mass() - 1.0).abs() < 1e-13);
        assert!((tri.integrate_over(&set(&[(0.0, 0.5)])) - 0.25).abs() < 1e-13);
    }

    #[test]
    fn cosine_grid_clusters_endpoints() {
        let g = GridDensity::cosine(128, |_| 1.0).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
        let first = g.nodes()[1] - g.nodes()[0];
        let mid = g.nodes()[65] - g.nodes()[64];
        assert!(first < mid / 10.0, "first {first} mid {mid}");
        assert!((g.eval(0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_inverse_sampling_tracks_cdf() {
        let g = GridDensity::uniform(256, |x| 2.0 * x).unwrap();
        for &u in &[0.0, 0.1, 0.25, 0.5, 0.9, 0.999] {
            let x = g.sample_inverse(u);
            assert!(
                (g.cum_mass_to(x) - u * g.mass()).abs() < 1e-10,
                "u={u} x={x}"
            );
        }
    }

    #[test]
    fn grid_rejects_bad_tables() {
        assert!(GridDensity::from_samples(vec![0.0, 0.5], vec![1.0, -1.0]).is_err());
        assert!(GridDensity::from_samples(vec![0.0, 0.5, 0.4, 1.0], vec![1.0; 4]).is_err());
        assert!(GridDensity::from_samples(vec![0.1, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn measure_table_parses() {
        let mu = DensityMeasure::from_table("custom", "# density\n0 2\n0.5 1\n1 0\n").unwrap();
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        assert!((mu.density(0.25) - 1.5).abs() < 1e-12);
    }
}
