//! Series of tent-map iterates.
//!
//! The smooth map `f(x) = 2x - x^2` decomposes into weighted series of tent
//! iterates `sum s^n (phi^n x)^p`, uniformly in the weight `s`; the `s = 1/2`
//! square series and the unweighted `s = 1/4` series are the two named
//! specializations, and the half-weight linear series is the classic
//! nowhere-differentiable zigzag sum.
//!
//! Orbits are computed in exact dyadic integer arithmetic (the tent map
//! shortens dyadic denominators by one bit per step), so identity tests run
//! at machine precision instead of drowning in the binary-shift collapse
//! that plagues floating-point tent orbits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Exact dyadic point `a / 2^q` with `a <= 2^q`.
#[derive(Debug, Clone, Copy)]
struct Dyadic {
    a: u128,
    q: u32,
}

impl Dyadic {
    /// Every finite f64 in `[0, 1]` is dyadic; this fails only for exponents
    /// too small to track in 128 bits (below ~2^-70), where the series value
    /// is indistinguishable from the value at 0 anyway.
    fn from_f64(x: f64) -> Option<Dyadic> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        let mut v = x;
        let mut q = 0u32;
        while v != v.trunc() {
            if q >= 120 {
                return None;
            }
            v *= 2.0;
            q += 1;
        }
        Some(Dyadic { a: v as u128, q })
    }

    fn to_f64(self) -> f64 {
        self.a as f64 * 2.0f64.powi(-(self.q as i32))
    }

    /// One tent step: doubling below the midpoint, reflected doubling above.
    fn tent_step(self) -> Dyadic {
        if self.q == 0 {
            // 0 -> 0, 1 -> 0.
            return Dyadic { a: 0, q: 0 };
        }
        let d = 1u128 << self.q;
        let a = if 2 * self.a <= d { self.a } else { d - self.a };
        Dyadic { a, q: self.q - 1 }
    }
}

/// Tent orbit of length `n`, exact on dyadics with a float fallback.
fn tent_orbit(x: f64, n: usize) -> Vec<f64> {
    let mut points = Vec::with_capacity(n);
    if let Some(mut d) = Dyadic::from_f64(x) {
        for _ in 0..n {
            points.push(d.to_f64());
            d = d.tent_step();
        }
    } else {
        let mut v = x.clamp(0.0, 1.0);
        for _ in 0..n {
            points.push(v);
            v = if v < 0.5 { 2.0 * v } else { 2.0 * (1.0 - v) };
        }
    }
    points
}

/// Weighted series of tent iterates: weight `s`, power 1 or 2, `terms` terms.
#[derive(Debug, Clone, Copy)]
pub struct SeriesSpec {
    pub weight: f64,
    pub power: u8,
    pub terms: usize,
}

impl SeriesSpec {
    pub fn new(weight: f64, power: u8, terms: usize) -> Result<Self> {
        if !weight.is_finite() || weight.abs() >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "weight",
                value: weight,
                constraint: "|weight| < 1",
            });
        }
        if power != 1 && power != 2 {
            return Err(Error::InvalidParameter {
                name: "power",
                value: power as f64,
                constraint: "1 or 2",
            });
        }
        if terms == 0 {
            return Err(Error::InvalidParameter { name: "terms", value: 0.0, constraint: ">= 1" });
        }
        Ok(SeriesSpec { weight, power, terms })
    }

    /// `|s|^N / (1 - |s|)`, attached to every evaluation.
    pub fn truncation_bound(&self) -> f64 {
        let a = self.weight.abs();
        a.powi(self.terms as i32) / (1.0 - a)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation_bound: f64,
}

fn check_x(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(Error::EndpointOutOfRange(x));
    }
    Ok(())
}

/// `sum_{n<N} s^n (phi^n x)^p` for the tent map.
pub fn tent_series(x: f64, spec: &SeriesSpec) -> Result<SeriesValue> {
    check_x(x)?;
    let orbit = tent_orbit(x, spec.terms);
    let mut value = 0.0;
    let mut pow = 1.0;
    for &p in &orbit {
        let term = if spec.power == 1 { p } else { p * p };
        value += pow * term;
        pow *= spec.weight;
    }
    Ok(SeriesValue { value, truncation_bound: spec.truncation_bound() })
}

/// The `s`-parameterized decomposition
/// `(2 - 4s) sum s^n phi^n(x) + (4s - 1) sum s^n (phi^n x)^2`,
/// which equals `2x - x^2` for every `|s| < 1`.
pub fn general_decomposition(x: f64, s: f64, terms: usize) -> Result<SeriesValue> {
    check_x(x)?;
    let linear = tent_series(x, &SeriesSpec::new(s, 1, terms)?)?;
    let square = tent_series(x, &SeriesSpec::new(s, 2, terms)?)?;
    let value = (2.0 - 4.0 * s) * linear.value + (4.0 * s - 1.0) * square.value;
    let truncation_bound = (2.0 - 4.0 * s).abs() * linear.truncation_bound
        + (4.0 * s - 1.0).abs() * square.truncation_bound;
    Ok(SeriesValue { value, truncation_bound })
}

/// The half-weight zigzag sum `sum (1/2)^n phi^n(x)`: continuous, nowhere
/// differentiable, self-similar under `xi(x) = x + xi(phi x) / 2`.
pub fn takagi_xi(x: f64, terms: usize) -> Result<SeriesValue> {
    let v = tent_series(x, &SeriesSpec::new(0.5, 1, terms.max(1))?)?;
    Ok(SeriesValue {
        value: v.value,
        truncation_bound: 2.0f64.powi(1 - terms.max(1) as i32),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RoughnessRow {
    pub level: u32,
    /// `max_x |xi(x + 2^-n) - xi(x)| * 2^n` over the sampled dyadic grid.
    pub max_quotient: f64,
}

/// Dyadic difference-quotient growth. Differentiable functions keep this
/// bounded by their Lipschitz constant; the zigzag sum grows linearly in the
/// level, which is the non-smoothness diagnostic.
pub fn roughness_profile(levels: u32, samples: usize, seed: u64) -> Result<Vec<RoughnessRow>> {
    if levels == 0 || levels > 40 {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: levels as f64,
            constraint: "1..=40",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(levels as usize);
    for level in 1..=levels {
        let h = 2.0f64.powi(-(level as i32));
        let terms = level as usize + 50;
        let cells: u64 = 1u64 << level;
        let mut worst = 0.0f64;
        // Always probe the left edge; the peak quotient lives there.
        let mut ks: Vec<u64> = vec![0];
        for _ in 0..samples {
            ks.push(rng.gen_range(0..cells));
        }
        for &k in &ks {
            let x = k as f64 * h;
            let a = takagi_xi(x, terms)?.value;
            let b = takagi_xi(x + h, terms)?.value;
            worst = worst.max((b - a).abs() / h);
        }
        rows.push(RoughnessRow { level, max_quotient: worst });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_series_examples() {
        // Orbit of 1/2 is (1/2, 1, 0, ...): s = 1/4, p = 1 gives 3/4.
        let v = tent_series(0.5, &SeriesSpec::new(0.25, 1, 30).unwrap()).unwrap();
        assert!((v.value - 0.75).abs() < 1e-15);

        // Orbit of 1/4 is (1/4, 1/2, 1, 0, ...): s = 1/2, p = 2 gives 7/16.
        let v = tent_series(0.25, &SeriesSpec::new(0.5, 2, 30).unwrap()).unwrap();
        assert!((v.value - 0.4375).abs() < 1e-15);

        let v = tent_series(0.0, &SeriesSpec::new(0.3, 1, 30).unwrap()).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(SeriesSpec::new(1.0, 1, 10).is_err());
        assert!(SeriesSpec::new(0.5, 3, 10).is_err());
        assert!(SeriesSpec::new(0.5, 1, 0).is_err());
        assert!(tent_series(1.5, &SeriesSpec::new(0.5, 1, 10).unwrap()).is_err());
    }

    #[test]
    fn named_specializations_reproduce_smooth_map() {
        let f = |x: f64| 2.0 * x - x * x;
        for i in 0..200 {
            let x = (i as f64 * 193.0) % 1024.0 / 1024.0;
            let quarter = tent_series(x, &SeriesSpec::new(0.25, 1, 40).unwrap()).unwrap();
            assert!((quarter.value - f(x)).abs() < 1e-12, "s=1/4 at {x}");
            let half = tent_series(x, &SeriesSpec::new(0.5, 2, 40).unwrap()).unwrap();
            assert!((half.value - f(x)).abs() < 1e-12, "s=1/2 at {x}");
        }
    }

    #[test]
    fn decomposition_is_weight_independent() {
        let x = 0.37;
        let f = 2.0 * x - x * x;
        for &s in &[-0.5, 0.0, 0.3, 0.49] {
            let v = general_decomposition(x, s, 60).unwrap();
            assert!(
                (v.value - f).abs() <= v.truncation_bound + 1e-12,
                "s={s}: {} vs {f} (bound {})",
                v.value,
                v.truncation_bound
            );
        }
        let v = general_decomposition(0.37, 0.3, 60).unwrap();
        assert!((v.value - 0.6031).abs() < 1e-12);
    }

    #[test]
    fn zigzag_values_and_self_similarity() {
        assert_eq!(takagi_xi(0.0, 50).unwrap().value, 0.0);
        assert!((takagi_xi(0.5, 60).unwrap().value - 1.0).abs() < 1e-15);
        assert!((takagi_xi(0.25, 60).unwrap().value - 0.75).abs() < 1e-15);

        // xi(x) = x + xi(phi x) / 2 on exact dyadics.
        for k in [1u64, 5, 113, 761] {
            let x = k as f64 / 2048.0;
            let phi_x = if x < 0.5 { 2.0 * x } else { 2.0 * (1.0 - x) };
            let lhs = takagi_xi(x, 80).unwrap().value;
            let rhs = x + 0.5 * takagi_xi(phi_x, 79).unwrap().value;
            assert!((lhs - rhs).abs() < 1e-13, "x={x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn series_self_similarity_both_powers() {
        for &(s, p) in &[(0.37, 1u8), (-0.41, 1), (0.37, 2), (0.49, 2)] {
            for k in [3u64, 77, 501] {
                let x = k as f64 / 1024.0;
                let phi_x = if x < 0.5 { 2.0 * x } else { 2.0 * (1.0 - x) };
                let fx = tent_series(x, &SeriesSpec::new(s, p, 80).unwrap()).unwrap().value;
                let fphi = tent_series(phi_x, &SeriesSpec::new(s, p, 79).unwrap()).unwrap().value;
                let xp = if p == 1 { x } else { x * x };
                assert!((fx - (xp + s * fphi)).abs() < 1e-13, "s={s} p={p} x={x}");
            }
        }
    }

    #[test]
    fn roughness_examples() {
        let rows = roughness_profile(12, 64, 11).unwrap();
        // Level 1 from the anchored edge: |xi(1/2) - xi(0)| * 2 = 2.
        assert!((rows[0].max_quotient - 2.0).abs() < 1e-12);
        // Growth: the left-edge quotient is exactly level + 1.
        assert!(rows[11].max_quotient > rows[4].max_quotient);
        for r in &rows {
            assert!(r.max_quotient >= r.level as f64 + 1.0 - 1e-9);
        }
        assert!(roughness_profile(0, 4, 1).is_err());
        assert!(roughness_profile(41, 4, 1).is_err());
    }

    #[test]
    fn smooth_control_profile_stays_bounded() {
        // Same quotient applied to the differentiable target: bounded by
        // sup |f'| = 2.
        let f = |x: f64| 2.0 * x - x * x;
        for level in [1u32, 5, 20, 30] {
            let h = 2.0f64.powi(-(level as i32));
            let mut worst = 0.0f64;
            for k in 0..32u64 {
                let x = (k as f64 / 32.0 * (1.0 - h)).min(1.0 - h);
                worst = worst.max((f(x + h) - f(x)).abs() / h);
            }
            assert!(worst <= 2.0 + 1e-9, "level {level}: {worst}");
        }
    }
}
