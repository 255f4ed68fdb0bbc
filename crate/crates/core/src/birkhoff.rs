//! Orbit-average experiments: the empirical counterpart of the
//! measure-level machinery.
//!
//! Orbit averages `(1/n) sum f(phi^k x0)` converge almost everywhere for
//! ergodic fixtures; these functions estimate them from explicit orbits,
//! with the binary-shift dither policy applied where the map requires it,
//! and cross-check them against transfer-engine averages.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::PiecewiseMap;
use crate::error::{Error, Result};
use crate::measures::DensityMeasure;
use crate::mgf::{derive_seed, integrate_against_grid, DITHER_SCALE};
use crate::transfer::{initial_density, transfer_apply};

#[derive(Debug, Clone)]
pub struct OrbitAverageResult {
    pub x0: f64,
    pub n: usize,
    pub average: f64,
    /// Partial averages at doubling checkpoints, ending at `(n, average)`.
    pub running_profile: Option<Vec<(usize, f64)>>,
    pub dithered: bool,
    pub seed: u64,
    /// True when the orbit reached an excluded point (continued-fraction
    /// orbits with rational tails).
    pub degenerate: bool,
}

/// `(1/n) sum_{k<n} f(phi^k x0)`, applying the map's dither policy.
pub fn birkhoff_average(
    map: &PiecewiseMap,
    f: impl Fn(f64) -> f64,
    x0: f64,
    n: usize,
    seed: u64,
    want_profile: bool,
) -> Result<OrbitAverageResult> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0, constraint: ">= 1" });
    }
    if !(0.0..=1.0).contains(&x0) || !x0.is_finite() {
        return Err(Error::EndpointOutOfRange(x0));
    }
    let dithered = map.dither_orbits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut degenerate = false;
    let mut profile = if want_profile { Some(Vec::new()) } else { None };
    let mut checkpoint = 1usize;
    for k in 0..n {
        let y = f(x) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if let Some(p) = profile.as_mut() {
            if k + 1 == checkpoint || k + 1 == n {
                p.push((k + 1, sum / (k + 1) as f64));
                checkpoint = checkpoint.saturating_mul(2);
            }
        }
        if k + 1 < n {
            let (next, flag) = map.eval_flagged(x);
            degenerate |= flag;
            x = if dithered {
                (next + rng.gen::<f64>() * DITHER_SCALE).clamp(0.0, 1.0)
            } else {
                next
            };
        }
    }
    Ok(OrbitAverageResult {
        x0,
        n,
        average: sum / n as f64,
        running_profile: profile,
        dithered,
        seed,
        degenerate,
    })
}

/// Orbit averages at several starting points (per-point derived seeds).
pub fn time_average_function(
    map: &PiecewiseMap,
    f: impl Fn(f64) -> f64,
    sample_points: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<OrbitAverageResult>> {
    sample_points
        .iter()
        .enumerate()
        .map(|(i, &x0)| birkhoff_average(map, &f, x0, n, derive_seed(seed, i as u64), false))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct DualityReport {
    /// Monte Carlo mean of orbit averages over starting points drawn from mu.
    pub lhs: f64,
    /// Transfer-engine average: `int f` against the Cesaro-averaged density.
    pub rhs: f64,
    pub gap: f64,
    pub uncertainty: f64,
}

/// Compares the orbit-average functional against its measure-level twin.
pub fn duality_check(
    map: &PiecewiseMap,
    mu: &DensityMeasure,
    f: impl Fn(f64) -> f64,
    n_orbit: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DualityReport> {
    if n_orbit == 0 || n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            value: 0.0,
            constraint: "positive orbit length and sample count",
        });
    }
    let mut draw_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for i in 0..n_samples {
        let x0 = mu.sample(&mut draw_rng);
        let avg = birkhoff_average(map, &f, x0, n_orbit, derive_seed(seed, 1 + i as u64), false)?
            .average;
        sum += avg;
        sumsq += avg * avg;
    }
    let lhs = sum / n_samples as f64;
    let var = (sumsq / n_samples as f64 - lhs * lhs).max(0.0);
    let sem = 3.0 * (var / n_samples as f64).sqrt();

    // Measure side: Cesaro-averaged transfer density (second-half window).
    let steps = 128usize;
    let burn = steps / 2;
    let mut rho = initial_density(map, mu, 4096)?;
    let mut acc: Vec<f64> = vec![0.0; rho.values().len()];
    let mut engine_bound = rho.interp_error_estimate();
    let mut averaged = 0usize;
    for k in 0..steps {
        if k >= burn {
            for (a, &v) in acc.iter_mut().zip(rho.values()) {
                *a += v;
            }
            averaged += 1;
        }
        if k + 1 < steps {
            let out = transfer_apply(map, &rho)?;
            engine_bound += out.error_increment();
            rho = out.density;
        }
    }
    for a in acc.iter_mut() {
        *a /= averaged as f64;
    }
    let avg_density =
        crate::measures::GridDensity::from_parts(rho.nodes().to_vec(), acc, rho.layout());
    let rhs = integrate_against_grid(&f, &avg_density)?;
    let gap = (lhs - rhs).abs();
    Ok(DualityReport { lhs, rhs, gap, uncertainty: sem + engine_bound })
}

#[derive(Debug, Clone, Copy)]
pub struct DigitFrequency {
    pub digit: u64,
    pub empirical: f64,
    pub expected: f64,
}

#[derive(Debug, Clone)]
pub struct DigitTable {
    pub rows: Vec<DigitFrequency>,
    pub steps_used: usize,
    pub degenerate: bool,
}

/// Closed-form stationary frequency of continued-fraction digit `k`:
/// `log2((k+1)^2 / (k (k+2)))`.
pub fn digit_frequency_closed_form(k: u64) -> f64 {
    let k = k as f64;
    ((k + 1.0) * (k + 1.0) / (k * (k + 2.0))).log2()
}

/// Empirical continued-fraction digit frequencies along the orbit of `x0`
/// under the continued-fraction map, against the closed form.
pub fn gauss_digit_frequencies(k_max: u64, n: usize, x0: f64) -> Result<DigitTable> {
    if k_max == 0 {
        return Err(Error::InvalidParameter { name: "k_max", value: 0.0, constraint: ">= 1" });
    }
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0, constraint: ">= 1" });
    }
    if !(0.0 < x0 && x0 < 1.0) {
        return Err(Error::EndpointOutOfRange(x0));
    }
    let mut counts = vec![0u64; k_max as usize + 1];
    let mut x = x0;
    let mut steps_used = 0usize;
    let mut degenerate = false;
    for _ in 0..n {
        if x <= 0.0 {
            degenerate = true;
            break;
        }
        let r = 1.0 / x;
        let digit = r.floor();
        if digit >= 1.0 && digit <= k_max as f64 {
            counts[digit as usize] += 1;
        }
        steps_used += 1;
        x = r - digit;
    }
    let total = steps_used.max(1) as f64;
    let rows = (1..=k_max)
        .map(|k| DigitFrequency {
            digit: k,
            empirical: counts[k as usize] as f64 / total,
            expected: digit_frequency_closed_form(k),
        })
        .collect();
    Ok(DigitTable { rows, steps_used, degenerate })
}
