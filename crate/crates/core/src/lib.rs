//! Invariant measures of interval maps, computed by averaging pullbacks.
//!
//! Starting from a base measure `mu`, a piecewise-monotone self-map of
//! `[0, 1]` and a finite union of intervals `A`, the crate computes the
//! pullback sequence `c_k = mu(phi^{-k} A)` and extracts the invariant
//! measure of `A` by Cesaro averaging and by the Abel limit of the
//! generating function `sum lambda^k c_k`, cross-checked against each other
//! and against a spectral (Poisson-kernel) reconstruction whose atom at
//! angle zero carries half the limit. Orbit-level experiments (ergodic
//! averages, continued-fraction digit statistics) provide the empirical
//! counterpart, and series expansions of tent-map iterates supply exact
//! identity fixtures.
//!
//! Modules follow the pipeline:
//!
//! * [`interval_set`] - canonical finite unions of subintervals;
//! * [`dynamics`] - maps, branches, orbits and exact set preimages;
//! * [`measures`] - densities, quadrature-backed measures, grid densities;
//! * [`transfer`] - the pushforward operator on grid densities;
//! * [`mgf`] - pullback sequences, Cesaro/Abel machinery, identities;
//! * [`spectral`] - moment-based reconstruction of the angular measure;
//! * [`expansions`] - exact series of tent-map iterates;
//! * [`birkhoff`] - orbit averages and digit statistics;
//! * [`verify`] - the end-to-end verification checklist used by the CLI and
//!   the acceptance tests.

pub mod birkhoff;
pub mod dynamics;
pub mod error;
pub mod expansions;
pub mod interval_set;
pub mod measures;
pub mod mgf;
pub mod quad;
pub mod spectral;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
pub use interval_set::{Interval, IntervalSet};
pub use dynamics::{Branch, BranchKind, GaussTruncation, Orbit, PiecewiseMap, Preimage};
pub use measures::{gauss_measure, signed_pullback_combination, DensityMeasure, GridDensity};
pub use mgf::{
    abel_estimate, additivity_diagnostic, cesaro, corollary_identity_check, default_abel_grid,
    functional_equation_residual, invariance_residuals, invariant_measure, mgf_partial,
    pullback_sequence, schur_identity_residual, AbelEstimate, Budget, EngineConfig,
    InvariantMeasureEstimate, Method, PullbackSequence,
};
pub use spectral::{
    atom_at_zero, cosine_moments, fejer_density, smeared_measure_family, SpectralMeasureEstimate,
};
pub use expansions::{
    general_decomposition, roughness_profile, takagi_xi, tent_series, SeriesSpec, SeriesValue,
};
pub use birkhoff::{
    birkhoff_average, duality_check, gauss_digit_frequencies, time_average_function,
    DualityReport, OrbitAverageResult,
};
pub use transfer::{initial_density, transfer_apply, TransferOutcome};
