//! Reference solvers and dataset generation.

pub mod burgers;
pub mod dataset;
pub mod forcing;
pub mod navier_stokes;

pub use burgers::{burgers_etdrk4, BurgersParams, Trajectory};
pub use dataset::{build_dataset, BurgersData, DataConfig, Dataset, Manifest, NsData, Pde, PoissonData};
pub use forcing::{make_forcing, poisson_reference, Forcing};
pub use navier_stokes::{ns_crank_nicolson, NsParams, NsTrajectory};

/// Largest magnitude, or NaN if any entry is NaN.
pub(crate) fn peak_abs(v: &[f64]) -> f64 {
    let mut peak = 0.0f64;
    for x in v {
        if x.is_nan() {
            return f64::NAN;
        }
        peak = peak.max(x.abs());
    }
    peak
}
