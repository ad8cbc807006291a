//! Stability certification for perturbed linear time-varying systems with jumps.
//!
//! The library decides uniform exponential / input-to-state stability of
//! systems `x' = A(t)x + g(t,x)` where the matrix path `A(t)` is piecewise
//! smooth with finitely many jumps and possibly unstable frozen-time dynamics.
//! The criterion combines three window measures — the total variation of the
//! stabilized path, the time spent above the stability margin, and the
//! perturbation-to-state gain — and requires their sum to stay under an
//! affine budget `lambda * window + rho`. When the budget holds, explicit
//! ISS constants are derived and can be cross-checked against jump-aware
//! simulation with Lyapunov-function monitors.
//!
//! Modules follow the pipeline order:
//!
//! * [`expr`] — closed-form scalar expressions of time with exact symbolic
//!   differentiation (the config DSL for matrix entries and envelopes),
//! * [`trajectory`] — piecewise-smooth matrix paths, jump sets, regularity
//!   bounds,
//! * [`spectral`] — spectral abscissa, ramp clipping and the stabilized path,
//! * [`lyapunov`] — Lyapunov solves along the stabilized path and the
//!   certificate constants,
//! * [`variation`] — total-variation quadrature with a partition oracle,
//! * [`certify`] — the affine-budget criterion, feasibility search and ISS
//!   constants,
//! * [`simulate`] — jump-aware integration and runtime Lyapunov monitors,
//! * [`config`] / [`report`] — config file ingestion and deterministic
//!   report/trace emission,
//! * [`presets`] — bundled example systems.

pub mod certify;
pub mod config;
pub mod expr;
pub mod linalg;
pub mod lyapunov;
pub mod presets;
pub mod quad;
pub mod report;
pub mod simulate;
pub mod spectral;
pub mod trajectory;
pub mod variation;

pub use certify::{Certificate, CertificateParams, CumulativeProfile};
pub use config::SystemConfig;
pub use expr::Expr;
pub use lyapunov::{ConstantsBundle, LyapunovSolution};
pub use simulate::{PerturbationModel, SimulationTrace};
pub use trajectory::{MatrixTrajectory, RegularityReport, Segment};
pub use variation::VariationBreakdown;

/// Cap the grid-evaluation thread pool (spectral constants, envelope
/// search). Call once, before any parallel work; later calls are ignored.
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}
