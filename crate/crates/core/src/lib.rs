//! Three-state stem-cell proliferation model with a time-varying
//! proliferation function `q(t) = 2 - 1/(a0 + a1 t + a2 t^2)`.
//!
//! The crate simulates division processes, fits the division rate, initial
//! stem population and proliferation coefficients from sparse longitudinal
//! counts, and scores predictions against observations.

pub mod estimation;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ode;
pub mod regression;
pub mod simulator;
pub mod sweep;
pub mod trajectory;
