//! Synthetic market stack: SSVI implied-variance surface, static
//! no-arbitrage checks, robust calibration, local-volatility extraction,
//! path simulation, and the surface-consistent 30-day variance index.
//!
//! The surface is the single upstream market object; everything else
//! (local vol, paths, the variance index) is derived from it. All option
//! prices are undiscounted; discounting enters only through the explicit
//! rate factor of the variance-index integral.

mod calibrate;
mod localvol;
mod paths;
mod ssvi;
mod vix;

pub use calibrate::{calibrate_ssvi, quotes_from_csv, CalibConfig, CalibrationOutcome, Quote};
pub use localvol::{extract_local_vol, DupireConfig, LocalVolGrid};
pub use paths::{simulate_paths, PathSet};
pub use ssvi::{
    check_no_arbitrage, ssvi_total_variance, ArbitrageReport, ArbitrageViolation, SsviSurface,
    ViolationKind,
};
pub use vix::{vix_from_surface, VixQuadrature};

use thiserror::Error;

/// Errors raised by the market stack.
#[derive(Debug, Error)]
pub enum MarketError {
    /// Structural parameter problem detected at construction time.
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    /// A query fell outside the supported range.
    #[error("range error: {0}")]
    Range(String),
    /// Malformed input (non-finite values, bad grids, missing columns).
    #[error("input error: {0}")]
    Input(String),
    /// A numerical operation produced an unusable value.
    #[error("numerical error at {location}: {message}")]
    Numerical { location: String, message: String },
    /// Calibration did not converge; the best iterate is attached.
    #[error("calibration failed after {iterations} iterations (loss {final_loss:.3e})")]
    CalibrationFailed {
        iterations: usize,
        final_loss: f64,
        best: Box<CalibrationOutcome>,
    },
    /// Calibration converged but the fitted surface carries static arbitrage.
    #[error("calibrated surface violates static no-arbitrage ({n_violations} probe hits)")]
    CalibrationArbitrage {
        n_violations: usize,
        best: Box<CalibrationOutcome>,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Undiscounted Black call on a unit forward: `C = N(d1) - K N(d2)` with
/// total variance `w` at log-strike `ln K`.
pub(crate) fn black_call_unit_forward(strike: f64, total_var: f64) -> f64 {
    use crate::math::norm_cdf;
    if total_var <= 0.0 {
        return (1.0 - strike).max(0.0);
    }
    let sq = total_var.sqrt();
    let d1 = -strike.ln() / sq + 0.5 * sq;
    let d2 = d1 - sq;
    norm_cdf(d1) - strike * norm_cdf(d2)
}

/// Undiscounted Black put on a unit forward via parity: `P = C - 1 + K`.
pub(crate) fn black_put_unit_forward(strike: f64, total_var: f64) -> f64 {
    black_call_unit_forward(strike, total_var) - 1.0 + strike
}
