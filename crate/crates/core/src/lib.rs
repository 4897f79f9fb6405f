//! Hedgelab: a self-contained laboratory for risk-controlled derivatives
//! hedging.
//!
//! The stack is built in layers:
//!
//! - [`market`]: arbitrage-free SSVI surface, Dupire local volatility,
//!   local-vol path simulation, and the surface-consistent 30-day
//!   variance index.
//! - [`exec`]: LOB-lite execution with spread, temporary, and transient
//!   impact; inventory and mark-to-market accounting.
//! - [`safety`]: the per-step CBF-QP safety filter with an embedded dense
//!   operator-splitting solver and full telemetry.
//! - [`tailrisk`]: temperature-tilted quantile sampling, self-normalized
//!   CVaR estimation, the PID coverage controller, empirical VaR/ES, and
//!   the KL-DRO bound evaluator.
//! - [`learner`]: toy-scale distributional critic and clipped policy
//!   updates with KL and entropy regularization.
//! - [`governance`]: append-only hash-chained telemetry store, runtime
//!   triggers, incident taxonomy, and audit queries.
//! - [`harness`]: scenario generation, paired episode evaluation, and the
//!   statistics suite (performance ratios, paired bootstrap, BH-FDR,
//!   effect sizes).
//!
//! Everything is deterministic given explicit seeds; parallel callers
//! derive disjoint RNG streams via [`math::derive_seed`].

pub mod math;

pub mod market;

pub use market::{
    calibrate_ssvi, check_no_arbitrage, extract_local_vol, simulate_paths, ssvi_total_variance,
    vix_from_surface, LocalVolGrid, MarketError, PathSet, SsviSurface,
};
