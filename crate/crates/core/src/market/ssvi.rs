//! SSVI total-variance surface and the static no-arbitrage checker.
//!
//! Per-maturity parameters `(theta, phi, rho)` define total implied
//! variance
//!
//! ```text
//! w(k, tau) = theta/2 * (1 + rho*phi*k + sqrt((phi*k + rho)^2 + 1 - rho^2))
//! ```
//!
//! at log-moneyness `k`. Between calibrated pillars the parameters are
//! interpolated linearly in `tau`, which preserves theta-monotonicity
//! between monotone pillars.

use serde::{Deserialize, Serialize};

use super::{black_call_unit_forward, MarketError};

/// Sufficient butterfly-freedom surrogate bounds recorded by the checker:
/// `theta*phi*(1+|rho|) <= 4` and `theta*phi^2*(1+|rho|) <= 4`.
const BUTTERFLY_BOUND: f64 = 4.0;

/// Tolerance on call-price second differences in the butterfly probe.
const BUTTERFLY_PRICE_TOL: f64 = 1e-8;

/// SSVI surface: sorted pillar maturities with one `(theta, phi, rho)`
/// triple per pillar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsviSurface {
    /// Pillar maturities in year fractions, strictly increasing, > 0.
    maturities: Vec<f64>,
    /// ATM total variance per pillar, > 0.
    theta: Vec<f64>,
    /// Shape parameter per pillar, > 0.
    phi: Vec<f64>,
    /// Skew parameter per pillar, in (-1, 1).
    rho: Vec<f64>,
}

impl SsviSurface {
    /// Validate structure and build a surface.
    ///
    /// Construction enforces only structural constraints (sorted positive
    /// maturities, positive theta/phi, |rho| < 1). Calendar monotonicity of
    /// theta and the butterfly surrogate bounds are the province of
    /// [`check_no_arbitrage`], so degenerate surfaces can be constructed
    /// and diagnosed rather than rejected blind.
    pub fn new(
        maturities: Vec<f64>,
        theta: Vec<f64>,
        phi: Vec<f64>,
        rho: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let n = maturities.len();
        if n == 0 {
            return Err(MarketError::InvalidSurface("no pillar maturities".into()));
        }
        if theta.len() != n || phi.len() != n || rho.len() != n {
            return Err(MarketError::InvalidSurface(format!(
                "parameter length mismatch: {n} maturities vs {}/{}/{} theta/phi/rho",
                theta.len(),
                phi.len(),
                rho.len()
            )));
        }
        for i in 0..n {
            if !maturities[i].is_finite() || maturities[i] <= 0.0 {
                return Err(MarketError::InvalidSurface(format!(
                    "maturity[{i}] = {} must be finite and > 0",
                    maturities[i]
                )));
            }
            if i > 0 && maturities[i] <= maturities[i - 1] {
                return Err(MarketError::InvalidSurface(format!(
                    "maturities must be strictly increasing at index {i}"
                )));
            }
            if !theta[i].is_finite() || theta[i] <= 0.0 {
                return Err(MarketError::InvalidSurface(format!(
                    "theta[{i}] = {} must be finite and > 0",
                    theta[i]
                )));
            }
            if !phi[i].is_finite() || phi[i] <= 0.0 {
                return Err(MarketError::InvalidSurface(format!(
                    "phi[{i}] = {} must be finite and > 0",
                    phi[i]
                )));
            }
            if !rho[i].is_finite() || rho[i].abs() >= 1.0 {
                return Err(MarketError::InvalidSurface(format!(
                    "rho[{i}] = {} must lie in (-1, 1)",
                    rho[i]
                )));
            }
        }
        Ok(Self {
            maturities,
            theta,
            phi,
            rho,
        })
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn min_maturity(&self) -> f64 {
        self.maturities[0]
    }

    pub fn max_maturity(&self) -> f64 {
        *self.maturities.last().expect("nonempty pillars")
    }

    /// Parameters at `tau`, linearly interpolated between pillars.
    pub fn params_at(&self, tau: f64) -> Result<(f64, f64, f64), MarketError> {
        if !tau.is_finite() {
            return Err(MarketError::Input(format!("non-finite tau {tau}")));
        }
        let lo = self.min_maturity();
        let hi = self.max_maturity();
        // A small relative slop absorbs grid round-off at the pillar ends.
        let slop = 1e-12 * hi.max(1.0);
        if tau < lo - slop || tau > hi + slop {
            return Err(MarketError::Range(format!(
                "tau {tau} outside pillar range [{lo}, {hi}]"
            )));
        }
        let tau = tau.clamp(lo, hi);
        let idx = match self
            .maturities
            .binary_search_by(|m| m.partial_cmp(&tau).expect("finite maturities"))
        {
            Ok(i) => return Ok((self.theta[i], self.phi[i], self.rho[i])),
            Err(i) => i,
        };
        let (i0, i1) = (idx - 1, idx);
        let t0 = self.maturities[i0];
        let t1 = self.maturities[i1];
        let lam = (tau - t0) / (t1 - t0);
        Ok((
            self.theta[i0] + lam * (self.theta[i1] - self.theta[i0]),
            self.phi[i0] + lam * (self.phi[i1] - self.phi[i0]),
            self.rho[i0] + lam * (self.rho[i1] - self.rho[i0]),
        ))
    }

    /// Total variance `w(k, tau)`; see [`ssvi_total_variance`].
    pub fn total_variance(&self, k: f64, tau: f64) -> Result<f64, MarketError> {
        ssvi_total_variance(self, k, tau)
    }

    /// Implied volatility `sqrt(w(k,tau)/tau)`.
    pub fn implied_vol(&self, k: f64, tau: f64) -> Result<f64, MarketError> {
        Ok((self.total_variance(k, tau)? / tau).sqrt())
    }

    /// Surface with every theta scaled by `c > 0` (variance-level shift).
    pub fn scale_theta(&self, c: f64) -> Result<Self, MarketError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(MarketError::Input(format!("theta scale {c} must be > 0")));
        }
        Self::new(
            self.maturities.clone(),
            self.theta.iter().map(|t| t * c).collect(),
            self.phi.clone(),
            self.rho.clone(),
        )
    }
}

/// Evaluate the SSVI total variance at log-moneyness `k` and maturity `tau`.
///
/// Exact at pillar maturities; linear parameter interpolation in between.
/// `tau` outside the pillar range is a range error; non-finite `k` is an
/// input error.
pub fn ssvi_total_variance(surface: &SsviSurface, k: f64, tau: f64) -> Result<f64, MarketError> {
    if !k.is_finite() {
        return Err(MarketError::Input(format!("non-finite log-moneyness {k}")));
    }
    let (theta, phi, rho) = surface.params_at(tau)?;
    Ok(ssvi_w(theta, phi, rho, k))
}

/// Raw SSVI formula for one parameter triple.
pub(crate) fn ssvi_w(theta: f64, phi: f64, rho: f64, k: f64) -> f64 {
    let pk = phi * k;
    0.5 * theta * (1.0 + rho * pk + ((pk + rho) * (pk + rho) + 1.0 - rho * rho).sqrt())
}

/// Kinds of static-arbitrage findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Total variance decreased in maturity at a probed log-moneyness.
    Calendar,
    /// Implied call prices failed strike convexity at a probed node.
    Butterfly,
    /// A parameter triple breached the sufficient butterfly surrogate bound.
    ParameterBound,
    /// Total variance was not strictly positive at a probed node.
    NonPositiveVariance,
}

/// One probe-lattice finding with location and magnitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArbitrageViolation {
    pub kind: ViolationKind,
    /// Log-moneyness of the probe (NaN for parameter-bound findings).
    pub k: f64,
    /// Maturity of the probe.
    pub tau: f64,
    /// How far past the tolerance the probe landed.
    pub magnitude: f64,
}

/// Outcome of a no-arbitrage scan. Empty means clean.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub violations: Vec<ArbitrageViolation>,
}

impl ArbitrageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Scan a surface for static arbitrage on a probe lattice.
///
/// Calendar: `w(k, tau)` must be nondecreasing in `tau` at every probed
/// `k`. Butterfly: implied call prices (unit forward) must be convex in
/// strike, checked as second differences `>= -1e-8` on a uniform strike
/// lattice per probed maturity. The parameter surrogate bounds and
/// positivity of `w` are recorded alongside. Degenerate surfaces produce
/// violation entries rather than errors.
pub fn check_no_arbitrage(
    surface: &SsviSurface,
    k_window: (f64, f64),
    n_probe: usize,
) -> ArbitrageReport {
    let n_probe = n_probe.max(3);
    let (k_lo, k_hi) = k_window;
    let mut report = ArbitrageReport::default();

    // Parameter surrogate bounds at each pillar.
    for i in 0..surface.maturities.len() {
        let (theta, phi, rho) = (surface.theta[i], surface.phi[i], surface.rho[i]);
        let b1 = theta * phi * (1.0 + rho.abs());
        let b2 = theta * phi * phi * (1.0 + rho.abs());
        for b in [b1, b2] {
            if b > BUTTERFLY_BOUND {
                report.violations.push(ArbitrageViolation {
                    kind: ViolationKind::ParameterBound,
                    k: f64::NAN,
                    tau: surface.maturities[i],
                    magnitude: b - BUTTERFLY_BOUND,
                });
            }
        }
    }

    // Probe maturities: pillars plus inter-pillar midpoints, then filled
    // to at least n_probe levels.
    let mut taus: Vec<f64> = surface.maturities.clone();
    for w in surface.maturities.windows(2) {
        taus.push(0.5 * (w[0] + w[1]));
    }
    let (lo, hi) = (surface.min_maturity(), surface.max_maturity());
    if surface.maturities.len() > 1 {
        for i in 0..n_probe {
            taus.push(lo + (hi - lo) * i as f64 / (n_probe - 1) as f64);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).expect("finite taus"));
    taus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let ks: Vec<f64> = (0..n_probe)
        .map(|i| k_lo + (k_hi - k_lo) * i as f64 / (n_probe - 1) as f64)
        .collect();

    // Positivity and calendar monotonicity.
    for &k in &ks {
        let mut prev_w = f64::NEG_INFINITY;
        for &tau in &taus {
            let w = surface
                .total_variance(k, tau)
                .expect("probe inside pillar range");
            if w <= 0.0 {
                report.violations.push(ArbitrageViolation {
                    kind: ViolationKind::NonPositiveVariance,
                    k,
                    tau,
                    magnitude: -w,
                });
            }
            if w < prev_w - 1e-12 {
                report.violations.push(ArbitrageViolation {
                    kind: ViolationKind::Calendar,
                    k,
                    tau,
                    magnitude: prev_w - w,
                });
            }
            prev_w = prev_w.max(w);
        }
    }

    // Butterfly: convexity of undiscounted call prices on a uniform strike
    // lattice (unit forward), one scan per probed maturity.
    let strike_lo = k_lo.exp();
    let strike_hi = k_hi.exp();
    let n_strikes = (4 * n_probe).max(41);
    let dk = (strike_hi - strike_lo) / (n_strikes - 1) as f64;
    for &tau in &taus {
        let prices: Vec<f64> = (0..n_strikes)
            .map(|i| {
                let strike = strike_lo + dk * i as f64;
                let w = surface
                    .total_variance(strike.ln(), tau)
                    .expect("probe inside pillar range");
                black_call_unit_forward(strike, w.max(0.0))
            })
            .collect();
        for i in 1..n_strikes - 1 {
            let second_diff = prices[i - 1] - 2.0 * prices[i] + prices[i + 1];
            if second_diff < -BUTTERFLY_PRICE_TOL {
                report.violations.push(ArbitrageViolation {
                    kind: ViolationKind::Butterfly,
                    k: (strike_lo + dk * i as f64).ln(),
                    tau,
                    magnitude: -second_diff - BUTTERFLY_PRICE_TOL,
                });
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_surface() -> SsviSurface {
        SsviSurface::new(
            vec![0.25, 0.5, 1.0],
            vec![0.02, 0.04, 0.06],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn atm_identity_returns_theta() {
        // At k=0 the bracket is (1 + sqrt(rho^2 + 1 - rho^2)) = 2.
        let s = SsviSurface::new(vec![1.0], vec![0.04], vec![1.0], vec![-0.5]).unwrap();
        let w = ssvi_total_variance(&s, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(w, 0.04, epsilon = 1e-16);
    }

    #[test]
    fn hand_evaluated_zero_rho() {
        // rho = 0, phi = 1, k = 1: w = theta/2 * (1 + sqrt(2)).
        let s = SsviSurface::new(vec![1.0], vec![0.04], vec![1.0], vec![0.0]).unwrap();
        let w = ssvi_total_variance(&s, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(w, 0.02 * (1.0 + 2f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn wing_slope_asymptote() {
        // As k -> +inf, w/k -> theta*phi*(1+rho)/2; the correction decays
        // like 1/k, so probe far out and allow the leading correction.
        let (theta, phi, rho) = (0.04, 1.0, -0.5);
        let s = SsviSurface::new(vec![1.0], vec![theta], vec![phi], vec![rho]).unwrap();
        let slope = theta * phi * (1.0 + rho) / 2.0;
        let w50 = ssvi_total_variance(&s, 50.0, 1.0).unwrap();
        let w500 = ssvi_total_variance(&s, 500.0, 1.0).unwrap();
        assert_abs_diff_eq!(w500 / 500.0, slope, epsilon = 3e-5);
        // Convergence from above at rate ~ 1/k.
        let err50 = w50 / 50.0 - slope;
        let err500 = w500 / 500.0 - slope;
        assert!(err50 > 0.0 && err500 > 0.0 && err50 / err500 > 8.0);
    }

    #[test]
    fn rho_zero_symmetry() {
        let s = flat_surface();
        for &k in &[0.1, 0.5, 1.3] {
            let wp = ssvi_total_variance(&s, k, 0.7).unwrap();
            let wm = ssvi_total_variance(&s, -k, 0.7).unwrap();
            assert_abs_diff_eq!(wp, wm, epsilon = 1e-15);
        }
    }

    #[test]
    fn tau_outside_range_is_range_error() {
        let s = flat_surface();
        assert!(matches!(
            ssvi_total_variance(&s, 0.0, 2.0),
            Err(MarketError::Range(_))
        ));
        assert!(matches!(
            ssvi_total_variance(&s, f64::NAN, 0.5),
            Err(MarketError::Input(_))
        ));
    }

    #[test]
    fn clean_flat_surface_has_empty_report() {
        let report = check_no_arbitrage(&flat_surface(), (-1.0, 1.0), 9);
        assert!(report.is_clean(), "violations: {:?}", report.violations);
    }

    #[test]
    fn decreasing_theta_flags_calendar_everywhere() {
        let s = SsviSurface::new(
            vec![0.25, 0.5, 1.0],
            vec![0.06, 0.04, 0.02],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let report = check_no_arbitrage(&s, (-1.0, 1.0), 9);
        // Every probed k must witness a calendar break.
        assert!(report.count(ViolationKind::Calendar) >= 9);
    }

    #[test]
    fn bound_breach_flags_butterfly() {
        // theta*phi*(1+|rho|) = 8, double the sufficient bound; the price
        // convexity scan must catch actual butterfly arbitrage somewhere.
        let s = SsviSurface::new(vec![1.0], vec![2.0], vec![2.0], vec![0.99]).unwrap();
        let report = check_no_arbitrage(&s, (-2.0, 2.0), 17);
        assert!(report.count(ViolationKind::ParameterBound) > 0);
        assert!(
            report.count(ViolationKind::Butterfly) > 0,
            "expected convexity violations, got {:?}",
            report.violations
        );
    }

    #[test]
    fn interpolation_is_linear_between_pillars() {
        let s = flat_surface();
        let (theta, phi, rho) = s.params_at(0.375).unwrap();
        assert_abs_diff_eq!(theta, 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(phi, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho, 0.0, epsilon = 1e-15);
    }
}
