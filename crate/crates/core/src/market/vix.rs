//! Surface-consistent 30-day variance index from OTM option prices.
//!
//! The index follows the variance-swap replication integral
//!
//! ```text
//! VIX^2 = (2/T) e^{rT} ( int_0^F P(K)/K^2 dK + int_F^inf C(K)/K^2 dK )
//! ```
//!
//! evaluated with Simpson quadrature on a uniform strike grid plus
//! power-law tail extrapolation anchored at the outermost observed OTM
//! nodes. Negative integrand contributions are truncated at zero and the
//! result is reported in annualized vol points, `100 * sqrt(VIX^2)`.

use serde::{Deserialize, Serialize};

use super::{black_call_unit_forward, black_put_unit_forward, MarketError, SsviSurface};

/// Strike-grid and tail settings for the replication integral.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VixQuadrature {
    /// Lower grid edge as a fraction of the forward (must be <= 1/3).
    pub k_min_ratio: f64,
    /// Upper grid edge as a multiple of the forward (must be >= 3).
    pub k_max_ratio: f64,
    /// Number of Simpson nodes (odd, >= 5).
    pub n_nodes: usize,
}

impl Default for VixQuadrature {
    fn default() -> Self {
        Self {
            k_min_ratio: 1.0 / 3.0,
            k_max_ratio: 3.0,
            n_nodes: 401,
        }
    }
}

/// Compute the variance index, in annualized vol points.
pub fn vix_from_surface(
    surface: &SsviSurface,
    forward: f64,
    rate: f64,
    horizon: f64,
    quad: &VixQuadrature,
) -> Result<f64, MarketError> {
    if !(forward.is_finite() && forward > 0.0) {
        return Err(MarketError::Input(format!("forward {forward} must be > 0")));
    }
    if quad.k_min_ratio > 1.0 / 3.0 + 1e-12 || quad.k_max_ratio < 3.0 - 1e-12 {
        return Err(MarketError::Input(format!(
            "strike grid [{}F, {}F] must span at least [F/3, 3F]",
            quad.k_min_ratio, quad.k_max_ratio
        )));
    }
    if quad.k_min_ratio <= 0.0 {
        return Err(MarketError::Input("k_min_ratio must be > 0".into()));
    }
    let mut n = quad.n_nodes.max(5);
    if n % 2 == 0 {
        n += 1;
    }

    let k_lo = forward * quad.k_min_ratio;
    let k_hi = forward * quad.k_max_ratio;
    let h = (k_hi - k_lo) / (n - 1) as f64;

    // OTM prices normalized by the forward: price(K)/F on the unit-forward
    // scale, with moneyness m = K/F. The integrand P/K^2 in absolute units
    // equals (F * p_unit(m)) / (F m)^2 = p_unit(m) / (F m^2); integrating
    // over dK = F dm cancels one factor of F, so the whole integral is
    // computed on the unit-forward scale and divided by nothing further.
    let otm_unit = |strike_abs: f64| -> Result<f64, MarketError> {
        let m = strike_abs / forward;
        let w = surface.total_variance(m.ln(), horizon)?;
        let w = w.max(0.0);
        Ok(if m < 1.0 {
            black_put_unit_forward(m, w)
        } else {
            black_call_unit_forward(m, w)
        })
    };

    let mut integrand = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    for i in 0..n {
        let k_abs = k_lo + h * i as f64;
        let price_unit = otm_unit(k_abs)?;
        let m = k_abs / forward;
        // Truncate negative contributions (noise guard).
        let val = (price_unit / (m * m)).max(0.0);
        prices.push(price_unit.max(0.0));
        integrand.push(val);
    }
    // Unit-forward integral over moneyness.
    let hm = h / forward;
    let mut total = crate::math::simpson_uniform(&integrand, hm);

    // Power-law tails anchored at the outermost pairs of observed nodes.
    let m_lo = k_lo / forward;
    let m_hi = k_hi / forward;
    total += put_wing_tail(prices[0], prices[1], m_lo, m_lo + hm);
    total += call_wing_tail(prices[n - 1], prices[n - 2], m_hi, m_hi - hm);

    let var = (2.0 / horizon) * (rate * horizon).exp() * total.max(0.0);
    Ok(100.0 * var.sqrt())
}

/// Tail integral below the lowest strike: fit `P(m) = P(m1) (m/m1)^beta`
/// through the two lowest nodes; `int_0^{m1} P/m^2 dm = P(m1)/(m1 (beta-1))`
/// for `beta > 1`, else the fit does not decay fast enough toward zero and
/// the contribution is truncated at zero.
fn put_wing_tail(p1: f64, p2: f64, m1: f64, m2: f64) -> f64 {
    if p1 <= 0.0 || p2 <= 0.0 {
        return 0.0;
    }
    let beta = (p2 / p1).ln() / (m2 / m1).ln();
    if beta <= 1.0 + 1e-9 {
        return 0.0;
    }
    p1 / (m1 * (beta - 1.0))
}

/// Tail integral above the highest strike: fit `C(m) = C(mn) (m/mn)^{-beta}`
/// through the two highest nodes; `int_{mn}^inf C/m^2 dm = C(mn)/(mn (beta+1))`
/// for `beta > -1` (prices decaying or flat give beta >= 0).
fn call_wing_tail(pn: f64, pn_minus_1: f64, mn: f64, mn_prev: f64) -> f64 {
    if pn <= 0.0 || pn_minus_1 <= 0.0 {
        return 0.0;
    }
    let beta = (pn_minus_1 / pn).ln() / (mn / mn_prev).ln();
    if beta <= -1.0 + 1e-9 {
        return 0.0;
    }
    pn / (mn * (beta + 1.0))
}
