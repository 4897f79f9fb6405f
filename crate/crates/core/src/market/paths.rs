//! Underlying price paths under the local-volatility diffusion.
//!
//! The simulation runs in forward-moneyness space `X_t` (martingale,
//! `X_0 = 1`) with a log-Euler step, so positivity holds by construction:
//!
//! ```text
//! X_{t+dt} = X_t * exp(-0.5 sigma^2 dt + sigma sqrt(dt) Z)
//! S_t      = s0 * X_t * exp(r t)
//! ```
//!
//! `sigma = sigma_loc(t, X_t)` is looked up by bilinear interpolation with
//! flat extrapolation. Identical `(seed, params)` produce bit-identical
//! paths; each path consumes its own derived RNG stream, so results do not
//! depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{derive_seed, standard_normal};

use super::{LocalVolGrid, MarketError};

/// A bundle of simulated spot paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSet {
    /// Row per path, `n_steps + 1` columns; column 0 is the initial spot.
    pub paths: Vec<Vec<f64>>,
    /// Step size in years.
    pub dt: f64,
    /// Continuously compounded risk-free rate.
    pub rate: f64,
    /// Master seed the set was generated from.
    pub seed: u64,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_steps(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len().saturating_sub(1))
    }

    /// Write one row per path to CSV (debug export).
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<(), MarketError> {
        let mut out = csv::Writer::from_writer(writer);
        let n_cols = self.paths.first().map_or(0, Vec::len);
        let mut header = vec!["path".to_string()];
        header.extend((0..n_cols).map(|i| format!("s{i}")));
        out.write_record(&header)?;
        for (idx, path) in self.paths.iter().enumerate() {
            let mut rec = vec![idx.to_string()];
            rec.extend(path.iter().map(|v| format!("{v:.12e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Simulate local-volatility paths.
pub fn simulate_paths(
    lv: &LocalVolGrid,
    s0: f64,
    rate: f64,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<PathSet, MarketError> {
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(MarketError::Input(format!("s0 = {s0} must be > 0")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(MarketError::Input(format!("dt = {dt} must be > 0")));
    }
    let horizon = n_steps as f64 * dt;
    if horizon > lv.max_time() + 1e-12 {
        return Err(MarketError::Range(format!(
            "horizon {horizon} exceeds local-vol grid end {}",
            lv.max_time()
        )));
    }

    let sqrt_dt = dt.sqrt();
    let mut paths = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, p as u64));
        let mut row = Vec::with_capacity(n_steps + 1);
        let mut x = 1.0f64;
        row.push(s0);
        for step in 0..n_steps {
            let t = step as f64 * dt;
            let sigma = lv.lookup(t, x);
            let z = standard_normal(&mut rng);
            x *= (-0.5 * sigma * sigma * dt + sigma * sqrt_dt * z).exp();
            let t_next = (step + 1) as f64 * dt;
            row.push(s0 * x * (rate * t_next).exp());
        }
        paths.push(row);
    }

    Ok(PathSet {
        paths,
        dt,
        rate,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_vol_is_pure_drift() {
        let lv = LocalVolGrid::constant(0.0, vec![0.0, 2.0], vec![0.5, 2.0]);
        let ps = simulate_paths(&lv, 100.0, 0.03, 3, 10, 0.1, 7).unwrap();
        for path in &ps.paths {
            for (i, &s) in path.iter().enumerate() {
                let t = i as f64 * 0.1;
                assert_abs_diff_eq!(s, 100.0 * (0.03f64 * t).exp(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn martingale_mean_under_zero_rate() {
        // One log-Euler step is exactly lognormal with unit mean, so the
        // Monte Carlo average of S_1 must sit within 3 standard errors of s0.
        let lv = LocalVolGrid::constant(0.2, vec![0.0, 1.0], vec![0.5, 2.0]);
        let n = 200_000;
        let ps = simulate_paths(&lv, 50.0, 0.0, n, 1, 1.0, 12345).unwrap();
        let mean: f64 = ps.paths.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        // sd of S_1 = s0 * sqrt(exp(sigma^2) - 1).
        let sd = 50.0 * ((0.04f64).exp() - 1.0).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!(
            (mean - 50.0).abs() < 3.0 * se,
            "mean {mean} vs 50 (se {se})"
        );
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let lv = LocalVolGrid::constant(0.25, vec![0.0, 1.0], vec![0.5, 2.0]);
        let a = simulate_paths(&lv, 100.0, 0.01, 8, 32, 1.0 / 64.0, 99).unwrap();
        let b = simulate_paths(&lv, 100.0, 0.01, 8, 32, 1.0 / 64.0, 99).unwrap();
        assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn prices_stay_positive() {
        let lv = LocalVolGrid::constant(2.5, vec![0.0, 1.0], vec![0.5, 2.0]);
        let ps = simulate_paths(&lv, 1.0, 0.0, 50, 64, 1.0 / 64.0, 3).unwrap();
        assert!(ps.paths.iter().flatten().all(|&s| s > 0.0));
    }

    #[test]
    fn horizon_beyond_grid_is_range_error() {
        let lv = LocalVolGrid::constant(0.2, vec![0.0, 0.5], vec![0.5, 2.0]);
        assert!(matches!(
            simulate_paths(&lv, 100.0, 0.0, 1, 100, 0.01, 1),
            Err(MarketError::Range(_))
        ));
    }
}
