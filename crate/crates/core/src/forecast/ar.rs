//! Univariate autoregressions fitted by Yule–Walker (Levinson–Durbin on the
//! biased sample autocovariances) with AIC order selection.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    /// `φ_1..φ_k`.
    pub coefficients: Vec<f64>,
    pub mean: f64,
    pub innovation_variance: f64,
    /// All partial autocorrelations of the fit lie strictly inside (−1, 1).
    pub stationary: bool,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Constant model at `mean`.
    pub fn constant(mean: f64) -> Self {
        Self {
            coefficients: Vec::new(),
            mean,
            innovation_variance: 0.0,
            stationary: true,
        }
    }
}

fn autocovariances(series: &[f64], max_lag: usize) -> (f64, Vec<f64>) {
    let t = series.len();
    let mean = series.iter().sum::<f64>() / t as f64;
    let z: Vec<f64> = series.iter().map(|y| y - mean).collect();
    let gamma = (0..=max_lag)
        .map(|k| {
            z[..t - k]
                .iter()
                .zip(&z[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / t as f64
        })
        .collect();
    (mean, gamma)
}

/// One Levinson–Durbin pass; entry `k` holds `(φ_k, σ²_k, κ_k)`.
fn levinson(gamma: &[f64], max_order: usize) -> Vec<(Vec<f64>, f64, f64)> {
    let mut out = vec![(Vec::new(), gamma[0], 0.0)];
    let mut phi: Vec<f64> = Vec::new();
    let mut sigma2 = gamma[0];
    for k in 1..=max_order {
        if sigma2.is_nan() || sigma2 <= 0.0 {
            break;
        }
        let acc: f64 = (1..k).map(|j| phi[j - 1] * gamma[k - j]).sum();
        let kappa = (gamma[k] - acc) / sigma2;
        let mut next = vec![0.0; k];
        for j in 1..k {
            next[j - 1] = phi[j - 1] - kappa * phi[k - j - 1];
        }
        next[k - 1] = kappa;
        let s2 = sigma2 * (1.0 - kappa * kappa);
        if !s2.is_finite() || s2 < 0.0 {
            break;
        }
        phi = next;
        sigma2 = s2;
        out.push((phi.clone(), sigma2, kappa));
    }
    out
}

fn is_degenerate(gamma0: f64, series: &[f64]) -> bool {
    let scale = series.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    gamma0 <= 1e-28 * scale.max(1.0).powi(2)
}

fn check_len(t: usize, order: usize) -> Result<()> {
    if t < order + 2 {
        return Err(Error::invalid(
            "forecast",
            format!("series of length {t} is too short for AR order {order}"),
        ));
    }
    Ok(())
}

fn model_at(mean: f64, path: &[(Vec<f64>, f64, f64)], k: usize) -> ArModel {
    let (phi, sigma2, _) = &path[k];
    ArModel {
        coefficients: phi.clone(),
        mean,
        innovation_variance: sigma2.max(0.0),
        stationary: path[1..=k].iter().all(|(_, _, kappa)| kappa.abs() < 1.0),
    }
}

/// Yule–Walker fits for every order up to `max_order`, keeping the one with
/// the smallest `T ln σ̂²_k + 2k`. Constant series give an order-0 model with
/// zero variance.
pub fn fit_ar(series: &[f64], max_order: usize) -> Result<ArModel> {
    let t = series.len();
    check_len(t, max_order)?;
    let (mean, gamma) = autocovariances(series, max_order);
    if is_degenerate(gamma[0], series) {
        return Ok(ArModel::constant(mean));
    }
    let path = levinson(&gamma, max_order);
    let n = t as f64;
    let mut best = (n * gamma[0].ln(), 0usize);
    for (k, (_, sigma2, _)) in path.iter().enumerate().skip(1) {
        if sigma2.is_nan() || *sigma2 <= 0.0 {
            break;
        }
        let aic = n * sigma2.ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, k);
        }
    }
    Ok(model_at(mean, &path, best.1))
}

/// Yule–Walker fit at a fixed order.
pub fn fit_ar_order(series: &[f64], order: usize) -> Result<ArModel> {
    check_len(series.len(), order)?;
    let (mean, gamma) = autocovariances(series, order);
    if is_degenerate(gamma[0], series) {
        return Ok(ArModel::constant(mean));
    }
    let path = levinson(&gamma, order);
    if path.len() <= order {
        return Err(Error::invalid(
            "forecast",
            format!("Yule-Walker recursion broke down before order {order}"),
        ));
    }
    Ok(model_at(mean, &path, order))
}

/// Forecasts for horizons `1..=h`, substituting predictions for unknown
/// future values. `history` is in time order, most recent last.
pub fn forecast_path(model: &ArModel, history: &[f64], h: usize) -> Vec<f64> {
    let k = model.order();
    assert!(history.len() >= k, "history shorter than the AR order");
    let mut recent: Vec<f64> = history[history.len() - k..]
        .iter()
        .map(|y| y - model.mean)
        .collect();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let next: f64 = (0..k)
            .map(|j| model.coefficients[j] * recent[recent.len() - 1 - j])
            .sum();
        if k > 0 {
            recent.remove(0);
            recent.push(next);
        }
        out.push(model.mean + next);
    }
    out
}

/// The `h`-step-ahead forecast.
pub fn forecast_ar(model: &ArModel, history: &[f64], h: usize) -> f64 {
    assert!(h >= 1, "horizon must be at least 1");
    forecast_path(model, history, h)[h - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn too_short_is_error() {
        assert!(fit_ar(&[0.1, 0.5, -0.2], 5).is_err());
        assert!(fit_ar_order(&[0.1, 0.5], 1).is_err());
    }

    #[test]
    fn constant_series_is_order_zero() {
        let m = fit_ar(&[3.0; 10], 3).unwrap();
        assert_eq!(m.order(), 0);
        assert_eq!(m.innovation_variance, 0.0);
        assert_eq!(m.mean, 3.0);
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let mut rng = stream_rng(2024, 0);
        let mut y = vec![0.0; 2100];
        for t in 1..y.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[t] = 0.5 * y[t - 1] + e;
        }
        let m = fit_ar_order(&y[100..], 1).unwrap();
        assert!(
            (0.45..=0.55).contains(&m.coefficients[0]),
            "{:?}",
            m.coefficients
        );
        let sel = fit_ar(&y[100..], 5).unwrap();
        assert!(sel.order() >= 1 && sel.stationary);
    }

    #[test]
    fn order_one_is_lag_one_autocorrelation() {
        let y = [1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0, 2.0];
        // mean 2, z = (-1,0,1,0,-1,0,1,0): γ0 = 4/8, γ1 = 0
        let m = fit_ar_order(&y, 1).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.coefficients, vec![0.0]);
        let y = [1.0, 2.0, 4.0, 3.0, 1.0, 0.0, 2.0, 3.0];
        let mean = y.iter().sum::<f64>() / 8.0;
        let z: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let g0: f64 = z.iter().map(|v| v * v).sum();
        let g1: f64 = z.windows(2).map(|w| w[0] * w[1]).sum();
        let m = fit_ar_order(&y, 1).unwrap();
        assert!((m.coefficients[0] - g1 / g0).abs() < 1e-15);
    }

    #[test]
    fn forecast_closed_forms() {
        let m0 = ArModel::constant(1.5);
        assert_eq!(forecast_path(&m0, &[9.0], 3), vec![1.5; 3]);

        let m1 = ArModel {
            coefficients: vec![0.5],
            mean: 0.0,
            innovation_variance: 1.0,
            stationary: true,
        };
        assert_eq!(forecast_ar(&m1, &[8.0], 3), 1.0);

        let m2 = ArModel {
            coefficients: vec![0.6, -0.2],
            mean: 1.0,
            innovation_variance: 1.0,
            stationary: true,
        };
        // deviations from the mean: y_{T-1} = 2, y_T = 3
        let d1 = 0.6 * 3.0 - 0.2 * 2.0;
        let d2 = 0.6 * d1 - 0.2 * 3.0;
        let d3 = 0.6 * d2 - 0.2 * d1;
        let path = forecast_path(&m2, &[0.0, 3.0, 4.0], 3);
        assert!((path[0] - (1.0 + d1)).abs() < 1e-15);
        assert!((path[1] - (1.0 + d2)).abs() < 1e-15);
        assert!((path[2] - (1.0 + d3)).abs() < 1e-15);
    }
}
