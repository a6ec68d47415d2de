//! Factor forecasting, curve reconstruction and bootstrap intervals.

pub mod ar;
pub mod bootstrap;

use nalgebra::{DMatrix, DVector};

pub use ar::{fit_ar, fit_ar_order, forecast_ar, forecast_path, ArModel};
pub use bootstrap::{
    bootstrap_forecast, nearest_rank, prediction_region, BootstrapConfig, ForecastBundle,
};

use crate::dfpca::DfpcaResult;
use crate::error::{Error, Result};
use crate::factor::FactorModel;

/// Curves `μ̂^(i) + Σ_p [A_p f_p + b̄_p]^(i) γ̂_p^(i)` for one time point,
/// returned as an `N × w` matrix. `factor_values[p]` has length `r_p`.
pub fn reconstruct_curves(
    model: &FactorModel,
    dfpca: &[DfpcaResult],
    factor_values: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    let p0 = model.components.len();
    if factor_values.len() != p0 {
        return Err(Error::dimension(
            "forecast",
            format!("{p0} components"),
            factor_values.len(),
        ));
    }
    let n = dfpca.len();
    let Some(first) = dfpca.first() else {
        return Err(Error::invalid("forecast", "no populations"));
    };
    let w = first.mean_curve.len();
    let scores = model
        .components
        .iter()
        .zip(factor_values)
        .map(|(c, f)| {
            if f.len() != c.n_factors() || c.loadings.nrows() != n {
                return Err(Error::dimension(
                    "forecast",
                    format!("{n} x {} loadings", f.len()),
                    format!("{} x {}", c.loadings.nrows(), c.n_factors()),
                ));
            }
            Ok(c.scores_from(f))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = DMatrix::zeros(n, w);
    for (i, fit) in dfpca.iter().enumerate() {
        if fit.n_components() < p0 || fit.mean_curve.len() != w {
            return Err(Error::dimension(
                "forecast",
                format!("{p0} components on {w} grid points"),
                format!("{} on {}", fit.n_components(), fit.mean_curve.len()),
            ));
        }
        let mut row = fit.mean_curve.transpose();
        for (p, s) in scores.iter().enumerate() {
            row += fit.eigenfunctions.row(p) * s[i];
        }
        out.row_mut(i).copy_from(&row);
    }
    Ok(out)
}

/// `X − X̂` per population.
pub fn in_sample_residuals(
    actual: &[DMatrix<f64>],
    fitted: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    if actual.len() != fitted.len() {
        return Err(Error::dimension("forecast", actual.len(), fitted.len()));
    }
    actual
        .iter()
        .zip(fitted)
        .map(|(x, f)| {
            if x.shape() != f.shape() {
                return Err(Error::dimension(
                    "forecast",
                    format!("{:?}", x.shape()),
                    format!("{:?}", f.shape()),
                ));
            }
            Ok(x - f)
        })
        .collect()
}

/// Rolling-origin `h`-step forecast errors of a factor series.
///
/// With `T₁ = ⌊T/2⌋` and `j = T − T₁ − h`, the m-th error refits an AR model
/// to the first `T₁ + m` values and records realized minus predicted at
/// time `T₁ + m + h`. The AR order cap shrinks on short prefixes so every
/// fit has at least two observations more than its order.
pub fn factor_forecast_errors(series: &[f64], h: usize, max_order: usize) -> Result<Vec<f64>> {
    let t = series.len();
    let t1 = t / 2;
    if h < 1 || t1 < 2 || t < t1 + h + 1 {
        return Err(Error::HorizonTooLong { len: t, horizon: h });
    }
    let j = t - t1 - h;
    (0..j)
        .map(|m| {
            let train = &series[..t1 + m];
            let model = fit_ar(train, max_order.min(train.len() - 2))?;
            let predicted = forecast_ar(&model, train, h);
            Ok(series[t1 + m + h - 1] - predicted)
        })
        .collect()
}
