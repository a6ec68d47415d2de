//! Bootstrap prediction intervals and regions.
//!
//! Replicate `b` perturbs every factor's point forecast with an error drawn
//! uniformly from that factor's rolling-origin forecast errors at the same
//! horizon, rebuilds the curves, and adds one in-sample residual curve per
//! population drawn uniformly over time. Replicate `b` reads only stream `b`
//! of the seed, so results do not depend on how replicates are scheduled.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::factor_forecast_errors;
use crate::error::{Error, Result};
use crate::pipeline::HdftsModel;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Retain every bootstrap curve in the bundle.
    pub keep_samples: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            alpha: 0.2,
            seed: 0,
            keep_samples: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::invalid(
                "forecast",
                "at least one bootstrap replicate is required",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("forecast", "alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub horizon: usize,
    pub alpha: f64,
    /// One `H × w` matrix per population.
    pub point: Vec<DMatrix<f64>>,
    pub lower: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    /// `N × H` radii of the `(1 − α)` prediction balls.
    pub region_radius: DMatrix<f64>,
    /// `samples[i][h]` is the `B × w` matrix of bootstrap curves.
    pub samples: Option<Vec<Vec<DMatrix<f64>>>>,
    /// Quadrature weights of the grid, used for region norms.
    pub weights: Vec<f64>,
}

/// Nearest-rank empirical quantile of already sorted values:
/// the `⌈level · n⌉`-th smallest, clamped to `1..=n`.
pub fn nearest_rank(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let rank = (level * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

fn l2_norm(diff: impl Iterator<Item = f64>, weights: &[f64]) -> f64 {
    diff.zip(weights)
        .map(|(d, q)| q * d * d)
        .sum::<f64>()
        .sqrt()
}

/// Index draws of one replicate: `xi[h][p][k]` and `residual[h][i]`.
struct Draws {
    xi: Vec<Vec<Vec<usize>>>,
    residual: Vec<Vec<usize>>,
}

pub fn bootstrap_forecast(
    model: &HdftsModel,
    horizon: usize,
    config: &BootstrapConfig,
) -> Result<ForecastBundle> {
    config.validate()?;
    if horizon < 1 {
        return Err(Error::invalid("forecast", "horizon must be at least 1"));
    }
    let n = model.n_populations();
    let w = model.grid.len();
    let t = model.n_times();
    let b_count = config.replicates;

    // errors[h][p][k]: rolling-origin forecast errors of factor k of component p
    let errors: Vec<Vec<Vec<Vec<f64>>>> = (1..=horizon)
        .map(|h| {
            model
                .factors
                .components
                .iter()
                .map(|c| {
                    c.factors
                        .row_iter()
                        .map(|row| {
                            let series: Vec<f64> = row.iter().copied().collect();
                            factor_forecast_errors(&series, h, model.max_ar_order)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let draws: Vec<Draws> = (0..b_count)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, b as u64);
            let mut xi = Vec::with_capacity(horizon);
            let mut residual = Vec::with_capacity(horizon);
            for errs in &errors {
                xi.push(
                    errs.iter()
                        .map(|per_factor| {
                            per_factor
                                .iter()
                                .map(|e| rng.random_range(0..e.len()))
                                .collect()
                        })
                        .collect(),
                );
                residual.push((0..n).map(|_| rng.random_range(0..t)).collect());
            }
            Draws { xi, residual }
        })
        .collect();

    let point_factors = model.factor_forecasts(horizon);
    let point = model.curves_from_factor_paths(&point_factors, horizon)?;

    // scores[h][p]: N × B perturbed scores A_p (f̂ + ξ*) + b̄_p
    let scores: Vec<Vec<DMatrix<f64>>> = (0..horizon)
        .map(|h| {
            model
                .factors
                .components
                .iter()
                .enumerate()
                .map(|(p, c)| {
                    let r = c.n_factors();
                    let perturbed = DMatrix::from_fn(r, b_count, |k, b| {
                        point_factors[p][(k, h)] + errors[h][p][k][draws[b].xi[h][p][k]]
                    });
                    let mut s = &c.loadings * perturbed;
                    for mut col in s.column_iter_mut() {
                        col += &c.score_means;
                    }
                    s
                })
                .collect()
        })
        .collect();

    let weights = model.grid.trapezoid_weights();
    let alpha = config.alpha;
    let per_population: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fit = &model.dfpca[i];
            let mut lower = DMatrix::zeros(horizon, w);
            let mut upper = DMatrix::zeros(horizon, w);
            let mut radius = vec![0.0; horizon];
            let mut kept = Vec::new();
            for h in 0..horizon {
                let mut curves = DMatrix::zeros(b_count, w);
                for b in 0..b_count {
                    let resid_row = draws[b].residual[h][i];
                    for j in 0..w {
                        let mut v = fit.mean_curve[j] + model.residuals[i][(resid_row, j)];
                        for (p, s) in scores[h].iter().enumerate() {
                            v += s[(i, b)] * fit.eigenfunctions[(p, j)];
                        }
                        curves[(b, j)] = v;
                    }
                }
                let mut column = vec![0.0; b_count];
                for j in 0..w {
                    column.copy_from_slice(curves.column(j).as_slice());
                    column.sort_by(f64::total_cmp);
                    lower[(h, j)] = nearest_rank(&column, alpha / 2.0);
                    upper[(h, j)] = nearest_rank(&column, 1.0 - alpha / 2.0);
                }
                let mut norms: Vec<f64> = (0..b_count)
                    .map(|b| l2_norm((0..w).map(|j| curves[(b, j)] - point[i][(h, j)]), &weights))
                    .collect();
                norms.sort_by(f64::total_cmp);
                radius[h] = nearest_rank(&norms, 1.0 - alpha);
                if config.keep_samples {
                    kept.push(curves);
                }
            }
            (lower, upper, radius, kept)
        })
        .collect();

    let mut region_radius = DMatrix::zeros(n, horizon);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for (i, (lo, hi, radius, kept)) in per_population.into_iter().enumerate() {
        for (h, r) in radius.into_iter().enumerate() {
            region_radius[(i, h)] = r;
        }
        lower.push(lo);
        upper.push(hi);
        samples.push(kept);
    }
    Ok(ForecastBundle {
        horizon,
        alpha,
        point,
        lower,
        upper,
        region_radius,
        samples: config.keep_samples.then_some(samples),
        weights,
    })
}

/// Radii `q(α)` of the bootstrap prediction balls around the point forecast:
/// the nearest-rank `(1 − α)` quantile of the quadrature L² distances.
pub fn prediction_region(bundle: &ForecastBundle, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("forecast", "alpha must lie in (0, 1)"));
    }
    let Some(samples) = &bundle.samples else {
        return Err(Error::invalid(
            "forecast",
            "prediction regions need the bootstrap curves; rerun with samples kept",
        ));
    };
    let n = bundle.point.len();
    let mut out = DMatrix::zeros(n, bundle.horizon);
    for i in 0..n {
        for h in 0..bundle.horizon {
            let curves = &samples[i][h];
            let mut norms: Vec<f64> = curves
                .row_iter()
                .map(|row| {
                    l2_norm(
                        row.iter()
                            .zip(bundle.point[i].row(h).iter())
                            .map(|(a, b)| a - b),
                        &bundle.weights,
                    )
                })
                .collect();
            norms.sort_by(f64::total_cmp);
            out[(i, h)] = nearest_rank(&norms, 1.0 - alpha);
        }
    }
    Ok(out)
}
