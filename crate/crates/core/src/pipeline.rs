//! The full two-fold reduction: per-population dynamic FPCA with a common
//! number of components, per-component factor models, and AR models on
//! every factor series.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dfpca::{default_bandwidth, select_p0, Decomposition, DfpcaResult, FveRule};
use crate::error::{Error, Result};
use crate::factor::{fit_factor_models, FactorModel, ScorePanel};
use crate::forecast::{fit_ar, forecast_path, in_sample_residuals, reconstruct_curves, ArModel};
use crate::panel::{FunctionalPanel, Grid};

/// How per-population spectra are combined into one number of components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommonOrder {
    /// FVE rule applied to the eigenvalues summed across populations.
    #[default]
    PooledSpectrum,
    /// Largest of the per-population FVE selections.
    Max,
}

impl std::str::FromStr for CommonOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(CommonOrder::PooledSpectrum),
            "max" => Ok(CommonOrder::Max),
            other => Err(Error::invalid(
                "pipeline",
                format!("unknown p0 rule `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for CommonOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CommonOrder::PooledSpectrum => "pooled",
            CommonOrder::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Long-run covariance bandwidth; `None` means `⌊√T⌋`.
    pub bandwidth: Option<usize>,
    pub fve: FveRule,
    pub h0: usize,
    pub max_ar_order: usize,
    pub common_order: CommonOrder,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            fve: FveRule::default(),
            h0: 3,
            max_ar_order: 5,
            common_order: CommonOrder::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.fve.validate()?;
        if !(1..=10).contains(&self.h0) {
            return Err(Error::invalid("pipeline", "h0 must lie in 1..=10"));
        }
        if self.bandwidth == Some(0) {
            return Err(Error::invalid("pipeline", "bandwidth must be at least 1"));
        }
        Ok(())
    }
}

/// Common number of components for a set of per-population decompositions.
pub fn common_p0(
    decompositions: &[Decomposition],
    rule: FveRule,
    how: CommonOrder,
) -> Result<usize> {
    match how {
        CommonOrder::PooledSpectrum => {
            let w = decompositions.first().map_or(0, |d| d.eigenvalues.len());
            let pooled: Vec<f64> = (0..w)
                .map(|p| {
                    decompositions
                        .iter()
                        .map(|d| d.eigenvalues[p].max(0.0))
                        .sum()
                })
                .collect();
            select_p0(&pooled, rule)
        }
        CommonOrder::Max => decompositions
            .iter()
            .map(|d| d.select(rule))
            .try_fold(1, |acc, p| p.map(|p| acc.max(p))),
    }
}

/// A fitted two-fold model, sufficient for point and bootstrap forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct HdftsModel {
    pub grid: Grid,
    pub bandwidth: usize,
    pub max_ar_order: usize,
    /// One entry per population, all truncated at the common `p₀`.
    pub dfpca: Vec<DfpcaResult>,
    pub factors: FactorModel,
    /// `ar[p][k]` models factor `k` of component `p`.
    pub ar: Vec<Vec<ArModel>>,
    /// In-sample residual curves, one `T × w` matrix per population.
    pub residuals: Vec<DMatrix<f64>>,
}

impl HdftsModel {
    pub fn fit(panel: &FunctionalPanel, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let grid = panel.grid();
        let t = panel.n_times();
        let q = config.bandwidth.unwrap_or_else(|| default_bandwidth(t));
        let decompositions = panel
            .populations()
            .par_iter()
            .map(|curves| Decomposition::new(curves, grid, q))
            .collect::<Result<Vec<_>>>()?;
        let p0 = common_p0(&decompositions, config.fve, config.common_order)?;
        let dfpca = decompositions
            .iter()
            .map(|d| d.truncate(p0, grid))
            .collect::<Result<Vec<_>>>()?;
        let scores = ScorePanel::from_dfpca(&dfpca)?;
        let factors = fit_factor_models(&scores, config.h0, config.fve)?;
        let order_cap = config.max_ar_order.min(t.saturating_sub(2));
        let ar = factors
            .components
            .iter()
            .map(|c| {
                c.factors
                    .row_iter()
                    .map(|row| fit_ar(&row.iter().copied().collect::<Vec<_>>(), order_cap))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self {
            grid: grid.clone(),
            bandwidth: q,
            max_ar_order: config.max_ar_order,
            dfpca,
            factors,
            ar,
            residuals: Vec::new(),
        };
        model.residuals = in_sample_residuals(panel.populations(), &model.fitted_curves()?)?;
        Ok(model)
    }

    pub fn n_populations(&self) -> usize {
        self.dfpca.len()
    }

    pub fn n_times(&self) -> usize {
        self.factors.components[0].factors.ncols()
    }

    pub fn p0(&self) -> usize {
        self.factors.components.len()
    }

    /// Number of factors kept for each component.
    pub fn factor_counts(&self) -> Vec<usize> {
        self.factors
            .components
            .iter()
            .map(|c| c.n_factors())
            .collect()
    }

    /// In-sample reconstruction `X̂_t`, one `T × w` matrix per population.
    pub fn fitted_curves(&self) -> Result<Vec<DMatrix<f64>>> {
        let (n, t, w) = (self.n_populations(), self.n_times(), self.grid.len());
        let mut out = vec![DMatrix::zeros(t, w); n];
        for s in 0..t {
            let f: Vec<DVector<f64>> = self
                .factors
                .components
                .iter()
                .map(|c| c.factors.column(s).into_owned())
                .collect();
            let curves = reconstruct_curves(&self.factors, &self.dfpca, &f)?;
            for (i, m) in out.iter_mut().enumerate() {
                m.row_mut(s).copy_from(&curves.row(i));
            }
        }
        Ok(out)
    }

    /// Point forecasts of every factor for horizons `1..=h`: `[p]` is `r_p × h`.
    pub fn factor_forecasts(&self, h: usize) -> Vec<DMatrix<f64>> {
        self.factors
            .components
            .iter()
            .zip(&self.ar)
            .map(|(c, models)| {
                let mut out = DMatrix::zeros(c.n_factors(), h);
                for (k, model) in models.iter().enumerate() {
                    let history: Vec<f64> = c.factors.row(k).iter().copied().collect();
                    for (s, v) in forecast_path(model, &history, h).into_iter().enumerate() {
                        out[(k, s)] = v;
                    }
                }
                out
            })
            .collect()
    }

    /// Point forecast curves for horizons `1..=h`, one `h × w` matrix per
    /// population.
    pub fn point_forecast(&self, h: usize) -> Result<Vec<DMatrix<f64>>> {
        if h < 1 {
            return Err(Error::invalid("forecast", "horizon must be at least 1"));
        }
        let fc = self.factor_forecasts(h);
        self.curves_from_factor_paths(&fc, h)
    }

    pub(crate) fn curves_from_factor_paths(
        &self,
        paths: &[DMatrix<f64>],
        h: usize,
    ) -> Result<Vec<DMatrix<f64>>> {
        let (n, w) = (self.n_populations(), self.grid.len());
        let mut out = vec![DMatrix::zeros(h, w); n];
        for s in 0..h {
            let f: Vec<DVector<f64>> = paths.iter().map(|m| m.column(s).into_owned()).collect();
            let curves = reconstruct_curves(&self.factors, &self.dfpca, &f)?;
            for (i, m) in out.iter_mut().enumerate() {
                m.row_mut(s).copy_from(&curves.row(i));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_panel(n: usize, t: usize) -> FunctionalPanel {
        let grid = Grid::uniform(0.0, 1.0, 9).unwrap();
        let u = grid.points().to_vec();
        let curves = (0..n)
            .map(|i| {
                DMatrix::from_fn(t, 9, |s, j| {
                    let a = ((s * 3 + i) as f64 * 0.9).sin();
                    let b = ((s * 5 + 2 * i) as f64 * 0.4).cos();
                    a * (std::f64::consts::TAU * u[j]).sin()
                        + b * (std::f64::consts::TAU * u[j]).cos()
                })
            })
            .collect();
        FunctionalPanel::new(curves, grid).unwrap()
    }

    #[test]
    fn fit_shapes_and_residual_identity() {
        let panel = toy_panel(4, 16);
        let model = HdftsModel::fit(&panel, &PipelineConfig::default()).unwrap();
        assert_eq!(model.bandwidth, 4);
        assert_eq!(model.p0(), 2);
        let fitted = model.fitted_curves().unwrap();
        for (i, f) in fitted.iter().enumerate() {
            let back = f + &model.residuals[i];
            assert!((back - panel.population(i)).amax() < 1e-12);
        }
        let fc = model.point_forecast(3).unwrap();
        assert_eq!(fc.len(), 4);
        assert_eq!(fc[0].shape(), (3, 9));
        assert!(model.point_forecast(0).is_err());
    }

    #[test]
    fn full_rank_factors_reproduce_dfpca_reconstruction() {
        let grid = Grid::uniform(0.0, 1.0, 9).unwrap();
        let u = grid.points().to_vec();
        let curves = (0..3)
            .map(|i| {
                DMatrix::from_fn(14, 9, |s, j| {
                    let a = ((s * 7 + i * 13) as f64 * 1.37).sin();
                    let b = ((s * 11 + i * 5) as f64 * 0.73).cos();
                    a * (std::f64::consts::TAU * u[j]).sin()
                        + b * (std::f64::consts::TAU * u[j]).cos()
                })
            })
            .collect();
        let panel = FunctionalPanel::new(curves, grid).unwrap();
        let cfg = PipelineConfig {
            fve: FveRule::new(0.999_999_999, 10).unwrap(),
            ..PipelineConfig::default()
        };
        let model = HdftsModel::fit(&panel, &cfg).unwrap();
        assert!(
            model.factor_counts().iter().all(|r| *r == 3),
            "{:?}",
            model.factor_counts()
        );
        let fitted = model.fitted_curves().unwrap();
        for (i, fit) in model.dfpca.iter().enumerate() {
            assert!((fit.reconstruct(model.p0()) - &fitted[i]).amax() < 1e-10);
        }
    }

    #[test]
    fn common_order_rules() {
        let panel = toy_panel(3, 12);
        let decs: Vec<_> = panel
            .populations()
            .iter()
            .map(|c| Decomposition::new(c, panel.grid(), 3).unwrap())
            .collect();
        let rule = FveRule::default();
        let max = common_p0(&decs, rule, CommonOrder::Max).unwrap();
        let per: Vec<usize> = decs.iter().map(|d| d.select(rule).unwrap()).collect();
        assert_eq!(max, *per.iter().max().unwrap());
        let pooled = common_p0(&decs, rule, CommonOrder::PooledSpectrum).unwrap();
        assert!(pooled <= max);
    }

    #[test]
    fn rejects_bad_config() {
        let panel = toy_panel(2, 10);
        let cfg = PipelineConfig {
            h0: 0,
            ..PipelineConfig::default()
        };
        assert!(HdftsModel::fit(&panel, &cfg).is_err());
    }
}
