//! Independent forecaster: each population gets its own static (lag-0) FPCA
//! and an AR model per score series. No information is shared across
//! populations.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dfpca::{Decomposition, DfpcaResult, FveRule};
use crate::error::{Error, Result};
use crate::forecast::{fit_ar, forecast_path, ArModel};
use crate::panel::FunctionalPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePopulation {
    pub fpca: DfpcaResult,
    /// One model per score column.
    pub ar: Vec<ArModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub populations: Vec<BaselinePopulation>,
}

fn fit_population(
    curves: &DMatrix<f64>,
    panel: &FunctionalPanel,
    p0: Option<usize>,
    rule: FveRule,
    max_order: usize,
) -> Result<BaselinePopulation> {
    let dec = Decomposition::new(curves, panel.grid(), 1)?;
    let p = match p0 {
        Some(p) => p,
        None => dec.select(rule)?,
    };
    let fpca = dec.truncate(p, panel.grid())?;
    let cap = max_order.min(curves.nrows().saturating_sub(2));
    let ar = fpca
        .scores
        .column_iter()
        .map(|col| fit_ar(col.as_slice(), cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselinePopulation { fpca, ar })
}

pub fn fit_baseline(
    panel: &FunctionalPanel,
    rule: FveRule,
    max_order: usize,
) -> Result<BaselineModel> {
    fit_baseline_inner(panel, None, rule, max_order)
}

/// As [`fit_baseline`] but with the number of components fixed for every
/// population.
pub fn fit_baseline_with_p0(
    panel: &FunctionalPanel,
    p0: usize,
    max_order: usize,
) -> Result<BaselineModel> {
    fit_baseline_inner(panel, Some(p0), FveRule::default(), max_order)
}

fn fit_baseline_inner(
    panel: &FunctionalPanel,
    p0: Option<usize>,
    rule: FveRule,
    max_order: usize,
) -> Result<BaselineModel> {
    if panel.n_times() < 4 {
        return Err(Error::invalid(
            "baseline",
            "at least four time points are required",
        ));
    }
    rule.validate()?;
    let populations = panel
        .populations()
        .par_iter()
        .map(|curves| fit_population(curves, panel, p0, rule, max_order))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineModel { populations })
}

impl BaselineModel {
    /// In-sample reconstruction, one `T × w` matrix per population.
    pub fn fitted_curves(&self) -> Vec<DMatrix<f64>> {
        self.populations
            .iter()
            .map(|p| p.fpca.reconstruct(p.fpca.n_components()))
            .collect()
    }
}

/// Forecast curves for horizons `1..=h`, one `h × w` matrix per population.
pub fn baseline_forecast(model: &BaselineModel, h: usize) -> Result<Vec<DMatrix<f64>>> {
    if h < 1 {
        return Err(Error::invalid("baseline", "horizon must be at least 1"));
    }
    Ok(model
        .populations
        .iter()
        .map(|pop| {
            let fpca = &pop.fpca;
            let w = fpca.mean_curve.len();
            let mut out = DMatrix::zeros(h, w);
            for s in 0..h {
                out.row_mut(s).copy_from(&fpca.mean_curve.transpose());
            }
            for (p, model) in pop.ar.iter().enumerate() {
                let path = forecast_path(model, fpca.scores.column(p).as_slice(), h);
                for (s, v) in path.into_iter().enumerate() {
                    let mut row = out.row_mut(s);
                    row += fpca.eigenfunctions.row(p) * v;
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Grid;

    fn panel_from(curves: Vec<DMatrix<f64>>, w: usize) -> FunctionalPanel {
        FunctionalPanel::new(curves, Grid::uniform(0.0, 1.0, w).unwrap()).unwrap()
    }

    #[test]
    fn identical_curves_fail() {
        let p = panel_from(vec![DMatrix::from_fn(6, 4, |_, j| j as f64)], 4);
        assert!(fit_baseline(&p, FveRule::default(), 3).is_err());
    }

    #[test]
    fn forced_single_component_is_projection() {
        let m = DMatrix::from_fn(8, 5, |t, j| {
            ((t * 5 + j) as f64 * 0.3).sin() + 0.2 * j as f64
        });
        let p = panel_from(vec![m.clone()], 5);
        let model = fit_baseline_with_p0(&p, 1, 2).unwrap();
        let fpca = &model.populations[0].fpca;
        let weights = p.grid().trapezoid_weights();
        let mean = m.row_mean();
        for t in 0..8 {
            let proj: f64 = (0..5)
                .map(|j| weights[j] * (m[(t, j)] - mean[j]) * fpca.eigenfunctions[(0, j)])
                .sum();
            assert!((proj - fpca.scores[(t, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn order_zero_forecast_is_mean_expansion() {
        let m = DMatrix::from_fn(10, 4, |t, j| ((t * 4 + j) as f64 * 1.7).sin());
        let p = panel_from(vec![m], 4);
        let mut model = fit_baseline(&p, FveRule::default(), 0).unwrap();
        let fc = baseline_forecast(&model, 3).unwrap();
        let pop = &model.populations[0];
        let mut expected = pop.fpca.mean_curve.transpose();
        for (k, ar) in pop.ar.iter().enumerate() {
            assert_eq!(ar.order(), 0);
            expected += pop.fpca.eigenfunctions.row(k) * ar.mean;
        }
        for s in 0..3 {
            assert!((fc[0].row(s) - &expected).amax() < 1e-12);
        }

        // AR(1) closed form
        let pop = &mut model.populations[0];
        pop.ar.truncate(1);
        pop.fpca.eigenfunctions = pop.fpca.eigenfunctions.rows(0, 1).into_owned();
        pop.fpca.scores = pop.fpca.scores.columns(0, 1).into_owned();
        pop.ar[0] = ArModel {
            coefficients: vec![0.5],
            mean: 0.25,
            innovation_variance: 1.0,
            stationary: true,
        };
        let last = pop.fpca.scores[(9, 0)];
        let fc = baseline_forecast(&model, 2).unwrap();
        let pop = &model.populations[0];
        let score2 = 0.25 + 0.25 * (last - 0.25);
        let expected = pop.fpca.mean_curve.transpose() + pop.fpca.eigenfunctions.row(0) * score2;
        assert!((fc[0].row(1) - expected).amax() < 1e-14);
    }

    #[test]
    fn population_order_does_not_matter() {
        let a = DMatrix::from_fn(9, 4, |t, j| ((t * 4 + j) as f64 * 0.8).cos());
        let b = DMatrix::from_fn(9, 4, |t, j| ((t * 3 + 2 * j) as f64 * 0.5).sin());
        let m1 = fit_baseline(
            &panel_from(vec![a.clone(), b.clone()], 4),
            FveRule::default(),
            2,
        )
        .unwrap();
        let m2 = fit_baseline(&panel_from(vec![b, a], 4), FveRule::default(), 2).unwrap();
        let f1 = baseline_forecast(&m1, 2).unwrap();
        let f2 = baseline_forecast(&m2, 2).unwrap();
        assert_eq!(f1[0], f2[1]);
        assert_eq!(f1[1], f2[0]);
    }
}
