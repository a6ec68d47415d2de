//! Error metrics and the expanding-window evaluation protocol.
//!
//! With a split `T = T₁ + T₂`, window `k = 0..T₂` fits on times `1..T₁+k` and
//! forecasts ahead. The `h`-step errors are `X_{T₁+η} − X̂_{T₁+η | T₁+η−h}`
//! for `η = h..=T₂`, i.e. `T₂ + 1 − h` curves per population.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baseline::{baseline_forecast, fit_baseline};
use crate::error::{Error, Result};
use crate::forecast::{bootstrap_forecast, BootstrapConfig};
use crate::panel::{split, FunctionalPanel, SplitSpec, TestSet};
use crate::pipeline::{HdftsModel, PipelineConfig};
use crate::rng::{derive_seed, Domain};

/// Mean over populations and times of the unweighted Euclidean norm of the
/// residual curve on the grid.
pub fn mnr(actual: &[DMatrix<f64>], fitted: &[DMatrix<f64>]) -> Result<f64> {
    if actual.len() != fitted.len() || actual.is_empty() {
        return Err(Error::dimension("eval", actual.len(), fitted.len()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, f) in actual.iter().zip(fitted) {
        if x.shape() != f.shape() {
            return Err(Error::dimension(
                "eval",
                format!("{:?}", x.shape()),
                format!("{:?}", f.shape()),
            ));
        }
        for t in 0..x.nrows() {
            total += (x.row(t) - f.row(t)).norm();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Forecasts from every window: `[k][i]` is the `H × w` forecast of
/// population `i` made from data up to time `T₁ + k`.
pub type WindowForecasts = Vec<Vec<DMatrix<f64>>>;

/// Per-population `h`-step error matrices, `(T₂ + 1 − h) × w` each.
pub fn horizon_errors(
    test: &TestSet,
    forecasts: &WindowForecasts,
    h: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let t2 = test.len();
    if h < 1 || h > t2 {
        return Err(Error::invalid(
            "eval",
            format!("horizon {h} outside 1..={t2}"),
        ));
    }
    if forecasts.len() < t2 + 1 - h {
        return Err(Error::dimension(
            "eval",
            format!("{} windows", t2 + 1 - h),
            forecasts.len(),
        ));
    }
    let n = test.curves.len();
    let w = test.curves[0].ncols();
    (0..n)
        .map(|i| {
            let mut e = DMatrix::zeros(t2 + 1 - h, w);
            for eta in h..=t2 {
                let fc = &forecasts[eta - h][i];
                if fc.nrows() < h || fc.ncols() != w {
                    return Err(Error::dimension(
                        "eval",
                        format!("at least {h} x {w}"),
                        format!("{:?}", fc.shape()),
                    ));
                }
                let row = test.curves[i].row(eta - 1) - fc.row(h - 1);
                e.row_mut(eta - h).copy_from(&row);
            }
            Ok(e)
        })
        .collect()
}

/// Mean absolute `h`-step error of each population.
pub fn mafe_by_population(
    test: &TestSet,
    forecasts: &WindowForecasts,
    h: usize,
) -> Result<Vec<f64>> {
    Ok(horizon_errors(test, forecasts, h)?
        .iter()
        .map(|e| e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
        .collect())
}

/// Mean squared `h`-step error of each population.
pub fn msfe_by_population(
    test: &TestSet,
    forecasts: &WindowForecasts,
    h: usize,
) -> Result<Vec<f64>> {
    Ok(horizon_errors(test, forecasts, h)?
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mafe(test: &TestSet, forecasts: &WindowForecasts, h: usize) -> Result<f64> {
    Ok(mean(&mafe_by_population(test, forecasts, h)?))
}

pub fn msfe(test: &TestSet, forecasts: &WindowForecasts, h: usize) -> Result<f64> {
    Ok(mean(&msfe_by_population(test, forecasts, h)?))
}

/// Interval score of one curve: the grid mean of
/// `(u − l) + (2/α)(l − x)·1{x < l} + (2/α)(x − u)·1{x > u}`.
pub fn interval_score(lower: &[f64], upper: &[f64], actual: &[f64], alpha: f64) -> Result<f64> {
    if lower.len() != upper.len() || lower.len() != actual.len() || lower.is_empty() {
        return Err(Error::dimension(
            "eval",
            lower.len(),
            format!("{} and {}", upper.len(), actual.len()),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("eval", "alpha must lie in (0, 1)"));
    }
    let mut total = 0.0;
    for j in 0..lower.len() {
        let (l, u, x) = (lower[j], upper[j], actual[j]);
        if l > u {
            return Err(Error::invalid(
                "eval",
                format!("crossed bounds at grid point {}", j + 1),
            ));
        }
        let mut s = u - l;
        if x < l {
            s += 2.0 / alpha * (l - x);
        }
        if x > u {
            s += 2.0 / alpha * (x - u);
        }
        total += s;
    }
    Ok(total / lower.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Hdfts,
    Baseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hdfts => "hdfts",
            Method::Baseline => "fts",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hdfts" => Ok(Method::Hdfts),
            "fts" | "baseline" => Ok(Method::Baseline),
            other => Err(Error::invalid("eval", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub horizons: Vec<usize>,
    /// Bootstrap settings for interval scores; HDFTS only.
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            horizons: vec![1, 2, 3],
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    /// MNR of the fit on the first training window.
    pub mnr: f64,
    pub mafe: BTreeMap<usize, f64>,
    pub msfe: BTreeMap<usize, f64>,
    pub interval_score: BTreeMap<usize, f64>,
    /// Share of held-out grid values inside the bootstrap bounds.
    pub coverage: BTreeMap<usize, f64>,
    pub mafe_by_population: BTreeMap<usize, Vec<f64>>,
    pub msfe_by_population: BTreeMap<usize, Vec<f64>>,
    pub windows: usize,
}

/// Lower and upper pointwise bounds, one matrix per population.
type Bounds = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

struct WindowOutput {
    forecast: Vec<DMatrix<f64>>,
    bounds: Option<Bounds>,
}

fn run_window(
    train: &FunctionalPanel,
    method: Method,
    config: &EvalConfig,
    horizon: usize,
    window: usize,
) -> Result<(WindowOutput, Option<f64>)> {
    match method {
        Method::Hdfts => {
            let model = HdftsModel::fit(train, &config.pipeline)?;
            let mnr_value = if window == 0 {
                Some(mnr(train.populations(), &model.fitted_curves()?)?)
            } else {
                None
            };
            match &config.bootstrap {
                Some(b) => {
                    let cfg = BootstrapConfig {
                        seed: derive_seed(b.seed, Domain::Window, window as u64),
                        keep_samples: false,
                        ..*b
                    };
                    let bundle = bootstrap_forecast(&model, horizon, &cfg)?;
                    Ok((
                        WindowOutput {
                            forecast: bundle.point,
                            bounds: Some((bundle.lower, bundle.upper)),
                        },
                        mnr_value,
                    ))
                }
                None => Ok((
                    WindowOutput {
                        forecast: model.point_forecast(horizon)?,
                        bounds: None,
                    },
                    mnr_value,
                )),
            }
        }
        Method::Baseline => {
            let model = fit_baseline(train, config.pipeline.fve, config.pipeline.max_ar_order)?;
            let mnr_value = if window == 0 {
                Some(mnr(train.populations(), &model.fitted_curves())?)
            } else {
                None
            };
            Ok((
                WindowOutput {
                    forecast: baseline_forecast(&model, horizon)?,
                    bounds: None,
                },
                mnr_value,
            ))
        }
    }
}

/// Refits `method` on every expanding window and scores its forecasts.
pub fn expanding_window(
    panel: &FunctionalPanel,
    spec: SplitSpec,
    method: Method,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let (_, test) = split(panel, spec)?;
    let t2 = spec.test_len;
    let max_h = config.horizons.iter().copied().max().unwrap_or(0);
    if config.horizons.is_empty() || config.horizons.iter().any(|h| *h < 1 || *h > t2) {
        return Err(Error::invalid(
            "eval",
            format!("horizons must lie in 1..={t2}"),
        ));
    }

    let outputs = (0..t2)
        .into_par_iter()
        .map(|k| {
            let end = spec.train_len + k;
            // only horizons that land inside the test set are needed
            let horizon = max_h.min(t2 - k);
            let train = panel.slice_times(0..end)?;
            run_window(&train, method, config, horizon, k).map_err(|e| Error::Window {
                window_end: end,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mnr_value = outputs[0].1.unwrap_or(f64::NAN);
    let forecasts: WindowForecasts = outputs.iter().map(|(o, _)| o.forecast.clone()).collect();

    let mut report = EvalReport {
        method,
        mnr: mnr_value,
        mafe: BTreeMap::new(),
        msfe: BTreeMap::new(),
        interval_score: BTreeMap::new(),
        coverage: BTreeMap::new(),
        mafe_by_population: BTreeMap::new(),
        msfe_by_population: BTreeMap::new(),
        windows: t2,
    };
    for &h in &config.horizons {
        let by_pop = mafe_by_population(&test, &forecasts, h)?;
        report.mafe.insert(h, mean(&by_pop));
        report.mafe_by_population.insert(h, by_pop);
        let by_pop = msfe_by_population(&test, &forecasts, h)?;
        report.msfe.insert(h, mean(&by_pop));
        report.msfe_by_population.insert(h, by_pop);

        if let (Some(b), true) = (&config.bootstrap, outputs[0].0.bounds.is_some()) {
            let mut scores = Vec::new();
            let (mut inside, mut total) = (0usize, 0usize);
            for eta in h..=t2 {
                let (lower, upper) = outputs[eta - h].0.bounds.as_ref().expect("bounds present");
                for i in 0..test.curves.len() {
                    let l: Vec<f64> = lower[i].row(h - 1).iter().copied().collect();
                    let u: Vec<f64> = upper[i].row(h - 1).iter().copied().collect();
                    let x: Vec<f64> = test.curves[i].row(eta - 1).iter().copied().collect();
                    scores.push(interval_score(&l, &u, &x, b.alpha)?);
                    for j in 0..x.len() {
                        total += 1;
                        if l[j] <= x[j] && x[j] <= u[j] {
                            inside += 1;
                        }
                    }
                }
            }
            report.interval_score.insert(h, mean(&scores));
            report.coverage.insert(h, inside as f64 / total as f64);
        }
    }
    Ok(report)
}

/// Writes `metric,horizon,method,value` rows for every report.
pub fn write_reports_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["metric", "horizon", "method", "value"])?;
    for r in reports {
        let m = r.method.name();
        wtr.write_record(["mnr", "", m, &r.mnr.to_string()])?;
        let tables = [
            ("mafe", &r.mafe),
            ("msfe", &r.msfe),
            ("interval_score", &r.interval_score),
            ("coverage", &r.coverage),
        ];
        for (name, table) in tables {
            for (h, v) in table {
                wtr.write_record([name, &h.to_string(), m, &v.to_string()])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<report writer>", e))?;
    Ok(())
}

/// Plain-text table with one row per horizon and one column per
/// metric/method pair.
pub fn format_reports(reports: &[EvalReport]) -> String {
    let mut horizons: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.mafe.keys().copied())
        .collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut columns: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for metric in ["mafe", "msfe", "interval_score", "coverage"] {
        for r in reports {
            let table = match metric {
                "mafe" => &r.mafe,
                "msfe" => &r.msfe,
                "interval_score" => &r.interval_score,
                _ => &r.coverage,
            };
            if table.is_empty() {
                continue;
            }
            columns.push((
                format!("{metric}[{}]", r.method),
                horizons.iter().map(|h| table.get(h).copied()).collect(),
            ));
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:>4}", "h"));
    for (name, _) in &columns {
        out.push_str(&format!(" {name:>20}"));
    }
    out.push('\n');
    for (row, h) in horizons.iter().enumerate() {
        out.push_str(&format!("{h:>4}"));
        for (_, values) in &columns {
            match values[row] {
                Some(v) => out.push_str(&format!(" {v:>20.4}")),
                None => out.push_str(&format!(" {:>20}", "-")),
            }
        }
        out.push('\n');
    }
    for r in reports {
        out.push_str(&format!("mnr[{}] = {:.4}\n", r.method, r.mnr));
    }
    out
}
