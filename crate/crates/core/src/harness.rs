//! Monte Carlo replication of the simulation tables: in-sample MNR with the
//! selected orders, and the expanding-window forecast comparison against the
//! independent baseline.
//!
//! Replication `r` of every setting draws its panel from stream `r` of the
//! top-level seed, so any single replication can be rerun on its own.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{expanding_window, mnr, EvalConfig, EvalReport, Method};
use crate::panel::SplitSpec;
use crate::pipeline::{HdftsModel, PipelineConfig};
use crate::simgen::{generate_panel, DgpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Setting {
    pub n: usize,
    pub t: usize,
}

impl Setting {
    pub const fn new(n: usize, t: usize) -> Self {
        Self { n, t }
    }
}

/// The four `(N, T)` pairs of the simulation study.
pub const DESIGN_SETTINGS: [Setting; 4] = [
    Setting::new(20, 20),
    Setting::new(40, 50),
    Setting::new(60, 80),
    Setting::new(100, 150),
];

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub replication: u64,
    pub mnr: f64,
    pub p0: usize,
    pub factor_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnrRow {
    pub setting: Setting,
    pub records: Vec<FitRecord>,
}

impl MnrRow {
    pub fn mean_mnr(&self) -> f64 {
        self.records.iter().map(|r| r.mnr).sum::<f64>() / self.records.len() as f64
    }

    /// Share of replications selecting exactly `p0` components.
    pub fn p0_share(&self, p0: usize) -> f64 {
        self.records.iter().filter(|r| r.p0 == p0).count() as f64 / self.records.len() as f64
    }

    /// Share of all (replication, component) pairs whose factor count lies in
    /// `lo..=hi`.
    pub fn factor_count_share(&self, lo: usize, hi: usize) -> f64 {
        let counts: Vec<usize> = self
            .records
            .iter()
            .flat_map(|r| r.factor_counts.iter().copied())
            .collect();
        counts.iter().filter(|r| (lo..=hi).contains(*r)).count() as f64 / counts.len() as f64
    }
}

fn replication_error(setting: Setting, replication: u64, e: Error) -> Error {
    Error::Replication {
        replication,
        n: setting.n,
        t: setting.t,
        source: Box::new(e),
    }
}

fn fit_once(
    setting: Setting,
    seed: u64,
    replication: u64,
    config: &PipelineConfig,
) -> Result<FitRecord> {
    let sim = generate_panel(&DgpConfig::new(setting.n, setting.t, seed, replication))?;
    let model = HdftsModel::fit(&sim.panel, config)?;
    Ok(FitRecord {
        replication,
        mnr: mnr(sim.panel.populations(), &model.fitted_curves()?)?,
        p0: model.p0(),
        factor_counts: model.factor_counts(),
    })
}

/// Full-sample fits of `replications` panels at one setting.
pub fn replicate_fit(
    setting: Setting,
    seed: u64,
    replications: usize,
    config: &PipelineConfig,
) -> Result<MnrRow> {
    if replications < 1 {
        return Err(Error::invalid(
            "harness",
            "at least one replication is required",
        ));
    }
    let records = (0..replications as u64)
        .into_par_iter()
        .map(|r| fit_once(setting, seed, r, config).map_err(|e| replication_error(setting, r, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MnrRow { setting, records })
}

pub fn mnr_table(
    settings: &[Setting],
    seed: u64,
    replications: usize,
    config: &PipelineConfig,
) -> Result<Vec<MnrRow>> {
    settings
        .iter()
        .map(|s| replicate_fit(*s, seed, replications, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub replication: u64,
    pub hdfts: EvalReport,
    pub baseline: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub setting: Setting,
    pub records: Vec<ForecastRecord>,
}

impl ForecastRow {
    fn report(record: &ForecastRecord, method: Method) -> &EvalReport {
        match method {
            Method::Hdfts => &record.hdfts,
            Method::Baseline => &record.baseline,
        }
    }

    fn mean_of(&self, method: Method, pick: impl Fn(&EvalReport) -> Option<f64>) -> Option<f64> {
        let values: Option<Vec<f64>> = self
            .records
            .iter()
            .map(|r| pick(Self::report(r, method)))
            .collect();
        values.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_mafe(&self, method: Method, h: usize) -> Option<f64> {
        self.mean_of(method, |r| r.mafe.get(&h).copied())
    }

    pub fn mean_msfe(&self, method: Method, h: usize) -> Option<f64> {
        self.mean_of(method, |r| r.msfe.get(&h).copied())
    }

    pub fn mean_coverage(&self, h: usize) -> Option<f64> {
        self.mean_of(Method::Hdfts, |r| r.coverage.get(&h).copied())
    }

    pub fn mean_interval_score(&self, h: usize) -> Option<f64> {
        self.mean_of(Method::Hdfts, |r| r.interval_score.get(&h).copied())
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.records
            .first()
            .map(|r| r.hdfts.mafe.keys().copied().collect())
            .unwrap_or_default()
    }
}

/// Expanding-window comparison on one simulated panel, holding out the last
/// quarter of the sample.
pub fn forecast_once(
    setting: Setting,
    seed: u64,
    replication: u64,
    config: &EvalConfig,
) -> Result<ForecastRecord> {
    let sim = generate_panel(&DgpConfig::new(setting.n, setting.t, seed, replication))?;
    let split = SplitSpec::last_quarter(setting.t);
    let hdfts = expanding_window(&sim.panel, split, Method::Hdfts, config)?;
    let baseline = expanding_window(&sim.panel, split, Method::Baseline, config)?;
    Ok(ForecastRecord {
        replication,
        hdfts,
        baseline,
    })
}

pub fn replicate_forecast(
    setting: Setting,
    seed: u64,
    replications: usize,
    config: &EvalConfig,
) -> Result<ForecastRow> {
    if replications < 1 {
        return Err(Error::invalid(
            "harness",
            "at least one replication is required",
        ));
    }
    let records = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            forecast_once(setting, seed, r, config).map_err(|e| replication_error(setting, r, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastRow { setting, records })
}

pub fn forecast_table(
    settings: &[Setting],
    seed: u64,
    replications: usize,
    config: &EvalConfig,
) -> Result<Vec<ForecastRow>> {
    settings
        .iter()
        .map(|s| replicate_forecast(*s, seed, replications, config))
        .collect()
}

/// `N,T,MNR,p0_share_2,r_share_2_3`.
pub fn write_mnr_table<W: Write>(rows: &[MnrRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["N", "T", "MNR", "p0_share_2", "r_share_2_3", "replications"])?;
    for row in rows {
        wtr.write_record([
            row.setting.n.to_string(),
            row.setting.t.to_string(),
            row.mean_mnr().to_string(),
            row.p0_share(2).to_string(),
            row.factor_count_share(2, 3).to_string(),
            row.records.len().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<table writer>", e))?;
    Ok(())
}

/// `N,T,h,MAFE_FTS,MAFE_HDFTS,MSFE_FTS,MSFE_HDFTS`, one row per horizon.
pub fn write_forecast_table<W: Write>(rows: &[ForecastRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "N",
        "T",
        "h",
        "MAFE_FTS",
        "MAFE_HDFTS",
        "MSFE_FTS",
        "MSFE_HDFTS",
        "replications",
    ])?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for row in rows {
        for h in row.horizons() {
            wtr.write_record([
                row.setting.n.to_string(),
                row.setting.t.to_string(),
                h.to_string(),
                fmt(row.mean_mafe(Method::Baseline, h)),
                fmt(row.mean_mafe(Method::Hdfts, h)),
                fmt(row.mean_msfe(Method::Baseline, h)),
                fmt(row.mean_msfe(Method::Hdfts, h)),
                row.records.len().to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<table writer>", e))?;
    Ok(())
}

/// Counts of selected `p̂₀` across replications, keyed by order.
pub fn p0_histogram(row: &MnrRow) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for r in &row.records {
        *out.entry(r.p0).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tables_are_deterministic() {
        let settings = [Setting::new(4, 12)];
        let cfg = PipelineConfig::default();
        let a = mnr_table(&settings, 11, 2, &cfg).unwrap();
        let b = mnr_table(&settings, 11, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].records.len(), 2);
        assert!(a[0].mean_mnr() > 0.0);
        assert_eq!(p0_histogram(&a[0]).values().sum::<usize>(), 2);

        let mut buf = Vec::new();
        write_mnr_table(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("N,T,MNR"));
    }

    #[test]
    fn forecast_rows_have_every_horizon() {
        let cfg = EvalConfig {
            horizons: vec![1, 2],
            ..EvalConfig::default()
        };
        let rows = forecast_table(&[Setting::new(4, 16)], 3, 1, &cfg).unwrap();
        assert_eq!(rows[0].horizons(), vec![1, 2]);
        assert!(rows[0].mean_mafe(Method::Baseline, 2).unwrap() > 0.0);
        assert!(rows[0].mean_coverage(1).is_none());
        let mut buf = Vec::new();
        write_forecast_table(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(replicate_fit(Setting::new(4, 12), 0, 0, &PipelineConfig::default()).is_err());
    }
}
