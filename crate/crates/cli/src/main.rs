mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hdfts::artifact::{load_model, save_model, write_atomic, Artifact};
use hdfts::dfpca::FveRule;
use hdfts::eval::{expanding_window, format_reports, write_reports_csv, EvalConfig, Method};
use hdfts::forecast::{bootstrap_forecast, BootstrapConfig};
use hdfts::harness::{self, Setting, DESIGN_SETTINGS};
use hdfts::panel::{load_panel, log_transform, write_panel, CsvFormat, FunctionalPanel, SplitSpec};
use hdfts::rng::{derive_seed, Domain};
use hdfts::simgen::{generate_panel, DgpConfig};
use hdfts::{CommonOrder, HdftsModel, PipelineConfig};

use config::{List, Resolver};

#[derive(Parser)]
#[command(
    name = "hdfts",
    version,
    about = "Forecast high-dimensional functional time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a panel from the simulation design.
    Simulate(SimulateArgs),
    /// Fit the two-fold model to a panel and save it.
    Fit(FitArgs),
    /// Point forecasts and bootstrap intervals from a saved model.
    Forecast(ForecastArgs),
    /// Expanding-window evaluation against the independent baseline.
    Evaluate(EvaluateArgs),
    /// Monte Carlo replication of the simulation tables.
    Replicate(ReplicateArgs),
}

#[derive(Args)]
struct Common {
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Long-run covariance bandwidth (default ⌊√T⌋).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    fve_threshold: Option<f64>,
    #[arg(long)]
    max_components: Option<usize>,
    #[arg(long)]
    h0: Option<usize>,
    #[arg(long)]
    max_ar_order: Option<usize>,
    /// How populations share one component count: `pooled` or `max`.
    #[arg(long)]
    p0_rule: Option<CommonOrder>,
}

#[derive(Args)]
struct DataArgs {
    /// Panel CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `long` or `wide`.
    #[arg(long)]
    format: Option<CsvFormat>,
    /// Take logs of the curves before fitting.
    #[arg(long)]
    log_transform: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// Grid size.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replication: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    /// Model directory written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Held-out length (default T/4).
    #[arg(long)]
    test_len: Option<usize>,
    #[arg(long)]
    horizons: Option<List<usize>>,
    /// Any of `hdfts`, `fts`.
    #[arg(long)]
    methods: Option<List<Method>>,
    /// Also score bootstrap intervals for the two-fold model.
    #[arg(long)]
    intervals: bool,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// `mnr` or `forecast`.
    #[arg(long)]
    table: Option<Table>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Settings as `NxT`, e.g. `20x20,40x50`.
    #[arg(long)]
    settings: Option<List<SettingArg>>,
    #[arg(long)]
    horizons: Option<List<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Mnr,
    Forecast,
}

impl std::str::FromStr for Table {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mnr" => Ok(Table::Mnr),
            "forecast" => Ok(Table::Forecast),
            other => Err(format!(
                "unknown table `{other}` (expected mnr or forecast)"
            )),
        }
    }
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Table::Mnr => "mnr",
            Table::Forecast => "forecast",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SettingArg(Setting);

impl std::str::FromStr for SettingArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (n, t) = s
            .split_once('x')
            .ok_or_else(|| format!("`{s}`: expected NxT"))?;
        let n = n.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        let t = t.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        Ok(SettingArg(Setting::new(n, t)))
    }
}

impl std::fmt::Display for SettingArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.0.n, self.0.t)
    }
}

fn resolver(common: &Common) -> Result<Resolver> {
    Resolver::from_file(common.config.as_deref())
}

fn pipeline_config(r: &mut Resolver, args: &PipelineArgs) -> Result<PipelineConfig> {
    let defaults = PipelineConfig::default();
    let cfg = PipelineConfig {
        bandwidth: r.optional("q", args.q)?,
        fve: FveRule {
            threshold: r.get("fve-threshold", args.fve_threshold, defaults.fve.threshold)?,
            max_components: r.get(
                "max-components",
                args.max_components,
                defaults.fve.max_components,
            )?,
        },
        h0: r.get("h0", args.h0, defaults.h0)?,
        max_ar_order: r.get("max-ar-order", args.max_ar_order, defaults.max_ar_order)?,
        common_order: r.get("p0-rule", args.p0_rule, defaults.common_order)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_data(r: &mut Resolver, args: &DataArgs) -> Result<FunctionalPanel> {
    let path: PathBuf = r
        .required("data", args.data.as_ref().map(|p| p.display().to_string()))?
        .into();
    let format = r.get("format", args.format, CsvFormat::Long)?;
    let panel = load_panel(&path, format).with_context(|| format!("loading {}", path.display()))?;
    if r.flag("log-transform", args.log_transform)? {
        Ok(log_transform(&panel)?)
    } else {
        Ok(panel)
    }
}

fn out_dir(r: &mut Resolver, common: &Common) -> Result<PathBuf> {
    let dir: PathBuf = r
        .required("out", common.out.as_ref().map(|p| p.display().to_string()))?
        .into();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

fn finish(r: &Resolver, dir: &Path, command: &str) -> Result<()> {
    r.finish()?;
    write_atomic(&dir.join("config.txt"), r.echo_text(command).as_bytes())?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut r = resolver(&args.common)?;
    let n = r.required("n", args.n)?;
    let t = r.required("t", args.t)?;
    let w = r.get("w", args.w, 51)?;
    let seed = r.get("seed", args.seed, 0)?;
    let replication = r.get("replication", args.replication, 0)?;
    let dgp = DgpConfig {
        n,
        t,
        w,
        seed,
        replication,
    };
    dgp.validate()?;
    let dir = out_dir(&mut r, &args.common)?;
    r.finish()?;
    let sim = generate_panel(&dgp)?;

    let mut panel_bytes = Vec::new();
    write_panel(&sim.panel, &mut panel_bytes, CsvFormat::Long)?;
    write_atomic(&dir.join("panel.csv"), &panel_bytes)?;

    let factor_rows = sim.factors.iter().enumerate().flat_map(|(p, f)| {
        (0..f.nrows()).flat_map(move |k| {
            (0..f.ncols()).map(move |s| {
                vec![
                    (p + 1).to_string(),
                    (k + 1).to_string(),
                    (s + 1).to_string(),
                    f[(k, s)].to_string(),
                ]
            })
        })
    });
    write_csv(
        &dir.join("factors.csv"),
        &["component", "factor", "time", "value"],
        factor_rows,
    )?;
    let loading_rows = sim.loadings.iter().enumerate().flat_map(|(p, a)| {
        (0..a.nrows()).flat_map(move |i| {
            (0..a.ncols()).map(move |k| {
                vec![
                    (p + 1).to_string(),
                    (i + 1).to_string(),
                    (k + 1).to_string(),
                    a[(i, k)].to_string(),
                ]
            })
        })
    });
    write_csv(
        &dir.join("loadings.csv"),
        &["component", "population", "factor", "value"],
        loading_rows,
    )?;
    finish(&r, &dir, "simulate")?;
    println!(
        "wrote {} populations x {} times x {} grid points to {}",
        n,
        t,
        w,
        dir.display()
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let mut r = resolver(&args.common)?;
    let panel = read_data(&mut r, &args.data)?;
    let cfg = pipeline_config(&mut r, &args.pipeline)?;
    let dir = out_dir(&mut r, &args.common)?;
    r.finish()?;

    let model = HdftsModel::fit(&panel, &cfg)?;
    let fitted = model.fitted_curves()?;
    let mnr = hdfts::eval::mnr(panel.populations(), &fitted)?;

    let fitted_panel = FunctionalPanel::new(fitted, panel.grid().clone())?
        .with_labels(panel.labels().to_vec())?
        .with_times(panel.times().to_vec())?;
    let mut bytes = Vec::new();
    write_panel(&fitted_panel, &mut bytes, CsvFormat::Long)?;
    write_atomic(&dir.join("fitted.csv"), &bytes)?;

    let counts: Vec<String> = model
        .factor_counts()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let summary = format!(
        "mnr = {mnr}\np0 = {}\nfactor_counts = {}\nbandwidth = {}\n",
        model.p0(),
        counts.join(","),
        model.bandwidth
    );
    write_atomic(&dir.join("summary.txt"), summary.as_bytes())?;
    save_model(
        &Artifact {
            model,
            labels: panel.labels().to_vec(),
        },
        dir.join("model"),
    )?;
    finish(&r, &dir, "fit")?;
    print!("{summary}");
    Ok(())
}

fn forecast(args: ForecastArgs) -> Result<()> {
    let mut r = resolver(&args.common)?;
    let model_dir: PathBuf = r
        .required(
            "model",
            args.model.as_ref().map(|p| p.display().to_string()),
        )?
        .into();
    let horizon = r.get("horizon", args.horizon, 1)?;
    let defaults = BootstrapConfig::default();
    let replicates = r.get("b", args.b, defaults.replicates)?;
    let alpha = r.get("alpha", args.alpha, defaults.alpha)?;
    let seed = r.get("seed", args.seed, 0)?;
    let dir = out_dir(&mut r, &args.common)?;
    r.finish()?;

    let artifact =
        load_model(&model_dir).with_context(|| format!("loading model {}", model_dir.display()))?;
    let config = BootstrapConfig {
        replicates,
        alpha,
        seed: derive_seed(seed, Domain::Bootstrap, 0),
        keep_samples: false,
    };
    let bundle = bootstrap_forecast(&artifact.model, horizon, &config)?;
    let grid = artifact.model.grid.points().to_vec();
    let labels = &artifact.labels;

    let mut point_rows = Vec::new();
    let mut interval_rows = Vec::new();
    let mut region_rows = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        for h in 0..horizon {
            for (j, u) in grid.iter().enumerate() {
                let head = vec![label.clone(), (h + 1).to_string(), u.to_string()];
                point_rows.push([head.clone(), vec![bundle.point[i][(h, j)].to_string()]].concat());
                interval_rows.push(
                    [
                        head,
                        vec![
                            bundle.lower[i][(h, j)].to_string(),
                            bundle.upper[i][(h, j)].to_string(),
                        ],
                    ]
                    .concat(),
                );
            }
            region_rows.push(vec![
                label.clone(),
                (h + 1).to_string(),
                bundle.region_radius[(i, h)].to_string(),
            ]);
        }
    }
    write_csv(
        &dir.join("forecast.csv"),
        &["population", "horizon", "u", "value"],
        point_rows,
    )?;
    write_csv(
        &dir.join("intervals.csv"),
        &["population", "horizon", "u", "lower", "upper"],
        interval_rows,
    )?;
    write_csv(
        &dir.join("regions.csv"),
        &["population", "horizon", "radius"],
        region_rows,
    )?;
    finish(&r, &dir, "forecast")?;
    println!(
        "wrote {horizon}-step forecasts for {} populations to {}",
        labels.len(),
        dir.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut r = resolver(&args.common)?;
    let panel = read_data(&mut r, &args.data)?;
    let pipeline = pipeline_config(&mut r, &args.pipeline)?;
    let t = panel.n_times();
    let test_len = r.get("test-len", args.test_len, t / 4)?;
    if test_len >= t {
        bail!("test length {test_len} leaves no training data (T = {t})");
    }
    let horizons = r.get("horizons", args.horizons, List(vec![1, 2, 3]))?.0;
    let methods = r
        .get(
            "methods",
            args.methods,
            List(vec![Method::Hdfts, Method::Baseline]),
        )?
        .0;
    let intervals = r.flag("intervals", args.intervals)?;
    let defaults = BootstrapConfig::default();
    let replicates = r.get("b", args.b, defaults.replicates)?;
    let alpha = r.get("alpha", args.alpha, defaults.alpha)?;
    let seed = r.get("seed", args.seed, 0)?;
    let dir = out_dir(&mut r, &args.common)?;
    r.finish()?;

    let config = EvalConfig {
        pipeline,
        horizons,
        bootstrap: intervals.then_some(BootstrapConfig {
            replicates,
            alpha,
            seed: derive_seed(seed, Domain::Bootstrap, 0),
            keep_samples: false,
        }),
    };
    let split = SplitSpec::new(t - test_len, test_len);
    let reports = methods
        .iter()
        .map(|m| expanding_window(&panel, split, *m, &config))
        .collect::<hdfts::Result<Vec<_>>>()?;

    let mut bytes = Vec::new();
    write_reports_csv(&reports, &mut bytes)?;
    write_atomic(&dir.join("report.csv"), &bytes)?;
    let mut rows = Vec::new();
    for rep in &reports {
        for (metric, table) in [
            ("mafe", &rep.mafe_by_population),
            ("msfe", &rep.msfe_by_population),
        ] {
            for (h, values) in table {
                for (i, v) in values.iter().enumerate() {
                    rows.push(vec![
                        metric.to_string(),
                        h.to_string(),
                        rep.method.to_string(),
                        panel.labels()[i].clone(),
                        v.to_string(),
                    ]);
                }
            }
        }
    }
    write_csv(
        &dir.join("per_population.csv"),
        &["metric", "horizon", "method", "population", "value"],
        rows,
    )?;
    finish(&r, &dir, "evaluate")?;
    print!("{}", format_reports(&reports));
    Ok(())
}

fn replicate(args: ReplicateArgs) -> Result<()> {
    let mut r = resolver(&args.common)?;
    let table = r.get("table", args.table, Table::Mnr)?;
    let replications = r.get("replications", args.replications, 100)?;
    let seed = r.get("seed", args.seed, 0)?;
    let settings = r
        .get(
            "settings",
            args.settings,
            List(DESIGN_SETTINGS.iter().map(|s| SettingArg(*s)).collect()),
        )?
        .0
        .into_iter()
        .map(|s| s.0)
        .collect::<Vec<_>>();
    let pipeline = pipeline_config(&mut r, &args.pipeline)?;
    let horizons = if table == Table::Forecast {
        Some(r.get("horizons", args.horizons, List(vec![1, 2, 3]))?.0)
    } else {
        None
    };
    let dir = out_dir(&mut r, &args.common)?;
    r.finish()?;
    if replications < 1 {
        bail!("replications must be at least 1");
    }

    let mut bytes = Vec::new();
    let name = match table {
        Table::Mnr => {
            let rows = harness::mnr_table(&settings, seed, replications, &pipeline)?;
            harness::write_mnr_table(&rows, &mut bytes)?;
            "table_mnr.csv"
        }
        Table::Forecast => {
            let config = EvalConfig {
                pipeline,
                horizons: horizons.unwrap_or_default(),
                bootstrap: None,
            };
            let rows = harness::forecast_table(&settings, seed, replications, &config)?;
            harness::write_forecast_table(&rows, &mut bytes)?;
            "table_forecast.csv"
        }
    };
    write_atomic(&dir.join(name), &bytes)?;
    finish(&r, &dir, "replicate")?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Forecast(a) => forecast(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Replicate(a) => replicate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
