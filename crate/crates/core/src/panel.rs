//! Discretized functional panels: N populations, each a T × w matrix of curve
//! values on a grid shared by every population.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Strictly increasing evaluation points of the curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(
                "grid",
                "at least two grid points are required",
            ));
        }
        if let Some(j) = points.iter().position(|u| !u.is_finite()) {
            return Err(Error::invalid(
                "grid",
                format!("grid point {} is not finite", j + 1),
            ));
        }
        if let Some(j) = points.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::invalid(
                "grid",
                format!("grid is not strictly increasing at point {}", j + 2),
            ));
        }
        Ok(Self { points })
    }

    /// `w` equally spaced points covering `[a, b]`.
    pub fn uniform(a: f64, b: f64, w: usize) -> Result<Self> {
        if w < 2 {
            return Err(Error::invalid(
                "grid",
                "at least two grid points are required",
            ));
        }
        let step = (b - a) / (w - 1) as f64;
        let mut points: Vec<f64> = (0..w).map(|j| a + step * j as f64).collect();
        points[w - 1] = b;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Composite trapezoidal quadrature weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let u = &self.points;
        let w = u.len();
        let mut weights = vec![0.0; w];
        for j in 0..w - 1 {
            let half = 0.5 * (u[j + 1] - u[j]);
            weights[j] += half;
            weights[j + 1] += half;
        }
        weights
    }
}

/// Curves `X_t^(i)(u_j)` for populations `i`, times `t` and grid points `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalPanel {
    curves: Vec<DMatrix<f64>>,
    grid: Grid,
    labels: Vec<String>,
    times: Vec<i64>,
}

impl FunctionalPanel {
    /// Builds a panel from one `T × w` matrix per population. Labels default to
    /// `1..=N` and times to `1..=T`.
    pub fn new(curves: Vec<DMatrix<f64>>, grid: Grid) -> Result<Self> {
        let Some(first) = curves.first() else {
            return Err(Error::invalid(
                "panel",
                "a panel needs at least one population",
            ));
        };
        let t = first.nrows();
        if t < 2 {
            return Err(Error::invalid(
                "panel",
                "a panel needs at least two time points",
            ));
        }
        for (i, m) in curves.iter().enumerate() {
            if m.nrows() != t || m.ncols() != grid.len() {
                return Err(Error::dimension(
                    "panel",
                    format!("{t} x {}", grid.len()),
                    format!("{} x {} for population {}", m.nrows(), m.ncols(), i + 1),
                ));
            }
            if let Some(k) = m.iter().position(|v| !v.is_finite()) {
                // column-major storage
                let (row, col) = (k % t, k / t);
                return Err(Error::invalid(
                    "panel",
                    format!("non-finite value at ({}, {}, {})", i + 1, row + 1, col + 1),
                ));
            }
        }
        let n = curves.len();
        Ok(Self {
            curves,
            grid,
            labels: (1..=n).map(|i| i.to_string()).collect(),
            times: (1..=t as i64).collect(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.curves.len() {
            return Err(Error::dimension("panel", self.curves.len(), labels.len()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_times(mut self, times: Vec<i64>) -> Result<Self> {
        if times.len() != self.n_times() {
            return Err(Error::dimension("panel", self.n_times(), times.len()));
        }
        if times.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid(
                "panel",
                "time index must be strictly increasing",
            ));
        }
        self.times = times;
        Ok(self)
    }

    pub fn n_populations(&self) -> usize {
        self.curves.len()
    }

    pub fn n_times(&self) -> usize {
        self.curves[0].nrows()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    /// The `T × w` curve matrix of population `i` (zero-based).
    pub fn population(&self, i: usize) -> &DMatrix<f64> {
        &self.curves[i]
    }

    pub fn populations(&self) -> &[DMatrix<f64>] {
        &self.curves
    }

    pub fn value(&self, i: usize, t: usize, j: usize) -> f64 {
        self.curves[i][(t, j)]
    }

    /// Times `range` (zero-based, half-open) of every population.
    pub fn slice_times(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n_times() || range.len() < 2 {
            return Err(Error::invalid(
                "panel",
                format!("time range {range:?} invalid for T = {}", self.n_times()),
            ));
        }
        let w = self.grid.len();
        let curves = self
            .curves
            .iter()
            .map(|m| m.view((range.start, 0), (range.len(), w)).into_owned())
            .collect();
        Ok(Self {
            curves,
            grid: self.grid.clone(),
            labels: self.labels.clone(),
            times: self.times[range].to_vec(),
        })
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            curves: self.curves.iter().map(|m| m.map(&f)).collect(),
            grid: self.grid.clone(),
            labels: self.labels.clone(),
            times: self.times.clone(),
        }
    }
}

/// Train/test partition of the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_len: usize,
    pub test_len: usize,
}

impl SplitSpec {
    pub fn new(train_len: usize, test_len: usize) -> Self {
        Self {
            train_len,
            test_len,
        }
    }

    /// Holds out the last quarter (rounded down) of `t` time points.
    pub fn last_quarter(t: usize) -> Self {
        let test_len = t / 4;
        Self::new(t - test_len, test_len)
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if self.train_len + self.test_len != t {
            return Err(Error::invalid(
                "split",
                format!(
                    "train {} + test {} does not equal T = {t}",
                    self.train_len, self.test_len
                ),
            ));
        }
        if self.train_len < 4 {
            return Err(Error::invalid(
                "split",
                "training set needs at least 4 time points",
            ));
        }
        if self.test_len < 1 {
            return Err(Error::invalid(
                "split",
                "test set needs at least 1 time point",
            ));
        }
        Ok(())
    }
}

/// Splits the panel into its first `train_len` and last `test_len` times.
///
/// The test half is returned as raw curves since it may hold a single time
/// point, which is not a valid panel on its own.
pub fn split(panel: &FunctionalPanel, spec: SplitSpec) -> Result<(FunctionalPanel, TestSet)> {
    spec.validate(panel.n_times())?;
    let train = panel.slice_times(0..spec.train_len)?;
    let w = panel.grid.len();
    let test = TestSet {
        curves: panel
            .curves
            .iter()
            .map(|m| m.view((spec.train_len, 0), (spec.test_len, w)).into_owned())
            .collect(),
        times: panel.times[spec.train_len..].to_vec(),
    };
    Ok((train, test))
}

/// Held-out curves: one `T₂ × w` matrix per population.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub curves: Vec<DMatrix<f64>>,
    pub times: Vec<i64>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Appends `test` after `train`, inverting [`split`].
pub fn concat(train: &FunctionalPanel, test: &TestSet) -> Result<FunctionalPanel> {
    if test.curves.len() != train.n_populations() {
        return Err(Error::dimension(
            "panel",
            train.n_populations(),
            test.curves.len(),
        ));
    }
    let w = train.grid.len();
    let curves = train
        .curves
        .iter()
        .zip(&test.curves)
        .map(|(a, b)| {
            if b.ncols() != w {
                return Err(Error::dimension("panel", w, b.ncols()));
            }
            let mut m = DMatrix::zeros(a.nrows() + b.nrows(), w);
            m.rows_mut(0, a.nrows()).copy_from(a);
            m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut times = train.times.clone();
    times.extend_from_slice(&test.times);
    FunctionalPanel::new(curves, train.grid.clone())?
        .with_labels(train.labels.clone())?
        .with_times(times)
}

/// Elementwise natural logarithm.
pub fn log_transform(panel: &FunctionalPanel) -> Result<FunctionalPanel> {
    for (i, m) in panel.curves.iter().enumerate() {
        for t in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(t, j)] <= 0.0 {
                    return Err(Error::invalid(
                        "panel",
                        format!(
                            "log transform needs positive values, found {} at ({}, {}, {})",
                            m[(t, j)],
                            i + 1,
                            t + 1,
                            j + 1
                        ),
                    ));
                }
            }
        }
    }
    Ok(panel.map_values(f64::ln))
}

/// Nadaraya–Watson smoothing of every curve over the grid with a Gaussian
/// kernel of the given bandwidth.
pub fn presmooth(panel: &FunctionalPanel, bandwidth: f64) -> Result<FunctionalPanel> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(
            "panel",
            "presmoothing bandwidth must be positive",
        ));
    }
    let u = panel.grid.points();
    let w = u.len();
    let mut kernel = DMatrix::zeros(w, w);
    for j in 0..w {
        for k in 0..w {
            let z = (u[j] - u[k]) / bandwidth;
            kernel[(j, k)] = (-0.5 * z * z).exp();
        }
        let total: f64 = kernel.row(j).sum();
        kernel.row_mut(j).unscale_mut(total);
    }
    // Rows of the smoothed matrix are kernel-weighted averages of the input rows.
    let kt = kernel.transpose();
    let curves = panel.curves.iter().map(|m| m * &kt).collect();
    Ok(FunctionalPanel {
        curves,
        grid: panel.grid.clone(),
        labels: panel.labels.clone(),
        times: panel.times.clone(),
    })
}

/// On-disk layout of a panel CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvFormat {
    /// `population,time,grid,value`, one row per cell.
    Long,
    /// `population,time,u_1,…,u_w`, one row per curve; grid points in the header.
    Wide,
}

impl std::str::FromStr for CsvFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(CsvFormat::Long),
            "wide" => Ok(CsvFormat::Wide),
            other => Err(Error::invalid(
                "panel",
                format!("unknown CSV format `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for CsvFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CsvFormat::Long => "long",
            CsvFormat::Wide => "wide",
        })
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: CsvFormat) -> Result<FunctionalPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, format)
}

pub fn save_panel(
    panel: &FunctionalPanel,
    path: impl AsRef<Path>,
    format: CsvFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_panel(panel, file, format)
}

pub fn read_panel<R: Read>(reader: R, format: CsvFormat) -> Result<FunctionalPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    match format {
        CsvFormat::Long => read_long(&mut rdr),
        CsvFormat::Wide => read_wide(&mut rdr),
    }
}

pub fn write_panel<W: Write>(panel: &FunctionalPanel, writer: W, format: CsvFormat) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    let u = panel.grid.points();
    match format {
        CsvFormat::Long => {
            wtr.write_record(["population", "time", "grid", "value"])?;
            for (i, m) in panel.curves.iter().enumerate() {
                for (t, time) in panel.times.iter().enumerate() {
                    for (j, uj) in u.iter().enumerate() {
                        wtr.write_record([
                            panel.labels[i].clone(),
                            time.to_string(),
                            uj.to_string(),
                            m[(t, j)].to_string(),
                        ])?;
                    }
                }
            }
        }
        CsvFormat::Wide => {
            let mut header = vec!["population".to_string(), "time".to_string()];
            header.extend(u.iter().map(f64::to_string));
            wtr.write_record(&header)?;
            for (i, m) in panel.curves.iter().enumerate() {
                for (t, time) in panel.times.iter().enumerate() {
                    let mut row = vec![panel.labels[i].clone(), time.to_string()];
                    row.extend(m.row(t).iter().map(f64::to_string));
                    wtr.write_record(&row)?;
                }
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, row: usize) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        row,
        message: format!("{what} `{raw}` is not numeric"),
    })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<csv::StringRecord> {
    let header = rdr.headers()?.clone();
    if header.len() < expected.len()
        || expected
            .iter()
            .zip(header.iter())
            .any(|(e, h)| h.trim() != *e)
    {
        return Err(Error::Parse {
            row: 1,
            message: format!("header must start with `{}`", expected.join(",")),
        });
    }
    Ok(header)
}

/// Population order by first appearance plus each population's rows.
struct Collected {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Collected {
    fn new() -> Self {
        Self {
            labels: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn population(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }
}

fn sorted_unique_f64(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn read_long(rdr: &mut csv::Reader<impl Read>) -> Result<FunctionalPanel> {
    check_header(rdr, &["population", "time", "grid", "value"])?;
    let mut pops = Collected::new();
    let mut cells: Vec<(usize, i64, f64, f64, usize)> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record_line(&record, k + 2);
        if record.len() < 4 {
            return Err(Error::Parse {
                row,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let i = pops.population(record[0].trim());
        let time: i64 = parse_field(&record[1], "time", row)?;
        let u: f64 = parse_field(&record[2], "grid", row)?;
        let value: f64 = parse_field(&record[3], "value", row)?;
        if !u.is_finite() || !value.is_finite() {
            return Err(Error::Parse {
                row,
                message: "non-finite grid point or value".into(),
            });
        }
        cells.push((i, time, u, value, row));
    }
    let n = pops.labels.len();
    if n == 0 {
        return Err(Error::invalid("panel", "no data rows"));
    }

    let mut grids: Vec<Vec<f64>> = vec![Vec::new(); n];
    for &(i, _, u, _, _) in &cells {
        grids[i].push(u);
    }
    let grids: Vec<Vec<f64>> = grids.into_iter().map(sorted_unique_f64).collect();
    if let Some(i) = grids.iter().position(|g| g != &grids[0]) {
        return Err(Error::invalid(
            "panel",
            format!(
                "inconsistent grids: population `{}` differs from `{}`",
                pops.labels[i], pops.labels[0]
            ),
        ));
    }
    let grid_points = grids.into_iter().next().unwrap_or_default();
    let mut times: Vec<i64> = cells.iter().map(|c| c.1).collect();
    times.sort_unstable();
    times.dedup();

    let (t_len, w) = (times.len(), grid_points.len());
    let mut values = vec![DMatrix::from_element(t_len, w, f64::NAN); n];
    for &(i, time, u, value, row) in &cells {
        let t = times.binary_search(&time).expect("time collected above");
        let j = grid_points
            .binary_search_by(|g| g.total_cmp(&u))
            .expect("grid point collected above");
        if !values[i][(t, j)].is_nan() {
            return Err(Error::Parse {
                row,
                message: format!("duplicate cell ({}, {time}, {u})", pops.labels[i]),
            });
        }
        values[i][(t, j)] = value;
    }
    first_missing(&values)?;
    let grid = Grid::new(grid_points)?;
    FunctionalPanel::new(values, grid)?
        .with_labels(pops.labels)?
        .with_times(times)
}

fn read_wide(rdr: &mut csv::Reader<impl Read>) -> Result<FunctionalPanel> {
    let header = check_header(rdr, &["population", "time"])?;
    let grid_points = header
        .iter()
        .skip(2)
        .map(|h| parse_field::<f64>(h, "grid header", 1))
        .collect::<Result<Vec<_>>>()?;
    let w = grid_points.len();
    let mut pops = Collected::new();
    let mut rows: Vec<(usize, i64, Vec<f64>, usize)> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record_line(&record, k + 2);
        if record.len() != w + 2 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", w + 2, record.len()),
            });
        }
        let i = pops.population(record[0].trim());
        let time: i64 = parse_field(&record[1], "time", row)?;
        let vals = record
            .iter()
            .skip(2)
            .map(|v| {
                if v.trim().is_empty() {
                    Ok(f64::NAN)
                } else {
                    parse_field::<f64>(v, "value", row)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((i, time, vals, row));
    }
    let n = pops.labels.len();
    if n == 0 {
        return Err(Error::invalid("panel", "no data rows"));
    }
    let mut times: Vec<i64> = rows.iter().map(|r| r.1).collect();
    times.sort_unstable();
    times.dedup();
    let mut values = vec![DMatrix::from_element(times.len(), w, f64::NAN); n];
    let mut seen = vec![vec![false; times.len()]; n];
    for (i, time, vals, row) in rows {
        let t = times.binary_search(&time).expect("time collected above");
        if seen[i][t] {
            return Err(Error::Parse {
                row,
                message: format!("duplicate curve ({}, {time})", pops.labels[i]),
            });
        }
        seen[i][t] = true;
        for (j, v) in vals.into_iter().enumerate() {
            values[i][(t, j)] = v;
        }
    }
    first_missing(&values)?;
    let grid = Grid::new(grid_points)?;
    FunctionalPanel::new(values, grid)?
        .with_labels(pops.labels)?
        .with_times(times)
}

fn first_missing(values: &[DMatrix<f64>]) -> Result<()> {
    for (i, m) in values.iter().enumerate() {
        for t in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(t, j)].is_nan() {
                    return Err(Error::MissingCell {
                        population: i + 1,
                        time: t + 1,
                        grid: j + 1,
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FunctionalPanel {
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        FunctionalPanel::new(
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])],
            grid,
        )
        .unwrap()
    }

    #[test]
    fn long_csv_transcription() {
        let csv = "population,time,grid,value\nA,1,0,1\nA,1,1,2\nA,2,0,3\nA,2,1,4\n";
        let p = read_panel(csv.as_bytes(), CsvFormat::Long).unwrap();
        assert_eq!(p, tiny().with_labels(vec!["A".into()]).unwrap());
    }

    #[test]
    fn long_csv_hole_is_missing_cell() {
        let csv = "population,time,grid,value\nA,1,0,1\nA,1,1,2\nA,2,1,4\n";
        let err = read_panel(csv.as_bytes(), CsvFormat::Long).unwrap_err();
        assert!(
            matches!(
                err,
                Error::MissingCell {
                    population: 1,
                    time: 2,
                    grid: 1
                }
            ),
            "{err}"
        );
        assert!(err.to_string().contains("missing cell"));
    }

    #[test]
    fn non_numeric_value_reports_row() {
        let csv = "population,time,grid,value\nA,1,0,1\nA,1,1,abc\n";
        match read_panel(csv.as_bytes(), CsvFormat::Long).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn inconsistent_grids_rejected() {
        let csv = "population,time,grid,value\nA,1,0,1\nA,1,1,2\nA,2,0,1\nA,2,1,2\n\
                   B,1,0,1\nB,1,2,2\nB,2,0,1\nB,2,2,2\n";
        let err = read_panel(csv.as_bytes(), CsvFormat::Long).unwrap_err();
        assert!(err.to_string().contains("inconsistent grids"), "{err}");
    }

    #[test]
    fn populations_keep_first_appearance_and_times_sort() {
        let csv = "population,time,grid,value\nZ,2,0,5\nZ,2,1,6\nA,1,0,1\nA,1,1,2\n\
                   Z,1,0,7\nZ,1,1,8\nA,2,0,3\nA,2,1,4\n";
        let p = read_panel(csv.as_bytes(), CsvFormat::Long).unwrap();
        assert_eq!(p.labels(), ["Z", "A"]);
        assert_eq!(p.times(), [1, 2]);
        assert_eq!(p.value(0, 0, 0), 7.0);
        assert_eq!(p.value(1, 1, 1), 4.0);
    }

    #[test]
    fn wide_round_trip_is_bit_exact() {
        let grid = Grid::new(vec![0.0, 0.1, 1.0 / 3.0]).unwrap();
        let m = DMatrix::from_fn(3, 3, |t, j| (t as f64 + 0.1).sin() * 1e-7 + j as f64 / 7.0);
        let p = FunctionalPanel::new(vec![m.clone(), -m], grid).unwrap();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf, CsvFormat::Wide).unwrap();
        let back = read_panel(buf.as_slice(), CsvFormat::Wide).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn wide_blank_cell_is_missing() {
        let csv = "population,time,0,1\nA,1,1,2\nA,2,,4\n";
        let err = read_panel(csv.as_bytes(), CsvFormat::Wide).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingCell {
                population: 1,
                time: 2,
                grid: 1
            }
        ));
    }

    #[test]
    fn log_transform_values() {
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        let p = FunctionalPanel::new(
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[std::f64::consts::E, 1.0, 1.0, 1.0],
            )],
            grid,
        )
        .unwrap();
        let l = log_transform(&p).unwrap();
        assert!((l.value(0, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(l.value(0, 0, 1), 0.0);

        let zero = FunctionalPanel::new(
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])],
            Grid::new(vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let err = log_transform(&zero).unwrap_err();
        assert!(err.to_string().contains("(1, 1, 2)"), "{err}");
    }

    #[test]
    fn presmooth_constant_and_delta_limit() {
        let grid = Grid::uniform(0.0, 1.0, 11).unwrap();
        let c =
            FunctionalPanel::new(vec![DMatrix::from_element(3, 11, 2.5)], grid.clone()).unwrap();
        let s = presmooth(&c, 0.2).unwrap();
        assert!(s.population(0).iter().all(|v| (v - 2.5).abs() < 1e-12));

        let m = DMatrix::from_fn(3, 11, |t, j| ((t * 11 + j) as f64).cos());
        let p = FunctionalPanel::new(vec![m], grid).unwrap();
        let s = presmooth(&p, 1e-6).unwrap();
        let diff = (s.population(0) - p.population(0)).abs().max();
        assert!(diff < 1e-8);
    }

    #[test]
    fn presmooth_linear_interior_matches_kernel_average() {
        let grid = Grid::uniform(0.0, 1.0, 41).unwrap();
        let u = grid.points().to_vec();
        let m = DMatrix::from_fn(2, 41, |t, j| 1.0 + (t as f64 + 2.0) * u[j]);
        let p = FunctionalPanel::new(vec![m.clone()], grid).unwrap();
        let h = 0.03;
        let s = presmooth(&p, h).unwrap();
        for j in 10..31 {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..41 {
                let kw = (-0.5 * ((u[j] - u[k]) / h).powi(2)).exp();
                num += kw * m[(1, k)];
                den += kw;
            }
            assert!((s.value(0, 1, j) - num / den).abs() < 1e-12);
            assert!((s.value(0, 1, j) - m[(1, j)]).abs() < 10.0 * h * h);
        }
    }

    #[test]
    fn split_quarter_and_concat() {
        let grid = Grid::uniform(0.0, 1.0, 3).unwrap();
        let m = DMatrix::from_fn(8, 3, |t, j| (t * 3 + j) as f64);
        let p = FunctionalPanel::new(vec![m.clone(), m * 2.0], grid).unwrap();
        let spec = SplitSpec::last_quarter(8);
        assert_eq!(spec, SplitSpec::new(6, 2));
        let (train, test) = split(&p, spec).unwrap();
        assert_eq!(train.times(), [1, 2, 3, 4, 5, 6]);
        assert_eq!(test.times, [7, 8]);
        assert_eq!(concat(&train, &test).unwrap(), p);

        assert!(split(&p, SplitSpec::new(8, 0)).is_err());
        assert!(split(&p, SplitSpec::new(3, 5)).is_err());
        assert!(split(&p, SplitSpec::new(6, 3)).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let g = Grid::new(vec![0.0, 0.1, 0.5, 2.0]).unwrap();
        let w = g.trapezoid_weights();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert_eq!(
            Grid::uniform(0.0, 1.0, 2).unwrap().trapezoid_weights(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![0.0, f64::NAN]).is_err());
    }
}
