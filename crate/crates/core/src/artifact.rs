//! On-disk model artifacts: a directory of headerless CSV matrices plus a
//! `manifest.txt` of `key = value` lines.
//!
//! ```text
//! manifest.txt
//! grid.csv                       one grid point per line
//! labels.csv                     one population label per line
//! population_<i>/mean_curve.csv  w values
//!               /eigenvalues.csv all w eigenvalues
//!               /fve.csv         cumulative shares
//!               /eigenfunctions.csv  p0 × w
//!               /scores.csv      T × p0
//!               /residuals.csv   T × w
//! component_<p>/loadings.csv     N × r
//!              /factors.csv      r × T
//!              /score_means.csv  N values
//!              /l_eigenvalues.csv
//!              /ar.csv           per factor: mean, variance, stationary, φ₁..φ_k
//! ```
//!
//! Indices in file names are 1-based. Floats use the shortest representation
//! that parses back to the same bits, so a saved model reloads exactly.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::dfpca::DfpcaResult;
use crate::error::{Error, Result};
use crate::factor::{ComponentFactors, FactorModel};
use crate::forecast::ArModel;
use crate::panel::Grid;
use crate::pipeline::HdftsModel;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub model: HdftsModel,
    pub labels: Vec<String>,
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

fn matrix_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn vector_text(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}\n")).collect()
}

fn write_file(dir: &Path, name: &str, text: String) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn parse_f64(text: &str, path: &Path, line: usize) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|e| Error::Parse {
        row: line,
        message: format!("{}: `{}`: {e}", path.display(), text.trim()),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| line.split(',').map(|c| parse_f64(c, path, k + 1)).collect())
        .collect()
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let data = read_rows(path)?;
    if data.len() != rows || data.iter().any(|r| r.len() != cols) {
        return Err(Error::dimension(
            "artifact",
            format!("{rows} x {cols} in {}", path.display()),
            format!("{} rows", data.len()),
        ));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
}

fn read_vector(path: &Path, len: Option<usize>) -> Result<Vec<f64>> {
    let data = read_rows(path)?;
    if data.iter().any(|r| r.len() != 1) || len.is_some_and(|n| n != data.len()) {
        return Err(Error::dimension(
            "artifact",
            format!(
                "{} values in {}",
                len.map_or("a column of".to_string(), |n| n.to_string()),
                path.display()
            ),
            data.len(),
        ));
    }
    Ok(data.into_iter().map(|r| r[0]).collect())
}

fn write_contents(dir: &Path, artifact: &Artifact) -> Result<()> {
    let model = &artifact.model;
    let counts: Vec<String> = model
        .factor_counts()
        .iter()
        .map(|r| r.to_string())
        .collect();
    let manifest = format!(
        "format_version = {FORMAT_VERSION}\n\
         n_populations = {}\n\
         n_times = {}\n\
         grid_len = {}\n\
         p0 = {}\n\
         factor_counts = {}\n\
         bandwidth = {}\n\
         h0 = {}\n\
         max_ar_order = {}\n",
        model.n_populations(),
        model.n_times(),
        model.grid.len(),
        model.p0(),
        counts.join(","),
        model.bandwidth,
        model.factors.h0,
        model.max_ar_order,
    );
    write_file(dir, MANIFEST, manifest)?;
    write_file(dir, "grid.csv", vector_text(model.grid.points()))?;
    let labels: String = artifact.labels.iter().map(|l| format!("{l}\n")).collect();
    write_file(dir, "labels.csv", labels)?;

    for (i, fit) in model.dfpca.iter().enumerate() {
        let sub = dir.join(format!("population_{}", i + 1));
        make_dir(&sub)?;
        write_file(
            &sub,
            "mean_curve.csv",
            vector_text(fit.mean_curve.as_slice()),
        )?;
        write_file(&sub, "eigenvalues.csv", vector_text(&fit.eigenvalues))?;
        write_file(&sub, "fve.csv", vector_text(&fit.fve))?;
        write_file(&sub, "eigenfunctions.csv", matrix_text(&fit.eigenfunctions))?;
        write_file(&sub, "scores.csv", matrix_text(&fit.scores))?;
        write_file(&sub, "residuals.csv", matrix_text(&model.residuals[i]))?;
    }
    for (p, (c, ar)) in model.factors.components.iter().zip(&model.ar).enumerate() {
        let sub = dir.join(format!("component_{}", p + 1));
        make_dir(&sub)?;
        write_file(&sub, "loadings.csv", matrix_text(&c.loadings))?;
        write_file(&sub, "factors.csv", matrix_text(&c.factors))?;
        write_file(
            &sub,
            "score_means.csv",
            vector_text(c.score_means.as_slice()),
        )?;
        write_file(&sub, "l_eigenvalues.csv", vector_text(&c.l_eigenvalues))?;
        let lines: String = ar
            .iter()
            .map(|m| {
                let mut cells = vec![
                    m.mean.to_string(),
                    m.innovation_variance.to_string(),
                    u8::from(m.stationary).to_string(),
                ];
                cells.extend(m.coefficients.iter().map(|v| v.to_string()));
                cells.join(",") + "\n"
            })
            .collect();
        write_file(&sub, "ar.csv", lines)?;
    }
    Ok(())
}

/// Saves into `dir`, replacing a previous artifact there. The directory is
/// assembled under a temporary name and renamed into place.
pub fn save_model(artifact: &Artifact, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if artifact.labels.len() != artifact.model.n_populations() {
        return Err(Error::dimension(
            "artifact",
            artifact.model.n_populations(),
            artifact.labels.len(),
        ));
    }
    if dir.exists() && !dir.join(MANIFEST).exists() {
        let empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_none();
        if !empty {
            return Err(Error::invalid(
                "artifact",
                format!("{} exists and is not a model artifact", dir.display()),
            ));
        }
    }
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    make_dir(&tmp)?;
    if let Err(e) = write_contents(&tmp, artifact) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn parse_manifest(dir: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let path = dir.join(MANIFEST);
    let mut out = std::collections::BTreeMap::new();
    for (k, line) in read_text(&path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                row: k + 1,
                message: format!("{}: expected `key = value`", path.display()),
            });
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn manifest_usize(m: &std::collections::BTreeMap<String, String>, key: &str) -> Result<usize> {
    m.get(key)
        .ok_or_else(|| Error::invalid("artifact", format!("manifest lacks `{key}`")))?
        .parse()
        .map_err(|_| Error::invalid("artifact", format!("manifest `{key}` is not a count")))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<Artifact> {
    let dir = dir.as_ref();
    let m = parse_manifest(dir)?;
    let version = manifest_usize(&m, "format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::invalid(
            "artifact",
            format!("unsupported format version {version}"),
        ));
    }
    let n = manifest_usize(&m, "n_populations")?;
    let t = manifest_usize(&m, "n_times")?;
    let w = manifest_usize(&m, "grid_len")?;
    let p0 = manifest_usize(&m, "p0")?;
    let counts: Vec<usize> = m
        .get("factor_counts")
        .ok_or_else(|| Error::invalid("artifact", "manifest lacks `factor_counts`"))?
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid("artifact", "bad factor count"))
        })
        .collect::<Result<_>>()?;
    if counts.len() != p0 {
        return Err(Error::dimension("artifact", p0, counts.len()));
    }

    let grid = Grid::new(read_vector(&dir.join("grid.csv"), Some(w))?)?;
    let labels: Vec<String> = read_text(&dir.join("labels.csv"))?
        .lines()
        .map(str::to_string)
        .collect();
    if labels.len() != n {
        return Err(Error::dimension("artifact", n, labels.len()));
    }

    let mut dfpca = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for i in 1..=n {
        let sub = dir.join(format!("population_{i}"));
        dfpca.push(DfpcaResult {
            mean_curve: DVector::from_vec(read_vector(&sub.join("mean_curve.csv"), Some(w))?),
            eigenvalues: read_vector(&sub.join("eigenvalues.csv"), None)?,
            fve: read_vector(&sub.join("fve.csv"), None)?,
            eigenfunctions: read_matrix(&sub.join("eigenfunctions.csv"), p0, w)?,
            scores: read_matrix(&sub.join("scores.csv"), t, p0)?,
        });
        residuals.push(read_matrix(&sub.join("residuals.csv"), t, w)?);
    }

    let mut components = Vec::with_capacity(p0);
    let mut ar = Vec::with_capacity(p0);
    for (p, &r) in counts.iter().enumerate() {
        let sub = dir.join(format!("component_{}", p + 1));
        components.push(ComponentFactors {
            loadings: read_matrix(&sub.join("loadings.csv"), n, r)?,
            factors: read_matrix(&sub.join("factors.csv"), r, t)?,
            score_means: DVector::from_vec(read_vector(&sub.join("score_means.csv"), Some(n))?),
            l_eigenvalues: read_vector(&sub.join("l_eigenvalues.csv"), None)?,
        });
        let ar_path = sub.join("ar.csv");
        let rows = read_rows(&ar_path)?;
        if rows.len() != r || rows.iter().any(|row| row.len() < 3) {
            return Err(Error::dimension(
                "artifact",
                format!("{r} AR rows in {}", ar_path.display()),
                rows.len(),
            ));
        }
        ar.push(
            rows.into_iter()
                .map(|row| ArModel {
                    mean: row[0],
                    innovation_variance: row[1],
                    stationary: row[2] != 0.0,
                    coefficients: row[3..].to_vec(),
                })
                .collect(),
        );
    }

    let model = HdftsModel {
        grid,
        bandwidth: manifest_usize(&m, "bandwidth")?,
        max_ar_order: manifest_usize(&m, "max_ar_order")?,
        dfpca,
        factors: FactorModel {
            components,
            h0: manifest_usize(&m, "h0")?,
        },
        ar,
        residuals,
    };
    Ok(Artifact { model, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::FunctionalPanel;
    use crate::pipeline::PipelineConfig;

    fn fitted() -> Artifact {
        let grid = Grid::uniform(0.0, 1.0, 7).unwrap();
        let curves = (0..3)
            .map(|i| {
                DMatrix::from_fn(12, 7, |t, j| {
                    ((t * 7 + j * 3 + i * 11) as f64 * 0.61).sin() / 3.0
                })
            })
            .collect();
        let panel = FunctionalPanel::new(curves, grid).unwrap();
        Artifact {
            model: HdftsModel::fit(&panel, &PipelineConfig::default()).unwrap(),
            labels: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let art = fitted();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model");
        save_model(&art, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, art);
        assert_eq!(
            back.model.point_forecast(3).unwrap(),
            art.model.point_forecast(3).unwrap()
        );
        // overwrite in place
        save_model(&art, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), art);
    }

    #[test]
    fn refuses_foreign_directory_and_bad_manifest() {
        let art = fitted();
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        assert!(save_model(&art, dir.path()).is_err());
        assert!(dir.path().join("notes.txt").exists());

        let path = dir.path().join("model");
        save_model(&art, &path).unwrap();
        fs::write(path.join(MANIFEST), "format_version = 99\n").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
