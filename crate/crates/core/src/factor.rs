//! Second-fold reduction: for each component `p`, the `N × T` matrix of
//! p-th scores across populations is reduced to `r_p` factors whose loadings
//! are the leading eigenvectors of `L̂ = Σ_{h=1}^{h₀} Σ̂(h) Σ̂(h)ᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::dfpca::{
    check_symmetric, fix_sign, select_order, sorted_symmetric_eigen, DfpcaResult, FveRule,
};
use crate::error::{Error, Result};

/// `B_p` (`N × T`) for `p = 1..=p₀`; row `i` is population `i`'s p-th score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub components: Vec<DMatrix<f64>>,
}

impl ScorePanel {
    /// Stacks the score columns of per-population fits sharing one `p₀`.
    pub fn from_dfpca(fits: &[DfpcaResult]) -> Result<Self> {
        let Some(first) = fits.first() else {
            return Err(Error::invalid("factor", "no populations"));
        };
        let (t, p0) = (first.scores.nrows(), first.scores.ncols());
        for f in fits {
            if f.scores.shape() != (t, p0) {
                return Err(Error::dimension(
                    "factor",
                    format!("{t} x {p0} scores"),
                    format!("{} x {}", f.scores.nrows(), f.scores.ncols()),
                ));
            }
        }
        let components = (0..p0)
            .map(|p| DMatrix::from_fn(fits.len(), t, |i, s| fits[i].scores[(s, p)]))
            .collect();
        Ok(Self { components })
    }

    pub fn p0(&self) -> usize {
        self.components.len()
    }
}

/// Loadings, factors and spectrum for one score component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFactors {
    /// `N × r`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// `r × T`.
    pub factors: DMatrix<f64>,
    /// Spectrum of `L̂`, descending.
    pub l_eigenvalues: Vec<f64>,
    /// Time means of the scores, restored at reconstruction.
    pub score_means: DVector<f64>,
}

impl ComponentFactors {
    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// `A f + b̄` for a factor vector `f`.
    pub fn scores_from(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.loadings * f + &self.score_means
    }

    /// Reduced scores `A F + b̄`, `N × T`.
    pub fn fitted_scores(&self) -> DMatrix<f64> {
        let mut b = &self.loadings * &self.factors;
        for mut col in b.column_iter_mut() {
            col += &self.score_means;
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub components: Vec<ComponentFactors>,
    pub h0: usize,
}

fn centered_rows(b: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = b.column_mean();
    let mut c = b.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    (c, mean)
}

/// `(1/(T−h)) Σ_t (b_{t+h} − b̄)(b_t − b̄)ᵀ`.
pub fn score_lag_cov(b: &DMatrix<f64>, h: usize) -> Result<DMatrix<f64>> {
    let t = b.ncols();
    if h < 1 || h >= t {
        return Err(Error::invalid(
            "factor",
            format!("lag {h} must satisfy 1 <= h < T = {t}"),
        ));
    }
    let (c, _) = centered_rows(b);
    let n = t - h;
    Ok(c.columns(h, n) * c.columns(0, n).transpose() / n as f64)
}

pub fn build_l(b: &DMatrix<f64>, h0: usize) -> Result<DMatrix<f64>> {
    let t = b.ncols();
    if h0 < 1 || h0 >= t {
        return Err(Error::invalid(
            "factor",
            format!("h0 = {h0} must satisfy 1 <= h0 < T = {t}"),
        ));
    }
    let n = b.nrows();
    let mut l = DMatrix::zeros(n, n);
    for h in 1..=h0 {
        let s = score_lag_cov(b, h)?;
        l += &s * s.transpose();
    }
    Ok((&l + l.transpose()) * 0.5)
}

/// Spectrum of `L̂` (descending) and its eigenvectors as columns.
pub fn l_spectrum(l: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(l, "factor")?;
    Ok(sorted_symmetric_eigen(l.clone()))
}

/// Top-`r` eigenvectors of `L̂` with the sign rule applied.
pub fn estimate_loadings(l: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (_, vectors) = l_spectrum(l)?;
    loadings_from_vectors(&vectors, r)
}

fn loadings_from_vectors(vectors: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let n = vectors.nrows();
    if r < 1 || r > n {
        return Err(Error::invalid(
            "factor",
            format!("cannot take {r} loadings from {n} populations"),
        ));
    }
    let cols: Vec<DVector<f64>> = (0..r)
        .map(|k| fix_sign(vectors.column(k).into_owned()))
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

pub fn select_r(l_eigenvalues: &[f64], rule: FveRule) -> Result<usize> {
    select_order(l_eigenvalues, rule, "factor")
}

/// `f_t = Aᵀ (b_t − b̄)`; returns the `r × T` factors and `b̄`.
pub fn extract_factors(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if a.nrows() != b.nrows() {
        return Err(Error::dimension("factor", a.nrows(), b.nrows()));
    }
    let (c, mean) = centered_rows(b);
    Ok((a.transpose() * c, mean))
}

/// Factor model for one score component.
pub fn fit_component(b: &DMatrix<f64>, h0: usize, rule: FveRule) -> Result<ComponentFactors> {
    let l = build_l(b, h0)?;
    let (l_eigenvalues, vectors) = l_spectrum(&l)?;
    let r = select_r(&l_eigenvalues, rule)?.min(b.nrows());
    let loadings = loadings_from_vectors(&vectors, r)?;
    let (factors, score_means) = extract_factors(&loadings, b)?;
    Ok(ComponentFactors {
        loadings,
        factors,
        l_eigenvalues,
        score_means,
    })
}

pub fn fit_factor_models(scores: &ScorePanel, h0: usize, rule: FveRule) -> Result<FactorModel> {
    let components = scores
        .components
        .iter()
        .map(|b| fit_component(b, h0, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorModel { components, h0 })
}
