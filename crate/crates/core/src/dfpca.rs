//! Dynamic functional principal components of a single population.
//!
//! Curves are centered, their long-run covariance kernel is estimated with
//! Bartlett weights, and the integral operator with that kernel is
//! diagonalized on the grid. Scores are trapezoidal projections of the
//! centered curves onto the eigenfunctions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::panel::Grid;

const SYMMETRY_TOL: f64 = 1e-10;

/// Discretized long-run covariance kernel `ĉ(u_j, u_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRunCov {
    pub matrix: DMatrix<f64>,
    pub grid: Grid,
    pub bandwidth: usize,
}

/// Cumulative-share truncation rule shared by the component and factor
/// selections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FveRule {
    pub threshold: f64,
    pub max_components: usize,
}

impl Default for FveRule {
    fn default() -> Self {
        Self {
            threshold: 0.99,
            max_components: 10,
        }
    }
}

impl FveRule {
    pub fn new(threshold: f64, max_components: usize) -> Result<Self> {
        let rule = Self {
            threshold,
            max_components,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("fve", "threshold must lie in (0, 1)"));
        }
        if self.max_components < 1 {
            return Err(Error::invalid("fve", "component cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfpcaResult {
    /// All eigenvalues of the discretized operator, descending.
    pub eigenvalues: Vec<f64>,
    /// `p₀ × w`; row `p` is the `p`-th eigenfunction on the grid.
    pub eigenfunctions: DMatrix<f64>,
    /// `T × p₀` scores of the centered curves.
    pub scores: DMatrix<f64>,
    pub mean_curve: DVector<f64>,
    /// Cumulative variance shares of `eigenvalues`.
    pub fve: Vec<f64>,
}

impl DfpcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    /// `μ̂ + Σ_p β̃_{p,t} γ̂_p` for every `t`, using the first `p` components.
    pub fn reconstruct(&self, p: usize) -> DMatrix<f64> {
        let p = p.min(self.n_components());
        let t = self.scores.nrows();
        let mut out = self.scores.columns(0, p) * self.eigenfunctions.rows(0, p);
        for r in 0..t {
            let mut row = out.row_mut(r);
            row += self.mean_curve.transpose();
        }
        out
    }
}

/// Subtracts the per-grid-point sample mean from every curve.
pub fn center(curves: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let t = curves.nrows();
    if t < 2 {
        return Err(Error::invalid(
            "dfpca",
            "centering needs at least two curves",
        ));
    }
    let mean = curves.row_mean().transpose();
    let mut centered = curves.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok((centered, mean))
}

/// Lag-`h` autocovariance kernel of already centered curves:
/// `(1/(T−h)) Σ_t X_t(u_j) X_{t+h}(u_k)`.
pub fn lag_cov_kernel(centered: &DMatrix<f64>, h: usize) -> Result<DMatrix<f64>> {
    let t = centered.nrows();
    if h >= t {
        return Err(Error::invalid(
            "dfpca",
            format!("lag {h} must be smaller than the series length {t}"),
        ));
    }
    let n = t - h;
    let lead = centered.rows(h, n);
    let base = centered.rows(0, n);
    Ok(base.transpose() * lead / n as f64)
}

/// Bartlett-weighted long-run covariance `Σ_{|h|≤q} (1 − |h|/q) ĉ_h`.
pub fn long_run_cov(centered: &DMatrix<f64>, grid: &Grid, bandwidth: usize) -> Result<LongRunCov> {
    let t = centered.nrows();
    if centered.ncols() != grid.len() {
        return Err(Error::dimension("dfpca", grid.len(), centered.ncols()));
    }
    if bandwidth < 1 || bandwidth >= t {
        return Err(Error::invalid(
            "dfpca",
            format!("bandwidth {bandwidth} must satisfy 1 <= q < T = {t}"),
        ));
    }
    let mut matrix = lag_cov_kernel(centered, 0)?;
    // weight vanishes at |h| = q
    for h in 1..bandwidth {
        let weight = 1.0 - h as f64 / bandwidth as f64;
        let c = lag_cov_kernel(centered, h)?;
        matrix += (&c + c.transpose()) * weight;
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(LongRunCov {
        matrix,
        grid: grid.clone(),
        bandwidth,
    })
}

/// Default bandwidth `⌊√T⌋`, at least 1.
pub fn default_bandwidth(t: usize) -> usize {
    ((t as f64).sqrt().floor() as usize).max(1)
}

/// Flips `v` so its entries sum to a nonnegative value; on a tie the first
/// nonzero entry is made positive.
pub(crate) fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let sum: f64 = v.sum();
    let scale = v.amax().max(f64::MIN_POSITIVE);
    let flip = if sum.abs() > 1e-12 * scale * v.len() as f64 {
        sum < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.neg_mut();
    }
    v
}

/// Symmetric eigendecomposition sorted by descending eigenvalue. Columns of
/// the returned matrix are the eigenvectors.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dimension(
            context,
            "square matrix",
            format!("{} x {}", m.nrows(), m.ncols()),
        ));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::invalid(
            context,
            format!("matrix is not symmetric (max asymmetry {asym:e})"),
        ));
    }
    Ok(())
}

/// Eigenpairs of the operator `x ↦ ∫ ĉ(·, v) x(v) dv` discretized with
/// trapezoidal weights `Q`.
///
/// Returns all `w` eigenvalues (descending, negatives clamped to zero)
/// and a `w × w` matrix whose rows are eigenfunctions normalized so that
/// `Σ_j Q_j γ(u_j)² = 1`.
pub fn eigendecompose(cov: &LongRunCov) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(&cov.matrix, "dfpca")?;
    let weights = cov.grid.trapezoid_weights();
    let w = weights.len();
    if cov.matrix.nrows() != w {
        return Err(Error::dimension("dfpca", w, cov.matrix.nrows()));
    }
    let root: Vec<f64> = weights.iter().map(|q| q.sqrt()).collect();
    // Q^{1/2} C Q^{1/2} is similar to C Q and symmetric.
    let mut m = DMatrix::from_fn(w, w, |j, k| root[j] * cov.matrix[(j, k)] * root[k]);
    m = (&m + m.transpose()) * 0.5;
    let (mut values, vectors) = sorted_symmetric_eigen(m);

    // The lag-weighted estimator is not PSD in finite samples, so negative
    // eigenvalues are sampling noise rather than numerical error.
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }

    let mut functions = DMatrix::zeros(w, w);
    for p in 0..w {
        let gamma = DVector::from_fn(w, |j, _| vectors[(j, p)] / root[j]);
        functions.row_mut(p).copy_from(&fix_sign(gamma).transpose());
    }
    Ok((values, functions))
}

/// Trapezoidal projections `Σ_j Q_j X_t(u_j) γ_p(u_j)`; result is `T × p₀`.
pub fn compute_scores(
    centered: &DMatrix<f64>,
    eigenfunctions: &DMatrix<f64>,
    grid: &Grid,
) -> Result<DMatrix<f64>> {
    let w = grid.len();
    if centered.ncols() != w || eigenfunctions.ncols() != w {
        return Err(Error::dimension(
            "dfpca",
            format!("{w} grid columns"),
            format!("{} and {}", centered.ncols(), eigenfunctions.ncols()),
        ));
    }
    let q = DVector::from_vec(grid.trapezoid_weights());
    let mut weighted = eigenfunctions.transpose();
    for mut col in weighted.column_iter_mut() {
        col.component_mul_assign(&q);
    }
    Ok(centered * weighted)
}

/// Cumulative shares of the (nonnegative) spectrum.
pub fn cumulative_fve(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .map(|v| {
            acc += v.max(0.0);
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Smallest order whose cumulative share reaches the threshold, capped.
pub fn select_order(eigenvalues: &[f64], rule: FveRule, context: &'static str) -> Result<usize> {
    rule.validate()?;
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroSpectrum { context });
    }
    let fve = cumulative_fve(eigenvalues);
    // Guard against the last share landing a rounding error short of 1.
    let k = fve
        .iter()
        .position(|f| *f >= rule.threshold - 1e-12)
        .map_or(fve.len(), |k| k + 1);
    Ok(k.min(rule.max_components).max(1))
}

pub fn select_p0(eigenvalues: &[f64], rule: FveRule) -> Result<usize> {
    select_order(eigenvalues, rule, "dfpca")
}

/// Centered curves plus the full spectral decomposition, before truncation.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub centered: DMatrix<f64>,
    pub mean_curve: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    /// `w × w`, rows are eigenfunctions.
    pub eigenfunctions: DMatrix<f64>,
}

impl Decomposition {
    /// Dynamic decomposition with bandwidth `q`; `q = 1` gives ordinary
    /// lag-0 FPCA.
    pub fn new(curves: &DMatrix<f64>, grid: &Grid, bandwidth: usize) -> Result<Self> {
        let (centered, mean_curve) = center(curves)?;
        let cov = long_run_cov(&centered, grid, bandwidth)?;
        let (eigenvalues, eigenfunctions) = eigendecompose(&cov)?;
        Ok(Self {
            centered,
            mean_curve,
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn select(&self, rule: FveRule) -> Result<usize> {
        select_p0(&self.eigenvalues, rule)
    }

    /// Keeps the first `p0` components and computes their scores.
    pub fn truncate(&self, p0: usize, grid: &Grid) -> Result<DfpcaResult> {
        let w = self.eigenfunctions.nrows();
        if p0 < 1 || p0 > w {
            return Err(Error::invalid(
                "dfpca",
                format!("cannot keep {p0} of {w} components"),
            ));
        }
        let eigenfunctions = self.eigenfunctions.rows(0, p0).into_owned();
        let scores = compute_scores(&self.centered, &eigenfunctions, grid)?;
        Ok(DfpcaResult {
            eigenvalues: self.eigenvalues.clone(),
            eigenfunctions,
            scores,
            mean_curve: self.mean_curve.clone(),
            fve: cumulative_fve(&self.eigenvalues),
        })
    }
}

/// Full per-population fit: center, long-run covariance, eigendecomposition,
/// FVE truncation and scores. `bandwidth = None` uses `⌊√T⌋`.
pub fn fit_dfpca(
    curves: &DMatrix<f64>,
    grid: &Grid,
    bandwidth: Option<usize>,
    rule: FveRule,
) -> Result<DfpcaResult> {
    let q = bandwidth.unwrap_or_else(|| default_bandwidth(curves.nrows()));
    let dec = Decomposition::new(curves, grid, q)?;
    let p0 = dec.select(rule)?;
    dec.truncate(p0, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize) -> Grid {
        Grid::uniform(0.0, 1.0, w).unwrap()
    }

    #[test]
    fn center_examples() {
        let (c, m) = center(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0])).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
        assert_eq!(m.as_slice(), [1.0, 2.0]);

        let (c, m) = center(&DMatrix::from_row_slice(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(c.as_slice(), [-1.0, 1.0]);

        assert!(center(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).is_err());
    }

    #[test]
    fn center_columns_match_direct_means() {
        let x = DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 2.5, 0.7, -0.4, 1.9]);
        let (c, m) = center(&x).unwrap();
        for j in 0..2 {
            let direct = (x[(0, j)] + x[(1, j)] + x[(2, j)]) / 3.0;
            assert!((m[j] - direct).abs() < 1e-15);
            assert!(c.column(j).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn lag_cov_examples() {
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]);
        assert_eq!(lag_cov_kernel(&x, 1).unwrap()[(0, 0)], 0.0);
        assert!((lag_cov_kernel(&x, 0).unwrap()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            lag_cov_kernel(&DMatrix::zeros(4, 3), 2).unwrap(),
            DMatrix::zeros(3, 3)
        );
        assert!(lag_cov_kernel(&x, 3).is_err());

        let (c, _) = center(&DMatrix::from_fn(5, 3, |t, j| ((t * 3 + j) as f64).sin())).unwrap();
        let c0 = lag_cov_kernel(&c, 0).unwrap();
        assert!((&c0 - c0.transpose()).amax() < 1e-15);
    }

    #[test]
    fn long_run_bandwidth_one_is_lag_zero() {
        let (c, _) = center(&DMatrix::from_fn(6, 4, |t, j| {
            ((t * 7 + j * 3) as f64).cos()
        }))
        .unwrap();
        let g = grid(4);
        let lr = long_run_cov(&c, &g, 1).unwrap();
        assert_eq!(lr.matrix, lag_cov_kernel(&c, 0).unwrap());
        assert!(long_run_cov(&c, &g, 0).is_err());
        assert!(long_run_cov(&c, &g, 6).is_err());
    }

    #[test]
    fn long_run_hand_value() {
        // lag0 = 1, lag1 = (1/3)(-3) = -1, weight 1/2 on each side
        let x = DMatrix::from_row_slice(4, 1, &[-1.0, 1.0, -1.0, 1.0]);
        let g = Grid::new(vec![0.0, 1.0]).unwrap();
        let x2 = DMatrix::from_fn(4, 2, |t, _| x[(t, 0)]);
        let lr = long_run_cov(&x2, &g, 2).unwrap();
        assert!((lr.matrix[(0, 0)] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn eigendecompose_two_point_identity() {
        let g = grid(2);
        let cov = LongRunCov {
            matrix: DMatrix::identity(2, 2),
            grid: g,
            bandwidth: 1,
        };
        let (vals, funcs) = eigendecompose(&cov).unwrap();
        assert!((vals[0] - 0.5).abs() < 1e-14 && (vals[1] - 0.5).abs() < 1e-14);
        for p in 0..2 {
            let norm: f64 = funcs.row(p).iter().map(|x| 0.5 * x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigendecompose_zero_and_asymmetric() {
        let g = grid(3);
        let (vals, _) = eigendecompose(&LongRunCov {
            matrix: DMatrix::zeros(3, 3),
            grid: g.clone(),
            bandwidth: 1,
        })
        .unwrap();
        assert!(vals.iter().all(|v| *v == 0.0));
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(eigendecompose(&LongRunCov {
            matrix: m,
            grid: g,
            bandwidth: 1
        })
        .is_err());
    }

    #[test]
    fn spectral_reconstruction_reproduces_kernel() {
        let g = Grid::new(vec![0.0, 0.1, 0.35, 0.6, 1.0]).unwrap();
        let (c, _) = center(&DMatrix::from_fn(9, 5, |t, j| {
            ((t * 5 + j * j) as f64 * 0.37).sin()
        }))
        .unwrap();
        let cov = long_run_cov(&c, &g, 1).unwrap();
        let (vals, funcs) = eigendecompose(&cov).unwrap();
        let mut rebuilt = DMatrix::zeros(5, 5);
        for (p, v) in vals.iter().enumerate() {
            let gp = funcs.row(p).transpose();
            rebuilt += &gp * gp.transpose() * *v;
        }
        assert!((rebuilt - &cov.matrix).amax() < 1e-8);
        let q = DMatrix::from_diagonal(&DVector::from_vec(g.trapezoid_weights()));
        let gram = &funcs * &q * funcs.transpose();
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-8);
    }

    #[test]
    fn indefinite_kernel_is_clamped() {
        let g = grid(2);
        let cov = LongRunCov {
            matrix: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            grid: g,
            bandwidth: 2,
        };
        // eigenvalues of Q^{1/2} C Q^{1/2} are ±1/2
        let (vals, funcs) = eigendecompose(&cov).unwrap();
        assert!((vals[0] - 0.5).abs() < 1e-12);
        assert_eq!(vals[1], 0.0);
        assert!((funcs[(0, 0)] - 1.0).abs() < 1e-12 && (funcs[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_examples() {
        let g = grid(7);
        let (c, _) = center(&DMatrix::from_fn(8, 7, |t, j| {
            ((t + 2 * j) as f64).sin() * (t as f64)
        }))
        .unwrap();
        let cov = long_run_cov(&c, &g, 2).unwrap();
        let (_, funcs) = eigendecompose(&cov).unwrap();
        let top = funcs.rows(0, 2).into_owned();

        let curve = DMatrix::from_fn(1, 7, |_, j| top[(0, j)]);
        let s = compute_scores(&curve, &top, &g).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-8 && s[(0, 1)].abs() < 1e-8);

        assert_eq!(
            compute_scores(&DMatrix::zeros(2, 7), &top, &g).unwrap(),
            DMatrix::zeros(2, 2)
        );

        let weights = g.trapezoid_weights();
        let s = compute_scores(&c, &top, &g).unwrap();
        for t in 0..8 {
            for p in 0..2 {
                let mut direct = 0.0;
                for j in 0..7 {
                    direct += weights[j] * c[(t, j)] * top[(p, j)];
                }
                assert!((s[(t, p)] - direct).abs() < 1e-12);
            }
        }
        assert!(compute_scores(&c, &top, &grid(6)).is_err());
    }

    #[test]
    fn select_p0_examples() {
        let rule = FveRule::default();
        assert_eq!(select_p0(&[0.99, 0.01], rule).unwrap(), 1);
        assert_eq!(select_p0(&[0.5, 0.5], rule).unwrap(), 2);
        assert!(matches!(
            select_p0(&[0.0, 0.0], rule),
            Err(Error::ZeroSpectrum { .. })
        ));
        let capped = FveRule::new(0.99, 2).unwrap();
        assert_eq!(select_p0(&[1.0, 1.0, 1.0, 1.0], capped).unwrap(), 2);
        assert!(FveRule::new(1.0, 3).is_err());
        assert!(FveRule::new(0.9, 0).is_err());
    }

    #[test]
    fn identical_curves_have_zero_spectrum() {
        let curves = DMatrix::from_fn(6, 5, |_, j| j as f64);
        assert!(matches!(
            fit_dfpca(&curves, &grid(5), None, FveRule::default()),
            Err(Error::ZeroSpectrum { .. })
        ));
    }

    #[test]
    fn default_bandwidth_values() {
        assert_eq!(default_bandwidth(41), 6);
        assert_eq!(default_bandwidth(150), 12);
        assert_eq!(default_bandwidth(2), 1);
    }

    #[test]
    fn sign_rule() {
        let v = fix_sign(DVector::from_vec(vec![-1.0, -2.0, 0.5]));
        assert_eq!(v.as_slice(), [1.0, 2.0, -0.5]);
        let v = fix_sign(DVector::from_vec(vec![0.0, -1.0, 1.0]));
        assert_eq!(v.as_slice(), [0.0, 1.0, -1.0]);
    }
}
