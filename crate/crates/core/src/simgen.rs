//! Simulated panels with three score components driven by factor models.
//!
//! For `p = 1, 2, 3`, scores are `β_{p,t} = A_p f_{p,t}` with `A_p` an
//! `N × N` matrix of `N^{-1/4}`-scaled Gaussian draws. The first factor of
//! every component is an AR(1) with coefficient 0.5; the others are AR(1)
//! series with coefficient 0.2 scaled by `1/N`. Population `i` combines its
//! scores with the phase-shifted basis `sin(2πu + πi/2)`, `cos(2πu + πi/2)`,
//! `sin(4πu + πi/2)` on a uniform grid over `[0, 1]`.
//!
//! Draw order within a replication is fixed: loadings for `p = 1, 2, 3`, then
//! factors for `p = 1, 2, 3`; each matrix is filled row by row, and each
//! factor row draws its burn-in innovations first.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::panel::{FunctionalPanel, Grid};
use crate::rng::{derive_seed, stream_rng, Domain};

pub const BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub w: usize,
    pub seed: u64,
    pub replication: u64,
}

impl DgpConfig {
    pub fn new(n: usize, t: usize, seed: u64, replication: u64) -> Self {
        Self {
            n,
            t,
            w: 51,
            seed,
            replication,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(
                "simgen",
                format!("N = {} but at least 2 populations are required", self.n),
            ));
        }
        if self.t < 8 {
            return Err(Error::invalid(
                "simgen",
                format!("T = {} but at least 8 time points are required", self.t),
            ));
        }
        if self.w < 2 {
            return Err(Error::invalid(
                "simgen",
                "at least 2 grid points are required",
            ));
        }
        Ok(())
    }
}

/// Rows: `sin(2πu + πi/2)`, `cos(2πu + πi/2)`, `sin(4πu + πi/2)`.
pub fn generate_basis(i: usize, grid: &Grid) -> DMatrix<f64> {
    let phase = PI * i as f64 / 2.0;
    let u = grid.points();
    DMatrix::from_fn(3, u.len(), |row, j| match row {
        0 => (2.0 * PI * u[j] + phase).sin(),
        1 => (2.0 * PI * u[j] + phase).cos(),
        _ => (4.0 * PI * u[j] + phase).sin(),
    })
}

/// `N × N` loadings for component `p ∈ {1, 2, 3}`: `N^{-1/4} b` with
/// `b ~ N(2, 4)` for `p ≤ 2` and `b ~ N(0, 0.04)` for `p = 3` (variances).
pub fn generate_loadings<R: Rng>(n: usize, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let dist = match p {
        1 | 2 => Normal::new(2.0, 2.0),
        3 => Normal::new(0.0, 0.2),
        _ => {
            return Err(Error::invalid(
                "simgen",
                format!("component {p} is not generated"),
            ))
        }
    }
    .expect("valid normal parameters");
    let scale = (n as f64).powf(-0.25);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = scale * dist.sample(rng);
        }
    }
    Ok(a)
}

/// `N × T` factors: row 1 is AR(1) with `phi_lead`, rows `2..N` are
/// `(1/N)`·AR(1) with `phi_rest`. Chains start at zero and run a burn-in.
pub fn generate_factors<R: Rng>(
    n: usize,
    t: usize,
    rng: &mut R,
    phi_lead: f64,
    phi_rest: f64,
) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(n, t);
    for i in 0..n {
        let (phi, scale) = if i == 0 {
            (phi_lead, 1.0)
        } else {
            (phi_rest, 1.0 / n as f64)
        };
        let mut state = 0.0;
        for step in 0..BURN_IN + t {
            let omega: f64 = StandardNormal.sample(rng);
            state = phi * state + omega;
            if step >= BURN_IN {
                f[(i, step - BURN_IN)] = scale * state;
            }
        }
    }
    f
}

/// A generated panel plus the quantities it was assembled from.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: FunctionalPanel,
    /// `A_p`, `N × N`.
    pub loadings: Vec<DMatrix<f64>>,
    /// `f_p`, `N × T`.
    pub factors: Vec<DMatrix<f64>>,
    /// `β_p = A_p f_p`, `N × T`.
    pub scores: Vec<DMatrix<f64>>,
}

type ScoresAndCurves = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Curves `X_t^{(i)}(u) = Σ_p [A_p f_{p,t}]_i γ_p^{(i)}(u)` from three
/// `(A_p, f_p)` pairs; population `i` (0-based) uses basis index `i + 1`.
/// Returns the scores and one `T × w` matrix per population.
pub fn assemble_curves(
    loadings: &[DMatrix<f64>],
    factors: &[DMatrix<f64>],
    grid: &Grid,
) -> Result<ScoresAndCurves> {
    if loadings.len() != 3 || factors.len() != 3 {
        return Err(Error::dimension(
            "simgen",
            3,
            format!("{} and {}", loadings.len(), factors.len()),
        ));
    }
    let n = loadings[0].nrows();
    let t = factors[0].ncols();
    for (a, f) in loadings.iter().zip(factors) {
        if a.nrows() != n || a.ncols() != f.nrows() || f.ncols() != t {
            return Err(Error::dimension(
                "simgen",
                format!("{n} x k and k x {t}"),
                format!("{:?} and {:?}", a.shape(), f.shape()),
            ));
        }
    }
    let scores: Vec<DMatrix<f64>> = loadings.iter().zip(factors).map(|(a, f)| a * f).collect();
    let curves = (0..n)
        .map(|i| {
            let basis = generate_basis(i + 1, grid);
            let coef = DMatrix::from_fn(t, 3, |s, p| scores[p][(i, s)]);
            coef * basis
        })
        .collect();
    Ok((scores, curves))
}

pub fn generate_panel(config: &DgpConfig) -> Result<SimulatedPanel> {
    config.validate()?;
    let DgpConfig { n, t, w, .. } = *config;
    let mut rng = stream_rng(
        derive_seed(config.seed, Domain::Simulation, 0),
        config.replication,
    );
    let loadings = (1..=3)
        .map(|p| generate_loadings(n, p, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let factors: Vec<DMatrix<f64>> = (0..3)
        .map(|_| generate_factors(n, t, &mut rng, 0.5, 0.2))
        .collect();
    let grid = Grid::uniform(0.0, 1.0, w)?;
    let (scores, curves) = assemble_curves(&loadings, &factors, &grid)?;
    Ok(SimulatedPanel {
        panel: FunctionalPanel::new(curves, grid)?,
        loadings,
        factors,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn basis_values() {
        let g = Grid::new(vec![0.0, 0.25, 1.0]).unwrap();
        let b0 = generate_basis(0, &g);
        assert!(close(b0[(0, 0)], 0.0) && close(b0[(1, 0)], 1.0) && close(b0[(2, 0)], 0.0));
        let b1 = generate_basis(1, &g);
        assert!(close(b1[(0, 0)], 1.0) && close(b1[(1, 0)], 0.0) && close(b1[(2, 0)], 1.0));
        let b2 = generate_basis(2, &g);
        assert!(close(b2[(0, 1)], -1.0) && close(b2[(1, 1)], 0.0) && close(b2[(2, 1)], 0.0));
    }

    #[test]
    fn loading_moments() {
        let n = 400;
        let mut rng = stream_rng(5, 0);
        let a = generate_loadings(n, 1, &mut rng).unwrap();
        let scale = (n as f64).powf(-0.25);
        let mean = a.mean();
        let se = 2.0 * scale / (n as f64);
        assert!((mean - 2.0 * scale).abs() < 3.0 * se, "{mean}");

        let a3 = generate_loadings(n, 3, &mut rng).unwrap();
        let m3 = a3.mean();
        let var = a3.iter().map(|x| (x - m3).powi(2)).sum::<f64>() / (n * n - 1) as f64;
        let target = 0.04 / (n as f64).sqrt();
        assert!((var / target - 1.0).abs() < 0.02, "{var} vs {target}");
        assert!(generate_loadings(3, 4, &mut rng).is_err());
    }

    #[test]
    fn factor_moments() {
        let mut rng = stream_rng(9, 0);
        let f = generate_factors(6, 5000, &mut rng, 0.5, 0.2);
        let lead: Vec<f64> = f.row(0).iter().copied().collect();
        let m = lead.iter().sum::<f64>() / 5000.0;
        let num: f64 = lead.windows(2).map(|p| (p[0] - m) * (p[1] - m)).sum();
        let den: f64 = lead.iter().map(|x| (x - m).powi(2)).sum();
        assert!((0.45..=0.55).contains(&(num / den)));

        let target = 1.0 / 36.0 / (1.0 - 0.04);
        for i in 1..6 {
            let row: Vec<f64> = f.row(i).iter().copied().collect();
            let m = row.iter().sum::<f64>() / 5000.0;
            let var = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4999.0;
            assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
        }
    }

    #[test]
    fn determinism_and_stream_independence() {
        let a = generate_panel(&DgpConfig::new(5, 12, 3, 0)).unwrap();
        let b = generate_panel(&DgpConfig::new(5, 12, 3, 0)).unwrap();
        let c = generate_panel(&DgpConfig::new(5, 12, 3, 1)).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_ne!(a.panel, c.panel);
        let mut rng = stream_rng(1, 0);
        assert_eq!(
            generate_factors(3, 10, &mut rng.clone(), 0.5, 0.2),
            generate_factors(3, 10, &mut rng, 0.5, 0.2)
        );
    }

    #[test]
    fn shapes_and_validation() {
        let s = generate_panel(&DgpConfig::new(4, 10, 1, 0)).unwrap();
        assert_eq!(s.panel.n_populations(), 4);
        assert_eq!(s.panel.n_times(), 10);
        assert_eq!(s.panel.grid().len(), 51);
        assert!(generate_panel(&DgpConfig::new(1, 10, 1, 0)).is_err());
        assert!(generate_panel(&DgpConfig::new(3, 7, 1, 0)).is_err());
    }
}
