//! Squared-exponential covariance construction over years and site locations,
//! the uniform-grid subset-of-data approximation, and the random-walk prior
//! comparison utility.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative jitter added to the diagonal before factorisation, escalated
/// tenfold on failure up to `JITTER_MAX_REL`.
const JITTER_BASE_REL: f64 = 1e-6;
const JITTER_MAX_REL: f64 = 1e-2;

/// Length scale and amplitude of a squared-exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scale: f64,
    pub amplitude: f64,
}

impl KernelParams {
    pub fn new(length_scale: f64, amplitude: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel length scale must be positive, got {length_scale}"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            length_scale,
            amplitude,
        })
    }
}

/// Support points of a GP: time points of years, or planar site locations
/// in map units.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportPoints {
    Temporal(Vec<f64>),
    Spatial(Vec<[f64; 2]>),
}

impl SupportPoints {
    pub fn temporal(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("no support points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite support point".into()));
        }
        Ok(Self::Temporal(points))
    }

    pub fn spatial(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("no support points".into()));
        }
        if points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidInput("non-finite support point".into()));
        }
        Ok(Self::Spatial(points))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Temporal(p) => p.len(),
            Self::Spatial(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Temporal(p) => {
                let d = p[i] - p[j];
                d * d
            }
            Self::Spatial(p) => {
                let dx = p[i][0] - p[j][0];
                let dy = p[i][1] - p[j][1];
                dx * dx + dy * dy
            }
        }
    }
}

/// A positive-definite kernel matrix together with the jitter that made it
/// factorise and its Cholesky factor.
pub struct Covariance {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl Covariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn chol(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Kernel matrix sigma^2 exp(-|xi_i - xi_j|^2 / l^2) with a relative diagonal
/// nugget, validated positive definite.
pub fn build_covariance(params: &KernelParams, pts: &SupportPoints) -> Result<Covariance> {
    if pts.is_empty() {
        return Err(Error::InvalidInput("no support points".into()));
    }
    let n = pts.len();
    let s2 = params.amplitude * params.amplitude;
    let inv_l2 = 1.0 / (params.length_scale * params.length_scale);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = s2;
        for j in 0..i {
            let v = s2 * (-pts.sq_dist(i, j) * inv_l2).exp();
            if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite kernel entry".into()));
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }

    let mut jitter = JITTER_BASE_REL * s2;
    loop {
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered.clone()) {
            return Ok(Covariance {
                matrix: jittered,
                chol,
                jitter,
            });
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX_REL * s2 {
            return Err(Error::IllConditioned(format!(
                "kernel matrix (n = {n}, l = {}, sigma = {}) failed Cholesky up to jitter {:e}",
                params.length_scale,
                params.amplitude,
                JITTER_MAX_REL * s2,
            )));
        }
    }
}

/// Uniform grid over site locations: occupied square centers and the
/// site-to-center assignment of the subset-of-data approximation.
#[derive(Debug, Clone, Serialize)]
pub struct SodGrid {
    pub step: f64,
    pub centers: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
}

impl SodGrid {
    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }
}

/// Assign each site to the square of a uniform grid anchored at the
/// bounding-box minimum. Sites exactly on a boundary belong to the
/// higher-index square; only occupied squares get centers.
pub fn build_sod_grid(sites: &SupportPoints, step: f64) -> Result<SodGrid> {
    let SupportPoints::Spatial(sites) = sites else {
        return Err(Error::InvalidInput(
            "SoD grid requires 2-D site locations".into(),
        ));
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {step}"
        )));
    }
    let min_x = sites.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let min_y = sites.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);

    let cell_of = |p: &[f64; 2]| -> (i64, i64) {
        (
            ((p[0] - min_x) / step).floor() as i64,
            ((p[1] - min_y) / step).floor() as i64,
        )
    };

    let occupied: Vec<(i64, i64)> = sites.iter().map(cell_of).collect();
    let mut cells = occupied.clone();
    cells.sort_unstable();
    cells.dedup();

    let assignment: Vec<usize> = occupied
        .into_iter()
        .map(|c| cells.binary_search(&c).expect("cell present"))
        .collect();

    let centers: Vec<[f64; 2]> = cells
        .iter()
        .map(|&(ix, iy)| {
            [
                min_x + (ix as f64 + 0.5) * step,
                min_y + (iy as f64 + 0.5) * step,
            ]
        })
        .collect();

    Ok(SodGrid {
        step,
        centers,
        assignment,
    })
}

/// Covariance of a Gaussian random walk b_1 ~ N(mu, sigma1^2),
/// b_t ~ N(b_{t-1}, sigmab^2): entry (s, t) = sigma1^2 + (min(s,t) - 1) sigmab^2.
pub fn rw_covariance(sigma1: f64, sigmab: f64, t: usize) -> DMatrix<f64> {
    let s1 = sigma1 * sigma1;
    let sb = sigmab * sigmab;
    DMatrix::from_fn(t, t, |i, j| s1 + (i.min(j) as f64) * sb)
}

/// Stationarity comparison of the GP and random-walk priors on T unit-spaced
/// years: per-year variances and lag-1 correlations computed numerically from
/// the two covariance matrices.
#[derive(Debug, Clone, Serialize)]
pub struct PriorComparisonReport {
    pub gp_variances: Vec<f64>,
    pub gp_lag1_correlations: Vec<f64>,
    pub rw_variances: Vec<f64>,
    pub rw_lag1_correlations: Vec<f64>,
    pub gp_stationary: bool,
    pub rw_stationary: bool,
}

pub fn prior_comparison_report(
    gp: &KernelParams,
    sigma1: f64,
    sigmab: f64,
    t: usize,
) -> Result<PriorComparisonReport> {
    if t < 3 {
        return Err(Error::InvalidParameter(format!(
            "prior comparison needs T >= 3, got {t}"
        )));
    }
    let pts = SupportPoints::temporal((1..=t).map(|y| y as f64).collect())?;
    let gp_cov = build_covariance(gp, &pts)?;
    let rw_cov = rw_covariance(sigma1, sigmab, t);

    let diag = |m: &DMatrix<f64>| (0..t).map(|i| m[(i, i)]).collect::<Vec<_>>();
    let lag1 = |m: &DMatrix<f64>| {
        (0..t - 1)
            .map(|i| m[(i, i + 1)] / (m[(i, i)] * m[(i + 1, i + 1)]).sqrt())
            .collect::<Vec<_>>()
    };

    let gp_variances = diag(gp_cov.matrix());
    let gp_lag1 = lag1(gp_cov.matrix());
    let rw_variances = diag(&rw_cov);
    let rw_lag1 = lag1(&rw_cov);

    let near_constant = |xs: &[f64]| {
        let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        xs.iter().all(|x| (x - xs[0]).abs() <= 1e-9 * scale)
    };

    Ok(PriorComparisonReport {
        gp_stationary: near_constant(&gp_variances) && near_constant(&gp_lag1),
        rw_stationary: near_constant(&rw_variances) && near_constant(&rw_lag1),
        gp_variances,
        gp_lag1_correlations: gp_lag1,
        rw_variances,
        rw_lag1_correlations: rw_lag1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params(l: f64, sigma: f64) -> KernelParams {
        KernelParams::new(l, sigma).unwrap()
    }

    #[test]
    fn single_point_diagonal_is_amplitude_squared_plus_jitter() {
        let cov = build_covariance(
            &unit_params(1.0, 0.5),
            &SupportPoints::temporal(vec![3.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(cov.matrix().nrows(), 1);
        let expected = 0.25 + 1e-6 * 0.25;
        assert!((cov.matrix()[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn unit_distance_off_diagonal() {
        let cov = build_covariance(
            &unit_params(1.0, 1.0),
            &SupportPoints::temporal(vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!((cov.matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(cov.matrix()[(0, 1)], cov.matrix()[(1, 0)]);
    }

    #[test]
    fn long_distance_decays_to_numerical_zero() {
        let cov = build_covariance(
            &unit_params(1.0, 1.0),
            &SupportPoints::temporal(vec![0.0, 100.0]).unwrap(),
        )
        .unwrap();
        assert!(cov.matrix()[(0, 1)] < 1e-30);
        assert!((cov.matrix()[(0, 0)] - (1.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_coordinates() {
        assert!(SupportPoints::temporal(vec![0.0, f64::NAN]).is_err());
        assert!(SupportPoints::spatial(vec![[f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn translation_invariance() {
        let base: Vec<f64> = vec![0.3, 1.7, 2.2, 5.9];
        let shifted: Vec<f64> = base.iter().map(|x| x + 123.456).collect();
        let p = unit_params(1.3, 0.8);
        let a = build_covariance(&p, &SupportPoints::temporal(base).unwrap()).unwrap();
        let b = build_covariance(&p, &SupportPoints::temporal(shifted).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (x, y) = (a.matrix()[(i, j)], b.matrix()[(i, j)]);
                assert!(
                    (x - y).abs() <= 1e-12 * x.abs().max(1.0),
                    "({i},{j}): {x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn sod_single_square() {
        let sites =
            SupportPoints::spatial(vec![[1.0, 1.0], [5.0, 3.0], [9.0, 9.0], [0.0, 0.0]]).unwrap();
        let grid = build_sod_grid(&sites, 20.0).unwrap();
        assert_eq!(grid.n_cells(), 1);
        assert!(grid.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn sod_separated_sites() {
        let sites = SupportPoints::spatial(vec![[0.0, 0.0], [25.0, 0.0]]).unwrap();
        let grid = build_sod_grid(&sites, 20.0).unwrap();
        assert_eq!(grid.n_cells(), 2);
        assert_ne!(grid.assignment[0], grid.assignment[1]);
    }

    #[test]
    fn sod_rejects_bad_step() {
        let sites = SupportPoints::spatial(vec![[0.0, 0.0]]).unwrap();
        assert!(build_sod_grid(&sites, 0.0).is_err());
        assert!(build_sod_grid(&sites, -1.0).is_err());
    }

    #[test]
    fn sod_random_sites_against_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<[f64; 2]> = (0..10_000)
            .map(|_| [rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0])
            .collect();
        let grid = build_sod_grid(&SupportPoints::spatial(pts.clone()).unwrap(), 20.0).unwrap();
        assert!(grid.n_cells() <= 25, "M = {}", grid.n_cells());
        for (s, p) in pts.iter().enumerate() {
            let c = grid.centers[grid.assignment[s]];
            let d = (p[0] - c[0]).abs().max((p[1] - c[1]).abs());
            assert!(
                d <= 10.0 + 1e-9,
                "site {s} at max-distance {d} from its center"
            );
            // assigned center is a nearest center in max-norm
            let nearest = grid
                .centers
                .iter()
                .map(|q| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= nearest + 1e-9);
        }
    }

    #[test]
    fn sod_step_to_zero_separates_distinct_sites() {
        let pts = vec![[0.0, 0.0], [0.3, 0.9], [2.0, 2.0], [0.3, 0.9]];
        let sites = SupportPoints::spatial(pts.clone()).unwrap();
        for &step in &[4.0, 1.0, 0.25, 0.01, 1e-4] {
            let grid = build_sod_grid(&sites, step).unwrap();
            assert!(grid.n_cells() <= 3);
            if step <= 0.01 {
                assert_eq!(grid.n_cells(), 3);
                for (s, p) in pts.iter().enumerate() {
                    let c = grid.centers[grid.assignment[s]];
                    let d = (p[0] - c[0]).abs().max((p[1] - c[1]).abs());
                    assert!(d <= step / 2.0 + 1e-12);
                }
            }
        }
        // duplicate sites share a cell at every step
        let fine = build_sod_grid(&sites, 1e-6).unwrap();
        assert_eq!(fine.assignment[1], fine.assignment[3]);
    }

    #[test]
    fn rw_covariance_closed_forms() {
        let (s1, sb) = (0.7, 1.3);
        let m = rw_covariance(s1, sb, 4);
        assert!((m[(2, 2)] - (s1 * s1 + 2.0 * sb * sb)).abs() < 1e-15);
        assert!((m[(0, 3)] - s1 * s1).abs() < 1e-15);
        for i in 0..4 {
            for j in 0..4 {
                let expected = s1 * s1 + (i.min(j) as f64) * sb * sb;
                assert_eq!(m[(i, j)], expected);
            }
        }
        let degenerate = rw_covariance(1.5, 0.0, 4);
        assert!(degenerate.iter().all(|&v| (v - 2.25).abs() < 1e-15));
    }

    #[test]
    fn prior_comparison_flags_stationarity() {
        let report = prior_comparison_report(&unit_params(2.0, 0.9), 1.0, 1.0, 5).unwrap();
        assert!(report.gp_stationary);
        assert!(!report.rw_stationary);
        // GP diagonal constant at sigma^2 + jitter
        let expected = 0.81 * (1.0 + 1e-6);
        for v in &report.gp_variances {
            assert!((v - expected).abs() < 1e-12);
        }
        // RW variances 1, 2, 3, 4, 5 for sigma1 = sigmab = 1
        for (t, v) in report.rw_variances.iter().enumerate() {
            assert!((v - (t as f64 + 1.0)).abs() < 1e-12);
        }
        // RW lag-1 correlations strictly vary
        let lag1 = &report.rw_lag1_correlations;
        for w in lag1.windows(2) {
            assert!((w[0] - w[1]).abs() > 1e-6);
        }
    }

    #[test]
    fn prior_comparison_requires_three_years() {
        assert!(prior_comparison_report(&unit_params(1.0, 1.0), 1.0, 1.0, 2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn covariance_factorises_and_is_symmetric(
            l in 0.05f64..20.0,
            sigma in 0.05f64..5.0,
            n in 1usize..12,
            seed in 0u64..u64::MAX,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 50.0).collect();
            let cov = build_covariance(
                &KernelParams::new(l, sigma).unwrap(),
                &SupportPoints::temporal(pts).unwrap(),
            ).unwrap();
            let m = cov.matrix();
            for i in 0..n {
                for j in 0..n {
                    proptest::prop_assert_eq!(m[(i, j)], m[(j, i)]);
                }
            }
            proptest::prop_assert!(cov.log_det().is_finite());
        }
    }
}
