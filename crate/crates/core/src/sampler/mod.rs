//! The blocked Gibbs sampler.
//!
//! One iteration alternates: Pólya-Gamma auxiliaries for the occupancy
//! regression, the joint (intercept, year effects, grid-cell effects,
//! coefficients) Gaussian draw, the independent site effects, a marginalised
//! Metropolis-Hastings step on the temporal kernel hyperparameters, a grid
//! search on the spatial length scale with a conjugate amplitude draw, the
//! site-effect variance, the latent occupancy states, and the detection
//! block.

mod cross;
mod gibbs;

pub use cross::{
    BlockLayout, CrossProducts, UnitDesign, draw_from_precision, sparse_cross_products,
};
pub use gibbs::temporal_collapsed_log_marginal;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::{self, SodGrid, SupportPoints};
use crate::posterior::{ChainOutput, GofDraws, ParamDraws, RunMetadata};
use crate::{Error, Result, parallel, posterior};

/// Hyperprior values. Variance parameters carry inverse-gamma (shape, rate)
/// pairs on the variance scale; length scales carry gamma (shape, rate)
/// pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Occupancy intercept ~ N(mu0_psi, sigma0_psi^2).
    pub mu0_psi: f64,
    pub sigma0_psi: f64,
    /// Detection intercept mean ~ N(mu0_p, sigma0_p^2).
    pub mu0_p: f64,
    pub sigma0_p: f64,
    /// Coefficient prior variances.
    pub phi_psi: f64,
    pub phi_p: f64,
    pub a_sigma_t: f64,
    pub b_sigma_t: f64,
    pub a_sigma_s: f64,
    pub b_sigma_s: f64,
    pub a_sigma_eps: f64,
    pub b_sigma_eps: f64,
    pub a_sigma_p: f64,
    pub b_sigma_p: f64,
    pub a_l_t: f64,
    pub b_l_t: f64,
    pub a_l_s: f64,
    pub b_l_s: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu0_psi: 0.0,
            sigma0_psi: 2.0,
            mu0_p: 0.0,
            sigma0_p: 2.0,
            phi_psi: 4.0,
            phi_p: 4.0,
            a_sigma_t: 2.0,
            b_sigma_t: 1.0,
            a_sigma_s: 2.0,
            b_sigma_s: 1.0,
            a_sigma_eps: 2.0,
            b_sigma_eps: 1.0,
            a_sigma_p: 2.0,
            b_sigma_p: 1.0,
            a_l_t: 2.0,
            b_l_t: 1.0,
            a_l_s: 2.0,
            b_l_s: 1.0,
        }
    }
}

impl Priors {
    /// Rescale the length-scale priors so their means sit at half the data's
    /// time span and half the study-area diameter.
    pub fn scaled_to(mut self, ds: &Dataset) -> Self {
        let time_extent = match (ds.year_points.first(), ds.year_points.last()) {
            (Some(a), Some(b)) if b > a => b - a,
            _ => 1.0,
        };
        self.b_l_t = 2.0 * self.a_l_t / time_extent.max(1.0);
        let diameter = study_area_diameter(&ds.site_coords);
        if diameter > 0.0 {
            self.b_l_s = 2.0 * self.a_l_s / diameter;
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma0_psi", self.sigma0_psi),
            ("sigma0_p", self.sigma0_p),
            ("phi_psi", self.phi_psi),
            ("phi_p", self.phi_p),
            ("a_sigma_t", self.a_sigma_t),
            ("b_sigma_t", self.b_sigma_t),
            ("a_sigma_s", self.a_sigma_s),
            ("b_sigma_s", self.b_sigma_s),
            ("a_sigma_eps", self.a_sigma_eps),
            ("b_sigma_eps", self.b_sigma_eps),
            ("a_sigma_p", self.a_sigma_p),
            ("b_sigma_p", self.b_sigma_p),
            ("a_l_t", self.a_l_t),
            ("b_l_t", self.b_l_t),
            ("a_l_s", self.a_l_s),
            ("b_l_s", self.b_l_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn study_area_diameter(coords: &[[f64; 2]]) -> f64 {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in coords {
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(c[1]);
        max_y = max_y.max(c[1]);
    }
    ((max_x - min_x).powi(2) + (max_y - min_y).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Width of the spatial-approximation squares, map units (km).
    pub grid_step_km: f64,
    /// Candidate spatial length scales; default is 10 log-spaced values from
    /// the grid step to the study-area diameter.
    pub ls_grid: Option<Vec<f64>>,
    /// Worker threads for the data-parallel sweeps (0 = all available).
    pub threads: usize,
    /// Re-check every sparse cross-product against a dense multiplication.
    pub debug_dense_check: bool,
    /// Drop the autocorrelated spatial block.
    pub no_spatial: bool,
    /// Replace the year-specific detection intercepts with a single one.
    pub constant_detection: bool,
    /// Keep the detection-intercept hyperparameters fixed at their priors.
    pub fix_detection_hypers: bool,
    /// Calendar years for which per-site occupancy draws are retained
    /// (empty = first and last year).
    pub site_prob_years: Vec<i32>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burnin: 5_000,
            thin: 10,
            seed: 42,
            grid_step_km: 20.0,
            ls_grid: None,
            threads: 0,
            debug_dense_check: false,
            no_spatial: false,
            constant_detection: false,
            fix_detection_hypers: false,
            site_prob_years: Vec::new(),
        }
    }
}

/// Full parameter vector of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub mu_psi: f64,
    pub beta_psi: Vec<f64>,
    /// Year random effects (length Y).
    pub b: Vec<f64>,
    /// Grid-cell spatial effects (length M; empty without the spatial block).
    pub a_tilde: Vec<f64>,
    /// Independent site effects (length S).
    pub eps: Vec<f64>,
    /// Detection intercepts (length Y, or 1 under constant detection).
    pub u: Vec<f64>,
    pub beta_p: Vec<f64>,
    /// Latent occupancy of each sampling unit.
    pub z: Vec<bool>,
    pub omega_psi: Vec<f64>,
    /// Detection auxiliaries; only entries of currently-occupied
    /// observations are refreshed.
    pub omega_p: Vec<f64>,
    /// Temporal kernel amplitude and length scale.
    pub sigma_t: f64,
    pub l_t: f64,
    /// Spatial kernel amplitude; the length scale is a grid index.
    pub sigma_s: f64,
    pub l_s_idx: usize,
    pub sigma_eps2: f64,
    pub mu_p: f64,
    pub sigma_p2: f64,
}

/// Precomputed unit-amplitude kernel factors for one candidate spatial
/// length scale.
pub(crate) struct LsGridEntry {
    pub(crate) inv: nalgebra::DMatrix<f64>,
    pub(crate) log_det: f64,
}

pub struct Sampler<'a> {
    pub(crate) ds: &'a Dataset,
    pub(crate) priors: Priors,
    pub(crate) cfg: McmcConfig,
    pub(crate) grid: SodGrid,
    /// Grid cell of each unit's site.
    pub(crate) unit_cell: Vec<usize>,
    pub(crate) ls_grid: Vec<f64>,
    pub(crate) ls_pre: Vec<LsGridEntry>,
    pub(crate) state: ModelState,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) iteration: usize,
    // Metropolis-Hastings scale adaptation for (log l_T, log sigma_T).
    pub(crate) mh_log_scale: f64,
    pub(crate) mh_adapt_steps: usize,
    pub(crate) mh_accepts: usize,
    pub(crate) mh_steps: usize,
    pub(crate) jitter_events: usize,
    pub(crate) warnings: Vec<String>,
}

impl<'a> Sampler<'a> {
    pub fn new(ds: &'a Dataset, priors: Priors, cfg: McmcConfig) -> Result<Self> {
        priors.validate()?;
        if cfg.thin == 0 {
            return Err(Error::InvalidParameter("thin must be >= 1".into()));
        }
        if cfg.burnin > cfg.iterations {
            return Err(Error::InvalidParameter(format!(
                "burnin {} exceeds iterations {}",
                cfg.burnin, cfg.iterations
            )));
        }
        ds.validate()?;

        let sites = SupportPoints::spatial(ds.site_coords.clone())?;
        let grid = kernel::build_sod_grid(&sites, cfg.grid_step_km)?;
        let unit_cell: Vec<usize> = ds.units.site.iter().map(|&s| grid.assignment[s]).collect();

        let ls_grid = match &cfg.ls_grid {
            Some(g) => {
                if g.is_empty() || g.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return Err(Error::InvalidParameter(
                        "ls_grid must be positive values".into(),
                    ));
                }
                g.clone()
            }
            None => default_ls_grid(cfg.grid_step_km, study_area_diameter(&ds.site_coords)),
        };

        let mut jitter_events = 0usize;
        let ls_pre = if cfg.no_spatial {
            Vec::new()
        } else {
            let centers = SupportPoints::spatial(grid.centers.clone())?;
            ls_grid
                .iter()
                .map(|&l| {
                    let cov =
                        kernel::build_covariance(&kernel::KernelParams::new(l, 1.0)?, &centers)?;
                    if cov.jitter() > 1.1e-6 {
                        jitter_events += 1;
                    }
                    Ok(LsGridEntry {
                        inv: cov.inverse(),
                        log_det: cov.log_det(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = init_state(ds, &priors, &cfg, &grid, &ls_grid, &mut rng);

        Ok(Self {
            ds,
            priors,
            cfg,
            grid,
            unit_cell,
            ls_grid,
            ls_pre,
            state,
            rng,
            iteration: 0,
            mh_log_scale: 0.3f64.ln(),
            mh_adapt_steps: 0,
            mh_accepts: 0,
            mh_steps: 0,
            jitter_events,
            warnings: Vec::new(),
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ModelState {
        &mut self.state
    }

    /// Restart the serial random stream; useful for replication tests.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Override the Metropolis-Hastings proposal scale (0 freezes the
    /// temporal hyperparameters entirely).
    pub fn set_mh_scale(&mut self, scale: f64) {
        self.mh_log_scale = scale.ln();
    }

    pub fn grid(&self) -> &SodGrid {
        &self.grid
    }

    pub fn ls_grid(&self) -> &[f64] {
        &self.ls_grid
    }

    /// Run the full update cycle for the configured number of iterations and
    /// collect thinned draws and derived summaries.
    pub fn run(mut self) -> Result<ChainOutput> {
        let cfg = self.cfg.clone();
        parallel::with_threads(cfg.threads, move || self.run_inner())?
    }

    fn run_inner(&mut self) -> Result<ChainOutput> {
        let started = std::time::Instant::now();
        let ds = self.ds;
        let n_draws_target = self
            .cfg
            .iterations
            .saturating_sub(self.cfg.burnin)
            .div_ceil(self.cfg.thin);

        let selected_years = self.selected_year_indices();
        let mut draws = ParamDraws::with_capacity(n_draws_target);
        let mut index_draws = Vec::with_capacity(n_draws_target);
        let mut psi_site_draws: Vec<(usize, Vec<Vec<f64>>)> = selected_years
            .iter()
            .map(|&t| (t, Vec::with_capacity(n_draws_target)))
            .collect();
        let (t1_obs, t2_obs) = posterior::observed_gof_stats(ds, &self.grid);
        let mut t1_rep = Vec::with_capacity(n_draws_target);
        let mut t2_rep = Vec::with_capacity(n_draws_target);

        for it in 0..self.cfg.iterations {
            self.step().map_err(|e| e.at_iteration(it))?;

            if it >= self.cfg.burnin && (it - self.cfg.burnin).is_multiple_of(self.cfg.thin) {
                self.record(&mut draws);
                index_draws.push(posterior::occupancy_index(
                    &self.state,
                    ds,
                    &self.grid.assignment,
                ));
                for (t, rows) in psi_site_draws.iter_mut() {
                    rows.push(posterior::psi_for_year(
                        &self.state,
                        ds,
                        &self.grid.assignment,
                        *t,
                    ));
                }
                let gof_seed = self.rng.next_u64();
                let (t1, t2) = posterior::gof_replicates(&self.state, ds, &self.grid, gof_seed);
                t1_rep.push(t1);
                t2_rep.push(t2);
            }
        }

        let metadata = RunMetadata {
            seed: self.cfg.seed,
            config: serde_json::to_value(&self.cfg)?,
            n_draws: draws.mu_psi.len(),
            n_obs: ds.n_obs(),
            n_units: ds.n_units(),
            n_sites: ds.n_sites(),
            n_years: ds.n_years(),
            n_cells: self.grid.n_cells(),
            mh_acceptance: if self.mh_steps > 0 {
                self.mh_accepts as f64 / self.mh_steps as f64
            } else {
                0.0
            },
            wall_seconds: started.elapsed().as_secs_f64(),
            jitter_events: self.jitter_events,
            warnings: std::mem::take(&mut self.warnings),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
        };

        Ok(ChainOutput {
            draws,
            index_draws,
            psi_site_draws,
            gof: GofDraws {
                t1_rep,
                t2_rep,
                t1_obs,
                t2_obs,
            },
            years: ds.years.clone(),
            region_centers: self.grid.centers.clone(),
            site_cell: self.grid.assignment.clone(),
            metadata,
        })
    }

    /// One full Gibbs cycle.
    pub fn step(&mut self) -> Result<()> {
        self.update_omega_psi()?;
        self.update_occupancy_block()?;
        self.update_eps()?;
        self.update_temporal_hypers()?;
        self.update_spatial_hypers()?;
        self.update_sigma_eps()?;
        self.update_z()?;
        self.update_detection_block()?;
        self.iteration += 1;
        Ok(())
    }

    fn selected_year_indices(&self) -> Vec<usize> {
        let ds = self.ds;
        if self.cfg.site_prob_years.is_empty() {
            let mut v = vec![0];
            if ds.n_years() > 1 {
                v.push(ds.n_years() - 1);
            }
            return v;
        }
        let mut v: Vec<usize> = self
            .cfg
            .site_prob_years
            .iter()
            .filter_map(|y| ds.years.iter().position(|dy| dy == y))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn record(&self, draws: &mut ParamDraws) {
        let s = &self.state;
        draws.mu_psi.push(s.mu_psi);
        draws.beta_psi.push(s.beta_psi.clone());
        draws.b.push(s.b.clone());
        draws.a_tilde.push(s.a_tilde.clone());
        draws.eps.push(s.eps.clone());
        draws.u.push(s.u.clone());
        draws.beta_p.push(s.beta_p.clone());
        draws.sigma_t.push(s.sigma_t);
        draws.l_t.push(s.l_t);
        draws.sigma_s.push(s.sigma_s);
        draws.l_s.push(self.ls_grid[s.l_s_idx]);
        draws.sigma_eps2.push(s.sigma_eps2);
        draws.mu_p.push(s.mu_p);
        draws.sigma_p2.push(s.sigma_p2);
    }
}

/// 10 log-spaced candidate length scales from the grid step to the
/// study-area diameter.
fn default_ls_grid(step: f64, diameter: f64) -> Vec<f64> {
    let lo = step;
    let hi = diameter.max(step * (1.0 + 1e-9));
    if hi <= lo {
        return vec![lo];
    }
    let n = 10usize;
    (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            (lo.ln() + frac * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

fn init_state(
    ds: &Dataset,
    priors: &Priors,
    cfg: &McmcConfig,
    grid: &SodGrid,
    ls_grid: &[f64],
    rng: &mut ChaCha8Rng,
) -> ModelState {
    let ig_mean = |a: f64, b: f64| if a > 1.0 { b / (a - 1.0) } else { 1.0 };
    // gamma(shape, rate) median via the Wilson-Hilferty approximation
    let gamma_median = |a: f64, b: f64| a * (1.0 - 1.0 / (9.0 * a)).powi(3) / b;

    let z: Vec<bool> = ds
        .units
        .any_detection
        .iter()
        .map(|&forced| forced || rng.random::<f64>() < 0.5)
        .collect();

    ModelState {
        mu_psi: 0.0,
        beta_psi: vec![0.0; ds.units.p],
        b: vec![0.0; ds.n_years()],
        a_tilde: if cfg.no_spatial {
            Vec::new()
        } else {
            vec![0.0; grid.n_cells()]
        },
        eps: vec![0.0; ds.n_sites()],
        u: vec![
            0.0;
            if cfg.constant_detection {
                1
            } else {
                ds.n_years()
            }
        ],
        beta_p: vec![0.0; ds.observations.p],
        z,
        omega_psi: vec![0.25; ds.n_units()],
        omega_p: vec![0.25; ds.n_obs()],
        sigma_t: ig_mean(priors.a_sigma_t, priors.b_sigma_t).sqrt(),
        l_t: gamma_median(priors.a_l_t, priors.b_l_t),
        sigma_s: ig_mean(priors.a_sigma_s, priors.b_sigma_s).sqrt(),
        l_s_idx: ls_grid.len() / 2,
        sigma_eps2: ig_mean(priors.a_sigma_eps, priors.b_sigma_eps),
        mu_p: priors.mu0_p,
        sigma_p2: ig_mean(priors.a_sigma_p, priors.b_sigma_p),
    }
}

/// Fit the model: construct a sampler and run the chain.
pub fn run_chain(ds: &Dataset, priors: &Priors, cfg: &McmcConfig) -> Result<ChainOutput> {
    Sampler::new(ds, *priors, cfg.clone())?.run()
}

/// One draw from InverseGamma(shape, rate) on the variance scale.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("inverse-gamma({shape}, {rate}): {e}")))?;
    let draw: f64 = g.sample(rng);
    Ok(1.0 / draw.max(f64::MIN_POSITIVE))
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), stable in both tails.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
