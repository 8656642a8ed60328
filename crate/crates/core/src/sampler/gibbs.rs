//! The individual update steps of the Gibbs cycle.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::kernel::{self, KernelParams, SupportPoints};
use crate::{Error, Result, parallel, pg};

use super::cross::{BlockLayout, UnitDesign, draw_from_precision, sparse_cross_products};
use super::{Sampler, draw_inverse_gamma, logistic, softplus};

impl<'a> Sampler<'a> {
    /// Occupancy linear predictor of unit j.
    pub fn eta_psi(&self, j: usize) -> f64 {
        self.eta_psi_minus_eps(j) + self.state.eps[self.ds.units.site[j]]
    }

    /// Occupancy linear predictor excluding the site effect.
    fn eta_psi_minus_eps(&self, j: usize) -> f64 {
        let ds = self.ds;
        let s = &self.state;
        let mut eta = s.mu_psi + s.b[ds.units.year[j]];
        if !s.a_tilde.is_empty() {
            eta += s.a_tilde[self.unit_cell[j]];
        }
        for (x, beta) in ds.units.row(j).iter().zip(&s.beta_psi) {
            eta += x * beta;
        }
        eta
    }

    /// Occupancy linear predictor excluding the year effect.
    fn eta_psi_minus_b(&self, j: usize) -> f64 {
        self.eta_psi(j) - self.state.b[self.ds.units.year[j]]
    }

    /// Detection linear predictor of observation i.
    pub fn eta_p(&self, i: usize) -> f64 {
        let ds = self.ds;
        let t = if self.cfg.constant_detection {
            0
        } else {
            ds.obs_year(i)
        };
        let mut eta = self.state.u[t];
        for (x, beta) in ds.observations.row(i).iter().zip(&self.state.beta_p) {
            eta += x * beta;
        }
        eta
    }

    fn all_eta_psi(&self) -> Vec<f64> {
        parallel::chunked_map(self.ds.n_units(), |lo, hi| {
            (lo..hi).map(|j| self.eta_psi(j)).collect::<Vec<_>>()
        })
        .concat()
    }

    fn all_eta_p(&self) -> Vec<f64> {
        parallel::chunked_map(self.ds.n_obs(), |lo, hi| {
            (lo..hi).map(|i| self.eta_p(i)).collect::<Vec<_>>()
        })
        .concat()
    }

    pub(crate) fn block_layout(&self) -> BlockLayout {
        BlockLayout {
            n_years: self.ds.n_years(),
            n_cells: if self.cfg.no_spatial {
                0
            } else {
                self.grid.n_cells()
            },
            n_covs: self.ds.units.p,
        }
    }

    fn unit_design(&self) -> UnitDesign<'_> {
        UnitDesign {
            year: &self.ds.units.year,
            cell: (!self.cfg.no_spatial).then_some(self.unit_cell.as_slice()),
            x: &self.ds.units.x,
            n_covs: self.ds.units.p,
            n_years: self.ds.n_years(),
            n_cells: self.grid.n_cells(),
        }
    }

    /// omega_j ~ PG(1, eta_j) for every sampling unit.
    pub fn update_omega_psi(&mut self) -> Result<()> {
        let etas = self.all_eta_psi();
        let base = self.rng.next_u64();
        let mut omega = std::mem::take(&mut self.state.omega_psi);
        parallel::chunked_fill(&mut omega, base, |start, chunk, rng| {
            for (off, w) in chunk.iter_mut().enumerate() {
                *w = pg::draw_pg1(etas[start + off], rng)?;
            }
            Ok(())
        })?;
        self.state.omega_psi = omega;
        Ok(())
    }

    /// Joint Gaussian draw of (intercept, year effects, cell effects,
    /// coefficients) given the auxiliaries, with the site effects absorbed
    /// into the pseudo-observations.
    pub fn update_occupancy_block(&mut self) -> Result<()> {
        let ds = self.ds;
        let s = &self.state;
        let layout = self.block_layout();

        let kappa: Vec<f64> = (0..ds.n_units())
            .map(|j| {
                let k = f64::from(u8::from(s.z[j])) - 0.5;
                k - s.omega_psi[j] * s.eps[ds.units.site[j]]
            })
            .collect();

        let design = self.unit_design();
        let cp = sparse_cross_products(&design, &s.omega_psi, &kappa);
        if self.cfg.debug_dense_check {
            dense_check(&design, &s.omega_psi, &kappa, &cp)?;
        }

        let mut prec = cp.xtwx;
        let mut rhs = cp.xtk;

        // intercept prior N(mu0, sigma0^2)
        let v0 = self.priors.sigma0_psi * self.priors.sigma0_psi;
        prec[(0, 0)] += 1.0 / v0;
        rhs[0] += self.priors.mu0_psi / v0;

        // year-effect prior: GP kernel over the year time points
        let kt = kernel::build_covariance(
            &KernelParams::new(s.l_t, s.sigma_t)?,
            &SupportPoints::temporal(ds.year_points.clone())?,
        )?;
        if kt.jitter() > 1.5e-6 * s.sigma_t * s.sigma_t {
            self.jitter_events += 1;
        }
        let kt_inv = kt.inverse();
        for a in 0..layout.n_years {
            for b in 0..layout.n_years {
                prec[(layout.year(a), layout.year(b))] += kt_inv[(a, b)];
            }
        }

        // cell-effect prior: precomputed unit-amplitude kernel over centers
        if layout.n_cells > 0 {
            let inv_scale = 1.0 / (s.sigma_s * s.sigma_s);
            let inv = &self.ls_pre[s.l_s_idx].inv;
            for a in 0..layout.n_cells {
                for b in 0..layout.n_cells {
                    prec[(layout.cell(a), layout.cell(b))] += inv[(a, b)] * inv_scale;
                }
            }
        }

        // coefficient prior N(0, phi I)
        for k in 0..layout.n_covs {
            prec[(layout.cov(k), layout.cov(k))] += 1.0 / self.priors.phi_psi;
        }

        let (draw, escalations) =
            draw_from_precision(prec, &rhs, "occupancy block", &mut self.rng)?;
        self.jitter_events += escalations;

        let state = &mut self.state;
        state.mu_psi = draw[0];
        for t in 0..layout.n_years {
            state.b[t] = draw[layout.year(t)];
        }
        for c in 0..layout.n_cells {
            state.a_tilde[c] = draw[layout.cell(c)];
        }
        for k in 0..layout.n_covs {
            state.beta_psi[k] = draw[layout.cov(k)];
        }
        Ok(())
    }

    /// Independent normal draws of the site effects; sites without units
    /// fall back to the prior N(0, sigma_eps^2).
    pub fn update_eps(&mut self) -> Result<()> {
        let ds = self.ds;
        let sigma_eps2 = self.state.sigma_eps2;
        let base = self.rng.next_u64();
        let mut eps = std::mem::take(&mut self.state.eps);
        parallel::chunked_fill(&mut eps, base, |start, chunk, rng| {
            for (off, e) in chunk.iter_mut().enumerate() {
                let site = start + off;
                let (lo, hi) = ds.site_unit_range[site];
                let mut sum_w = 0.0;
                let mut sum_k = 0.0;
                for j in lo..hi {
                    let w = self.state.omega_psi[j];
                    let k = f64::from(u8::from(self.state.z[j])) - 0.5;
                    sum_w += w;
                    sum_k += k - w * self.eta_psi_minus_eps(j);
                }
                let var = 1.0 / (sum_w + 1.0 / sigma_eps2);
                let noise: f64 = StandardNormal.sample(rng);
                *e = var * sum_k + var.sqrt() * noise;
            }
            Ok(())
        })?;
        self.state.eps = eps;
        Ok(())
    }

    /// Metropolis-Hastings on (log l_T, log sigma_T) under the marginal with
    /// the year effects integrated out; the effects themselves are redrawn
    /// by the next occupancy-block update under the accepted kernel.
    pub fn update_temporal_hypers(&mut self) -> Result<()> {
        let ds = self.ds;
        let y = ds.n_years();
        let mut omega_by_year = vec![0.0; y];
        let mut ztilde_by_year = vec![0.0; y];
        for j in 0..ds.n_units() {
            let t = ds.units.year[j];
            let w = self.state.omega_psi[j];
            let k = f64::from(u8::from(self.state.z[j])) - 0.5;
            omega_by_year[t] += w;
            ztilde_by_year[t] += k - w * self.eta_psi_minus_b(j);
        }

        let current = self.temporal_log_target(
            self.state.l_t,
            self.state.sigma_t,
            &omega_by_year,
            &ztilde_by_year,
        );
        let scale = self.mh_log_scale.exp();
        let e1: f64 = StandardNormal.sample(&mut self.rng);
        let e2: f64 = StandardNormal.sample(&mut self.rng);
        let l_prop = (self.state.l_t.ln() + scale * e1).exp();
        let s_prop = (self.state.sigma_t.ln() + scale * e2).exp();
        let proposed = self.temporal_log_target(l_prop, s_prop, &omega_by_year, &ztilde_by_year);

        let alpha = match (current, proposed) {
            (Ok(c), Ok(p)) if p.is_finite() => (p - c).exp().min(1.0),
            _ => {
                self.warn_once("non-finite temporal MH target; proposal rejected");
                0.0
            }
        };
        let accepted = self.rng.random::<f64>() < alpha;
        if accepted {
            self.state.l_t = l_prop;
            self.state.sigma_t = s_prop;
        }

        if self.iteration < self.cfg.burnin {
            // Robbins-Monro adaptation towards ~30% acceptance, frozen after
            // burn-in to preserve ergodicity.
            self.mh_adapt_steps += 1;
            let gain = (self.mh_adapt_steps as f64).powf(-0.6);
            self.mh_log_scale = (self.mh_log_scale + gain * (alpha - 0.3)).clamp(-10.0, 3.0);
        } else {
            self.mh_steps += 1;
            self.mh_accepts += usize::from(accepted);
        }
        Ok(())
    }

    fn temporal_log_target(
        &self,
        l: f64,
        sigma: f64,
        omega_by_year: &[f64],
        ztilde_by_year: &[f64],
    ) -> Result<f64> {
        if !(l > 0.0 && l.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Ok(f64::NEG_INFINITY);
        }
        let params = KernelParams::new(l, sigma)?;
        let collapsed = temporal_collapsed_log_marginal(
            &params,
            &self.ds.year_points,
            omega_by_year,
            ztilde_by_year,
        )?;
        // gamma(a, rate b) prior on l plus the log-scale Jacobian
        let lp_l = self.priors.a_l_t * l.ln() - self.priors.b_l_t * l;
        // inverse-gamma prior on sigma^2 plus the log-scale Jacobian
        let v2 = sigma * sigma;
        let lp_s = -self.priors.a_sigma_t * v2.ln() - self.priors.b_sigma_t / v2;
        Ok(collapsed + lp_l + lp_s)
    }

    /// Discrete draw of the spatial length scale over the precomputed grid,
    /// then the conjugate inverse-gamma amplitude draw.
    pub fn update_spatial_hypers(&mut self) -> Result<()> {
        if self.cfg.no_spatial || self.state.a_tilde.is_empty() {
            return Ok(());
        }
        let m = self.state.a_tilde.len() as f64;
        let a = DVector::from_column_slice(&self.state.a_tilde);
        let quads: Vec<f64> = self.ls_pre.iter().map(|e| a.dot(&(&e.inv * &a))).collect();

        let v2 = self.state.sigma_s * self.state.sigma_s;
        let log_weights: Vec<f64> = self
            .ls_grid
            .iter()
            .zip(&self.ls_pre)
            .zip(&quads)
            .map(|((&l, entry), &q)| {
                let lp = (self.priors.a_l_s - 1.0) * l.ln() - self.priors.b_l_s * l;
                lp - 0.5 * (m * (2.0 * std::f64::consts::PI * v2).ln() + entry.log_det + q / v2)
            })
            .collect();

        let max = log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut pick = self.rng.random::<f64>() * total;
            let mut idx = weights.len() - 1;
            for (g, w) in weights.iter().enumerate() {
                if pick < *w {
                    idx = g;
                    break;
                }
                pick -= w;
            }
            self.state.l_s_idx = idx;
        } else {
            self.warn_once(
                "all spatial length-scale grid weights underflowed; keeping current value",
            );
        }

        let q = quads[self.state.l_s_idx];
        let shape = self.priors.a_sigma_s + m / 2.0;
        let rate = self.priors.b_sigma_s + q / 2.0;
        self.state.sigma_s = draw_inverse_gamma(shape, rate, &mut self.rng)?.sqrt();
        Ok(())
    }

    /// sigma_eps^2 ~ IG(a + S/2, b + sum eps^2 / 2).
    pub fn update_sigma_eps(&mut self) -> Result<()> {
        let s = self.ds.n_sites() as f64;
        let ss: f64 = self.state.eps.iter().map(|e| e * e).sum();
        let shape = self.priors.a_sigma_eps + s / 2.0;
        let rate = self.priors.b_sigma_eps + ss / 2.0;
        self.state.sigma_eps2 = draw_inverse_gamma(shape, rate, &mut self.rng)?;
        Ok(())
    }

    /// Latent occupancy: forced to one by any detection, otherwise a
    /// Bernoulli draw with log-space accumulation of the miss probabilities.
    pub fn update_z(&mut self) -> Result<()> {
        let ds = self.ds;
        let etas_psi = self.all_eta_psi();
        let etas_p = self.all_eta_p();
        let base = self.rng.next_u64();
        let mut z = std::mem::take(&mut self.state.z);
        parallel::chunked_fill(&mut z, base, |start, chunk, rng| {
            for (off, zj) in chunk.iter_mut().enumerate() {
                let j = start + off;
                if ds.units.any_detection[j] {
                    *zj = true;
                    continue;
                }
                let (lo, hi) = ds.units.obs_range[j];
                let log_miss: f64 = (lo..hi).map(|i| -softplus(etas_p[i])).sum();
                let p_occ = logistic(etas_psi[j] + log_miss);
                *zj = rng.random::<f64>() < p_occ;
            }
            Ok(())
        })?;
        self.state.z = z;
        Ok(())
    }

    /// Detection block: auxiliaries and the joint (intercepts, coefficients)
    /// draw over currently-occupied observations, then the conjugate
    /// intercept hyperparameter updates. Observations of unoccupied units
    /// have a likelihood constant in the detection parameters and are
    /// skipped exactly.
    pub fn update_detection_block(&mut self) -> Result<()> {
        let ds = self.ds;
        let occupied: Vec<bool> = ds
            .observations
            .unit
            .iter()
            .map(|&j| self.state.z[j])
            .collect();
        let etas_p = self.all_eta_p();

        let base = self.rng.next_u64();
        let mut omega_p = std::mem::take(&mut self.state.omega_p);
        parallel::chunked_fill(&mut omega_p, base, |start, chunk, rng| {
            for (off, w) in chunk.iter_mut().enumerate() {
                let i = start + off;
                if occupied[i] {
                    *w = pg::draw_pg1(etas_p[i], rng)?;
                }
            }
            Ok(())
        })?;
        self.state.omega_p = omega_p;

        let n_u = self.state.u.len();
        let p = ds.observations.p;
        let q = n_u + p;
        let mut prec = DMatrix::<f64>::zeros(q, q);
        let mut rhs = DVector::<f64>::zeros(q);
        for (i, &occ) in occupied.iter().enumerate() {
            if !occ {
                continue;
            }
            let w = self.state.omega_p[i];
            let k = f64::from(u8::from(ds.observations.y[i])) - 0.5;
            let t = if self.cfg.constant_detection {
                0
            } else {
                ds.obs_year(i)
            };
            prec[(t, t)] += w;
            rhs[t] += k;
            let row = ds.observations.row(i);
            for a in 0..p {
                let wxa = w * row[a];
                prec[(t, n_u + a)] += wxa;
                for b in 0..=a {
                    prec[(n_u + b, n_u + a)] += wxa * row[b];
                }
                rhs[n_u + a] += k * row[a];
            }
        }
        for r in 0..q {
            for c in (r + 1)..q {
                prec[(c, r)] = prec[(r, c)];
            }
        }

        // intercept priors: hierarchical N(mu_p, sigma_p^2) per year, or the
        // fixed N(mu0_p, sigma0_p^2) for the single constant intercept
        let (u_mean, u_var) = if self.cfg.constant_detection {
            (
                self.priors.mu0_p,
                self.priors.sigma0_p * self.priors.sigma0_p,
            )
        } else {
            (self.state.mu_p, self.state.sigma_p2)
        };
        for t in 0..n_u {
            prec[(t, t)] += 1.0 / u_var;
            rhs[t] += u_mean / u_var;
        }
        for a in 0..p {
            prec[(n_u + a, n_u + a)] += 1.0 / self.priors.phi_p;
        }

        let (draw, escalations) =
            draw_from_precision(prec, &rhs, "detection block", &mut self.rng)?;
        self.jitter_events += escalations;
        for t in 0..n_u {
            self.state.u[t] = draw[t];
        }
        for a in 0..p {
            self.state.beta_p[a] = draw[n_u + a];
        }

        if !self.cfg.constant_detection && !self.cfg.fix_detection_hypers {
            let y = n_u as f64;
            let sum_u: f64 = self.state.u.iter().sum();
            let v0 = self.priors.sigma0_p * self.priors.sigma0_p;
            let var = 1.0 / (y / self.state.sigma_p2 + 1.0 / v0);
            let mean = var * (sum_u / self.state.sigma_p2 + self.priors.mu0_p / v0);
            let noise: f64 = StandardNormal.sample(&mut self.rng);
            self.state.mu_p = mean + var.sqrt() * noise;

            let ss: f64 = self
                .state
                .u
                .iter()
                .map(|u| (u - self.state.mu_p).powi(2))
                .sum();
            self.state.sigma_p2 = draw_inverse_gamma(
                self.priors.a_sigma_p + y / 2.0,
                self.priors.b_sigma_p + ss / 2.0,
                &mut self.rng,
            )?;
        }
        Ok(())
    }

    fn warn_once(&mut self, msg: &str) {
        if !self.warnings.iter().any(|w| w == msg) {
            self.warnings.push(msg.to_string());
        }
    }
}

/// Log marginal of the temporal kernel hyperparameters given the occupancy
/// states and auxiliaries, with the year effects integrated out:
/// -log|K|/2 - log|D + K^{-1}|/2 + v'(D + K^{-1})^{-1}v / 2,
/// where D and v hold the per-year sums of the auxiliaries and of the
/// offset-corrected pseudo-observations.
pub fn temporal_collapsed_log_marginal(
    params: &KernelParams,
    year_points: &[f64],
    omega_by_year: &[f64],
    ztilde_by_year: &[f64],
) -> Result<f64> {
    let y = year_points.len();
    if omega_by_year.len() != y || ztilde_by_year.len() != y {
        return Err(Error::DimensionMismatch(
            "per-year sums must match the number of year points".into(),
        ));
    }
    let cov = kernel::build_covariance(params, &SupportPoints::temporal(year_points.to_vec())?)?;
    let log_det_k = cov.log_det();
    let mut m = cov.inverse();
    for t in 0..y {
        m[(t, t)] += omega_by_year[t];
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::IllConditioned("temporal marginal precision".into()))?;
    let log_det_m = 2.0 * (0..y).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
    let v = DVector::from_column_slice(ztilde_by_year);
    let quad = v.dot(&chol.solve(&v));
    Ok(-0.5 * log_det_k - 0.5 * log_det_m + 0.5 * quad)
}

/// Dense recomputation of the occupancy cross-products; debug mode only.
fn dense_check(
    design: &UnitDesign<'_>,
    omega: &[f64],
    kvec: &[f64],
    sparse: &super::cross::CrossProducts,
) -> Result<()> {
    let layout = design.layout();
    let (n, q) = (design.len(), layout.dim());
    let mut x = DMatrix::<f64>::zeros(n, q);
    for j in 0..n {
        x[(j, 0)] = 1.0;
        x[(j, layout.year(design.year[j]))] = 1.0;
        if let Some(cells) = design.cell {
            x[(j, layout.cell(cells[j]))] = 1.0;
        }
        for a in 0..design.n_covs {
            x[(j, layout.cov(a))] = design.x[j * design.n_covs + a];
        }
    }
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(omega));
    let dense_xtwx = x.transpose() * &w * &x;
    let dense_xtk = x.transpose() * DVector::from_column_slice(kvec);
    for (a, b) in sparse.xtwx.iter().zip(dense_xtwx.iter()) {
        if (a - b).abs() > 1e-10 * b.abs().max(1.0) {
            return Err(Error::Diagnostic(format!(
                "sparse/dense cross-product mismatch: {a} vs {b}"
            )));
        }
    }
    for (a, b) in sparse.xtk.iter().zip(dense_xtk.iter()) {
        if (a - b).abs() > 1e-10 * b.abs().max(1.0) {
            return Err(Error::Diagnostic(format!(
                "sparse/dense pseudo-observation mismatch: {a} vs {b}"
            )));
        }
    }
    Ok(())
}
