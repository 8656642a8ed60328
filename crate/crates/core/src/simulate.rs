//! Synthetic-data generation for timing, recovery and coverage studies, and
//! scoring of a fit against the generating truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VisitRecord};
use crate::kernel::{self, KernelParams, SupportPoints};
use crate::posterior::{ChainOutput, equal_tailed, median};
use crate::sampler::logistic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CountModel {
    /// V ~ Poisson(mean); pairs with V = 0 produce no sampling unit.
    Poisson(f64),
    /// V = 1 + Poisson(mean).
    OnePlusPoisson(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitModel {
    /// Probability that a (site, year) pair is visited at all.
    pub visit_prob: f64,
    pub counts: CountModel,
}

/// True year-specific detection intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectionTruth {
    Constant(f64),
    /// Linear ramp from `start` in the first year to `end` in the last.
    Linear {
        start: f64,
        end: f64,
    },
    PerYear(Vec<f64>),
}

impl DetectionTruth {
    fn u_at(&self, t: usize, n_years: usize) -> f64 {
        match self {
            DetectionTruth::Constant(u) => *u,
            DetectionTruth::Linear { start, end } => {
                if n_years == 1 {
                    *start
                } else {
                    start + (end - start) * t as f64 / (n_years - 1) as f64
                }
            }
            DetectionTruth::PerYear(us) => us[t],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_sites: usize,
    pub n_years: usize,
    pub visit_model: VisitModel,
    pub mu_psi: f64,
    pub sigma_eps: f64,
    pub u: DetectionTruth,
    /// Temporal GP (length scale, amplitude); `None` turns the effect off.
    pub temporal: Option<KernelParams>,
    /// Spatial GP over the exact site locations; `None` turns it off.
    pub spatial: Option<KernelParams>,
    /// Site-location bounding box (min_x, min_y, max_x, max_y).
    pub bbox: [f64; 4],
    pub year0: i32,
    pub jd_min: u16,
    pub jd_max: u16,
    /// List length is 1 + Poisson(this mean).
    pub list_length_mean: f64,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n_sites < 1 || self.n_years < 1 {
            return Err(Error::InvalidParameter(
                "need at least one site and one year".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.visit_model.visit_prob) {
            return Err(Error::InvalidParameter(
                "visit probability must lie in [0, 1]".into(),
            ));
        }
        let mean = match self.visit_model.counts {
            CountModel::Poisson(m) | CountModel::OnePlusPoisson(m) => m,
        };
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "visit-count mean must be positive, got {mean}"
            )));
        }
        if self.sigma_eps.is_nan() || self.sigma_eps < 0.0 {
            return Err(Error::InvalidParameter(
                "sigma_eps must be nonnegative".into(),
            ));
        }
        if self.jd_min < 1 || self.jd_max > 366 || self.jd_min > self.jd_max {
            return Err(Error::InvalidParameter("bad julian-day range".into()));
        }
        if !(self.list_length_mean.is_finite() && self.list_length_mean > 0.0) {
            return Err(Error::InvalidParameter(
                "list-length mean must be positive".into(),
            ));
        }
        if let DetectionTruth::PerYear(us) = &self.u
            && us.len() != self.n_years
        {
            return Err(Error::DimensionMismatch(
                "per-year detection truth length".into(),
            ));
        }
        Ok(())
    }

    /// Timing-study preset: 15 years, Poisson(2) visits per sampling unit,
    /// mu_psi = -1, sigma_eps = 0.5, constant detection at -1, temporal GP
    /// (0.2, 1), no spatial effect.
    pub fn timing_preset(n_sites: usize, seed: u64) -> Self {
        Self {
            n_sites,
            n_years: 15,
            visit_model: VisitModel {
                visit_prob: 1.0,
                counts: CountModel::Poisson(2.0),
            },
            mu_psi: -1.0,
            sigma_eps: 0.5,
            u: DetectionTruth::Constant(-1.0),
            temporal: Some(KernelParams {
                length_scale: 1.0,
                amplitude: 0.2,
            }),
            spatial: None,
            bbox: [0.0, 0.0, 1.0, 1.0],
            year0: 2000,
            jd_min: 100,
            jd_max: 250,
            list_length_mean: 3.0,
            seed,
        }
    }

    /// Sparse-spatial preset: 40 years, 10^4 sites on the unit square, each
    /// (site, year) visited with probability 0.05 and then 1 + Poisson(0.5)
    /// observations, mu_psi = 0, temporal GP (0.2, 1), spatial GP (0.5,
    /// 0.25), constant detection at -1.
    pub fn sparse_spatial_preset(seed: u64) -> Self {
        Self {
            n_sites: 10_000,
            n_years: 40,
            visit_model: VisitModel {
                visit_prob: 0.05,
                counts: CountModel::OnePlusPoisson(0.5),
            },
            mu_psi: 0.0,
            sigma_eps: 0.0,
            u: DetectionTruth::Constant(-1.0),
            temporal: Some(KernelParams {
                length_scale: 1.0,
                amplitude: 0.2,
            }),
            spatial: Some(KernelParams {
                length_scale: 0.25,
                amplitude: 0.5,
            }),
            bbox: [0.0, 0.0, 1.0, 1.0],
            year0: 2000,
            jd_min: 100,
            jd_max: 250,
            list_length_mean: 3.0,
            seed,
        }
    }

    /// The sparse-spatial preset at a different size. The visit probability
    /// rises as the year count falls so the expected number of sampling
    /// units per site (years x probability = 2) matches the full preset.
    pub fn sparse_spatial_scaled(n_sites: usize, n_years: usize, seed: u64) -> Self {
        let mut cfg = Self::sparse_spatial_preset(seed);
        let units_per_site = cfg.n_years as f64 * cfg.visit_model.visit_prob;
        cfg.n_sites = n_sites;
        cfg.n_years = n_years;
        cfg.visit_model.visit_prob = (units_per_site / n_years as f64).min(1.0);
        cfg
    }
}

/// The generating truth, for recovery scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub mu_psi: f64,
    pub b: Vec<f64>,
    /// Exact site-level spatial effect (zeros when off).
    pub a: Vec<f64>,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub site_ids: Vec<String>,
    pub site_coords: Vec<[f64; 2]>,
    pub years: Vec<i32>,
    /// True occupancy index per year.
    pub index: Vec<f64>,
    /// True occupancy probability, years x sites.
    pub psi: Vec<Vec<f64>>,
    pub sigma_eps: f64,
    pub temporal: Option<KernelParams>,
    pub spatial: Option<KernelParams>,
    pub seed: u64,
}

/// Draw a dataset and its truth. Sites are uniform on the bounding box;
/// year and site effects come from their GPs evaluated exactly (no grid
/// approximation), so fitted-model error is attributable to the fit alone.
pub fn generate(cfg: &SimConfig) -> Result<(Vec<VisitRecord>, Truth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (s_n, y_n) = (cfg.n_sites, cfg.n_years);

    let width = cfg.bbox[2] - cfg.bbox[0];
    let height = cfg.bbox[3] - cfg.bbox[1];
    let site_coords: Vec<[f64; 2]> = (0..s_n)
        .map(|_| {
            [
                cfg.bbox[0] + rng.random::<f64>() * width,
                cfg.bbox[1] + rng.random::<f64>() * height,
            ]
        })
        .collect();
    let digits = (s_n as f64).log10().ceil() as usize + 1;
    let site_ids: Vec<String> = (0..s_n).map(|s| format!("s{s:0digits$}")).collect();

    let years: Vec<i32> = (0..y_n).map(|t| cfg.year0 + t as i32).collect();
    let year_points: Vec<f64> = years.iter().map(|&y| f64::from(y)).collect();

    let b = match &cfg.temporal {
        Some(params) => gp_draw(
            params,
            &SupportPoints::temporal(year_points.clone())?,
            &mut rng,
        )?,
        None => vec![0.0; y_n],
    };
    let a = match &cfg.spatial {
        Some(params) => gp_draw(
            params,
            &SupportPoints::spatial(site_coords.clone())?,
            &mut rng,
        )?,
        None => vec![0.0; s_n],
    };
    let eps: Vec<f64> = (0..s_n)
        .map(|_| {
            let n: f64 = StandardNormal.sample(&mut rng);
            cfg.sigma_eps * n
        })
        .collect();

    let u: Vec<f64> = (0..y_n).map(|t| cfg.u.u_at(t, y_n)).collect();

    let psi: Vec<Vec<f64>> = (0..y_n)
        .map(|t| {
            (0..s_n)
                .map(|s| logistic(cfg.mu_psi + b[t] + a[s] + eps[s]))
                .collect()
        })
        .collect();
    let index: Vec<f64> = psi
        .iter()
        .map(|row| row.iter().sum::<f64>() / s_n as f64)
        .collect();

    let ll_pois = Poisson::new(cfg.list_length_mean)
        .map_err(|e| Error::InvalidParameter(format!("list-length mean: {e}")))?;
    let count_pois = match cfg.visit_model.counts {
        CountModel::Poisson(m) | CountModel::OnePlusPoisson(m) => {
            Poisson::new(m).map_err(|e| Error::InvalidParameter(format!("visit counts: {e}")))?
        }
    };

    let mut records = Vec::new();
    for s in 0..s_n {
        for t in 0..y_n {
            if cfg.visit_model.visit_prob < 1.0 && rng.random::<f64>() >= cfg.visit_model.visit_prob
            {
                continue;
            }
            let visits = match cfg.visit_model.counts {
                CountModel::Poisson(_) => count_pois.sample(&mut rng) as u32,
                CountModel::OnePlusPoisson(_) => 1 + count_pois.sample(&mut rng) as u32,
            };
            if visits == 0 {
                continue;
            }
            let occupied = rng.random::<f64>() < psi[t][s];
            let p_det = logistic(u[t]);
            let mut used_days: Vec<u16> = Vec::with_capacity(visits as usize);
            for _ in 0..visits {
                // distinct dates within a unit, so repeat visits never
                // collide into identical rows
                let mut jd = rng.random_range(cfg.jd_min..=cfg.jd_max);
                let span = (cfg.jd_max - cfg.jd_min + 1) as usize;
                if used_days.len() < span {
                    while used_days.contains(&jd) {
                        jd = if jd == cfg.jd_max { cfg.jd_min } else { jd + 1 };
                    }
                }
                used_days.push(jd);
                let ll = 1 + ll_pois.sample(&mut rng) as u32;
                let detected = occupied && rng.random::<f64>() < p_det;
                records.push(VisitRecord {
                    site_id: site_ids[s].clone(),
                    easting: site_coords[s][0],
                    northing: site_coords[s][1],
                    year: years[t],
                    julian_day: jd,
                    detected,
                    list_length: ll,
                });
            }
        }
    }

    let truth = Truth {
        mu_psi: cfg.mu_psi,
        b,
        a,
        eps,
        u,
        site_ids,
        site_coords,
        years,
        index,
        psi,
        sigma_eps: cfg.sigma_eps,
        temporal: cfg.temporal,
        spatial: cfg.spatial,
        seed: cfg.seed,
    };
    Ok((records, truth))
}

fn gp_draw<R: Rng + ?Sized>(
    params: &KernelParams,
    pts: &SupportPoints,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cov = kernel::build_covariance(params, pts)?;
    let n = pts.len();
    let z = nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let draw = cov.chol().l() * z;
    Ok(draw.iter().copied().collect())
}

pub fn write_truth(path: &std::path::Path, truth: &Truth) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(f), truth)?;
    Ok(())
}

pub fn read_truth(path: &std::path::Path) -> Result<Truth> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Coverage and error report of a fit against the generating truth.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    /// Years whose true occupancy index falls inside the 95% interval.
    pub index_covered: usize,
    pub index_total: usize,
    pub per_year_covered: Vec<bool>,
    /// Fraction of dataset sites whose true occupancy probability falls
    /// inside the 95% interval, in the scored year.
    pub site_psi_coverage: f64,
    pub site_psi_year: i32,
    /// Root-mean-square error of the posterior-median spatial effect
    /// against the true site effect.
    pub rmse_spatial: f64,
}

/// Score index coverage, per-site occupancy coverage (first retained year)
/// and spatial-effect recovery.
pub fn score_recovery(chain: &ChainOutput, truth: &Truth, ds: &Dataset) -> Result<RecoveryReport> {
    if chain.n_draws() == 0 {
        return Err(Error::EmptyChain("cannot score an empty chain".into()));
    }
    if chain.years != truth.years {
        return Err(Error::DimensionMismatch(format!(
            "chain covers years {:?}, truth {:?}",
            chain.years, truth.years
        )));
    }

    // map dataset sites into the truth's site indexing
    let truth_index: std::collections::BTreeMap<&str, usize> = truth
        .site_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let ds_to_truth: Vec<usize> = ds
        .site_ids
        .iter()
        .map(|id| {
            truth_index.get(id.as_str()).copied().ok_or_else(|| {
                Error::DimensionMismatch(format!("site {id} missing from the truth record"))
            })
        })
        .collect::<Result<_>>()?;

    let n_years = chain.years.len();
    let mut per_year_covered = Vec::with_capacity(n_years);
    for t in 0..n_years {
        let col: Vec<f64> = chain.index_draws.iter().map(|r| r[t]).collect();
        let (lo, hi) = equal_tailed(&col, 0.95);
        per_year_covered.push(truth.index[t] >= lo && truth.index[t] <= hi);
    }
    let index_covered = per_year_covered.iter().filter(|c| **c).count();

    let (t0, psi_rows) = chain
        .psi_site_draws
        .first()
        .ok_or_else(|| Error::EmptyChain("no per-site occupancy draws retained".into()))?;
    let mut covered = 0usize;
    for s in 0..ds.n_sites() {
        let col: Vec<f64> = psi_rows.iter().map(|r| r[s]).collect();
        let (lo, hi) = equal_tailed(&col, 0.95);
        let true_psi = truth.psi[*t0][ds_to_truth[s]];
        if true_psi >= lo && true_psi <= hi {
            covered += 1;
        }
    }
    let site_psi_coverage = covered as f64 / ds.n_sites() as f64;

    // posterior-median spatial effect at each site vs the true site effect
    let m = chain.draws.a_tilde[0].len();
    let median_a: Vec<f64> = (0..m)
        .map(|c| {
            let col: Vec<f64> = chain.draws.a_tilde.iter().map(|r| r[c]).collect();
            median(&col)
        })
        .collect();
    let mut sq_sum = 0.0;
    for s in 0..ds.n_sites() {
        let fitted = if m > 0 {
            median_a[chain.site_cell[s]]
        } else {
            0.0
        };
        let diff = fitted - truth.a[ds_to_truth[s]];
        sq_sum += diff * diff;
    }
    let rmse_spatial = (sq_sum / ds.n_sites() as f64).sqrt();

    Ok(RecoveryReport {
        index_covered,
        index_total: n_years,
        per_year_covered,
        site_psi_coverage,
        site_psi_year: chain.years[*t0],
        rmse_spatial,
    })
}
