//! Derived quantities and diagnostics: the yearly occupancy index, site-level
//! occupancy probabilities, detection trends, posterior-predictive
//! goodness-of-fit statistics, chain summaries, and the output files.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::SodGrid;
use crate::sampler::{ModelState, logistic};
use crate::{Error, Result, parallel};

/// Thinned parameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDraws {
    pub mu_psi: Vec<f64>,
    pub beta_psi: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub a_tilde: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub beta_p: Vec<Vec<f64>>,
    pub sigma_t: Vec<f64>,
    pub l_t: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub l_s: Vec<f64>,
    pub sigma_eps2: Vec<f64>,
    pub mu_p: Vec<f64>,
    pub sigma_p2: Vec<f64>,
}

impl ParamDraws {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            mu_psi: Vec::with_capacity(n),
            beta_psi: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            a_tilde: Vec::with_capacity(n),
            eps: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            beta_p: Vec::with_capacity(n),
            sigma_t: Vec::with_capacity(n),
            l_t: Vec::with_capacity(n),
            sigma_s: Vec::with_capacity(n),
            l_s: Vec::with_capacity(n),
            sigma_eps2: Vec::with_capacity(n),
            mu_p: Vec::with_capacity(n),
            sigma_p2: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.mu_psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_psi.is_empty()
    }
}

/// Replicate and observed goodness-of-fit statistics: yearly detection
/// totals and per-region (spatial-approximation patch) detection totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofDraws {
    pub t1_rep: Vec<Vec<u64>>,
    pub t2_rep: Vec<Vec<u64>>,
    pub t1_obs: Vec<u64>,
    pub t2_obs: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config: serde_json::Value,
    pub n_draws: usize,
    pub n_obs: usize,
    pub n_units: usize,
    pub n_sites: usize,
    pub n_years: usize,
    pub n_cells: usize,
    pub mh_acceptance: f64,
    pub wall_seconds: f64,
    pub jitter_events: usize,
    pub warnings: Vec<String>,
    pub engine_version: String,
}

/// Everything a fit produces: thinned draws plus derived per-iteration
/// quantities.
#[derive(Debug, Clone, Serialize)]
pub struct ChainOutput {
    pub draws: ParamDraws,
    /// Occupancy index per retained draw (rows) and year (columns).
    pub index_draws: Vec<Vec<f64>>,
    /// For selected year indices: per-draw occupancy probabilities of every
    /// site.
    pub psi_site_draws: Vec<(usize, Vec<Vec<f64>>)>,
    pub gof: GofDraws,
    pub years: Vec<i32>,
    pub region_centers: Vec<[f64; 2]>,
    /// Grid cell of each site (the spatial-approximation assignment).
    pub site_cell: Vec<usize>,
    pub metadata: RunMetadata,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Equality of every sampled quantity; metadata (timings) excluded.
    pub fn same_draws(&self, other: &ChainOutput) -> bool {
        self.draws == other.draws
            && self.index_draws == other.index_draws
            && self.psi_site_draws == other.psi_site_draws
            && self.gof == other.gof
    }
}

fn psi_one(state: &ModelState, ds: &Dataset, site_cell: &[usize], t: usize, s: usize) -> f64 {
    let mut eta = state.mu_psi + state.b[t] + state.eps[s];
    if !state.a_tilde.is_empty() {
        eta += state.a_tilde[site_cell[s]];
    }
    eta += ds
        .occ_info
        .builtin_contribution(ds.year_points[t], ds.site_coords[s], &state.beta_psi);
    logistic(eta)
}

/// Yearly occupancy index: the mean occupancy probability over all sites,
/// whether or not they were visited that year.
pub fn occupancy_index(state: &ModelState, ds: &Dataset, site_cell: &[usize]) -> Vec<f64> {
    let n_sites = ds.n_sites();
    (0..ds.n_years())
        .map(|t| {
            let parts = parallel::chunked_map(n_sites, |lo, hi| {
                (lo..hi)
                    .map(|s| psi_one(state, ds, site_cell, t, s))
                    .sum::<f64>()
            });
            parts.iter().sum::<f64>() / n_sites as f64
        })
        .collect()
}

/// Per-site occupancy probabilities for one year index.
pub fn psi_for_year(state: &ModelState, ds: &Dataset, site_cell: &[usize], t: usize) -> Vec<f64> {
    parallel::chunked_map(ds.n_sites(), |lo, hi| {
        (lo..hi)
            .map(|s| psi_one(state, ds, site_cell, t, s))
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Observed goodness-of-fit statistics: detections per year and per region.
pub fn observed_gof_stats(ds: &Dataset, grid: &SodGrid) -> (Vec<u64>, Vec<u64>) {
    let mut t1 = vec![0u64; ds.n_years()];
    let mut t2 = vec![0u64; grid.n_cells()];
    for i in 0..ds.n_obs() {
        if ds.observations.y[i] {
            let j = ds.observations.unit[i];
            t1[ds.units.year[j]] += 1;
            t2[grid.assignment[ds.units.site[j]]] += 1;
        }
    }
    (t1, t2)
}

/// Simulate one replicate dataset under the current state and return its
/// yearly and regional detection totals.
pub fn gof_replicates(
    state: &ModelState,
    ds: &Dataset,
    grid: &SodGrid,
    seed: u64,
) -> (Vec<u64>, Vec<u64>) {
    let n = ds.n_obs();
    let mut ytilde = vec![false; n];
    let constant_detection = state.u.len() == 1;
    parallel::chunked_fill(&mut ytilde, seed, |start, chunk, rng| {
        for (off, v) in chunk.iter_mut().enumerate() {
            let i = start + off;
            let j = ds.observations.unit[i];
            let t = if constant_detection {
                0
            } else {
                ds.units.year[j]
            };
            let mut eta = state.u[t];
            for (x, beta) in ds.observations.row(i).iter().zip(&state.beta_p) {
                eta += x * beta;
            }
            let detected: bool = rand::Rng::random::<f64>(rng) < logistic(eta);
            *v = state.z[j] && detected;
        }
        Ok(())
    })
    .expect("infallible chunk fill");

    let mut t1 = vec![0u64; ds.n_years()];
    let mut t2 = vec![0u64; grid.n_cells()];
    for (i, &v) in ytilde.iter().enumerate() {
        if v {
            let j = ds.observations.unit[i];
            t1[ds.units.year[j]] += 1;
            t2[grid.assignment[ds.units.site[j]]] += 1;
        }
    }
    (t1, t2)
}

/// Linear-interpolation quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Equal-tailed credible interval at the given level.
pub fn equal_tailed(draws: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    (
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, 1.0 - tail),
    )
}

pub fn median(draws: &[f64]) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&sorted, 0.5)
}

/// Effective sample size by the initial monotone sequence estimator on the
/// paired autocorrelation sums.
pub fn effective_sample_size(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n <= 1 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = draws.iter().sum::<f64>() / nf;
    let c0 = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    if !c0.is_finite() || c0 <= 0.0 {
        // constant chain carries no autocorrelation information
        return nf;
    }
    let autocov = |k: usize| -> f64 {
        (0..n - k)
            .map(|i| (draws[i] - mean) * (draws[i + k] - mean))
            .sum::<f64>()
            / nf
    };

    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0usize;
    loop {
        let rho_even = if k < n { autocov(k) / c0 } else { 0.0 };
        let rho_odd = if k + 1 < n { autocov(k + 1) / c0 } else { 0.0 };
        let mut pair = rho_even + rho_odd;
        if pair <= 0.0 {
            break;
        }
        // enforce monotone non-increasing pair sums
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += pair;
        k += 2;
        if k >= n {
            break;
        }
    }
    let act = (2.0 * tau - 1.0).max(1.0);
    (nf / act).min(nf)
}

/// Summary row for one scalar quantity.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    /// (level, lower, upper) per requested level.
    pub intervals: Vec<(f64, f64, f64)>,
    pub ess: f64,
}

pub fn summarize_scalar(name: &str, draws: &[f64], levels: &[f64]) -> Result<ScalarSummary> {
    if draws.is_empty() {
        return Err(Error::EmptyChain(format!("no draws for {name}")));
    }
    let intervals = levels
        .iter()
        .map(|&lv| {
            let (lo, hi) = equal_tailed(draws, lv);
            (lv, lo, hi)
        })
        .collect();
    Ok(ScalarSummary {
        name: name.to_string(),
        mean: draws.iter().sum::<f64>() / draws.len() as f64,
        median: median(draws),
        intervals,
        ess: effective_sample_size(draws),
    })
}

/// Medians, equal-tailed intervals and effective sample sizes for every
/// scalar quantity of the chain.
pub fn summarize(chain: &ChainOutput, levels: &[f64]) -> Result<Vec<ScalarSummary>> {
    if chain.n_draws() == 0 {
        return Err(Error::EmptyChain("chain has no retained draws".into()));
    }
    let d = &chain.draws;
    let mut out = Vec::new();
    let mut push = |name: String, draws: &[f64]| -> Result<()> {
        out.push(summarize_scalar(&name, draws, levels)?);
        Ok(())
    };
    push("mu_psi".into(), &d.mu_psi)?;
    push("sigma_t".into(), &d.sigma_t)?;
    push("l_t".into(), &d.l_t)?;
    if !d.a_tilde[0].is_empty() {
        push("sigma_s".into(), &d.sigma_s)?;
        push("l_s".into(), &d.l_s)?;
    }
    push("sigma_eps2".into(), &d.sigma_eps2)?;
    push("mu_p".into(), &d.mu_p)?;
    push("sigma_p2".into(), &d.sigma_p2)?;
    let column = |rows: &[Vec<f64>], k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    for k in 0..d.beta_psi[0].len() {
        push(format!("beta_psi[{k}]"), &column(&d.beta_psi, k))?;
    }
    for k in 0..d.beta_p[0].len() {
        push(format!("beta_p[{k}]"), &column(&d.beta_p, k))?;
    }
    for (t, year) in chain.years.iter().enumerate() {
        push(format!("index_{year}"), &column(&chain.index_draws, t))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GofClass {
    Inside95,
    Between95And99,
    Outside99,
}

impl GofClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            GofClass::Inside95 => "inside95",
            GofClass::Between95And99 => "between95_99",
            GofClass::Outside99 => "outside99",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GofEntry {
    pub label: String,
    pub observed: u64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub lo99: f64,
    pub hi99: f64,
    pub class: GofClass,
}

#[derive(Debug, Clone, Serialize)]
pub struct GofReport {
    pub yearly: Vec<GofEntry>,
    pub regional: Vec<GofEntry>,
    pub yearly_inside95_fraction: f64,
    pub regional_inside95_fraction: f64,
    pub inside95_fraction: f64,
}

fn classify(observed: u64, draws: &[f64], label: String) -> GofEntry {
    let (lo95, hi95) = equal_tailed(draws, 0.95);
    let (lo99, hi99) = equal_tailed(draws, 0.99);
    let obs = observed as f64;
    let class = if obs >= lo95 && obs <= hi95 {
        GofClass::Inside95
    } else if obs >= lo99 && obs <= hi99 {
        GofClass::Between95And99
    } else {
        GofClass::Outside99
    };
    GofEntry {
        label,
        observed,
        median: median(draws),
        lo95,
        hi95,
        lo99,
        hi99,
        class,
    }
}

/// Classify every observed statistic against its posterior-predictive
/// distribution.
pub fn gof_report(chain: &ChainOutput) -> Result<GofReport> {
    gof_report_from_draws(&chain.gof, &chain.years, &chain.region_centers)
}

pub fn gof_report_from_draws(
    gof: &GofDraws,
    years: &[i32],
    region_centers: &[[f64; 2]],
) -> Result<GofReport> {
    if gof.t1_rep.is_empty() {
        return Err(Error::EmptyChain(
            "gof_draws: no replicate statistics recorded".into(),
        ));
    }
    let column =
        |rows: &[Vec<u64>], k: usize| -> Vec<f64> { rows.iter().map(|r| r[k] as f64).collect() };
    let yearly: Vec<GofEntry> = years
        .iter()
        .enumerate()
        .map(|(t, y)| classify(gof.t1_obs[t], &column(&gof.t1_rep, t), format!("{y}")))
        .collect();
    let regional: Vec<GofEntry> = region_centers
        .iter()
        .enumerate()
        .map(|(r, c)| {
            classify(
                gof.t2_obs[r],
                &column(&gof.t2_rep, r),
                format!("({}, {})", c[0], c[1]),
            )
        })
        .collect();
    let frac = |entries: &[GofEntry]| {
        if entries.is_empty() {
            1.0
        } else {
            entries
                .iter()
                .filter(|e| e.class == GofClass::Inside95)
                .count() as f64
                / entries.len() as f64
        }
    };
    let yearly_frac = frac(&yearly);
    let regional_frac = frac(&regional);
    let all: Vec<&GofEntry> = yearly.iter().chain(regional.iter()).collect();
    let inside = all.iter().filter(|e| e.class == GofClass::Inside95).count() as f64;
    let total = all.len().max(1) as f64;
    Ok(GofReport {
        yearly,
        regional,
        yearly_inside95_fraction: yearly_frac,
        regional_inside95_fraction: regional_frac,
        inside95_fraction: inside / total,
    })
}

/// On-disk companion of a fit, carrying what `gof` and `summary` need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofFile {
    pub years: Vec<i32>,
    pub region_centers: Vec<[f64; 2]>,
    pub gof: GofDraws,
}

/// Write every output file of a fit into `outdir`.
pub fn write_outputs(chain: &ChainOutput, ds: &Dataset, outdir: &Path) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    write_occupancy_index(chain, outdir)?;
    write_site_probs(chain, ds, outdir)?;
    write_detection_trend(chain, outdir)?;
    write_detection_season(chain, ds, outdir)?;
    write_gof_files(chain, outdir)?;
    write_traces(chain, ds, outdir)?;
    write_index_draws(chain, outdir)?;
    let gof_file = GofFile {
        years: chain.years.clone(),
        region_centers: chain.region_centers.clone(),
        gof: chain.gof.clone(),
    };
    let f = std::fs::File::create(outdir.join("chain_gof.json"))?;
    serde_json::to_writer(std::io::BufWriter::new(f), &gof_file)?;
    Ok(())
}

fn write_occupancy_index(chain: &ChainOutput, outdir: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("occupancy_index.csv"))?);
    writeln!(w, "year,median,lower,upper")?;
    for (t, year) in chain.years.iter().enumerate() {
        let col: Vec<f64> = chain.index_draws.iter().map(|r| r[t]).collect();
        let (lo, hi) = equal_tailed(&col, 0.95);
        writeln!(w, "{year},{},{lo},{hi}", median(&col))?;
    }
    Ok(())
}

fn write_site_probs(chain: &ChainOutput, ds: &Dataset, outdir: &Path) -> Result<()> {
    for (t, rows) in &chain.psi_site_draws {
        let year = chain.years[*t];
        let mut w = std::io::BufWriter::new(std::fs::File::create(
            outdir.join(format!("site_probs_{year}.csv")),
        )?);
        writeln!(w, "site,easting,northing,median,sd")?;
        let n_draws = rows.len() as f64;
        for s in 0..ds.n_sites() {
            let col: Vec<f64> = rows.iter().map(|r| r[s]).collect();
            let mean = col.iter().sum::<f64>() / n_draws;
            let sd = if rows.len() > 1 {
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_draws - 1.0)).sqrt()
            } else {
                0.0
            };
            writeln!(
                w,
                "{},{},{},{},{sd}",
                ds.site_ids[s],
                ds.site_coords[s][0],
                ds.site_coords[s][1],
                median(&col)
            )?;
        }
    }
    Ok(())
}

fn write_detection_trend(chain: &ChainOutput, outdir: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("detection_trend.csv"))?);
    writeln!(w, "year,median,lower,upper")?;
    let constant = chain.draws.u[0].len() == 1;
    for (t, year) in chain.years.iter().enumerate() {
        let col: Vec<f64> = chain
            .draws
            .u
            .iter()
            .map(|u| logistic(if constant { u[0] } else { u[t] }))
            .collect();
        let (lo, hi) = equal_tailed(&col, 0.95);
        writeln!(w, "{year},{},{lo},{hi}", median(&col))?;
    }
    Ok(())
}

fn write_detection_season(chain: &ChainOutput, ds: &Dataset, outdir: &Path) -> Result<()> {
    let mut w =
        std::io::BufWriter::new(std::fs::File::create(outdir.join("detection_season.csv"))?);
    writeln!(w, "julian_day,median,lower,upper")?;
    let jd_min = ds
        .observations
        .julian_day
        .iter()
        .min()
        .copied()
        .unwrap_or(1);
    let jd_max = ds
        .observations
        .julian_day
        .iter()
        .max()
        .copied()
        .unwrap_or(365);
    // reference year: middle of the observed span; other years are shifted
    // copies since the date coefficients are shared
    let t_ref = ds.n_years() / 2;
    let constant = chain.draws.u[0].len() == 1;
    for day in jd_min..=jd_max {
        let col: Vec<f64> = chain
            .draws
            .u
            .iter()
            .zip(&chain.draws.beta_p)
            .map(|(u, beta)| {
                let mut eta = if constant { u[0] } else { u[t_ref] };
                let d = f64::from(day);
                // columns: [rel list length at its mean, jd, jd^2, jd^3]
                eta += beta[1] * ds.det_info.standardizers[1].apply(d);
                eta += beta[2] * ds.det_info.standardizers[2].apply(d * d);
                eta += beta[3] * ds.det_info.standardizers[3].apply(d * d * d);
                logistic(eta)
            })
            .collect();
        let (lo, hi) = equal_tailed(&col, 0.95);
        writeln!(w, "{day},{},{lo},{hi}", median(&col))?;
    }
    Ok(())
}

fn write_gof_files(chain: &ChainOutput, outdir: &Path) -> Result<()> {
    let report = gof_report(chain)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("gof_year.csv"))?);
    writeln!(w, "year,observed,median,lo95,hi95,lo99,hi99,class")?;
    for e in &report.yearly {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.label,
            e.observed,
            e.median,
            e.lo95,
            e.hi95,
            e.lo99,
            e.hi99,
            e.class.as_str()
        )?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("gof_region.csv"))?);
    writeln!(
        w,
        "center_x,center_y,observed,median,lo95,hi95,lo99,hi99,class"
    )?;
    for (e, c) in report.regional.iter().zip(&chain.region_centers) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c[0],
            c[1],
            e.observed,
            e.median,
            e.lo95,
            e.hi95,
            e.lo99,
            e.hi99,
            e.class.as_str()
        )?;
    }
    Ok(())
}

fn write_traces(chain: &ChainOutput, ds: &Dataset, outdir: &Path) -> Result<()> {
    let d = &chain.draws;
    let write_one = |name: &str, values: &[f64]| -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(
            outdir.join(format!("trace_{name}.csv")),
        )?);
        writeln!(w, "draw,value")?;
        for (i, v) in values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    };
    write_one("mu_psi", &d.mu_psi)?;
    write_one("sigma_t", &d.sigma_t)?;
    write_one("l_t", &d.l_t)?;
    if !d.a_tilde[0].is_empty() {
        write_one("sigma_s", &d.sigma_s)?;
        write_one("l_s", &d.l_s)?;
    }
    write_one("sigma_eps2", &d.sigma_eps2)?;
    write_one("mu_p", &d.mu_p)?;
    write_one("sigma_p2", &d.sigma_p2)?;
    let column = |rows: &[Vec<f64>], k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    for (k, name) in ds.occ_info.names.iter().enumerate() {
        write_one(&format!("beta_psi_{name}"), &column(&d.beta_psi, k))?;
    }
    for (k, name) in ds.det_info.names.iter().enumerate() {
        write_one(&format!("beta_p_{name}"), &column(&d.beta_p, k))?;
    }
    Ok(())
}

fn write_index_draws(chain: &ChainOutput, outdir: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("index_draws.csv"))?);
    let header: Vec<String> = chain.years.iter().map(|y| format!("index_{y}")).collect();
    writeln!(w, "draw,{}", header.join(","))?;
    for (i, row) in chain.index_draws.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{i},{}", cells.join(","))?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(outdir.join("u_draws.csv"))?);
    let n_u = chain.draws.u[0].len();
    let header: Vec<String> = if n_u == 1 {
        vec!["u".to_string()]
    } else {
        chain.years.iter().map(|y| format!("u_{y}")).collect()
    };
    writeln!(w, "draw,{}", header.join(","))?;
    for (i, row) in chain.draws.u.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{i},{}", cells.join(","))?;
    }
    Ok(())
}
