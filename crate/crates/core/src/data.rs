//! Visit-level detection records and the derived model tables.
//!
//! A dataset is a flat file of visits (one row per species list). Ingestion
//! derives the sampling units — unique (site, year) pairs with at least one
//! visit — assigns contiguous indices, builds the detection design (relative
//! list length plus the first three powers of the Julian date) and the
//! occupancy design (year x easting and year x northing interactions), and
//! standardises every covariate column.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One visit: a recording event at a site on a date, with the species either
/// detected or inferred non-detected, and the length of the recorded list.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub site_id: String,
    pub easting: f64,
    pub northing: f64,
    pub year: i32,
    pub julian_day: u16,
    pub detected: bool,
    pub list_length: u32,
}

/// Extra user covariate columns, keyed by name, one value per record.
#[derive(Debug, Clone, Default)]
pub struct ExtraCovariates {
    pub detection: Vec<(String, Vec<f64>)>,
    pub occupancy: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: u8,
    /// Neighbourhood radius (map units, km) for the relative list length.
    pub radius_km: f64,
    /// Drop visits in calendar months that never record the focal species.
    pub filter_months: bool,
    /// Build the year x easting / year x northing occupancy interactions.
    pub interactions: bool,
    /// Names of extra detection / occupancy covariate columns.
    pub det_covariates: Vec<String>,
    pub occ_covariates: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            delimiter: b',',
            radius_km: 50.0,
            filter_months: false,
            interactions: true,
            det_covariates: Vec::new(),
            occ_covariates: Vec::new(),
        }
    }
}

/// Mean/sd pair of a standardised column; applies (x - mean) / sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

/// Standardise a column in place to mean 0, sd 1 (population sd).
pub fn standardize_column(xs: &mut [f64], name: &str) -> Result<Standardizer> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "column {name} has fewer than 2 rows"
        )));
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !sd.is_finite() || sd <= 0.0 {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    for x in xs.iter_mut() {
        *x = (*x - mean) / sd;
    }
    Ok(Standardizer { mean, sd })
}

/// Standardisation records of the detection design columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetDesignInfo {
    pub names: Vec<String>,
    pub standardizers: Vec<Standardizer>,
}

/// Everything needed to evaluate the occupancy covariate contribution at any
/// (site, year) pair, visited or not; extra user covariates contribute at
/// their standardised mean (zero) away from their own units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccDesignInfo {
    pub interactions: bool,
    pub names: Vec<String>,
    pub year_std: Option<Standardizer>,
    pub east_std: Option<Standardizer>,
    pub north_std: Option<Standardizer>,
    pub ye_std: Option<Standardizer>,
    pub yn_std: Option<Standardizer>,
    pub n_extra: usize,
}

impl OccDesignInfo {
    /// Dot product of the built-in interaction columns with `beta` at an
    /// arbitrary (year time point, site coordinate).
    pub fn builtin_contribution(&self, w_year: f64, coord: [f64; 2], beta: &[f64]) -> f64 {
        if !self.interactions {
            return 0.0;
        }
        let zy = self.year_std.unwrap().apply(w_year);
        let ze = self.east_std.unwrap().apply(coord[0]);
        let zn = self.north_std.unwrap().apply(coord[1]);
        let ye = self.ye_std.unwrap().apply(zy * ze);
        let yn = self.yn_std.unwrap().apply(zy * zn);
        beta[0] * ye + beta[1] * yn
    }
}

/// Per-visit observation table, sorted so each unit's visits are contiguous.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    pub y: Vec<bool>,
    pub unit: Vec<usize>,
    pub julian_day: Vec<u16>,
    pub list_length: Vec<u32>,
    pub rel_list_length: Vec<f64>,
    /// Row-major N x p_det standardised detection covariates.
    pub x: Vec<f64>,
    pub p: usize,
}

impl ObservationTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Sampling-unit table, sorted by (site, year).
#[derive(Debug, Clone)]
pub struct SamplingUnitTable {
    pub site: Vec<usize>,
    pub year: Vec<usize>,
    /// Observation range [start, end) of each unit in the observation table.
    pub obs_range: Vec<(usize, usize)>,
    /// Unit has at least one detection (forces occupancy).
    pub any_detection: Vec<bool>,
    /// Row-major J x p_occ standardised occupancy covariates.
    pub x: Vec<f64>,
    pub p: usize,
}

impl SamplingUnitTable {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.p..(j + 1) * self.p]
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: ObservationTable,
    pub units: SamplingUnitTable,
    pub site_ids: Vec<String>,
    pub site_coords: Vec<[f64; 2]>,
    /// Unit range [start, end) of each site (units are sorted by site).
    pub site_unit_range: Vec<(usize, usize)>,
    /// Calendar years present, ascending.
    pub years: Vec<i32>,
    /// Year time points w_y (the calendar years as reals).
    pub year_points: Vec<f64>,
    pub det_info: DetDesignInfo,
    pub occ_info: OccDesignInfo,
}

impl Dataset {
    pub fn n_obs(&self) -> usize {
        self.observations.y.len()
    }

    pub fn n_units(&self) -> usize {
        self.units.site.len()
    }

    pub fn n_sites(&self) -> usize {
        self.site_coords.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn obs_year(&self, i: usize) -> usize {
        self.units.year[self.observations.unit[i]]
    }

    /// Index-integrity pass over every foreign key.
    pub fn validate(&self) -> Result<()> {
        let (n, j, s, y) = (self.n_obs(), self.n_units(), self.n_sites(), self.n_years());
        if self.observations.unit.iter().any(|&u| u >= j) {
            return Err(Error::InvalidInput(
                "observation references unit out of range".into(),
            ));
        }
        if self.units.site.iter().any(|&v| v >= s) {
            return Err(Error::InvalidInput(
                "unit references site out of range".into(),
            ));
        }
        if self.units.year.iter().any(|&v| v >= y) {
            return Err(Error::InvalidInput(
                "unit references year out of range".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for jj in 0..j {
            if !seen.insert((self.units.site[jj], self.units.year[jj])) {
                return Err(Error::InvalidInput(format!("duplicate sampling unit {jj}")));
            }
        }
        for (jj, &(start, end)) in self.units.obs_range.iter().enumerate() {
            if start >= end || end > n {
                return Err(Error::InvalidInput(format!(
                    "unit {jj} has empty observation range"
                )));
            }
            if self.observations.unit[start..end].iter().any(|&u| u != jj) {
                return Err(Error::InvalidInput(format!(
                    "unit {jj} range is not contiguous"
                )));
            }
            let any = self.observations.y[start..end].iter().any(|&d| d);
            if any != self.units.any_detection[jj] {
                return Err(Error::InvalidInput(format!(
                    "unit {jj} detection flag inconsistent"
                )));
            }
        }
        for (ss, &(start, end)) in self.site_unit_range.iter().enumerate() {
            if end > j || self.units.site[start..end].iter().any(|&u| u != ss) {
                return Err(Error::InvalidInput(format!(
                    "site {ss} unit range inconsistent"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub n_rows_read: usize,
    pub n_rows_dropped_month_filter: usize,
    pub n_obs: usize,
    pub n_units: usize,
    pub n_sites: usize,
    pub n_years: usize,
    pub warnings: Vec<String>,
}

const CANONICAL_COLUMNS: [&str; 7] = [
    "site",
    "easting",
    "northing",
    "year",
    "julian_day",
    "detected",
    "list_length",
];

/// Read a delimited visit file and build the dataset.
pub fn ingest(path: &Path, cfg: &IngestConfig) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let delim = cfg.delimiter as char;

    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::InvalidInput(format!("{} is empty", path.display()))),
    };
    let cols: Vec<&str> = header.split(delim).map(str::trim).collect();
    let col_idx = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx: Vec<usize> = CANONICAL_COLUMNS
        .iter()
        .map(|c| col_idx(c))
        .collect::<Result<_>>()?;
    let extra_det_idx: Vec<usize> = cfg
        .det_covariates
        .iter()
        .map(|c| col_idx(c))
        .collect::<Result<_>>()?;
    let extra_occ_idx: Vec<usize> = cfg
        .occ_covariates
        .iter()
        .map(|c| col_idx(c))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut extras = ExtraCovariates {
        detection: cfg
            .det_covariates
            .iter()
            .map(|c| (c.clone(), Vec::new()))
            .collect(),
        occupancy: cfg
            .occ_covariates
            .iter()
            .map(|c| (c.clone(), Vec::new()))
            .collect(),
    };

    for (lineno, line) in lines.enumerate() {
        let row = lineno + 2; // 1-based, counting the header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        let get = |k: usize| -> Result<&str> {
            fields
                .get(idx[k])
                .copied()
                .filter(|f| !f.is_empty())
                .ok_or_else(|| Error::ParseRow {
                    row,
                    msg: format!("missing field {}", CANONICAL_COLUMNS[k]),
                })
        };
        let parse_f64 = |k: usize| -> Result<f64> {
            let s = get(k)?;
            s.parse().map_err(|_| Error::ParseRow {
                row,
                msg: format!("cannot parse {} value {s:?}", CANONICAL_COLUMNS[k]),
            })
        };
        let detected = match get(5)? {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(Error::ParseRow {
                    row,
                    msg: format!("detected must be 0/1, got {other:?}"),
                });
            }
        };
        let julian_day = get(4)?.parse::<u16>().map_err(|_| Error::ParseRow {
            row,
            msg: format!("cannot parse julian_day value {:?}", get(4).unwrap_or("")),
        })?;
        if !(1..=366).contains(&julian_day) {
            return Err(Error::ParseRow {
                row,
                msg: format!("julian_day {julian_day} out of 1..=366"),
            });
        }
        let list_length = get(6)?.parse::<u32>().map_err(|_| Error::ParseRow {
            row,
            msg: format!("cannot parse list_length value {:?}", get(6).unwrap_or("")),
        })?;
        if list_length < 1 {
            return Err(Error::ParseRow {
                row,
                msg: "list_length must be >= 1".into(),
            });
        }
        let easting = parse_f64(1)?;
        let northing = parse_f64(2)?;
        if !easting.is_finite() || !northing.is_finite() {
            return Err(Error::ParseRow {
                row,
                msg: "non-finite coordinates".into(),
            });
        }
        records.push(VisitRecord {
            site_id: get(0)?.to_string(),
            easting,
            northing,
            year: get(3)?.parse().map_err(|_| Error::ParseRow {
                row,
                msg: format!("cannot parse year value {:?}", get(3).unwrap_or("")),
            })?,
            julian_day,
            detected,
            list_length,
        });
        for (slot, &ci) in extras.detection.iter_mut().zip(&extra_det_idx) {
            let raw = fields.get(ci).copied().unwrap_or("");
            slot.1.push(raw.parse().map_err(|_| Error::ParseRow {
                row,
                msg: format!("cannot parse {} value {raw:?}", slot.0),
            })?);
        }
        for (slot, &ci) in extras.occupancy.iter_mut().zip(&extra_occ_idx) {
            let raw = fields.get(ci).copied().unwrap_or("");
            slot.1.push(raw.parse().map_err(|_| Error::ParseRow {
                row,
                msg: format!("cannot parse {} value {raw:?}", slot.0),
            })?);
        }
    }

    dataset_from_records(records, extras, cfg)
}

/// Build the dataset from in-memory records (the ingestion core; `ingest`
/// wraps it with file parsing).
pub fn dataset_from_records(
    records: Vec<VisitRecord>,
    extras: ExtraCovariates,
    cfg: &IngestConfig,
) -> Result<(Dataset, IngestReport)> {
    let n_rows_read = records.len();
    if records.is_empty() {
        return Err(Error::InvalidInput("zero observations".into()));
    }
    if !records.iter().any(|r| r.detected) {
        return Err(Error::InvalidInput(
            "no detections of the focal species".into(),
        ));
    }
    let mut warnings = Vec::new();

    // Month filter: keep only calendar months with at least one detection.
    let (records, extras, n_dropped) = if cfg.filter_months {
        let mut detected_month = [false; 12];
        for r in &records {
            if r.detected {
                detected_month[month_of_julian(r.julian_day)] = true;
            }
        }
        let keep: Vec<bool> = records
            .iter()
            .map(|r| detected_month[month_of_julian(r.julian_day)])
            .collect();
        let n_dropped = keep.iter().filter(|k| !**k).count();
        let filter_records: Vec<VisitRecord> = records
            .into_iter()
            .zip(&keep)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
        let filter_col = |col: Vec<f64>| -> Vec<f64> {
            col.into_iter()
                .zip(&keep)
                .filter_map(|(v, k)| k.then_some(v))
                .collect()
        };
        let extras = ExtraCovariates {
            detection: extras
                .detection
                .into_iter()
                .map(|(n, v)| (n, filter_col(v)))
                .collect(),
            occupancy: extras
                .occupancy
                .into_iter()
                .map(|(n, v)| (n, filter_col(v)))
                .collect(),
        };
        (filter_records, extras, n_dropped)
    } else {
        (records, extras, 0)
    };
    if records.is_empty() {
        return Err(Error::InvalidInput(
            "zero observations after month filtering".into(),
        ));
    }

    // Site index: ids sorted, coordinates checked consistent per id.
    let mut site_map: BTreeMap<&str, [f64; 2]> = BTreeMap::new();
    for r in &records {
        match site_map.get(r.site_id.as_str()) {
            None => {
                site_map.insert(&r.site_id, [r.easting, r.northing]);
            }
            Some(c) => {
                if (c[0] - r.easting).abs() > 1e-9 || (c[1] - r.northing).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "site {} has inconsistent coordinates",
                        r.site_id
                    )));
                }
            }
        }
    }
    let site_ids: Vec<String> = site_map.keys().map(|s| s.to_string()).collect();
    let site_coords: Vec<[f64; 2]> = site_map.values().copied().collect();
    let site_index: BTreeMap<&str, usize> = site_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    // Year index.
    let mut years: Vec<i32> = records.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();
    let year_index: BTreeMap<i32, usize> = years.iter().enumerate().map(|(i, &y)| (y, i)).collect();

    // Sampling units: unique (site, year) pairs, sorted.
    let mut unit_keys: Vec<(usize, usize)> = records
        .iter()
        .map(|r| (site_index[r.site_id.as_str()], year_index[&r.year]))
        .collect();
    unit_keys.sort_unstable();
    unit_keys.dedup();
    let unit_index: BTreeMap<(usize, usize), usize> =
        unit_keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    // Duplicate exact rows only warn: repeat visits are legitimate.
    {
        let mut row_counts: BTreeMap<(&str, i32, u16, bool), usize> = BTreeMap::new();
        for r in &records {
            *row_counts
                .entry((r.site_id.as_str(), r.year, r.julian_day, r.detected))
                .or_default() += 1;
        }
        let dups: Vec<_> = row_counts.iter().filter(|&(_, &c)| c > 1).collect();
        if !dups.is_empty() {
            let mut msg = format!(
                "{} exact duplicate (site, year, day, detected) row groups; keeping all rows",
                dups.len()
            );
            if let Some(((id, y, d, det), c)) = dups.first() {
                let _ = write!(
                    msg,
                    " (e.g. site {id}, year {y}, day {d}, detected {det}: {c} rows)"
                );
            }
            warnings.push(msg);
        }
    }

    // Sort observations by unit, stable in original order.
    let mut order: Vec<usize> = (0..records.len()).collect();
    let obs_unit_of =
        |r: &VisitRecord| unit_index[&(site_index[r.site_id.as_str()], year_index[&r.year])];
    order.sort_by_key(|&i| obs_unit_of(&records[i]));

    let j = unit_keys.len();
    let obs_unit: Vec<usize> = order.iter().map(|&i| obs_unit_of(&records[i])).collect();
    let obs_y: Vec<bool> = order.iter().map(|&i| records[i].detected).collect();
    let obs_jd: Vec<u16> = order.iter().map(|&i| records[i].julian_day).collect();
    let obs_ll: Vec<u32> = order.iter().map(|&i| records[i].list_length).collect();
    let obs_site: Vec<usize> = order
        .iter()
        .map(|&i| site_index[records[i].site_id.as_str()])
        .collect();

    let reorder = |col: &[f64]| -> Vec<f64> { order.iter().map(|&i| col[i]).collect() };
    let det_extras: Vec<(String, Vec<f64>)> = extras
        .detection
        .iter()
        .map(|(nm, v)| (nm.clone(), reorder(v)))
        .collect();
    let occ_extras: Vec<(String, Vec<f64>)> = extras
        .occupancy
        .iter()
        .map(|(nm, v)| (nm.clone(), reorder(v)))
        .collect();

    let mut obs_range = vec![(0usize, 0usize); j];
    for (i, &u) in obs_unit.iter().enumerate() {
        if i == 0 || obs_unit[i - 1] != u {
            obs_range[u].0 = i;
        }
        obs_range[u].1 = i + 1;
    }
    let any_detection: Vec<bool> = obs_range
        .iter()
        .map(|&(s, e)| obs_y[s..e].iter().any(|&d| d))
        .collect();

    let unit_site: Vec<usize> = unit_keys.iter().map(|&(s, _)| s).collect();
    let unit_year: Vec<usize> = unit_keys.iter().map(|&(_, y)| y).collect();
    let mut site_unit_range = vec![(0usize, 0usize); site_ids.len()];
    for (jj, &s) in unit_site.iter().enumerate() {
        if jj == 0 || unit_site[jj - 1] != s {
            site_unit_range[s].0 = jj;
        }
        site_unit_range[s].1 = jj + 1;
    }

    let rel_ll = relative_list_length(&obs_site, &obs_ll, &site_coords, cfg.radius_km)?;

    // Detection design: relative list length + three Julian-date powers,
    // standardised after construction, then user columns.
    let (det_x, det_info) = build_detection_design(&rel_ll, &obs_jd, &det_extras)?;

    // Occupancy design: standardised year x easting / year x northing
    // products, re-standardised, then user columns (first row of each unit).
    let year_points: Vec<f64> = years.iter().map(|&y| f64::from(y)).collect();
    let occ_extra_unit: Vec<(String, Vec<f64>)> = occ_extras
        .iter()
        .map(|(nm, col)| (nm.clone(), obs_range.iter().map(|&(s, _)| col[s]).collect()))
        .collect();
    let (occ_x, occ_info) = build_occupancy_design(
        &unit_site,
        &unit_year,
        &site_coords,
        &year_points,
        &occ_extra_unit,
        cfg.interactions,
    )?;

    let p_det = det_info.names.len();
    let p_occ = occ_info.names.len();
    let ds = Dataset {
        observations: ObservationTable {
            y: obs_y,
            unit: obs_unit,
            julian_day: obs_jd,
            list_length: obs_ll,
            rel_list_length: rel_ll,
            x: det_x,
            p: p_det,
        },
        units: SamplingUnitTable {
            site: unit_site,
            year: unit_year,
            obs_range,
            any_detection,
            x: occ_x,
            p: p_occ,
        },
        site_ids,
        site_coords,
        site_unit_range,
        years,
        year_points,
        det_info,
        occ_info,
    };
    ds.validate()?;

    let report = IngestReport {
        n_rows_read,
        n_rows_dropped_month_filter: n_dropped,
        n_obs: ds.n_obs(),
        n_units: ds.n_units(),
        n_sites: ds.n_sites(),
        n_years: ds.n_years(),
        warnings,
    };
    Ok((ds, report))
}

/// Relative list length: each visit's list length divided by the maximum
/// list length over all visits at sites within `radius` of the visit's site
/// (self-inclusive, so the result lies in (0, 1]).
///
/// Uses a uniform spatial bucket index at cell size = radius.
pub fn relative_list_length(
    obs_site: &[usize],
    list_length: &[u32],
    site_coords: &[[f64; 2]],
    radius: f64,
) -> Result<Vec<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if obs_site.len() != list_length.len() {
        return Err(Error::DimensionMismatch(
            "observation columns differ in length".into(),
        ));
    }
    let s = site_coords.len();
    let mut site_max = vec![0u32; s];
    for (&st, &ll) in obs_site.iter().zip(list_length) {
        site_max[st] = site_max[st].max(ll);
    }

    let min_x = site_coords
        .iter()
        .map(|p| p[0])
        .fold(f64::INFINITY, f64::min);
    let min_y = site_coords
        .iter()
        .map(|p| p[1])
        .fold(f64::INFINITY, f64::min);
    let cell = |p: &[f64; 2]| -> (i64, i64) {
        (
            ((p[0] - min_x) / radius).floor() as i64,
            ((p[1] - min_y) / radius).floor() as i64,
        )
    };
    let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in site_coords.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }

    let r2 = radius * radius;
    let mut hood_max = vec![0u32; s];
    for (i, p) in site_coords.iter().enumerate() {
        let (cx, cy) = cell(p);
        let mut best = 0u32;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(members) = buckets.get(&(cx + dx, cy + dy)) {
                    for &m in members {
                        if site_max[m] > best {
                            let q = site_coords[m];
                            let (ex, ey) = (p[0] - q[0], p[1] - q[1]);
                            if ex * ex + ey * ey <= r2 {
                                best = site_max[m];
                            }
                        }
                    }
                }
            }
        }
        hood_max[i] = best;
    }

    Ok(obs_site
        .iter()
        .zip(list_length)
        .map(|(&st, &ll)| f64::from(ll) / f64::from(hood_max[st]))
        .collect())
}

/// Detection design columns: [rel list length, jd, jd^2, jd^3, extras...],
/// each standardised after construction.
pub fn build_detection_design(
    rel_ll: &[f64],
    julian_day: &[u16],
    extras: &[(String, Vec<f64>)],
) -> Result<(Vec<f64>, DetDesignInfo)> {
    let n = rel_ll.len();
    let mut columns: Vec<(String, Vec<f64>)> = vec![
        ("rel_list_length".into(), rel_ll.to_vec()),
        (
            "julian_day".into(),
            julian_day.iter().map(|&d| f64::from(d)).collect(),
        ),
        (
            "julian_day_sq".into(),
            julian_day.iter().map(|&d| f64::from(d).powi(2)).collect(),
        ),
        (
            "julian_day_cubed".into(),
            julian_day.iter().map(|&d| f64::from(d).powi(3)).collect(),
        ),
    ];
    columns.extend(extras.iter().cloned());

    let mut standardizers = Vec::with_capacity(columns.len());
    for (name, col) in columns.iter_mut() {
        standardizers.push(standardize_column(col, name)?);
    }

    let p = columns.len();
    let mut x = vec![0.0; n * p];
    for (c, (_, col)) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[i * p + c] = v;
        }
    }
    let names = columns.into_iter().map(|(nm, _)| nm).collect();
    Ok((
        x,
        DetDesignInfo {
            names,
            standardizers,
        },
    ))
}

/// Occupancy design columns: standardised-year x standardised-easting and
/// standardised-year x standardised-northing products, themselves
/// standardised, then extras. Main effects of year, easting and northing are
/// deliberately excluded: the year and site random effects already carry
/// them, and adding the main effects would overparameterise the model.
pub fn build_occupancy_design(
    unit_site: &[usize],
    unit_year: &[usize],
    site_coords: &[[f64; 2]],
    year_points: &[f64],
    extras: &[(String, Vec<f64>)],
    interactions: bool,
) -> Result<(Vec<f64>, OccDesignInfo)> {
    let j = unit_site.len();
    let mut info = OccDesignInfo {
        interactions,
        names: Vec::new(),
        year_std: None,
        east_std: None,
        north_std: None,
        ye_std: None,
        yn_std: None,
        n_extra: extras.len(),
    };
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();

    if interactions {
        let mut yr: Vec<f64> = unit_year.iter().map(|&t| year_points[t]).collect();
        let mut east: Vec<f64> = unit_site.iter().map(|&s| site_coords[s][0]).collect();
        let mut north: Vec<f64> = unit_site.iter().map(|&s| site_coords[s][1]).collect();
        info.year_std = Some(standardize_column(
            &mut yr,
            "year (for year_x_easting/year_x_northing)",
        )?);
        info.east_std = Some(standardize_column(
            &mut east,
            "easting (for year_x_easting)",
        )?);
        info.north_std = Some(standardize_column(
            &mut north,
            "northing (for year_x_northing)",
        )?);
        let ye: Vec<f64> = yr.iter().zip(&east).map(|(a, b)| a * b).collect();
        let yn: Vec<f64> = yr.iter().zip(&north).map(|(a, b)| a * b).collect();
        columns.push(("year_x_easting".into(), ye));
        columns.push(("year_x_northing".into(), yn));
    }
    columns.extend(extras.iter().cloned());

    let mut standardizers = Vec::with_capacity(columns.len());
    for (name, col) in columns.iter_mut() {
        standardizers.push(standardize_column(col, name)?);
    }
    if interactions {
        info.ye_std = Some(standardizers[0]);
        info.yn_std = Some(standardizers[1]);
    }

    let p = columns.len();
    let mut x = vec![0.0; j * p];
    for (c, (_, col)) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[i * p + c] = v;
        }
    }
    info.names = columns.into_iter().map(|(nm, _)| nm).collect();
    Ok((x, info))
}

/// Calendar month (0-based) of a 1..=366 Julian day, non-leap convention;
/// day 366 maps to December.
pub fn month_of_julian(jd: u16) -> usize {
    const CUM: [u16; 12] = [31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 366];
    CUM.iter().position(|&c| jd <= c).unwrap_or(11)
}

/// Write records in the canonical ingestion schema.
pub fn write_csv(path: &Path, records: &[VisitRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", CANONICAL_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.site_id,
            r.easting,
            r.northing,
            r.year,
            r.julian_day,
            u8::from(r.detected),
            r.list_length
        )?;
    }
    Ok(())
}
