//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use occfit_core::data::{
    Dataset, DetDesignInfo, ExtraCovariates, IngestConfig, ObservationTable, OccDesignInfo,
    SamplingUnitTable, VisitRecord, dataset_from_records,
};

pub fn rec(site: &str, x: f64, y: f64, year: i32, jd: u16, det: bool, ll: u32) -> VisitRecord {
    VisitRecord {
        site_id: site.into(),
        easting: x,
        northing: y,
        year,
        julian_day: jd,
        detected: det,
        list_length: ll,
    }
}

pub fn build(records: Vec<VisitRecord>, cfg: &IngestConfig) -> Dataset {
    dataset_from_records(records, ExtraCovariates::default(), cfg)
        .expect("fixture dataset")
        .0
}

pub fn no_interactions() -> IngestConfig {
    IngestConfig {
        interactions: false,
        ..IngestConfig::default()
    }
}

/// A dataset with the given per-unit layout and no covariate columns at all,
/// for exercising the sampler against hand-computable conditionals.
/// `units` lists (site index, year index, visit detections).
pub fn bare_dataset(n_sites: usize, n_years: usize, units: &[(usize, usize, &[bool])]) -> Dataset {
    let mut sorted: Vec<&(usize, usize, &[bool])> = units.iter().collect();
    sorted.sort_by_key(|(s, t, _)| (*s, *t));

    let mut obs_y = Vec::new();
    let mut obs_unit = Vec::new();
    let mut obs_range = Vec::new();
    let mut unit_site = Vec::new();
    let mut unit_year = Vec::new();
    let mut any_detection = Vec::new();
    for (j, (s, t, dets)) in sorted.iter().enumerate() {
        let start = obs_y.len();
        for &d in dets.iter() {
            obs_y.push(d);
            obs_unit.push(j);
        }
        obs_range.push((start, obs_y.len()));
        unit_site.push(*s);
        unit_year.push(*t);
        any_detection.push(dets.iter().any(|d| *d));
    }

    let mut site_unit_range = vec![(0usize, 0usize); n_sites];
    for (j, &s) in unit_site.iter().enumerate() {
        if j == 0 || unit_site[j - 1] != s {
            site_unit_range[s].0 = j;
        }
        site_unit_range[s].1 = j + 1;
    }
    // sites without units keep an empty range at the current cursor
    let mut cursor = 0;
    for (s, r) in site_unit_range.iter_mut().enumerate() {
        if unit_site.contains(&s) {
            cursor = r.1;
        } else {
            *r = (cursor, cursor);
        }
    }

    let n = obs_y.len();
    let ds = Dataset {
        observations: ObservationTable {
            y: obs_y,
            unit: obs_unit,
            julian_day: vec![150; n],
            list_length: vec![1; n],
            rel_list_length: vec![1.0; n],
            x: Vec::new(),
            p: 0,
        },
        units: SamplingUnitTable {
            site: unit_site,
            year: unit_year,
            obs_range,
            any_detection,
            x: Vec::new(),
            p: 0,
        },
        site_ids: (0..n_sites).map(|s| format!("s{s:04}")).collect(),
        site_coords: (0..n_sites).map(|s| [s as f64 * 3.0, 0.0]).collect(),
        site_unit_range,
        years: (0..n_years).map(|t| 2000 + t as i32).collect(),
        year_points: (0..n_years).map(|t| 2000.0 + t as f64).collect(),
        det_info: DetDesignInfo {
            names: Vec::new(),
            standardizers: Vec::new(),
        },
        occ_info: OccDesignInfo {
            interactions: false,
            names: Vec::new(),
            year_std: None,
            east_std: None,
            north_std: None,
            ye_std: None,
            yn_std: None,
            n_extra: 0,
        },
    };
    ds.validate().expect("bare dataset valid");
    ds
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
