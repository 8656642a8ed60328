//! The five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use occfit_core::data::{IngestConfig, ingest};
use occfit_core::posterior::{self, GofFile, GofReport, gof_report_from_draws, summarize_scalar};
use occfit_core::sampler::{McmcConfig, Priors, run_chain};
use occfit_core::simulate::{self, CountModel, DetectionTruth, SimConfig};

use crate::CliError;
use crate::config::RunConfig;

const FIT_KEYS: &[&str] = &[
    "input",
    "out",
    "seed",
    "iterations",
    "burnin",
    "thin",
    "grid_step_km",
    "ls_grid",
    "threads",
    "debug_dense_check",
    "no_spatial",
    "constant_detection",
    "fix_detection_hypers",
    "site_prob_years",
    "radius_km",
    "filter_months",
    "interactions",
    "det_covariates",
    "occ_covariates",
    "delimiter",
];

const SIMULATE_KEYS: &[&str] = &[
    "out",
    "seed",
    "preset",
    "sites",
    "years",
    "visit_prob",
    "count_model",
    "count_mean",
    "mu_psi",
    "sigma_eps",
    "u",
    "u_start",
    "u_end",
    "sigma_t",
    "l_t",
    "sigma_s",
    "l_s",
    "year0",
    "jd_min",
    "jd_max",
    "list_length_mean",
];

const BENCH_KEYS: &[&str] = &[
    "out",
    "seed",
    "sites",
    "iterations",
    "threads",
    "grid_step_km",
    "no_spatial",
];

const GOF_KEYS: &[&str] = &["chain", "out"];

const SUMMARY_KEYS: &[&str] = &["chain", "levels"];

fn write_run_log(
    outdir: &Path,
    command: &str,
    cfg: &RunConfig,
    extra: serde_json::Value,
    wall_seconds: f64,
) -> Result<(), CliError> {
    let log = serde_json::json!({
        "command": command,
        "config": cfg.resolved(),
        "engine_version": env!("CARGO_PKG_VERSION"),
        "wall_seconds": wall_seconds,
        "detail": extra,
    });
    let path = outdir.join("run_log.json");
    let f = std::fs::File::create(&path)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &log)
        .map_err(|e| CliError::Run(e.to_string()))?;
    Ok(())
}

fn ingest_config(cfg: &RunConfig) -> Result<IngestConfig, CliError> {
    let delimiter = match cfg.get("delimiter") {
        None => b',',
        Some(d) if d.len() == 1 => d.as_bytes()[0],
        Some(d) => {
            return Err(CliError::Usage(format!(
                "--delimiter expects one character, got {d:?}"
            )));
        }
    };
    Ok(IngestConfig {
        delimiter,
        radius_km: cfg.parse_or("radius_km", 50.0)?,
        filter_months: cfg.parse_bool("filter_months", false)?,
        interactions: cfg.parse_bool("interactions", true)?,
        det_covariates: cfg.parse_list("det_covariates")?.unwrap_or_default(),
        occ_covariates: cfg.parse_list("occ_covariates")?.unwrap_or_default(),
    })
}

fn mcmc_config(cfg: &RunConfig) -> Result<McmcConfig, CliError> {
    let defaults = McmcConfig::default();
    Ok(McmcConfig {
        iterations: cfg.parse_or("iterations", defaults.iterations)?,
        burnin: cfg.parse_or("burnin", defaults.burnin)?,
        thin: cfg.parse_or("thin", defaults.thin)?,
        seed: cfg.parse_or("seed", defaults.seed)?,
        grid_step_km: cfg.parse_or("grid_step_km", defaults.grid_step_km)?,
        ls_grid: cfg.parse_list("ls_grid")?,
        threads: cfg.parse_or("threads", 0usize)?,
        debug_dense_check: cfg.parse_bool("debug_dense_check", false)?,
        no_spatial: cfg.parse_bool("no_spatial", false)?,
        constant_detection: cfg.parse_bool("constant_detection", false)?,
        fix_detection_hypers: cfg.parse_bool("fix_detection_hypers", false)?,
        site_prob_years: cfg.parse_list("site_prob_years")?.unwrap_or_default(),
    })
}

pub fn cmd_fit(args: &[String]) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, FIT_KEYS)?;
    let input = PathBuf::from(cfg.require("input")?);
    let outdir = PathBuf::from(cfg.require("out")?);
    let started = Instant::now();

    let (ds, report) = ingest(&input, &ingest_config(&cfg)?)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "ingested {}: {} observations, {} sampling units, {} sites, {} years",
        input.display(),
        report.n_obs,
        report.n_units,
        report.n_sites,
        report.n_years
    );

    let mcmc = mcmc_config(&cfg)?;
    let priors = Priors::default().scaled_to(&ds);
    let chain = run_chain(&ds, &priors, &mcmc)?;
    println!(
        "chain done: {} retained draws over {} cells, MH acceptance {:.2}, {:.1}s",
        chain.n_draws(),
        chain.metadata.n_cells,
        chain.metadata.mh_acceptance,
        chain.metadata.wall_seconds
    );

    std::fs::create_dir_all(&outdir)?;
    posterior::write_outputs(&chain, &ds, &outdir)?;
    let detail = serde_json::json!({
        "ingest": report,
        "chain": chain.metadata,
        "priors": priors,
    });
    write_run_log(
        &outdir,
        "fit",
        &cfg,
        detail,
        started.elapsed().as_secs_f64(),
    )?;
    println!("outputs written to {}", outdir.display());
    Ok(())
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig, CliError> {
    let seed = cfg.parse_or("seed", 42u64)?;
    let mut sim = match cfg.get("preset") {
        None => SimConfig::timing_preset(cfg.parse_or("sites", 500usize)?, seed),
        Some(name) => match name {
            "supp-2.1-s500" => SimConfig::timing_preset(500, seed),
            "supp-2.1-s1000" => SimConfig::timing_preset(1000, seed),
            "supp-2.1-s2500" => SimConfig::timing_preset(2500, seed),
            "supp-2.1-s5000" => SimConfig::timing_preset(5000, seed),
            "supp-2.2" => SimConfig::sparse_spatial_preset(seed),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown preset {other:?}; expected supp-2.1-s500/-s1000/-s2500/-s5000 or supp-2.2"
                )));
            }
        },
    };
    if let Some(s) = cfg.parse_opt::<usize>("sites")? {
        sim.n_sites = s;
    }
    if let Some(y) = cfg.parse_opt::<usize>("years")? {
        sim.n_years = y;
    }
    if let Some(p) = cfg.parse_opt::<f64>("visit_prob")? {
        sim.visit_model.visit_prob = p;
    }
    match (cfg.get("count_model"), cfg.parse_opt::<f64>("count_mean")?) {
        (None, None) => {}
        (model, mean) => {
            let current_mean = match sim.visit_model.counts {
                CountModel::Poisson(m) | CountModel::OnePlusPoisson(m) => m,
            };
            let mean = mean.unwrap_or(current_mean);
            sim.visit_model.counts = match model {
                None => match sim.visit_model.counts {
                    CountModel::Poisson(_) => CountModel::Poisson(mean),
                    CountModel::OnePlusPoisson(_) => CountModel::OnePlusPoisson(mean),
                },
                Some("poisson") => CountModel::Poisson(mean),
                Some("one_plus_poisson") => CountModel::OnePlusPoisson(mean),
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "unknown count model {other:?}; expected poisson or one_plus_poisson"
                    )));
                }
            };
        }
    }
    if let Some(v) = cfg.parse_opt::<f64>("mu_psi")? {
        sim.mu_psi = v;
    }
    if let Some(v) = cfg.parse_opt::<f64>("sigma_eps")? {
        sim.sigma_eps = v;
    }
    match (
        cfg.parse_opt::<f64>("u")?,
        cfg.parse_opt::<f64>("u_start")?,
        cfg.parse_opt::<f64>("u_end")?,
    ) {
        (Some(u), None, None) => sim.u = DetectionTruth::Constant(u),
        (None, Some(start), Some(end)) => sim.u = DetectionTruth::Linear { start, end },
        (None, None, None) => {}
        _ => {
            return Err(CliError::Usage(
                "detection truth needs either --u or both --u-start and --u-end".into(),
            ));
        }
    }
    let temporal = (
        cfg.parse_opt::<f64>("sigma_t")?,
        cfg.parse_opt::<f64>("l_t")?,
    );
    if let (Some(sigma), Some(l)) = temporal {
        sim.temporal = if sigma > 0.0 {
            Some(occfit_core::kernel::KernelParams {
                length_scale: l,
                amplitude: sigma,
            })
        } else {
            None
        };
    }
    let spatial = (
        cfg.parse_opt::<f64>("sigma_s")?,
        cfg.parse_opt::<f64>("l_s")?,
    );
    if let (Some(sigma), Some(l)) = spatial {
        sim.spatial = if sigma > 0.0 {
            Some(occfit_core::kernel::KernelParams {
                length_scale: l,
                amplitude: sigma,
            })
        } else {
            None
        };
    }
    if let Some(v) = cfg.parse_opt::<i32>("year0")? {
        sim.year0 = v;
    }
    if let Some(v) = cfg.parse_opt::<u16>("jd_min")? {
        sim.jd_min = v;
    }
    if let Some(v) = cfg.parse_opt::<u16>("jd_max")? {
        sim.jd_max = v;
    }
    if let Some(v) = cfg.parse_opt::<f64>("list_length_mean")? {
        sim.list_length_mean = v;
    }
    sim.seed = seed;
    Ok(sim)
}

pub fn cmd_simulate(args: &[String]) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, SIMULATE_KEYS)?;
    let outdir = PathBuf::from(cfg.require("out")?);
    let started = Instant::now();
    let sim = sim_config(&cfg)?;
    let (records, truth) = simulate::generate(&sim)?;
    std::fs::create_dir_all(&outdir)?;
    occfit_core::data::write_csv(&outdir.join("visits.csv"), &records)?;
    simulate::write_truth(&outdir.join("truth.json"), &truth)?;
    let detail = serde_json::json!({
        "sim_config": sim,
        "n_records": records.len(),
        "n_detections": records.iter().filter(|r| r.detected).count(),
    });
    write_run_log(
        &outdir,
        "simulate",
        &cfg,
        detail,
        started.elapsed().as_secs_f64(),
    )?;
    println!(
        "simulated {} visit records over {} sites x {} years into {}",
        records.len(),
        sim.n_sites,
        sim.n_years,
        outdir.display()
    );
    Ok(())
}

pub fn cmd_bench(args: &[String]) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, BENCH_KEYS)?;
    let outdir = PathBuf::from(cfg.require("out")?);
    let sites: Vec<usize> = cfg
        .parse_list("sites")?
        .unwrap_or_else(|| vec![500, 1000, 2500, 5000]);
    let iterations: usize = cfg.parse_or("iterations", 10_000)?;
    let seed: u64 = cfg.parse_or("seed", 42u64)?;
    let threads: usize = cfg.parse_or("threads", 0usize)?;
    // the timing study compares against a model without the spatial block
    let no_spatial = cfg.parse_bool("no_spatial", true)?;
    let started = Instant::now();

    let mut rows = Vec::new();
    println!("sites,wall_minutes,iterations_per_second");
    for &s in &sites {
        let sim = SimConfig::timing_preset(s, seed);
        let (records, _) = simulate::generate(&sim)?;
        let (ds, _) = occfit_core::data::dataset_from_records(
            records,
            occfit_core::data::ExtraCovariates::default(),
            &IngestConfig::default(),
        )?;
        let mcmc = McmcConfig {
            iterations,
            burnin: 0,
            thin: (iterations / 20).max(1),
            seed,
            grid_step_km: cfg.parse_or("grid_step_km", 0.2)?,
            threads,
            no_spatial,
            ..McmcConfig::default()
        };
        let priors = Priors::default().scaled_to(&ds);
        let t0 = Instant::now();
        let chain = run_chain(&ds, &priors, &mcmc)?;
        let secs = t0.elapsed().as_secs_f64();
        println!("{s},{:.4},{:.1}", secs / 60.0, iterations as f64 / secs);
        rows.push((s, secs, chain.n_draws()));
    }

    // least-squares slope of log time on log size
    let exponent = if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|(s, _, _)| (*s as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|(_, t, _)| t.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    println!("fitted scaling exponent: {exponent:.3}");

    std::fs::create_dir_all(&outdir)?;
    let path = outdir.join("bench.csv");
    let mut out = String::from("sites,seconds,iterations,retained_draws\n");
    for (s, secs, kept) in &rows {
        out.push_str(&format!("{s},{secs},{iterations},{kept}\n"));
    }
    std::fs::write(&path, out)?;
    let detail = serde_json::json!({
        "rows": rows.iter().map(|(s, t, _)| serde_json::json!({"sites": s, "seconds": t})).collect::<Vec<_>>(),
        "scaling_exponent": exponent,
        "iterations": iterations,
    });
    write_run_log(
        &outdir,
        "bench",
        &cfg,
        detail,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

fn print_gof_report(report: &GofReport) {
    println!(
        "goodness of fit: {:.1}% of yearly and {:.1}% of regional statistics inside the 95% band",
        100.0 * report.yearly_inside95_fraction,
        100.0 * report.regional_inside95_fraction
    );
}

pub fn cmd_gof(args: &[String]) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, GOF_KEYS)?;
    let chain_dir = PathBuf::from(cfg.require("chain")?);
    let outdir = cfg
        .get("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| chain_dir.clone());
    let started = Instant::now();

    let path = chain_dir.join("chain_gof.json");
    let f = std::fs::File::open(&path)
        .map_err(|e| CliError::Run(format!("cannot open {}: {e}", path.display())))?;
    let gof_file: GofFile = serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| CliError::Run(format!("cannot parse {}: {e}", path.display())))?;

    let report = gof_report_from_draws(&gof_file.gof, &gof_file.years, &gof_file.region_centers)?;
    std::fs::create_dir_all(&outdir)?;
    write_gof_csvs(&report, &gof_file, &outdir)?;
    print_gof_report(&report);
    let detail = serde_json::json!({
        "yearly_inside95_fraction": report.yearly_inside95_fraction,
        "regional_inside95_fraction": report.regional_inside95_fraction,
    });
    write_run_log(
        &outdir,
        "gof",
        &cfg,
        detail,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

fn write_gof_csvs(report: &GofReport, gof_file: &GofFile, outdir: &Path) -> Result<(), CliError> {
    use std::io::Write;
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
    for (e, c) in report.regional.iter().zip(&gof_file.region_centers) {
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

pub fn cmd_summary(args: &[String]) -> Result<(), CliError> {
    use std::io::Write;
    let cfg = RunConfig::from_args(args, SUMMARY_KEYS)?;
    let chain_dir = PathBuf::from(cfg.require("chain")?);
    let levels: Vec<f64> = cfg.parse_list("levels")?.unwrap_or_else(|| vec![0.95]);

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut printed = 0usize;
    // a closed pipe (e.g. | head) silently ends the listing
    if writeln!(out, "name,median,lower,upper,ess").is_err() {
        return Ok(());
    }
    let mut entries: Vec<_> = std::fs::read_dir(&chain_dir)
        .map_err(|e| CliError::Run(format!("cannot read {}: {e}", chain_dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(param) = name
            .strip_prefix("trace_")
            .and_then(|n| n.strip_suffix(".csv"))
        else {
            continue;
        };
        let draws = read_trace(&path)?;
        let s = summarize_scalar(param, &draws, &levels)?;
        let (_, lo, hi) = s.intervals[0];
        if writeln!(out, "{},{},{lo},{hi},{:.1}", s.name, s.median, s.ess).is_err() {
            return Ok(());
        }
        printed += 1;
    }
    if printed == 0 {
        return Err(CliError::Run(format!(
            "no trace_*.csv files found in {}",
            chain_dir.display()
        )));
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut draws = Vec::new();
    for line in text.lines().skip(1) {
        let Some((_, value)) = line.split_once(',') else {
            continue;
        };
        draws.push(
            value
                .parse()
                .map_err(|_| CliError::Run(format!("bad trace value in {}", path.display())))?,
        );
    }
    Ok(draws)
}
