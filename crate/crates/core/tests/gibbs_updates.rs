//! Per-update checks of the Gibbs steps against hand-computed conditionals
//! and independent oracles.

mod common;

use common::{bare_dataset, mean_sd};
use nalgebra::{DMatrix, DVector};
use occfit_core::kernel::{KernelParams, SupportPoints, build_covariance};
use occfit_core::pg::{PgParams, pg_mean};
use occfit_core::sampler::{McmcConfig, Priors, Sampler, temporal_collapsed_log_marginal};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn cfg_no_spatial(seed: u64) -> McmcConfig {
    McmcConfig {
        iterations: 10,
        burnin: 0,
        thin: 1,
        seed,
        grid_step_km: 10.0,
        no_spatial: true,
        ..McmcConfig::default()
    }
}

#[test]
fn omega_psi_matches_pg_moments() {
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(1)).unwrap();

    // eta = 0 everywhere
    let n = 20_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.update_omega_psi().unwrap();
        draws.push(sampler.state().omega_psi[0]);
    }
    let (mean, sd) = mean_sd(&draws);
    let se = sd / (n as f64).sqrt();
    assert!((mean - 0.25).abs() < 4.0 * se, "mean {mean}");

    // eta = 2
    sampler.state_mut().mu_psi = 2.0;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.update_omega_psi().unwrap();
        draws.push(sampler.state().omega_psi[0]);
    }
    let (mean, sd) = mean_sd(&draws);
    let se = sd / (n as f64).sqrt();
    let expected = pg_mean(PgParams::new(1, 2.0).unwrap());
    assert!(
        (mean - expected).abs() < 4.0 * se,
        "mean {mean} vs {expected}"
    );
}

#[test]
fn omega_psi_reproducible_for_equal_seeds() {
    let ds = bare_dataset(
        3,
        2,
        &[(0, 0, &[true]), (1, 1, &[false]), (2, 0, &[true, false])],
    );
    let run = || {
        let mut s = Sampler::new(&ds, Priors::default(), cfg_no_spatial(99)).unwrap();
        s.update_omega_psi().unwrap();
        s.state().omega_psi.clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn eps_update_matches_hand_posterior() {
    // single unit, omega = 1, r = 0, k = 1/2, sigma_eps^2 = 1
    // => eps | rest ~ N(1/4, 1/2)
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(7)).unwrap();
    {
        let st = sampler.state_mut();
        st.omega_psi[0] = 1.0;
        st.z[0] = true;
        st.sigma_eps2 = 1.0;
    }
    let n = 20_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.update_eps().unwrap();
        draws.push(sampler.state().eps[0]);
    }
    let (mean, sd) = mean_sd(&draws);
    let se_mean = (0.5f64 / n as f64).sqrt();
    let var = sd * sd;
    let se_var = 0.5 * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((mean - 0.25).abs() < 4.0 * se_mean, "mean {mean}");
    assert!((var - 0.5).abs() < 4.0 * se_var, "var {var}");
}

#[test]
fn eps_prior_draw_for_site_without_units() {
    let ds = bare_dataset(2, 1, &[(0, 0, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(8)).unwrap();
    sampler.state_mut().sigma_eps2 = 2.25;
    let n = 20_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.update_eps().unwrap();
        draws.push(sampler.state().eps[1]);
    }
    let (mean, sd) = mean_sd(&draws);
    assert!(
        mean.abs() < 4.0 * 1.5 / (n as f64).sqrt() + 0.01,
        "mean {mean}"
    );
    assert!((sd - 1.5).abs() < 0.05, "sd {sd}");
}

#[test]
fn eps_degenerate_prior_pins_to_zero() {
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(9)).unwrap();
    sampler.state_mut().sigma_eps2 = 1e-12;
    for _ in 0..100 {
        sampler.update_eps().unwrap();
        assert!(sampler.state().eps[0].abs() < 1e-4);
    }
}

#[test]
fn sigma_eps_conjugate_law() {
    // S = 1, eps = 0 => IG(a + 1/2, b); with a = 2, b = 1 the mean is
    // 1 / 1.5 = 2/3
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(10)).unwrap();
    let n = 10_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.state_mut().eps[0] = 0.0;
        sampler.update_sigma_eps().unwrap();
        let v = sampler.state().sigma_eps2;
        assert!(v > 0.0);
        draws.push(v);
    }
    let (mean, sd) = mean_sd(&draws);
    let se = sd / (n as f64).sqrt();
    let expected = 1.0 / 1.5;
    assert!(
        (mean - expected).abs() < 3.0 * se,
        "mean {mean} vs {expected}"
    );
}

#[test]
fn z_update_forced_and_enumerated() {
    // unit 0 has a detection (z forced); unit 1 has one undetected visit
    // with psi = p = 1/2 => P(z = 1 | y = 0) = 1/3
    let ds = bare_dataset(2, 1, &[(0, 0, &[true]), (1, 0, &[false])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(11)).unwrap();
    let n = 30_000;
    let mut ones = 0usize;
    for _ in 0..n {
        sampler.update_z().unwrap();
        assert!(sampler.state().z[0]);
        ones += usize::from(sampler.state().z[1]);
    }
    let phat = ones as f64 / n as f64;
    let se = (phat * (1.0 - phat) / n as f64).sqrt();
    assert!(
        (phat - 1.0 / 3.0).abs() < 4.0 * se,
        "P(z=1) = {phat}, expected 1/3"
    );
}

#[test]
fn z_update_saturates_with_certain_occupancy() {
    let ds = bare_dataset(2, 1, &[(0, 0, &[true]), (1, 0, &[false])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(12)).unwrap();
    sampler.state_mut().mu_psi = 60.0; // psi ~= 1 dominates any miss penalty
    sampler.state_mut().u[0] = -60.0; // detections nearly impossible
    for _ in 0..200 {
        sampler.update_z().unwrap();
        assert!(sampler.state().z[1], "z must stay 1 when psi -> 1");
    }
}

#[test]
fn temporal_mh_zero_step_freezes_chain() {
    let ds = bare_dataset(2, 3, &[(0, 0, &[true]), (1, 1, &[false]), (0, 2, &[true])]);
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg_no_spatial(13)).unwrap();
    sampler.set_mh_scale(0.0);
    let (l0, s0) = (sampler.state().l_t, sampler.state().sigma_t);
    for _ in 0..100 {
        sampler.update_omega_psi().unwrap();
        sampler.update_temporal_hypers().unwrap();
        assert_eq!(sampler.state().l_t, l0);
        assert_eq!(sampler.state().sigma_t, s0);
    }
}

#[test]
fn collapsed_marginal_matches_quadrature_in_one_dimension() {
    // Y = 1: the collapsed value must equal
    // log Integral exp(v b - d b^2 / 2) N(b; 0, k) db
    let year_points = [2000.0];
    let d = [1.7];
    let v = [0.4];
    for (l, sigma) in [(1.0, 0.5), (3.0, 1.4), (0.2, 2.0)] {
        let params = KernelParams::new(l, sigma).unwrap();
        let collapsed = temporal_collapsed_log_marginal(&params, &year_points, &d, &v).unwrap();

        let k = build_covariance(
            &params,
            &SupportPoints::temporal(year_points.to_vec()).unwrap(),
        )
        .unwrap()
        .matrix()[(0, 0)];
        // composite Simpson over +-12 prior sd
        let half = 12.0 * k.sqrt();
        let n = 40_001usize;
        let h = 2.0 * half / (n - 1) as f64;
        let f = |b: f64| -> f64 {
            ((v[0] * b - 0.5 * d[0] * b * b) - 0.5 * b * b / k).exp()
                / (2.0 * std::f64::consts::PI * k).sqrt()
        };
        let mut integral = f(-half) + f(half);
        for i in 1..n - 1 {
            let b = -half + i as f64 * h;
            integral += f(b) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        integral *= h / 3.0;
        let oracle = integral.ln();
        assert!(
            (collapsed - oracle).abs() < 1e-6,
            "l={l} sigma={sigma}: collapsed {collapsed} vs quadrature {oracle}"
        );
    }
}

#[test]
fn collapsed_marginal_matches_gaussian_identity_up_to_constant() {
    // Y = 3: the collapsed value must differ from the dense marginal
    // N(z_tilde / omega; 0, diag(1/omega) + X K X') by the same constant at
    // every hyperparameter value.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
    let year_points = [2000.0, 2001.5, 2003.7];
    let j = 30usize;
    let year: Vec<usize> = (0..j).map(|_| rng.random_range(0..3)).collect();
    let omega: Vec<f64> = (0..j).map(|_| rng.random::<f64>() + 0.1).collect();
    let ztilde: Vec<f64> = (0..j).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

    let mut d = [0.0; 3];
    let mut v = [0.0; 3];
    for i in 0..j {
        d[year[i]] += omega[i];
        v[year[i]] += ztilde[i];
    }

    let pairs = [(0.5, 0.3), (1.0, 1.0), (2.0, 0.7), (4.0, 1.8), (0.8, 2.5)];
    let mut diffs = Vec::new();
    for (l, sigma) in pairs {
        let params = KernelParams::new(l, sigma).unwrap();
        let collapsed = temporal_collapsed_log_marginal(&params, &year_points, &d, &v).unwrap();

        let k = build_covariance(
            &params,
            &SupportPoints::temporal(year_points.to_vec()).unwrap(),
        )
        .unwrap()
        .matrix()
        .clone();
        let mut cov = DMatrix::<f64>::zeros(j, j);
        for a in 0..j {
            for b in 0..j {
                cov[(a, b)] = k[(year[a], year[b])];
            }
            cov[(a, a)] += 1.0 / omega[a];
        }
        let yhat = DVector::from_iterator(j, (0..j).map(|i| ztilde[i] / omega[i]));
        let chol = nalgebra::Cholesky::new(cov).unwrap();
        let log_det: f64 = (0..j).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        let quad = yhat.dot(&chol.solve(&yhat));
        let oracle = -0.5 * (j as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);

        diffs.push(collapsed - oracle);
    }
    let base = diffs[0];
    for (i, diff) in diffs.iter().enumerate() {
        assert!(
            (diff - base).abs() < 1e-8,
            "pair {i}: constant violated ({diff} vs {base})"
        );
    }
}

#[test]
fn spatial_grid_search_degenerate_and_conjugate() {
    // single grid value: the index can never move
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let cfg = McmcConfig {
        ls_grid: Some(vec![0.5]),
        grid_step_km: 10.0,
        burnin: 0,
        iterations: 10,
        thin: 1,
        seed: 20,
        ..McmcConfig::default()
    };
    let priors = Priors {
        a_sigma_s: 3.0,
        b_sigma_s: 2.0,
        ..Priors::default()
    };
    let mut sampler = Sampler::new(&ds, priors, cfg).unwrap();
    assert_eq!(sampler.state().l_s_idx, 0);

    // M = 1: sigma_s^2 | a ~ IG(a0 + 1/2, b0 + a^2/(2(1+jitter)))
    let a_val = 0.7f64;
    let n = 10_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.state_mut().a_tilde[0] = a_val;
        sampler.update_spatial_hypers().unwrap();
        assert_eq!(sampler.state().l_s_idx, 0);
        let v = sampler.state().sigma_s.powi(2);
        assert!(v > 0.0);
        draws.push(v);
    }
    let shape = 3.5;
    let rate = 2.0 + a_val * a_val / (2.0 * (1.0 + 1e-6));
    let expected_mean = rate / (shape - 1.0);
    let (mean, sd) = mean_sd(&draws);
    let se = sd / (n as f64).sqrt();
    assert!(
        (mean - expected_mean).abs() < 3.0 * se,
        "mean {mean} vs {expected_mean}"
    );
}

#[test]
fn spatial_grid_search_prefers_generating_length_scale() {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    // 50 sites in their own cells; a_tilde simulated from the middle grid
    // value's kernel must win the grid search most often
    let units: Vec<(usize, usize, Vec<bool>)> = (0..50).map(|s| (s, 0usize, vec![true])).collect();
    let unit_refs: Vec<(usize, usize, &[bool])> = units
        .iter()
        .map(|(s, t, d)| (*s, *t, d.as_slice()))
        .collect();
    let ds = bare_dataset(50, 1, &unit_refs);
    let cfg = McmcConfig {
        ls_grid: Some(vec![2.0, 6.0, 18.0]),
        grid_step_km: 3.0,
        burnin: 0,
        iterations: 10,
        thin: 1,
        seed: 21,
        ..McmcConfig::default()
    };
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg).unwrap();

    // exact draw from the middle kernel over the grid centers
    let centers = sampler.grid().centers.clone();
    let cov = build_covariance(
        &KernelParams::new(6.0, 1.0).unwrap(),
        &SupportPoints::spatial(centers).unwrap(),
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let z = DVector::from_fn(50, |_, _| rand_distr::StandardNormal.sample(&mut rng));
    let a = cov.chol().l() * z;
    sampler.state_mut().a_tilde = a.iter().copied().collect();
    sampler.state_mut().sigma_s = 1.0;

    let mut counts = [0usize; 3];
    for _ in 0..1000 {
        sampler.update_spatial_hypers().unwrap();
        counts[sampler.state().l_s_idx] += 1;
    }
    assert!(
        counts[1] > counts[0] && counts[1] > counts[2],
        "selection counts {counts:?}"
    );
}

#[test]
fn detection_block_prior_draw_for_empty_year() {
    // year 1 has no occupied observations: u_1 comes from N(mu_p, sigma_p^2)
    let ds = bare_dataset(2, 2, &[(0, 0, &[true]), (1, 1, &[false])]);
    let cfg = McmcConfig {
        fix_detection_hypers: true,
        ..cfg_no_spatial(30)
    };
    let mut sampler = Sampler::new(&ds, Priors::default(), cfg).unwrap();
    sampler.state_mut().mu_p = 0.3;
    sampler.state_mut().sigma_p2 = 2.25;
    sampler.state_mut().z = vec![true, false];

    let n = 20_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.update_detection_block().unwrap();
        draws.push(sampler.state().u[1]);
    }
    let (mean, sd) = mean_sd(&draws);
    assert!((mean - 0.3).abs() < 0.05, "mean {mean}");
    assert!((sd - 1.5).abs() < 0.05, "sd {sd}");
}

#[test]
fn detection_block_ignores_unoccupied_rows_exactly() {
    // flipping y on a z = 0 row must not change the detection draw at all
    let make = |y_b: bool| bare_dataset(2, 1, &[(0, 0, &[true]), (1, 0, &[y_b])]);
    let ds_a = make(false);
    let ds_b = make(true);
    let draw = |ds: &occfit_core::data::Dataset| {
        let mut sampler = Sampler::new(ds, Priors::default(), cfg_no_spatial(31)).unwrap();
        sampler.state_mut().z = vec![true, false];
        sampler.reseed(555);
        sampler.update_detection_block().unwrap();
        (sampler.state().u.clone(), sampler.state().beta_p.clone())
    };
    assert_eq!(draw(&ds_a), draw(&ds_b));
}

#[test]
fn detection_block_single_datum_posterior() {
    // one occupied observation, intercept only, omega = 1/2, y = 1, prior
    // N(0, 1): posterior N(1/3, 2/3) under constant detection
    let ds = bare_dataset(1, 1, &[(0, 0, &[true])]);
    let cfg = McmcConfig {
        constant_detection: true,
        ..cfg_no_spatial(32)
    };
    let priors = Priors {
        mu0_p: 0.0,
        sigma0_p: 1.0,
        ..Priors::default()
    };
    let mut sampler = Sampler::new(&ds, priors, cfg).unwrap();
    let n = 20_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.state_mut().omega_p[0] = 0.5;
        // bypass the omega sweep: call only the regression part by fixing
        // omega via a fresh draw round where eta = 0 keeps PG(1, 0)
        sampler.update_detection_block().unwrap();
        // the sweep redraws omega from PG(1, eta); overwrite next loop
        draws.push(sampler.state().u[0]);
    }
    // with omega redrawn from PG(1, eta) each cycle this is the full Gibbs
    // marginal, so compare against the analytic logistic posterior by
    // quadrature instead of the fixed-omega normal
    let f = |x: f64| -> f64 { logistic(x) * (-0.5 * x * x).exp() };
    let (mut num, mut den) = (0.0, 0.0);
    let steps = 200_001;
    for i in 0..steps {
        let x = -8.0 + 16.0 * i as f64 / (steps - 1) as f64;
        let w = f(x);
        num += x * w;
        den += w;
    }
    let posterior_mean = num / den;
    let (mean, sd) = mean_sd(&draws);
    let se = sd / (n as f64).sqrt();
    assert!(
        (mean - posterior_mean).abs() < 6.0 * se + 0.01,
        "mean {mean} vs quadrature {posterior_mean}"
    );
}
