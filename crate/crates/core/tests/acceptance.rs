//! End-to-end acceptance checks. Each test covers one headline requirement
//! and prints a single PASS/FAIL line before asserting, so a test run reads
//! as a checklist.

use polarsim_core::analysis::{reconstruct_density, TomographyData};
use polarsim_core::config::ExperimentConfig;
use polarsim_core::experiments::{run, write_outputs, RunOutput};
use polarsim_core::fiber::{self, FiberLink, FiberSection};
use polarsim_core::kernel::EntanglementRegistry;
use polarsim_core::quantum::{bell_state, BellKind, DensityMatrix, MeasurementBasis, TwoPhotonState};
use rand::SeedableRng;

fn report(name: &str, ok: bool, detail: &str) {
    println!("acceptance: {name} ... {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

#[test]
fn fringe_visibility() {
    let cfg = config(
        r#"
kind = "fringe"
seed = 101

[fringe]
fixed_angles_deg = [-45.0, 0.0, 45.0, 90.0]
scan_start_deg = 0.0
scan_end_deg = 168.75
scan_points = 16
pairs_per_angle = 100000
"#,
    );
    let out = match run(&cfg).unwrap() {
        RunOutput::Fringe(o) => o,
        _ => unreachable!(),
    };
    let min_v = out
        .curves
        .iter()
        .map(|c| c.fit.visibility)
        .fold(f64::INFINITY, f64::min);
    report(
        "fringe visibility >= 0.98 at all four analyzer settings",
        out.curves.len() == 4 && min_v >= 0.98,
        &format!("min V = {min_v:.5}"),
    );
}

#[test]
fn tomography_of_the_singlet() {
    let cfg = config(
        r#"
kind = "tomography"
seed = 102

[tomography]
pairs_per_setting = 100000
"#,
    );
    let out = match run(&cfg).unwrap() {
        RunOutput::Tomography(o) => o,
        _ => unreachable!(),
    };
    let off_diag = out.rho.m[(1, 2)].re;
    let ok = (-0.51..=-0.47).contains(&off_diag) && out.fidelity >= 0.98;
    report(
        "singlet tomography: rho[HV,VH] in [-0.51,-0.47] and F >= 0.98",
        ok,
        &format!("rho[HV,VH] = {off_diag:.4}, F = {:.5}", out.fidelity),
    );

    // infinite statistics: exact Born probabilities must invert to F = 1
    let psi = bell_state(BellKind::PsiMinus);
    let data = TomographyData::from_exact_state(&psi);
    let rec = reconstruct_density(&data).unwrap();
    let (f, _) = polarsim_core::quantum::fidelity(&rec.rho, &psi);
    report(
        "exact-probability tomography reaches F = 1 within 1e-10",
        (f - 1.0).abs() <= 1e-10,
        &format!("|F - 1| = {:.2e}", (f - 1.0).abs()),
    );
}

#[test]
fn dgd_against_the_analytic_value() {
    let delta_n = 1e-7;
    let length_m = 1000.0;
    let expected_ps = delta_n * length_m / fiber::SPEED_OF_LIGHT * 1e12;

    let cfg = config(
        r#"
kind = "dgd_report"
seed = 103

[[fiber_a.sections]]
length_m = 1000.0
birefringence_model = { model = "constant_delta_n", delta_n = 1e-7 }

[dgd_report]
wavelengths_nm = [1550.0]
probe_step_nm = 0.1
"#,
    );
    let out = match run(&cfg).unwrap() {
        RunOutput::DgdReport(o) => o,
        _ => unreachable!(),
    };
    let row = &out.rows[0];
    let rel = (row.dgd_ps - expected_ps).abs() / expected_ps;
    report(
        "DGD of a 1 km delta-n = 1e-7 span matches delta-n*L/c (333.6 fs) within 0.5%",
        rel <= 5e-3,
        &format!("dgd = {:.6} ps, analytic = {expected_ps:.6} ps, rel = {rel:.2e}", row.dgd_ps),
    );

    let step_change = (row.dgd_half_step_ps - row.dgd_ps).abs() / row.dgd_ps;
    report(
        "halving the DGD probe step changes the estimate by < 0.1%",
        step_change < 1e-3,
        &format!("rel change = {step_change:.2e}"),
    );

    // wavelength-independent delta-beta carries no group-delay splitting
    let flat = FiberLink::single(
        FiberSection {
            length_m: 1000.0,
            delta_beta_ellip: 0.8,
            twist_rate: 0.2,
            ..FiberSection::default()
        },
        1550.0,
    );
    let dgd_flat = fiber::dgd(&flat, 1550.0, fiber::DEFAULT_DGD_STEP_NM) * 1e12;
    report(
        "constant delta-beta model yields zero DGD",
        dgd_flat.abs() < 1e-6,
        &format!("dgd = {dgd_flat:.2e} ps"),
    );
}

#[test]
fn chromatic_dispersion_timing() {
    // closed-form dispersion parameter at 1550 nm for S0, lambda0 defaults
    let s0 = 0.092;
    let lambda0: f64 = 1310.0;
    let lambda: f64 = 1550.0;
    let expected_d = s0 / 4.0 * (lambda - lambda0.powi(4) / lambda.powi(3));
    let got_d = fiber::dispersion_param(lambda, lambda0, s0);
    let rel_d = (got_d - expected_d).abs() / expected_d.abs();
    report(
        "D(1550 nm) matches the Sellmeier-slope closed form within 1e-9 relative",
        rel_d <= 1e-9,
        &format!("D = {got_d:.9} ps/(nm km), rel = {rel_d:.2e}"),
    );

    let cfg = config(
        r#"
kind = "cd_timing"
seed = 104
coincidence_window_ps = 20000
bin_width_ps = 20.0

[[fiber_a.sections]]
length_m = 1000.0
attenuation_db_per_km = 0.0

[cd_timing]
lengths_km = [1.0, 10.0, 25.0, 50.0]
pairs_per_length = 50000
compensate_base_delay = true
"#,
    );
    let out = match run(&cfg).unwrap() {
        RunOutput::CdTiming(o) => o,
        _ => unreachable!(),
    };
    let fwhms: Vec<f64> = out.rows.iter().map(|r| r.fwhm_ps.unwrap()).collect();
    let monotone = fwhms.windows(2).all(|w| w[1] > w[0]);
    report(
        "coincidence-peak FWHM grows monotonically over 1/10/25/50 km",
        monotone,
        &format!("fwhm = {fwhms:?} ps"),
    );

    let mut worst = 0.0f64;
    for row in &out.rows {
        let rel = (row.std_dt_ps - row.predicted_std_ps).abs() / row.predicted_std_ps;
        worst = worst.max(rel);
    }
    report(
        "arrival-time spread matches |D_eff| * L * sigma_lambda within 10% at every length",
        worst <= 0.10,
        &format!("worst rel deviation = {worst:.3}"),
    );
}

#[test]
fn raman_noise_sweep() {
    let cfg = config(
        r#"
kind = "raman_sweep"
seed = 105

[source]
signal_mean_nm = 1550.0

[[fiber_a.sections]]
length_m = 1000.0

[classical_channel]
wavelength_nm = 1310.0
launch_power = 1e14
attenuation_per_m = 8.06e-5

[raman_sweep]
classical_wavelengths_nm = [1270.0, 1310.0, 1330.0, 1490.0]
lengths_km = [1.0, 5.0, 10.0, 25.0]
launch_powers = [1e13, 1e14, 1e15]
duration_s = 1.0
target_counts = 200000
"#,
    );
    let out = match run(&cfg).unwrap() {
        RunOutput::RamanSweep(o) => o,
        _ => unreachable!(),
    };

    // Monte Carlo agreement at every point with enough expected counts
    let mut checked = 0;
    let mut worst_sigma = 0.0f64;
    for row in &out.rows {
        let expected = row.model_rate * row.duration_s;
        if expected < 1e4 {
            continue;
        }
        checked += 1;
        let pull = (row.simulated_counts as f64 - expected).abs() / expected.sqrt();
        worst_sigma = worst_sigma.max(pull);
    }
    report(
        "simulated Raman counts agree with the analytic rate within 4 sigma",
        checked > 0 && worst_sigma <= 4.0,
        &format!("{checked} points checked, worst pull = {worst_sigma:.2} sigma"),
    );

    // log-log slope of simulated rate vs launch power at fixed (lambda, L)
    let mut slopes = Vec::new();
    for &wl in &[1270.0, 1310.0, 1330.0, 1490.0] {
        let pts: Vec<(f64, f64)> = out
            .rows
            .iter()
            .filter(|r| r.classical_wavelength_nm == wl && r.length_km == 25.0)
            .map(|r| (r.launch_power.ln(), r.simulated_rate.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        slopes.push(sxy / sxx);
    }
    let worst_slope = slopes
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0f64, f64::max);
    report(
        "Raman rate vs power has log-log slope 1.00 +- 0.01 at every wavelength",
        worst_slope <= 0.01,
        &format!("slopes = {slopes:?}"),
    );

    // long-wavelength penalty: 1490 nm vs 1270 nm at equal power and length
    let rate_at = |wl: f64| {
        out.rows
            .iter()
            .find(|r| {
                r.classical_wavelength_nm == wl && r.length_km == 25.0 && r.launch_power == 1e14
            })
            .unwrap()
            .model_rate
    };
    let ratio = rate_at(1490.0) / rate_at(1270.0);
    report(
        "1490 nm / 1270 nm noise ratio is 64 within 10%",
        (ratio - 64.0).abs() / 64.0 <= 0.10,
        &format!("ratio = {ratio:.2}"),
    );
}

#[test]
fn twist_scan_fringe_shift() {
    let rates: Vec<f64> = (0..10).map(|i| i as f64 * 0.5 / 9.0).collect();
    let cfg = config(&format!(
        r#"
kind = "twist_scan"
seed = 106

[twist_scan]
twist_rates_rad_per_m = {rates:?}
fiber_length_m = 2.0
scan_points = 16
pairs_per_angle = 20000
"#
    ));
    let out = match run(&cfg).unwrap() {
        RunOutput::TwistScan(o) => o,
        _ => unreachable!(),
    };
    let phases: Vec<f64> = out.rows.iter().map(|r| r.fitted_phase_rad).collect();
    let monotone = phases.windows(2).all(|w| w[1] > w[0]);
    report(
        "fringe phase shifts monotonically over 10 twist rates in [0, 0.5] rad/m",
        out.rows.len() == 10 && monotone,
        &format!("phases = {phases:?}"),
    );
    let min_v = out
        .rows
        .iter()
        .map(|r| r.visibility)
        .fold(f64::INFINITY, f64::min);
    report(
        "visibility stays >= 0.98 at every twist rate",
        min_v >= 0.98,
        &format!("min V = {min_v:.5}"),
    );
}

#[test]
fn singlet_anticorrelation_in_random_bases() {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(107);
    let mut violations = 0u64;
    for _ in 0..50 {
        let basis = MeasurementBasis::random(&mut rng);
        for _ in 0..1000 {
            let mut registry = EntanglementRegistry::new();
            let pair = registry.register_pair(bell_state(BellKind::PsiMinus));
            let a = registry.measure(pair, polarsim_core::Slot::A, &basis, &mut rng);
            let b = registry.measure(pair, polarsim_core::Slot::B, &basis, &mut rng);
            if a == b {
                violations += 1;
            }
        }
    }
    report(
        "singlet gives opposite outcomes in 50 random shared bases x 1000 pairs",
        violations == 0,
        &format!("{violations} violations"),
    );
}

#[test]
fn tomography_linear_inversion_oracle() {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(108);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let psi = TwoPhotonState::random_pure(&mut rng);
        let data = TomographyData::from_exact_state(&psi);
        let rec = reconstruct_density(&data).unwrap();
        let target = DensityMatrix::from_pure(&psi);
        worst = worst.max(rec.rho.frobenius_distance(&target));
    }
    report(
        "linear inversion recovers 100 random pure states to 1e-10 Frobenius",
        worst <= 1e-10,
        &format!("worst distance = {worst:.2e}"),
    );
}

#[test]
fn deterministic_outputs() {
    let text = r#"
kind = "fringe"
seed = 109

[fringe]
fixed_angles_deg = [0.0, 45.0]
scan_start_deg = 0.0
scan_end_deg = 157.5
scan_points = 8
pairs_per_angle = 2000
"#;
    let cfg = config(text);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();

    // run 0 and 1: identical config; run 2: same seed but sequential execution
    for (i, dir) in dirs.iter().enumerate() {
        let mut cfg = cfg.clone();
        if i == 2 {
            cfg.parallel = false;
        }
        let out = run(&cfg).unwrap();
        write_outputs(&cfg, &out, dir.path()).unwrap();
    }

    let read = |i: usize, name: &str| std::fs::read(dirs[i].path().join(name)).unwrap();
    let mut ok = true;
    let mut detail = String::from("all files identical");
    for name in ["fringe_counts.csv", "fringe_fits.csv", "run_meta.toml"] {
        if read(0, name) != read(1, name) {
            ok = false;
            detail = format!("{name} differs between identical runs");
        }
    }
    for name in ["fringe_counts.csv", "fringe_fits.csv"] {
        if read(0, name) != read(2, name) {
            ok = false;
            detail = format!("{name} differs between parallel and sequential execution");
        }
    }
    report("repeat and parallel-vs-sequential runs are byte-identical", ok, &detail);
}
