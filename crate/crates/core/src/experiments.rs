//! Experiment harnesses: each run kind expands into a grid of independent
//! simulation points (one derived RNG seed per point), executes them
//! sequentially or on a thread pool with identical results, and reduces the
//! detection streams into the run's summary tables.

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::analysis::{
    self, coincidences, jsi_histogram, reconstruct_density, timing_histogram, visibility,
    DetectionOrigin, DetectionRecord, FringeFit, TimingHistogram, TomographyData,
};
use crate::components::{dark_counts, Analyzer, PauliBasis, SpdcSource};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Error;
use crate::fiber::{self, ClassicalChannel, FiberLink, FiberSection};
use crate::kernel::{EntanglementRegistry, Photon, RngStreams, Timeline, Timestamp};
use crate::quantum::{bell_state, fidelity, DensityMatrix};

/// Runs every grid point of `f`, in index order when sequential or on the
/// rayon pool otherwise; outputs are always collected in index order.
fn run_grid<T, F>(parallel: bool, n: usize, f: F) -> Result<Vec<T>, Error>
where
    T: Send,
    F: Fn(usize) -> Result<T, Error> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// One simulation point: a fixed number of entangled pairs emitted at the
/// source repetition rate, each arm routed through an optional fiber link
/// plus an analyzer, with per-component RNG streams drawn from `seed`.
struct PairRunSpec<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    pairs: u64,
    analyzer_a: Analyzer,
    analyzer_b: Analyzer,
    fiber_a: Option<FiberLink>,
    fiber_b: Option<FiberLink>,
    /// Fixed delay line on each arm, ps (e.g. dispersion-peak compensation).
    extra_delay_a_ps: f64,
    extra_delay_b_ps: f64,
}

struct PairRunResult {
    records_a: Vec<DetectionRecord>,
    records_b: Vec<DetectionRecord>,
    /// (signal, idler) wavelengths of every emitted pair, nm.
    wavelengths: Vec<(f64, f64)>,
}

struct PairWorld {
    source: SpdcSource,
    registry: EntanglementRegistry,
    analyzer_a: Analyzer,
    analyzer_b: Analyzer,
    fiber_a: Option<FiberLink>,
    fiber_b: Option<FiberLink>,
    extra_delay_a_ps: f64,
    extra_delay_b_ps: f64,
    rng_source: ChaCha12Rng,
    rng_fiber_a: ChaCha12Rng,
    rng_fiber_b: ChaCha12Rng,
    rng_analyzer_a: ChaCha12Rng,
    rng_analyzer_b: ChaCha12Rng,
    emitted: u64,
    budget: u64,
    period_ps: f64,
    records_a: Vec<DetectionRecord>,
    records_b: Vec<DetectionRecord>,
    wavelengths: Vec<(f64, f64)>,
    error: Option<Error>,
}

fn process_arm(
    photon: Photon,
    fiber: &Option<FiberLink>,
    extra_delay_ps: f64,
    analyzer: &Analyzer,
    registry: &mut EntanglementRegistry,
    rng_fiber: &mut ChaCha12Rng,
    rng_analyzer: &mut ChaCha12Rng,
    base_detector_id: u32,
    records: &mut Vec<DetectionRecord>,
) -> Result<(), Error> {
    let photon = match fiber {
        Some(link) => match fiber::transmit(photon, link, registry, rng_fiber)? {
            Some(p) => p,
            None => return Ok(()),
        },
        None => photon,
    };
    let mut photon = photon;
    photon.delay_ps += extra_delay_ps;
    if let Some((port, time)) = analyzer.process(photon, registry, rng_analyzer) {
        records.push(DetectionRecord {
            detector_id: base_detector_id + port as u32,
            time,
            origin: DetectionOrigin::Photon,
        });
    }
    Ok(())
}

fn pulse(world: &mut PairWorld, timeline: &mut Timeline<PairWorld>) {
    if world.error.is_some() {
        return;
    }
    let now = timeline.now();
    let (signal, idler) = world
        .source
        .emit_pairs(now, 1, &mut world.registry, &mut world.rng_source)
        .pop()
        .expect("emit_pairs(1) yields one pair");
    world.wavelengths.push((signal.wavelength_nm, idler.wavelength_nm));
    let status = process_arm(
        signal,
        &world.fiber_a,
        world.extra_delay_a_ps,
        &world.analyzer_a,
        &mut world.registry,
        &mut world.rng_fiber_a,
        &mut world.rng_analyzer_a,
        0,
        &mut world.records_a,
    )
    .and_then(|()| {
        process_arm(
            idler,
            &world.fiber_b,
            world.extra_delay_b_ps,
            &world.analyzer_b,
            &mut world.registry,
            &mut world.rng_fiber_b,
            &mut world.rng_analyzer_b,
            2,
            &mut world.records_b,
        )
    });
    if let Err(e) = status {
        world.error = Some(e);
        return;
    }
    world.emitted += 1;
    if world.emitted < world.budget {
        timeline.schedule(now.offset_ps(world.period_ps), pulse);
    }
}

fn run_pairs(spec: PairRunSpec<'_>) -> Result<PairRunResult, Error> {
    let streams = RngStreams::new(spec.seed);
    let period_ps = spec.config.source.pulse_period_ps();
    let mut world = PairWorld {
        source: SpdcSource::new(spec.config.source.clone()),
        registry: EntanglementRegistry::new(),
        analyzer_a: spec.analyzer_a,
        analyzer_b: spec.analyzer_b,
        fiber_a: spec.fiber_a,
        fiber_b: spec.fiber_b,
        extra_delay_a_ps: spec.extra_delay_a_ps,
        extra_delay_b_ps: spec.extra_delay_b_ps,
        rng_source: streams.stream("source"),
        rng_fiber_a: streams.stream("fiber_a"),
        rng_fiber_b: streams.stream("fiber_b"),
        rng_analyzer_a: streams.stream("analyzer_a"),
        rng_analyzer_b: streams.stream("analyzer_b"),
        emitted: 0,
        budget: spec.pairs,
        period_ps,
        records_a: Vec::new(),
        records_b: Vec::new(),
        wavelengths: Vec::new(),
        error: None,
    };

    let mut timeline = Timeline::new();
    timeline.schedule(Timestamp(0), pulse);
    let end = Timestamp(((spec.pairs as f64 + 1.0) * period_ps).ceil() as u64);
    timeline.run_until(&mut world, end);
    if let Some(e) = world.error {
        return Err(e);
    }

    // independently generated detector noise over the emission window
    let mut rng_dark = streams.stream("dark");
    for (records, analyzer, base) in [
        (&mut world.records_a, &world.analyzer_a, 0u32),
        (&mut world.records_b, &world.analyzer_b, 2u32),
    ] {
        for port in 0..2u32 {
            for time in dark_counts(&analyzer.config.detector, Timestamp(0), end, &mut rng_dark) {
                records.push(DetectionRecord {
                    detector_id: base + port,
                    time,
                    origin: DetectionOrigin::Dark,
                });
            }
        }
    }

    // Raman noise from a co-propagating classical channel falls on arm A's
    // analyzer (the arm that shares the fiber).
    if let (Some(link), Some(channel)) = (&world.fiber_a, &spec.config.classical_channel) {
        let table = spec.config.raman_table()?;
        let mut rng_raman = streams.stream("raman");
        let photons = fiber::noise_photons(
            link,
            channel,
            spec.config.source.signal_mean_nm,
            &table,
            Timestamp(0),
            end,
            &mut world.registry,
            &mut rng_raman,
        )?;
        for photon in photons {
            if let Some((port, time)) =
                world
                    .analyzer_a
                    .process(photon, &mut world.registry, &mut rng_raman)
            {
                world.records_a.push(DetectionRecord {
                    detector_id: port as u32,
                    time,
                    origin: DetectionOrigin::Raman,
                });
            }
        }
    }

    world.records_a.sort_by_key(|r| (r.time, r.detector_id));
    world.records_b.sort_by_key(|r| (r.time, r.detector_id));
    Ok(PairRunResult {
        records_a: world.records_a,
        records_b: world.records_b,
        wavelengths: world.wavelengths,
    })
}

/// Coincidence counts by output-port pair [aa', bb'] -> [00, 01, 10, 11].
fn port_pair_counts(result: &PairRunResult, window_ps: u64) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for (a, b) in coincidences(&result.records_a, &result.records_b, window_ps) {
        let pa = (a.detector_id & 1) as usize;
        let pb = (b.detector_id & 1) as usize;
        counts[pa * 2 + pb] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy)]
pub struct FringeRow {
    pub fixed_deg: f64,
    pub scan_deg: f64,
    pub counts: [u64; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct FringeCurve {
    pub fixed_deg: f64,
    pub fit: FringeFit,
}

#[derive(Debug, Clone)]
pub struct FringeOutput {
    pub rows: Vec<FringeRow>,
    pub curves: Vec<FringeCurve>,
}

fn scan_angles_deg(start: f64, end: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| start + (end - start) * k as f64 / (points - 1).max(1) as f64)
        .collect()
}

fn run_fringe(config: &ExperimentConfig) -> Result<FringeOutput, Error> {
    let p = &config.fringe;
    let scan = scan_angles_deg(p.scan_start_deg, p.scan_end_deg, p.scan_points);
    let n = p.fixed_angles_deg.len() * p.scan_points;
    let streams = RngStreams::new(config.seed);
    let rows = run_grid(config.parallel, n, |idx| {
        let fixed_deg = p.fixed_angles_deg[idx / p.scan_points];
        let scan_deg = scan[idx % p.scan_points];
        let mut analyzer_a = Analyzer::new(config.analyzer_a.clone());
        analyzer_a.set_polarizer_angle(fixed_deg.to_radians());
        let mut analyzer_b = Analyzer::new(config.analyzer_b.clone());
        analyzer_b.set_polarizer_angle(scan_deg.to_radians());
        let result = run_pairs(PairRunSpec {
            config,
            seed: streams.derive_seed(idx as u64),
            pairs: p.pairs_per_angle,
            analyzer_a,
            analyzer_b,
            fiber_a: config.fiber_a.clone(),
            fiber_b: config.fiber_b.clone(),
            extra_delay_a_ps: 0.0,
            extra_delay_b_ps: 0.0,
        })?;
        Ok(FringeRow {
            fixed_deg,
            scan_deg,
            counts: port_pair_counts(&result, config.coincidence_window_ps),
        })
    })?;

    let mut curves = Vec::new();
    for (fi, &fixed_deg) in p.fixed_angles_deg.iter().enumerate() {
        let samples: Vec<(f64, f64)> = rows[fi * p.scan_points..(fi + 1) * p.scan_points]
            .iter()
            .map(|row| (row.scan_deg.to_radians(), row.counts[0] as f64))
            .collect();
        curves.push(FringeCurve {
            fixed_deg,
            fit: visibility(&samples)?,
        });
    }
    Ok(FringeOutput { rows, curves })
}

#[derive(Debug, Clone)]
pub struct TomographyOutput {
    pub data: TomographyData,
    pub rho: DensityMatrix,
    pub min_eigenvalue: f64,
    pub nonphysical: bool,
    /// Overlap with the configured source Bell state.
    pub fidelity: f64,
    pub fidelity_clamped: bool,
}

fn run_tomography(config: &ExperimentConfig) -> Result<TomographyOutput, Error> {
    const SETTINGS: [PauliBasis; 3] = analysis::PAULI_ORDER;
    let streams = RngStreams::new(config.seed);
    let settings: Vec<(PauliBasis, PauliBasis)> = SETTINGS
        .iter()
        .flat_map(|&a| SETTINGS.iter().map(move |&b| (a, b)))
        .collect();
    let counts = run_grid(config.parallel, settings.len(), |idx| {
        let (basis_a, basis_b) = settings[idx];
        let mut analyzer_a = Analyzer::new(config.analyzer_a.clone());
        analyzer_a.set_basis(basis_a)?;
        let mut analyzer_b = Analyzer::new(config.analyzer_b.clone());
        analyzer_b.set_basis(basis_b)?;
        let result = run_pairs(PairRunSpec {
            config,
            seed: streams.derive_seed(idx as u64),
            pairs: config.tomography.pairs_per_setting,
            analyzer_a,
            analyzer_b,
            fiber_a: config.fiber_a.clone(),
            fiber_b: config.fiber_b.clone(),
            extra_delay_a_ps: 0.0,
            extra_delay_b_ps: 0.0,
        })?;
        let c = port_pair_counts(&result, config.coincidence_window_ps);
        Ok([[c[0] as f64, c[1] as f64], [c[2] as f64, c[3] as f64]])
    })?;

    let mut data = TomographyData::new();
    for (idx, &(a, b)) in settings.iter().enumerate() {
        data.set(a, b, counts[idx]);
    }
    let reconstruction = reconstruct_density(&data)?;
    let target = bell_state(config.source.bell_kind);
    let (f, clamped) = fidelity(&reconstruction.rho, &target);
    Ok(TomographyOutput {
        data,
        rho: reconstruction.rho,
        min_eigenvalue: reconstruction.min_eigenvalue,
        nonphysical: reconstruction.nonphysical,
        fidelity: f,
        fidelity_clamped: clamped,
    })
}

#[derive(Debug, Clone)]
pub struct CdTimingRow {
    pub length_km: f64,
    pub pairs_matched: u64,
    pub mean_dt_ps: f64,
    pub std_dt_ps: f64,
    /// |D_eff| * L * sigma_lambda prediction for the timing spread.
    pub predicted_std_ps: f64,
    pub peak_ps: f64,
    pub fwhm_ps: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CdTimingOutput {
    pub rows: Vec<CdTimingRow>,
    pub histograms: Vec<TimingHistogram>,
}

/// Rebuilds the configured arm-A link with each section's length scaled so
/// the link totals `length_km`.
fn scale_link(link: &FiberLink, length_km: f64) -> FiberLink {
    let total = link.total_length_m();
    let mut scaled = link.clone();
    for section in &mut scaled.sections {
        section.length_m *= length_km * 1000.0 / total;
    }
    scaled
}

fn run_cd_timing(config: &ExperimentConfig) -> Result<CdTimingOutput, Error> {
    let p = &config.cd_timing;
    let base_link = config
        .fiber_a
        .as_ref()
        .ok_or_else(|| Error::Config("cd_timing requires fiber_a".into()))?;
    let streams = RngStreams::new(config.seed);
    let per_length = run_grid(config.parallel, p.lengths_km.len(), |idx| {
        let length_km = p.lengths_km[idx];
        let link = scale_link(base_link, length_km);
        let base_delay = link.base_delay_ps()?;
        let mut analyzer_a = Analyzer::new(config.analyzer_a.clone());
        analyzer_a.set_basis(PauliBasis::Z)?;
        let mut analyzer_b = Analyzer::new(config.analyzer_b.clone());
        analyzer_b.set_basis(PauliBasis::Z)?;
        let d_eff = fiber::effective_dispersion(&link);
        let result = run_pairs(PairRunSpec {
            config,
            seed: streams.derive_seed(idx as u64),
            pairs: p.pairs_per_length,
            analyzer_a,
            analyzer_b,
            fiber_a: Some(link),
            fiber_b: config.fiber_b.clone(),
            extra_delay_a_ps: 0.0,
            extra_delay_b_ps: if p.compensate_base_delay { base_delay } else { 0.0 },
        })?;
        let deltas: Vec<f64> =
            coincidences(&result.records_a, &result.records_b, config.coincidence_window_ps)
                .iter()
                .map(|(a, b)| a.time.as_ps() as f64 - b.time.as_ps() as f64)
                .collect();
        if deltas.is_empty() {
            return Err(Error::Analysis(format!(
                "cd_timing: no coincidences at {length_km} km; widen coincidence_window_ps"
            )));
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let hist = timing_histogram(&deltas, config.bin_width_ps)?;
        Ok((
            CdTimingRow {
                length_km,
                pairs_matched: deltas.len() as u64,
                mean_dt_ps: mean,
                std_dt_ps: var.sqrt(),
                predicted_std_ps: (d_eff * length_km * config.source.signal_bandwidth_nm).abs(),
                peak_ps: hist.peak_position_ps,
                fwhm_ps: hist.fwhm_ps,
            },
            hist,
        ))
    })?;
    let (rows, histograms) = per_length.into_iter().unzip();
    Ok(CdTimingOutput { rows, histograms })
}

#[derive(Debug, Clone, Copy)]
pub struct DgdRow {
    pub wavelength_nm: f64,
    pub probe_step_nm: f64,
    pub dgd_ps: f64,
    /// Same estimate at half the probe step; convergence diagnostic.
    pub dgd_half_step_ps: f64,
}

#[derive(Debug, Clone)]
pub struct DgdOutput {
    pub rows: Vec<DgdRow>,
}

fn run_dgd_report(config: &ExperimentConfig) -> Result<DgdOutput, Error> {
    let link = config
        .fiber_a
        .as_ref()
        .ok_or_else(|| Error::Config("dgd_report requires fiber_a".into()))?;
    let p = &config.dgd_report;
    let rows = p
        .wavelengths_nm
        .iter()
        .map(|&wavelength_nm| DgdRow {
            wavelength_nm,
            probe_step_nm: p.probe_step_nm,
            dgd_ps: fiber::dgd(link, wavelength_nm, p.probe_step_nm) * 1e12,
            dgd_half_step_ps: fiber::dgd(link, wavelength_nm, p.probe_step_nm / 2.0) * 1e12,
        })
        .collect();
    Ok(DgdOutput { rows })
}

#[derive(Debug, Clone, Copy)]
pub struct RamanRow {
    pub classical_wavelength_nm: f64,
    pub length_km: f64,
    /// Classical launch power, photons/s.
    pub launch_power: f64,
    /// Analytic scattered-photon rate, photons/s.
    pub model_rate: f64,
    /// Monte Carlo arrival count over the window divided by the window.
    pub simulated_rate: f64,
    pub simulated_counts: u64,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct RamanOutput {
    pub rows: Vec<RamanRow>,
}

fn run_raman_sweep(config: &ExperimentConfig) -> Result<RamanOutput, Error> {
    let p = &config.raman_sweep;
    let base_link = config
        .fiber_a
        .as_ref()
        .ok_or_else(|| Error::Config("raman_sweep requires fiber_a".into()))?;
    let channel = config
        .classical_channel
        .as_ref()
        .ok_or_else(|| Error::Config("raman_sweep requires classical_channel".into()))?;
    let table = config.raman_table()?;
    let grid: Vec<(f64, f64, f64)> = p
        .classical_wavelengths_nm
        .iter()
        .flat_map(|&wl| {
            p.lengths_km.iter().flat_map(move |&l| {
                p.launch_powers.iter().map(move |&power| (wl, l, power))
            })
        })
        .collect();
    let streams = RngStreams::new(config.seed);
    let rows = run_grid(config.parallel, grid.len(), |idx| {
        let (classical_wavelength_nm, length_km, launch_power) = grid[idx];
        let link = scale_link(base_link, length_km);
        let channel = ClassicalChannel {
            wavelength_nm: classical_wavelength_nm,
            launch_power,
            ..channel.clone()
        };
        let quantum_nm = config.source.signal_mean_nm;
        let model_rate = fiber::total_raman_rate(&link, &channel, quantum_nm, &table)?;
        let duration_s = if model_rate > 0.0 {
            p.duration_s.min(p.target_counts as f64 / model_rate)
        } else {
            p.duration_s
        };
        let mut rng = RngStreams::new(streams.derive_seed(idx as u64)).stream("raman");
        let t1 = Timestamp((duration_s * 1e12).round() as u64);
        let counts =
            fiber::sample_noise_arrivals(model_rate, Timestamp(0), t1, &mut rng).len() as u64;
        Ok(RamanRow {
            classical_wavelength_nm,
            length_km,
            launch_power,
            model_rate,
            simulated_rate: counts as f64 / duration_s,
            simulated_counts: counts,
            duration_s,
        })
    })?;
    Ok(RamanOutput { rows })
}

#[derive(Debug, Clone)]
pub struct JsiOutput {
    pub histogram: analysis::JsiHistogram,
    pub correlation: f64,
    pub pairs: u64,
}

fn run_jsi(config: &ExperimentConfig) -> Result<JsiOutput, Error> {
    let result = run_pairs(PairRunSpec {
        config,
        seed: RngStreams::new(config.seed).derive_seed(0),
        pairs: config.jsi.pairs,
        analyzer_a: Analyzer::new(config.analyzer_a.clone()),
        analyzer_b: Analyzer::new(config.analyzer_b.clone()),
        fiber_a: config.fiber_a.clone(),
        fiber_b: config.fiber_b.clone(),
        extra_delay_a_ps: 0.0,
        extra_delay_b_ps: 0.0,
    })?;
    Ok(JsiOutput {
        histogram: jsi_histogram(&result.wavelengths, config.jsi.bins)?,
        correlation: analysis::correlation(&result.wavelengths),
        pairs: config.jsi.pairs,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TwistRow {
    pub twist_rate_rad_per_m: f64,
    /// Polarization rotation the twist induces over the link, rad.
    pub expected_rotation_rad: f64,
    pub fitted_phase_rad: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone)]
pub struct TwistOutput {
    pub rows: Vec<TwistRow>,
    pub scan_rows: Vec<FringeRow>,
}

/// Fixed analyzer-A polarizer for twist scans, chosen so the fitted fringe
/// phase stays well inside atan2's principal branch over rotations in
/// [0, ~0.6 rad] (a fixed angle of 0 would put the phase at the +-pi/2 wrap).
const TWIST_FIXED_ANGLE_RAD: f64 = std::f64::consts::FRAC_PI_4;

fn run_twist_scan(config: &ExperimentConfig) -> Result<TwistOutput, Error> {
    let p = &config.twist_scan;
    let scan = scan_angles_deg(0.0, 180.0 * (p.scan_points as f64 - 1.0) / p.scan_points as f64, p.scan_points);
    let n = p.twist_rates_rad_per_m.len() * p.scan_points;
    let streams = RngStreams::new(config.seed);
    let scan_rows = run_grid(config.parallel, n, |idx| {
        let rate = p.twist_rates_rad_per_m[idx / p.scan_points];
        let scan_deg = scan[idx % p.scan_points];
        let link = FiberLink::single(
            FiberSection {
                length_m: p.fiber_length_m,
                twist_rate: rate,
                attenuation_db_per_km: 0.0,
                ..FiberSection::default()
            },
            config.source.signal_mean_nm,
        );
        let mut analyzer_a = Analyzer::new(config.analyzer_a.clone());
        analyzer_a.set_polarizer_angle(TWIST_FIXED_ANGLE_RAD);
        let mut analyzer_b = Analyzer::new(config.analyzer_b.clone());
        analyzer_b.set_polarizer_angle(scan_deg.to_radians());
        // delay line on the reference arm matching the fiber's group delay,
        // so pairs stay inside the coincidence window
        let balance_ps = link.base_delay_ps()?;
        let result = run_pairs(PairRunSpec {
            config,
            seed: streams.derive_seed(idx as u64),
            pairs: p.pairs_per_angle,
            analyzer_a,
            analyzer_b,
            fiber_a: None,
            fiber_b: Some(link),
            extra_delay_a_ps: balance_ps,
            extra_delay_b_ps: 0.0,
        })?;
        Ok(FringeRow {
            fixed_deg: rate, // reused column: twist rate, rad/m
            scan_deg,
            counts: port_pair_counts(&result, config.coincidence_window_ps),
        })
    })?;

    let mut rows = Vec::new();
    for (ri, &rate) in p.twist_rates_rad_per_m.iter().enumerate() {
        let samples: Vec<(f64, f64)> = scan_rows[ri * p.scan_points..(ri + 1) * p.scan_points]
            .iter()
            .map(|row| (row.scan_deg.to_radians(), row.counts[0] as f64))
            .collect();
        let fit = visibility(&samples)?;
        rows.push(TwistRow {
            twist_rate_rad_per_m: rate,
            expected_rotation_rad: rate * p.fiber_length_m / 2.0,
            fitted_phase_rad: fit.phase_rad,
            visibility: fit.visibility,
        });
    }
    Ok(TwistOutput { rows, scan_rows })
}

#[derive(Debug, Clone)]
pub enum RunOutput {
    Fringe(FringeOutput),
    Tomography(TomographyOutput),
    CdTiming(CdTimingOutput),
    DgdReport(DgdOutput),
    RamanSweep(RamanOutput),
    Jsi(JsiOutput),
    TwistScan(TwistOutput),
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    config.validate()?;
    Ok(match config.kind {
        ExperimentKind::Fringe => RunOutput::Fringe(run_fringe(config)?),
        ExperimentKind::Tomography => RunOutput::Tomography(run_tomography(config)?),
        ExperimentKind::CdTiming => RunOutput::CdTiming(run_cd_timing(config)?),
        ExperimentKind::DgdReport => RunOutput::DgdReport(run_dgd_report(config)?),
        ExperimentKind::RamanSweep => RunOutput::RamanSweep(run_raman_sweep(config)?),
        ExperimentKind::Jsi => RunOutput::Jsi(run_jsi(config)?),
        ExperimentKind::TwistScan => RunOutput::TwistScan(run_twist_scan(config)?),
    })
}

// ---------------------------------------------------------------------------
// output serialization

/// Fixed-precision scientific notation so output bytes are stable across
/// platforms and run modes.
fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn fringe_rows_csv(rows: &[FringeRow], fixed_column: &str) -> String {
    let mut out = format!("{fixed_column},scan_deg,c00,c01,c10,c11\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt(r.fixed_deg),
            fmt(r.scan_deg),
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3]
        );
    }
    out
}

/// Writes the run's CSV tables plus a `run_meta.toml` echo of the resolved
/// configuration into `out_dir`.
pub fn write_outputs(
    config: &ExperimentConfig,
    output: &RunOutput,
    out_dir: &Path,
) -> Result<(), Error> {
    let meta = toml::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))?;
    write_file(out_dir, "run_meta.toml", &meta)?;
    match output {
        RunOutput::Fringe(o) => {
            write_file(out_dir, "fringe_counts.csv", &fringe_rows_csv(&o.rows, "fixed_deg"))?;
            let mut fits = String::from("fixed_deg,visibility,phase_rad,offset,amplitude\n");
            for c in &o.curves {
                let _ = writeln!(
                    fits,
                    "{},{},{},{},{}",
                    fmt(c.fixed_deg),
                    fmt(c.fit.visibility),
                    fmt(c.fit.phase_rad),
                    fmt(c.fit.offset),
                    fmt(c.fit.amplitude)
                );
            }
            write_file(out_dir, "fringe_fits.csv", &fits)?;
        }
        RunOutput::Tomography(o) => {
            let mut rho = String::from("row,col,re,im\n");
            for i in 0..4 {
                for j in 0..4 {
                    let _ = writeln!(rho, "{i},{j},{},{}", fmt(o.rho.m[(i, j)].re), fmt(o.rho.m[(i, j)].im));
                }
            }
            write_file(out_dir, "density_matrix.csv", &rho)?;
            let mut counts = String::from("basis_a,basis_b,n00,n01,n10,n11\n");
            for a in analysis::PAULI_ORDER {
                for b in analysis::PAULI_ORDER {
                    let c = o.data.get(a, b);
                    let _ = writeln!(
                        counts,
                        "{a:?},{b:?},{},{},{},{}",
                        fmt(c[0][0]),
                        fmt(c[0][1]),
                        fmt(c[1][0]),
                        fmt(c[1][1])
                    );
                }
            }
            write_file(out_dir, "tomography_counts.csv", &counts)?;
            let summary = format!(
                "fidelity,min_eigenvalue,nonphysical\n{},{},{}\n",
                fmt(o.fidelity),
                fmt(o.min_eigenvalue),
                o.nonphysical
            );
            write_file(out_dir, "tomography_summary.csv", &summary)?;
        }
        RunOutput::CdTiming(o) => {
            let mut rows = String::from(
                "length_km,pairs_matched,mean_dt_ps,std_dt_ps,predicted_std_ps,peak_ps,fwhm_ps\n",
            );
            for r in &o.rows {
                let _ = writeln!(
                    rows,
                    "{},{},{},{},{},{},{}",
                    fmt(r.length_km),
                    r.pairs_matched,
                    fmt(r.mean_dt_ps),
                    fmt(r.std_dt_ps),
                    fmt(r.predicted_std_ps),
                    fmt(r.peak_ps),
                    r.fwhm_ps.map(fmt).unwrap_or_default()
                );
            }
            write_file(out_dir, "cd_timing.csv", &rows)?;
            let mut hist = String::from("length_km,bin_center_ps,count\n");
            for (r, h) in o.rows.iter().zip(&o.histograms) {
                for (i, count) in h.counts.iter().enumerate() {
                    let _ = writeln!(hist, "{},{},{count}", fmt(r.length_km), fmt(h.bin_center(i)));
                }
            }
            write_file(out_dir, "cd_histograms.csv", &hist)?;
        }
        RunOutput::DgdReport(o) => {
            let mut rows = String::from("wavelength_nm,probe_step_nm,dgd_ps,dgd_half_step_ps\n");
            for r in &o.rows {
                let _ = writeln!(
                    rows,
                    "{},{},{},{}",
                    fmt(r.wavelength_nm),
                    fmt(r.probe_step_nm),
                    fmt(r.dgd_ps),
                    fmt(r.dgd_half_step_ps)
                );
            }
            write_file(out_dir, "dgd_report.csv", &rows)?;
        }
        RunOutput::RamanSweep(o) => {
            let mut rows = String::from(
                "classical_wavelength_nm,length_km,launch_power,model_rate,simulated_rate,simulated_counts,duration_s\n",
            );
            for r in &o.rows {
                let _ = writeln!(
                    rows,
                    "{},{},{},{},{},{},{}",
                    fmt(r.classical_wavelength_nm),
                    fmt(r.length_km),
                    fmt(r.launch_power),
                    fmt(r.model_rate),
                    fmt(r.simulated_rate),
                    r.simulated_counts,
                    fmt(r.duration_s)
                );
            }
            write_file(out_dir, "raman_sweep.csv", &rows)?;
        }
        RunOutput::Jsi(o) => {
            let h = &o.histogram;
            let mut rows = String::from("signal_bin_nm,idler_bin_nm,count\n");
            for i in 0..h.bins {
                for j in 0..h.bins {
                    let _ = writeln!(
                        rows,
                        "{},{},{}",
                        fmt(h.signal_min_nm + (i as f64 + 0.5) * h.bin_nm),
                        fmt(h.idler_min_nm + (j as f64 + 0.5) * h.bin_nm),
                        h.counts[i][j]
                    );
                }
            }
            write_file(out_dir, "jsi.csv", &rows)?;
            write_file(
                out_dir,
                "jsi_summary.csv",
                &format!("pairs,correlation\n{},{}\n", o.pairs, fmt(o.correlation)),
            )?;
        }
        RunOutput::TwistScan(o) => {
            write_file(
                out_dir,
                "twist_counts.csv",
                &fringe_rows_csv(&o.scan_rows, "twist_rate_rad_per_m"),
            )?;
            let mut rows = String::from(
                "twist_rate_rad_per_m,expected_rotation_rad,fitted_phase_rad,visibility\n",
            );
            for r in &o.rows {
                let _ = writeln!(
                    rows,
                    "{},{},{},{}",
                    fmt(r.twist_rate_rad_per_m),
                    fmt(r.expected_rotation_rad),
                    fmt(r.fitted_phase_rad),
                    fmt(r.visibility)
                );
            }
            write_file(out_dir, "twist_scan.csv", &rows)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn base_config(kind: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!("kind = \"{kind}\"\nseed = 11\n")).unwrap()
    }

    #[test]
    fn fringe_run_produces_high_visibility_curves() {
        let mut config = base_config("fringe");
        config.fringe.fixed_angles_deg = vec![0.0, 45.0];
        config.fringe.scan_points = 8;
        config.fringe.pairs_per_angle = 4_000;
        let out = match run(&config).unwrap() {
            RunOutput::Fringe(o) => o,
            _ => unreachable!(),
        };
        assert_eq!(out.rows.len(), 16);
        assert_eq!(out.curves.len(), 2);
        for curve in &out.curves {
            assert!(curve.fit.visibility > 0.95, "V = {}", curve.fit.visibility);
        }
    }

    #[test]
    fn sequential_and_parallel_fringe_runs_agree() {
        let mut config = base_config("fringe");
        config.fringe.fixed_angles_deg = vec![30.0];
        config.fringe.scan_points = 5;
        config.fringe.pairs_per_angle = 500;
        config.parallel = false;
        let seq = match run(&config).unwrap() {
            RunOutput::Fringe(o) => o,
            _ => unreachable!(),
        };
        config.parallel = true;
        let par = match run(&config).unwrap() {
            RunOutput::Fringe(o) => o,
            _ => unreachable!(),
        };
        for (a, b) in seq.rows.iter().zip(&par.rows) {
            assert_eq!(a.counts, b.counts);
        }
    }

    #[test]
    fn tomography_run_reconstructs_the_source_state() {
        let mut config = base_config("tomography");
        config.tomography.pairs_per_setting = 20_000;
        let out = match run(&config).unwrap() {
            RunOutput::Tomography(o) => o,
            _ => unreachable!(),
        };
        assert!(out.fidelity > 0.99, "F = {}", out.fidelity);
        assert!(!out.nonphysical);
    }

    #[test]
    fn cd_timing_spread_grows_with_length() {
        let mut config = ExperimentConfig::from_toml_str(
            "kind = \"cd_timing\"\nseed = 11\n[[fiber_a.sections]]\nlength_m = 1000.0\n",
        )
        .unwrap();
        config.coincidence_window_ps = 20_000;
        config.cd_timing.lengths_km = vec![1.0, 25.0];
        config.cd_timing.pairs_per_length = 2_000;
        let out = match run(&config).unwrap() {
            RunOutput::CdTiming(o) => o,
            _ => unreachable!(),
        };
        assert!(out.rows[1].std_dt_ps > 5.0 * out.rows[0].std_dt_ps);
        for row in &out.rows {
            let rel = (row.std_dt_ps - row.predicted_std_ps).abs() / row.predicted_std_ps;
            assert!(rel < 0.1, "rel = {rel} at {} km", row.length_km);
        }
    }

    #[test]
    fn twist_scan_phase_tracks_the_rotation() {
        let mut config = base_config("twist_scan");
        config.twist_scan.twist_rates_rad_per_m = vec![0.0, 0.25, 0.5];
        config.twist_scan.pairs_per_angle = 4_000;
        config.twist_scan.scan_points = 8;
        let out = match run(&config).unwrap() {
            RunOutput::TwistScan(o) => o,
            _ => unreachable!(),
        };
        let phases: Vec<f64> = out.rows.iter().map(|r| r.fitted_phase_rad).collect();
        assert!(phases[1] > phases[0] && phases[2] > phases[1], "{phases:?}");
        let measured = phases[2] - phases[0];
        let expected = out.rows[2].expected_rotation_rad - out.rows[0].expected_rotation_rad;
        assert!((measured - expected).abs() < 0.05, "{measured} vs {expected}");
        for r in &out.rows {
            assert!(r.visibility > 0.95);
        }
    }

    #[test]
    fn raman_sweep_matches_the_analytic_rate() {
        let mut config = ExperimentConfig::from_toml_str(concat!(
            "kind = \"raman_sweep\"\nseed = 11\n",
            "[[fiber_a.sections]]\nlength_m = 1000.0\n",
            "[classical_channel]\nwavelength_nm = 1550.0\nlaunch_power = 1e14\n",
            "attenuation_per_m = 4.6e-5\n",
        ))
        .unwrap();
        config.raman_sweep.classical_wavelengths_nm = vec![1310.0];
        config.raman_sweep.lengths_km = vec![10.0];
        config.raman_sweep.launch_powers = vec![1e14];
        config.raman_sweep.duration_s = 0.05;
        let out = match run(&config).unwrap() {
            RunOutput::RamanSweep(o) => o,
            _ => unreachable!(),
        };
        let row = &out.rows[0];
        let expected = row.model_rate * row.duration_s;
        let sigma = expected.sqrt();
        assert!(
            (row.simulated_counts as f64 - expected).abs() < 5.0 * sigma,
            "counts {} vs expected {expected}",
            row.simulated_counts
        );
    }

    #[test]
    fn jsi_run_reports_anticorrelation() {
        let mut config = base_config("jsi");
        config.jsi.pairs = 20_000;
        config.jsi.bins = 15;
        let out = match run(&config).unwrap() {
            RunOutput::Jsi(o) => o,
            _ => unreachable!(),
        };
        assert!(out.correlation < -0.9, "corr = {}", out.correlation);
    }

    #[test]
    fn outputs_are_byte_identical_across_runs() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut config = base_config("fringe");
        config.fringe.fixed_angles_deg = vec![0.0];
        config.fringe.scan_points = 4;
        config.fringe.pairs_per_angle = 300;
        for dir in [&dir1, &dir2] {
            let out = run(&config).unwrap();
            write_outputs(&config, &out, dir.path()).unwrap();
        }
        for name in ["run_meta.toml", "fringe_counts.csv", "fringe_fits.csv"] {
            let a = std::fs::read(dir1.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
}
