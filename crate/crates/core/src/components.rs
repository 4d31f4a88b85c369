//! Optical hardware models: SPDC Bell-state source, wave plates, polarizing
//! beam splitter, single-photon detector, and the composite analyzer node.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::kernel::{
    EntanglementRegistry, Photon, PhotonKind, Polarization, Timestamp,
};
use crate::quantum::{
    bell_state, c, BellKind, JonesMatrix, JonesVector, MeasurementBasis, Slot,
};

/// Pair-number statistics of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    Poisson,
    Thermal,
}

/// SPDC Bell-state source parameters. All fields are runtime-mutable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpdcConfig {
    pub bell_kind: BellKind,
    /// Mean pair number per pulse.
    pub mean_pair_number: f64,
    pub statistics: PairStatistics,
    pub pump_wavelength_nm: f64,
    pub signal_mean_nm: f64,
    /// Std-dev of the truncated Gaussian signal-wavelength distribution.
    pub signal_bandwidth_nm: f64,
    pub repetition_rate_hz: f64,
}

impl Default for SpdcConfig {
    fn default() -> Self {
        Self {
            bell_kind: BellKind::PsiMinus,
            mean_pair_number: 0.01,
            statistics: PairStatistics::Poisson,
            pump_wavelength_nm: 775.0,
            signal_mean_nm: 1550.0,
            signal_bandwidth_nm: 0.5,
            repetition_rate_hz: 80e6,
        }
    }
}

impl SpdcConfig {
    pub fn validate(&self, errors: &mut Vec<String>) {
        if self.mean_pair_number < 0.0 {
            errors.push("source: mean_pair_number must be >= 0".into());
        }
        if self.signal_mean_nm <= self.pump_wavelength_nm {
            errors.push("source: signal_mean_nm must exceed pump_wavelength_nm".into());
        }
        if self.signal_bandwidth_nm <= 0.0 {
            errors.push("source: signal_bandwidth_nm must be > 0".into());
        }
        if self.repetition_rate_hz <= 0.0 {
            errors.push("source: repetition_rate_hz must be > 0".into());
        }
        // the +-5 sigma truncation must keep 1/lambda_p - 1/lambda_s positive
        if self.signal_mean_nm - 5.0 * self.signal_bandwidth_nm <= self.pump_wavelength_nm {
            errors.push("source: signal band (mean - 5 sigma) must stay above the pump wavelength".into());
        }
    }

    pub fn pulse_period_ps(&self) -> f64 {
        1e12 / self.repetition_rate_hz
    }
}

/// Samples the number of pairs in one pulse from the configured statistics.
pub fn sample_pair_count<R: Rng>(mu: f64, statistics: PairStatistics, rng: &mut R) -> u32 {
    if mu <= 0.0 {
        return 0;
    }
    match statistics {
        PairStatistics::Poisson => Poisson::new(mu).unwrap().sample(rng) as u32,
        PairStatistics::Thermal => {
            // Bose-Einstein pmf P(n) = mu^n / (1+mu)^(n+1): geometric with
            // success probability 1/(1+mu), sampled by inversion.
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / (mu / (1.0 + mu)).ln()).floor() as u32
        }
    }
}

/// Samples a signal wavelength from the truncated (+-5 sigma) Gaussian and
/// derives the idler wavelength from energy conservation
/// 1/lambda_p = 1/lambda_s + 1/lambda_i.
pub fn sample_wavelengths<R: Rng>(
    pump_nm: f64,
    signal_mean_nm: f64,
    sigma_nm: f64,
    rng: &mut R,
) -> (f64, f64) {
    let dist = Normal::new(signal_mean_nm, sigma_nm).unwrap();
    let lambda_s = loop {
        let v = dist.sample(rng);
        if (v - signal_mean_nm).abs() <= 5.0 * sigma_nm && v > pump_nm {
            break v;
        }
    };
    let lambda_i = 1.0 / (1.0 / pump_nm - 1.0 / lambda_s);
    (lambda_s, lambda_i)
}

/// Pulsed SPDC source emitting polarization-entangled photon pairs.
#[derive(Debug, Clone)]
pub struct SpdcSource {
    pub config: SpdcConfig,
}

impl SpdcSource {
    pub fn new(config: SpdcConfig) -> Self {
        Self { config }
    }

    /// Emits one pulse at `time`: samples the pair count, registers each
    /// pair's Bell state, and returns the (signal, idler) photons.
    pub fn emit_pulse<R: Rng>(
        &self,
        time: Timestamp,
        registry: &mut EntanglementRegistry,
        rng: &mut R,
    ) -> Vec<(Photon, Photon)> {
        let n = sample_pair_count(self.config.mean_pair_number, self.config.statistics, rng);
        self.emit_pairs(time, n, registry, rng)
    }

    /// Emits exactly `n` pairs at `time` (used by pair-budget experiments).
    pub fn emit_pairs<R: Rng>(
        &self,
        time: Timestamp,
        n: u32,
        registry: &mut EntanglementRegistry,
        rng: &mut R,
    ) -> Vec<(Photon, Photon)> {
        let mut pairs = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let pair = registry.register_pair(bell_state(self.config.bell_kind));
            let (lambda_s, lambda_i) = sample_wavelengths(
                self.config.pump_wavelength_nm,
                self.config.signal_mean_nm,
                self.config.signal_bandwidth_nm,
                rng,
            );
            let signal = Photon {
                id: registry.new_photon_id(),
                wavelength_nm: lambda_s,
                emission_time: time,
                delay_ps: 0.0,
                polarization: Polarization::Entangled { pair, slot: Slot::A },
                kind: PhotonKind::Signal,
            };
            let idler = Photon {
                id: registry.new_photon_id(),
                wavelength_nm: lambda_i,
                emission_time: time,
                delay_ps: 0.0,
                polarization: Polarization::Entangled { pair, slot: Slot::B },
                kind: PhotonKind::Idler,
            };
            pairs.push((signal, idler));
        }
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavePlateKind {
    Hwp,
    Qwp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePlateConfig {
    pub kind: WavePlateKind,
    pub angle_rad: f64,
    /// Insertion-loss transmission probability.
    #[serde(default = "one")]
    pub fidelity: f64,
}

fn one() -> f64 {
    1.0
}

/// Jones matrix of an ideal wave plate with fast axis at `theta`.
pub fn waveplate_matrix(kind: WavePlateKind, theta: f64) -> JonesMatrix {
    match kind {
        WavePlateKind::Hwp => {
            let (s2, c2) = (2.0 * theta).sin_cos();
            JonesMatrix::new(c(c2, 0.0), c(s2, 0.0), c(s2, 0.0), c(-c2, 0.0))
        }
        WavePlateKind::Qwp => {
            let (s, co) = theta.sin_cos();
            let (s2, c2) = (s * s, co * co);
            let cross = c(1.0, -1.0) * c(co * s, 0.0);
            JonesMatrix::new(c(c2, s2), cross, cross, c(s2, c2))
        }
    }
}

/// Passes a photon through a wave plate: transmitted (and transformed) with
/// probability `fidelity`, otherwise lost. Loss of an entangled photon
/// collapses its partner in the registry.
pub fn waveplate_transmit<R: Rng>(
    mut photon: Photon,
    config: &WavePlateConfig,
    registry: &mut EntanglementRegistry,
    rng: &mut R,
) -> Option<Photon> {
    if config.fidelity < 1.0 && rng.gen::<f64>() >= config.fidelity {
        if let Polarization::Entangled { pair, slot } = photon.polarization {
            registry.mark_lost(pair, slot, rng);
        }
        return None;
    }
    let j = waveplate_matrix(config.kind, config.angle_rad);
    match &mut photon.polarization {
        Polarization::Pure(v) => *v = j.apply(v),
        Polarization::Entangled { pair, slot } => registry.apply_local(*pair, *slot, &j),
    }
    Some(photon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbsConfig {
    /// 0 = rectilinear {H, V}, 1 = diagonal {+, -}.
    #[serde(default)]
    pub basis_index: u8,
    /// Transmission probability (insertion loss).
    #[serde(default = "one")]
    pub fidelity: f64,
    /// Probability of flipping the measurement outcome (wrong output port).
    #[serde(default)]
    pub bitflip_prob: f64,
}

impl Default for PbsConfig {
    fn default() -> Self {
        Self {
            basis_index: 0,
            fidelity: 1.0,
            bitflip_prob: 0.0,
        }
    }
}

impl PbsConfig {
    pub fn basis(&self) -> MeasurementBasis {
        match self.basis_index {
            0 => MeasurementBasis::z(),
            _ => MeasurementBasis::x(),
        }
    }

    pub fn validate(&self, errors: &mut Vec<String>) {
        if self.basis_index > 1 {
            errors.push("pbs: basis_index must be 0 or 1".into());
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            errors.push("pbs: fidelity must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.bitflip_prob) {
            errors.push("pbs: bitflip_prob must lie in [0, 1]".into());
        }
    }
}

/// Projectively routes a photon to one of two output ports.
///
/// The photon survives with probability `fidelity`; the ideal measurement
/// outcome is flipped with probability `bitflip_prob` before routing.
pub fn pbs_route<R: Rng>(
    photon: Photon,
    config: &PbsConfig,
    registry: &mut EntanglementRegistry,
    rng: &mut R,
) -> Option<(u8, Photon)> {
    if config.fidelity < 1.0 && rng.gen::<f64>() >= config.fidelity {
        if let Polarization::Entangled { pair, slot } = photon.polarization {
            registry.mark_lost(pair, slot, rng);
        }
        return None;
    }
    let basis = config.basis();
    let outcome = match photon.polarization {
        Polarization::Pure(v) => {
            let p0 = basis.b0.inner(&v).norm_sqr() / v.norm_sq();
            u8::from(rng.gen::<f64>() >= p0)
        }
        Polarization::Entangled { pair, slot } => registry.measure(pair, slot, &basis, rng),
    };
    let port = if config.bitflip_prob > 0.0 && rng.gen::<f64>() < config.bitflip_prob {
        outcome ^ 1
    } else {
        outcome
    };
    let mut routed = photon;
    routed.polarization = Polarization::Pure(if outcome == 0 { basis.b0 } else { basis.b1 });
    Some((port, routed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_rate_hz: f64,
    #[serde(default)]
    pub jitter_sigma_ps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self, errors: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.efficiency) {
            errors.push("detector: efficiency must lie in [0, 1]".into());
        }
        if self.dark_count_rate_hz < 0.0 {
            errors.push("detector: dark_count_rate_hz must be >= 0".into());
        }
        if self.jitter_sigma_ps < 0.0 {
            errors.push("detector: jitter_sigma_ps must be >= 0".into());
        }
    }
}

/// Registers a real photon arriving at continuous time `arrival_ps`.
/// Returns the (tick-quantized) record time, or None if the click is missed.
pub fn detect<R: Rng>(arrival_ps: f64, config: &DetectorConfig, rng: &mut R) -> Option<Timestamp> {
    if config.efficiency < 1.0 && rng.gen::<f64>() >= config.efficiency {
        return None;
    }
    let jitter = if config.jitter_sigma_ps > 0.0 {
        Normal::new(0.0, config.jitter_sigma_ps).unwrap().sample(rng)
    } else {
        0.0
    };
    Some(Timestamp::ZERO.offset_ps(arrival_ps + jitter))
}

/// Dark-count times over `[t0, t1)` as an independent Poisson process.
pub fn dark_counts<R: Rng>(
    config: &DetectorConfig,
    t0: Timestamp,
    t1: Timestamp,
    rng: &mut R,
) -> Vec<Timestamp> {
    exponential_arrivals(config.dark_count_rate_hz, t0, t1, rng)
}

/// Homogeneous Poisson process over `[t0, t1)` via exponential inter-arrival
/// sampling. `rate` is in events per second; times are integer picoseconds.
pub fn exponential_arrivals<R: Rng>(
    rate_per_sec: f64,
    t0: Timestamp,
    t1: Timestamp,
    rng: &mut R,
) -> Vec<Timestamp> {
    let mut out = Vec::new();
    if rate_per_sec <= 0.0 {
        return out;
    }
    let mean_gap_ps = 1e12 / rate_per_sec;
    let mut t = t0.as_ps() as f64;
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        t += -u.ln() * mean_gap_ps;
        if t >= t1.as_ps() as f64 {
            return out;
        }
        out.push(Timestamp(t.round() as u64));
    }
}

/// Analyzer architectures per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzerMode {
    HwpOnly,
    HwpQwp,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PauliBasis {
    Z,
    X,
    Y,
}

/// Measurement node: QWP and HWP (depending on mode) in front of a PBS with
/// one detector per output port.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub mode: AnalyzerMode,
    #[serde(default)]
    pub hwp_angle_rad: f64,
    #[serde(default)]
    pub qwp_angle_rad: f64,
    #[serde(default = "one")]
    pub waveplate_fidelity: f64,
    #[serde(default)]
    pub pbs: PbsConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            mode: AnalyzerMode::HwpQwp,
            hwp_angle_rad: 0.0,
            qwp_angle_rad: 0.0,
            waveplate_fidelity: 1.0,
            pbs: PbsConfig::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self, errors: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.waveplate_fidelity) {
            errors.push("analyzer: waveplate_fidelity must lie in [0, 1]".into());
        }
        self.pbs.validate(errors);
        self.detector.validate(errors);
    }
}

/// Analyzer node instance; angles are runtime-mutable between events.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub config: AnalyzerConfig,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self { config }
    }

    /// Configures the wave plates so the chosen Pauli basis eigenstates map
    /// onto {H, V} before the PBS. Convention:
    /// Z -> (QWP 0, HWP 0); X -> (QWP 45, HWP 22.5); Y -> (QWP 45, HWP 0),
    /// all in degrees. Requires HwpQwp mode (HwpOnly cannot reach Y).
    pub fn set_basis(&mut self, basis: PauliBasis) -> Result<(), crate::error::Error> {
        if self.config.mode != AnalyzerMode::HwpQwp {
            return Err(crate::error::Error::Config(
                "set_basis requires an analyzer in hwp_qwp mode".into(),
            ));
        }
        let deg = std::f64::consts::PI / 180.0;
        let (qwp, hwp) = match basis {
            PauliBasis::Z => (0.0, 0.0),
            PauliBasis::X => (45.0 * deg, 22.5 * deg),
            PauliBasis::Y => (45.0 * deg, 0.0),
        };
        self.config.qwp_angle_rad = qwp;
        self.config.hwp_angle_rad = hwp;
        Ok(())
    }

    /// Sets the HWP for a polarizer-style linear measurement at `angle`
    /// (physical polarizer angle; the HWP sits at half that angle). Drops to
    /// HwpOnly: a QWP left in the path at 0 deg would make the measurement
    /// elliptical instead of linear.
    pub fn set_polarizer_angle(&mut self, angle_rad: f64) {
        self.config.mode = AnalyzerMode::HwpOnly;
        self.config.hwp_angle_rad = angle_rad / 2.0;
        self.config.qwp_angle_rad = 0.0;
    }

    /// Runs one photon through the analyzer. Returns the output port and the
    /// detection timestamp if every element transmits and the detector fires.
    pub fn process<R: Rng>(
        &self,
        photon: Photon,
        registry: &mut EntanglementRegistry,
        rng: &mut R,
    ) -> Option<(u8, Timestamp)> {
        let mut photon = photon;
        if self.config.mode != AnalyzerMode::HwpOnly {
            photon = waveplate_transmit(
                photon,
                &WavePlateConfig {
                    kind: WavePlateKind::Qwp,
                    angle_rad: self.config.qwp_angle_rad,
                    fidelity: self.config.waveplate_fidelity,
                },
                registry,
                rng,
            )?;
        }
        photon = waveplate_transmit(
            photon,
            &WavePlateConfig {
                kind: WavePlateKind::Hwp,
                angle_rad: self.config.hwp_angle_rad,
                fidelity: self.config.waveplate_fidelity,
            },
            registry,
            rng,
        )?;
        let (port, routed) = pbs_route(photon, &self.config.pbs, registry, rng)?;
        let arrival = routed.emission_time.as_ps() as f64 + routed.delay_ps;
        let time = detect(arrival, &self.config.detector, rng)?;
        Some((port, time))
    }

    /// Single-photon states measured by this analyzer's two ports, i.e. the
    /// effective measurement basis (HWP * QWP)^dagger {|H>, |V>} (the QWP
    /// factor is skipped in HwpOnly mode).
    pub fn effective_basis(&self) -> MeasurementBasis {
        let hwp = waveplate_matrix(WavePlateKind::Hwp, self.config.hwp_angle_rad);
        let w = if self.config.mode == AnalyzerMode::HwpOnly {
            hwp
        } else {
            hwp.compose(&waveplate_matrix(WavePlateKind::Qwp, self.config.qwp_angle_rad))
        };
        let wd = w.dagger();
        MeasurementBasis {
            b0: wd.apply(&JonesVector::h()).normalize(),
            b1: wd.apply(&JonesVector::v()).normalize(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStreams;
    use crate::quantum::{c, UNITARITY_TOL};
    use approx::assert_relative_eq;

    fn rng(name: &str) -> rand_chacha::ChaCha12Rng {
        RngStreams::new(1234).stream(name)
    }

    fn pure_photon(v: JonesVector) -> Photon {
        Photon {
            id: crate::kernel::PhotonId(0),
            wavelength_nm: 1550.0,
            emission_time: Timestamp(0),
            delay_ps: 0.0,
            polarization: Polarization::Pure(v),
            kind: PhotonKind::Signal,
        }
    }

    #[test]
    fn pair_count_zero_mu() {
        let mut r = rng("mu0");
        for _ in 0..100 {
            assert_eq!(sample_pair_count(0.0, PairStatistics::Poisson, &mut r), 0);
            assert_eq!(sample_pair_count(0.0, PairStatistics::Thermal, &mut r), 0);
        }
    }

    #[test]
    fn thermal_zero_probability_matches_pmf() {
        // P_th(0) = 1/(1+mu) = 0.5 at mu = 1
        let mut r = rng("thermal");
        let n = 1_000_000;
        let zeros = (0..n)
            .filter(|_| sample_pair_count(1.0, PairStatistics::Thermal, &mut r) == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * sigma, "freq = {freq}");
    }

    #[test]
    fn poisson_zero_probability_matches_pmf() {
        // P_Pois(0) = exp(-0.1) ~ 0.9048
        let mut r = rng("poisson");
        let n = 1_000_000;
        let zeros = (0..n)
            .filter(|_| sample_pair_count(0.1, PairStatistics::Poisson, &mut r) == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        let p = (-0.1f64).exp();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * sigma, "freq = {freq}");
    }

    #[test]
    fn idler_wavelength_from_energy_conservation() {
        let mut r = rng("wl");
        // degenerate point: 1/405 = 2/810
        let (_, li) = sample_wavelengths(405.0, 810.0, 1e-12, &mut r);
        assert_relative_eq!(li, 810.0, epsilon = 1e-6);

        // direct inversion at lambda_s = 800
        let li = 1.0 / (1.0 / 405.0 - 1.0 / 800.0);
        assert_relative_eq!(li, 820.2531645569621, epsilon = 1e-9);
    }

    #[test]
    fn signal_wavelength_distribution_moments() {
        let mut r = rng("wl_hist");
        let (mean0, sigma0) = (810.0, 2.0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let (ls, li) = sample_wavelengths(405.0, mean0, sigma0, &mut r);
            assert!((ls - mean0).abs() <= 5.0 * sigma0);
            // energy conservation holds exactly for every sample
            assert_relative_eq!(1.0 / ls + 1.0 / li, 1.0 / 405.0, epsilon = 1e-12);
            sum += ls;
            sum_sq += ls * ls;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!((mean - mean0).abs() < 0.05);
        assert!((std - sigma0).abs() < 0.05);
    }

    #[test]
    fn emit_pulse_statistics() {
        let config = SpdcConfig {
            bell_kind: BellKind::PsiMinus,
            mean_pair_number: 0.1,
            statistics: PairStatistics::Poisson,
            pump_wavelength_nm: 775.0,
            signal_mean_nm: 1550.0,
            signal_bandwidth_nm: 1.0,
            repetition_rate_hz: 80e6,
        };
        let source = SpdcSource::new(config);
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("emit");

        // 80 MHz for 1 us -> 80 pulses; expected pairs ~ 8
        let period = source.config.pulse_period_ps();
        assert_relative_eq!(period, 12_500.0);
        let mut total = 0usize;
        let reps = 200; // 200 x 80 pulses for a tight bound
        for _ in 0..reps {
            for k in 0..80u64 {
                total += source
                    .emit_pulse(Timestamp(k * 12_500), &mut registry, &mut r)
                    .len();
            }
        }
        let mean_per_window = total as f64 / reps as f64;
        let sigma = (8.0 / reps as f64).sqrt();
        assert!((mean_per_window - 8.0).abs() < 4.0 * sigma);
        assert_eq!(registry.len(), total);
    }

    #[test]
    fn zero_mu_source_never_emits() {
        let config = SpdcConfig {
            bell_kind: BellKind::PhiPlus,
            mean_pair_number: 0.0,
            statistics: PairStatistics::Thermal,
            pump_wavelength_nm: 775.0,
            signal_mean_nm: 1550.0,
            signal_bandwidth_nm: 1.0,
            repetition_rate_hz: 80e6,
        };
        let source = SpdcSource::new(config);
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("mu0src");
        for k in 0..1000 {
            assert!(source.emit_pulse(Timestamp(k), &mut registry, &mut r).is_empty());
        }
    }

    #[test]
    fn waveplate_matrices_match_closed_forms() {
        let hwp0 = waveplate_matrix(WavePlateKind::Hwp, 0.0);
        assert!((hwp0.m - nalgebra::Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))).norm() < 1e-15);

        let qwp0 = waveplate_matrix(WavePlateKind::Qwp, 0.0);
        assert!((qwp0.m - nalgebra::Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0))).norm() < 1e-15);

        let s = 1.0 / 2f64.sqrt();
        let hwp225 = waveplate_matrix(WavePlateKind::Hwp, 22.5f64.to_radians());
        assert!((hwp225.m - nalgebra::Matrix2::new(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn waveplate_builders_are_unitary() {
        let mut r = rng("unitary");
        for _ in 0..500 {
            let theta: f64 = r.gen_range(-10.0..10.0);
            for kind in [WavePlateKind::Hwp, WavePlateKind::Qwp] {
                assert!(waveplate_matrix(kind, theta).is_unitary(UNITARITY_TOL));
            }
        }
    }

    #[test]
    fn hwp45_swaps_h_and_v() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("swap");
        let config = WavePlateConfig {
            kind: WavePlateKind::Hwp,
            angle_rad: 45f64.to_radians(),
            fidelity: 1.0,
        };
        let out = waveplate_transmit(pure_photon(JonesVector::h()), &config, &mut registry, &mut r)
            .unwrap();
        match out.polarization {
            Polarization::Pure(v) => assert!(v.same_up_to_phase(&JonesVector::v(), 1e-12)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_fidelity_waveplate_loses_everything() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("lossy");
        let config = WavePlateConfig {
            kind: WavePlateKind::Hwp,
            angle_rad: 0.0,
            fidelity: 0.0,
        };
        for _ in 0..100 {
            assert!(waveplate_transmit(pure_photon(JonesVector::h()), &config, &mut registry, &mut r)
                .is_none());
        }
    }

    #[test]
    fn hwp_on_one_arm_shifts_singlet_coincidence_pattern() {
        // Closed form: P(outcome 00) = sin^2(2*theta) / 2 after HWP(theta)
        // on arm B of Psi-, both arms Z-measured.
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("fringe_shift");
        let theta = 15f64.to_radians();
        let source = SpdcSource::new(SpdcConfig {
            bell_kind: BellKind::PsiMinus,
            mean_pair_number: 1.0,
            statistics: PairStatistics::Poisson,
            pump_wavelength_nm: 775.0,
            signal_mean_nm: 1550.0,
            signal_bandwidth_nm: 0.5,
            repetition_rate_hz: 80e6,
        });
        let wp = WavePlateConfig {
            kind: WavePlateKind::Hwp,
            angle_rad: theta,
            fidelity: 1.0,
        };
        let pbs = PbsConfig::default();
        let n = 100_000;
        let mut hh = 0u32;
        for _ in 0..n {
            let (sig, idl) = source.emit_pairs(Timestamp(0), 1, &mut registry, &mut r)[0];
            let idl = waveplate_transmit(idl, &wp, &mut registry, &mut r).unwrap();
            let (pa, _) = pbs_route(sig, &pbs, &mut registry, &mut r).unwrap();
            let (pb, _) = pbs_route(idl, &pbs, &mut registry, &mut r).unwrap();
            if pa == 0 && pb == 0 {
                hh += 1;
            }
        }
        let expected = (2.0 * theta).sin().powi(2) / 2.0;
        let freq = hh as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * sigma, "freq = {freq}, expected = {expected}");
    }

    #[test]
    fn pbs_routes_eigenstates_deterministically() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("pbs");
        let pbs = PbsConfig::default();
        for _ in 0..100 {
            let (port, _) = pbs_route(pure_photon(JonesVector::h()), &pbs, &mut registry, &mut r)
                .unwrap();
            assert_eq!(port, 0);
        }
        // |+> in the rectilinear basis: 50/50
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| {
                pbs_route(pure_photon(JonesVector::plus()), &pbs, &mut registry, &mut r)
                    .unwrap()
                    .0
                    == 0
            })
            .count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn pbs_bitflip_routes_to_wrong_port() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("flip");
        let pbs = PbsConfig {
            basis_index: 0,
            fidelity: 1.0,
            bitflip_prob: 1.0,
        };
        for _ in 0..100 {
            let (port, _) = pbs_route(pure_photon(JonesVector::h()), &pbs, &mut registry, &mut r)
                .unwrap();
            assert_eq!(port, 1);
        }
    }

    #[test]
    fn detector_perfect_and_dead() {
        let mut r = rng("det");
        let perfect = DetectorConfig::default();
        assert_eq!(detect(123.0, &perfect, &mut r), Some(Timestamp(123)));
        let dead = DetectorConfig {
            efficiency: 0.0,
            ..DetectorConfig::default()
        };
        for _ in 0..100 {
            assert_eq!(detect(123.0, &dead, &mut r), None);
        }
    }

    #[test]
    fn dark_count_rate_matches_poisson_statistics() {
        let mut r = rng("dark");
        let config = DetectorConfig {
            efficiency: 1.0,
            dark_count_rate_hz: 1000.0,
            jitter_sigma_ps: 0.0,
        };
        // 1 s window at 1 kHz -> 1000 +- 4 * sqrt(1000)
        let counts = dark_counts(&config, Timestamp(0), Timestamp(1_000_000_000_000), &mut r);
        let n = counts.len() as f64;
        assert!((n - 1000.0).abs() < 4.0 * 1000f64.sqrt(), "n = {n}");
    }

    #[test]
    fn analyzer_pauli_eigenstates_are_deterministic() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("analyzer");
        let mut analyzer = Analyzer::new(AnalyzerConfig::default());

        let s = 1.0 / 2f64.sqrt();
        let cases: [(PauliBasis, JonesVector, JonesVector); 3] = [
            (PauliBasis::Z, JonesVector::h(), JonesVector::v()),
            (PauliBasis::X, JonesVector::plus(), JonesVector::minus()),
            (
                PauliBasis::Y,
                JonesVector::new(c(s, 0.0), c(0.0, s)),
                JonesVector::new(c(s, 0.0), c(0.0, -s)),
            ),
        ];
        for (basis, plus_eig, minus_eig) in cases {
            analyzer.set_basis(basis).unwrap();
            for _ in 0..50 {
                let (port, _) = analyzer
                    .process(pure_photon(plus_eig), &mut registry, &mut r)
                    .unwrap();
                assert_eq!(port, 0, "{basis:?} +1 eigenstate must exit port 0");
                let (port, _) = analyzer
                    .process(pure_photon(minus_eig), &mut registry, &mut r)
                    .unwrap();
                assert_eq!(port, 1, "{basis:?} -1 eigenstate must exit port 1");
            }
        }
    }

    #[test]
    fn set_basis_requires_hwp_qwp_mode() {
        let mut analyzer = Analyzer::new(AnalyzerConfig {
            mode: AnalyzerMode::HwpOnly,
            ..AnalyzerConfig::default()
        });
        assert!(analyzer.set_basis(PauliBasis::Y).is_err());
    }

    #[test]
    fn singlet_anticorrelation_through_analyzers() {
        let mut registry = EntanglementRegistry::new();
        let mut r = rng("anticorr");
        let source = SpdcSource::new(SpdcConfig {
            bell_kind: BellKind::PsiMinus,
            mean_pair_number: 1.0,
            statistics: PairStatistics::Poisson,
            pump_wavelength_nm: 775.0,
            signal_mean_nm: 1550.0,
            signal_bandwidth_nm: 0.5,
            repetition_rate_hz: 80e6,
        });
        for basis in [PauliBasis::Z, PauliBasis::X, PauliBasis::Y] {
            let mut analyzer = Analyzer::new(AnalyzerConfig::default());
            analyzer.set_basis(basis).unwrap();
            for _ in 0..500 {
                let (sig, idl) = source.emit_pairs(Timestamp(0), 1, &mut registry, &mut r)[0];
                let (pa, _) = analyzer.process(sig, &mut registry, &mut r).unwrap();
                let (pb, _) = analyzer.process(idl, &mut registry, &mut r).unwrap();
                assert_ne!(pa, pb, "singlet must anti-correlate in basis {basis:?}");
            }
        }
    }
}
