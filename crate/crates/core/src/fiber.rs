//! Multi-section fiber channel: Sellmeier refractive indices, chromatic
//! dispersion, per-section birefringence Jones matrices, differential group
//! delay via eigenvalue perturbation, attenuation, and spontaneous Raman
//! noise from co-propagating classical traffic.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::components::exponential_arrivals;
use crate::error::Error;
use crate::kernel::{
    EntanglementRegistry, Photon, PhotonKind, Polarization, Timestamp,
};
use crate::quantum::{c, JonesMatrix, JonesVector};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a user-facing dB/km attenuation into natural 1/m units.
pub fn db_per_km_to_per_m(db_per_km: f64) -> f64 {
    db_per_km * std::f64::consts::LN_10 / 10.0 / 1000.0
}

/// Three-resonance Sellmeier coefficients with optional linear temperature
/// sensitivities about `reference_temp_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierCoefficients {
    pub b: [f64; 3],
    /// Resonance wavelengths in meters.
    pub c_m: [f64; 3],
    #[serde(default)]
    pub db_dt: [f64; 3],
    /// Resonance drift in m/K.
    #[serde(default)]
    pub dc_dt: [f64; 3],
    #[serde(default = "default_reference_temp")]
    pub reference_temp_k: f64,
}

fn default_reference_temp() -> f64 {
    293.15
}

impl Default for SellmeierCoefficients {
    /// Fused silica.
    fn default() -> Self {
        Self {
            b: [0.696_166_3, 0.407_942_6, 0.897_479_4],
            c_m: [0.068_404_3e-6, 0.116_241_4e-6, 9.896_161e-6],
            db_dt: [0.0; 3],
            dc_dt: [0.0; 3],
            reference_temp_k: default_reference_temp(),
        }
    }
}

/// Refractive index n(lambda, T) from the Sellmeier resonance sum.
pub fn sellmeier_index(
    wavelength_nm: f64,
    temperature_k: f64,
    coeffs: &SellmeierCoefficients,
) -> Result<f64, Error> {
    let lambda = wavelength_nm * 1e-9;
    let l2 = lambda * lambda;
    let dt = temperature_k - coeffs.reference_temp_k;
    let mut sum = 0.0;
    for i in 0..3 {
        let b = coeffs.b[i] + coeffs.db_dt[i] * dt;
        let ci = coeffs.c_m[i] + coeffs.dc_dt[i] * dt;
        let denom = l2 - ci * ci;
        if denom.abs() < 1e-6 * l2 {
            return Err(Error::Config(format!(
                "wavelength {wavelength_nm} nm too close to Sellmeier resonance {} nm",
                ci * 1e9
            )));
        }
        sum += b * l2 / denom;
    }
    let n_sq = 1.0 + sum;
    if n_sq <= 0.0 {
        return Err(Error::Config(format!(
            "Sellmeier evaluation gives non-physical n^2 = {n_sq} at {wavelength_nm} nm"
        )));
    }
    Ok(n_sq.sqrt())
}

/// Group index n_g = n - lambda dn/dlambda (central difference, 0.1 nm step).
pub fn group_index(
    wavelength_nm: f64,
    temperature_k: f64,
    coeffs: &SellmeierCoefficients,
) -> Result<f64, Error> {
    let step = 0.1;
    let n = sellmeier_index(wavelength_nm, temperature_k, coeffs)?;
    let n_plus = sellmeier_index(wavelength_nm + step, temperature_k, coeffs)?;
    let n_minus = sellmeier_index(wavelength_nm - step, temperature_k, coeffs)?;
    let dn_dl = (n_plus - n_minus) / (2.0 * step);
    Ok(n - wavelength_nm * dn_dl)
}

/// Chromatic dispersion parameter D(lambda) = S0/4 (lambda - lambda0^4/lambda^3)
/// in ps/(nm km); wavelengths in nm, slope in ps/(nm^2 km).
pub fn dispersion_param(wavelength_nm: f64, zero_dispersion_nm: f64, slope: f64) -> f64 {
    let l0 = zero_dispersion_nm;
    slope / 4.0 * (wavelength_nm - l0.powi(4) / wavelength_nm.powi(3))
}

/// Wavelength dependence of the per-section linear birefringence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum BirefringenceModel {
    /// Delta-beta is wavelength-independent; the perturbation-based DGD is
    /// exactly zero. Useful for isolating pure rotation effects.
    ConstantDeltaBeta,
    /// Delta-beta(lambda) = 2 pi delta_n / lambda; yields DGD = delta_n L / c
    /// per section (the physically meaningful PMD case).
    ConstantDeltaN { delta_n: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSection {
    pub length_m: f64,
    #[serde(default = "default_reference_temp")]
    pub temperature_k: f64,
    /// Linear birefringence contributions, rad/m (direct inputs).
    #[serde(default)]
    pub delta_beta_ellip: f64,
    #[serde(default)]
    pub delta_beta_thermal: f64,
    #[serde(default)]
    pub delta_beta_bend: f64,
    /// Circular birefringence from twist, rad/m.
    #[serde(default)]
    pub twist_rate: f64,
    #[serde(default = "default_birefringence_model")]
    pub birefringence_model: BirefringenceModel,
    #[serde(default = "default_zero_dispersion")]
    pub zero_dispersion_nm: f64,
    /// Dispersion slope S0 at the zero-dispersion wavelength, ps/(nm^2 km).
    #[serde(default = "default_dispersion_slope")]
    pub dispersion_slope: f64,
    /// Attenuation at the quantum wavelength, dB/km.
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    #[serde(default)]
    pub sellmeier: SellmeierCoefficients,
}

fn default_birefringence_model() -> BirefringenceModel {
    BirefringenceModel::ConstantDeltaBeta
}
fn default_zero_dispersion() -> f64 {
    1310.0
}
fn default_dispersion_slope() -> f64 {
    0.092
}
fn default_attenuation() -> f64 {
    0.2
}

impl Default for FiberSection {
    fn default() -> Self {
        Self {
            length_m: 1000.0,
            temperature_k: default_reference_temp(),
            delta_beta_ellip: 0.0,
            delta_beta_thermal: 0.0,
            delta_beta_bend: 0.0,
            twist_rate: 0.0,
            birefringence_model: default_birefringence_model(),
            zero_dispersion_nm: default_zero_dispersion(),
            dispersion_slope: default_dispersion_slope(),
            attenuation_db_per_km: default_attenuation(),
            sellmeier: SellmeierCoefficients::default(),
        }
    }
}

impl FiberSection {
    pub fn validate(&self, label: &str, errors: &mut Vec<String>) {
        if self.length_m <= 0.0 {
            errors.push(format!("{label}: length_m must be > 0"));
        }
        if self.attenuation_db_per_km < 0.0 {
            errors.push(format!("{label}: attenuation_db_per_km must be >= 0"));
        }
        if self.zero_dispersion_nm <= 0.0 {
            errors.push(format!("{label}: zero_dispersion_nm must be > 0"));
        }
    }

    /// Total linear birefringence at `wavelength_nm`, rad/m.
    pub fn delta_beta_linear(&self, wavelength_nm: f64) -> f64 {
        match self.birefringence_model {
            BirefringenceModel::ConstantDeltaBeta => {
                self.delta_beta_ellip + self.delta_beta_thermal + self.delta_beta_bend
            }
            BirefringenceModel::ConstantDeltaN { delta_n } => {
                2.0 * std::f64::consts::PI * delta_n / (wavelength_nm * 1e-9)
            }
        }
    }
}

/// Jones matrix of one section: J_circ(twist) * J_lin(retardation).
pub fn section_jones(section: &FiberSection, wavelength_nm: f64) -> JonesMatrix {
    let phi = section.delta_beta_linear(wavelength_nm) * section.length_m / 2.0;
    let j_lin = JonesMatrix::new(
        Complex64::from_polar(1.0, phi),
        c(0.0, 0.0),
        c(0.0, 0.0),
        Complex64::from_polar(1.0, -phi),
    );
    let j_circ = JonesMatrix::rotation(section.twist_rate * section.length_m / 2.0);
    j_circ.compose(&j_lin)
}

/// Ordered multi-section fiber; photons traverse section 0 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberLink {
    pub sections: Vec<FiberSection>,
    /// Reference wavelength for dispersion and base delay, nm.
    #[serde(default = "default_reference_wavelength_nm")]
    pub reference_wavelength_nm: f64,
}

fn default_reference_wavelength_nm() -> f64 {
    1550.0
}

impl FiberLink {
    pub fn new(sections: Vec<FiberSection>, reference_wavelength_nm: f64) -> Self {
        Self {
            sections,
            reference_wavelength_nm,
        }
    }

    pub fn single(section: FiberSection, reference_wavelength_nm: f64) -> Self {
        Self::new(vec![section], reference_wavelength_nm)
    }

    pub fn validate(&self, label: &str, errors: &mut Vec<String>) {
        if self.sections.is_empty() {
            errors.push(format!("{label}: link must contain at least one section"));
        }
        if self.reference_wavelength_nm <= 0.0 {
            errors.push(format!("{label}: reference_wavelength_nm must be > 0"));
        }
        for (i, s) in self.sections.iter().enumerate() {
            s.validate(&format!("{label}.sections[{i}]"), errors);
        }
    }

    pub fn total_length_m(&self) -> f64 {
        self.sections.iter().map(|s| s.length_m).sum()
    }

    pub fn total_attenuation_db(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| s.attenuation_db_per_km * s.length_m / 1000.0)
            .sum()
    }

    pub fn survival_probability(&self) -> f64 {
        10f64.powf(-self.total_attenuation_db() / 10.0)
    }

    /// Base propagation delay at the reference wavelength, ps, using the
    /// group index per section.
    pub fn base_delay_ps(&self) -> Result<f64, Error> {
        let mut delay = 0.0;
        for s in &self.sections {
            let ng = group_index(self.reference_wavelength_nm, s.temperature_k, &s.sellmeier)?;
            delay += ng * s.length_m / SPEED_OF_LIGHT * 1e12;
        }
        Ok(delay)
    }
}

/// Composite Jones matrix J_N * ... * J_1 (reverse index order so the photon
/// traverses section 1 first).
pub fn total_jones(link: &FiberLink, wavelength_nm: f64) -> JonesMatrix {
    link.sections
        .iter()
        .rev()
        .fold(JonesMatrix::identity(), |acc, s| {
            acc.compose(&section_jones(s, wavelength_nm))
        })
}

/// Length-weighted effective dispersion parameter at the link's reference
/// wavelength, ps/(nm km).
pub fn effective_dispersion(link: &FiberLink) -> f64 {
    let total = link.total_length_m();
    link.sections
        .iter()
        .map(|s| {
            dispersion_param(
                link.reference_wavelength_nm,
                s.zero_dispersion_nm,
                s.dispersion_slope,
            ) * s.length_m
        })
        .sum::<f64>()
        / total
}

/// Chromatic-dispersion delay of a photon at `wavelength_nm` relative to the
/// reference wavelength, ps.
pub fn cd_delay(wavelength_nm: f64, link: &FiberLink) -> f64 {
    effective_dispersion(link)
        * (link.total_length_m() / 1000.0)
        * (wavelength_nm - link.reference_wavelength_nm)
}

fn eigenvalues_2x2(j: &JonesMatrix) -> (Complex64, Complex64) {
    let tr = j.m[(0, 0)] + j.m[(1, 1)];
    let det = j.m[(0, 0)] * j.m[(1, 1)] - j.m[(0, 1)] * j.m[(1, 0)];
    let disc = (tr * tr - det * c(4.0, 0.0)).sqrt();
    ((tr + disc) / c(2.0, 0.0), (tr - disc) / c(2.0, 0.0))
}

fn perturbation_phase_split(link: &FiberLink, lambda_nm: f64, lambda_pert_nm: f64) -> f64 {
    // J(lambda') J(lambda)^-1, with the inverse taken as the adjoint
    let j0_inv = total_jones(link, lambda_nm).dagger();
    let jp = total_jones(link, lambda_pert_nm).compose(&j0_inv);
    let (mu_plus, mu_minus) = eigenvalues_2x2(&jp);
    if (mu_plus - mu_minus).norm() < 1e-14 {
        return 0.0;
    }
    (mu_plus / mu_minus).arg().abs()
}

/// Differential group delay in seconds, from the eigenvalue-perturbation
/// method applied to the composite Jones matrix with a symmetric wavelength
/// step `delta_lambda_nm` (default 0.1 nm).
pub fn dgd(link: &FiberLink, wavelength_nm: f64, delta_lambda_nm: f64) -> f64 {
    let lambda_m = wavelength_nm * 1e-9;
    let delta_lambda_m = delta_lambda_nm * 1e-9;
    let delta_omega =
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (lambda_m * lambda_m) * delta_lambda_m;
    let below = perturbation_phase_split(link, wavelength_nm, wavelength_nm - delta_lambda_nm);
    let above = perturbation_phase_split(link, wavelength_nm, wavelength_nm + delta_lambda_nm);
    0.5 * (below / delta_omega + above / delta_omega)
}

pub const DEFAULT_DGD_STEP_NM: f64 = 0.1;

/// Classical channel coexisting with the quantum signal on (a subset of) the
/// link's sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalChannel {
    pub wavelength_nm: f64,
    /// Launch power in photons/s.
    pub launch_power: f64,
    /// Attenuation at the classical wavelength, natural units (1/m).
    pub attenuation_per_m: f64,
    /// Indices of link sections with coexistence enabled; None = all.
    #[serde(default)]
    pub enabled_sections: Option<Vec<usize>>,
}

impl ClassicalChannel {
    pub fn validate(&self, errors: &mut Vec<String>) {
        if self.launch_power < 0.0 {
            errors.push("classical: launch_power must be >= 0".into());
        }
        if self.wavelength_nm <= 0.0 {
            errors.push("classical: wavelength_nm must be > 0".into());
        }
        if self.attenuation_per_m < 0.0 {
            errors.push("classical: attenuation_per_m must be >= 0".into());
        }
    }

    pub fn section_enabled(&self, index: usize) -> bool {
        match &self.enabled_sections {
            None => true,
            Some(list) => list.contains(&index),
        }
    }
}

/// One (classical, quantum) wavelength pair's scattering coefficients,
/// m^-1 Hz^-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanCoefficient {
    pub lambda_s_nm: f64,
    pub lambda_n_nm: f64,
    pub beta_fs: f64,
    pub beta_bs: f64,
}

/// Wavelength-pair-dependent Raman conversion coefficients plus the quantum
/// receiver bandwidth and the quantum-wavelength attenuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanCoefficientTable {
    pub entries: Vec<RamanCoefficient>,
    /// Quantum channel bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Attenuation at the quantum (noise) wavelength, natural units (1/m).
    pub attenuation_n_per_m: f64,
}

impl Default for RamanCoefficientTable {
    /// Coefficients for a 1550 nm quantum channel. The 1270 nm forward value
    /// is the published measurement; the remaining rows are representative
    /// placeholders preserving the reported ~64x spread between 1270 nm and
    /// 1490 nm, and should be replaced with the measured table via
    /// `load_raman_table` for absolute-rate studies.
    fn default() -> Self {
        Self {
            entries: vec![
                RamanCoefficient {
                    lambda_s_nm: 1270.0,
                    lambda_n_nm: 1550.0,
                    beta_fs: 0.058e-23,
                    beta_bs: 0.070e-23,
                },
                RamanCoefficient {
                    lambda_s_nm: 1310.0,
                    lambda_n_nm: 1550.0,
                    beta_fs: 0.232e-23,
                    beta_bs: 0.280e-23,
                },
                RamanCoefficient {
                    lambda_s_nm: 1330.0,
                    lambda_n_nm: 1550.0,
                    beta_fs: 0.464e-23,
                    beta_bs: 0.560e-23,
                },
                RamanCoefficient {
                    lambda_s_nm: 1490.0,
                    lambda_n_nm: 1550.0,
                    beta_fs: 3.712e-23,
                    beta_bs: 4.480e-23,
                },
            ],
            bandwidth_hz: 100e9,
            attenuation_n_per_m: db_per_km_to_per_m(0.2),
        }
    }
}

impl RamanCoefficientTable {
    pub fn validate(&self, errors: &mut Vec<String>) {
        for (i, e) in self.entries.iter().enumerate() {
            if e.beta_fs < 0.0 || e.beta_bs < 0.0 {
                errors.push(format!("raman_table.entries[{i}]: beta values must be >= 0"));
            }
        }
        if self.bandwidth_hz <= 0.0 {
            errors.push("raman_table: bandwidth_hz must be > 0".into());
        }
    }

    pub fn lookup(&self, lambda_s_nm: f64, lambda_n_nm: f64) -> Result<&RamanCoefficient, Error> {
        self.entries
            .iter()
            .find(|e| {
                (e.lambda_s_nm - lambda_s_nm).abs() < 0.5
                    && (e.lambda_n_nm - lambda_n_nm).abs() < 0.5
            })
            .ok_or_else(|| {
                Error::Config(format!(
                    "no Raman coefficients for classical {lambda_s_nm} nm / quantum {lambda_n_nm} nm"
                ))
            })
    }

    /// Loads a table from whitespace-separated rows:
    /// `lambda_s_nm lambda_n_nm beta_fs beta_bs`. Lines starting with `#`
    /// are comments. Bandwidth and noise attenuation keep their defaults.
    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Config(format!(
                            "raman table {}:{}: bad number '{f}'",
                            path.display(),
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            if fields.len() != 4 {
                return Err(Error::Config(format!(
                    "raman table {}:{}: expected 4 columns, got {}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            entries.push(RamanCoefficient {
                lambda_s_nm: fields[0],
                lambda_n_nm: fields[1],
                beta_fs: fields[2],
                beta_bs: fields[3],
            });
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }
}

/// Forward- and backward-scattered Raman rates (photons/s) generated by one
/// fiber section.
pub fn raman_section_rates(
    length_m: f64,
    classical: &ClassicalChannel,
    coeff: &RamanCoefficient,
    table: &RamanCoefficientTable,
) -> (f64, f64) {
    let alpha_s = classical.attenuation_per_m;
    let alpha_n = table.attenuation_n_per_m;
    let scale = table.bandwidth_hz * classical.launch_power;

    let bs_kernel = if alpha_s + alpha_n > 0.0 {
        (1.0 - (-(alpha_s + alpha_n) * length_m).exp()) / (alpha_s + alpha_n)
    } else {
        length_m
    };
    // removable singularity at alpha_s = alpha_n: kernel -> L exp(-alpha L)
    let fs_kernel = if (alpha_s - alpha_n).abs() < 1e-12 {
        length_m * (-alpha_s * length_m).exp()
    } else {
        ((-alpha_n * length_m).exp() - (-alpha_s * length_m).exp()) / (alpha_s - alpha_n)
    };

    (coeff.beta_fs * fs_kernel * scale, coeff.beta_bs * bs_kernel * scale)
}

/// Total Raman noise rate (photons/s): per-section FS + BS summed over the
/// sections with coexistence enabled.
///
/// The per-section sum is not equal to the single-kernel evaluation of one
/// long fiber (the FS kernel is nonlinear in length); the section split is
/// part of the model.
pub fn total_raman_rate(
    link: &FiberLink,
    classical: &ClassicalChannel,
    quantum_wavelength_nm: f64,
    table: &RamanCoefficientTable,
) -> Result<f64, Error> {
    let coeff = table.lookup(classical.wavelength_nm, quantum_wavelength_nm)?;
    let mut total = 0.0;
    for (i, section) in link.sections.iter().enumerate() {
        if !classical.section_enabled(i) {
            continue;
        }
        let (fs, bs) = raman_section_rates(section.length_m, classical, coeff, table);
        total += fs + bs;
    }
    Ok(total)
}

/// Poisson noise-photon arrival times over `[t0, t1)` at `rate` photons/s.
pub fn sample_noise_arrivals<R: Rng>(
    rate: f64,
    t0: Timestamp,
    t1: Timestamp,
    rng: &mut R,
) -> Vec<Timestamp> {
    exponential_arrivals(rate, t0, t1, rng)
}

/// Raman noise photons over a window, with uniformly random pure polarization
/// at the quantum wavelength.
pub fn noise_photons<R: Rng>(
    link: &FiberLink,
    classical: &ClassicalChannel,
    quantum_wavelength_nm: f64,
    table: &RamanCoefficientTable,
    t0: Timestamp,
    t1: Timestamp,
    registry: &mut EntanglementRegistry,
    rng: &mut R,
) -> Result<Vec<Photon>, Error> {
    let rate = total_raman_rate(link, classical, quantum_wavelength_nm, table)?;
    let arrivals = sample_noise_arrivals(rate, t0, t1, rng);
    Ok(arrivals
        .into_iter()
        .map(|time| Photon {
            id: registry.new_photon_id(),
            wavelength_nm: quantum_wavelength_nm,
            emission_time: time,
            delay_ps: 0.0,
            polarization: Polarization::Pure(JonesVector::random_pure(rng)),
            kind: PhotonKind::Noise,
        })
        .collect())
}

/// Propagates a photon through the link: attenuation sampling, base group
/// delay plus chromatic-dispersion delay, and the composite polarization
/// transformation at the photon's wavelength.
pub fn transmit<R: Rng>(
    mut photon: Photon,
    link: &FiberLink,
    registry: &mut EntanglementRegistry,
    rng: &mut R,
) -> Result<Option<Photon>, Error> {
    if link.sections.is_empty() {
        return Ok(Some(photon));
    }
    let survival = link.survival_probability();
    if survival < 1.0 && rng.gen::<f64>() >= survival {
        if let Polarization::Entangled { pair, slot } = photon.polarization {
            registry.mark_lost(pair, slot, rng);
        }
        return Ok(None);
    }
    photon.delay_ps += link.base_delay_ps()? + cd_delay(photon.wavelength_nm, link);
    let j = total_jones(link, photon.wavelength_nm);
    match &mut photon.polarization {
        Polarization::Pure(v) => *v = j.apply(v),
        Polarization::Entangled { pair, slot } => registry.apply_local(*pair, *slot, &j),
    }
    Ok(Some(photon))
}
