//! Post-processing over detection-record streams: coincidence matching,
//! fringe fits with visibility extraction, nine-setting state tomography via
//! linear inversion, timing histograms, and joint spectral histograms.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::components::PauliBasis;
use crate::error::Error;
use crate::kernel::Timestamp;
use crate::quantum::{c, joint_probabilities, DensityMatrix, MeasurementBasis, TwoPhotonState};

/// Where a detection record came from. Diagnostic only; analysis operations
/// must not branch on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOrigin {
    Photon,
    Dark,
    Raman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub detector_id: u32,
    pub time: Timestamp,
    pub origin: DetectionOrigin,
}

/// Greedy nearest-neighbor coincidence matching.
///
/// Candidate pairs within the window are accepted in order of increasing
/// |t_a - t_b| (ties broken on times then detector ids), each record consumed
/// at most once. The result is symmetric under swapping the input streams.
pub fn coincidences(
    stream_a: &[DetectionRecord],
    stream_b: &[DetectionRecord],
    window_ps: u64,
) -> Vec<(DetectionRecord, DetectionRecord)> {
    debug_assert!(stream_a.windows(2).all(|w| w[0].time <= w[1].time));
    debug_assert!(stream_b.windows(2).all(|w| w[0].time <= w[1].time));

    // enumerate in-window candidates with a sliding lower bound on b
    let mut candidates: Vec<(u64, u64, u64, u32, u32, usize, usize)> = Vec::new();
    let mut b_start = 0usize;
    for (i, ra) in stream_a.iter().enumerate() {
        let ta = ra.time.as_ps();
        while b_start < stream_b.len()
            && stream_b[b_start].time.as_ps().saturating_add(window_ps) < ta
        {
            b_start += 1;
        }
        for (j, rb) in stream_b.iter().enumerate().skip(b_start) {
            let tb = rb.time.as_ps();
            if tb > ta.saturating_add(window_ps) {
                break;
            }
            let dt = ta.abs_diff(tb);
            candidates.push((
                dt,
                ta.min(tb),
                ta.max(tb),
                ra.detector_id.min(rb.detector_id),
                ra.detector_id.max(rb.detector_id),
                i,
                j,
            ));
        }
    }
    candidates.sort_unstable_by_key(|cand| (cand.0, cand.1, cand.2, cand.3, cand.4));

    let mut used_a = vec![false; stream_a.len()];
    let mut used_b = vec![false; stream_b.len()];
    let mut pairs = Vec::new();
    for (_, _, _, _, _, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((stream_a[i], stream_b[j]));
        }
    }
    pairs.sort_by_key(|(a, b)| (a.time, b.time));
    pairs
}

/// One fringe-scan curve: a fixed analyzer setting on one arm, a swept
/// polarizer angle on the other, with coincidence counts per outcome pair.
#[derive(Debug, Clone, Serialize)]
pub struct FringeScan {
    pub fixed_angle_rad: f64,
    pub points: Vec<FringePoint>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FringePoint {
    pub angle_rad: f64,
    /// Coincidence counts indexed by (port_a, port_b): [00, 01, 10, 11].
    pub counts: [u64; 4],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase_rad: f64,
    pub visibility: f64,
}

/// Least-squares sinusoidal fit `a + b cos(2 (theta - phi))` to the counts of
/// one outcome pair (given as `(angle, count)` samples in physical polarizer
/// angle), returning the fit and visibility (max - min)/(max + min).
pub fn visibility(samples: &[(f64, f64)]) -> Result<FringeFit, Error> {
    if samples.len() < 3 {
        return Err(Error::Analysis(
            "fringe fit requires at least 3 swept angles".into(),
        ));
    }
    if samples.iter().all(|(_, count)| *count == 0.0) {
        return Err(Error::Analysis("fringe fit is undefined for all-zero counts".into()));
    }
    // linear model: count = a + p cos(2 theta) + q sin(2 theta)
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &(theta, count) in samples {
        let row = Vector3::new(1.0, (2.0 * theta).cos(), (2.0 * theta).sin());
        ata += row * row.transpose();
        atb += row * count;
    }
    let solution = ata.lu().solve(&atb).ok_or_else(|| {
        Error::Analysis("fringe fit normal equations are singular (degenerate angle set)".into())
    })?;
    let (a, p, q) = (solution[0], solution[1], solution[2]);
    let b = (p * p + q * q).sqrt();
    let phase = 0.5 * q.atan2(p);
    let visibility = if a.abs() < f64::EPSILON {
        1.0
    } else {
        (b / a).clamp(0.0, 1.0)
    };
    Ok(FringeFit {
        offset: a,
        amplitude: b,
        phase_rad: phase,
        visibility,
    })
}

/// Counts from the nine tomography settings (basis_a, basis_b) in
/// {Z, X, Y}^2, each with four outcome-pair totals indexed [o_a][o_b].
/// Counts are floats so exact Born probabilities can stand in for data.
#[derive(Debug, Clone)]
pub struct TomographyData {
    counts: [[[f64; 2]; 2]; 9],
}

pub const PAULI_ORDER: [PauliBasis; 3] = [PauliBasis::Z, PauliBasis::X, PauliBasis::Y];

fn pauli_index(basis: PauliBasis) -> usize {
    match basis {
        PauliBasis::Z => 0,
        PauliBasis::X => 1,
        PauliBasis::Y => 2,
    }
}

fn pauli_matrix(basis: PauliBasis) -> Matrix2<Complex64> {
    match basis {
        PauliBasis::Z => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        PauliBasis::X => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
        PauliBasis::Y => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
    }
}

fn measurement_basis(basis: PauliBasis) -> MeasurementBasis {
    match basis {
        PauliBasis::Z => MeasurementBasis::z(),
        PauliBasis::X => MeasurementBasis::x(),
        PauliBasis::Y => MeasurementBasis::y(),
    }
}

impl TomographyData {
    pub fn new() -> Self {
        Self {
            counts: [[[0.0; 2]; 2]; 9],
        }
    }

    pub fn set(&mut self, basis_a: PauliBasis, basis_b: PauliBasis, counts: [[f64; 2]; 2]) {
        self.counts[pauli_index(basis_a) * 3 + pauli_index(basis_b)] = counts;
    }

    pub fn get(&self, basis_a: PauliBasis, basis_b: PauliBasis) -> &[[f64; 2]; 2] {
        &self.counts[pauli_index(basis_a) * 3 + pauli_index(basis_b)]
    }

    pub fn add_outcome(&mut self, basis_a: PauliBasis, basis_b: PauliBasis, o_a: u8, o_b: u8) {
        self.counts[pauli_index(basis_a) * 3 + pauli_index(basis_b)][o_a as usize]
            [o_b as usize] += 1.0;
    }

    /// Exact (infinite-statistics) data for a pure state: Born probabilities
    /// in each of the nine Pauli settings.
    pub fn from_exact_state(psi: &TwoPhotonState) -> Self {
        let mut data = Self::new();
        for a in PAULI_ORDER {
            for b in PAULI_ORDER {
                let p = joint_probabilities(psi, &measurement_basis(a), &measurement_basis(b));
                data.set(a, b, p);
            }
        }
        data
    }

    fn total(&self, basis_a: PauliBasis, basis_b: PauliBasis) -> f64 {
        self.get(basis_a, basis_b).iter().flatten().sum()
    }
}

impl Default for TomographyData {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a linear-inversion reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    /// Smallest eigenvalue; reconstructions below -0.05 are non-physical.
    pub min_eigenvalue: f64,
    pub nonphysical: bool,
}

/// Linear-inversion tomography: rho = 1/4 sum_ij E_ij sigma_i (x) sigma_j,
/// with two-body correlators from each setting's outcome counts (+1 for
/// outcome 0, -1 for outcome 1), single-body marginals averaged over the
/// three settings sharing that local basis, and E_00 = 1. The result is
/// symmetrized to Hermitian and trace-normalized; non-physicality is flagged,
/// not repaired.
pub fn reconstruct_density(data: &TomographyData) -> Result<Reconstruction, Error> {
    for a in PAULI_ORDER {
        for b in PAULI_ORDER {
            if data.total(a, b) <= 0.0 {
                return Err(Error::Analysis(format!(
                    "tomography setting ({a:?}, {b:?}) has zero total count"
                )));
            }
        }
    }

    let correlator = |a: PauliBasis, b: PauliBasis| {
        let n = data.get(a, b);
        (n[0][0] - n[0][1] - n[1][0] + n[1][1]) / data.total(a, b)
    };
    let marginal_a = |a: PauliBasis| {
        PAULI_ORDER
            .iter()
            .map(|&b| {
                let n = data.get(a, b);
                (n[0][0] + n[0][1] - n[1][0] - n[1][1]) / data.total(a, b)
            })
            .sum::<f64>()
            / 3.0
    };
    let marginal_b = |b: PauliBasis| {
        PAULI_ORDER
            .iter()
            .map(|&a| {
                let n = data.get(a, b);
                (n[0][0] - n[0][1] + n[1][0] - n[1][1]) / data.total(a, b)
            })
            .sum::<f64>()
            / 3.0
    };

    let identity = Matrix2::<Complex64>::identity();
    let mut rho = Matrix4::<Complex64>::identity() * c(0.25, 0.0);
    for a in PAULI_ORDER {
        rho += pauli_matrix(a).kronecker(&identity) * c(marginal_a(a) / 4.0, 0.0);
    }
    for b in PAULI_ORDER {
        rho += identity.kronecker(&pauli_matrix(b)) * c(marginal_b(b) / 4.0, 0.0);
    }
    for a in PAULI_ORDER {
        for b in PAULI_ORDER {
            rho += pauli_matrix(a).kronecker(&pauli_matrix(b)) * c(correlator(a, b) / 4.0, 0.0);
        }
    }

    let rho = DensityMatrix::new(rho).hermitize_normalize();
    let min_eigenvalue = rho.eigenvalues()[0];
    Ok(Reconstruction {
        nonphysical: min_eigenvalue < -0.05,
        rho,
        min_eigenvalue,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingHistogram {
    pub bin_width_ps: f64,
    /// Center of the first bin, ps.
    pub first_center_ps: f64,
    pub counts: Vec<u64>,
    pub peak_position_ps: f64,
    /// None when fewer than 10 pairs were supplied.
    pub fwhm_ps: Option<f64>,
}

impl TimingHistogram {
    pub fn bin_center(&self, index: usize) -> f64 {
        self.first_center_ps + index as f64 * self.bin_width_ps
    }
}

/// Histogram of arrival-time differences with peak position and FWHM (linear
/// interpolation at half the peak count).
pub fn timing_histogram(deltas_ps: &[f64], bin_width_ps: f64) -> Result<TimingHistogram, Error> {
    if bin_width_ps <= 0.0 {
        return Err(Error::Analysis("bin width must be > 0".into()));
    }
    if deltas_ps.is_empty() {
        return Err(Error::Analysis("timing histogram needs at least one pair".into()));
    }
    let min = deltas_ps.iter().cloned().fold(f64::INFINITY, f64::min);
    let first_bin = (min / bin_width_ps).floor();
    let n_bins = deltas_ps
        .iter()
        .map(|d| ((d / bin_width_ps).floor() - first_bin) as usize)
        .max()
        .unwrap()
        + 1;
    let mut counts = vec![0u64; n_bins];
    for d in deltas_ps {
        counts[((d / bin_width_ps).floor() - first_bin) as usize] += 1;
    }
    let first_center_ps = (first_bin + 0.5) * bin_width_ps;
    let peak_idx = counts
        .iter()
        .enumerate()
        .max_by_key(|(_, count)| **count)
        .unwrap()
        .0;
    let peak_position_ps = first_center_ps + peak_idx as f64 * bin_width_ps;

    let fwhm_ps = if deltas_ps.len() < 10 {
        None
    } else {
        Some(fwhm(&counts, peak_idx, bin_width_ps))
    };
    Ok(TimingHistogram {
        bin_width_ps,
        first_center_ps,
        counts,
        peak_position_ps,
        fwhm_ps,
    })
}

fn fwhm(counts: &[u64], peak_idx: usize, bin_width: f64) -> f64 {
    let half = counts[peak_idx] as f64 / 2.0;
    // walk left from the peak to the half-maximum crossing
    let left = {
        let mut x = peak_idx as f64 - 0.5; // left edge if nothing lower found
        for i in (0..peak_idx).rev() {
            if (counts[i] as f64) < half {
                let (lo, hi) = (counts[i] as f64, counts[i + 1] as f64);
                x = i as f64 + (half - lo) / (hi - lo);
                break;
            }
            if i == 0 {
                x = -0.5;
            }
        }
        x
    };
    let right = {
        let mut x = peak_idx as f64 + 0.5;
        for i in peak_idx + 1..counts.len() {
            if (counts[i] as f64) < half {
                let (hi, lo) = (counts[i - 1] as f64, counts[i] as f64);
                x = (i - 1) as f64 + (hi - half) / (hi - lo);
                break;
            }
            if i == counts.len() - 1 {
                x = counts.len() as f64 - 0.5;
            }
        }
        x
    };
    (right - left).max(1.0) * bin_width
}

/// 2D histogram over (signal, idler) wavelengths.
#[derive(Debug, Clone, Serialize)]
pub struct JsiHistogram {
    pub signal_min_nm: f64,
    pub idler_min_nm: f64,
    pub bin_nm: f64,
    pub bins: usize,
    /// Row-major counts[signal_bin][idler_bin].
    pub counts: Vec<Vec<u64>>,
}

pub fn jsi_histogram(pairs: &[(f64, f64)], bins: usize) -> Result<JsiHistogram, Error> {
    if pairs.is_empty() {
        return Err(Error::Analysis("JSI histogram needs at least one pair".into()));
    }
    let smin = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let smax = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let imin = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let imax = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = (smax - smin).max(imax - imin).max(1e-9);
    let bin_nm = span / bins as f64 * (1.0 + 1e-12);
    let mut counts = vec![vec![0u64; bins]; bins];
    for &(ls, li) in pairs {
        let si = (((ls - smin) / bin_nm) as usize).min(bins - 1);
        let ii = (((li - imin) / bin_nm) as usize).min(bins - 1);
        counts[si][ii] += 1;
    }
    Ok(JsiHistogram {
        signal_min_nm: smin,
        idler_min_nm: imin,
        bin_nm,
        bins,
        counts,
    })
}

/// Pearson correlation coefficient of paired samples.
pub fn correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
