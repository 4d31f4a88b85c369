//! Jones-calculus linear algebra for one- and two-photon polarization states.
//!
//! Single photons are two-component complex vectors in the {H, V} basis;
//! entangled pairs are four-component vectors over {HH, HV, VH, VV}.
//! Lossless optical elements act as unitary 2x2 Jones operators, lifted to
//! the pair space as `J (x) I` or `I (x) J` depending on the photon addressed.

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector2, Vector4};
use num_complex::Complex64;
use rand::Rng;

use crate::error::Error;

pub type C64 = Complex64;

pub const UNITARITY_TOL: f64 = 1e-10;
pub const NORM_TOL: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Which photon of a pair an operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    A,
    B,
}

/// The four maximally entangled two-qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

/// Single-photon polarization state (alpha_H, alpha_V).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub amp_h: C64,
    pub amp_v: C64,
}

impl JonesVector {
    pub fn new(amp_h: C64, amp_v: C64) -> Self {
        Self { amp_h, amp_v }
    }

    pub fn h() -> Self {
        Self::new(c(1.0, 0.0), c(0.0, 0.0))
    }

    pub fn v() -> Self {
        Self::new(c(0.0, 0.0), c(1.0, 0.0))
    }

    /// Diagonal state |+> = (|H> + |V>)/sqrt(2).
    pub fn plus() -> Self {
        let s = 1.0 / 2f64.sqrt();
        Self::new(c(s, 0.0), c(s, 0.0))
    }

    /// Anti-diagonal state |-> = (|H> - |V>)/sqrt(2).
    pub fn minus() -> Self {
        let s = 1.0 / 2f64.sqrt();
        Self::new(c(s, 0.0), c(-s, 0.0))
    }

    /// Linear polarization at `angle` radians from horizontal.
    pub fn linear(angle: f64) -> Self {
        Self::new(c(angle.cos(), 0.0), c(angle.sin(), 0.0))
    }

    pub fn norm_sq(&self) -> f64 {
        self.amp_h.norm_sqr() + self.amp_v.norm_sqr()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm_sq().sqrt();
        Self::new(self.amp_h / n, self.amp_v / n)
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &JonesVector) -> C64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    /// The orthogonal state (unique up to phase).
    pub fn orthogonal(&self) -> Self {
        Self::new(-self.amp_v.conj(), self.amp_h.conj())
    }

    /// Equality up to a global phase: |<a|b>| = 1.
    pub fn same_up_to_phase(&self, other: &JonesVector, tol: f64) -> bool {
        (self.inner(other).norm() - 1.0).abs() < tol
    }

    pub(crate) fn as_vector(&self) -> Vector2<C64> {
        Vector2::new(self.amp_h, self.amp_v)
    }

    /// Haar-uniform pure state on the Poincare sphere.
    pub fn random_pure<R: Rng>(rng: &mut R) -> Self {
        let u: f64 = rng.gen();
        let theta = (1.0 - 2.0 * u).acos() / 2.0;
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        Self::new(
            c(theta.cos(), 0.0),
            C64::from_polar(theta.sin(), phi),
        )
    }
}

/// 2x2 complex operator for wave plates and fiber sections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix {
    pub m: Matrix2<C64>,
}

impl JonesMatrix {
    pub fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Self {
            m: Matrix2::new(m00, m01, m10, m11),
        }
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix2::identity(),
        }
    }

    /// Rotation by `angle` in the H/V plane.
    pub fn rotation(angle: f64) -> Self {
        let (s, co) = angle.sin_cos();
        Self::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        let out = self.m * v.as_vector();
        JonesVector::new(out[0], out[1])
    }

    pub fn compose(&self, rhs: &JonesMatrix) -> JonesMatrix {
        JonesMatrix { m: self.m * rhs.m }
    }

    pub fn dagger(&self) -> JonesMatrix {
        JonesMatrix {
            m: self.m.adjoint(),
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.m.adjoint() * self.m - Matrix2::identity()).norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() < tol
    }
}

/// Four-amplitude entangled-pair state, ordered (HH, HV, VH, VV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    pub amps: Vector4<C64>,
}

impl TwoPhotonState {
    pub fn new(amps: [C64; 4]) -> Self {
        Self {
            amps: Vector4::from_row_slice(&amps),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm_sq().sqrt();
        Self { amps: self.amps / c(n, 0.0) }
    }

    /// Product state |a> (x) |b>.
    pub fn product(a: &JonesVector, b: &JonesVector) -> Self {
        Self::new([
            a.amp_h * b.amp_h,
            a.amp_h * b.amp_v,
            a.amp_v * b.amp_h,
            a.amp_v * b.amp_v,
        ])
    }

    pub fn inner(&self, other: &TwoPhotonState) -> C64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn same_up_to_phase(&self, other: &TwoPhotonState, tol: f64) -> bool {
        (self.inner(other).norm() - 1.0).abs() < tol
    }

    /// Haar-like random pure pair state (for oracle tests).
    pub fn random_pure<R: Rng>(rng: &mut R) -> Self {
        let mut amps = [c(0.0, 0.0); 4];
        for a in &mut amps {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            *a = c(re, im);
        }
        Self::new(amps).normalize()
    }
}

/// Pair of orthonormal single-photon states defining a projective measurement.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementBasis {
    pub b0: JonesVector,
    pub b1: JonesVector,
}

impl MeasurementBasis {
    /// Builds a basis, checking orthonormality to 1e-12.
    pub fn new(b0: JonesVector, b1: JonesVector) -> Result<Self, Error> {
        if (b0.norm_sq() - 1.0).abs() > 1e-10 || (b1.norm_sq() - 1.0).abs() > 1e-10 {
            return Err(Error::Physics("measurement basis states must be normalized".into()));
        }
        if b0.inner(&b1).norm() > 1e-10 {
            return Err(Error::Physics("measurement basis states must be orthogonal".into()));
        }
        Ok(Self { b0, b1 })
    }

    /// Rectilinear {H, V}.
    pub fn z() -> Self {
        Self {
            b0: JonesVector::h(),
            b1: JonesVector::v(),
        }
    }

    /// Diagonal {+, -}.
    pub fn x() -> Self {
        Self {
            b0: JonesVector::plus(),
            b1: JonesVector::minus(),
        }
    }

    /// Circular {(1, i)/sqrt2, (1, -i)/sqrt2} (sigma_y eigenbasis, +1 first).
    pub fn y() -> Self {
        let s = 1.0 / 2f64.sqrt();
        Self {
            b0: JonesVector::new(c(s, 0.0), c(0.0, s)),
            b1: JonesVector::new(c(s, 0.0), c(0.0, -s)),
        }
    }

    /// Basis spanned by `v` and its orthogonal complement.
    pub fn from_state(v: &JonesVector) -> Self {
        let v = v.normalize();
        Self {
            b0: v,
            b1: v.orthogonal(),
        }
    }

    /// Haar-random basis.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self::from_state(&JonesVector::random_pure(rng))
    }
}

/// Bell state with the standard amplitudes and signs.
pub fn bell_state(kind: BellKind) -> TwoPhotonState {
    let s = c(1.0 / 2f64.sqrt(), 0.0);
    let z = c(0.0, 0.0);
    let amps = match kind {
        BellKind::PhiPlus => [s, z, z, s],
        BellKind::PhiMinus => [s, z, z, -s],
        BellKind::PsiPlus => [z, s, s, z],
        BellKind::PsiMinus => [z, s, -s, z],
    };
    TwoPhotonState::new(amps)
}

/// Lifts a single-photon unitary to the pair space: J(x)I for slot A, I(x)J for B.
///
/// Rejects inputs whose unitarity defect exceeds 1e-8.
pub fn lift_local(j: &JonesMatrix, slot: Slot) -> Result<Matrix4<C64>, Error> {
    if !j.is_unitary(1e-8) {
        return Err(Error::Physics(format!(
            "lift_local requires a unitary Jones matrix (defect {:.3e})",
            j.unitarity_defect()
        )));
    }
    let eye = Matrix2::identity();
    let out = match slot {
        Slot::A => j.m.kronecker(&eye),
        Slot::B => eye.kronecker(&j.m),
    };
    Ok(out)
}

/// Applies a local unitary to one photon of a pair.
///
/// Unlike [`lift_local`] this skips the explicit 4x4 product and acts on the
/// amplitudes directly; the two routes agree and are cross-checked in tests.
pub fn apply_local(state: &TwoPhotonState, j: &JonesMatrix, slot: Slot) -> TwoPhotonState {
    let a = &state.amps;
    let m = &j.m;
    let amps = match slot {
        // (J (x) I): rows indexed by (a_out, b), sum over a_in.
        Slot::A => [
            m[(0, 0)] * a[0] + m[(0, 1)] * a[2],
            m[(0, 0)] * a[1] + m[(0, 1)] * a[3],
            m[(1, 0)] * a[0] + m[(1, 1)] * a[2],
            m[(1, 0)] * a[1] + m[(1, 1)] * a[3],
        ],
        Slot::B => [
            m[(0, 0)] * a[0] + m[(0, 1)] * a[1],
            m[(1, 0)] * a[0] + m[(1, 1)] * a[1],
            m[(0, 0)] * a[2] + m[(0, 1) ] * a[3],
            m[(1, 0)] * a[2] + m[(1, 1)] * a[3],
        ],
    };
    TwoPhotonState::new(amps)
}

/// Projective measurement of one photon of a pair.
///
/// Returns the sampled outcome (0 for `b0`, 1 for `b1`) and the renormalized
/// conditional state of the partner photon.
pub fn measure<R: Rng>(
    state: &TwoPhotonState,
    basis: &MeasurementBasis,
    slot: Slot,
    rng: &mut R,
) -> (u8, JonesVector) {
    let partner0 = project_partner(state, &basis.b0, slot);
    let p0 = partner0.norm_sq();
    let outcome = if rng.gen::<f64>() < p0 { 0u8 } else { 1u8 };
    let partner = if outcome == 0 {
        partner0
    } else {
        project_partner(state, &basis.b1, slot)
    };
    (outcome, partner.normalize())
}

/// Unnormalized partner amplitude after projecting `slot` onto `onto`.
pub fn project_partner(state: &TwoPhotonState, onto: &JonesVector, slot: Slot) -> JonesVector {
    let a = &state.amps;
    let (ch, cv) = (onto.amp_h.conj(), onto.amp_v.conj());
    match slot {
        // amps laid out as [HH, HV, VH, VV] = M[a][b]
        Slot::A => JonesVector::new(ch * a[0] + cv * a[2], ch * a[1] + cv * a[3]),
        Slot::B => JonesVector::new(ch * a[0] + cv * a[1], ch * a[2] + cv * a[3]),
    }
}

/// Born probability of outcome 0 when measuring `slot` in `basis`.
pub fn outcome_probability(state: &TwoPhotonState, basis: &MeasurementBasis, slot: Slot) -> f64 {
    project_partner(state, &basis.b0, slot).norm_sq()
}

/// Joint Born probabilities p(o_a, o_b) for independent projective
/// measurements on both slots; indexed [o_a][o_b].
pub fn joint_probabilities(
    state: &TwoPhotonState,
    basis_a: &MeasurementBasis,
    basis_b: &MeasurementBasis,
) -> [[f64; 2]; 2] {
    let mut p = [[0.0; 2]; 2];
    for (ia, ba) in [basis_a.b0, basis_a.b1].iter().enumerate() {
        for (ib, bb) in [basis_b.b0, basis_b.b1].iter().enumerate() {
            let amp = TwoPhotonState::product(ba, bb).inner(state);
            p[ia][ib] = amp.norm_sqr();
        }
    }
    p
}

/// 4x4 complex density operator in the {HH, HV, VH, VV} basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub m: Matrix4<C64>,
}

impl DensityMatrix {
    pub fn new(m: Matrix4<C64>) -> Self {
        Self { m }
    }

    pub fn from_pure(psi: &TwoPhotonState) -> Self {
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = psi.amps[i] * psi.amps[j].conj();
            }
        }
        Self { m }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            m: Matrix4::identity() * c(0.25, 0.0),
        }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.m.adjoint() - self.m).norm()
    }

    /// Symmetrizes to exact Hermiticity and normalizes the trace to one.
    pub fn hermitize_normalize(&self) -> Self {
        let h = (self.m + self.m.adjoint()) * c(0.5, 0.0);
        let tr = h.trace().re;
        Self { m: h / c(tr, 0.0) }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    ///
    /// Computed via the real 8x8 embedding [[X, -Y], [Y, X]] of X + iY, whose
    /// spectrum is that of the Hermitian matrix with doubled multiplicity.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let h = (self.m + self.m.adjoint()) * c(0.5, 0.0);
        let mut embed = SMatrix::<f64, 8, 8>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                embed[(i, j)] = h[(i, j)].re;
                embed[(i + 4, j + 4)] = h[(i, j)].re;
                embed[(i, j + 4)] = -h[(i, j)].im;
                embed[(i + 4, j)] = h[(i, j)].im;
            }
        }
        let mut eigs: Vec<f64> = embed.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // doubled pairs: take every other one
        [eigs[0], eigs[2], eigs[4], eigs[6]]
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (self.m - other.m).norm()
    }
}

/// Overlap <psi|rho|psi>, clamped to [0, 1].
///
/// Returns the clamped fidelity and a flag set when the raw value fell
/// outside [-1e-6, 1 + 1e-6] or carried imaginary residue above 1e-8.
pub fn fidelity(rho: &DensityMatrix, psi: &TwoPhotonState) -> (f64, bool) {
    let mut val = c(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            val += psi.amps[i].conj() * rho.m[(i, j)] * psi.amps[j];
        }
    }
    let warned = val.im.abs() > 1e-8 || val.re < -1e-6 || val.re > 1.0 + 1e-6;
    (val.re.clamp(0.0, 1.0), warned)
}
