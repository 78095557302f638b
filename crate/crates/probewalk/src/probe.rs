//! Probe bases, probe-frame rotations of the interaction Hamiltonian, and exact
//! weak-measurement step operators generated by a probe feedback loop.
//!
//! A scheme describes one feedback loop: prepare a probe qubit near the Bloch
//! direction n1(x), let probe and system evolve under the fixed joint
//! Hamiltonian for a time delta, then read the probe out along ±n2(x). The
//! step operators come from the exact contraction of the joint unitary, so the
//! two-outcome family is complete to machine precision at any delta.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    hermitian_exp, pauli_x, pauli_y, pauli_z, probe_sandwich, tensor, BlochVector, LinalgError,
    Operator, QuantumState,
};

/// Default gate constant for the probe/detector overlap precondition.
pub const DEFAULT_OVERLAP_GATE: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("block {name} is not Hermitian (anti-Hermitian norm {norm:.3e})")]
    NonHermitianBlock { name: &'static str, norm: f64 },
    #[error("block {name} has dimension {got}, expected {expected}")]
    BlockDimension {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(
        "probe/detector overlap {overlap:.3e} exceeds gate {gate:.3e}; \
         the loop is not a diffusive weak measurement"
    )]
    OverlapTooLarge { overlap: f64, gate: f64 },
    #[error("probe basis is not orthonormal (max deviation {dev:.3e})")]
    BasisNotOrthonormal { dev: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The four Hermitian system blocks of the joint interaction Hamiltonian
/// 1⊗H_S + X⊗H_X + Y⊗H_Y + Z⊗H_Z.
#[derive(Debug, Clone)]
pub struct InteractionHamiltonian {
    pub h_s: Operator,
    pub h_x: Operator,
    pub h_y: Operator,
    pub h_z: Operator,
}

impl InteractionHamiltonian {
    pub fn new(
        h_s: Operator,
        h_x: Operator,
        h_y: Operator,
        h_z: Operator,
    ) -> Result<Self, SchemeError> {
        let dim = h_x.dim();
        for (name, op) in [("H_S", &h_s), ("H_X", &h_x), ("H_Y", &h_y), ("H_Z", &h_z)] {
            if op.dim() != dim {
                return Err(SchemeError::BlockDimension {
                    name,
                    got: op.dim(),
                    expected: dim,
                });
            }
            if !op.is_hermitian() {
                let norm = op.sub(&op.adjoint()).frobenius_norm() / 2.0;
                return Err(SchemeError::NonHermitianBlock { name, norm });
            }
        }
        Ok(InteractionHamiltonian { h_s, h_x, h_y, h_z })
    }

    /// System dimension d.
    pub fn dim(&self) -> usize {
        self.h_x.dim()
    }

    /// The joint 2d×2d operator, probe factor first.
    pub fn joint(&self) -> Operator {
        let id = Operator::identity(2);
        tensor(&id, &self.h_s)
            .add(&tensor(&pauli_x(), &self.h_x))
            .add(&tensor(&pauli_y(), &self.h_y))
            .add(&tensor(&pauli_z(), &self.h_z))
    }

    /// n·(H_X, H_Y, H_Z) for a real direction n.
    pub fn project(&self, n: &BlochVector) -> Operator {
        self.h_x
            .scale(Complex64::new(n.x, 0.0))
            .add(&self.h_y.scale(Complex64::new(n.y, 0.0)))
            .add(&self.h_z.scale(Complex64::new(n.z, 0.0)))
    }
}

/// Orthonormal Bloch triad: n1 ≈ probe direction, n2 = detector direction,
/// n3 = n1 × n2.
#[derive(Debug, Clone, Copy)]
pub struct ProbeBasis {
    pub n1: BlochVector,
    pub n2: BlochVector,
    pub n3: BlochVector,
}

impl ProbeBasis {
    pub fn new(n1: BlochVector, n2: BlochVector, n3: BlochVector) -> Result<Self, SchemeError> {
        let basis = ProbeBasis { n1, n2, n3 };
        let dev = basis.orthonormality_deviation();
        if dev > 1e-10 {
            return Err(SchemeError::BasisNotOrthonormal { dev });
        }
        Ok(basis)
    }

    pub fn orthonormality_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        dev = dev.max((self.n1.norm() - 1.0).abs());
        dev = dev.max((self.n2.norm() - 1.0).abs());
        dev = dev.max((self.n3.norm() - 1.0).abs());
        dev = dev.max(self.n1.dot(&self.n2).abs());
        dev = dev.max(self.n1.dot(&self.n3).abs());
        dev = dev.max(self.n2.dot(&self.n3).abs());
        let cross = self.n1.cross(&self.n2);
        dev = dev.max(cross.add(&self.n3.scale(-1.0)).norm());
        dev
    }
}

/// Build a probe basis from a probe Bloch vector and the detector's +outcome
/// Bloch vector: n2 is the detector exactly, n1 is the probe direction
/// orthogonalized against n2, n3 completes the right-handed triad.
pub fn build_probe_basis(
    sigma: &BlochVector,
    detector_plus: &BlochVector,
    delta: f64,
    gate: f64,
) -> Result<ProbeBasis, SchemeError> {
    let sigma = sigma.normalized();
    let n2 = detector_plus.normalized();
    let overlap = sigma.dot(&n2).abs();
    if overlap > gate * delta {
        return Err(SchemeError::OverlapTooLarge {
            overlap,
            gate: gate * delta,
        });
    }
    let n1 = sigma.add(&n2.scale(-sigma.dot(&n2))).normalized();
    let n3 = n1.cross(&n2);
    ProbeBasis::new(n1, n2, n3)
}

/// The interaction blocks rotated into the probe basis: H_i = n_i·(H_X,H_Y,H_Z).
///
/// The index convention is fixed by the reconstruction identity
/// Σ_a P_a ⊗ H_a = Σ_i (n_i·P) ⊗ H_i.
#[derive(Debug, Clone)]
pub struct RotatedHamiltonian {
    pub h1: Operator,
    pub h2: Operator,
    pub h3: Operator,
}

pub fn rotate_hamiltonian(h: &InteractionHamiltonian, basis: &ProbeBasis) -> RotatedHamiltonian {
    RotatedHamiltonian {
        h1: h.project(&basis.n1),
        h2: h.project(&basis.n2),
        h3: h.project(&basis.n3),
    }
}

/// The probe-frame Pauli coefficients of the joint Hamiltonian: the frame in
/// which the detector reads out along X and the probe sits near the +Z pole.
/// In that frame the X coefficient is n2·H, the Y coefficient n3·H and the Z
/// coefficient n1·H; the expansion formulas of the reversal analysis are
/// stated in these variables.
#[derive(Debug, Clone)]
pub struct FrameTriple {
    /// Frame X coefficient, n2·(H_X,H_Y,H_Z).
    pub hx: Operator,
    /// Frame Y coefficient, n3·(H_X,H_Y,H_Z).
    pub hy: Operator,
    /// Frame Z coefficient, n1·(H_X,H_Y,H_Z).
    pub hz: Operator,
}

pub fn frame_triple(h: &InteractionHamiltonian, basis: &ProbeBasis) -> FrameTriple {
    FrameTriple {
        hx: h.project(&basis.n2),
        hy: h.project(&basis.n3),
        hz: h.project(&basis.n1),
    }
}

type BasisFn = Arc<dyn Fn(f64) -> ProbeBasis + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type RateFn = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// An x-parametrized probe feedback scheme: basis triad, warp functions and the
/// fixed interaction Hamiltonian. Immutable and shareable across threads.
#[derive(Clone)]
pub struct ProbeScheme {
    hamiltonian: InteractionHamiltonian,
    basis_fn: BasisFn,
    warp_c: ScalarFn,
    warp_psi: ScalarFn,
    rotation_rate: Option<RateFn>,
    overlap_gate: f64,
    /// Calibrated correction-pulse signs (s1 for the O(δ) pulse, s2 for O(δ²)).
    pub pulse_signs: (f64, f64),
}

impl std::fmt::Debug for ProbeScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProbeScheme")
            .field("dim", &self.dim())
            .field("overlap_gate", &self.overlap_gate)
            .field("pulse_signs", &self.pulse_signs)
            .field("analytic_rate", &self.rotation_rate.is_some())
            .finish()
    }
}

impl ProbeScheme {
    pub fn new(
        hamiltonian: InteractionHamiltonian,
        basis_fn: impl Fn(f64) -> ProbeBasis + Send + Sync + 'static,
        warp_c: impl Fn(f64) -> f64 + Send + Sync + 'static,
        warp_psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ProbeScheme {
            hamiltonian,
            basis_fn: Arc::new(basis_fn),
            warp_c: Arc::new(warp_c),
            warp_psi: Arc::new(warp_psi),
            rotation_rate: None,
            overlap_gate: DEFAULT_OVERLAP_GATE,
            pulse_signs: (-1.0, 1.0),
        }
    }

    pub fn with_rotation_rate(
        mut self,
        rate: impl Fn(f64) -> [f64; 3] + Send + Sync + 'static,
    ) -> Self {
        self.rotation_rate = Some(Arc::new(rate));
        self
    }

    pub fn with_overlap_gate(mut self, gate: f64) -> Self {
        self.overlap_gate = gate;
        self
    }

    pub fn with_pulse_signs(mut self, signs: (f64, f64)) -> Self {
        self.pulse_signs = signs;
        self
    }

    pub fn hamiltonian(&self) -> &InteractionHamiltonian {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn basis(&self, x: f64) -> ProbeBasis {
        (self.basis_fn)(x)
    }

    pub fn warp_c(&self, x: f64) -> f64 {
        (self.warp_c)(x)
    }

    pub fn warp_psi(&self, x: f64) -> f64 {
        (self.warp_psi)(x)
    }

    pub fn overlap_gate(&self) -> f64 {
        self.overlap_gate
    }

    /// Analytic basis rotation rate Ω(x), when the scheme provides one.
    pub fn rotation_rate(&self, x: f64) -> Option<[f64; 3]> {
        self.rotation_rate.as_ref().map(|f| f(x))
    }

    /// e^{iδ H_PS}: the joint step unitary. Independent of x, so callers that
    /// walk many steps should compute it once.
    pub fn joint_exponential(&self, delta: f64) -> Operator {
        hermitian_exp(&self.hamiltonian.joint(), delta)
            .expect("joint Hamiltonian is Hermitian by construction")
    }

    /// Checks the diffusive-weak-measurement gate |n2·σ| ≤ gate·δ on a grid.
    pub fn validate(&self, delta: f64, x_lo: f64, x_hi: f64, samples: usize) -> Result<(), SchemeError> {
        for k in 0..samples {
            let x = x_lo + (x_hi - x_lo) * (k as f64) / ((samples - 1).max(1) as f64);
            let basis = self.basis(x);
            let dev = basis.orthonormality_deviation();
            if dev > 1e-10 {
                return Err(SchemeError::BasisNotOrthonormal { dev });
            }
            let sigma = probe_bloch(self, x, delta);
            let overlap = sigma.dot(&basis.n2).abs();
            if overlap > self.overlap_gate * delta {
                return Err(SchemeError::OverlapTooLarge {
                    overlap,
                    gate: self.overlap_gate * delta,
                });
            }
        }
        Ok(())
    }
}

/// Bloch vector of the prepared probe at pointer x: n1 tilted by angle 2δc(x)
/// within the (n2, n3) plane. ψ = 0 tilts toward +n2 (the detector axis), which
/// is what feeds the warp's real part into the outcome bias.
pub fn probe_bloch(scheme: &ProbeScheme, x: f64, delta: f64) -> BlochVector {
    let basis = scheme.basis(x);
    let c = scheme.warp_c(x);
    let psi = scheme.warp_psi(x);
    let angle = 2.0 * delta * c;
    let tilt = basis
        .n2
        .scale(psi.cos())
        .add(&basis.n3.scale(psi.sin()));
    basis
        .n1
        .scale(angle.cos())
        .add(&tilt.scale(angle.sin()))
}

/// The probe-frame basis pair pulled back to the lab: v0, v1 are the ±n1
/// eigenstates with their relative phase fixed so that (n2·P) v0 = v1.
/// Detector and probe states built from this pair carry exactly the phases of
/// the frame where the detector reads out along X and the probe sits near +Z,
/// which keeps step-operator phases smooth in x and lets the reversal series
/// match the exact product without a floating gauge.
fn frame_pair(basis: &ProbeBasis) -> (QuantumState, QuantumState) {
    let v0 = basis.n1.to_state();
    let a = v0.amplitudes()[0];
    let b = v0.amplitudes()[1];
    // Orthogonal partner, arbitrary phase for now.
    let v1 = QuantumState::new(vec![-b.conj(), a.conj()]).expect("unit");
    // (n2·P) maps the +n1 eigenstate onto the −n1 eigenspace with unit weight.
    let n2p_v0 = {
        let n2 = basis.n2;
        let (a0, a1) = (a, b);
        // (n2·P) amplitudes: rows of n2x·X + n2y·Y + n2z·Z.
        let top = Complex64::new(n2.z, 0.0) * a0 + Complex64::new(n2.x, -n2.y) * a1;
        let bot = Complex64::new(n2.x, n2.y) * a0 - Complex64::new(n2.z, 0.0) * a1;
        QuantumState::new(vec![top, bot]).expect("unit")
    };
    let mu = v1.inner(&n2p_v0); // |mu| = 1
    let v1 = QuantumState::new(v1.amplitudes().iter().map(|c| c * mu).collect()).expect("unit");
    (v0, v1)
}

/// The prepared probe state in the lab frame:
/// cos(δc)·v0 + sin(δc)·e^{iψ}·v1 in the frame pair of the local triad.
pub fn build_probe_state(scheme: &ProbeScheme, x: f64, delta: f64) -> QuantumState {
    let basis = scheme.basis(x);
    let (v0, v1) = frame_pair(&basis);
    let angle = delta * scheme.warp_c(x);
    let phase = Complex64::from_polar(1.0, scheme.warp_psi(x));
    let amps: Vec<Complex64> = v0
        .amplitudes()
        .iter()
        .zip(v1.amplitudes())
        .map(|(a0, a1)| a0 * angle.cos() + a1 * (phase * angle.sin()))
        .collect();
    QuantumState::new(amps).expect("unit")
}

/// Detector states for the two branches: (v0 ± v1)/√2, the pullbacks of the
/// frame X eigenstates. Their Bloch vectors are ±n2.
pub fn detector_state(scheme: &ProbeScheme, x: f64, branch: i8) -> QuantumState {
    let basis = scheme.basis(x);
    let (v0, v1) = frame_pair(&basis);
    let sign = if branch >= 0 { 1.0 } else { -1.0 };
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let amps: Vec<Complex64> = v0
        .amplitudes()
        .iter()
        .zip(v1.amplitudes())
        .map(|(a0, a1)| (a0 + a1 * sign) * s)
        .collect();
    QuantumState::new(amps).expect("unit")
}

/// Exact step operator M_branch(x) = ⟨Φ_branch(x)| e^{iδH_PS} |σ(x)⟩.
pub fn step_operator(
    scheme: &ProbeScheme,
    x: f64,
    branch: i8,
    delta: f64,
) -> Result<Operator, SchemeError> {
    let joint = scheme.joint_exponential(delta);
    step_operator_with(scheme, &joint, x, branch, delta)
}

/// Same as [`step_operator`] with the joint exponential precomputed.
pub fn step_operator_with(
    scheme: &ProbeScheme,
    joint_exp: &Operator,
    x: f64,
    branch: i8,
    delta: f64,
) -> Result<Operator, SchemeError> {
    let sigma = build_probe_state(scheme, x, delta);
    let det = detector_state(scheme, x, branch);
    Ok(probe_sandwich(&det, joint_exp, &sigma)?)
}
