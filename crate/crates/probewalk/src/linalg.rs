//! Dense complex linear algebra for small dimensions (probe dim 2, system dim ≤ ~8).
//!
//! Everything here is exact to solver precision: matrix exponentials go through a
//! full Hermitian eigendecomposition rather than a truncated series, so unitarity
//! and measurement completeness hold at the 1e-12 level in the rest of the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Imaginary unit.
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative Frobenius tolerance for the Hermiticity predicate.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Absolute Frobenius tolerance for the unitarity predicate.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("operator is not Hermitian: anti-Hermitian part has norm {norm:.3e}")]
    NotHermitian { norm: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {offdiag:.3e})")]
    NoConvergence { sweeps: usize, offdiag: f64 },
    #[error("state has zero norm")]
    ZeroNorm,
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator {
            dim,
            entries: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m[(k, k)] = Complex64::ONE;
        }
        m
    }

    /// Build from row-major complex entries.
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), dim * dim, "entry count must be dim^2");
        Operator { dim, entries }
    }

    /// Build from nested rows of (re, im) pairs; convenience for tests and config.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "rows must form a square matrix");
            entries.extend_from_slice(row);
        }
        Operator { dim, entries }
    }

    pub fn diag(values: &[Complex64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (k, v) in values.iter().enumerate() {
            m[(k, k)] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn adjoint(&self) -> Operator {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(r, c)] = self[(c, r)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Operator {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(r, c)] = self[(c, r)];
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Operator {
        Operator {
            dim: self.dim,
            entries: self.entries.iter().map(|e| e * s).collect(),
        }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim);
        Operator {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim);
        Operator {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn mul(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == Complex64::ZERO {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn apply(&self, state: &QuantumState) -> QuantumState {
        assert_eq!(self.dim, state.dim());
        let n = self.dim;
        let mut amps = vec![Complex64::ZERO; n];
        for r in 0..n {
            let mut acc = Complex64::ZERO;
            for c in 0..n {
                acc += self[(r, c)] * state.amplitudes()[c];
            }
            amps[r] = acc;
        }
        QuantumState::from_amplitudes_unchecked(amps)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self[(k, k)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn anticommutator(&self, other: &Operator) -> Operator {
        self.mul(other).add(&other.mul(self))
    }

    /// ‖M − M†‖_F ≤ HERMITIAN_TOL · ‖M‖_F (zero matrices count as Hermitian).
    pub fn is_hermitian(&self) -> bool {
        let dev = self.sub(&self.adjoint()).frobenius_norm();
        let scale = self.frobenius_norm();
        dev <= HERMITIAN_TOL * scale.max(1.0)
    }

    /// ‖U†U − 1‖_F ≤ UNITARY_TOL.
    pub fn is_unitary(&self) -> bool {
        let dev = self
            .adjoint()
            .mul(self)
            .sub(&Operator::identity(self.dim))
            .frobenius_norm();
        dev <= UNITARY_TOL
    }

    /// Largest singular value (used for product renormalization).
    pub fn spectral_norm(&self) -> f64 {
        self.singular_values().last().copied().unwrap_or(0.0)
    }

    /// Singular values in ascending order, via the Hermitian eigenvalues of M†M.
    pub fn singular_values(&self) -> Vec<f64> {
        let gram = self.adjoint().mul(self);
        let (vals, _) = hermitian_eig(&gram).expect("gram matrix is Hermitian by construction");
        vals.iter().map(|&v| v.max(0.0).sqrt()).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Operator {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.entries[r * self.dim + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Operator {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[r * self.dim + c]
    }
}

/// Pauli X on a qubit.
pub fn pauli_x() -> Operator {
    Operator::from_entries(
        2,
        vec![Complex64::ZERO, Complex64::ONE, Complex64::ONE, Complex64::ZERO],
    )
}

/// Pauli Y on a qubit.
pub fn pauli_y() -> Operator {
    Operator::from_entries(2, vec![Complex64::ZERO, -I, I, Complex64::ZERO])
}

/// Pauli Z on a qubit.
pub fn pauli_z() -> Operator {
    Operator::from_entries(
        2,
        vec![Complex64::ONE, Complex64::ZERO, Complex64::ZERO, -Complex64::ONE],
    )
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Returns (eigenvalues ascending, unitary U with eigenvectors as columns) so that
/// H = U diag(λ) U†. Accurate to ~1e-14 at the dimensions used here.
pub fn hermitian_eig(h: &Operator) -> Result<(Vec<f64>, Operator), LinalgError> {
    // Gate two orders looser than the is_hermitian predicate: inputs assembled
    // from long products of Hermitian factors carry ~1e-12 representation
    // noise, which the internal Hermitization absorbs.
    let anti = h.sub(&h.adjoint()).frobenius_norm();
    if anti > 1e-10 * h.frobenius_norm().max(1.0) {
        return Err(LinalgError::NotHermitian { norm: anti / 2.0 });
    }
    let n = h.dim;
    // Work on the Hermitian average to kill representation noise.
    let mut a = h.add(&h.adjoint()).scale(Complex64::new(0.5, 0.0));
    let mut u = Operator::identity(n);

    let max_sweeps = 60;
    let mut sweeps = 0;
    loop {
        let mut off = 0.0f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[(r, c)].norm_sqr();
            }
        }
        let off = (2.0 * off).sqrt();
        // Strictly relative threshold: an absolute floor would silently skip
        // rotations on small-norm matrices (e.g. Gram matrices of long
        // unnormalized step-operator products).
        if off <= 1e-14 * a.frobenius_norm() || off < 1e-300 {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(LinalgError::NoConvergence {
                sweeps,
                offdiag: off,
            });
        }
        sweeps += 1;

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() < 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let abs = apq.norm();
                let phase = apq / abs; // e^{i arg}
                // Classical Jacobi angle for the 2x2 block [[app, abs],[abs, aqq]]
                // after factoring out the phase.
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Column rotation G: col_p' = c*col_p - conj(s*phase)*col_q ... applied as A <- G† A G.
                let sp = phase * s;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * sp.conj();
                    a[(k, q)] = akp * sp + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * sp;
                    a[(q, k)] = apk * sp.conj() + aqk * c;
                }
                for k in 0..n {
                    let ukp = u[(k, p)];
                    let ukq = u[(k, q)];
                    u[(k, p)] = ukp * c - ukq * sp.conj();
                    u[(k, q)] = ukp * sp + ukq * c;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|k| (a[(k, k)].re, k)).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vecs = Operator::zeros(n);
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for r in 0..n {
            vecs[(r, new_col)] = u[(r, *old_col)];
        }
    }
    Ok((vals, vecs))
}

/// e^{itH} for Hermitian H, by exact eigendecomposition.
pub fn hermitian_exp(h: &Operator, t: f64) -> Result<Operator, LinalgError> {
    let (vals, u) = hermitian_eig(h)?;
    let n = h.dim;
    let mut out = Operator::zeros(n);
    // U diag(e^{itλ}) U†
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                let ph = Complex64::from_polar(1.0, t * vals[k]);
                acc += u[(r, k)] * ph * u[(c, k)].conj();
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Kronecker product with the probe factor first (probe ⊗ system, probe is the
/// slow index). This ordering is fixed for the whole crate.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = Operator::zeros(n);
    for ra in 0..na {
        for ca in 0..na {
            let f = a[(ra, ca)];
            if f == Complex64::ZERO {
                continue;
            }
            for rb in 0..nb {
                for cb in 0..nb {
                    out[(ra * nb + rb, ca * nb + cb)] = f * b[(rb, cb)];
                }
            }
        }
    }
    out
}

/// Contract a joint probe⊗system operator with probe bra/ket states:
/// M_{mn} = Σ_{jk} conj(bra_j) U_{(j,m),(k,n)} ket_k.
pub fn probe_sandwich(
    bra: &QuantumState,
    joint: &Operator,
    ket: &QuantumState,
) -> Result<Operator, LinalgError> {
    if bra.dim() != 2 || ket.dim() != 2 {
        return Err(LinalgError::DimensionMismatch {
            left: bra.dim(),
            right: 2,
        });
    }
    if !joint.dim.is_multiple_of(2) {
        return Err(LinalgError::DimensionMismatch {
            left: joint.dim,
            right: 2,
        });
    }
    let d = joint.dim / 2;
    let mut out = Operator::zeros(d);
    for m in 0..d {
        for n in 0..d {
            let mut acc = Complex64::ZERO;
            for j in 0..2 {
                for k in 0..2 {
                    acc += bra.amplitudes()[j].conj()
                        * joint[(j * d + m, k * d + n)]
                        * ket.amplitudes()[k];
                }
            }
            out[(m, n)] = acc;
        }
    }
    Ok(out)
}

/// Frobenius-optimal identity coefficient and the remaining residual:
/// lambda = tr(M)/dim, residual = ‖M − lambda·1‖_F.
pub fn proportionality_residual(m: &Operator) -> (Complex64, f64) {
    let lambda = m.trace() / (m.dim as f64);
    let residual = m
        .sub(&Operator::identity(m.dim).scale(lambda))
        .frobenius_norm();
    (lambda, residual)
}

/// Least-squares proportionality between two operators:
/// the λ minimizing ‖a − λ·b‖_F, and the minimized relative residual
/// ‖a − λ·b‖_F / ‖a‖_F.
pub fn mutual_proportionality_residual(a: &Operator, b: &Operator) -> (Complex64, f64) {
    let mut num = Complex64::ZERO;
    let mut den = 0.0f64;
    for (ea, eb) in a.entries.iter().zip(&b.entries) {
        num += eb.conj() * ea;
        den += eb.norm_sqr();
    }
    if den == 0.0 {
        return (Complex64::ZERO, a.frobenius_norm());
    }
    let lambda = num / den;
    let res = a.sub(&b.scale(lambda)).frobenius_norm();
    let scale = a.frobenius_norm().max(1e-300);
    (lambda, res / scale)
}

/// Default absolute gap for singular-value clustering; endpoint operators are
/// normalized to unit spectral norm, so an absolute scale is meaningful.
pub const DEFAULT_SV_GAP_TOL: f64 = 1e-6;

/// Number of clusters of singular values when sorted values are grouped with
/// gaps larger than `tol` (absolute).
pub fn distinct_singular_values(m: &Operator, tol: f64) -> usize {
    assert!(tol > 0.0, "tolerance must be positive");
    let sv = m.singular_values();
    if sv.is_empty() {
        return 0;
    }
    let mut clusters = 1;
    for w in sv.windows(2) {
        if (w[1] - w[0]).abs() > tol {
            clusters += 1;
        }
    }
    clusters
}

/// Normalized complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// Normalizes on construction; errors on an all-zero vector.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self, LinalgError> {
        let mut s = QuantumState { amplitudes };
        s.normalize()?;
        Ok(s)
    }

    pub(crate) fn from_amplitudes_unchecked(amplitudes: Vec<Complex64>) -> Self {
        QuantumState { amplitudes }
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; dim];
        amps[index] = Complex64::ONE;
        QuantumState { amplitudes: amps }
    }

    /// (|0⟩ + |1⟩)/√2.
    pub fn plus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        QuantumState {
            amplitudes: vec![h, h],
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64, LinalgError> {
        let n = self.norm();
        if n < 1e-150 {
            return Err(LinalgError::ZeroNorm);
        }
        for a in &mut self.amplitudes {
            *a /= n;
        }
        Ok(n)
    }

    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩|² — global-phase-insensitive overlap.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Overlap maximized over a free diagonal phase on every component:
    /// Σ_k |conj(a_k) b_k|, squared. Equals ordinary fidelity when both states
    /// have definite relative phases.
    pub fn diag_phase_fitted_fidelity(&self, other: &QuantumState) -> f64 {
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a.conj() * b).norm())
            .sum();
        s * s
    }
}

/// Real 3-vector on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> BlochVector {
        let n = self.norm();
        BlochVector::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &BlochVector) -> BlochVector {
        BlochVector::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn scale(&self, s: f64) -> BlochVector {
        BlochVector::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, other: &BlochVector) -> BlochVector {
        BlochVector::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    /// Bloch vector of a pure qubit state.
    pub fn from_state(state: &QuantumState) -> Self {
        assert_eq!(state.dim(), 2, "Bloch vectors describe qubits");
        let a = state.amplitudes()[0];
        let b = state.amplitudes()[1];
        let cross = a.conj() * b;
        BlochVector::new(2.0 * cross.re, 2.0 * cross.im, a.norm_sqr() - b.norm_sqr())
    }

    /// Pure qubit state with this Bloch vector, phase convention
    /// (cos θ/2, e^{iφ} sin θ/2).
    pub fn to_state(&self) -> QuantumState {
        let v = self.normalized();
        let theta = v.z.clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x);
        let a = Complex64::new((theta / 2.0).cos(), 0.0);
        let b = Complex64::from_polar((theta / 2.0).sin(), phi);
        QuantumState {
            amplitudes: vec![a, b],
        }
    }
}
