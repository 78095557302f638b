//! Second-order analysis of the reversal product M∓(x±δ)M±(x): series expansion
//! terms, correction pulses applied at walk reversals, and the structural
//! admissibility checks on the interaction Hamiltonian.
//!
//! All formulas are stated in the probe-frame variables (see
//! [`crate::probe::frame_triple`]): H1 couples to the detector axis, H2 to the
//! third triad direction, and the O(δ) coefficient is K = n1·H + H_S. The exact
//! product expands as
//!
//!   M∓(x±δ) M±(x) = 1/2 + iδK − (δ²/2)·{A ± B + i(Ā ± B̄)} + O(δ³)
//!
//! with A, B Hermitian and Ā, B̄ Hermitian (entering through i·Ā, i·B̄).

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    hermitian_eig, hermitian_exp, proportionality_residual, LinalgError, Operator,
};
use crate::probe::{frame_triple, step_operator_with, FrameTriple, InteractionHamiltonian, ProbeScheme, SchemeError};

/// Finite-difference step for basis/warp derivatives when no analytic rate is
/// available.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ReversalError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The grouped O(δ) and O(δ²) terms of the reversal product at one pointer value.
#[derive(Debug, Clone)]
pub struct ExpansionTerms {
    /// K = n1·H + H_S: coefficient of iδ.
    pub h3_term: Operator,
    /// Constant Hermitian second-order term.
    pub a: Operator,
    /// Stochastic (±) Hermitian second-order term; traceless by construction.
    pub b: Operator,
    /// Constant term entering as i·Ā.
    pub abar: Operator,
    /// Stochastic term entering as ±i·B̄.
    pub bbar: Operator,
}

fn real_scale(op: &Operator, s: f64) -> Operator {
    op.scale(Complex64::new(s, 0.0))
}

fn scaled_identity(dim: usize, s: f64) -> Operator {
    Operator::identity(dim).scale(Complex64::new(s, 0.0))
}

/// Derivative of the frame triple, from the scheme's analytic rotation rate
/// Ω (∂ₓH' = Ω × H') when available, otherwise by central finite differences.
fn frame_derivative(scheme: &ProbeScheme, x: f64, force_fd: bool) -> (Operator, Operator, Operator) {
    if !force_fd {
        if let Some(omega) = scheme.rotation_rate(x) {
            let t = frame_triple(scheme.hamiltonian(), &scheme.basis(x));
            let cross = |a: f64, oa: &Operator, b: f64, ob: &Operator| {
                real_scale(oa, a).sub(&real_scale(ob, b))
            };
            // [Ω × H']_i = Ω_{i+1} H'_{i+2} − Ω_{i+2} H'_{i+1}, cyclic.
            let d1 = cross(omega[1], &t.hz, omega[2], &t.hy);
            let d2 = cross(omega[2], &t.hx, omega[0], &t.hz);
            let d3 = cross(omega[0], &t.hy, omega[1], &t.hx);
            return (d1, d2, d3);
        }
    }
    let h = FD_STEP;
    let tp = frame_triple(scheme.hamiltonian(), &scheme.basis(x + h));
    let tm = frame_triple(scheme.hamiltonian(), &scheme.basis(x - h));
    let diff = |a: &Operator, b: &Operator| real_scale(&a.sub(b), 1.0 / (2.0 * h));
    (
        diff(&tp.hx, &tm.hx),
        diff(&tp.hy, &tm.hy),
        diff(&tp.hz, &tm.hz),
    )
}

fn warp_derivatives(scheme: &ProbeScheme, x: f64) -> (f64, f64) {
    let h = FD_STEP;
    let cc = |x: f64| scheme.warp_c(x) * scheme.warp_psi(x).cos();
    let cs = |x: f64| scheme.warp_c(x) * scheme.warp_psi(x).sin();
    (
        (cc(x + h) - cc(x - h)) / (2.0 * h),
        (cs(x + h) - cs(x - h)) / (2.0 * h),
    )
}

/// Assemble the expansion terms at pointer value x.
pub fn expansion_terms(scheme: &ProbeScheme, x: f64) -> ExpansionTerms {
    expansion_terms_with(scheme, x, false)
}

/// Same, optionally forcing finite-difference derivatives even when the scheme
/// carries an analytic rotation rate.
pub fn expansion_terms_with(scheme: &ProbeScheme, x: f64, force_fd: bool) -> ExpansionTerms {
    let ih = scheme.hamiltonian();
    let basis = scheme.basis(x);
    let FrameTriple { hx: h1, hy: h2, hz } = frame_triple(ih, &basis);
    let k = hz.add(&ih.h_s);
    let (d1, d2, d3) = frame_derivative(scheme, x, force_fd);
    let dk = d3; // H_S is constant in x
    let c = scheme.warp_c(x);
    let psi = scheme.warp_psi(x);
    let (d_ccos, d_csin) = warp_derivatives(scheme, x);
    let dim = ih.dim();

    // A = 2H2² + 2K² + i[H1,H2] − ∂ₓH2 − 4c·cosψ·H2 + (c²(1+cos2ψ) + ∂ₓ(c·cosψ))·1
    let a = real_scale(&h2.mul(&h2), 2.0)
        .add(&real_scale(&k.mul(&k), 2.0))
        .add(&h1.commutator(&h2).scale(crate::linalg::I))
        .sub(&d2)
        .sub(&real_scale(&h2, 4.0 * c * psi.cos()))
        .add(&scaled_identity(
            dim,
            c * c * (1.0 + (2.0 * psi).cos()) + d_ccos,
        ));

    // B = −i[H2, K]
    let b = h2.commutator(&k).scale(-crate::linalg::I);

    // Ā = ∂ₓH1 − {H1,H2} − 4c·sinψ·H2 + (c²·sin2ψ + ∂ₓ(c·sinψ))·1
    let abar = d1
        .sub(&h1.anticommutator(&h2))
        .sub(&real_scale(&h2, 4.0 * c * psi.sin()))
        .add(&scaled_identity(dim, c * c * (2.0 * psi).sin() + d_csin));

    // B̄ = −∂ₓK − i[K, H1]
    let bbar = dk.scale(-Complex64::ONE).sub(&k.commutator(&h1).scale(crate::linalg::I));

    ExpansionTerms {
        h3_term: k,
        a,
        b,
        abar,
        bbar,
    }
}

/// Series right-hand side 1/2 + iδK − (δ²/2)(A + sB + i(Ā + sB̄)) for branch s.
pub fn expansion_series(terms: &ExpansionTerms, delta: f64, branch: i8) -> Operator {
    let s = branch as f64;
    let dim = terms.h3_term.dim();
    let second = terms
        .a
        .add(&real_scale(&terms.b, s))
        .add(
            &terms
                .abar
                .add(&real_scale(&terms.bbar, s))
                .scale(crate::linalg::I),
        );
    scaled_identity(dim, 0.5)
        .add(&terms.h3_term.scale(crate::linalg::I * delta))
        .sub(&second.scale(Complex64::new(delta * delta / 2.0, 0.0)))
}

/// Exact reversal product M_{−b}(x + bδ) M_b(x).
pub fn reversal_product(
    scheme: &ProbeScheme,
    x: f64,
    branch: i8,
    delta: f64,
) -> Result<Operator, ReversalError> {
    let joint = scheme.joint_exponential(delta);
    let first = step_operator_with(scheme, &joint, x, branch, delta)?;
    let second = step_operator_with(
        scheme,
        &joint,
        x + branch as f64 * delta,
        -branch,
        delta,
    )?;
    Ok(second.mul(&first))
}

/// Frobenius distance between the exact reversal product and the series, for
/// the (+ first, − first) branches.
pub fn verify_expansion(
    scheme: &ProbeScheme,
    x: f64,
    delta: f64,
) -> Result<(f64, f64), ReversalError> {
    let terms = expansion_terms(scheme, x);
    let mut out = [0.0f64; 2];
    for (slot, branch) in [(0usize, 1i8), (1, -1)] {
        let exact = reversal_product(scheme, x, branch, delta)?;
        let series = expansion_series(&terms, delta, branch);
        out[slot] = exact.sub(&series).frobenius_norm();
    }
    Ok((out[0], out[1]))
}

/// Weak unitary correction pulse applied after a reversal:
/// exp(s1·2iδK) · exp(s2·iδ²(Ā + branch·B̄)), with the signs fixed per scheme.
pub fn correction_pulse(
    scheme: &ProbeScheme,
    x: f64,
    delta: f64,
    reversal_branch: i8,
) -> Result<Operator, ReversalError> {
    let terms = expansion_terms(scheme, x);
    correction_pulse_from_terms(&terms, scheme.pulse_signs, delta, reversal_branch)
}

pub fn correction_pulse_from_terms(
    terms: &ExpansionTerms,
    signs: (f64, f64),
    delta: f64,
    reversal_branch: i8,
) -> Result<Operator, ReversalError> {
    let (s1, s2) = signs;
    let first = hermitian_exp(&terms.h3_term, s1 * 2.0 * delta)?;
    let gen2 = terms
        .abar
        .add(&real_scale(&terms.bbar, reversal_branch as f64));
    let second = hermitian_exp(&gen2, s2 * delta * delta)?;
    Ok(first.mul(&second))
}

/// Choose the pulse signs that minimize the post-pulse proportionality residual
/// of the reversal product, evaluated once at x = 0 with δ = 0.05.
pub fn calibrate_pulse_signs(scheme: &ProbeScheme) -> Result<(f64, f64), ReversalError> {
    let delta = 0.05;
    let x = 0.0;
    let product = reversal_product(scheme, x, 1, delta)?;
    let terms = expansion_terms(scheme, x);
    let mut best = (-1.0, 1.0);
    let mut best_res = f64::INFINITY;
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            let pulse = correction_pulse_from_terms(&terms, (s1, s2), delta, 1)?;
            let (_, res) = proportionality_residual(&pulse.mul(&product));
            if res < best_res {
                best_res = res;
                best = (s1, s2);
            }
        }
    }
    Ok(best)
}

/// Joint eigenvalue triplets of commuting H_X, H_Y, H_Z.
#[derive(Debug, Clone)]
pub struct EigenTriplets {
    pub triplets: Vec<[f64; 3]>,
    /// Columns of the common eigenbasis.
    pub basis: Operator,
}

/// Fit summary for the parallel-line geometry of the eigentriplets.
#[derive(Debug, Clone)]
pub struct LineFit {
    /// Shared direction of the fitted line pair.
    pub direction: [f64; 3],
    /// Largest distance from a triplet to its assigned line.
    pub max_distance: f64,
    pub admissible: bool,
}

/// Structural admissibility report for an interaction Hamiltonian.
#[derive(Debug, Clone)]
pub struct StructuralReport {
    /// (‖[H_X,H_Y]‖_F, ‖[H_Y,H_Z]‖_F, ‖[H_X,H_Z]‖_F)
    pub commutator_norms: [f64; 3],
    pub commuting: bool,
    pub triplets: Option<EigenTriplets>,
    pub line_fit: Option<LineFit>,
    /// max_{j,x} |x_j(x)·y_j(x) − γ(x)| over the sampled grid, when a scheme is
    /// supplied (the linear-pulse constraint).
    pub pulse_constraint: Option<f64>,
    /// Residual (beyond identity) between the full A and its reduced form plus
    /// 2K²; nonzero values indicate an internal inconsistency worth flagging.
    pub a_reduction_residual: Option<f64>,
}

impl StructuralReport {
    pub fn admissible(&self, commutator_tol: f64) -> bool {
        self.commutator_norms.iter().all(|&n| n <= commutator_tol)
            && self.line_fit.as_ref().map(|f| f.admissible).unwrap_or(false)
    }
}

const COMMUTE_TOL: f64 = 1e-10;
const LINE_TOL: f64 = 1e-8;

/// Simultaneously diagonalize commuting Hermitian operators by nested
/// eigendecompositions within degenerate clusters.
fn common_eigenbasis(ops: &[&Operator]) -> Result<Operator, LinalgError> {
    let dim = ops[0].dim();
    let mut basis = Operator::identity(dim);
    // Clusters of column indices that are still degenerate for all operators
    // handled so far.
    let mut clusters: Vec<Vec<usize>> = vec![(0..dim).collect()];
    for op in ops {
        let mut next_clusters = Vec::new();
        for cluster in &clusters {
            if cluster.len() == 1 {
                next_clusters.push(cluster.clone());
                continue;
            }
            // Restrict op to the cluster subspace.
            let k = cluster.len();
            let mut sub = Operator::zeros(k);
            for (i, &ci) in cluster.iter().enumerate() {
                for (j, &cj) in cluster.iter().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for r in 0..dim {
                        for s in 0..dim {
                            acc += basis[(r, ci)].conj() * op[(r, s)] * basis[(s, cj)];
                        }
                    }
                    sub[(i, j)] = acc;
                }
            }
            let (vals, vecs) = hermitian_eig(&sub)?;
            // Rotate the basis columns of this cluster.
            let old: Vec<Vec<Complex64>> = cluster
                .iter()
                .map(|&c| (0..dim).map(|r| basis[(r, c)]).collect())
                .collect();
            for (jn, &cj) in cluster.iter().enumerate() {
                for r in 0..dim {
                    let mut acc = Complex64::ZERO;
                    for (io, col) in old.iter().enumerate() {
                        acc += col[r] * vecs[(io, jn)];
                    }
                    basis[(r, cj)] = acc;
                }
            }
            // Split the cluster by eigenvalue gaps.
            let mut start = 0;
            for i in 1..=k {
                if i == k || (vals[i] - vals[i - 1]).abs() > 1e-8 {
                    next_clusters.push(cluster[start..i].to_vec());
                    start = i;
                }
            }
        }
        clusters = next_clusters;
    }
    Ok(basis)
}

fn diagonal_in_basis(op: &Operator, basis: &Operator) -> Vec<f64> {
    let dim = op.dim();
    (0..dim)
        .map(|j| {
            let mut acc = Complex64::ZERO;
            for r in 0..dim {
                for s in 0..dim {
                    acc += basis[(r, j)].conj() * op[(r, s)] * basis[(s, j)];
                }
            }
            acc.re
        })
        .collect()
}

fn max_offdiagonal_in_basis(op: &Operator, basis: &Operator) -> f64 {
    let rotated = basis.adjoint().mul(op).mul(basis);
    let mut max = 0.0f64;
    for r in 0..op.dim() {
        for c in 0..op.dim() {
            if r != c {
                max = max.max(rotated[(r, c)].norm());
            }
        }
    }
    max
}

/// Fit the triplets to at most two parallel lines with a shared direction.
fn fit_parallel_lines(triplets: &[[f64; 3]]) -> LineFit {
    let n = triplets.len();
    if n <= 2 {
        // One or two points always fit (a line per point).
        return LineFit {
            direction: [0.0, 0.0, 1.0],
            max_distance: 0.0,
            admissible: true,
        };
    }
    let mut best = LineFit {
        direction: [0.0, 0.0, 0.0],
        max_distance: f64::INFINITY,
        admissible: false,
    };
    // Enumerate assignments into two groups (order irrelevant, empty allowed:
    // that is the single-line case). n ≤ 8 keeps this tiny.
    for mask in 0..(1u32 << (n - 1)) {
        let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (j, _) in triplets.iter().enumerate() {
            let g = if j == 0 { 0 } else { ((mask >> (j - 1)) & 1) as usize };
            groups[g].push(j);
        }
        // Pooled within-group scatter matrix.
        let mut means = [[0.0f64; 3]; 2];
        for (g, group) in groups.iter().enumerate() {
            for &j in group {
                for (d, m) in means[g].iter_mut().enumerate() {
                    *m += triplets[j][d];
                }
            }
            if !group.is_empty() {
                for m in means[g].iter_mut() {
                    *m /= group.len() as f64;
                }
            }
        }
        let mut scatter = [[0.0f64; 3]; 3];
        for (g, group) in groups.iter().enumerate() {
            for &j in group {
                let dev: Vec<f64> = (0..3).map(|d| triplets[j][d] - means[g][d]).collect();
                for r in 0..3 {
                    for c in 0..3 {
                        scatter[r][c] += dev[r] * dev[c];
                    }
                }
            }
        }
        // Dominant eigenvector of the symmetric scatter.
        let mut s = Operator::zeros(3);
        for r in 0..3 {
            for c in 0..3 {
                s[(r, c)] = Complex64::new(scatter[r][c], 0.0);
            }
        }
        let (vals, vecs) = hermitian_eig(&s).expect("scatter is symmetric");
        let top = vals.len() - 1;
        let dir = [vecs[(0, top)].re, vecs[(1, top)].re, vecs[(2, top)].re];
        let dn = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let dir = if dn > 1e-300 {
            [dir[0] / dn, dir[1] / dn, dir[2] / dn]
        } else {
            [0.0, 0.0, 1.0]
        };
        // Max perpendicular distance to the group line through the mean.
        let mut max_d = 0.0f64;
        for (g, group) in groups.iter().enumerate() {
            for &j in group {
                let dev: Vec<f64> = (0..3).map(|d| triplets[j][d] - means[g][d]).collect();
                let along = dev[0] * dir[0] + dev[1] * dir[1] + dev[2] * dir[2];
                let perp2 =
                    dev.iter().map(|v| v * v).sum::<f64>() - along * along;
                max_d = max_d.max(perp2.max(0.0).sqrt());
            }
        }
        if max_d < best.max_distance {
            best = LineFit {
                direction: dir,
                max_distance: max_d,
                admissible: max_d <= LINE_TOL,
            };
        }
    }
    best
}

/// Structural checks on the Hamiltonian blocks; the optional scheme and
/// interval activate the x-dependent linear-pulse constraint scan.
pub fn structural_checks(
    h: &InteractionHamiltonian,
    scheme: Option<(&ProbeScheme, f64, f64)>,
) -> Result<StructuralReport, ReversalError> {
    let cxy = h.h_x.commutator(&h.h_y).frobenius_norm();
    let cyz = h.h_y.commutator(&h.h_z).frobenius_norm();
    let cxz = h.h_x.commutator(&h.h_z).frobenius_norm();
    let scale = h
        .h_x
        .frobenius_norm()
        .max(h.h_y.frobenius_norm())
        .max(h.h_z.frobenius_norm())
        .max(1.0);
    let commuting = cxy <= COMMUTE_TOL * scale && cyz <= COMMUTE_TOL * scale && cxz <= COMMUTE_TOL * scale;

    let mut report = StructuralReport {
        commutator_norms: [cxy, cyz, cxz],
        commuting,
        triplets: None,
        line_fit: None,
        pulse_constraint: None,
        a_reduction_residual: None,
    };
    if !commuting {
        return Ok(report);
    }

    let basis = common_eigenbasis(&[&h.h_x, &h.h_y, &h.h_z])?;
    let max_off = [
        max_offdiagonal_in_basis(&h.h_x, &basis),
        max_offdiagonal_in_basis(&h.h_y, &basis),
        max_offdiagonal_in_basis(&h.h_z, &basis),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    if max_off > 1e-8 * scale {
        // Should not happen for genuinely commuting blocks; treat as non-commuting.
        report.commuting = false;
        return Ok(report);
    }
    let dx = diagonal_in_basis(&h.h_x, &basis);
    let dy = diagonal_in_basis(&h.h_y, &basis);
    let dz = diagonal_in_basis(&h.h_z, &basis);
    let triplets: Vec<[f64; 3]> = (0..h.dim()).map(|j| [dx[j], dy[j], dz[j]]).collect();
    report.line_fit = Some(fit_parallel_lines(&triplets));

    if let Some((scheme, x_lo, x_hi)) = scheme {
        let samples = 200;
        let mut max_dev = 0.0f64;
        let mut max_red = 0.0f64;
        for k in 0..samples {
            let x = x_lo + (x_hi - x_lo) * (k as f64) / ((samples - 1) as f64);
            let t = frame_triple(scheme.hamiltonian(), &scheme.basis(x));
            let xs = diagonal_in_basis(&t.hx, &basis);
            let ys = diagonal_in_basis(&t.hy, &basis);
            let gamma: f64 =
                xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / (h.dim() as f64);
            for j in 0..h.dim() {
                max_dev = max_dev.max((xs[j] * ys[j] - gamma).abs());
            }
            // Consistency of the full A against the reduced form + 2K².
            let terms = expansion_terms(scheme, x);
            let k_sq = real_scale(&terms.h3_term.mul(&terms.h3_term), 2.0);
            let c = scheme.warp_c(x);
            let psi = scheme.warp_psi(x);
            let reduced = real_scale(&t.hy.mul(&t.hy), 2.0)
                .add(&t.hx.commutator(&t.hy).scale(crate::linalg::I))
                .sub(&frame_derivative(scheme, x, false).1)
                .sub(&real_scale(&t.hy, 4.0 * c * psi.cos()));
            let (_, res) = proportionality_residual(&terms.a.sub(&k_sq).sub(&reduced));
            max_red = max_red.max(res);
        }
        report.pulse_constraint = Some(max_dev);
        report.a_reduction_residual = Some(max_red);
    }

    report.triplets = Some(EigenTriplets { triplets, basis });
    Ok(report)
}
