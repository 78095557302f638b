//! The worked diagonal-qubit scheme: a generalized measurement
//! {W1·diag(α,β), W2·diag(√(1−α²),√(1−β²))} decomposed into a probe-feedback
//! walk with the fixed interaction Z⊗Z.
//!
//! The construction uses a two-knob warp c(x) = (tanh(x−a) + tanh(x−b))/2
//! and the exponential flow y ∝ e^{−4∫c_eff}, with (a, b) calibrated against
//! the exact first-passage equations so the realized endpoint magnitudes
//! equal (α, β) to solver precision:
//!
//!   e^{4∫₀^X y} = β²/α²,   e^{4∫_{−X}^0 y} = (1−α²)/(1−β²),
//!
//! where y = (tanh(x−b) − tanh(x−a))/2 is the eigenvalue flow of the rotated
//! block and the probe tilt is c_eff = c/2 (the tilt that makes y' = −4·c_eff·y
//! hold identically). A final Newton polish against the discrete-δ absorption
//! probabilities removes the O(δ) walk bias at the configured step size.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{pauli_z, BlochVector, Operator, QuantumState};
use crate::probe::{InteractionHamiltonian, ProbeBasis, ProbeScheme, SchemeError};
use crate::reversal::{calibrate_pulse_signs, ReversalError};
use crate::riccati::RiccatiProblem;
use crate::walk::hit_probability_up;

#[derive(Debug, Error)]
pub enum ZzError {
    #[error(
        "target {name} = {value} infeasible at boundary X = {x}: |2·{name} − 1| = {bias:.6} ≥ tanh X = {tanh_x:.6}; \
         need X > {min_x:.6}"
    )]
    Infeasible {
        name: &'static str,
        value: f64,
        x: f64,
        bias: f64,
        tanh_x: f64,
        min_x: f64,
    },
    #[error("{name} must lie in (0,1), got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("calibration did not converge: residual {residual:.3e} after {iters} iterations")]
    CalibrationFailed { residual: f64, iters: usize },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Reversal(#[from] ReversalError),
}

/// A generalized diagonal qubit measurement target.
#[derive(Debug, Clone, Copy)]
pub struct DiagonalTarget {
    pub alpha: f64,
    pub beta: f64,
    /// Diagonal-phase angle of W1 = e^{iθZ}; informational, the walk realizes
    /// its own θ which the scheme reports.
    pub theta: f64,
}

impl DiagonalTarget {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ZzError> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ZzError::OutOfRange { name, value: v });
            }
        }
        Ok(DiagonalTarget {
            alpha,
            beta,
            theta: 0.0,
        })
    }

    /// The target pair (M1, M2); complete by construction.
    pub fn operators(&self) -> (Operator, Operator) {
        let w1 = Operator::diag(&[
            Complex64::from_polar(1.0, self.theta),
            Complex64::from_polar(1.0, -self.theta),
        ]);
        let w2 = Operator::diag(&[
            Complex64::from_polar(1.0, -self.theta),
            Complex64::from_polar(1.0, self.theta),
        ]);
        let m1 = w1.mul(&Operator::diag(&[
            Complex64::new(self.alpha, 0.0),
            Complex64::new(self.beta, 0.0),
        ]));
        let m2 = w2.mul(&Operator::diag(&[
            Complex64::new((1.0 - self.alpha * self.alpha).sqrt(), 0.0),
            Complex64::new((1.0 - self.beta * self.beta).sqrt(), 0.0),
        ]));
        (m1, m2)
    }
}

/// Walk parameters of a built scheme: calibrated shift knobs, boundary and step.
#[derive(Debug, Clone, Copy)]
pub struct ZzSchemeParams {
    pub a: f64,
    pub b: f64,
    pub boundary: f64,
    pub delta: f64,
}

fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (1.0 + (-2.0 * a).exp()).ln() - std::f64::consts::LN_2
}

/// The two-shift warp profile c(x) = ½(tanh(x−a) + tanh(x−b)).
pub fn warp_c(x: f64, a: f64, b: f64) -> f64 {
    0.5 * ((x - a).tanh() + (x - b).tanh())
}

/// Closed form of ∫₀ˣ c: ½·ln(cosh(x−a)·cosh(x−b)/(cosh a·cosh b)).
pub fn warp_c_integral(x: f64, a: f64, b: f64) -> f64 {
    0.5 * (ln_cosh(x - a) + ln_cosh(x - b) - ln_cosh(a) - ln_cosh(b))
}

/// The closed shift formula a = ln√((tanh X + (2α−1))/(tanh X − (2α−1))),
/// applied to both targets; kept as the reference parametrization alongside
/// the calibrated shifts. Errors name the minimum feasible boundary.
pub fn ab_from_target(alpha: f64, beta: f64, x_max: f64) -> Result<(f64, f64), ZzError> {
    let t = x_max.tanh();
    let formula = |name: &'static str, v: f64| -> Result<f64, ZzError> {
        if !(v > 0.0 && v < 1.0) {
            return Err(ZzError::OutOfRange { name, value: v });
        }
        let bias = (2.0 * v - 1.0).abs();
        if bias >= t {
            return Err(ZzError::Infeasible {
                name,
                value: v,
                x: x_max,
                bias,
                tanh_x: t,
                min_x: bias.atanh(),
            });
        }
        Ok(0.5 * ((t + (2.0 * v - 1.0)) / (t - (2.0 * v - 1.0))).ln())
    };
    Ok((formula("alpha", alpha)?, formula("beta", beta)?))
}

/// Eigenvalue flow of the rotated measurement block for shifts (a, b):
/// y(x) = ½(tanh(x−b) − tanh(x−a)). One-signed whenever a ≠ b.
pub fn flow_y(x: f64, a: f64, b: f64) -> f64 {
    0.5 * ((x - b).tanh() - (x - a).tanh())
}

/// Probe tilt that keeps the flow reversible: c_eff = ¼(tanh(x−a)+tanh(x−b)),
/// satisfying y' = −4·c_eff·y identically.
pub fn effective_warp(x: f64, a: f64, b: f64) -> f64 {
    0.25 * ((x - a).tanh() + (x - b).tanh())
}

/// ∫₀ˣ y in closed form.
fn flow_integral(x: f64, a: f64, b: f64) -> f64 {
    0.5 * (ln_cosh(x - b) - ln_cosh(b) - ln_cosh(x - a) + ln_cosh(a))
}

/// A fully calibrated worked scheme.
#[derive(Debug, Clone)]
pub struct ZzScheme {
    pub target: DiagonalTarget,
    pub params: ZzSchemeParams,
    /// The reference-formula values of (a, b) from [`ab_from_target`].
    pub formula_ab: (f64, f64),
    probe: ProbeScheme,
    /// ∫₀^X n_transverse and ∫_{−X}^0 n_transverse: the realized diagonal
    /// phases of the two endpoint operators.
    pub theta_plus: f64,
    pub theta_minus: f64,
}

impl ZzScheme {
    pub fn probe_scheme(&self) -> &ProbeScheme {
        &self.probe
    }

    pub fn flow_y(&self, x: f64) -> f64 {
        flow_y(x, self.params.a, self.params.b)
    }

    pub fn effective_warp(&self, x: f64) -> f64 {
        effective_warp(x, self.params.a, self.params.b)
    }

    /// Transverse Bloch component √(1 − y²), positive branch (continuous).
    pub fn transverse(&self, x: f64) -> f64 {
        let y = self.flow_y(x);
        (1.0 - y * y).max(0.0).sqrt()
    }

    /// Analytic endpoint operators: diagonal magnitudes are exactly
    /// (α, β) and (√(1−α²), √(1−β²)); phases come from integrating the
    /// transverse component over each half-walk.
    pub fn endpoint_operators(&self) -> (Operator, Operator) {
        let t = &self.target;
        let m1 = Operator::diag(&[
            Complex64::from_polar(t.alpha, self.theta_plus),
            Complex64::from_polar(t.beta, -self.theta_plus),
        ]);
        let m2 = Operator::diag(&[
            Complex64::from_polar((1.0 - t.alpha * t.alpha).sqrt(), -self.theta_minus),
            Complex64::from_polar((1.0 - t.beta * t.beta).sqrt(), self.theta_minus),
        ]);
        (m1, m2)
    }

    /// Born probability of outcome 1 for an initial state.
    pub fn born_probability_plus(&self, state: &QuantumState) -> f64 {
        let (m1, _) = self.endpoint_operators();
        m1.apply(state).norm().powi(2)
    }

    /// The Riccati problem governing the diagonal flow of this scheme.
    pub fn riccati_problem(&self) -> RiccatiProblem {
        let (a, b) = (self.params.a, self.params.b);
        let x = self.params.boundary;
        RiccatiProblem::new(
            move |x| {
                let y = flow_y(x, a, b);
                -2.0 * y * y
            },
            move |x| -4.0 * effective_warp(x, a, b),
            |_| 2.0,
            move |x| flow_y(x, a, b),
            -x - 0.5,
            x + 0.5,
        )
        .expect("the flow satisfies its own Riccati equation")
    }
}

fn zz_hamiltonian() -> InteractionHamiltonian {
    InteractionHamiltonian::new(
        Operator::zeros(2),
        Operator::zeros(2),
        Operator::zeros(2),
        pauli_z(),
    )
    .expect("Pauli blocks are Hermitian")
}

/// Triad for shifts (a, b): probe along x̂, detector at (0, y, ñ), third axis
/// (0, −ñ, y). The probe stays orthogonal to the interaction axis, which is
/// what lets Z⊗Z pump outcome information into the walk.
fn make_basis_fn(a: f64, b: f64) -> impl Fn(f64) -> ProbeBasis + Send + Sync + Clone {
    move |x: f64| {
        let y = flow_y(x, a, b);
        let n = (1.0 - y * y).max(0.0).sqrt();
        let n1 = BlochVector::new(1.0, 0.0, 0.0);
        let n2 = BlochVector::new(0.0, y, n);
        let n3 = BlochVector::new(0.0, -n, y);
        ProbeBasis::new(n1, n2, n3).expect("triad is orthonormal by construction")
    }
}

fn make_probe_scheme(a: f64, b: f64) -> ProbeScheme {
    ProbeScheme::new(
        zz_hamiltonian(),
        make_basis_fn(a, b),
        move |x| effective_warp(x, a, b),
        |_| 0.0,
    )
    .with_rotation_rate(move |x| {
        let y = flow_y(x, a, b);
        let n = (1.0 - y * y).max(0.0).sqrt();
        // y' = −4·c_eff·y; Ω = (0, 0, y'/ñ) satisfies ∂ₓH' = Ω × H'.
        [0.0, 0.0, -4.0 * effective_warp(x, a, b) * y / n]
    })
}

/// Discrete absorption probability for the system eigenstate picked by
/// `entry` (0 or 1), from the exact step-operator entries at step δ.
fn discrete_hit_up(a: f64, b: f64, x_max: f64, delta: f64, joint: &Operator, entry: usize) -> f64 {
    let scheme = make_probe_scheme(a, b);
    let k_total = (2.0 * x_max / delta).round() as usize;
    let mut p_up = Vec::with_capacity(k_total.saturating_sub(1));
    for k in 1..k_total {
        let x = -x_max + k as f64 * delta;
        let m_plus = crate::probe::step_operator_with(&scheme, joint, x, 1, delta)
            .expect("step operator");
        let p = m_plus[(entry, entry)].norm_sqr();
        p_up.push(p);
    }
    hit_probability_up(&p_up, k_total / 2)
}

/// Build and calibrate the worked scheme for a diagonal target.
pub fn build_zz_scheme(
    target: DiagonalTarget,
    x_max: f64,
    delta: f64,
) -> Result<ZzScheme, ZzError> {
    let formula_ab = ab_from_target(target.alpha, target.beta, x_max)?;
    let (alpha, beta) = (target.alpha, target.beta);

    // Continuum design equations.
    let y_star = 0.5 * (beta / alpha).ln();
    let w_star = 0.25 * ((1.0 - alpha * alpha) / (1.0 - beta * beta)).ln();

    let (mut a, mut b);
    if (alpha - beta).abs() < 1e-12 {
        // Degenerate target: zero flow, pure drift. a = b, solved so the
        // drift-only hit probability equals α².
        let aa = solve_drift_only(alpha, x_max);
        a = aa;
        b = aa;
    } else {
        // Seed from the large-X closed forms, then Newton on the exact ones.
        let s = y_star + w_star; // a − b in the large-X limit
        let diff = y_star - w_star; // ln cosh a − ln cosh b
        let mut lo = -30.0f64;
        let mut hi = 30.0f64;
        let g = |bb: f64| ln_cosh(bb + s) - ln_cosh(bb) - diff;
        // g is monotone with slope sign = sign(s).
        let (mut glo, ghi) = (g(lo), g(hi));
        if glo.signum() == ghi.signum() {
            // Fall back to a symmetric seed; Newton below still polishes.
            b = -s / 2.0;
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    break;
                }
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            b = 0.5 * (lo + hi);
        }
        a = b + s;

        // Newton on (Y(a,b) − Y*, W(a,b) − W*).
        let residual = |a: f64, b: f64| {
            let y = flow_integral(x_max, a, b);
            let w = -flow_integral(-x_max, a, b);
            (y - y_star, w - w_star)
        };
        let mut converged = false;
        for iter in 0..80 {
            let (r1, r2) = residual(a, b);
            let norm = (r1 * r1 + r2 * r2).sqrt();
            if norm < 1e-13 {
                converged = true;
                break;
            }
            // Analytic Jacobian of (Y, W) in (a, b).
            let j11 = 0.5 * ((x_max - a).tanh() + a.tanh());
            let j12 = 0.5 * (-(x_max - b).tanh() - b.tanh());
            let j21 = 0.5 * (-a.tanh() + (x_max + a).tanh());
            let j22 = 0.5 * (b.tanh() - (x_max + b).tanh());
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-300 {
                return Err(ZzError::CalibrationFailed {
                    residual: norm,
                    iters: iter,
                });
            }
            let mut da = -(j22 * r1 - j12 * r2) / det;
            let mut db = -(-j21 * r1 + j11 * r2) / det;
            // Damped update.
            let mut lambda = 1.0;
            loop {
                let (t1, t2) = residual(a + lambda * da, b + lambda * db);
                if (t1 * t1 + t2 * t2).sqrt() < norm || lambda < 1e-6 {
                    break;
                }
                lambda *= 0.5;
            }
            da *= lambda;
            db *= lambda;
            a += da;
            b += db;
        }
        if !converged {
            let (r1, r2) = residual(a, b);
            let norm = (r1 * r1 + r2 * r2).sqrt();
            if norm > 1e-9 {
                return Err(ZzError::CalibrationFailed {
                    residual: norm,
                    iters: 80,
                });
            }
        }
    }

    // Discrete-δ polish: match the exact absorption probabilities of the two
    // eigenstates to (α², β²) at the configured step size.
    let joint = make_probe_scheme(a, b).joint_exponential(delta);
    let targets = [alpha * alpha, beta * beta];
    if (alpha - beta).abs() < 1e-12 {
        // One knob: secant on a = b.
        let f = |aa: f64| discrete_hit_up(aa, aa, x_max, delta, &joint, 0) - targets[0];
        let mut a0 = a;
        let mut a1 = a + 1e-3;
        let mut f0 = f(a0);
        for _ in 0..40 {
            let f1 = f(a1);
            if f1.abs() < 1e-12 || (a1 - a0).abs() < 1e-14 {
                break;
            }
            let step = f1 * (a1 - a0) / (f1 - f0);
            a0 = a1;
            f0 = f1;
            a1 -= step;
        }
        a = a1;
        b = a1;
    } else {
        for iter in 0..24 {
            let h0 = discrete_hit_up(a, b, x_max, delta, &joint, 0) - targets[0];
            let h1 = discrete_hit_up(a, b, x_max, delta, &joint, 1) - targets[1];
            let norm = (h0 * h0 + h1 * h1).sqrt();
            if norm < 1e-12 {
                break;
            }
            if iter == 23 {
                return Err(ZzError::CalibrationFailed {
                    residual: norm,
                    iters: iter,
                });
            }
            let eps = 1e-6;
            let j11 = (discrete_hit_up(a + eps, b, x_max, delta, &joint, 0) - targets[0] - h0) / eps;
            let j21 = (discrete_hit_up(a + eps, b, x_max, delta, &joint, 1) - targets[1] - h1) / eps;
            let j12 = (discrete_hit_up(a, b + eps, x_max, delta, &joint, 0) - targets[0] - h0) / eps;
            let j22 = (discrete_hit_up(a, b + eps, x_max, delta, &joint, 1) - targets[1] - h1) / eps;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-300 {
                break;
            }
            a -= (j22 * h0 - j12 * h1) / det;
            b -= (-j21 * h0 + j11 * h1) / det;
        }
    }

    // Assemble the final scheme with calibrated pulse signs.
    let mut probe = make_probe_scheme(a, b);
    probe.validate(delta, -x_max, x_max, 64)?;
    let signs = calibrate_pulse_signs(&probe)?;
    probe = probe.with_pulse_signs(signs);

    // Realized diagonal phases: θ± = ∫ |transverse| over each half-walk.
    let trans = |x: f64| {
        let y = flow_y(x, a, b);
        (1.0 - y * y).max(0.0).sqrt()
    };
    let theta_plus = simpson(&trans, 0.0, x_max, 400);
    let theta_minus = simpson(&trans, -x_max, 0.0, 400);

    Ok(ZzScheme {
        target,
        params: ZzSchemeParams {
            a,
            b,
            boundary: x_max,
            delta,
        },
        formula_ab,
        probe,
        theta_plus,
        theta_minus,
    })
}

/// Solve the drift-only (α = β) balance: pick a = b so that the continuum hit
/// probability ∫_{−X}^0 e^{−4∫c_eff} / ∫_{−X}^X e^{−4∫c_eff} equals α².
fn solve_drift_only(alpha: f64, x_max: f64) -> f64 {
    let target = alpha * alpha;
    let h_of = |a: f64| {
        let f = |x: f64| (-2.0 * (warp_c_integral(x, a, a))).exp();
        let below = simpson(&f, -x_max, 0.0, 800);
        let total = below + simpson(&f, 0.0, x_max, 800);
        below / total
    };
    // h is monotone decreasing in a (shifting the drift well rightward pushes
    // the walker down). Bisection.
    let mut lo = -40.0;
    let mut hi = 40.0;
    let f_lo = h_of(lo) - target;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = h_of(mid) - target;
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(f: &dyn Fn(f64) -> f64, from: f64, to: f64, steps: usize) -> f64 {
    let h = (to - from) / steps as f64;
    let mut acc = 0.0;
    for k in 0..steps {
        let x0 = from + k as f64 * h;
        acc += h / 6.0 * (f(x0) + 4.0 * f(x0 + h / 2.0) + f(x0 + h));
    }
    acc
}

/// Analytic endpoint operators for a target without building the discrete walk
/// (continuum calibration only; magnitudes are exact either way).
pub fn endpoint_operators_analytic(
    target: DiagonalTarget,
    x_max: f64,
) -> Result<(Operator, Operator), ZzError> {
    // δ only affects the discrete polish, not the analytic endpoints; use a
    // moderate value for the internal construction.
    let scheme = build_zz_scheme(target, x_max, 0.05)?;
    Ok(scheme.endpoint_operators())
}

/// An alternate probe-basis convention kept behind a flag for comparison:
/// n1 = ẑ, n2 = (−c, √(1−c²), 0). The probe sits on the interaction axis, so
/// the walk gains no outcome information; the endpoints verification check
/// reports it failing to reproduce the target.
pub fn build_zz_scheme_alternate_basis(target: DiagonalTarget, x_max: f64) -> Result<ProbeScheme, ZzError> {
    let (a, b) = ab_from_target(target.alpha, target.beta, x_max)?;
    let basis_fn = move |x: f64| {
        let c = warp_c(x, a, b).clamp(-1.0, 1.0);
        let n1 = BlochVector::new(0.0, 0.0, 1.0);
        let n2 = BlochVector::new(-c, (1.0 - c * c).sqrt(), 0.0);
        let n3 = n1.cross(&n2);
        ProbeBasis::new(n1, n2, n3).expect("orthonormal")
    };
    Ok(ProbeScheme::new(
        zz_hamiltonian(),
        basis_fn,
        move |x| warp_c(x, a, b),
        |_| 0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;
    use crate::probe::step_operator;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_formula_values() {
        // α = 0.5 → a = 0 for any boundary.
        let (a, _) = ab_from_target(0.5, 0.2, 3.0).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-14);

        // α = 0.8, X = 3 → a ≈ 0.6978195.
        let (a, b) = ab_from_target(0.8, 0.2, 3.0).unwrap();
        assert_abs_diff_eq!(a, 0.697819, epsilon = 1e-5);
        // symmetry under α ↔ 1−β when β = 1−α
        assert_abs_diff_eq!(b, -a, epsilon = 1e-12);

        // α = 0.999 at X = 1 is infeasible (0.998 > tanh 1 ≈ 0.7616).
        match ab_from_target(0.999, 0.2, 1.0) {
            Err(ZzError::Infeasible { min_x, .. }) => assert!(min_x > 1.0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn warp_examples_and_integral() {
        assert_abs_diff_eq!(warp_c(0.0, 0.0, 0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(warp_c(0.0, 0.7, -0.7), 0.0, epsilon = 1e-15);
        // Closed-form integral against quadrature.
        let (a, b) = (0.6978195, -0.6978195);
        for x in [-2.0, -0.5, 1.0, 2.5] {
            let quad = simpson(&|t| warp_c(t, a, b), 0.0, x, 2000);
            assert_abs_diff_eq!(warp_c_integral(x, a, b), quad, epsilon = 1e-9);
        }
    }

    #[test]
    fn flow_identity_reversibility() {
        // y' = −4·c_eff·y holds identically for any shifts.
        let (a, b) = (-0.3, 0.9);
        for x in [-1.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let dy = (flow_y(x + h, a, b) - flow_y(x - h, a, b)) / (2.0 * h);
            assert_abs_diff_eq!(dy, -4.0 * effective_warp(x, a, b) * flow_y(x, a, b), epsilon = 1e-8);
        }
    }

    #[test]
    fn target_operators_complete() {
        let t = DiagonalTarget::new(0.8, 0.2).unwrap();
        let (m1, m2) = t.operators();
        let total = m1.adjoint().mul(&m1).add(&m2.adjoint().mul(&m2));
        assert!(total.sub(&Operator::identity(2)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn build_calibrates_endpoint_magnitudes() {
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme(target, 3.0, 0.05).unwrap();
        let (m1, m2) = scheme.endpoint_operators();
        assert_abs_diff_eq!(m1[(0, 0)].norm(), 0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(m1[(1, 1)].norm(), 0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(m2[(0, 0)].norm(), 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(m2[(1, 1)].norm(), 0.96f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn discrete_hits_match_born_weights() {
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme(target, 3.0, 0.05).unwrap();
        let joint = scheme.probe_scheme().joint_exponential(0.05);
        let h0 = discrete_hit_up(scheme.params.a, scheme.params.b, 3.0, 0.05, &joint, 0);
        let h1 = discrete_hit_up(scheme.params.a, scheme.params.b, 3.0, 0.05, &joint, 1);
        assert_abs_diff_eq!(h0, 0.64, epsilon = 1e-9);
        assert_abs_diff_eq!(h1, 0.04, epsilon = 1e-9);
    }

    #[test]
    fn scheme_passes_probe_invariants() {
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme(target, 3.0, 0.05).unwrap();
        scheme.probe_scheme().validate(0.05, -3.0, 3.0, 50).unwrap();
        // n3 stays unit along the walk; the two flows are mirror images.
        for k in 0..41 {
            let x = -3.0 + 6.0 * k as f64 / 40.0;
            let basis = scheme.probe_scheme().basis(x);
            assert_abs_diff_eq!(basis.n3.norm(), 1.0, epsilon = 1e-12);
            let y = scheme.flow_y(x);
            assert_abs_diff_eq!(y, -(-y), epsilon = 1e-15);
        }
    }

    #[test]
    fn trivial_flow_scheme_has_half_probabilities() {
        // α = β = 1/√2: the degenerate calibration gives a drift-free,
        // flow-free scheme whose step operators are proportional to a diagonal
        // unitary, so p+ = 1/2 exactly.
        let v = std::f64::consts::FRAC_1_SQRT_2;
        let target = DiagonalTarget::new(v, v).unwrap();
        let scheme = build_zz_scheme(target, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(scheme.params.a, scheme.params.b, epsilon = 1e-12);
        // Symmetric drift well: a = b = 0 balances the walk at 1/2.
        assert_abs_diff_eq!(scheme.params.a, 0.0, epsilon = 1e-6);
        let m_plus = step_operator(scheme.probe_scheme(), 0.0, 1, 0.05).unwrap();
        let state = QuantumState::basis_state(2, 0);
        let p = m_plus.apply(&state).norm().powi(2);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn step_operator_first_order_form() {
        // At any x the exact step operator matches
        // 1/√2·(1 + bδ(c−my) + ibδmñ) entrywise to O(δ²).
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme(target, 3.0, 0.05).unwrap();
        let delta = 0.004;
        for x in [-1.3, 0.0, 0.8] {
            let y = scheme.flow_y(x);
            let nt = scheme.transverse(x);
            let c = scheme.effective_warp(x);
            for branch in [1i8, -1] {
                let m = step_operator(scheme.probe_scheme(), x, branch, delta).unwrap();
                for (idx, mval) in [(0usize, 1.0f64), (1, -1.0)] {
                    let expect = Complex64::new(
                        1.0 + branch as f64 * delta * (c - mval * y),
                        branch as f64 * delta * mval * nt,
                    ) / 2.0f64.sqrt();
                    let got = m[(idx, idx)];
                    assert!(
                        (got - expect).norm() < 20.0 * delta * delta,
                        "x={x} branch={branch} entry={idx}: got {got}, expected {expect}"
                    );
                }
                // off-diagonals vanish for the diagonal interaction
                assert!(m[(0, 1)].norm() < 1e-14 && m[(1, 0)].norm() < 1e-14);
            }
        }
        let _ = I;
    }

    #[test]
    fn riccati_problem_self_consistent() {
        let target = DiagonalTarget::new(0.7, 0.3).unwrap();
        let scheme = build_zz_scheme(target, 2.5, 0.05).unwrap();
        let problem = scheme.riccati_problem();
        // integrate from y(0) and compare against the closed flow
        let path = crate::riccati::integrate_numeric(&problem, scheme.flow_y(0.0), 0.0, 2.0, 400)
            .unwrap();
        for (x, y) in path.iter().step_by(50) {
            assert_abs_diff_eq!(*y, scheme.flow_y(*x), epsilon = 1e-7);
        }
        // the mirrored flow solves it too
        let path = crate::riccati::integrate_numeric(&problem, -scheme.flow_y(0.0), 0.0, 2.0, 400)
            .unwrap();
        for (x, y) in path.iter().step_by(50) {
            assert_abs_diff_eq!(*y, -scheme.flow_y(*x), epsilon = 1e-7);
        }
    }

    #[test]
    fn admissible_constants_recover_the_scheme_flows() {
        // The root for the mirror flow's own endpoint weight maps back onto
        // that flow through the closed-form family, and the weight itself sits
        // at the design value β² up to the (small) discrete-δ calibration shift.
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme(target, 3.0, 0.05).unwrap();
        let problem = scheme.riccati_problem();
        let t_mirror = crate::riccati::endpoint_weight_of_flow(&problem, -3.0, 3.0, &|x| {
            -scheme.flow_y(x)
        });
        assert!(
            (t_mirror - 0.04).abs() < 1e-3,
            "mirror weight {t_mirror:.6} far from β² = 0.04"
        );
        let (ca, cb, _) =
            crate::riccati::admissible_constants(&problem, -3.0, 3.0, t_mirror).unwrap();
        let expected_c = -1.0 / (2.0 * scheme.flow_y(0.0));
        let finite = if ca.abs() < 1e6 { ca } else { cb };
        assert_abs_diff_eq!(finite, expected_c, epsilon = 1e-6 * expected_c.abs().max(1.0));
        let mirror = crate::riccati::general_solution(&problem, finite).unwrap();
        let mut max_dev = 0.0f64;
        for k in 0..41 {
            let x = -2.8 + 5.6 * k as f64 / 40.0;
            max_dev = max_dev.max((mirror.y(x) + scheme.flow_y(x)).abs());
        }
        assert!(
            max_dev < 1e-6,
            "mirror-flow deviation {max_dev:.2e} (C = {finite:.6}, expected {expected_c:.6})"
        );
    }

    #[test]
    fn swapping_targets_swaps_endpoint_entries() {
        let s1 = build_zz_scheme(DiagonalTarget::new(0.8, 0.2).unwrap(), 3.0, 0.05).unwrap();
        let s2 = build_zz_scheme(DiagonalTarget::new(0.2, 0.8).unwrap(), 3.0, 0.05).unwrap();
        let (m1a, m2a) = s1.endpoint_operators();
        let (m1b, m2b) = s2.endpoint_operators();
        assert_abs_diff_eq!(m1a[(0, 0)].norm(), m1b[(1, 1)].norm(), epsilon = 1e-9);
        assert_abs_diff_eq!(m1a[(1, 1)].norm(), m1b[(0, 0)].norm(), epsilon = 1e-9);
        assert_abs_diff_eq!(m2a[(0, 0)].norm(), m2b[(1, 1)].norm(), epsilon = 1e-9);
        // and the shift knobs swap roles, negating the flow
        assert_abs_diff_eq!(s1.params.a, s2.params.b, epsilon = 1e-6);
        assert_abs_diff_eq!(s1.params.b, s2.params.a, epsilon = 1e-6);
    }

    #[test]
    fn expansion_terms_fd_matches_analytic_rate_on_scheme() {
        let target = DiagonalTarget::new(0.7, 0.3).unwrap();
        let scheme = build_zz_scheme(target, 2.5, 0.05).unwrap();
        for x in [-1.9, -0.4, 1.2] {
            let with_rate = crate::reversal::expansion_terms(scheme.probe_scheme(), x);
            let with_fd = crate::reversal::expansion_terms_with(scheme.probe_scheme(), x, true);
            for (a, b) in [
                (&with_rate.a, &with_fd.a),
                (&with_rate.abar, &with_fd.abar),
                (&with_rate.bbar, &with_fd.bbar),
            ] {
                assert!(a.sub(b).frobenius_norm() < 1e-5);
            }
        }
    }

    #[test]
    fn alternate_basis_variant_builds_but_is_uninformative() {
        let target = DiagonalTarget::new(0.8, 0.2).unwrap();
        let scheme = build_zz_scheme_alternate_basis(target, 3.0).unwrap();
        // Its step operators are proportional to unitaries: no state collapse.
        let m = step_operator(&scheme, 0.7, 1, 0.05).unwrap();
        let sv = m.singular_values();
        assert!((sv[0] - sv[sv.len() - 1]).abs() < 1e-12);
    }
}
