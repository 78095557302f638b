//! Scalar Riccati equation y' = q0(x) + q1(x)·y + q2(x)·y²: fixed-step numerical
//! integration (the oracle), the one-parameter closed-form family through a
//! known particular solution, and the admissible integration constants that
//! realize a given endpoint weight between two walk boundaries.
//!
//! The closed form follows the standard reduction: with Φ = exp∫(q1 + 2·q2·y1),
//! the family is y = y1 + Φ/(C − ∫q2·Φ). A variant with q0 in place of q2 in
//! both slots is also provided; the two differ whenever q0 ≠ q2 and the
//! verification report records which one the numerical oracle validates.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiccatiError {
    #[error("particular solution does not satisfy the ODE: max residual {residual:.3e} at x={x:.4}")]
    BadParticular { residual: f64, x: f64 },
    #[error("numerical integration blew up (|y| > {limit:.1e}) near x = {x:.6}")]
    BlowUp { x: f64, limit: f64 },
    #[error("integration did not converge: doubling steps moved the endpoint by {change:.3e}")]
    NotConverged { change: f64 },
    #[error("need at least 100 steps, got {got}")]
    TooFewSteps { got: usize },
    #[error("denominator C − ∫q2·Φ vanishes near x = {x:.6} (|den| = {den:.3e})")]
    SingularSolution { x: f64, den: f64 },
    #[error(
        "target weight {target:.6} unreachable on ({x1:.3}, {x2:.3}); achievable range is \
         [{lo:.6}, {hi:.6}]"
    )]
    Infeasible {
        target: f64,
        x1: f64,
        x2: f64,
        lo: f64,
        hi: f64,
    },
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar Riccati problem on a finite interval with a known particular solution.
#[derive(Clone)]
pub struct RiccatiProblem {
    pub q0: ScalarFn,
    pub q1: ScalarFn,
    pub q2: ScalarFn,
    pub y1: ScalarFn,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl std::fmt::Debug for RiccatiProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiccatiProblem")
            .field("x_lo", &self.x_lo)
            .field("x_hi", &self.x_hi)
            .finish()
    }
}

impl RiccatiProblem {
    pub fn new(
        q0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        y1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x_lo: f64,
        x_hi: f64,
    ) -> Result<Self, RiccatiError> {
        let p = RiccatiProblem {
            q0: Arc::new(q0),
            q1: Arc::new(q1),
            q2: Arc::new(q2),
            y1: Arc::new(y1),
            x_lo,
            x_hi,
        };
        // The particular solution must satisfy the ODE on a 400-point grid,
        // checked with central differences.
        let n = 400;
        let h = 1e-6;
        let mut worst = (0.0f64, p.x_lo);
        for k in 0..n {
            let x = p.x_lo + (p.x_hi - p.x_lo) * (k as f64 + 0.5) / n as f64;
            let dy = ((p.y1)(x + h) - (p.y1)(x - h)) / (2.0 * h);
            let y = (p.y1)(x);
            let rhs = (p.q0)(x) + (p.q1)(x) * y + (p.q2)(x) * y * y;
            let res = (dy - rhs).abs();
            if res > worst.0 {
                worst = (res, x);
            }
        }
        if worst.0 > 1e-6 {
            return Err(RiccatiError::BadParticular {
                residual: worst.0,
                x: worst.1,
            });
        }
        Ok(p)
    }

    fn rhs(&self, x: f64, y: f64) -> f64 {
        (self.q0)(x) + (self.q1)(x) * y + (self.q2)(x) * y * y
    }
}

const BLOWUP_LIMIT: f64 = 1e6;

/// Classical fixed-step RK4 from (x0, y_initial) to x1; returns the sampled
/// trajectory. Doubling the step count must move the endpoint by ≤ 1e-8, which
/// is checked internally, and |y| crossing 1e6 is reported as a blow-up.
pub fn integrate_numeric(
    problem: &RiccatiProblem,
    y_initial: f64,
    x0: f64,
    x1: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>, RiccatiError> {
    if steps < 100 {
        return Err(RiccatiError::TooFewSteps { got: steps });
    }
    let coarse = rk4_run(problem, y_initial, x0, x1, steps)?;
    let fine = rk4_run(problem, y_initial, x0, x1, steps * 2)?;
    let change = (coarse.last().unwrap().1 - fine.last().unwrap().1).abs();
    if change > 1e-8 {
        return Err(RiccatiError::NotConverged { change });
    }
    Ok(fine)
}

fn rk4_run(
    problem: &RiccatiProblem,
    y0: f64,
    x0: f64,
    x1: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>, RiccatiError> {
    let h = (x1 - x0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    let mut x = x0;
    out.push((x, y));
    for _ in 0..steps {
        let k1 = problem.rhs(x, y);
        let k2 = problem.rhs(x + h / 2.0, y + h / 2.0 * k1);
        let k3 = problem.rhs(x + h / 2.0, y + h / 2.0 * k2);
        let k4 = problem.rhs(x + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x += h;
        if !y.is_finite() || y.abs() > BLOWUP_LIMIT {
            return Err(RiccatiError::BlowUp {
                x,
                limit: BLOWUP_LIMIT,
            });
        }
        out.push((x, y));
    }
    Ok(out)
}

/// Dense cumulative grids for Φ and its weighted integrals, supporting Hermite
/// interpolation at arbitrary x in the problem domain.
#[derive(Debug, Clone)]
struct CumulativeGrids {
    x_lo: f64,
    h: f64,
    /// Φ(x) = exp ∫₀ˣ (q1 + 2 q2 y1)
    phi: Vec<f64>,
    /// R(x) = ∫₀ˣ q2 Φ
    r: Vec<f64>,
    /// derivative samples for Hermite interpolation
    dphi: Vec<f64>,
    dr: Vec<f64>,
}

const GRID_NODES: usize = 4001;

impl CumulativeGrids {
    fn build(problem: &RiccatiProblem, denominator_coeff: DenomCoeff) -> CumulativeGrids {
        let n = GRID_NODES;
        let x_lo = problem.x_lo;
        let h = (problem.x_hi - problem.x_lo) / (n - 1) as f64;
        // Integrate the coupled system (logΦ, R, Y1, Q1) with RK4; all
        // right-hand sides are explicit functions of x and logΦ.
        let coeff = |x: f64| match denominator_coeff {
            DenomCoeff::Q2 => (problem.q2)(x),
            DenomCoeff::Q0Variant => (problem.q0)(x),
        };
        let growth = |x: f64| match denominator_coeff {
            DenomCoeff::Q2 => (problem.q1)(x) + 2.0 * (problem.q2)(x) * (problem.y1)(x),
            DenomCoeff::Q0Variant => (problem.q1)(x) + 2.0 * (problem.q0)(x) * (problem.y1)(x),
        };
        let mut logphi = vec![0.0f64; n];
        let mut r = vec![0.0f64; n];
        // Anchor the cumulative integrals at x = 0 (inside the domain for walk
        // problems); integrate outward in both directions from the nearest node.
        let zero_idx = ((0.0 - x_lo) / h).round().clamp(0.0, (n - 1) as f64) as usize;
        let x_at = |k: usize| x_lo + k as f64 * h;
        // Correct the anchor so integrals run exactly from 0 even when 0 is not
        // a grid node.
        let anchor_x = x_at(zero_idx);
        logphi[zero_idx] = integrate_quad(&[&growth], 0.0, anchor_x)[0];
        r[zero_idx] = coupled_r(&growth, &coeff, 0.0, anchor_x);

        // March up.
        for k in zero_idx..n - 1 {
            let (dlp, dr) = rk4_coupled(&growth, &coeff, x_at(k), logphi[k], h);
            logphi[k + 1] = logphi[k] + dlp;
            r[k + 1] = r[k] + dr;
        }
        // March down.
        for k in (1..=zero_idx).rev() {
            let (dlp, dr) = rk4_coupled(&growth, &coeff, x_at(k), logphi[k], -h);
            logphi[k - 1] = logphi[k] + dlp;
            r[k - 1] = r[k] + dr;
        }
        let phi: Vec<f64> = logphi.iter().map(|l| l.exp()).collect();
        let dphi: Vec<f64> = (0..n).map(|k| growth(x_at(k)) * phi[k]).collect();
        let dr: Vec<f64> = (0..n).map(|k| coeff(x_at(k)) * phi[k]).collect();
        CumulativeGrids {
            x_lo,
            h,
            phi,
            r,
            dphi,
            dr,
        }
    }

    fn hermite(&self, xs: &[f64], ds: &[f64], x: f64) -> f64 {
        let n = xs.len();
        let t = ((x - self.x_lo) / self.h).clamp(0.0, (n - 1) as f64);
        let k = (t.floor() as usize).min(n - 2);
        let u = t - k as f64;
        let (p0, p1) = (xs[k], xs[k + 1]);
        let (m0, m1) = (ds[k] * self.h, ds[k + 1] * self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1
    }

    fn phi_at(&self, x: f64) -> f64 {
        self.hermite(&self.phi, &self.dphi, x)
    }

    fn r_at(&self, x: f64) -> f64 {
        self.hermite(&self.r, &self.dr, x)
    }
}

fn rk4_coupled(
    growth: &dyn Fn(f64) -> f64,
    coeff: &dyn Fn(f64) -> f64,
    x: f64,
    logphi: f64,
    h: f64,
) -> (f64, f64) {
    // d(logΦ) = growth, dR = coeff·Φ.
    let f = |x: f64, lp: f64| (growth(x), coeff(x) * lp.exp());
    let (a1, b1) = f(x, logphi);
    let (a2, b2) = f(x + h / 2.0, logphi + h / 2.0 * a1);
    let (a3, b3) = f(x + h / 2.0, logphi + h / 2.0 * a2);
    let (a4, b4) = f(x + h, logphi + h * a3);
    (
        h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

fn coupled_r(growth: &dyn Fn(f64) -> f64, coeff: &dyn Fn(f64) -> f64, from: f64, to: f64) -> f64 {
    let steps = 512;
    let h = (to - from) / steps as f64;
    if h == 0.0 {
        return 0.0;
    }
    let mut lp = 0.0;
    let mut r = 0.0;
    let mut x = from;
    for _ in 0..steps {
        let f = |x: f64, lp: f64| (growth(x), coeff(x) * lp.exp());
        let (a1, b1) = f(x, lp);
        let (a2, b2) = f(x + h / 2.0, lp + h / 2.0 * a1);
        let (a3, b3) = f(x + h / 2.0, lp + h / 2.0 * a2);
        let (a4, b4) = f(x + h, lp + h * a3);
        lp += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        r += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        x += h;
    }
    r
}

fn integrate_quad(fs: &[&dyn Fn(f64) -> f64], from: f64, to: f64) -> Vec<f64> {
    let steps = 512;
    let h = (to - from) / steps as f64;
    let mut acc = vec![0.0; fs.len()];
    if h == 0.0 {
        return acc;
    }
    for s in 0..steps {
        let x0 = from + s as f64 * h;
        for (i, f) in fs.iter().enumerate() {
            acc[i] += h / 6.0 * (f(x0) + 4.0 * f(x0 + h / 2.0) + f(x0 + h));
        }
    }
    acc
}

/// Which coefficient sits in the Φ exponent and the denominator integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenomCoeff {
    /// Standard reduction: q2 in both places. This is what the crate ships.
    Q2,
    /// Variant with q0 in both places, kept for comparison reports.
    Q0Variant,
}

/// One member of the closed-form solution family.
#[derive(Clone)]
pub struct RiccatiSolution {
    pub c: f64,
    grids: Arc<CumulativeGrids>,
    y1: ScalarFn,
    x_lo: f64,
    x_hi: f64,
}

impl std::fmt::Debug for RiccatiSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiccatiSolution").field("c", &self.c).finish()
    }
}

impl RiccatiSolution {
    pub fn phi(&self, x: f64) -> f64 {
        self.grids.phi_at(x)
    }

    /// The denominator integral ∫₀ˣ q2·Φ (or q0·Φ for the variant form).
    pub fn denominator_integral(&self, x: f64) -> f64 {
        self.grids.r_at(x)
    }

    pub fn y(&self, x: f64) -> f64 {
        (self.y1)(x) + self.phi(x) / (self.c - self.denominator_integral(x))
    }

    /// Smallest |C − R(x)| over the domain.
    pub fn min_denominator(&self) -> (f64, f64) {
        let n = 801;
        let mut best = (f64::INFINITY, self.x_lo);
        for k in 0..n {
            let x = self.x_lo + (self.x_hi - self.x_lo) * k as f64 / (n - 1) as f64;
            let den = (self.c - self.denominator_integral(x)).abs();
            if den < best.0 {
                best = (den, x);
            }
        }
        best
    }
}

/// Construct the one-parameter closed-form family member with constant C,
/// using the standard reduction (q2 in the exponent and the denominator).
pub fn general_solution(problem: &RiccatiProblem, c: f64) -> Result<RiccatiSolution, RiccatiError> {
    general_solution_with(problem, c, DenomCoeff::Q2)
}

pub fn general_solution_with(
    problem: &RiccatiProblem,
    c: f64,
    coeff: DenomCoeff,
) -> Result<RiccatiSolution, RiccatiError> {
    let grids = Arc::new(CumulativeGrids::build(problem, coeff));
    let sol = RiccatiSolution {
        c,
        grids,
        y1: problem.y1.clone(),
        x_lo: problem.x_lo,
        x_hi: problem.x_hi,
    };
    let (den, x) = sol.min_denominator();
    if den < 1e-6 {
        return Err(RiccatiError::SingularSolution { x, den });
    }
    Ok(sol)
}

/// Boundary weight of the flow with constant C: the completeness-normalized
/// diagonal-entry expression h(C) = ∫_{x1}^0 F / ∫_{x1}^{x2} F with
/// F = exp(∫₀ˣ q1 + 4∫₀ˣ y_C), integrated numerically on a fine grid.
pub fn endpoint_weight(
    problem: &RiccatiProblem,
    x1: f64,
    x2: f64,
    c: f64,
) -> Result<f64, RiccatiError> {
    let sol = general_solution(problem, c)?;
    Ok(endpoint_weight_of_flow(problem, x1, x2, &|x| sol.y(x)))
}

/// Same weight for an arbitrary flow function (used for the C → ∞ member y1).
///
/// The exponent E(x) = ∫₀ˣ (q1 + 4y) is accumulated with half-interval Simpson
/// increments and the weight integrals of exp(E) with Simpson on top, marching
/// outward from the anchor x = 0 on each side so the split between the two
/// boundaries is exact.
pub fn endpoint_weight_of_flow(
    problem: &RiccatiProblem,
    x1: f64,
    x2: f64,
    flow: &dyn Fn(f64) -> f64,
) -> f64 {
    let g = |x: f64| (problem.q1)(x) + 4.0 * flow(x);
    let march = |to: f64| -> f64 {
        // signed ∫_0^to exp(E) dx, marched from 0
        let m = 2000usize;
        let h = to / m as f64;
        if h == 0.0 {
            return 0.0;
        }
        let mut e = 0.0f64;
        let mut acc = 0.0f64;
        let mut g0 = g(0.0);
        for k in 0..m {
            let x = k as f64 * h;
            let gq = g(x + 0.25 * h);
            let gm = g(x + 0.5 * h);
            let g3 = g(x + 0.75 * h);
            let g1 = g(x + h);
            let e_half = e + h / 12.0 * (g0 + 4.0 * gq + gm);
            let e_next = e_half + h / 12.0 * (gm + 4.0 * g3 + g1);
            acc += h / 6.0 * (e.exp() + 4.0 * e_half.exp() + e_next.exp());
            e = e_next;
            g0 = g1;
        }
        acc
    };
    let below = -march(x1); // x1 < 0: the signed march is negative
    let above = march(x2);
    below / (below + above)
}

/// Admissible integration constants for a target endpoint weight t ∈ (0,1)
/// between boundaries x1 < 0 < x2: the root of h(C) = t together with the root
/// of h(C) = 1 − t on the complementary branch (the mirror assignment of the
/// two outcomes). Roots that run off to ±∞ are reported with the sentinel
/// |C| = 1e9 (the particular solution itself). The returned sign is the
/// discriminant analogue: +1 for two distinct roots, 0 for a coincident pair.
pub fn admissible_constants(
    problem: &RiccatiProblem,
    x1: f64,
    x2: f64,
    target: f64,
) -> Result<(f64, f64, i8), RiccatiError> {
    assert!(x1 < 0.0 && x2 > 0.0, "boundaries must straddle the origin");
    assert!(target > 0.0 && target < 1.0, "target weight must lie in (0,1)");
    let grids = CumulativeGrids::build(problem, DenomCoeff::Q2);
    // Valid C ranges: strictly above max R or strictly below min R on [x1,x2].
    let mut r_min = f64::INFINITY;
    let mut r_max = f64::NEG_INFINITY;
    let n = 801;
    for k in 0..n {
        let x = x1 + (x2 - x1) * k as f64 / (n - 1) as f64;
        let r = grids.r_at(x);
        r_min = r_min.min(r);
        r_max = r_max.max(r);
    }
    let margin = 1e-4 * (r_max - r_min).max(1.0);
    let sentinel = 1e9;
    let weight = |c: f64| -> f64 {
        let sol = RiccatiSolution {
            c,
            grids: Arc::new(grids.clone()),
            y1: problem.y1.clone(),
            x_lo: problem.x_lo,
            x_hi: problem.x_hi,
        };
        endpoint_weight_of_flow(problem, x1, x2, &|x| sol.y(x))
    };

    // h is monotone on each branch; bracketed bisection.
    let solve_on = |lo: f64, hi: f64, t: f64| -> Option<f64> {
        let f_lo = weight(lo) - t;
        let f_hi = weight(hi) - t;
        if f_lo == 0.0 {
            return Some(lo);
        }
        if f_hi == 0.0 {
            return Some(hi);
        }
        if f_lo.signum() == f_hi.signum() {
            return None;
        }
        let (mut a, mut b) = (lo, hi);
        let mut fa = f_lo;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let fm = weight(mid) - t;
            if fm == 0.0 || (b - a).abs() < 1e-12 * (1.0 + mid.abs()) {
                return Some(mid);
            }
            if fa.signum() == fm.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        Some(0.5 * (a + b))
    };

    let upper = (r_max + margin, sentinel);
    let lower = (-sentinel, r_min - margin);
    // Asymptotic weight: the C → ∞ member is the particular solution.
    let w_inf = endpoint_weight_of_flow(problem, x1, x2, &|x| (problem.y1)(x));

    let mut roots: Vec<f64> = Vec::new();
    for t in [target, 1.0 - target] {
        if (t - w_inf).abs() < 1e-9 {
            // Root at infinity: the particular solution itself.
            roots.push(if roots.first().map(|r| *r >= 0.0).unwrap_or(false) {
                -sentinel
            } else {
                sentinel
            });
            continue;
        }
        let mut found = None;
        for (lo, hi) in [upper, lower] {
            if let Some(c) = solve_on(lo, hi, t) {
                found = Some(c);
                break;
            }
        }
        if let Some(c) = found {
            roots.push(c);
        }
    }

    if roots.len() < 2 {
        // Name the achievable range for the diagnostic.
        let candidates = [
            weight(upper.0),
            weight(upper.1),
            weight(lower.0),
            weight(lower.1),
            w_inf,
        ];
        let lo = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(RiccatiError::Infeasible {
            target,
            x1,
            x2,
            lo,
            hi,
        });
    }
    let disc = if (roots[0] - roots[1]).abs() < 1e-9 { 0 } else { 1 };
    Ok((roots[0], roots[1], disc))
}
