//! Acceptance suite: one test per shipped criterion, each printing a single
//! pass/fail line with the measured quantities. Tolerances are pinned in the
//! assertions. Run with `cargo test --test acceptance -- --nocapture` to see
//! the per-criterion lines.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use probewalk::linalg::{
    distinct_singular_values, hermitian_exp, mutual_proportionality_residual,
    proportionality_residual, Operator, QuantumState,
};
use probewalk::probe::{
    step_operator, InteractionHamiltonian, ProbeBasis, ProbeScheme,
};
use probewalk::reversal::{calibrate_pulse_signs, correction_pulse, reversal_product, verify_expansion};
use probewalk::riccati::{admissible_constants, endpoint_weight, general_solution, integrate_numeric};
use probewalk::verify::loglog_slope;
use probewalk::walk::{
    apply_unitary_padding, run_ensemble, run_forced, StepTable, WalkConfig,
};
use probewalk::zz::{build_zz_scheme, effective_warp, flow_y, DiagonalTarget, ZzScheme};
use probewalk::BlochVector;

fn report(criterion: &str, pass: bool, details: &str) {
    println!(
        "acceptance {criterion}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {details}");
}

fn zz_scheme(alpha: f64, beta: f64, x_max: f64, delta: f64) -> ZzScheme {
    let target = DiagonalTarget::new(alpha, beta).unwrap();
    build_zz_scheme(target, x_max, delta).unwrap()
}

/// A random walkable scheme with commuting interaction blocks on a
/// d-dimensional system: eigenvalue triplets λ_j = c_j·(g,0,0) ± (λ1x, 0, λ1z)
/// in a random common eigenbasis, driven by the two-shift triad so all diagonal
/// flows satisfy one Riccati equation (the admissible geometry).
fn random_admissible_scheme(rng: &mut ChaCha8Rng, dim: usize) -> ProbeScheme {
    let a = rng.random::<f64>() * 1.2 - 1.5; // a < b so the flow is one-signed
    let b = a + 0.3 + rng.random::<f64>() * 1.2;
    let g = rng.random::<f64>() * 0.8 - 0.4;
    let l1x = rng.random::<f64>() * 0.8 - 0.4;
    let l1z = 0.3 + rng.random::<f64>() * 0.7;
    let hs_scale = rng.random::<f64>() * 0.4;

    // Random common eigenbasis.
    let mut h_rand = Operator::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            h_rand[(r, c)] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    let h_rand = h_rand.add(&h_rand.adjoint()).scale(Complex64::new(0.5, 0.0));
    let u = hermitian_exp(&h_rand, 1.0).unwrap();

    let conj = |diag: &[f64]| -> Operator {
        let d = Operator::diag(
            &diag
                .iter()
                .map(|v| Complex64::new(*v, 0.0))
                .collect::<Vec<_>>(),
        );
        let m = u.mul(&d).mul(&u.adjoint());
        // Strip representation noise so the blocks are Hermitian exactly.
        m.add(&m.adjoint()).scale(Complex64::new(0.5, 0.0))
    };

    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut lz = Vec::new();
    let mut hs = Vec::new();
    for j in 0..dim {
        let sign = if j < dim / 2 { 1.0 } else { -1.0 };
        let cj = rng.random::<f64>() * 2.0 - 1.0;
        lx.push(cj * g + sign * l1x);
        ly.push(0.0);
        lz.push(sign * l1z);
        hs.push(hs_scale * (rng.random::<f64>() - 0.5));
    }
    let hamiltonian = InteractionHamiltonian::new(
        conj(&hs),
        conj(&lx),
        conj(&ly),
        conj(&lz),
    )
    .unwrap();

    let basis_fn = move |x: f64| {
        let y = flow_y(x, a, b);
        let n = (1.0 - y * y).max(0.0).sqrt();
        let n1 = BlochVector::new(1.0, 0.0, 0.0);
        let n2 = BlochVector::new(0.0, y, n);
        let n3 = BlochVector::new(0.0, -n, y);
        ProbeBasis::new(n1, n2, n3).unwrap()
    };
    let scheme = ProbeScheme::new(hamiltonian, basis_fn, move |x| effective_warp(x, a, b), |_| 0.0);
    let signs = calibrate_pulse_signs(&scheme).unwrap();
    scheme.with_pulse_signs(signs)
}

#[test]
fn acceptance_01_completeness() {
    let start = std::time::Instant::now();
    let mut max_dev = 0.0f64;

    // Worked scheme at the reference configuration.
    let zz = zz_scheme(0.8, 0.2, 3.0, 0.05);
    for k in 0..40 {
        let x = -3.0 + 6.0 * k as f64 / 39.0;
        let mp = step_operator(zz.probe_scheme(), x, 1, 0.05).unwrap();
        let mm = step_operator(zz.probe_scheme(), x, -1, 0.05).unwrap();
        let dev = mp
            .adjoint()
            .mul(&mp)
            .add(&mm.adjoint().mul(&mm))
            .sub(&Operator::identity(2))
            .frobenius_norm();
        max_dev = max_dev.max(dev);
    }

    // 20 random commuting schemes on d = 4.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let scheme = random_admissible_scheme(&mut rng, 4);
        for k in 0..5 {
            let x = -1.5 + 3.0 * k as f64 / 4.0;
            let mp = step_operator(&scheme, x, 1, 0.05).unwrap();
            let mm = step_operator(&scheme, x, -1, 0.05).unwrap();
            let dev = mp
                .adjoint()
                .mul(&mp)
                .add(&mm.adjoint().mul(&mm))
                .sub(&Operator::identity(4))
                .frobenius_norm();
            max_dev = max_dev.max(dev);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "1 completeness",
        max_dev <= 1e-10 && elapsed < 1.0,
        &format!("max residual {max_dev:.3e} (tol 1e-10), runtime {elapsed:.3}s"),
    );
}

#[test]
fn acceptance_02_outcome_statistics() {
    let start = std::time::Instant::now();
    let zz = zz_scheme(0.8, 0.2, 3.0, 0.05);
    let config = WalkConfig::symmetric(0.05, 3.0, 4242).unwrap();
    let table = StepTable::new(zz.probe_scheme(), &config).unwrap();
    let (m1, m2) = zz.endpoint_operators();

    // |ψ⟩ = |+⟩: Born probability (α² + β²)/2 = 0.34.
    let plus = QuantumState::plus();
    let (stats_plus, _) =
        run_ensemble(&plus, &table, 4242, config.max_steps, 10_000, Some((&m1, &m2))).unwrap();
    // |ψ⟩ = |0⟩: Born probability α² = 0.64.
    let zero = QuantumState::basis_state(2, 0);
    let (stats_zero, _) =
        run_ensemble(&zero, &table, 90210, config.max_steps, 10_000, Some((&m1, &m2))).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let dev_plus = (stats_plus.freq_outcome1 - 0.34).abs();
    let dev_zero = (stats_zero.freq_outcome1 - 0.64).abs();
    report(
        "2 outcome statistics",
        dev_plus <= 0.015 && dev_zero <= 0.015 && stats_plus.timeouts == 0,
        &format!(
            "freq(|+⟩) = {:.4} (target 0.34 ± 0.015), freq(|0⟩) = {:.4} (target 0.64 ± 0.015), {:.1}s",
            stats_plus.freq_outcome1, stats_zero.freq_outcome1, elapsed
        ),
    );
}

#[test]
fn acceptance_03_post_state_convergence() {
    let plus = QuantumState::plus();
    let mut fidelities = Vec::new();
    for &delta in &[0.1, 0.05, 0.025] {
        let zz = zz_scheme(0.8, 0.2, 3.0, delta);
        let config = WalkConfig::symmetric(delta, 3.0, 777).unwrap();
        let table = StepTable::new(zz.probe_scheme(), &config).unwrap();
        // Bare diagonal targets; the diagonal-phase fit absorbs the walk's θ.
        let (m1, m2) = DiagonalTarget::new(0.8, 0.2).unwrap().operators();
        let (stats, _) =
            run_ensemble(&plus, &table, 777, config.max_steps, 1000, Some((&m1, &m2))).unwrap();
        fidelities.push(stats.mean_fidelity_1.unwrap());
    }
    let fid_at_05 = fidelities[1];
    let monotone_ok = fidelities[2] >= fidelities[0] - 1e-3;
    report(
        "3 post-state convergence",
        fid_at_05 >= 1.0 - 10.0 * 0.05 && monotone_ok,
        &format!(
            "mean fidelity at δ = 0.1/0.05/0.025: {:.9}/{:.9}/{:.9} (floor {:.2})",
            fidelities[0],
            fidelities[1],
            fidelities[2],
            1.0 - 10.0 * 0.05
        ),
    );
}

#[test]
fn acceptance_04_reversibility_scaling() {
    let zz = zz_scheme(0.8, 0.2, 3.0, 0.05);
    let scheme = zz.probe_scheme();
    let deltas = [0.1, 0.05, 0.025, 0.0125];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    // Worst residual across 10 random pointer values per δ; a per-x fit is
    // degenerate wherever the leading cubic coefficient crosses zero.
    let mut worst = vec![0.0f64; deltas.len()];
    for _ in 0..10 {
        let x = (rng.random::<f64>() * 2.0 - 1.0) * 2.8;
        for (slot, &d) in deltas.iter().enumerate() {
            for branch in [1i8, -1] {
                let product = reversal_product(scheme, x, branch, d).unwrap();
                let pulse = correction_pulse(scheme, x, d, branch).unwrap();
                let (_, res) = proportionality_residual(&pulse.mul(&product));
                worst[slot] = worst[slot].max(res);
            }
        }
    }
    let slope = loglog_slope(&deltas, &worst);
    report(
        "4 reversibility scaling",
        (2.7..=3.3).contains(&slope),
        &format!(
            "fitted slope {slope:.3} over residuals {:?}",
            worst.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn acceptance_05_expansion_fidelity() {
    // Aligned toy case: probe on ẑ, detector on x̂, H = Z⊗Z; the exact reversal
    // product is e^{2iδZ}/2.
    let aligned = {
        let h = InteractionHamiltonian::new(
            Operator::zeros(2),
            Operator::zeros(2),
            Operator::zeros(2),
            probewalk::linalg::pauli_z(),
        )
        .unwrap();
        let basis = ProbeBasis::new(
            BlochVector::new(0.0, 0.0, 1.0),
            BlochVector::new(1.0, 0.0, 0.0),
            BlochVector::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        ProbeScheme::new(h, move |_| basis, |_| 0.0, |_| 0.0)
    };
    let zz = zz_scheme(0.8, 0.2, 3.0, 0.05);

    let mut worst_ratio = 0.0f64;
    for &delta in &[0.1, 0.05] {
        for x in [-2.0, -0.7, 0.0, 1.3, 2.4] {
            let (rp, rm) = verify_expansion(zz.probe_scheme(), x, delta).unwrap();
            worst_ratio = worst_ratio.max(rp.max(rm) / (2.0 * delta.powi(3)));
        }
        // Aligned case, plus an explicit check of the exact product form.
        let (rp, rm) = verify_expansion(&aligned, 0.0, delta).unwrap();
        worst_ratio = worst_ratio.max(rp.max(rm) / (2.0 * delta.powi(3)));
        let product = reversal_product(&aligned, 0.0, 1, delta).unwrap();
        let expect = hermitian_exp(&probewalk::linalg::pauli_z(), 2.0 * delta)
            .unwrap()
            .scale(Complex64::new(0.5, 0.0));
        assert!(product.sub(&expect).frobenius_norm() < 1e-12);
    }
    report(
        "5 expansion fidelity",
        worst_ratio <= 1.0,
        &format!("max residual / 2δ³ = {worst_ratio:.4}"),
    );
}

#[test]
fn acceptance_06_riccati() {
    // Closed form vs fixed-step integration on 400-point grids.
    let zz = zz_scheme(0.8, 0.2, 3.0, 0.05);
    let problem = zz.riccati_problem();
    let sol = general_solution(&problem, 40.0).unwrap();
    let path = integrate_numeric(&problem, sol.y(-3.0), -3.0, 3.0, 400).unwrap();
    let mut max_dev = 0.0f64;
    for (x, y) in &path {
        max_dev = max_dev.max((sol.y(*x) - y).abs());
    }
    let closed_ok = max_dev <= 1e-6;

    // Exactly two roots for 50 random feasible targets, including asymmetric
    // boundaries. Targets are generated forward from random family members so
    // feasibility holds by construction.
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut two_roots = 0usize;
    let mut reproduced = 0usize;
    let total = 50usize;
    for trial in 0..total {
        let alpha = 0.55 + 0.3 * rng.random::<f64>();
        let beta = 0.1 + 0.3 * rng.random::<f64>();
        let zz = zz_scheme(alpha, beta, 2.5, 0.05);
        let problem = zz.riccati_problem();
        let (x1, x2) = if trial % 2 == 0 {
            (-2.5, 2.5)
        } else {
            (
                -2.5 + rng.random::<f64>() * 0.8,
                2.5 - rng.random::<f64>() * 0.8,
            )
        };
        // Forward map: pick a valid constant, compute its weight, use it as
        // the target.
        let c_probe = 40.0 + rng.random::<f64>() * 200.0;
        let target = endpoint_weight(&problem, x1, x2, c_probe).unwrap();
        match admissible_constants(&problem, x1, x2, target) {
            Ok((ca, cb, _)) => {
                if ca != cb {
                    two_roots += 1;
                }
                let mut ok = true;
                for (c, t) in [(ca, target), (cb, 1.0 - target)] {
                    if c.abs() >= 1e6 {
                        continue;
                    }
                    let w = endpoint_weight(&problem, x1, x2, c).unwrap();
                    ok &= (w - t).abs() <= 1e-6;
                }
                if ok {
                    reproduced += 1;
                }
            }
            Err(e) => panic!("feasible target rejected: {e}"),
        }
    }
    report(
        "6 riccati",
        closed_ok && two_roots == total && reproduced == total,
        &format!(
            "closed-vs-numeric max {max_dev:.2e} (tol 1e-6); {two_roots}/{total} targets gave 2 roots, \
             {reproduced}/{total} reproduced the weight within 1e-6"
        ),
    );
}

#[test]
fn acceptance_07_two_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_clusters = 0usize;
    for _ in 0..20 {
        let scheme = random_admissible_scheme(&mut rng, 4);
        // Deterministic all-plus endpoint products at three step sizes;
        // second-order Richardson extrapolation of the normalized singular
        // values removes the O(δ) and O(δ²) walk bias.
        let mut svs = Vec::new();
        for &delta in &[0.05, 0.025, 0.0125] {
            let config = WalkConfig::symmetric(delta, 1.5, 1).unwrap();
            let table = StepTable::new(&scheme, &config).unwrap();
            let init = QuantumState::new(vec![
                Complex64::new(0.5, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.5, 0.0),
            ])
            .unwrap();
            let n_half = table.last_node() - table.origin();
            let rec = run_forced(&init, &table, &vec![1i8; n_half], false).unwrap();
            let mut sv = rec.total_operator.singular_values();
            let top = sv.last().copied().unwrap_or(1.0);
            for s in &mut sv {
                *s /= top;
            }
            svs.push(sv);
        }
        let extrapolated: Vec<f64> = (0..svs[0].len())
            .map(|i| {
                let g1 = 2.0 * svs[1][i] - svs[0][i];
                let g2 = 2.0 * svs[2][i] - svs[1][i];
                (4.0 * g2 - g1) / 3.0
            })
            .collect();
        let diag = Operator::diag(
            &extrapolated
                .iter()
                .map(|v| Complex64::new(*v, 0.0))
                .collect::<Vec<_>>(),
        );
        let clusters = distinct_singular_values(&diag, 1e-4);
        worst_clusters = worst_clusters.max(clusters);
    }
    report(
        "7 two singular values",
        worst_clusters <= 2,
        &format!("max distinct singular values across 20 random admissible schemes: {worst_clusters}"),
    );
}

#[test]
fn acceptance_08_path_independence() {
    let delta = 0.05;
    let zz = zz_scheme(0.8, 0.2, 3.0, delta);
    let config = WalkConfig::symmetric(delta, 3.0, 5).unwrap();
    let table = StepTable::new(zz.probe_scheme(), &config).unwrap();
    let init = QuantumState::new(vec![Complex64::new(0.8, 0.1), Complex64::new(0.3, -0.5)]).unwrap();

    // Pairs of forced paths sharing an endpoint.
    let paths: [(Vec<i8>, Vec<i8>); 3] = [
        (vec![1; 4], vec![1, -1, 1, 1, -1, 1, 1, 1]),
        (vec![1, 1, -1, 1], vec![-1, 1, 1, 1]),
        (
            vec![-1; 6],
            vec![-1, -1, 1, -1, -1, 1, -1, -1, -1, -1],
        ),
    ];
    let mut worst = 0.0f64;
    let mut bound = f64::INFINITY;
    for (a, b) in &paths {
        assert_eq!(
            a.iter().map(|&s| s as i32).sum::<i32>(),
            b.iter().map(|&s| s as i32).sum::<i32>(),
            "paths must share an endpoint"
        );
        let ra = run_forced(&init, &table, a, false).unwrap();
        let rb = run_forced(&init, &table, b, false).unwrap();
        let (_, res) = mutual_proportionality_residual(&ra.total_operator, &rb.total_operator);
        worst = worst.max(res);
        bound = bound.min(10.0 * (a.len() + b.len()) as f64 * delta.powi(3));
    }
    report(
        "8 path independence",
        worst <= bound,
        &format!("max mutual residual {worst:.3e} ≤ bound {bound:.3e}"),
    );
}

#[test]
fn acceptance_09_unitary_padding() {
    let delta = 0.05;
    let zz = zz_scheme(0.8, 0.2, 3.0, delta);
    let config = WalkConfig::symmetric(delta, 3.0, 5).unwrap();
    let table = StepTable::new(zz.probe_scheme(), &config).unwrap();
    let gen = |x: f64| hermitian_exp(&probewalk::linalg::pauli_z(), 0.5 * x).unwrap();
    let padded = apply_unitary_padding(&table, gen).unwrap();
    let init = QuantumState::plus();
    let n_half = table.last_node() - table.origin();

    let mut sv_dev = 0.0f64;
    let mut factor_res = 0.0f64;
    for (dir, x_end) in [(1i8, 3.0), (-1i8, -3.0)] {
        let path = vec![dir; n_half];
        let plain = run_forced(&init, &table, &path, false).unwrap();
        let deco = run_forced(&init, &padded, &path, false).unwrap();
        let sv_p = deco.total_operator.singular_values();
        let sv_u = plain.total_operator.singular_values();
        for (a, b) in sv_p.iter().zip(&sv_u) {
            sv_dev = sv_dev.max((a - b).abs());
        }
        let expect = gen(x_end).mul(&plain.total_operator);
        let (_, res) = mutual_proportionality_residual(&deco.total_operator, &expect);
        factor_res = factor_res.max(res);
    }
    report(
        "9 unitary padding",
        sv_dev <= 1e-8 && factor_res <= 1e-9,
        &format!("singular-value deviation {sv_dev:.3e} (tol 1e-8), left-factor residual {factor_res:.3e}"),
    );
}

#[test]
fn acceptance_10_determinism() {
    // Byte-identical CSVs from identical seeds, via the real binary.
    let bin = env!("CARGO_BIN_EXE_probewalk");
    let dir = std::env::temp_dir().join(format!("probewalk-acc10-{}", std::process::id()));
    let run = |out: &str| {
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--trajectories",
                "200",
                "--seed",
                "31337",
                "--delta",
                "0.1",
                "--boundary",
                "2.0",
                "--record-states",
                "--out",
            ])
            .arg(dir.join(out))
            .status()
            .expect("binary runs");
        assert!(status.success());
        std::fs::read(dir.join(out).join("trajectories.csv")).unwrap()
    };
    let first = run("a");
    let second = run("b");
    let bytes_identical = first == second;

    // Ensemble statistics independent of thread count.
    let zz = zz_scheme(0.8, 0.2, 2.0, 0.1);
    let config = WalkConfig::symmetric(0.1, 2.0, 99).unwrap();
    let table = StepTable::new(zz.probe_scheme(), &config).unwrap();
    let init = QuantumState::plus();
    let stats_for = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_ensemble(&init, &table, 99, config.max_steps, 500, None).unwrap().0)
    };
    let s1 = stats_for(1);
    let s8 = stats_for(8);
    let thread_invariant = s1.freq_outcome1.to_bits() == s8.freq_outcome1.to_bits()
        && s1.mean_steps.to_bits() == s8.mean_steps.to_bits();

    std::fs::remove_dir_all(&dir).ok();
    report(
        "10 determinism",
        bytes_identical && thread_invariant,
        &format!(
            "CSV bytes identical: {bytes_identical}; stats equal across 1 vs 8 threads: {thread_invariant}"
        ),
    );
}
