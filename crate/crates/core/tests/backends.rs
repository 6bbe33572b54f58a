use kzm::model::QuenchSchedule;
use kzm::mps::{MpsOptions, MpsState};
use kzm::oracle;
use kzm::statevector::{NoiseModel, SampleOptions, StateVector};
use kzm::trotter::{build_quench_circuit, build_reference_circuit, Circuit, MeasureBasis, TrotterPlan, Variant};
use kzm::{analysis, Backend};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn quench(n: usize, tau_q: f64, r: usize) -> Circuit {
    build_quench_circuit(
        n,
        &QuenchSchedule::new(tau_q).unwrap(),
        &TrotterPlan::new(r, tau_q).unwrap(),
    )
    .unwrap()
}

fn exact_mps() -> MpsOptions {
    MpsOptions {
        trunc_tol: 0.0,
        ..MpsOptions::default()
    }
}

#[test]
fn mps_matches_statevector_at_fourteen_qubits() {
    let c = quench(14, 3.0, 100);
    let sv = Backend::StateVector.bond_correlators(&c).unwrap();
    let exact = Backend::Mps(exact_mps()).bond_correlators(&c).unwrap();
    for (a, b) in sv.iter().zip(&exact) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
    // with the default truncation, errors follow the square root of the discarded weight
    let mps = MpsState::run_ops(14, c.pre_measurement_ops(), MpsOptions::default()).unwrap();
    let bound = 4.0 * (mps.stats().two_site_gates as f64 * mps.stats().discarded_weight).sqrt();
    for (a, b) in sv.iter().zip(mps.bond_correlators()) {
        assert!((a - b).abs() <= bound.max(1e-12), "{a} vs {b}, bound {bound}");
    }
}

#[test]
fn mps_truncation_bookkeeping() {
    let c = quench(16, 5.0, 60);
    let tol = 1e-10;
    let mps = MpsState::run(&c, MpsOptions::default()).unwrap();
    let s = mps.stats();
    assert!(s.worst_discarded <= tol);
    assert!(s.discarded_weight <= tol * s.truncations as f64 + 1e-15);
    assert!(mps.isometry_residual() <= 1e-10);
    assert!((mps.norm_sqr() - 1.0).abs() <= 1e-10);
}

fn pearson_p(observed: &[f64], expected: &[f64]) -> f64 {
    let chi2: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(chi2)
}

#[test]
fn mps_samples_follow_marginals() {
    let n = 8;
    let shots = 100_000;
    let c = quench(n, 2.0, 30);
    let probs = StateVector::run(&c).unwrap().probabilities();
    let batch = MpsState::run_ops(n, &c.ops, exact_mps())
        .unwrap()
        .sample(shots, MeasureBasis::Z, 7)
        .unwrap();
    let total = shots as f64;
    for k in 0..n {
        let mut exp = [0.0; 2];
        for (i, p) in probs.iter().enumerate() {
            exp[(i >> k) & 1] += p * total;
        }
        let mut obs = [0.0; 2];
        for s in &batch.shots {
            obs[usize::from(s.bits.get(k))] += 1.0;
        }
        let p = pearson_p(&obs, &exp);
        assert!(p > 0.01, "site {k}: p = {p}");
    }
    for k in 0..n - 1 {
        let mut exp = [0.0; 4];
        for (i, p) in probs.iter().enumerate() {
            exp[(i >> k) & 3] += p * total;
        }
        let mut obs = [0.0; 4];
        for s in &batch.shots {
            obs[usize::from(s.bits.get(k)) | usize::from(s.bits.get(k + 1)) << 1] += 1.0;
        }
        let p = pearson_p(&obs, &exp);
        assert!(p > 0.01, "sites {k},{}: p = {p}", k + 1);
    }
}

#[test]
fn mps_sampled_density_within_three_sigma() {
    let c = quench(10, 1.5, 20);
    let exact = Backend::StateVector.kink_density(&c).unwrap();
    let batch = Backend::Mps(MpsOptions::default())
        .run_noisy(&c, &NoiseModel::noiseless(), 100_000, 11, &SampleOptions::default())
        .unwrap();
    let est = analysis::estimate_cumulants(&batch, 10).unwrap();
    assert!(
        (est.kappa1 - exact).abs() <= 3.0 * est.stderr(1),
        "{} vs {exact}",
        est.kappa1
    );
}

#[test]
fn mps_handles_a_hundred_qubits() {
    let c = quench(100, 5.0, 300);
    let exact = Backend::Mps(MpsOptions::default()).exact_kinks(&c).unwrap();
    let stats = exact.mps_stats.unwrap();
    assert_eq!(stats.two_site_gates, c.coupling_count());
    assert!(stats.max_bond >= 2);
    assert!(exact.moments[0] > 0.0 && exact.moments[0] < 0.5);
}

#[test]
fn trotter_converges_to_the_ode() {
    let schedule = QuenchSchedule::new(2.0).unwrap();
    let psi = oracle::quench_final_state(4, &schedule, oracle::DEFAULT_ODE_STEPS);
    let exact = oracle::expectation(&psi, &oracle::kink_operator(4));
    let trotter = Backend::StateVector.kink_density(&quench(4, 2.0, 2000)).unwrap();
    assert!((trotter - exact).abs() <= 1e-6, "{trotter} vs {exact}");
}

#[test]
fn trotter_error_is_second_order() {
    for tau_q in [1.0, 2.0, 5.0] {
        let schedule = QuenchSchedule::new(tau_q).unwrap();
        let psi = oracle::quench_final_state(4, &schedule, oracle::DEFAULT_ODE_STEPS);
        let exact = oracle::expectation(&psi, &oracle::kink_operator(4));
        let err: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&r| (Backend::StateVector.kink_density(&quench(4, tau_q, r)).unwrap() - exact).abs())
            .collect();
        for w in err.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "tau_q {tau_q}: ratio {ratio}");
        }
    }
}

#[test]
fn pi_field_reference_matches_the_dense_unitary() {
    let base = quench(2, 1.0, 1);
    let pi = build_reference_circuit(&base, Variant::PiField).unwrap();
    let u = oracle::ops_unitary(2, pi.pre_measurement_ops());
    let psi = u * oracle::basis_state(2, 0);
    let dense = oracle::expectation(&psi, &oracle::x_string(2, 0b11));
    let sv = Backend::StateVector.bond_correlators(&pi).unwrap()[0];
    assert!((dense - sv).abs() <= 1e-12, "{dense} vs {sv}");
}

#[test]
fn zero_field_reference_has_no_kinks() {
    let base = quench(19, 2.0, 20);
    let zero = build_reference_circuit(&base, Variant::ZeroField).unwrap();
    let batch = Backend::StateVector
        .run_noisy(&zero, &NoiseModel::noiseless(), 2000, 3, &SampleOptions::default())
        .unwrap();
    assert!(batch.kink_counts().iter().all(|&k| k == 0));
}

#[test]
fn sampled_bond_correlators_match_exact() {
    let c = quench(6, 2.0, 10);
    let exact = Backend::StateVector.bond_correlators(&c).unwrap();
    let batch = Backend::StateVector
        .run_noisy(&c, &NoiseModel::noiseless(), 100_000, 5, &SampleOptions::default())
        .unwrap();
    let shots = batch.len() as f64;
    for (b, e) in exact.iter().enumerate() {
        let mean = batch
            .shots
            .iter()
            .map(|s| if s.bits.get(b) == s.bits.get(b + 1) { 1.0 } else { -1.0 })
            .sum::<f64>()
            / shots;
        let sigma = ((1.0 - e * e) / shots).sqrt().max(1e-9);
        assert!((mean - e).abs() <= 3.0 * sigma, "bond {b}: {mean} vs {e}");
    }
}

#[test]
fn all_zero_state_in_x_basis_is_binomial() {
    let n = 8;
    let c = Circuit::bare(n, vec![kzm::trotter::GateOp::HadamardLayer], MeasureBasis::X);
    let pmf = StateVector::run(&c).unwrap().kink_distribution();
    for (a, b) in pmf.iter().zip(oracle::binomial_pmf(n - 1, 0.5)) {
        assert!((a - b).abs() <= 1e-12);
    }
}
