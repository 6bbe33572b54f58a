//! The acceptance suite: ten end-to-end checks of the physics and of the
//! mitigation and statistics stack, each with a runtime budget.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    batch_counts, bayesian_intervals, estimate_cumulants, estimate_cumulants_counts, exact_cumulants_from_pmf,
    fit_decay, maxent_pmf, FitWeighting, PosteriorConfig, SweepPoint,
};
use crate::backend::Backend;
use crate::error::Result;
use crate::experiment::geomspace;
use crate::mitigation::{
    calibrate_readout, estimate_renorm, mitigate_cumulants, run_twirled, MitigationOptions, RenormFactor,
};
use crate::model::{CumulantSet, Estimator, QuenchSchedule};
use crate::mps::MpsOptions;
use crate::oracle;
use crate::rng;
use crate::statevector::{NoiseModel, SampleOptions, StateVector};
use crate::trotter::{build_quench_circuit, build_reference_circuit, Circuit, TrotterPlan, Variant};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {} ({:.1} s of {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget_secs: u64,
    check: Check,
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: "1",
        name: "plateau value",
        budget_secs: 10,
        check: plateau,
    },
    Criterion {
        id: "2",
        name: "finite-size decay rate",
        budget_secs: 300,
        check: finite_size_decay,
    },
    Criterion {
        id: "3",
        name: "thermodynamic trend",
        budget_secs: 1800,
        check: thermodynamic_trend,
    },
    Criterion {
        id: "4",
        name: "backend equivalence",
        budget_secs: 60,
        check: backend_equivalence,
    },
    Criterion {
        id: "5",
        name: "Trotter order",
        budget_secs: 60,
        check: trotter_order,
    },
    Criterion {
        id: "6",
        name: "mitigation exactness",
        budget_secs: 120,
        check: mitigation_exactness,
    },
    Criterion {
        id: "7",
        name: "renorm decay trend",
        budget_secs: 300,
        check: renorm_decay,
    },
    Criterion {
        id: "8",
        name: "readout correction",
        budget_secs: 120,
        check: readout_correction,
    },
    Criterion {
        id: "9",
        name: "maxent roundtrip",
        budget_secs: 1260,
        check: maxent_roundtrip,
    },
    Criterion {
        id: "10",
        name: "Bayesian coverage",
        budget_secs: 300,
        check: bayesian_coverage,
    },
];

/// Identifiers of the gated criteria, in order.
pub fn criterion_ids() -> Vec<&'static str> {
    CRITERIA.iter().map(|c| c.id).collect()
}

fn timed(id: &'static str, name: &'static str, budget_secs: u64, check: Check) -> CriterionReport {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let (passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str("; over the runtime budget");
    }
    CriterionReport {
        id,
        name,
        passed: passed && in_time,
        detail,
        elapsed,
        budget,
    }
}

/// Runs one criterion by id (`"1"`…`"10"`, or `"3-long"`).
pub fn run_criterion(id: &str) -> Option<CriterionReport> {
    if id == "3-long" {
        return Some(timed(
            "3L",
            "thermodynamic trend, κ₂ and κ₃ at 10⁵ shots",
            4 * 3600,
            thermodynamic_long,
        ));
    }
    CRITERIA
        .iter()
        .find(|c| c.id == id)
        .map(|c| timed(c.id, c.name, c.budget_secs, c.check))
}

/// Runs all criteria in order, plus the ungated long variant of 3 if asked.
pub fn run_all(long: bool) -> Vec<CriterionReport> {
    let mut out: Vec<CriterionReport> = CRITERIA
        .iter()
        .map(|c| timed(c.id, c.name, c.budget_secs, c.check))
        .collect();
    if long {
        out.extend(run_criterion("3-long"));
    }
    out
}

fn quench(n: usize, tau_q: f64, r: usize) -> Result<Circuit> {
    build_quench_circuit(n, &QuenchSchedule::new(tau_q)?, &TrotterPlan::new(r, tau_q)?)
}

fn exact_sv(c: &Circuit) -> Result<CumulantSet> {
    Backend::StateVector.exact_cumulants(c)
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn plateau() -> Result<(bool, String)> {
    let n = 19;
    let target = (n - 1) as f64 / (2 * n) as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for (tau, r) in [(0.01, 1), (0.1, 1), (0.1, 10)] {
        let k1 = exact_sv(&quench(n, tau, r)?)?.kappa1;
        ok &= (k1 - target).abs() <= 0.02;
        parts.push(format!("κ₁(τ={tau}, r={r}) = {k1:.4}"));
    }
    Ok((ok, format!("{} vs {target:.4} ± 0.02", parts.join(", "))))
}

fn exact_sweep(backend: &Backend, n: usize, taus: &[f64], r: usize) -> Result<Vec<SweepPoint>> {
    taus.par_iter()
        .map(|&t| {
            Ok(SweepPoint {
                tau_q: t,
                r,
                cumulants: backend.exact_cumulants(&quench(n, t, r)?)?,
                shots: 0,
                backend: backend.name().into(),
                mitigation_ref: None,
            })
        })
        .collect()
}

fn finite_size_decay() -> Result<(bool, String)> {
    let n = 19;
    let pts = exact_sweep(&Backend::StateVector, n, &geomspace(1.0, 10.0, 10)?, 100)?;
    let fit = fit_decay(&pts, 1, n, Some([1.0, 10.0]), FitWeighting::Unweighted)?;
    Ok((
        (fit.alpha - 0.68).abs() <= 0.05,
        format!(
            "α = {:.3} ± {:.3} over {} points, want 0.68 ± 0.05",
            fit.alpha, fit.alpha_stderr, fit.n_points
        ),
    ))
}

/// Sampled κ sweep on the MPS backend.
fn mps_sampled_sweep(n: usize, taus: &[f64], r: usize, shots: usize, seed: u64) -> Result<Vec<SweepPoint>> {
    let backend = Backend::Mps(MpsOptions::default());
    taus.par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = quench(n, t, r)?;
            let batch = backend.run_noisy(
                &c,
                &NoiseModel::noiseless(),
                shots,
                rng::derive(seed, i as u64),
                &SampleOptions::default(),
            )?;
            Ok(SweepPoint {
                tau_q: t,
                r,
                cumulants: estimate_cumulants(&batch, n)?,
                shots: shots as u64,
                backend: backend.name().into(),
                mitigation_ref: None,
            })
        })
        .collect()
}

const TREND_SIZES: [usize; 3] = [25, 50, 100];

fn thermodynamic_trend() -> Result<(bool, String)> {
    let taus = geomspace(1.0, 20.0, 10)?;
    let mut alphas = Vec::new();
    let mut parts = Vec::new();
    for (i, &n) in TREND_SIZES.iter().enumerate() {
        let pts = mps_sampled_sweep(n, &taus, 300, 10_000, rng::derive(31, i as u64))?;
        let fit = fit_decay(&pts, 1, n, None, FitWeighting::Unweighted)?;
        parts.push(format!(
            "α({n}) = {:.3} ± {:.3}{}",
            fit.alpha,
            fit.alpha_stderr,
            if fit.tau_f_reached { "" } else { " (τ_f beyond sweep)" }
        ));
        alphas.push(fit.alpha);
    }
    let decreasing = alphas.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing && within(alphas[2], 0.5, 0.62) && alphas.iter().all(|&a| a > 0.5);
    Ok((
        ok,
        format!("{}; want strictly decreasing, α(100) in [0.5, 0.62]", parts.join(", ")),
    ))
}

fn thermodynamic_long() -> Result<(bool, String)> {
    let taus = geomspace(1.0, 20.0, 10)?;
    let mut parts = Vec::new();
    for (i, &n) in TREND_SIZES.iter().enumerate() {
        let pts = mps_sampled_sweep(n, &taus, 300, 100_000, rng::derive(37, i as u64))?;
        for m in 1..=3 {
            match fit_decay(&pts, m, n, None, FitWeighting::Unweighted) {
                Ok(f) => parts.push(format!("N={n} κ{m}: α = {:.3} ± {:.3}", f.alpha, f.alpha_stderr)),
                Err(e) => parts.push(format!("N={n} κ{m}: {e}")),
            }
        }
    }
    Ok((true, parts.join("; ")))
}

fn backend_equivalence() -> Result<(bool, String)> {
    let n = 12;
    let taus = geomspace(0.5, 10.0, 10)?;
    let exact = Backend::Mps(MpsOptions {
        trunc_tol: 0.0,
        ..MpsOptions::default()
    });
    let truncated = Backend::Mps(MpsOptions::default());
    let devs: Vec<(f64, f64)> = taus
        .par_iter()
        .map(|&t| {
            let c = quench(n, t, 50)?;
            let sv = Backend::StateVector.kink_density(&c)?;
            Ok((
                (exact.kink_density(&c)? - sv).abs(),
                (truncated.kink_density(&c)? - sv).abs(),
            ))
        })
        .collect::<Result<_>>()?;
    let worst = devs.iter().map(|d| d.0).fold(0.0, f64::max);
    let worst_tol = devs.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok((
        worst <= 1e-8,
        format!(
            "max |Δ⟨n̂⟩| = {worst:.1e} over {} points, want ≤ 1e-8 (at trunc_tol 1e-10: {worst_tol:.1e})",
            devs.len()
        ),
    ))
}

fn trotter_order() -> Result<(bool, String)> {
    let (n, tau) = (6, 2.0);
    let schedule = QuenchSchedule::new(tau)?;
    let psi = oracle::quench_final_state(n, &schedule, oracle::DEFAULT_ODE_STEPS);
    let exact: f64 = (0..n - 1)
        .map(|b| (1.0 - oracle::expectation(&psi, &oracle::bond_operator(n, b))) / (2 * n) as f64)
        .sum();
    let steps = [25, 50, 100, 200, 400];
    let errors: Vec<f64> = steps
        .iter()
        .map(|&r| Ok((Backend::StateVector.kink_density(&quench(n, tau, r)?)? - exact).abs()))
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    // asymptotic regime: the last two halvings
    let ok = ratios[ratios.len() - 2..].iter().all(|&q| within(q, 3.0, 5.0));
    let shown: Vec<String> = ratios.iter().map(|q| format!("{q:.2}")).collect();
    Ok((
        ok,
        format!(
            "error {:.1e} at r=25 to {:.1e} at r=400, ratios per halving [{}], want the last two in [3, 5]",
            errors[0],
            errors[errors.len() - 1],
            shown.join(", ")
        ),
    ))
}

fn mitigation_exactness() -> Result<(bool, String)> {
    let n = 6;
    let c = quench(n, 2.0, 10)?;
    let truth = exact_sv(&c)?;
    let noise = NoiseModel::global(0.4);
    let opts = MitigationOptions::default();
    let sv = Backend::StateVector;
    let batch = run_twirled(&sv, &c, &noise, 100_000, opts.n_twirls, 61, &SampleOptions::default())?;
    let reference = build_reference_circuit(&c, Variant::ZeroField)?;
    let renorm = estimate_renorm(&sv, &reference, &noise, 100_000, None, &opts, 62)?;
    let mit = mitigate_cumulants(&batch, None, &renorm, &opts)?;
    let raw = estimate_cumulants(&batch, n)?;
    let z = |m: usize| (mit.kappa(m) - truth.kappa(m)).abs() / mit.stderr(m);
    let z_raw = (raw.kappa1 - truth.kappa1).abs() / raw.stderr1;
    Ok((
        z(1) <= 3.0 && z(2) <= 3.0 && z_raw >= 10.0,
        format!(
            "R = {:.4}, mitigated κ₁ {:.4} ({:.1}σ), κ₂ {:.5} ({:.1}σ) vs {:.4}, {:.5}; raw κ₁ {:.4} ({:.0}σ)",
            renorm.value,
            mit.kappa1,
            z(1),
            mit.kappa2,
            z(2),
            truth.kappa1,
            truth.kappa2,
            raw.kappa1,
            z_raw
        ),
    ))
}

fn renorm_decay() -> Result<(bool, String)> {
    let n = 10;
    let noise = NoiseModel::local(0.005);
    let opts = MitigationOptions::default();
    let rs: Vec<usize> = (2..=20).collect();
    let factors: Vec<RenormFactor> = rs
        .par_iter()
        .map(|&r| {
            let c = quench(n, r as f64, r)?;
            let reference = build_reference_circuit(&c, Variant::ZeroField)?;
            estimate_renorm(
                &Backend::StateVector,
                &reference,
                &noise,
                20_000,
                None,
                &opts,
                rng::derive(71, r as u64),
            )
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = rs.iter().map(|&r| r as f64).collect();
    let y: Vec<f64> = factors.iter().map(|f| f.value.ln()).collect();
    let (slope, r2) = linear_fit(&x, &y);
    Ok((
        r2 >= 0.95 && slope < 0.0,
        format!(
            "R from {:.4} (r=2) to {:.4} (r=20), ln R slope {slope:.4} per step, R² = {r2:.4}, want ≥ 0.95",
            factors[0].value,
            factors[factors.len() - 1].value
        ),
    ))
}

/// Ordinary least squares slope and coefficient of determination.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

fn readout_correction() -> Result<(bool, String)> {
    let n = 6;
    let c = quench(n, 2.0, 10)?;
    let truth = exact_sv(&c)?;
    let noise = NoiseModel::noiseless().with_uniform_readout(n, 0.02, 0.05);
    let opts = MitigationOptions::default();
    let sv = Backend::StateVector;
    let batch = run_twirled(&sv, &c, &noise, 100_000, opts.n_twirls, 81, &SampleOptions::default())?;
    let confusion = calibrate_readout(&sv, n, 100_000, &noise.readout_only(), true, 82)?;
    let mit = mitigate_cumulants(&batch, Some(&confusion), &RenormFactor::unit(), &opts)?;
    let raw = estimate_cumulants(&batch, n)?;
    let z = (mit.kappa1 - truth.kappa1).abs() / mit.stderr1;
    Ok((
        z <= 3.0,
        format!(
            "corrected κ₁ {:.4} ± {:.4} ({z:.1}σ) vs noiseless {:.4}; uncorrected {:.4}",
            mit.kappa1, mit.stderr1, truth.kappa1, raw.kappa1
        ),
    ))
}

fn maxent_roundtrip() -> Result<(bool, String)> {
    // Binomial(19, 0.3) kink counts live on a 20-qubit chain
    let n = 20;
    let pmf = oracle::binomial_pmf(19, 0.3);
    let mu = |p: &[f64], j: i32| -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, q)| q * (k as f64 / n as f64).powi(j))
            .sum()
    };
    let target = [mu(&pmf, 1), mu(&pmf, 2), mu(&pmf, 3)];
    let sol = maxent_pmf(target, n)?;
    let resid = (1..=3)
        .map(|j| (mu(&sol.pmf, j) - target[j as usize - 1]).abs())
        .fold(0.0, f64::max);

    let big = 150;
    let taus = [1.0, 2.0, 5.0, 10.0];
    let backend = Backend::Mps(MpsOptions::default());
    let recon: Vec<CumulantSet> = taus
        .par_iter()
        .map(|&t| {
            let m = backend.exact_kinks(&quench(big, t, 300)?)?.moments;
            let sol = maxent_pmf(m, big)?;
            let mut c = exact_cumulants_from_pmf(&sol.pmf, big)?;
            c.estimator = Estimator::Exact;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let dec = |f: fn(&CumulantSet) -> f64| recon.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let narrowing = dec(|c| c.kappa1) && dec(|c| c.kappa2);
    let shown: Vec<String> = taus
        .iter()
        .zip(&recon)
        .map(|(t, c)| format!("τ={t}: κ₁ {:.4} κ₂ {:.2e}", c.kappa1, c.kappa2))
        .collect();
    Ok((
        resid <= 1e-6 && narrowing,
        format!(
            "binomial moment residual {resid:.1e} (want ≤ 1e-6); N=150 {}",
            shown.join(", ")
        ),
    ))
}

fn bayesian_coverage() -> Result<(bool, String)> {
    let n = 6;
    let c = quench(n, 2.0, 10)?;
    let state = StateVector::run(&c)?;
    let truth: f64 = state
        .kink_distribution()
        .iter()
        .enumerate()
        .map(|(k, p)| p * k as f64 / n as f64)
        .sum();
    let cfg = PosteriorConfig::default();
    let experiments = 200;
    let base = rng::derive(101, rng::label::MAIN_RUN);
    let covered: usize = (0..experiments)
        .into_par_iter()
        .map(|i| {
            let batch = Backend::StateVector.run_noisy(
                &c,
                &NoiseModel::noiseless(),
                2000,
                rng::derive(base, i),
                &SampleOptions::default(),
            )?;
            let counts = batch_counts(&batch);
            let post = bayesian_intervals(&counts, |d| estimate_cumulants_counts(d, n), &cfg, rng::derive(102, i))?;
            let [lo, hi] = post.ci[0];
            Ok(usize::from(lo <= truth && truth <= hi))
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let rate = covered as f64 / experiments as f64;
    Ok((
        rate >= 0.90,
        format!(
            "{covered}/{experiments} intervals cover κ₁ = {truth:.4} ({:.1} %), want ≥ 90 %",
            100.0 * rate
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let r = CriterionReport {
            id: "4",
            name: "backend equivalence",
            passed: true,
            detail: "ok".into(),
            elapsed: Duration::from_millis(1500),
            budget: Duration::from_secs(60),
        };
        assert_eq!(r.to_string(), "[PASS]  4 backend equivalence: ok (1.5 s of 60 s)");
    }

    #[test]
    fn r_squared_of_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.5, 0.3, 0.1, -0.1];
        let (s, r2) = linear_fit(&x, &y);
        assert!((s + 0.2).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion("11").is_none());
        assert_eq!(criterion_ids().len(), 10);
    }
}
