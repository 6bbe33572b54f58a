//! Kink statistics from samples: cumulant estimators, Bayesian intervals by
//! posterior resampling, power-law decay fits and maximum-entropy
//! reconstruction of the kink distribution.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::{cumulants_from_moments, CumulantSet, Estimator, KinkSample, MOMENT_TOLERANCE};
use crate::rng;
use crate::statevector::BitstringBatch;

/// Distinct outcomes with multiplicities.
pub type Counts = Vec<(BitString, u64)>;

pub fn batch_counts(batch: &BitstringBatch) -> Counts {
    batch.counts().into_iter().collect()
}

/// Histogram of kink counts.
pub fn kink_histogram(counts: &[(BitString, u64)]) -> Vec<KinkSample> {
    let mut h: BTreeMap<usize, u64> = BTreeMap::new();
    for (b, c) in counts {
        *h.entry(b.kink_count()).or_insert(0) += c;
    }
    h.into_iter()
        .map(|(k, shot_weight)| KinkSample { k, shot_weight })
        .collect()
}

/// k-statistics of weighted values with large-sample standard errors.
pub fn weighted_kstatistics(values: &[(f64, u64)]) -> Result<CumulantSet> {
    let s: u64 = values.iter().map(|v| v.1).sum();
    if s == 0 {
        return Err(Error::EmptyBatch);
    }
    let sf = s as f64;
    let mean = values.iter().map(|&(x, w)| x * w as f64).sum::<f64>() / sf;
    let central = |p: i32| values.iter().map(|&(x, w)| (x - mean).powi(p) * w as f64).sum::<f64>() / sf;
    let (m2, m3, m4, m6) = (central(2), central(3), central(4), central(6));
    let k2 = if s > 1 { sf / (sf - 1.0) * m2 } else { 0.0 };
    let k3 = if s > 2 {
        sf * sf / ((sf - 1.0) * (sf - 2.0)) * m3
    } else {
        0.0
    };
    let se1 = (k2 / sf).sqrt();
    let se2 = ((m4 - m2 * m2).max(0.0) / sf).sqrt();
    let se3 = ((m6 - m3 * m3 - 6.0 * m4 * m2 + 9.0 * m2 * m2 * m2).max(0.0) / sf).sqrt();
    Ok(CumulantSet::new(
        [mean, k2, k3],
        [se1, se2, se3],
        Estimator::KStatistics,
    ))
}

/// Sample mean, unbiased variance and k-statistic third cumulant of the
/// per-shot kink density `k / N`.
pub fn estimate_cumulants(batch: &BitstringBatch, n_qubits: usize) -> Result<CumulantSet> {
    estimate_cumulants_counts(&batch_counts(batch), n_qubits)
}

pub fn estimate_cumulants_counts(counts: &[(BitString, u64)], n_qubits: usize) -> Result<CumulantSet> {
    let values: Vec<(f64, u64)> = kink_histogram(counts)
        .iter()
        .map(|s| (s.density(n_qubits), s.shot_weight))
        .collect();
    weighted_kstatistics(&values)
}

/// Cumulants of `k / N` for a distribution over `k`.
pub fn exact_cumulants_from_pmf(pmf: &[f64], n_qubits: usize) -> Result<CumulantSet> {
    let n = n_qubits as f64;
    let mu = |j: i32| -> f64 { pmf.iter().enumerate().map(|(k, p)| p * (k as f64 / n).powi(j)).sum() };
    let mut c = cumulants_from_moments(mu(1), mu(2), mu(3))?;
    c.estimator = Estimator::Exact;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorConfig {
    /// Added to every observed string's count.
    pub prior_pseudocount: f64,
    pub n_replicas: usize,
    /// Synthetic shots per replica; `None` reuses each dataset's size.
    pub resample_size: Option<usize>,
    pub ci_level: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            prior_pseudocount: 1.0,
            n_replicas: 500,
            resample_size: None,
            ci_level: 0.95,
        }
    }
}

/// Dirichlet posterior over the strings seen in one dataset.
pub struct DirichletPosterior {
    strings: Vec<BitString>,
    gammas: Vec<Gamma<f64>>,
    shots: u64,
}

impl DirichletPosterior {
    pub fn new(counts: &[(BitString, u64)], pseudocount: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !(pseudocount > 0.0) {
            return Err(Error::Domain {
                what: "prior_pseudocount",
                value: pseudocount,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let gammas = counts
            .iter()
            .map(|(_, c)| Gamma::new(*c as f64 + pseudocount, 1.0).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self {
            strings: counts.iter().map(|(b, _)| b.clone()).collect(),
            gammas,
            shots: counts.iter().map(|(_, c)| c).sum(),
        })
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn is_degenerate(&self) -> bool {
        self.strings.len() < 2
    }

    /// One probability vector from the posterior (normalized Gamma draws).
    pub fn draw_probabilities(&self, rng: &mut impl Rng) -> Vec<f64> {
        let g: Vec<f64> = self.gammas.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        g.into_iter().map(|x| x / total).collect()
    }

    /// `size` strings drawn from `probs`, returned as counts.
    pub fn resample(&self, probs: &[f64], size: usize, rng: &mut impl Rng) -> Counts {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in probs {
            acc += p;
            cdf.push(acc);
        }
        let mut hits = vec![0u64; probs.len()];
        for _ in 0..size {
            let u = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
            hits[i] += 1;
        }
        self.strings
            .iter()
            .zip(hits)
            .filter(|(_, h)| *h > 0)
            .map(|(b, h)| (b.clone(), h))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Equal-tailed interval per cumulant order.
    pub ci: [[f64; 2]; 3],
    /// Replica standard deviation per cumulant order.
    pub replica_std: [f64; 3],
    pub replicas: usize,
    pub failed_replicas: usize,
    /// Some dataset had a single observed string.
    pub degenerate: bool,
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bayesian data augmentation over one dataset.
pub fn bayesian_intervals<F>(
    counts: &[(BitString, u64)],
    estimator: F,
    config: &PosteriorConfig,
    seed: u64,
) -> Result<PosteriorSummary>
where
    F: Fn(&[(BitString, u64)]) -> Result<CumulantSet> + Sync,
{
    bayesian_intervals_multi(&[counts], |d: &[Counts]| estimator(&d[0]), config, seed)
}

/// Bayesian data augmentation over several independent datasets (for
/// example a main run and its reference run). Each replica redraws every
/// dataset from its own posterior and re-runs `estimator` on the lot.
pub fn bayesian_intervals_multi<F>(
    datasets: &[&[(BitString, u64)]],
    estimator: F,
    config: &PosteriorConfig,
    seed: u64,
) -> Result<PosteriorSummary>
where
    F: Fn(&[Counts]) -> Result<CumulantSet> + Sync,
{
    if !(config.ci_level > 0.0 && config.ci_level < 1.0) {
        return Err(Error::Domain {
            what: "ci_level",
            value: config.ci_level,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if config.n_replicas < 2 {
        return Err(Error::Config("need at least two posterior replicas".into()));
    }
    let posteriors = datasets
        .iter()
        .map(|c| DirichletPosterior::new(c, config.prior_pseudocount))
        .collect::<Result<Vec<_>>>()?;
    let base = rng::derive(seed, rng::label::POSTERIOR);
    let results: Vec<Option<CumulantSet>> = (0..config.n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            let synthetic: Vec<Counts> = posteriors
                .iter()
                .map(|p| {
                    let probs = p.draw_probabilities(&mut r);
                    let size = config.resample_size.unwrap_or(p.shots() as usize);
                    p.resample(&probs, size, &mut r)
                })
                .collect();
            estimator(&synthetic).ok()
        })
        .collect();
    let ok: Vec<CumulantSet> = results.iter().flatten().copied().collect();
    let failed = results.len() - ok.len();
    if ok.len() < 2 || failed * 2 > results.len() {
        return Err(Error::Fit(format!(
            "{failed} of {} posterior replicas failed",
            results.len()
        )));
    }
    let tail = (1.0 - config.ci_level) / 2.0;
    let mut ci = [[0.0; 2]; 3];
    let mut replica_std = [0.0; 3];
    for m in 0..3 {
        let mut v: Vec<f64> = ok.iter().map(|c| c.kappa(m + 1)).collect();
        v.sort_by(f64::total_cmp);
        ci[m] = [percentile(&v, tail), percentile(&v, 1.0 - tail)];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        replica_std[m] = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    }
    Ok(PosteriorSummary {
        ci,
        replica_std,
        replicas: ok.len(),
        failed_replicas: failed,
        degenerate: posteriors.iter().any(DirichletPosterior::is_degenerate),
    })
}

/// One `(τ_Q, r)` data point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau_q: f64,
    pub r: usize,
    pub cumulants: CumulantSet,
    /// Zero for exact evaluations.
    pub shots: u64,
    pub backend: String,
    /// Key of the mitigation report stored alongside, if any.
    pub mitigation_ref: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeighting {
    #[default]
    Unweighted,
    /// Weights `(κ / stderr)²`, the inverse variance of `ln κ`.
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub cumulant: usize,
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub n_points: usize,
    pub residual_rms: f64,
    /// Where `κ₁` crosses `1/N`, or the end of the sweep.
    pub tau_f: f64,
    pub tau_f_reached: bool,
    pub weighting: FitWeighting,
}

/// `τ_f` with `κ₁(τ_f) = 1/N`, by linear interpolation of `ln κ₁` against
/// `ln τ_Q` between the first bracketing pair. Falls back to the largest
/// `τ_Q` (second field `false`) when the sweep never reaches `1/N`.
pub fn crossing_time(points: &[SweepPoint], n_qubits: usize) -> Result<(f64, bool)> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.tau_q, p.cumulants.kappa1)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let last = pts.last().ok_or_else(|| Error::Fit("no sweep points".into()))?.0;
    let target = 1.0 / n_qubits as f64;
    for w in pts.windows(2) {
        let ((t0, k0), (t1, k1)) = (w[0], w[1]);
        if k0 >= target && k1 < target {
            if k1 <= 0.0 {
                return Ok((t1, true));
            }
            let f = (target.ln() - k0.ln()) / (k1.ln() - k0.ln());
            return Ok(((t0.ln() + f * (t1.ln() - t0.ln())).exp(), true));
        }
    }
    Ok((last, false))
}

/// Least-squares fit of `ln κ_m = c − α ln τ_Q` over `[1, τ_f]` or the
/// given window.
pub fn fit_decay(
    points: &[SweepPoint],
    cumulant_index: usize,
    n_qubits: usize,
    window_override: Option<[f64; 2]>,
    weighting: FitWeighting,
) -> Result<FitResult> {
    if !(1..=3).contains(&cumulant_index) {
        return Err(Error::UnsupportedOrder(cumulant_index as u32));
    }
    let (tau_f, reached) = crossing_time(points, n_qubits)?;
    let window = window_override.unwrap_or([1.0, tau_f]);
    let slack = 1e-12;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for p in points {
        if p.tau_q < window[0] * (1.0 - slack) || p.tau_q > window[1] * (1.0 + slack) {
            continue;
        }
        let k = p.cumulants.kappa(cumulant_index);
        if !(k > 0.0) {
            return Err(Error::Fit(format!(
                "κ{cumulant_index} = {k} at τ_Q = {} cannot be log-fitted",
                p.tau_q
            )));
        }
        xs.push(p.tau_q.ln());
        ys.push(k.ln());
        ws.push(match weighting {
            FitWeighting::Unweighted => 1.0,
            FitWeighting::InverseVariance => {
                let se = p.cumulants.stderr(cumulant_index);
                if !(se > 0.0) {
                    return Err(Error::Fit("inverse-variance weighting needs positive stderrs".into()));
                }
                (k / se).powi(2)
            }
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Fit(format!(
            "only {n} points inside the window [{}, {}]",
            window[0], window[1]
        )));
    }
    let wsum: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all points share one τ_Q".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - intercept - slope * x).collect();
    let ssr: f64 = resid.iter().zip(&ws).map(|(r, w)| w * r * r).sum();
    let sigma2 = if n > 2 { ssr / (n - 2) as f64 } else { 0.0 };
    Ok(FitResult {
        cumulant: cumulant_index,
        alpha: -slope,
        alpha_stderr: (sigma2 / sxx).sqrt(),
        intercept,
        window,
        n_points: n,
        residual_rms: (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt(),
        tau_f,
        tau_f_reached: reached,
        weighting,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEntOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntSolution {
    pub n_qubits: usize,
    pub moments_in: [f64; 3],
    /// Multipliers of `k`, `k²`, `k³` in `P(k) ∝ exp(λ₁k + λ₂k² + λ₃k³)`.
    pub lambda: [f64; 3],
    /// Probabilities of `k = 0..N−1`.
    pub pmf: Vec<f64>,
    /// The support as densities `k / N`.
    pub density: Vec<f64>,
    /// Reconstructed minus target moments of the density.
    pub moment_residuals: [f64; 3],
    pub iterations: usize,
    /// Dual objective after every accepted step.
    pub dual_trace: Vec<f64>,
}

/// Checks that `(μ₁, μ₂, μ₃)` lie strictly inside the moment space of
/// distributions on `[a, b]` (both localizing Hankel matrices positive
/// definite).
pub fn check_moment_feasibility(mu: [f64; 3], a: f64, b: f64) -> Result<()> {
    let [m1, m2, m3] = mu;
    let var = m2 - m1 * m1;
    let lower = [[m1 - a, m2 - a * m1], [m2 - a * m1, m3 - a * m2]];
    let upper = [[b - m1, b * m1 - m2], [b * m1 - m2, b * m2 - m3]];
    let pd = |h: [[f64; 2]; 2]| h[0][0] > 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0;
    if !(var > 0.0) {
        return Err(Error::Infeasible(format!("variance {var:e} is not positive")));
    }
    if !pd(lower) || !pd(upper) {
        return Err(Error::Infeasible(format!(
            "({m1}, {m2}, {m3}) lies outside the moment space on [{a}, {b}]"
        )));
    }
    Ok(())
}

/// Maximum-entropy distribution of the kink density on `{0, 1/N, …,
/// (N−1)/N}` with prescribed first three moments.
pub fn maxent_pmf(moments: [f64; 3], n_qubits: usize) -> Result<MaxEntSolution> {
    maxent_pmf_with(moments, n_qubits, &MaxEntOptions::default())
}

pub fn maxent_pmf_with(moments: [f64; 3], n_qubits: usize, options: &MaxEntOptions) -> Result<MaxEntSolution> {
    if n_qubits < 2 {
        return Err(Error::Construction("need at least two qubits".into()));
    }
    let nf = n_qubits as f64;
    check_moment_feasibility(moments, 0.0, (nf - 1.0) / nf)?;
    let [m1, m2, m3] = moments;
    let sigma = (m2 - m1 * m1).sqrt();
    let skew = (m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3)) / sigma.powi(3);
    // standardized support v = (k/N − μ₁)/σ with targets (0, 1, skew)
    let v: Vec<f64> = (0..n_qubits).map(|k| (k as f64 / nf - m1) / sigma).collect();
    let target = Vector3::new(0.0, 1.0, skew);
    let feats = |x: f64| Vector3::new(x, x * x, x * x * x);

    // dual Φ(λ) = ln Σ exp(λ·f(v)) − λ·t, with its gradient and Hessian
    let eval = |lam: &Vector3<f64>| -> (f64, Vector3<f64>, Matrix3<f64>, Vec<f64>) {
        let e: Vec<f64> = v.iter().map(|&x| lam.dot(&feats(x))).collect();
        let emax = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|x| (x - emax).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / z).collect();
        let mut mean = Vector3::zeros();
        let mut second = Matrix3::zeros();
        for (&x, &pk) in v.iter().zip(&p) {
            let f = feats(x);
            mean += f * pk;
            second += f * f.transpose() * pk;
        }
        let phi = emax + z.ln() - lam.dot(&target);
        (phi, mean - target, second - mean * mean.transpose(), p)
    };

    let mut lam = Vector3::zeros();
    let (mut phi, mut grad, mut hess, mut p) = eval(&lam);
    let mut trace = vec![phi];
    let mut iterations = 0;
    while grad.amax() > options.gradient_tol {
        if iterations >= options.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                gradient_norm: grad.norm(),
            });
        }
        iterations += 1;
        let step = hess
            .lu()
            .solve(&(-grad))
            .filter(|d| d.dot(&grad) < 0.0)
            .unwrap_or(-grad);
        let slope = step.dot(&grad);
        let mut t = 1.0;
        loop {
            let cand = lam + step * t;
            let (cphi, cgrad, chess, cp) = eval(&cand);
            if cphi.is_finite() && cphi <= phi + 1e-4 * t * slope {
                lam = cand;
                phi = cphi;
                grad = cgrad;
                hess = chess;
                p = cp;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations,
                    gradient_norm: grad.norm(),
                });
            }
        }
        trace.push(phi);
    }

    // back to polynomial coefficients in k: v = (k − c)/d
    let c = nf * m1;
    let d = nf * sigma;
    let (l1, l2, l3) = (lam[0], lam[1], lam[2]);
    let lambda = [
        l1 / d - 2.0 * l2 * c / (d * d) + 3.0 * l3 * c * c / d.powi(3),
        l2 / (d * d) - 3.0 * l3 * c / d.powi(3),
        l3 / d.powi(3),
    ];
    let density: Vec<f64> = (0..n_qubits).map(|k| k as f64 / nf).collect();
    let got = |j: i32| -> f64 { density.iter().zip(&p).map(|(x, q)| q * x.powi(j)).sum() };
    Ok(MaxEntSolution {
        n_qubits,
        moments_in: moments,
        lambda,
        moment_residuals: [got(1) - m1, got(2) - m2, got(3) - m3],
        pmf: p,
        density,
        iterations,
        dual_trace: trace,
    })
}

/// Checks a set of cumulants for internal consistency before a maxent
/// reconstruction: returns the raw moments they imply.
pub fn moments_from_cumulants(c: &CumulantSet) -> [f64; 3] {
    let (k1, k2, k3) = (c.kappa1, c.kappa2.max(-MOMENT_TOLERANCE), c.kappa3);
    let m2 = k2 + k1 * k1;
    let m3 = k3 + 3.0 * k1 * k2 + k1.powi(3);
    [k1, m2, m3]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::binomial_pmf;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn point(tau_q: f64, k1: f64) -> SweepPoint {
        SweepPoint {
            tau_q,
            r: 1,
            cumulants: CumulantSet::new([k1, k1 / 10.0, k1 / 100.0], [k1 * 1e-3; 3], Estimator::Exact),
            shots: 0,
            backend: "synthetic".into(),
            mitigation_ref: None,
        }
    }

    #[test]
    fn identical_shots_have_no_spread() {
        let counts = vec![(BitString::from_binary("0110").unwrap(), 37)];
        let c = estimate_cumulants_counts(&counts, 4).unwrap();
        assert_abs_diff_eq!(c.kappa1, 0.5);
        assert_eq!((c.kappa2, c.kappa3), (0.0, 0.0));
        assert!(matches!(estimate_cumulants_counts(&[], 4), Err(Error::EmptyBatch)));
    }

    /// The k-statistics are unbiased: averaging them over every sample of
    /// size 3 drawn with replacement from a small population reproduces the
    /// population cumulants (with the population itself as the oracle).
    #[test]
    fn kstatistics_are_unbiased_exhaustively() {
        let pop: [f64; 4] = [0.0, 0.1, 0.5, 0.7];
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for a in pop {
            for b in pop {
                for c in pop {
                    let mut h: BTreeMap<u64, u64> = BTreeMap::new();
                    for x in [a, b, c] {
                        *h.entry(x.to_bits()).or_insert(0) += 1;
                    }
                    let vals: Vec<(f64, u64)> = h.into_iter().map(|(b, w)| (f64::from_bits(b), w)).collect();
                    let k = weighted_kstatistics(&vals).unwrap();
                    acc[0] += k.kappa1;
                    acc[1] += k.kappa2;
                    acc[2] += k.kappa3;
                    total += 1.0;
                }
            }
        }
        let mean = pop.iter().sum::<f64>() / 4.0;
        let c = |p: i32| pop.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(acc[0] / total, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(acc[1] / total, c(2), epsilon = 1e-12);
        assert_abs_diff_eq!(acc[2] / total, c(3), epsilon = 1e-12);
    }

    #[test]
    fn exact_binomial_cumulants() {
        let pmf = binomial_pmf(18, 0.5);
        let c = exact_cumulants_from_pmf(&pmf, 19).unwrap();
        assert_abs_diff_eq!(c.kappa1, 18.0 / 38.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.kappa3, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_power_law_fit() {
        let pts: Vec<SweepPoint> = [1.0, 2.0, 3.0, 5.0, 8.0]
            .iter()
            .map(|&t| point(t, 0.3 * f64::powf(t, -0.5)))
            .collect();
        for window in [None, Some([1.0, 8.0]), Some([2.0, 8.0])] {
            let f = fit_decay(&pts, 1, 100, window, FitWeighting::Unweighted).unwrap();
            assert_abs_diff_eq!(f.alpha, 0.5, epsilon = 1e-10);
            assert!(f.residual_rms < 1e-12);
        }
        let f = fit_decay(&pts, 1, 100, None, FitWeighting::InverseVariance).unwrap();
        assert_abs_diff_eq!(f.alpha, 0.5, epsilon = 1e-10);
        assert!(matches!(
            fit_decay(&pts, 1, 100, Some([5.0, 8.0]), FitWeighting::Unweighted),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn crossing_interpolation() {
        // κ₁ = τ^-1 crosses 1/4 at τ = 4 exactly
        let pts: Vec<SweepPoint> = [1.0, 2.0, 3.0, 5.0, 8.0].iter().map(|&t| point(t, 1.0 / t)).collect();
        let (tf, reached) = crossing_time(&pts, 4).unwrap();
        assert!(reached);
        assert_abs_diff_eq!(tf, 4.0, epsilon = 1e-12);
        let f = fit_decay(&pts, 1, 4, None, FitWeighting::Unweighted).unwrap();
        assert_eq!(f.n_points, 3);
        let (tf, reached) = crossing_time(&pts, 2).unwrap();
        assert!(reached);
        assert_abs_diff_eq!(tf, 2.0, epsilon = 1e-12);
        let (tf, reached) = crossing_time(&pts, 100).unwrap();
        assert!(!reached);
        assert_eq!(tf, 8.0);
    }

    #[test]
    fn maxent_uniform() {
        let n = 12;
        let nf = n as f64;
        let mu = |j: i32| (0..n).map(|k| (k as f64 / nf).powi(j)).sum::<f64>() / nf;
        let sol = maxent_pmf([mu(1), mu(2), mu(3)], n).unwrap();
        for p in &sol.pmf {
            assert_abs_diff_eq!(*p, 1.0 / nf, epsilon = 1e-8);
        }
        for l in sol.lambda {
            assert!(l.abs() < 1e-6);
        }
    }

    #[test]
    fn maxent_binomial_moments() {
        let n = 20;
        let pmf = binomial_pmf(n - 1, 0.3);
        let mu = |j: i32| {
            pmf.iter()
                .enumerate()
                .map(|(k, p)| p * (k as f64 / n as f64).powi(j))
                .sum::<f64>()
        };
        let sol = maxent_pmf([mu(1), mu(2), mu(3)], n).unwrap();
        for r in sol.moment_residuals {
            assert!(r.abs() <= 1e-6, "{r}");
        }
        assert_abs_diff_eq!(sol.pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(sol.pmf.iter().all(|&p| p >= 0.0));
        assert!(sol.dual_trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn maxent_rejects_infeasible_moments() {
        assert!(matches!(maxent_pmf([0.3, 0.05, 0.01], 10), Err(Error::Infeasible(_))));
        assert!(matches!(maxent_pmf([0.3, 0.09, 0.027], 10), Err(Error::Infeasible(_))));
        assert!(matches!(maxent_pmf([0.95, 0.95, 0.95], 10), Err(Error::Infeasible(_))));
    }

    #[test]
    fn two_outcome_posterior() {
        let counts = vec![
            (BitString::from_binary("00").unwrap(), 50),
            (BitString::from_binary("01").unwrap(), 50),
        ];
        let cfg = PosteriorConfig {
            n_replicas: 500,
            resample_size: Some(100),
            ..PosteriorConfig::default()
        };
        let s = bayesian_intervals(&counts, |c| estimate_cumulants_counts(c, 2), &cfg, 1).unwrap();
        assert!(s.ci[0][0] < 0.25 && s.ci[0][1] > 0.25);
        assert!(s.ci[0][1] - s.ci[0][0] > 0.0);
        assert!(!s.degenerate);

        let single = vec![(BitString::from_binary("01").unwrap(), 10)];
        let s = bayesian_intervals(&single, |c| estimate_cumulants_counts(c, 2), &cfg, 1).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.ci[0][0], s.ci[0][1]);
    }

    /// With two strings the Dirichlet draw for the first string is
    /// Beta(c₁ + 1, c₂ + 1); compare mean and variance with the closed form.
    #[test]
    fn dirichlet_marginal_is_beta() {
        let counts = vec![
            (BitString::from_binary("0").unwrap(), 30),
            (BitString::from_binary("1").unwrap(), 10),
        ];
        let post = DirichletPosterior::new(&counts, 1.0).unwrap();
        let mut r = rng::stream(5, 0);
        let draws: Vec<f64> = (0..40_000).map(|_| post.draw_probabilities(&mut r)[0]).collect();
        let (a, b): (f64, f64) = (31.0, 11.0);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        let want_var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert_abs_diff_eq!(mean, a / (a + b), epsilon = 4.0 * (want_var / 40_000.0).sqrt());
        assert!((var / want_var - 1.0).abs() < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fit_is_scale_equivariant(scale in 1e-3f64..1e3, alpha in 0.1f64..2.0, noise in proptest::collection::vec(-0.05f64..0.05, 6)) {
            let taus = [1.0, 1.5, 2.5, 4.0, 6.0, 9.0];
            let base: Vec<SweepPoint> = taus.iter().zip(&noise).map(|(&t, e)| point(t, 0.4 * f64::powf(t, -alpha) * (1.0 + e))).collect();
            let scaled: Vec<SweepPoint> = base.iter().map(|p| {
                let mut q = p.clone();
                q.cumulants.kappa1 *= scale;
                q
            }).collect();
            let w = Some([1.0, 9.0]);
            let a = fit_decay(&base, 1, 100, w, FitWeighting::Unweighted).unwrap();
            let b = fit_decay(&scaled, 1, 100, w, FitWeighting::Unweighted).unwrap();
            prop_assert!((a.alpha - b.alpha).abs() < 1e-12);
        }

        #[test]
        fn pooled_mean_is_shot_weighted(a in proptest::collection::vec(0u64..6, 1..40), b in proptest::collection::vec(0u64..6, 1..40)) {
            let to_counts = |v: &[u64]| -> Counts {
                let mut m: BTreeMap<BitString, u64> = BTreeMap::new();
                for &x in v {
                    *m.entry(BitString::from_u64(6, x * 5)).or_insert(0) += 1;
                }
                m.into_iter().collect()
            };
            let (ca, cb) = (to_counts(&a), to_counts(&b));
            let mut all: BTreeMap<BitString, u64> = BTreeMap::new();
            for (k, c) in ca.iter().chain(&cb) {
                *all.entry(k.clone()).or_insert(0) += c;
            }
            let pooled = estimate_cumulants_counts(&all.into_iter().collect::<Counts>(), 6).unwrap();
            let ea = estimate_cumulants_counts(&ca, 6).unwrap();
            let eb = estimate_cumulants_counts(&cb, 6).unwrap();
            let (na, nb) = (a.len() as f64, b.len() as f64);
            prop_assert!((pooled.kappa1 - (ea.kappa1 * na + eb.kappa1 * nb) / (na + nb)).abs() < 1e-12);
        }
    }
}
