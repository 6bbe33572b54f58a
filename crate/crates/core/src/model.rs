//! The quench problem: coupling schedules, the kink observable, and the
//! algebra that turns kink statistics into moments and cumulants.
//!
//! The chain Hamiltonian is
//!
//! ```text
//! H(t) = -J(t) Σ_{i=0}^{N-2} X_i X_{i+1} - h(t) Σ_{i=0}^{N-1} Z_i
//! J(t) = J0 · t / τ_Q,   h(t) = h0 · (1 - t / τ_Q)
//! ```
//!
//! with open boundaries, and the kink density is
//! `n̂ = (1 / 2N) Σ_i (1 - X_i X_{i+1})`. Qubits and bonds are indexed from
//! zero; bond `i` couples qubits `i` and `i + 1`.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Negative variances smaller than this are treated as round-off.
pub const MOMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSchedule {
    pub j0: f64,
    pub h0: f64,
    pub tau_q: f64,
}

impl QuenchSchedule {
    /// Schedule with `J0 = h0 = 1`, whose critical point sits at `τ_Q / 2`.
    pub fn new(tau_q: f64) -> Result<Self> {
        Self::with_amplitudes(1.0, 1.0, tau_q)
    }

    pub fn with_amplitudes(j0: f64, h0: f64, tau_q: f64) -> Result<Self> {
        if !(tau_q > 0.0 && tau_q.is_finite()) {
            return Err(Error::Domain {
                what: "tau_Q",
                value: tau_q,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self { j0, h0, tau_q })
    }

    /// `(J(t), h(t))` for `0 <= t <= τ_Q`.
    pub fn couplings_at(&self, t: f64) -> Result<(f64, f64)> {
        // admit round-off from accumulated step sizes
        let slack = 1e-12 * self.tau_q;
        if !(t >= -slack && t <= self.tau_q + slack) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.tau_q,
            });
        }
        let s = (t / self.tau_q).clamp(0.0, 1.0);
        Ok((self.j0 * s, self.h0 * (1.0 - s)))
    }
}

/// Kink count of an N-bit X-basis outcome.
pub fn kink_count(bits: &BitString) -> usize {
    bits.kink_count()
}

/// One aggregated kink-count record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KinkSample {
    pub k: usize,
    pub shot_weight: u64,
}

impl KinkSample {
    pub fn density(&self, n_qubits: usize) -> f64 {
        self.k as f64 / n_qubits as f64
    }
}

/// A product of bond operators `Π_{i ∈ bonds} X_i X_{i+1}` with a rational
/// coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondTerm {
    pub bonds: Vec<usize>,
    pub coefficient: Ratio<i64>,
}

impl BondTerm {
    pub fn is_identity(&self) -> bool {
        self.bonds.is_empty()
    }

    /// Qubits that carry an odd number of X factors.
    pub fn qubit_support(&self) -> Vec<usize> {
        bond_set_support(&self.bonds)
    }

    pub fn support_mask(&self, n_qubits: usize) -> BitString {
        let mut mask = BitString::zeros(n_qubits);
        for q in self.qubit_support() {
            mask.set(q, true);
        }
        mask
    }

    pub fn coefficient_f64(&self) -> f64 {
        *self.coefficient.numer() as f64 / *self.coefficient.denom() as f64
    }
}

/// Support of a product of bonds: X² = 1 cancels every shared qubit.
pub fn bond_set_support(bonds: &[usize]) -> Vec<usize> {
    let mut odd: BTreeMap<usize, bool> = BTreeMap::new();
    for &b in bonds {
        for q in [b, b + 1] {
            let e = odd.entry(q).or_insert(false);
            *e = !*e;
        }
    }
    odd.into_iter().filter(|&(_, o)| o).map(|(q, _)| q).collect()
}

/// Symmetric difference of two sorted bond lists (bond operators square to 1).
fn multiply_bond_sets(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Expands `n̂^m` into identity plus bond-product terms, sorted by bond set
/// with the identity first. Zero coefficients are dropped.
pub fn moment_expansion(m: u32, n_qubits: usize) -> Result<Vec<BondTerm>> {
    if !(1..=3).contains(&m) {
        return Err(Error::UnsupportedOrder(m));
    }
    if n_qubits < 2 {
        return Err(Error::Construction(format!(
            "kink operator needs at least 2 qubits, got {n_qubits}"
        )));
    }
    let n_bonds = n_qubits - 1;
    // 2N·n̂ = (N-1)·1 - Σ_i B_i with integer coefficients
    let mut factor: Vec<(Vec<usize>, i64)> = vec![(Vec::new(), n_bonds as i64)];
    factor.extend((0..n_bonds).map(|i| (vec![i], -1)));

    let mut acc: BTreeMap<Vec<usize>, i64> = BTreeMap::new();
    acc.insert(Vec::new(), 1);
    for _ in 0..m {
        let mut next: BTreeMap<Vec<usize>, i64> = BTreeMap::new();
        for (set, c) in &acc {
            for (fset, fc) in &factor {
                *next.entry(multiply_bond_sets(set, fset)).or_insert(0) += c * fc;
            }
        }
        acc = next;
    }
    let denom = (2 * n_qubits as i64).pow(m);
    Ok(acc
        .into_iter()
        .filter(|&(_, c)| c != 0)
        .map(|(bonds, c)| BondTerm {
            bonds,
            coefficient: Ratio::new(c, denom),
        })
        .collect())
}

/// How a [`CumulantSet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// From exact probabilities or expectation values.
    Exact,
    /// Plug-in conversion of raw moments.
    Moments,
    /// Unbiased k-statistics of per-shot kink densities.
    KStatistics,
    /// k-statistics of error-mitigated moments.
    Mitigated,
}

/// First three cumulants of the kink density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub stderr3: f64,
    pub ci95_1: Option<[f64; 2]>,
    pub ci95_2: Option<[f64; 2]>,
    pub ci95_3: Option<[f64; 2]>,
    pub estimator: Estimator,
}

impl CumulantSet {
    pub fn new(kappa: [f64; 3], stderr: [f64; 3], estimator: Estimator) -> Self {
        Self {
            kappa1: kappa[0],
            kappa2: kappa[1],
            kappa3: kappa[2],
            stderr1: stderr[0],
            stderr2: stderr[1],
            stderr3: stderr[2],
            ci95_1: None,
            ci95_2: None,
            ci95_3: None,
            estimator,
        }
    }

    /// Cumulant of order `m` (1-based).
    pub fn kappa(&self, m: usize) -> f64 {
        match m {
            1 => self.kappa1,
            2 => self.kappa2,
            3 => self.kappa3,
            _ => panic!("cumulant order {m} out of range"),
        }
    }

    pub fn stderr(&self, m: usize) -> f64 {
        match m {
            1 => self.stderr1,
            2 => self.stderr2,
            3 => self.stderr3,
            _ => panic!("cumulant order {m} out of range"),
        }
    }

    pub fn ci95(&self, m: usize) -> Option<[f64; 2]> {
        match m {
            1 => self.ci95_1,
            2 => self.ci95_2,
            3 => self.ci95_3,
            _ => panic!("cumulant order {m} out of range"),
        }
    }

    pub fn set_ci95(&mut self, m: usize, ci: [f64; 2]) {
        match m {
            1 => self.ci95_1 = Some(ci),
            2 => self.ci95_2 = Some(ci),
            3 => self.ci95_3 = Some(ci),
            _ => panic!("cumulant order {m} out of range"),
        }
    }
}

/// κ₁ = μ₁, κ₂ = μ₂ − μ₁², κ₃ = μ₃ − 3κ₁κ₂ − κ₁³.
pub fn cumulants_from_moments(mu1: f64, mu2: f64, mu3: f64) -> Result<CumulantSet> {
    cumulants_from_moments_tol(mu1, mu2, mu3, MOMENT_TOLERANCE)
}

pub fn cumulants_from_moments_tol(mu1: f64, mu2: f64, mu3: f64, tolerance: f64) -> Result<CumulantSet> {
    let k1 = mu1;
    let mut k2 = mu2 - mu1 * mu1;
    if k2 < -tolerance {
        return Err(Error::InconsistentMoments { kappa2: k2, tolerance });
    }
    if k2 < 0.0 {
        k2 = 0.0;
    }
    let k3 = mu3 - 3.0 * k1 * k2 - k1 * k1 * k1;
    Ok(CumulantSet::new([k1, k2, k3], [0.0; 3], Estimator::Moments))
}
