//! One interface over the dense and tensor-network simulators.

use crate::error::Result;
use crate::model::{cumulants_from_moments, CumulantSet, Estimator};
use crate::mps::{self, MpsOptions, MpsState, MpsStats};
use crate::statevector::{self, BitstringBatch, NoiseModel, SampleOptions, StateVector};
use crate::trotter::Circuit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    StateVector,
    Mps(MpsOptions),
}

/// Noiseless kink statistics of a circuit's readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactKinks {
    /// `E[n], E[n²], E[n³]` for the density `n = k / N`.
    pub moments: [f64; 3],
    /// Full distribution of `k`, when the backend can afford it.
    pub pmf: Option<Vec<f64>>,
    pub mps_stats: Option<MpsStats>,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::StateVector => "statevector",
            Backend::Mps(_) => "mps",
        }
    }

    pub fn run_noisy(
        &self,
        circuit: &Circuit,
        noise: &NoiseModel,
        shots: usize,
        seed: u64,
        options: &SampleOptions,
    ) -> Result<BitstringBatch> {
        match self {
            Backend::StateVector => statevector::run_noisy_with(circuit, noise, shots, seed, options),
            Backend::Mps(o) => mps::run_noisy(circuit, noise, shots, seed, *o, options),
        }
    }

    /// `⟨X_i X_{i+1}⟩` on the state right before the readout basis change.
    pub fn bond_correlators(&self, circuit: &Circuit) -> Result<Vec<f64>> {
        let ops = circuit.pre_measurement_ops();
        Ok(match self {
            Backend::StateVector => StateVector::run_ops(circuit.n_qubits, ops)?.bond_correlators(),
            Backend::Mps(o) => MpsState::run_ops(circuit.n_qubits, ops, *o)?.bond_correlators(),
        })
    }

    /// `⟨n̂⟩` from the bond correlators.
    pub fn kink_density(&self, circuit: &Circuit) -> Result<f64> {
        let n = circuit.n_qubits as f64;
        Ok(self
            .bond_correlators(circuit)?
            .iter()
            .map(|b| (1.0 - b) / (2.0 * n))
            .sum())
    }

    pub fn exact_kinks(&self, circuit: &Circuit) -> Result<ExactKinks> {
        let n = circuit.n_qubits as f64;
        match self {
            Backend::StateVector => {
                let pmf = StateVector::run(circuit)?.kink_distribution();
                let mu = |j: i32| -> f64 { pmf.iter().enumerate().map(|(k, p)| p * (k as f64 / n).powi(j)).sum() };
                Ok(ExactKinks {
                    moments: [mu(1), mu(2), mu(3)],
                    pmf: Some(pmf),
                    mps_stats: None,
                })
            }
            Backend::Mps(o) => {
                let s = MpsState::run(circuit, *o)?;
                let raw = s.kink_count_moments();
                Ok(ExactKinks {
                    moments: [raw[0] / n, raw[1] / (n * n), raw[2] / (n * n * n)],
                    pmf: None,
                    mps_stats: Some(*s.stats()),
                })
            }
        }
    }

    pub fn exact_cumulants(&self, circuit: &Circuit) -> Result<CumulantSet> {
        let m = self.exact_kinks(circuit)?.moments;
        let mut c = cumulants_from_moments(m[0], m[1], m[2])?;
        c.estimator = Estimator::Exact;
        Ok(c)
    }
}
