//! Error mitigation: Pauli and measurement twirling, per-qubit readout
//! calibration and correction, and depolarizing-noise renormalization from
//! reference circuits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::{batch_counts, estimate_cumulants_counts};
use crate::backend::Backend;
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::{moment_expansion, CumulantSet, Estimator, MOMENT_TOLERANCE};
use crate::rng;
use crate::statevector::{two_qubit_pauli, BitstringBatch, NoiseModel, SampleOptions};
use crate::trotter::{Circuit, GateOp, MeasureBasis};

pub const DEFAULT_N_TWIRLS: usize = 50;
pub const DEFAULT_RENORM_FLOOR: f64 = 0.05;
/// Smallest `|1 − 2q|` (or confusion determinant) accepted for inversion.
pub const MIN_READOUT_FACTOR: f64 = 0.1;

/// Whether a two-qubit Pauli (index as in [`two_qubit_pauli`])
/// anticommutes with `X⊗X`: true when it has an odd number of Y/Z factors.
pub fn anticommutes_with_xx(pauli: u8) -> bool {
    let yz = |d: u8| u8::from(d == 2 || d == 3);
    (yz(pauli & 3) + yz(pauli >> 2)) % 2 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTwirl {
    pub pauli: u8,
    pub sign_flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwirlPlan {
    pub n_twirls: usize,
    pub seed: u64,
    /// `gates[t][g]`: the twirl of the `g`-th coupling rotation in instance `t`.
    pub gates: Vec<Vec<GateTwirl>>,
    pub flip_masks: Vec<BitString>,
}

/// Replaces every maximal run of Pauli gates by at most one Pauli per qubit
/// (products taken up to global phase).
pub fn fuse_paulis(ops: &[GateOp]) -> Vec<GateOp> {
    let mut out = Vec::with_capacity(ops.len());
    let mut run: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    let flush = |run: &mut BTreeMap<usize, (bool, bool)>, out: &mut Vec<GateOp>| {
        for (&q, &(x, z)) in run.iter() {
            match (x, z) {
                (true, false) => out.push(GateOp::PauliX(q)),
                (true, true) => out.push(GateOp::PauliY(q)),
                (false, true) => out.push(GateOp::PauliZ(q)),
                (false, false) => {}
            }
        }
        run.clear();
    };
    for op in ops {
        let (q, x, z) = match *op {
            GateOp::PauliX(q) => (q, true, false),
            GateOp::PauliY(q) => (q, true, true),
            GateOp::PauliZ(q) => (q, false, true),
            _ => {
                flush(&mut run, &mut out);
                out.push(*op);
                continue;
            }
        };
        let e = run.entry(q).or_insert((false, false));
        e.0 ^= x;
        e.1 ^= z;
    }
    flush(&mut run, &mut out);
    out
}

#[cfg(debug_assertions)]
fn check_gate_twirl(pauli: u8, theta: f64, sign_flip: bool) {
    use crate::oracle::{ops_unitary, unitary_distance_up_to_phase};
    let mut ops: Vec<GateOp> = two_qubit_pauli(pauli, 0).collect();
    ops.push(GateOp::CouplingRotation {
        qubit: 0,
        angle: if sign_flip { -theta } else { theta },
    });
    ops.extend(two_qubit_pauli(pauli, 0));
    let twirled = ops_unitary(2, &ops);
    let plain = ops_unitary(2, &[GateOp::CouplingRotation { qubit: 0, angle: theta }]);
    let d = unitary_distance_up_to_phase(&twirled, &plain);
    assert!(d < 1e-12, "twirl {pauli} of angle {theta} deviates by {d}");
}

/// `n_twirls` randomized-compiling instances of `circuit`. Every coupling
/// rotation is sandwiched between a random two-qubit Pauli `P` (the same on
/// both sides), with its angle negated when `P` anticommutes with `XX`; each
/// instance also gets a random pre-readout flip mask, recorded in the
/// circuit metadata so samplers can undo it.
pub fn twirl(circuit: &Circuit, n_twirls: usize, seed: u64) -> Result<(Vec<Circuit>, TwirlPlan)> {
    if circuit.meta.twirl_id.is_some() {
        return Err(Error::Unsupported("circuit is already twirled".into()));
    }
    if n_twirls == 0 {
        return Err(Error::Config("n_twirls must be at least 1".into()));
    }
    let n = circuit.n_qubits;
    let base = rng::derive(seed, rng::label::TWIRL);
    let mut circuits = Vec::with_capacity(n_twirls);
    let mut plan = TwirlPlan {
        n_twirls,
        seed,
        gates: Vec::with_capacity(n_twirls),
        flip_masks: Vec::with_capacity(n_twirls),
    };
    for t in 0..n_twirls {
        use rand::Rng;
        let mut r = rng::stream(base, t as u64);
        let mut ops = Vec::with_capacity(circuit.ops.len() * 2);
        let mut gates = Vec::new();
        for op in &circuit.ops {
            if let GateOp::CouplingRotation { qubit, angle } = *op {
                let pauli: u8 = r.random_range(0..16);
                let sign_flip = anticommutes_with_xx(pauli);
                #[cfg(debug_assertions)]
                if t == 0 {
                    check_gate_twirl(pauli, angle, sign_flip);
                }
                ops.extend(two_qubit_pauli(pauli, qubit));
                ops.push(GateOp::CouplingRotation {
                    qubit,
                    angle: if sign_flip { -angle } else { angle },
                });
                ops.extend(two_qubit_pauli(pauli, qubit));
                gates.push(GateTwirl { pauli, sign_flip });
            } else {
                ops.push(*op);
            }
        }
        let mut mask = BitString::zeros(n);
        for q in 0..n {
            if r.random::<bool>() {
                mask.set(q, true);
                ops.push(GateOp::PauliX(q));
            }
        }
        let mut c = circuit.clone();
        c.ops = fuse_paulis(&ops);
        c.meta.twirl_id = Some(t);
        c.meta.flip_mask = Some(mask.clone());
        circuits.push(c);
        plan.gates.push(gates);
        plan.flip_masks.push(mask);
    }
    Ok((circuits, plan))
}

/// Splits `total` shots as evenly as possible over `parts`.
pub fn split_shots(total: usize, parts: usize) -> Vec<usize> {
    let (q, rem) = (total / parts, total % parts);
    (0..parts).map(|i| q + usize::from(i < rem)).collect()
}

/// Runs `circuit` for `shots` shots, spread over `n_twirls` twirled
/// instances (`0` runs the circuit as is). The merged batch carries the
/// hash of the untwirled circuit.
pub fn run_twirled(
    backend: &Backend,
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: usize,
    n_twirls: usize,
    seed: u64,
    options: &SampleOptions,
) -> Result<BitstringBatch> {
    if n_twirls == 0 {
        return backend.run_noisy(circuit, noise, shots, seed, options);
    }
    let (circuits, _) = twirl(circuit, n_twirls, seed)?;
    let mut batches = Vec::with_capacity(n_twirls);
    for (t, (c, s)) in circuits.iter().zip(split_shots(shots, n_twirls)).enumerate() {
        if s > 0 {
            batches.push(backend.run_noisy(c, noise, s, rng::derive(seed, t as u64), options)?);
        }
    }
    let mut merged = BitstringBatch::merge(batches)?;
    merged.circuit_hash = circuit.hash();
    merged.seed = seed;
    Ok(merged)
}

/// Per-qubit readout confusion matrices, `P[k][i][j]` = probability of
/// reading `j` when qubit `k` was prepared in `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub per_qubit: Vec<[[f64; 2]; 2]>,
    pub shots_per_state: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub mean_p01: f64,
    pub mean_p10: f64,
    pub max_symmetric_flip: f64,
}

impl ConfusionMatrix {
    pub fn identity(n_qubits: usize) -> Self {
        Self::from_rates(&vec![(0.0, 0.0); n_qubits])
    }

    pub fn from_rates(rates: &[(f64, f64)]) -> Self {
        Self {
            per_qubit: rates.iter().map(|&(a, b)| [[1.0 - a, a], [b, 1.0 - b]]).collect(),
            shots_per_state: 0,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.per_qubit.len()
    }

    /// `(p01, p10)` per qubit.
    pub fn flip_rates(&self) -> Vec<(f64, f64)> {
        self.per_qubit.iter().map(|p| (p[0][1], p[1][0])).collect()
    }

    /// Flip rate of the symmetrized channel seen under readout twirling.
    pub fn symmetric_flip(&self, qubit: usize) -> f64 {
        let p = &self.per_qubit[qubit];
        (p[0][1] + p[1][0]) / 2.0
    }

    pub fn summary(&self) -> ConfusionSummary {
        let n = self.n_qubits().max(1) as f64;
        let rates = self.flip_rates();
        ConfusionSummary {
            mean_p01: rates.iter().map(|r| r.0).sum::<f64>() / n,
            mean_p10: rates.iter().map(|r| r.1).sum::<f64>() / n,
            max_symmetric_flip: (0..self.n_qubits()).map(|k| self.symmetric_flip(k)).fold(0.0, f64::max),
        }
    }

    /// Qubits whose diagonal entries fall below 1/2.
    pub fn poorly_conditioned(&self) -> Vec<usize> {
        (0..self.n_qubits())
            .filter(|&k| self.per_qubit[k][0][0] < 0.5 || self.per_qubit[k][1][1] < 0.5)
            .collect()
    }

    /// `P_k⁻¹ (1, −1)ᵀ`: the per-outcome weights that turn a measured
    /// marginal into the corrected `⟨Z_k⟩`.
    fn parity_weights(&self, k: usize, twirled: bool) -> Result<[f64; 2]> {
        if twirled {
            let f = 1.0 - 2.0 * self.symmetric_flip(k);
            if f.abs() < MIN_READOUT_FACTOR {
                return Err(Error::IllConditioned { qubit: k, factor: f });
            }
            return Ok([1.0 / f, -1.0 / f]);
        }
        let (a, b) = (self.per_qubit[k][0][1], self.per_qubit[k][1][0]);
        let det = 1.0 - a - b;
        if det.abs() < MIN_READOUT_FACTOR {
            return Err(Error::IllConditioned { qubit: k, factor: det });
        }
        Ok([(1.0 + a - b) / det, -(1.0 - a + b) / det])
    }
}

fn prep_circuit(n: usize, ones: bool) -> Circuit {
    let ops = if ones {
        (0..n).map(GateOp::PauliX).collect()
    } else {
        Vec::new()
    };
    Circuit::bare(n, ops, MeasureBasis::Z)
}

/// Prepares `|0…0⟩` and `|1…1⟩`, reads them out under `noise` and tallies
/// per-qubit flip frequencies. With `twirled` every shot gets a random
/// classical flip mask, which symmetrizes the measured channel.
pub fn calibrate_readout(
    backend: &Backend,
    n_qubits: usize,
    shots_per_state: usize,
    noise: &NoiseModel,
    twirled: bool,
    seed: u64,
) -> Result<ConfusionMatrix> {
    if shots_per_state == 0 {
        return Err(Error::EmptyBatch);
    }
    let base = rng::derive(seed, rng::label::CALIBRATION);
    let options = SampleOptions { per_shot_flip: twirled };
    let mut per_qubit = vec![[[0.0; 2]; 2]; n_qubits];
    for prepared in 0..2 {
        let c = prep_circuit(n_qubits, prepared == 1);
        let batch = backend.run_noisy(&c, noise, shots_per_state, rng::derive(base, prepared), &options)?;
        let mut ones = vec![0u64; n_qubits];
        for s in &batch.shots {
            for (k, o) in ones.iter_mut().enumerate() {
                *o += u64::from(s.bits.get(k));
            }
        }
        for (k, &o) in ones.iter().enumerate() {
            let p1 = o as f64 / shots_per_state as f64;
            per_qubit[k][prepared as usize] = [1.0 - p1, p1];
        }
    }
    Ok(ConfusionMatrix {
        per_qubit,
        shots_per_state: shots_per_state as u64,
    })
}

/// Estimate of one X-basis parity `⟨Π_{k∈S} X_k⟩`, with the marginal
/// outcome counts it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub support: Vec<usize>,
    /// Counts of the `2^|S|` marginal outcomes; bit `j` of the index is the
    /// outcome on `support[j]`.
    pub counts: Vec<u64>,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSet {
    pub n_qubits: usize,
    pub shots: u64,
    pub estimates: Vec<CorrelatorEstimate>,
    pub readout_corrected: bool,
}

/// Largest support handled by marginal count vectors.
const MAX_SUPPORT: usize = 16;

impl CorrelatorSet {
    pub fn from_counts(n_qubits: usize, counts: &[(BitString, u64)], supports: &[Vec<usize>]) -> Result<Self> {
        let shots: u64 = counts.iter().map(|c| c.1).sum();
        if shots == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut estimates = Vec::with_capacity(supports.len());
        for support in supports {
            if let Some(&q) = support.iter().max() {
                if q >= n_qubits {
                    return Err(Error::SupportOutOfRange { qubit: q, n_qubits });
                }
            }
            if support.len() > MAX_SUPPORT {
                return Err(Error::Unsupported(format!("parity over {} qubits", support.len())));
            }
            let mut marg = vec![0u64; 1 << support.len()];
            for (bits, c) in counts {
                let idx = support
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (j, &q)| acc | (usize::from(bits.get(q)) << j));
                marg[idx] += c;
            }
            let mut e = CorrelatorEstimate {
                support: support.clone(),
                counts: marg,
                value: 0.0,
                stderr: 0.0,
            };
            let w = vec![[1.0, -1.0]; support.len()];
            (e.value, e.stderr) = weighted_parity(&e.counts, &w, shots);
            estimates.push(e);
        }
        Ok(Self {
            n_qubits,
            shots,
            estimates,
            readout_corrected: false,
        })
    }

    pub fn from_batch(batch: &BitstringBatch, supports: &[Vec<usize>]) -> Result<Self> {
        Self::from_counts(batch.n_qubits, &batch_counts(batch), supports)
    }

    pub fn get(&self, support: &[usize]) -> Option<&CorrelatorEstimate> {
        self.estimates.iter().find(|e| e.support == support)
    }
}

/// Mean and standard error of `Π_j w_j[x_j]` over marginal counts.
fn weighted_parity(counts: &[u64], weights: &[[f64; 2]], shots: u64) -> (f64, f64) {
    let s = shots as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (x, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let y: f64 = weights.iter().enumerate().map(|(j, w)| w[(x >> j) & 1]).product();
        m1 += c as f64 * y;
        m2 += c as f64 * y * y;
    }
    let mean = m1 / s;
    let var = (m2 / s - mean * mean).max(0.0);
    (mean, (var / s).sqrt())
}

/// Readout correction of parity estimates. The twirled path divides each
/// parity by `Π_{k∈S}(1 − 2q_k)`; the untwirled path applies the per-qubit
/// inverse confusion matrices to the marginal counts.
pub fn correct_readout(set: &CorrelatorSet, confusion: &ConfusionMatrix, twirled: bool) -> Result<CorrelatorSet> {
    if confusion.n_qubits() != set.n_qubits {
        return Err(Error::Construction(format!(
            "confusion matrices for {} qubits, correlators on {}",
            confusion.n_qubits(),
            set.n_qubits
        )));
    }
    let mut out = set.clone();
    for e in out.estimates.iter_mut() {
        if e.support.is_empty() {
            continue;
        }
        let weights = e
            .support
            .iter()
            .map(|&k| confusion.parity_weights(k, twirled))
            .collect::<Result<Vec<_>>>()?;
        (e.value, e.stderr) = weighted_parity(&e.counts, &weights, set.shots);
    }
    out.readout_corrected = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenormVariant {
    /// Mean of the bond correlators on the reference run.
    #[default]
    MeanKink,
    /// Largest bond correlator on the reference run.
    MaxBond,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormFactor {
    /// Estimated `1 − p`.
    pub value: f64,
    pub stderr: f64,
    pub variant: RenormVariant,
    pub circuit_hash: String,
}

impl RenormFactor {
    /// The trivial factor: no renormalization.
    pub fn unit() -> Self {
        Self {
            value: 1.0,
            stderr: 0.0,
            variant: RenormVariant::MeanKink,
            circuit_hash: String::new(),
        }
    }

    pub fn check_usable(&self, floor: f64) -> Result<()> {
        if self.value <= floor || !self.value.is_finite() {
            return Err(Error::UnusableRenorm {
                value: self.value,
                floor,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationOptions {
    /// Readout correction assumes the symmetric channel left by readout
    /// twirling.
    pub twirled_readout: bool,
    pub renorm_variant: RenormVariant,
    /// Divide a weight-`w` term by `value^(w/2)` instead of `value`.
    pub weight_dependent: bool,
    pub renorm_floor: f64,
    pub n_twirls: usize,
    pub per_shot_flip: bool,
}

impl Default for MitigationOptions {
    fn default() -> Self {
        Self {
            twirled_readout: true,
            renorm_variant: RenormVariant::MeanKink,
            weight_dependent: false,
            renorm_floor: DEFAULT_RENORM_FLOOR,
            n_twirls: DEFAULT_N_TWIRLS,
            per_shot_flip: false,
        }
    }
}

fn bond_supports(n: usize) -> Vec<Vec<usize>> {
    (0..n - 1).map(|b| vec![b, b + 1]).collect()
}

/// Renormalization factor from reference-run outcomes.
pub fn renorm_from_counts(
    n_qubits: usize,
    counts: &[(BitString, u64)],
    confusion: Option<&ConfusionMatrix>,
    options: &MitigationOptions,
    circuit_hash: &str,
) -> Result<RenormFactor> {
    let supports = bond_supports(n_qubits);
    let mut set = CorrelatorSet::from_counts(n_qubits, counts, &supports)?;
    if let Some(c) = confusion {
        set = correct_readout(&set, c, options.twirled_readout)?;
    }
    let (value, stderr) = match options.renorm_variant {
        RenormVariant::MeanKink => {
            // per-shot mean of the corrected bond parities
            let weights: Vec<[f64; 2]> = match confusion {
                Some(c) => (0..n_qubits)
                    .map(|k| c.parity_weights(k, options.twirled_readout))
                    .collect::<Result<_>>()?,
                None => vec![[1.0, -1.0]; n_qubits],
            };
            let s = set.shots as f64;
            let nb = (n_qubits - 1) as f64;
            let (mut m1, mut m2) = (0.0, 0.0);
            for (bits, c) in counts {
                let y: f64 = (0..n_qubits - 1)
                    .map(|b| weights[b][usize::from(bits.get(b))] * weights[b + 1][usize::from(bits.get(b + 1))])
                    .sum::<f64>()
                    / nb;
                m1 += *c as f64 * y;
                m2 += *c as f64 * y * y;
            }
            let mean = m1 / s;
            (mean, ((m2 / s - mean * mean).max(0.0) / s).sqrt())
        }
        RenormVariant::MaxBond => {
            let best = set
                .estimates
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .expect("at least one bond");
            (best.value, best.stderr)
        }
    };
    let f = RenormFactor {
        value,
        stderr,
        variant: options.renorm_variant,
        circuit_hash: circuit_hash.to_string(),
    };
    f.check_usable(options.renorm_floor)?;
    Ok(f)
}

/// Runs `reference` (twirled per `options`) and turns the readout-corrected
/// bond correlators into a renormalization factor.
pub fn estimate_renorm(
    backend: &Backend,
    reference: &Circuit,
    noise: &NoiseModel,
    shots: usize,
    confusion: Option<&ConfusionMatrix>,
    options: &MitigationOptions,
    seed: u64,
) -> Result<RenormFactor> {
    let batch = run_twirled(
        backend,
        reference,
        noise,
        shots,
        options.n_twirls,
        rng::derive(seed, rng::label::REFERENCE_RUN),
        &SampleOptions {
            per_shot_flip: options.per_shot_flip,
        },
    )?;
    renorm_from_counts(
        reference.n_qubits,
        &batch_counts(&batch),
        confusion,
        options,
        &reference.hash(),
    )
}

/// Mitigated cumulants of an X-basis batch.
pub fn mitigate_cumulants(
    raw: &BitstringBatch,
    confusion: Option<&ConfusionMatrix>,
    renorm: &RenormFactor,
    options: &MitigationOptions,
) -> Result<CumulantSet> {
    if raw.basis != MeasureBasis::X {
        return Err(Error::Unsupported("kink statistics need X-basis outcomes".into()));
    }
    mitigate_counts(raw.n_qubits, &batch_counts(raw), confusion, renorm, options)
}

/// Expands `n̂, n̂², n̂³` into bond-product terms, estimates each term's
/// parity, corrects readout per support, divides every traceless term by
/// the renormalization factor and reassembles k-statistics. Without
/// readout correction and with a unit factor this reproduces
/// [`crate::analysis::estimate_cumulants`].
pub fn mitigate_counts(
    n_qubits: usize,
    counts: &[(BitString, u64)],
    confusion: Option<&ConfusionMatrix>,
    renorm: &RenormFactor,
    options: &MitigationOptions,
) -> Result<CumulantSet> {
    renorm.check_usable(options.renorm_floor)?;
    let expansions = (1..=3)
        .map(|m| moment_expansion(m, n_qubits))
        .collect::<Result<Vec<_>>>()?;
    let supports: Vec<Vec<usize>> = expansions
        .iter()
        .flatten()
        .map(|t| t.qubit_support())
        .filter(|s| !s.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut set = CorrelatorSet::from_counts(n_qubits, counts, &supports)?;
    if let Some(c) = confusion {
        set = correct_readout(&set, c, options.twirled_readout)?;
    }
    let values: BTreeMap<&[usize], f64> = set.estimates.iter().map(|e| (e.support.as_slice(), e.value)).collect();
    let shots = set.shots as f64;
    let raw = estimate_cumulants_counts(counts, n_qubits)?;

    let assemble = |factor: f64| -> Result<[f64; 3]> {
        let mut mu = [0.0; 3];
        for (m, terms) in expansions.iter().enumerate() {
            for t in terms {
                let support = t.qubit_support();
                let v = if support.is_empty() {
                    1.0
                } else {
                    let div = if options.weight_dependent {
                        factor.powf(support.len() as f64 / 2.0)
                    } else {
                        factor
                    };
                    values[support.as_slice()] / div
                };
                mu[m] += t.coefficient_f64() * v;
            }
        }
        let [m1, m2, m3] = mu;
        let mut c2 = m2 - m1 * m1;
        if c2 < -MOMENT_TOLERANCE {
            return Err(Error::InconsistentMoments {
                kappa2: c2,
                tolerance: MOMENT_TOLERANCE,
            });
        }
        c2 = c2.max(0.0);
        let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
        let k2 = if shots > 1.0 { shots / (shots - 1.0) * c2 } else { 0.0 };
        let k3 = if shots > 2.0 {
            shots * shots / ((shots - 1.0) * (shots - 2.0)) * c3
        } else {
            0.0
        };
        Ok([m1, k2, k3])
    };

    let kappa = assemble(renorm.value)?;
    let shifted = if renorm.stderr > 0.0 {
        assemble(renorm.value + renorm.stderr).unwrap_or(kappa)
    } else {
        kappa
    };
    let mut stderr = [0.0; 3];
    for m in 0..3 {
        let stat = raw.stderr(m + 1) / renorm.value;
        stderr[m] = stat.hypot(kappa[m] - shifted[m]);
    }
    Ok(CumulantSet::new(kappa, stderr, Estimator::Mitigated))
}

/// Per-point mitigation record written next to the cumulants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub tau_q: f64,
    pub r: usize,
    pub renorm_value: f64,
    pub renorm_stderr: f64,
    pub variant: RenormVariant,
    pub n_twirls: usize,
    pub shots_total: u64,
    pub confusion_summary: Option<ConfusionSummary>,
}
