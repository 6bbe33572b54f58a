//! Dense state-vector simulation, stochastic Pauli noise and shot batches.
//!
//! Amplitude index bit `q` is the computational value of qubit `q`. Noise is
//! injected per shot: each shot draws its own noise realization, and shots
//! whose draw is empty reuse one cached ideal output distribution.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::BondTerm;
use crate::rng;
use crate::trotter::{Circuit, GateOp, MeasureBasis};

/// Default cap on amplitude storage: enough for 24 qubits.
pub const DEFAULT_MEMORY_BUDGET: u64 = 16 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    AllZero,
    AllPlus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

pub fn required_bytes(n_qubits: usize) -> u128 {
    16u128 << n_qubits.min(100)
}

impl StateVector {
    pub fn prepare(n_qubits: usize, init: InitialState) -> Result<Self> {
        Self::prepare_with_budget(n_qubits, init, DEFAULT_MEMORY_BUDGET)
    }

    pub fn prepare_with_budget(n_qubits: usize, init: InitialState, budget_bytes: u64) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Construction("register needs at least one qubit".into()));
        }
        let need = required_bytes(n_qubits);
        if need > budget_bytes as u128 {
            return Err(Error::Resource {
                what: "state vector",
                required_bytes: need,
                budget_bytes: budget_bytes as u128,
            });
        }
        let dim = 1usize << n_qubits;
        let amps = match init {
            InitialState::AllZero => {
                let mut a = vec![C64::new(0.0, 0.0); dim];
                a[0] = C64::new(1.0, 0.0);
                a
            }
            InitialState::AllPlus => vec![C64::new((dim as f64).sqrt().recip(), 0.0); dim],
        };
        Ok(Self { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Construction(format!(
                "{} amplitudes do not describe {n_qubits} qubits",
                amps.len()
            )));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Runs `circuit` from `|0…0⟩`.
    pub fn run(circuit: &Circuit) -> Result<Self> {
        Self::run_ops(circuit.n_qubits, &circuit.ops)
    }

    pub fn run_ops(n_qubits: usize, ops: &[GateOp]) -> Result<Self> {
        let mut s = Self::prepare(n_qubits, InitialState::AllZero)?;
        s.apply_all(ops)?;
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check(&self, op: &GateOp) -> Result<()> {
        match op.max_qubit() {
            Some(q) if q >= self.n_qubits => Err(Error::InvalidTarget {
                qubit: q,
                n_qubits: self.n_qubits,
            }),
            _ => Ok(()),
        }
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        self.check(op)?;
        match *op {
            GateOp::HadamardLayer => {
                for q in 0..self.n_qubits {
                    self.hadamard(q);
                }
            }
            GateOp::PauliX(q) => self.for_pairs(q, std::mem::swap),
            GateOp::PauliY(q) => self.for_pairs(q, |a, b| {
                let (x, y) = (*a, *b);
                *a = C64::new(y.im, -y.re);
                *b = C64::new(-x.im, x.re);
            }),
            GateOp::PauliZ(q) => self.for_pairs(q, |_, b| *b = -*b),
            GateOp::FieldRotation { qubit, angle } => {
                let (lo, hi) = (C64::from_polar(1.0, angle), C64::from_polar(1.0, -angle));
                self.for_pairs(qubit, |a, b| {
                    *a *= lo;
                    *b *= hi;
                });
            }
            GateOp::CouplingRotation { qubit, angle } => self.coupling(qubit, angle),
        }
        Ok(())
    }

    /// Applies a gate list, fusing runs of field rotations into one
    /// diagonal pass.
    pub fn apply_all(&mut self, ops: &[GateOp]) -> Result<()> {
        for op in ops {
            self.check(op)?;
        }
        let mut field = vec![0.0; self.n_qubits];
        let mut pending = false;
        for op in ops {
            if let GateOp::FieldRotation { qubit, angle } = *op {
                field[qubit] += angle;
                pending = true;
                continue;
            }
            if pending {
                self.diagonal_field(&field);
                field.iter_mut().for_each(|f| *f = 0.0);
                pending = false;
            }
            self.apply(op)?;
        }
        if pending {
            self.diagonal_field(&field);
        }
        Ok(())
    }

    /// `f(a, b)` on every amplitude pair differing only in bit `q`
    /// (`a` has the bit clear).
    fn for_pairs(&mut self, q: usize, mut f: impl FnMut(&mut C64, &mut C64)) {
        let lo = 1usize << q;
        for chunk in self.amps.chunks_exact_mut(2 * lo) {
            let (a, b) = chunk.split_at_mut(lo);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                f(x, y);
            }
        }
    }

    fn hadamard(&mut self, q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.for_pairs(q, |a, b| {
            let (x, y) = (*a, *b);
            *a = (x + y) * s;
            *b = (x - y) * s;
        });
    }

    /// `exp(+iθ X_q X_{q+1})`.
    fn coupling(&mut self, q: usize, theta: f64) {
        let (c, s) = (theta.cos(), theta.sin());
        let is = C64::new(0.0, s);
        let lo = 1usize << q;
        // quarters by (bit q, bit q+1): 00 | 10 | 01 | 11; XX pairs 00↔11 and 10↔01
        for chunk in self.amps.chunks_exact_mut(4 * lo) {
            let (first, rest) = chunk.split_at_mut(lo);
            let (second, rest) = rest.split_at_mut(lo);
            let (third, fourth) = rest.split_at_mut(lo);
            for (x, y) in first.iter_mut().zip(fourth.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a * c + b * is;
                *y = b * c + a * is;
            }
            for (x, y) in second.iter_mut().zip(third.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a * c + b * is;
                *y = b * c + a * is;
            }
        }
    }

    /// `Π_q exp(+i θ_q Z_q)` as one pass over split phase tables.
    fn diagonal_field(&mut self, theta: &[f64]) {
        let n = self.n_qubits;
        let low_bits = n.div_ceil(2);
        let table = |qubits: std::ops::Range<usize>| -> Vec<C64> {
            let width = qubits.len();
            let base: f64 = qubits.clone().map(|q| theta[q]).sum();
            let mut t = vec![C64::from_polar(1.0, base); 1 << width];
            for (j, q) in qubits.enumerate() {
                let flip = C64::from_polar(1.0, -2.0 * theta[q]);
                let half = 1usize << j;
                for x in half..2 * half {
                    t[x] = t[x - half] * flip;
                }
            }
            t
        };
        let lo = table(0..low_bits);
        let hi = table(low_bits..n);
        for (chunk, h) in self.amps.chunks_exact_mut(1 << low_bits).zip(&hi) {
            for (a, l) in chunk.iter_mut().zip(&lo) {
                *a *= l * h;
            }
        }
    }

    /// `⟨ψ| X_S |ψ⟩` for the X string on the qubits set in `mask`.
    pub fn x_string_expectation(&self, mask: u64) -> f64 {
        let m = mask as usize;
        let z: C64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(x, a)| self.amps[x ^ m].conj() * a)
            .sum();
        debug_assert!(z.im.abs() < 1e-10 * (1.0 + z.re.abs()));
        z.re
    }

    /// Expectation of each term's bond product (coefficients not applied).
    pub fn expectation_bond_terms(&self, terms: &[BondTerm]) -> Result<Vec<f64>> {
        terms
            .iter()
            .map(|t| {
                let support = t.qubit_support();
                if let Some(&q) = support.iter().max() {
                    if q >= self.n_qubits {
                        return Err(Error::SupportOutOfRange {
                            qubit: q,
                            n_qubits: self.n_qubits,
                        });
                    }
                }
                let mask = support.iter().fold(0u64, |m, &q| m | 1 << q);
                Ok(self.x_string_expectation(mask))
            })
            .collect()
    }

    /// `⟨X_i X_{i+1}⟩` for every bond.
    pub fn bond_correlators(&self) -> Vec<f64> {
        (0..self.n_qubits - 1)
            .map(|b| self.x_string_expectation(0b11 << b))
            .collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Distribution of the kink count `k ∈ {0, …, N−1}` when this state is
    /// read out in the computational basis (i.e. after the basis change).
    pub fn kink_distribution(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let bond_mask = (1usize << (n - 1)) - 1;
        let mut pmf = vec![0.0; n];
        for (x, a) in self.amps.iter().enumerate() {
            pmf[((x ^ (x >> 1)) & bond_mask).count_ones() as usize] += a.norm_sqr();
        }
        pmf
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability of a uniformly random non-identity two-qubit Pauli after
    /// every coupling rotation.
    pub two_qubit_depol: f64,
    /// Probability that the whole register is replaced by the maximally
    /// mixed state before readout.
    pub global_depol: f64,
    /// Per-qubit `(p01, p10)`: probability of reading 1 given 0, and 0
    /// given 1. Empty means perfect readout.
    pub readout_flip: Vec<(f64, f64)>,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn global(p: f64) -> Self {
        Self {
            global_depol: p,
            ..Self::default()
        }
    }

    pub fn local(lambda: f64) -> Self {
        Self {
            two_qubit_depol: lambda,
            ..Self::default()
        }
    }

    pub fn with_uniform_readout(mut self, n_qubits: usize, p01: f64, p10: f64) -> Self {
        self.readout_flip = vec![(p01, p10); n_qubits];
        self
    }

    /// The readout part alone.
    pub fn readout_only(&self) -> Self {
        Self {
            readout_flip: self.readout_flip.clone(),
            ..Self::default()
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let in_unit = |what: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain {
                    what,
                    value: v,
                    lo: 0.0,
                    hi: 1.0,
                })
            }
        };
        in_unit("two_qubit_depol", self.two_qubit_depol)?;
        in_unit("global_depol", self.global_depol)?;
        for &(a, b) in &self.readout_flip {
            in_unit("p01", a)?;
            in_unit("p10", b)?;
        }
        if !self.readout_flip.is_empty() && self.readout_flip.len() != n_qubits {
            return Err(Error::Config(format!(
                "readout_flip lists {} qubits for a {n_qubits}-qubit register",
                self.readout_flip.len()
            )));
        }
        Ok(())
    }

    pub fn has_readout_noise(&self) -> bool {
        self.readout_flip.iter().any(|&(a, b)| a > 0.0 || b > 0.0)
    }

    pub fn is_noiseless(&self) -> bool {
        self.two_qubit_depol == 0.0 && self.global_depol == 0.0 && !self.has_readout_noise()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    /// Outcome with the measurement flip already undone.
    pub bits: BitString,
    pub twirl_id: usize,
    pub flip_mask: BitString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitstringBatch {
    pub n_qubits: usize,
    pub basis: MeasureBasis,
    pub seed: u64,
    pub noise: NoiseModel,
    pub circuit_hash: String,
    pub shots: Vec<Shot>,
}

impl BitstringBatch {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Concatenates batches; the header of the first one is kept.
    pub fn merge(batches: Vec<BitstringBatch>) -> Result<BitstringBatch> {
        let mut it = batches.into_iter();
        let mut out = it.next().ok_or(Error::EmptyBatch)?;
        for b in it {
            if b.n_qubits != out.n_qubits {
                return Err(Error::Construction("cannot merge batches of different width".into()));
            }
            out.shots.extend(b.shots);
        }
        Ok(out)
    }

    pub fn kink_counts(&self) -> Vec<usize> {
        self.shots.iter().map(|s| s.bits.kink_count()).collect()
    }

    pub fn counts(&self) -> std::collections::BTreeMap<BitString, u64> {
        let mut m = std::collections::BTreeMap::new();
        for s in &self.shots {
            *m.entry(s.bits.clone()).or_insert(0) += 1;
        }
        m
    }

    /// Header lines, then one `bits twirl_id flip_mask` record per shot in hex.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let basis = match self.basis {
            MeasureBasis::X => "X",
            MeasureBasis::Z => "Z",
        };
        let _ = writeln!(s, "# kzm bitstring batch v1");
        let _ = writeln!(s, "n_qubits {}", self.n_qubits);
        let _ = writeln!(s, "basis {basis}");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "circuit {}", self.circuit_hash);
        let _ = writeln!(
            s,
            "noise {}",
            serde_json::to_string(&self.noise).expect("noise serializes")
        );
        let _ = writeln!(s, "shots {}", self.shots.len());
        for shot in &self.shots {
            let _ = writeln!(
                s,
                "{} {} {}",
                shot.bits.to_hex(),
                shot.twirl_id,
                shot.flip_mask.to_hex()
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<BitstringBatch> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines().enumerate();
        let mut field = |key: &str| -> Result<(usize, String)> {
            for (i, l) in lines.by_ref() {
                if l.starts_with('#') || l.trim().is_empty() {
                    continue;
                }
                return match l.split_once(' ') {
                    Some((k, v)) if k == key => Ok((i + 1, v.to_string())),
                    _ => Err(perr(i + 1, format!("expected `{key}`"))),
                };
            }
            Err(perr(0, format!("missing `{key}`")))
        };
        let (l, v) = field("n_qubits")?;
        let n_qubits: usize = v.parse().map_err(|e| perr(l, format!("{e}")))?;
        let (l, v) = field("basis")?;
        let basis = match v.as_str() {
            "X" => MeasureBasis::X,
            "Z" => MeasureBasis::Z,
            _ => return Err(perr(l, format!("unknown basis {v:?}"))),
        };
        let (l, v) = field("seed")?;
        let seed: u64 = v.parse().map_err(|e| perr(l, format!("{e}")))?;
        let (_, circuit_hash) = field("circuit")?;
        let (l, v) = field("noise")?;
        let noise: NoiseModel = serde_json::from_str(&v).map_err(|e| perr(l, format!("{e}")))?;
        let (l, v) = field("shots")?;
        let n_shots: usize = v.parse().map_err(|e| perr(l, format!("{e}")))?;

        let mut shots = Vec::with_capacity(n_shots);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(i + 1, "shot record needs 3 fields".into()));
            }
            let at = |e: Error| perr(i + 1, e.to_string());
            shots.push(Shot {
                bits: BitString::from_hex(n_qubits, f[0]).map_err(at)?,
                twirl_id: f[1].parse().map_err(|e| perr(i + 1, format!("{e}")))?,
                flip_mask: BitString::from_hex(n_qubits, f[2]).map_err(at)?,
            });
        }
        if shots.len() != n_shots {
            return Err(perr(
                0,
                format!("header announces {n_shots} shots, found {}", shots.len()),
            ));
        }
        Ok(BitstringBatch {
            n_qubits,
            basis,
            seed,
            noise,
            circuit_hash,
            shots,
        })
    }
}

/// Per-run sampling switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Draw a fresh classical measurement flip mask for every shot.
    pub per_shot_flip: bool,
}

/// The two-qubit Pauli with index `1..16` (base-4 digits: low digit on
/// `qubit`, high digit on `qubit + 1`; 0 = I, 1 = X, 2 = Y, 3 = Z).
pub fn two_qubit_pauli(index: u8, qubit: usize) -> impl Iterator<Item = GateOp> {
    let gate = |d: u8, q: usize| match d {
        1 => Some(GateOp::PauliX(q)),
        2 => Some(GateOp::PauliY(q)),
        3 => Some(GateOp::PauliZ(q)),
        _ => None,
    };
    [gate(index & 3, qubit), gate(index >> 2, qubit + 1)]
        .into_iter()
        .flatten()
}

/// Copies `ops` with a random Pauli after each coupling rotation, each with
/// probability `lambda`. `None` when nothing was inserted.
pub(crate) fn draw_gate_errors(ops: &[GateOp], lambda: f64, rng: &mut impl Rng) -> Option<Vec<GateOp>> {
    if lambda <= 0.0 {
        return None;
    }
    let mut out: Option<Vec<GateOp>> = None;
    for (i, op) in ops.iter().enumerate() {
        if let GateOp::CouplingRotation { qubit, .. } = *op {
            if rng.random::<f64>() < lambda {
                let pauli: u8 = rng.random_range(1..16);
                let v = out.get_or_insert_with(|| ops[..i].to_vec());
                v.push(*op);
                v.extend(two_qubit_pauli(pauli, qubit));
                continue;
            }
        }
        if let Some(v) = out.as_mut() {
            v.push(*op);
        }
    }
    out
}

pub(crate) fn random_bits(n: usize, rng: &mut impl Rng) -> BitString {
    let mut b = BitString::zeros(n);
    for i in 0..n {
        b.set(i, rng.random::<bool>());
    }
    b
}

/// Classical post-processing of one ideal outcome: flip masks, readout
/// errors, and undoing the masks.
pub(crate) fn finish_shot(
    mut bits: BitString,
    circuit_mask: &BitString,
    noise: &NoiseModel,
    options: &SampleOptions,
    rng: &mut impl Rng,
) -> (BitString, BitString) {
    let n = bits.len();
    let mut mask = circuit_mask.clone();
    if options.per_shot_flip {
        let shot_mask = random_bits(n, rng);
        bits.xor_assign(&shot_mask);
        mask.xor_assign(&shot_mask);
    }
    if noise.has_readout_noise() {
        for (q, &(p01, p10)) in noise.readout_flip.iter().enumerate() {
            let p = if bits.get(q) { p10 } else { p01 };
            if rng.random::<f64>() < p {
                bits.flip(q);
            }
        }
    }
    bits.xor_assign(&mask);
    (bits, mask)
}

/// Source of ideal outcomes for the shared noisy-sampling loop.
pub(crate) trait ShotSampler: Sync {
    /// One outcome of the noiseless circuit.
    fn sample_ideal(&self, rng: &mut rng::StreamRng) -> Result<BitString>;
    /// One outcome of the circuit with the given gate list.
    fn sample_ops(&self, ops: &[GateOp], rng: &mut rng::StreamRng) -> Result<BitString>;
}

pub(crate) fn sample_noisy(
    sampler: &dyn ShotSampler,
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: usize,
    seed: u64,
    options: &SampleOptions,
) -> Result<BitstringBatch> {
    if shots == 0 {
        return Err(Error::EmptyBatch);
    }
    let n = circuit.n_qubits;
    noise.validate(n)?;
    let circuit_mask = circuit.meta.flip_mask.clone().unwrap_or_else(|| BitString::zeros(n));
    let twirl_id = circuit.meta.twirl_id.unwrap_or(0);
    let records: Result<Vec<Shot>> = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let ideal = if noise.global_depol > 0.0 && r.random::<f64>() < noise.global_depol {
                random_bits(n, &mut r)
            } else {
                match draw_gate_errors(&circuit.ops, noise.two_qubit_depol, &mut r) {
                    Some(ops) => sampler.sample_ops(&ops, &mut r)?,
                    None => sampler.sample_ideal(&mut r)?,
                }
            };
            let (bits, flip_mask) = finish_shot(ideal, &circuit_mask, noise, options, &mut r);
            Ok(Shot {
                bits,
                twirl_id,
                flip_mask,
            })
        })
        .collect();
    Ok(BitstringBatch {
        n_qubits: n,
        basis: circuit.measure_basis,
        seed,
        noise: noise.clone(),
        circuit_hash: circuit.hash(),
        shots: records?,
    })
}

/// Inverse-CDF sampler over a dense probability vector.
pub(crate) struct CdfSampler {
    n_qubits: usize,
    cdf: Vec<f64>,
}

impl CdfSampler {
    pub(crate) fn new(state: &StateVector) -> Self {
        let mut acc = 0.0;
        let cdf = state
            .amps
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        Self {
            n_qubits: state.n_qubits,
            cdf,
        }
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng) -> BitString {
        let total = *self.cdf.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        BitString::from_u64(self.n_qubits, idx as u64)
    }
}

struct DenseSampler {
    n_qubits: usize,
    ideal: CdfSampler,
}

impl ShotSampler for DenseSampler {
    fn sample_ideal(&self, rng: &mut rng::StreamRng) -> Result<BitString> {
        Ok(self.ideal.draw(rng))
    }

    fn sample_ops(&self, ops: &[GateOp], rng: &mut rng::StreamRng) -> Result<BitString> {
        let s = StateVector::run_ops(self.n_qubits, ops)?;
        Ok(CdfSampler::new(&s).draw(rng))
    }
}

/// Samples `shots` outcomes of `circuit` under `noise`. Shot `i` uses
/// random stream `i` of `seed`, so the batch does not depend on threading.
pub fn run_noisy(circuit: &Circuit, noise: &NoiseModel, shots: usize, seed: u64) -> Result<BitstringBatch> {
    run_noisy_with(circuit, noise, shots, seed, &SampleOptions::default())
}

pub fn run_noisy_with(
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: usize,
    seed: u64,
    options: &SampleOptions,
) -> Result<BitstringBatch> {
    let ideal = StateVector::run(circuit)?;
    let sampler = DenseSampler {
        n_qubits: circuit.n_qubits,
        ideal: CdfSampler::new(&ideal),
    };
    sample_noisy(&sampler, circuit, noise, shots, seed, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{moment_expansion, QuenchSchedule};
    use crate::oracle;
    use crate::trotter::{build_quench_circuit, TrotterPlan};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quench(n: usize, tau_q: f64, r: usize) -> Circuit {
        let s = QuenchSchedule::new(tau_q).unwrap();
        build_quench_circuit(n, &s, &TrotterPlan::new(r, tau_q).unwrap()).unwrap()
    }

    fn to_oracle(s: &StateVector) -> oracle::Vector {
        oracle::Vector::from_vec(s.amplitudes().to_vec())
    }

    #[test]
    fn preparations() {
        let s = StateVector::prepare(1, InitialState::AllZero).unwrap();
        assert_eq!(s.amplitudes(), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let s = StateVector::prepare(2, InitialState::AllPlus).unwrap();
        assert!(s.amplitudes().iter().all(|a| (a - C64::new(0.5, 0.0)).norm() < 1e-15));
        assert!(matches!(
            StateVector::prepare(25, InitialState::AllZero),
            Err(Error::Resource { .. })
        ));
        assert!(StateVector::prepare(0, InitialState::AllZero).is_err());
    }

    #[test]
    fn gate_examples() {
        let mut s = StateVector::prepare(1, InitialState::AllZero).unwrap();
        s.apply(&GateOp::FieldRotation {
            qubit: 0,
            angle: std::f64::consts::PI,
        })
        .unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].norm(), 1.0, epsilon = 1e-15);

        let mut s = StateVector::prepare(2, InitialState::AllZero).unwrap();
        let t = std::f64::consts::FRAC_PI_4;
        s.apply(&GateOp::CouplingRotation { qubit: 0, angle: t }).unwrap();
        let a = s.amplitudes();
        assert!((a[0] - C64::new(t.cos(), 0.0)).norm() < 1e-15);
        assert!((a[3] - C64::new(0.0, t.sin())).norm() < 1e-15);

        let mut s = StateVector::run_ops(3, &[GateOp::CouplingRotation { qubit: 1, angle: 0.3 }]).unwrap();
        let before = s.clone();
        s.apply(&GateOp::HadamardLayer).unwrap();
        s.apply(&GateOp::HadamardLayer).unwrap();
        for (x, y) in s.amplitudes().iter().zip(before.amplitudes()) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!(matches!(s.apply(&GateOp::PauliX(3)), Err(Error::InvalidTarget { .. })));
        assert!(matches!(
            s.apply(&GateOp::CouplingRotation { qubit: 2, angle: 0.1 }),
            Err(Error::InvalidTarget { .. })
        ));
    }

    /// Every gate kind against the dense matrix built by the oracle.
    #[test]
    fn kernels_match_dense_unitaries() {
        let n = 4;
        let prep = [
            GateOp::HadamardLayer,
            GateOp::FieldRotation { qubit: 1, angle: 0.4 },
            GateOp::CouplingRotation { qubit: 0, angle: 0.7 },
            GateOp::FieldRotation { qubit: 3, angle: -0.2 },
            GateOp::CouplingRotation { qubit: 2, angle: 1.1 },
        ];
        let gates = [
            GateOp::PauliX(2),
            GateOp::PauliY(0),
            GateOp::PauliY(3),
            GateOp::PauliZ(1),
            GateOp::FieldRotation { qubit: 2, angle: 0.9 },
            GateOp::CouplingRotation { qubit: 1, angle: -0.6 },
            GateOp::CouplingRotation { qubit: 2, angle: 0.25 },
            GateOp::HadamardLayer,
        ];
        let base = StateVector::run_ops(n, &prep).unwrap();
        for g in gates {
            let mut s = base.clone();
            s.apply(&g).unwrap();
            let want = oracle::gate_unitary(n, &g) * to_oracle(&base);
            for (x, y) in s.amplitudes().iter().zip(want.iter()) {
                assert!((x - y).norm() < 1e-13, "{g:?}");
            }
        }
    }

    #[test]
    fn fused_fields_match_gate_by_gate() {
        let c = quench(5, 2.0, 3);
        let fused = StateVector::run(&c).unwrap();
        let mut slow = StateVector::prepare(5, InitialState::AllZero).unwrap();
        for op in &c.ops {
            slow.apply(op).unwrap();
        }
        let dense = oracle::circuit_unitary(&c) * oracle::basis_state(5, 0);
        for ((x, y), z) in fused.amplitudes().iter().zip(slow.amplitudes()).zip(dense.iter()) {
            assert!((x - y).norm() < 1e-13);
            assert!((x - z).norm() < 1e-12);
        }
    }

    #[test]
    fn bond_expectations_on_product_states() {
        let terms = moment_expansion(2, 5).unwrap();
        let plus = StateVector::prepare(5, InitialState::AllPlus).unwrap();
        let zero = StateVector::prepare(5, InitialState::AllZero).unwrap();
        for (t, (p, z)) in terms.iter().zip(
            plus.expectation_bond_terms(&terms)
                .unwrap()
                .into_iter()
                .zip(zero.expectation_bond_terms(&terms).unwrap()),
        ) {
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(z, if t.qubit_support().is_empty() { 1.0 } else { 0.0 }, epsilon = 1e-14);
        }
        let wide = moment_expansion(1, 6).unwrap();
        assert!(matches!(
            zero.expectation_bond_terms(&wide),
            Err(Error::SupportOutOfRange { .. })
        ));
    }

    /// N = 4, τ_Q = 2, r = 100 against the RK4 integration of the
    /// continuous quench.
    #[test]
    fn mid_quench_bonds_match_ode() {
        let c = quench(4, 2.0, 100);
        let s = StateVector::run_ops(4, c.pre_measurement_ops()).unwrap();
        let report = oracle::ode_report(4, &QuenchSchedule::new(2.0).unwrap(), 4000);
        for (x, y) in s.bond_correlators().iter().zip(&report.bond_correlators) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-4);
        }
    }

    #[test]
    fn kink_distribution_matches_bond_correlators() {
        let c = quench(6, 3.0, 10);
        let pre = StateVector::run_ops(6, c.pre_measurement_ops()).unwrap();
        let post = StateVector::run(&c).unwrap();
        let pmf = post.kink_distribution();
        assert_abs_diff_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let mean_k: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let from_bonds: f64 = pre.bond_correlators().iter().map(|b| (1.0 - b) / 2.0).sum();
        assert_abs_diff_eq!(mean_k, from_bonds, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_identity_circuit_sampling() {
        let n = 7;
        let c = quench(n, 1e-6, 1);
        let batch = run_noisy(&c, &NoiseModel::noiseless(), 10_000, 3).unwrap();
        let s = batch.len() as f64;
        let mean = batch.kink_counts().iter().sum::<usize>() as f64 / (s * n as f64);
        // k ~ Binomial(N-1, 1/2)
        let sigma = ((n - 1) as f64 * 0.25).sqrt() / n as f64 / s.sqrt();
        assert!((mean - (n - 1) as f64 / (2.0 * n as f64)).abs() < 3.0 * sigma);
    }

    #[test]
    fn sampling_is_reproducible() {
        let c = quench(5, 2.0, 4);
        let noise = NoiseModel {
            two_qubit_depol: 0.05,
            global_depol: 0.1,
            readout_flip: vec![(0.02, 0.05); 5],
        };
        let a = run_noisy(&c, &noise, 500, 11).unwrap();
        let b = run_noisy(&c, &noise, 500, 11).unwrap();
        let d = run_noisy(&c, &noise, 500, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert!(matches!(run_noisy(&c, &noise, 0, 1), Err(Error::EmptyBatch)));
    }

    #[test]
    fn batch_text_roundtrip() {
        let c = quench(9, 2.0, 2);
        let noise = NoiseModel::global(0.2).with_uniform_readout(9, 0.01, 0.03);
        let batch = run_noisy_with(&c, &noise, 50, 5, &SampleOptions { per_shot_flip: true }).unwrap();
        let text = batch.to_text();
        assert_eq!(BitstringBatch::from_text(&text).unwrap(), batch);
        assert!(BitstringBatch::from_text("n_qubits 2\nbasis Q\n").is_err());
    }

    #[test]
    fn global_depolarizing_contracts_bond_correlators() {
        let n = 4;
        let c = quench(n, 2.0, 5);
        let pre = StateVector::run_ops(n, c.pre_measurement_ops()).unwrap();
        let shots = 100_000;
        let batch = run_noisy(&c, &NoiseModel::global(0.5), shots, 21).unwrap();
        for (b, ideal) in pre.bond_correlators().iter().enumerate() {
            let mut m = BitString::zeros(n);
            m.set(b, true);
            m.set(b + 1, true);
            let mean = batch
                .shots
                .iter()
                .map(|s| if s.bits.masked_parity(&m) { -1.0 } else { 1.0 })
                .sum::<f64>()
                / shots as f64;
            let sigma = (1.0 / shots as f64).sqrt();
            assert!(
                (mean - 0.5 * ideal).abs() < 4.0 * sigma,
                "bond {b}: {mean} vs {}",
                0.5 * ideal
            );
        }
    }

    #[test]
    fn pauli_insertion_covers_all_fifteen() {
        let ops = vec![GateOp::CouplingRotation { qubit: 0, angle: 0.1 }];
        let mut seen = std::collections::BTreeSet::new();
        let mut r = rng::stream(1, 0);
        for _ in 0..2000 {
            if let Some(v) = draw_gate_errors(&ops, 1.0, &mut r) {
                assert_eq!(v[0], ops[0]);
                assert!(v.len() >= 2);
                seen.insert(format!("{:?}", &v[1..]));
            }
        }
        assert_eq!(seen.len(), 15);
        assert!(draw_gate_errors(&ops, 0.0, &mut r).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gates_preserve_norm(angles in proptest::collection::vec(-3.2f64..3.2, 1..12), n in 2usize..7) {
            let mut ops = vec![GateOp::HadamardLayer];
            for (i, &a) in angles.iter().enumerate() {
                ops.push(match i % 3 {
                    0 => GateOp::FieldRotation { qubit: i % n, angle: a },
                    1 => GateOp::CouplingRotation { qubit: i % (n - 1), angle: a },
                    _ => GateOp::PauliY(i % n),
                });
            }
            let s = StateVector::run_ops(n, &ops).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }
}
