//! Second-order product-formula circuits for the linear quench.
//!
//! Time is cut into `r` slices of width `dt = τ_Q / r`. Each slice freezes
//! the couplings at its midpoint `t_k = (k + ½)·dt` and applies
//!
//! ```text
//! exp(+i h(t_k)·dt/2 ΣZ) · exp(+i J(t_k)·dt ΣXX) · exp(+i h(t_k)·dt/2 ΣZ)
//! ```
//!
//! which is the symmetric splitting of `exp(-i H(t_k) dt)` with the field
//! on the outside. Field half-layers of consecutive slices are merged.
//!
//! Angles are stored as full exponents: [`GateOp::FieldRotation`] with
//! angle θ is `exp(+iθZ)` and [`GateOp::CouplingRotation`] is `exp(+iθXX)`.
//! There is no half-angle convention anywhere in the crate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::QuenchSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateOp {
    /// Hadamard on every qubit.
    HadamardLayer,
    PauliX(usize),
    PauliY(usize),
    PauliZ(usize),
    /// `exp(+i·angle·Z_qubit)`.
    FieldRotation {
        qubit: usize,
        angle: f64,
    },
    /// `exp(+i·angle·X_qubit X_{qubit+1})`.
    CouplingRotation {
        qubit: usize,
        angle: f64,
    },
}

impl GateOp {
    pub fn inverse(&self) -> GateOp {
        match *self {
            GateOp::FieldRotation { qubit, angle } => GateOp::FieldRotation { qubit, angle: -angle },
            GateOp::CouplingRotation { qubit, angle } => GateOp::CouplingRotation { qubit, angle: -angle },
            other => other,
        }
    }

    /// Highest qubit index touched, if the gate is local.
    pub fn max_qubit(&self) -> Option<usize> {
        match *self {
            GateOp::HadamardLayer => None,
            GateOp::PauliX(q) | GateOp::PauliY(q) | GateOp::PauliZ(q) => Some(q),
            GateOp::FieldRotation { qubit, .. } => Some(qubit),
            GateOp::CouplingRotation { qubit, .. } => Some(qubit + 1),
        }
    }

    pub fn is_pauli(&self) -> bool {
        matches!(self, GateOp::PauliX(_) | GateOp::PauliY(_) | GateOp::PauliZ(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureBasis {
    X,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Quench,
    /// Reference circuit with every field angle set to zero.
    ZeroField,
    /// Reference circuit with field angles rescaled to a total of π per qubit.
    PiField,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Quench => "quench",
            Variant::ZeroField => "zero_field",
            Variant::PiField => "pi_field",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quench" => Ok(Variant::Quench),
            "zero_field" => Ok(Variant::ZeroField),
            "pi_field" => Ok(Variant::PiField),
            _ => Err(Error::Unsupported(format!("circuit variant {s:?}"))),
        }
    }
}

/// Which Hamiltonian group takes the half steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    FieldOuter,
    CouplingOuter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrotterOptions {
    pub split: Split,
    /// Fuse the outer half-layers of consecutive slices.
    pub merge_outer_layers: bool,
}

impl Default for TrotterOptions {
    fn default() -> Self {
        Self {
            split: Split::FieldOuter,
            merge_outer_layers: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrotterPlan {
    pub r: usize,
    pub t: f64,
}

impl TrotterPlan {
    pub fn new(r: usize, t: f64) -> Result<Self> {
        if r < 1 {
            return Err(Error::Construction("need at least one Trotter step".into()));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Construction(format!("evolution time must be positive, got {t}")));
        }
        Ok(Self { r, t })
    }

    pub fn dt(&self) -> f64 {
        self.t / self.r as f64
    }
}

/// Slice midpoints `(k + ½)·dt`, `k = 0..r`.
pub fn midpoint_times(plan: &TrotterPlan) -> Vec<f64> {
    let dt = plan.dt();
    (0..plan.r).map(|k| (k as f64 + 0.5) * dt).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitMeta {
    pub schedule: QuenchSchedule,
    pub r: usize,
    pub variant: Variant,
    /// Index of the randomized-compiling instance this circuit came from.
    pub twirl_id: Option<usize>,
    /// Qubits flipped right before readout; outcomes must be XOR-ed back.
    pub flip_mask: Option<BitString>,
}

/// Gate sequence on `n_qubits`, always started from `|0…0⟩`.
///
/// With `measure_basis == X` the basis change (a trailing Hadamard layer)
/// is part of `ops`, so computational-basis readout of the final state
/// yields X-basis outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub ops: Vec<GateOp>,
    pub measure_basis: MeasureBasis,
    pub meta: CircuitMeta,
}

type LayerFn = fn(&mut Vec<GateOp>, usize, f64);

fn field_layer(ops: &mut Vec<GateOp>, n: usize, angle: f64) {
    ops.extend((0..n).map(|qubit| GateOp::FieldRotation { qubit, angle }));
}

/// Even bonds first, then odd bonds.
fn coupling_layer(ops: &mut Vec<GateOp>, n: usize, angle: f64) {
    for parity in 0..2 {
        ops.extend(
            (parity..n - 1)
                .step_by(2)
                .map(|qubit| GateOp::CouplingRotation { qubit, angle }),
        );
    }
}

pub fn build_quench_circuit(n_qubits: usize, schedule: &QuenchSchedule, plan: &TrotterPlan) -> Result<Circuit> {
    build_quench_circuit_with(n_qubits, schedule, plan, &TrotterOptions::default())
}

pub fn build_quench_circuit_with(
    n_qubits: usize,
    schedule: &QuenchSchedule,
    plan: &TrotterPlan,
    options: &TrotterOptions,
) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(Error::Construction(format!(
            "chain needs at least 2 qubits, got {n_qubits}"
        )));
    }
    if plan.r < 1 {
        return Err(Error::Construction("need at least one Trotter step".into()));
    }
    let dt = plan.dt();
    let mut outer = Vec::with_capacity(plan.r);
    let mut inner = Vec::with_capacity(plan.r);
    for t in midpoint_times(plan) {
        let (j, h) = schedule.couplings_at(t)?;
        match options.split {
            Split::FieldOuter => {
                outer.push(h * dt / 2.0);
                inner.push(j * dt);
            }
            Split::CouplingOuter => {
                outer.push(j * dt / 2.0);
                inner.push(h * dt);
            }
        }
    }
    let n = n_qubits;
    let (outer_layer, inner_layer): (LayerFn, LayerFn) = match options.split {
        Split::FieldOuter => (field_layer, coupling_layer),
        Split::CouplingOuter => (coupling_layer, field_layer),
    };

    let mut ops = Vec::new();
    if options.merge_outer_layers {
        outer_layer(&mut ops, n, outer[0]);
        for k in 0..plan.r {
            inner_layer(&mut ops, n, inner[k]);
            let next = if k + 1 < plan.r {
                outer[k] + outer[k + 1]
            } else {
                outer[k]
            };
            outer_layer(&mut ops, n, next);
        }
    } else {
        for k in 0..plan.r {
            outer_layer(&mut ops, n, outer[k]);
            inner_layer(&mut ops, n, inner[k]);
            outer_layer(&mut ops, n, outer[k]);
        }
    }
    ops.push(GateOp::HadamardLayer);

    Ok(Circuit {
        n_qubits,
        ops,
        measure_basis: MeasureBasis::X,
        meta: CircuitMeta {
            schedule: *schedule,
            r: plan.r,
            variant: Variant::Quench,
            twirl_id: None,
            flip_mask: None,
        },
    })
}

/// Noise-renormalization circuit: same gates and coupling angles as `base`,
/// started from `|+…+⟩` and with field angles replaced per `variant`.
pub fn build_reference_circuit(base: &Circuit, variant: Variant) -> Result<Circuit> {
    if base.meta.variant != Variant::Quench {
        return Err(Error::Construction(format!(
            "reference circuits derive from quench circuits, not {}",
            base.meta.variant.as_str()
        )));
    }
    let n = base.n_qubits;
    let scale: Vec<f64> = match variant {
        Variant::Quench => return Err(Error::Unsupported("reference variant must not be quench".into())),
        Variant::ZeroField => vec![0.0; n],
        Variant::PiField => {
            let mut totals = vec![0.0; n];
            for op in &base.ops {
                if let GateOp::FieldRotation { qubit, angle } = *op {
                    totals[qubit] += angle;
                }
            }
            totals
                .iter()
                .map(|&t| {
                    if t.abs() < 1e-300 {
                        Err(Error::Construction("pi_field needs a nonzero field to rescale".into()))
                    } else {
                        Ok(std::f64::consts::PI / t)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    let mut ops = Vec::with_capacity(base.ops.len() + 1);
    ops.push(GateOp::HadamardLayer);
    ops.extend(base.ops.iter().map(|op| match *op {
        GateOp::FieldRotation { qubit, angle } => GateOp::FieldRotation {
            qubit,
            angle: angle * scale[qubit],
        },
        other => other,
    }));
    let mut meta = base.meta.clone();
    meta.variant = variant;
    Ok(Circuit {
        n_qubits: n,
        ops,
        measure_basis: base.measure_basis,
        meta,
    })
}

impl Circuit {
    /// A plain gate list with placeholder quench metadata, for preparation
    /// and calibration circuits.
    pub fn bare(n_qubits: usize, ops: Vec<GateOp>, measure_basis: MeasureBasis) -> Circuit {
        Circuit {
            n_qubits,
            ops,
            measure_basis,
            meta: CircuitMeta {
                schedule: QuenchSchedule {
                    j0: 1.0,
                    h0: 1.0,
                    tau_q: 1.0,
                },
                r: 0,
                variant: Variant::Quench,
                twirl_id: None,
                flip_mask: None,
            },
        }
    }

    pub fn coupling_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, GateOp::CouplingRotation { .. }))
            .count()
    }

    /// Gates before the measurement basis change (and any readout flips).
    pub fn pre_measurement_ops(&self) -> &[GateOp] {
        match self.measure_basis {
            MeasureBasis::Z => &self.ops,
            MeasureBasis::X => {
                let end = self
                    .ops
                    .iter()
                    .rposition(|op| matches!(op, GateOp::HadamardLayer))
                    .unwrap_or(self.ops.len());
                &self.ops[..end]
            }
        }
    }

    /// The exact inverse gate list, with `Z`-basis readout.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            ops: self.ops.iter().rev().map(GateOp::inverse).collect(),
            measure_basis: MeasureBasis::Z,
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for op in &self.ops {
            if let Some(q) = op.max_qubit() {
                if q >= self.n_qubits {
                    return Err(Error::InvalidTarget {
                        qubit: q,
                        n_qubits: self.n_qubits,
                    });
                }
            }
        }
        Ok(())
    }

    /// Line-oriented text form: a header `N r tau_Q variant` followed by one
    /// gate per line. Floats carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {:.16e} {}",
            self.n_qubits,
            self.meta.r,
            self.meta.schedule.tau_q,
            self.meta.variant.as_str()
        );
        for op in &self.ops {
            let _ = match *op {
                GateOp::HadamardLayer => writeln!(s, "H_LAYER"),
                GateOp::PauliX(q) => writeln!(s, "X {q}"),
                GateOp::PauliY(q) => writeln!(s, "Y {q}"),
                GateOp::PauliZ(q) => writeln!(s, "Z {q}"),
                GateOp::FieldRotation { qubit, angle } => writeln!(s, "FIELD {qubit} {angle:.16e}"),
                GateOp::CouplingRotation { qubit, angle } => writeln!(s, "COUP {qubit} {angle:.16e}"),
            };
        }
        s
    }

    /// Parses [`Circuit::to_text`] output. The schedule amplitudes are not
    /// part of the format and come back as `J0 = h0 = 1`.
    pub fn from_text(text: &str) -> Result<Circuit> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(perr(hline + 1, format!("header needs 4 fields, got {}", h.len())));
        }
        let n: usize = h[0].parse().map_err(|e| perr(hline + 1, format!("N: {e}")))?;
        let r: usize = h[1].parse().map_err(|e| perr(hline + 1, format!("r: {e}")))?;
        let tau_q: f64 = h[2].parse().map_err(|e| perr(hline + 1, format!("tau_Q: {e}")))?;
        let variant = Variant::parse(h[3]).map_err(|e| perr(hline + 1, e.to_string()))?;

        let mut ops = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let qubit = |k: usize| -> Result<usize> {
                f.get(k)
                    .ok_or_else(|| perr(i + 1, "missing qubit".into()))?
                    .parse()
                    .map_err(|e| perr(i + 1, format!("qubit: {e}")))
            };
            let angle = || -> Result<f64> {
                f.get(2)
                    .ok_or_else(|| perr(i + 1, "missing angle".into()))?
                    .parse()
                    .map_err(|e| perr(i + 1, format!("angle: {e}")))
            };
            let op = match f[0] {
                "H_LAYER" => GateOp::HadamardLayer,
                "X" => GateOp::PauliX(qubit(1)?),
                "Y" => GateOp::PauliY(qubit(1)?),
                "Z" => GateOp::PauliZ(qubit(1)?),
                "FIELD" => GateOp::FieldRotation {
                    qubit: qubit(1)?,
                    angle: angle()?,
                },
                "COUP" => GateOp::CouplingRotation {
                    qubit: qubit(1)?,
                    angle: angle()?,
                },
                other => return Err(perr(i + 1, format!("unknown gate {other:?}"))),
            };
            ops.push(op);
        }
        let measure_basis = match ops.iter().rev().find(|op| !op.is_pauli()) {
            Some(GateOp::HadamardLayer) => MeasureBasis::X,
            _ => MeasureBasis::Z,
        };
        let circuit = Circuit {
            n_qubits: n,
            ops,
            measure_basis,
            meta: CircuitMeta {
                schedule: QuenchSchedule::new(tau_q)?,
                r,
                variant,
                twirl_id: None,
                flip_mask: None,
            },
        };
        circuit.validate()?;
        Ok(circuit)
    }

    /// First 16 hex digits of the SHA-256 of [`Circuit::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, Matrix};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C64;

    fn quench(n: usize, tau_q: f64, r: usize) -> Circuit {
        let s = QuenchSchedule::new(tau_q).unwrap();
        build_quench_circuit(n, &s, &TrotterPlan::new(r, tau_q).unwrap()).unwrap()
    }

    #[test]
    fn midpoints() {
        assert_eq!(midpoint_times(&TrotterPlan::new(1, 2.0).unwrap()), vec![1.0]);
        assert_eq!(
            midpoint_times(&TrotterPlan::new(4, 2.0).unwrap()),
            vec![0.25, 0.75, 1.25, 1.75]
        );
        let m = midpoint_times(&TrotterPlan::new(20, 20.0).unwrap());
        for (k, t) in m.iter().enumerate() {
            assert_abs_diff_eq!(*t, k as f64 + 0.5, epsilon = 1e-12);
        }
        assert!(TrotterPlan::new(0, 1.0).is_err());
    }

    #[test]
    fn construction_errors() {
        let s = QuenchSchedule::new(1.0).unwrap();
        let p = TrotterPlan::new(2, 1.0).unwrap();
        assert!(matches!(build_quench_circuit(1, &s, &p), Err(Error::Construction(_))));
    }

    #[test]
    fn depth_bookkeeping() {
        for (n, r) in [(2, 1), (5, 3), (19, 20)] {
            let c = quench(n, 2.0, r);
            assert_eq!(c.coupling_count(), r * (n - 1));
            assert_eq!(c.measure_basis, MeasureBasis::X);
            assert_eq!(c.ops.last(), Some(&GateOp::HadamardLayer));
            // merged: r + 1 field layers
            let fields = c
                .ops
                .iter()
                .filter(|o| matches!(o, GateOp::FieldRotation { .. }))
                .count();
            assert_eq!(fields, (r + 1) * n);
        }
    }

    /// N = 2, r = 1, τ_Q = 1: the whole circuit (minus the readout layer)
    /// equals exp(+i·¼·ΣZ) exp(+i·½·XX) exp(+i·¼·ΣZ) built from dense
    /// matrix exponentials.
    #[test]
    fn single_step_matches_dense_exponentials() {
        let c = quench(2, 1.0, 1);
        let u = oracle::ops_unitary(2, c.pre_measurement_ops());
        let zsum = oracle::embed(2, 0, 'Z') + oracle::embed(2, 1, 'Z');
        let half_field = oracle::exp_i(0.5 * 0.5, &zsum);
        let coupling = oracle::exp_i(0.5 * 1.0, &oracle::bond_operator(2, 0));
        let want = &half_field * &coupling * &half_field;
        assert!(oracle::unitary_distance_up_to_phase(&u, &want) < 1e-13);
    }

    /// The split/merge options all realize the same second-order formula up
    /// to which group is on the outside.
    #[test]
    fn merged_and_unmerged_agree() {
        let s = QuenchSchedule::new(1.5).unwrap();
        let p = TrotterPlan::new(3, 1.5).unwrap();
        for split in [Split::FieldOuter, Split::CouplingOuter] {
            let a = build_quench_circuit_with(
                3,
                &s,
                &p,
                &TrotterOptions {
                    split,
                    merge_outer_layers: true,
                },
            )
            .unwrap();
            let b = build_quench_circuit_with(
                3,
                &s,
                &p,
                &TrotterOptions {
                    split,
                    merge_outer_layers: false,
                },
            )
            .unwrap();
            let ua = oracle::circuit_unitary(&a);
            let ub = oracle::circuit_unitary(&b);
            assert!(oracle::unitary_distance_up_to_phase(&ua, &ub) < 1e-12);
        }
    }

    #[test]
    fn tiny_quench_is_identity() {
        let c = quench(3, 1e-6, 1);
        let u = oracle::ops_unitary(3, c.pre_measurement_ops());
        assert!(oracle::unitary_distance_up_to_phase(&u, &Matrix::identity(8, 8)) < 1e-5);
    }

    #[test]
    fn sublayer_reordering_is_harmless() {
        let c = quench(5, 2.0, 2);
        let mut shuffled = c.clone();
        // reverse the order of the even sub-layer of the first step
        let first = shuffled
            .ops
            .iter()
            .position(|o| matches!(o, GateOp::CouplingRotation { .. }))
            .unwrap();
        shuffled.ops[first..first + 2].reverse();
        let d = oracle::unitary_distance_up_to_phase(&oracle::circuit_unitary(&c), &oracle::circuit_unitary(&shuffled));
        assert!(d < 1e-13, "{d}");
    }

    #[test]
    fn reference_circuits() {
        let base = quench(4, 3.0, 5);
        let z = build_reference_circuit(&base, Variant::ZeroField).unwrap();
        assert_eq!(z.ops.len(), base.ops.len() + 1);
        assert_eq!(z.ops[0], GateOp::HadamardLayer);
        for (a, b) in z.ops[1..].iter().zip(&base.ops) {
            match (a, b) {
                (GateOp::FieldRotation { angle, .. }, GateOp::FieldRotation { .. }) => assert_eq!(*angle, 0.0),
                _ => assert_eq!(a, b),
            }
        }
        let p = build_reference_circuit(&base, Variant::PiField).unwrap();
        let total: f64 = p
            .ops
            .iter()
            .filter_map(|o| match o {
                GateOp::FieldRotation { qubit: 2, angle } => Some(*angle),
                _ => None,
            })
            .sum();
        assert_abs_diff_eq!(total, std::f64::consts::PI, epsilon = 1e-12);
        assert!(build_reference_circuit(&base, Variant::Quench).is_err());
        assert!(build_reference_circuit(&z, Variant::ZeroField).is_err());
    }

    /// Zero-field reference: coupling rotations commute with every bond
    /// operator, so |+…+⟩ stays an eigenstate with ⟨X_i X_{i+1}⟩ = 1.
    #[test]
    fn zero_field_reference_keeps_bonds_at_one() {
        let base = quench(4, 2.0, 3);
        let z = build_reference_circuit(&base, Variant::ZeroField).unwrap();
        let u = oracle::ops_unitary(4, z.pre_measurement_ops());
        let psi = &u * oracle::basis_state(4, 0);
        for b in 0..3 {
            assert_abs_diff_eq!(
                oracle::expectation(&psi, &oracle::bond_operator(4, b)),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let c = quench(5, 2.7, 7);
        let parsed = Circuit::from_text(&c.to_text()).unwrap();
        assert_eq!(parsed.ops, c.ops);
        assert_eq!(parsed.measure_basis, c.measure_basis);
        assert_eq!(parsed.meta.r, 7);
        assert_eq!(parsed.meta.schedule.tau_q, 2.7);
        assert_eq!(parsed.hash(), c.hash());
        let z = build_reference_circuit(&c, Variant::PiField).unwrap();
        assert_eq!(Circuit::from_text(&z.to_text()).unwrap().ops, z.ops);
    }

    #[test]
    fn text_parse_errors() {
        assert!(Circuit::from_text("").is_err());
        assert!(Circuit::from_text("2 1 1.0").is_err());
        assert!(Circuit::from_text("2 1 1.0 quench\nFOO 1").is_err());
        assert!(Circuit::from_text("2 1 1.0 quench\nCOUP 1 0.5").is_err());
        assert!(Circuit::from_text("2 1 1.0 quench\nFIELD 0").is_err());
    }

    #[test]
    fn inverse_undoes_circuit() {
        let c = quench(3, 2.0, 4);
        let mut all = c.ops.clone();
        all.extend(c.inverse().ops);
        let u = oracle::ops_unitary(3, &all);
        let id = Matrix::identity(8, 8);
        assert!((u - id).iter().all(|z: &C64| z.norm() < 1e-12));
    }
}
